use subembed::bench::Instance;
use subembed::leverage::{exact_row_norms, expected_sample_size, qr_lev_factors, two_stage_sample, LevSampleConfig};
use subembed::linalg::{norm2, DenseMatrix};
use subembed::rng::{self, Module};
use subembed::sketch::{osnap_build, uniform_sample_build, SketchKind};

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn osnap_preserves_norm_in_expectation() {
    let mut r = rng::stream(1, Module::Bench, 400);
    let x = rng::gaussian_vec(&mut r, 200);
    let target = norm2(&x).powi(2);
    let samples: Vec<f64> = (0..600u64)
        .map(|seed| norm2(&osnap_build(200, 40, 4, seed).unwrap().apply_vec(&x).unwrap()).powi(2))
        .collect();
    let (mean, se) = mean_and_se(&samples);
    assert!((mean - target).abs() <= 3.0 * se, "mean {mean} target {target} se {se}");
}

#[test]
fn uniform_sample_frequencies_are_uniform() {
    let (n, p, trials) = (50usize, 10usize, 2000u64);
    let mut counts = vec![0u32; n];
    for seed in 0..trials {
        let op = uniform_sample_build(n, p, seed).unwrap();
        let SketchKind::UniformSample(us) = &op.kind else { panic!("unexpected kind") };
        for &i in us.indices() {
            counts[i] += 1;
        }
    }
    let q = p as f64 / n as f64;
    let sd = (trials as f64 * q * (1.0 - q)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - trials as f64 * q).abs() <= 5.0 * sd, "row {i} drawn {c} times");
    }
}

fn fixture() -> (DenseMatrix, DenseMatrix, LevSampleConfig) {
    let mut a = Instance::Gaussian { n: 1500, d: 12 }.generate(5).unwrap();
    for i in 0..10 {
        a.row_mut(i * 131).iter_mut().for_each(|v| *v *= 8.0);
    }
    let cfg = LevSampleConfig::with_seed(5);
    let r = qr_lev_factors(&a, &cfg).unwrap().r;
    (a, r, cfg)
}

#[test]
fn returned_probabilities_lie_in_sandwich() {
    let (a, r, cfg) = fixture();
    let norms = exact_row_norms(&a, &r);
    let total: f64 = norms.iter().sum();
    let s = 300.0;
    for seed in 0..10u64 {
        let (rows, _) = two_stage_sample(&a, &r, s, cfg.jl_cols_stage1, cfg.stage2_log_mult, seed).unwrap();
        let inside = rows
            .indices
            .iter()
            .zip(&rows.probs)
            .filter(|&(&i, &f)| {
                let q = norms[i] / total;
                f >= (s / 16.0 * q).min(1.0) && f <= (s * q).min(1.0)
            })
            .count();
        assert!(inside as f64 >= 0.99 * rows.len() as f64, "seed {seed}: {inside}/{}", rows.len());
    }
}

#[test]
fn sampled_norm_is_unbiased() {
    let (a, r, cfg) = fixture();
    let mut g = rng::stream(9, Module::Bench, 401);
    let x = rng::gaussian_vec(&mut g, 12);
    let target = norm2(&a.matvec(&x).unwrap()).powi(2);
    let samples: Vec<f64> = (0..500u64)
        .map(|seed| {
            let (rows, _) = two_stage_sample(&a, &r, 200.0, cfg.jl_cols_stage1, cfg.stage2_log_mult, seed).unwrap();
            norm2(&rows.apply(&a).matvec(&x).unwrap()).powi(2)
        })
        .collect();
    let (mean, se) = mean_and_se(&samples);
    assert!((mean - target).abs() <= 3.0 * se, "mean {mean} target {target} se {se}");
}

#[test]
fn dominant_row_is_always_kept() {
    let mut a = Instance::Gaussian { n: 800, d: 6 }.generate(2).unwrap();
    a.row_mut(17).iter_mut().for_each(|v| *v *= 1e4);
    let cfg = LevSampleConfig::with_seed(2);
    let r = qr_lev_factors(&a, &cfg).unwrap().r;
    for seed in 0..50u64 {
        let (rows, _) = two_stage_sample(&a, &r, 60.0, cfg.jl_cols_stage1, cfg.stage2_log_mult, seed).unwrap();
        assert!(rows.indices.contains(&17), "seed {seed}");
    }
}

#[test]
fn expected_size_never_exceeds_budget() {
    let mut g = rng::stream(3, Module::Bench, 402);
    for t in 0..200 {
        let len = 1 + t % 37;
        let scores: Vec<f64> = (0..len).map(|_| rng::gaussian(&mut g).abs().powi(3)).collect();
        let s = 0.5 + (t as f64) * 0.7;
        assert!(expected_sample_size(&scores, s) <= s + 1e-9);
    }
}
