//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use subembed::basis::{select_independent_rows, BasisConfig};
use subembed::bench::{planted_regression, Instance};
use subembed::embed::{constant_embed, polylog_embed, EmbedConfig};
use subembed::leverage::{amm_sample, eps_subspace_embed, exact_row_norms, qr_lev_factors, two_stage_sample, LevSampleConfig};
use subembed::linalg::{exact_leverage_scores, householder_qr, norm2, numerical_rank, DenseMatrix, RANK_TOL_FACTOR};
use subembed::regression::{solve_regression, RegressionConfig};
use subembed::rng::{self, Module};
use subembed::sdp::{build_packing_instance, solve_packing_sdp, PackingInstance, ProjectionMethod, WeightVector};
use subembed::sketch::{fwht, hadamard_entry, StackedSrht};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(n: usize, d: usize, seed: u64) -> DenseMatrix {
    Instance::Gaussian { n, d }.generate(seed).unwrap()
}

fn fwht_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for e in 0..=8 {
        let len = 1usize << e;
        let mut r = rng::stream(e as u64, Module::Bench, 300);
        for _ in 0..50 {
            let x = rng::gaussian_vec(&mut r, len);
            let fast = fwht(&x).unwrap();
            for (i, f) in fast.iter().enumerate() {
                let naive: f64 = (0..len).map(|j| hadamard_entry(i, j) * x[j]).sum();
                worst = worst.max((naive - f).abs());
            }
        }
    }
    outcome(worst <= 1e-10, format!("max abs error {worst:.2e}"))
}

fn leverage_sum() -> Outcome {
    let mut worst: f64 = 0.0;
    for t in 0..30u64 {
        let (n, d) = (20 + 7 * t as usize, 3 + (t as usize % 10));
        let inst = match t % 3 {
            0 => Instance::Gaussian { n, d },
            1 => Instance::RankDeficient { n, d, k: 1 + d / 2 },
            _ => Instance::Duplicated { n, d, k: d.saturating_sub(1).max(1) },
        };
        let mut a = inst.generate(t).unwrap();
        a.row_mut(0).iter_mut().for_each(|v| *v = 0.0);
        let total: f64 = exact_leverage_scores(&a).unwrap().iter().sum();
        let rank = numerical_rank(&a, RANK_TOL_FACTOR).unwrap();
        worst = worst.max((total - rank as f64).abs());
    }
    outcome(worst <= 1e-8, format!("max |sum - rank| {worst:.2e} over 30 matrices"))
}

fn srht_flattening() -> Outcome {
    let (mut min_frac, mut norm_ok) = (1.0f64, 0);
    for seed in 0..50u64 {
        let h = StackedSrht::new(128, 8, seed).unwrap();
        let mut r = rng::stream(seed, Module::Bench, 201);
        let mut x = rng::gaussian_vec(&mut r, 128);
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = h.apply_unscaled(&x).unwrap();
        let frac = y.iter().filter(|v| v.abs() >= 0.1).count() as f64 / y.len() as f64;
        min_frac = min_frac.min(frac);
        let scaled = norm2(&h.apply(&x).unwrap());
        norm_ok += usize::from((0.9..=1.1).contains(&scaled));
    }
    outcome(min_frac >= 0.9 && norm_ok >= 47, format!("min large fraction {min_frac:.4}, norm in [0.9, 1.1] {norm_ok}/50"))
}

fn constant_factor_embedding() -> Outcome {
    let (n, d) = (4096, 32);
    let (mut ok, mut better, mut rows_ok, mut worst) = (0, 0, true, 0.0f64);
    for seed in 0..20u64 {
        let a = gaussian(n, d, seed);
        let cfg = EmbedConfig { measure: true, ..EmbedConfig::with_seed(seed) };
        let c = constant_embed(&a, &cfg).unwrap().report;
        let p = polylog_embed(&a, &cfg).unwrap().report;
        let dc = c.distortion.unwrap_or(f64::INFINITY);
        let dp = p.distortion.unwrap_or(f64::INFINITY);
        rows_ok &= c.rows_out <= 10 * d;
        ok += usize::from(dc <= 10.0);
        better += usize::from(dc <= dp);
        worst = worst.max(dc);
    }
    outcome(
        rows_ok && ok >= 18 && better >= 15,
        format!("rows <= 10d {rows_ok}, distortion <= 10 {ok}/20 (worst {worst:.2}), <= polylog {better}/20"),
    )
}

fn feasible(w: &WeightVector) -> bool {
    let p = w.len() as f64;
    let s: f64 = w.as_slice().iter().sum();
    w.as_slice().iter().all(|&v| v >= -1e-6 && v <= 2.0 / p + 1e-6) && (s - 1.0).abs() <= 1e-6 && w.is_feasible()
}

fn sdp_reweighting() -> Outcome {
    let acc = EmbedConfig::default().sdp_accuracy;
    let max_iter = EmbedConfig::default().sdp_max_iter;
    let mut all_feasible = true;
    let q = householder_qr(&gaussian(40, 40, 1)).unwrap().q;
    let sol = solve_packing_sdp(&PackingInstance::new(q).unwrap(), 0.0, acc, max_iter).unwrap();
    all_feasible &= feasible(&sol.weights);
    let ratio = sol.objective * 40.0;
    for seed in 0..5u64 {
        let mut x = gaussian(120, 12, 10 + seed);
        for i in 0..(seed as usize + 1) {
            x.row_mut(i).iter_mut().for_each(|v| *v *= 6.0);
        }
        let basis = householder_qr(&gaussian(12, 12, 20 + seed)).unwrap().q;
        let inst = build_packing_instance(&x, &basis, &DenseMatrix::identity(12), ProjectionMethod::Exact).unwrap();
        let sol = solve_packing_sdp(&inst, 0.0, acc, max_iter).unwrap();
        all_feasible &= feasible(&sol.weights);
    }
    outcome(all_feasible && ratio <= 1.05, format!("all weights feasible {all_feasible}, orthonormal lambda_max * p = {ratio:.4}"))
}

fn eps_embedding() -> Outcome {
    let (n, d, eps) = (8192, 32, 0.25);
    let (mut ok, mut rows_ok, mut worst, mut max_rows) = (0, true, 0.0f64, 0);
    for seed in 0..20u64 {
        let a = gaussian(n, d, seed);
        let cfg = LevSampleConfig { epsilon: eps, measure: true, ..LevSampleConfig::with_seed(seed) };
        let r = eps_subspace_embed(&a, &cfg).unwrap().report;
        let dev = r.max_deviation.unwrap_or(f64::INFINITY);
        ok += usize::from(dev <= eps);
        worst = worst.max(dev);
        rows_ok &= (r.rows_out as f64) <= cfg.budget(d);
        max_rows = max_rows.max(r.rows_out);
    }
    let budget = LevSampleConfig { epsilon: eps, ..LevSampleConfig::default() }.budget(d);
    outcome(
        ok >= 18 && rows_ok,
        format!("deviation <= eps {ok}/20 (worst {worst:.3}), rows <= {budget:.0}: {rows_ok} (max {max_rows})"),
    )
}

fn sampling_sandwich() -> Outcome {
    let (n, d, s, trials) = (2000usize, 16usize, 200.0, 500u64);
    let mut a = gaussian(n, d, 7);
    for i in 0..20 {
        let w = 1.0 + i as f64;
        a.row_mut(i * 97).iter_mut().for_each(|v| *v *= w);
    }
    let cfg = LevSampleConfig::with_seed(7);
    let r = qr_lev_factors(&a, &cfg).unwrap().r;
    let norms = exact_row_norms(&a, &r);
    let total: f64 = norms.iter().sum();
    let mut counts = vec![0u32; n];
    for seed in 0..trials {
        let (rows, _) = two_stage_sample(&a, &r, s, cfg.jl_cols_stage1, cfg.stage2_log_mult, seed).unwrap();
        for i in rows.indices {
            counts[i] += 1;
        }
    }
    let t = trials as f64;
    let inside = (0..n)
        .filter(|&i| {
            let q = norms[i] / total;
            let lo = (s / 16.0 * q).min(1.0);
            let hi = (s * q).min(1.0);
            let f = counts[i] as f64 / t;
            let sd = |p: f64| (p * (1.0 - p) / t).sqrt();
            f >= lo - 5.0 * sd(lo) && f <= hi + 5.0 * sd(hi)
        })
        .count();
    let frac = inside as f64 / n as f64;
    outcome(frac >= 0.99, format!("rows inside sandwich {inside}/{n} ({:.2}%)", 100.0 * frac))
}

type Generator = Box<dyn Fn(u64) -> DenseMatrix>;

fn basis_selection() -> Outcome {
    let d = 40;
    let block = Instance::RankDeficient { n: 16, d, k: 4 };
    let suite: Vec<(&str, Generator)> = vec![
        ("square", Box::new(move |s| gaussian(d, d, s))),
        ("stacked-rank-4", Box::new(move |s| {
            let b = block.generate(s).unwrap();
            b.vstack(&b).unwrap().vstack(&b).unwrap()
        })),
        ("rank-half", Box::new(move |s| Instance::RankDeficient { n: 50 * d, d, k: d / 2 }.generate(s).unwrap())),
        ("zero-rows", Box::new(move |s| {
            let mut a = gaussian(50 * d, d, s);
            for i in (0..50 * d).step_by(10) {
                a.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
            }
            a
        })),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, make) in &suite {
        let (mut exact, mut fallbacks) = (0, 0);
        for seed in 0..20u64 {
            let a = make(seed);
            let res = select_independent_rows(&a, &BasisConfig::with_seed(seed)).unwrap();
            let k = numerical_rank(&a, RANK_TOL_FACTOR).unwrap();
            let sub = if res.indices.is_empty() { 0 } else { numerical_rank(&a.select_rows(&res.indices), RANK_TOL_FACTOR).unwrap() };
            exact += usize::from(res.k == k && res.indices.len() == k && sub == k);
            fallbacks += usize::from(res.fallback);
        }
        pass &= exact == 20 && fallbacks <= 2;
        parts.push(format!("{name} exact {exact}/20 fallback {fallbacks}"));
    }
    outcome(pass, parts.join(", "))
}

fn approximate_product() -> Outcome {
    let m = householder_qr(&gaussian(512, 16, 3)).unwrap().q;
    let r = 256;
    let gram = m.t_matmul(&m).unwrap();
    let mut errs: Vec<f64> = (0..100u64)
        .map(|seed| {
            let sm = amm_sample(&m, r, seed).unwrap();
            let e = sm.t_matmul(&sm).unwrap().sub(&gram).unwrap().frobenius_norm();
            e * e
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[49] + errs[50]);
    let fro = m.frobenius_norm();
    let bound = 10.0 / (r as f64).sqrt() * fro.powi(4);
    outcome(median <= bound, format!("median error {median:.3} vs bound {bound:.1}"))
}

fn regression() -> Outcome {
    let (mut ratio_ok, mut kappa_ok, mut monotone, mut worst) = (0, 0, true, 0.0f64);
    for seed in 0..10u64 {
        let (a, b) = planted_regression(8192, 50, seed);
        let cfg = RegressionConfig { epsilon: 0.1, oracle: true, ..RegressionConfig::with_seed(seed) };
        let res = solve_regression(&a, &b, &cfg).unwrap();
        let ratio = res.oracle_ratio.unwrap();
        worst = worst.max(ratio);
        ratio_ok += usize::from(ratio <= 1.1);
        kappa_ok += usize::from(res.kappa_sar <= 4.0);
        monotone &= res.gd_trace.windows(2).all(|w| w[1] <= w[0]);
    }
    outcome(
        ratio_ok >= 9 && kappa_ok >= 9 && monotone,
        format!("ratio <= 1.1 {ratio_ok}/10 (worst {worst:.4}), kappa(SAR) <= 4 {kappa_ok}/10, monotone {monotone}"),
    )
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_subembed");
    let commands: [&[&str]; 6] = [
        &["embed", "--n", "4096", "--d", "32", "--seed", "7", "--alpha", "0.25"],
        &["levscore", "--n", "8192", "--d", "32", "--epsilon", "0.25", "--seed", "3"],
        &["basis", "--n", "2000", "--d", "40", "--k", "20", "--seed", "5"],
        &["regress", "--n", "8192", "--d", "50", "--epsilon", "0.1", "--seed", "1", "--oracle"],
        &["selftest", "--seed", "2"],
        &["bench", "--n", "1024", "--d", "12", "--seeds", "2", "--seed", "4"],
    ];
    let mut same = 0;
    let mut bad = Vec::new();
    for args in commands {
        let run = || Command::new(exe).args(args).arg("--no-timing").output().expect("binary runs");
        let (x, y) = (run(), run());
        let ok = x.status.code() == Some(0) && x.stdout == y.stdout && x.status.code() == y.status.code() && !x.stdout.is_empty();
        if ok {
            same += 1;
        } else {
            bad.push(args[0]);
        }
    }
    outcome(bad.is_empty(), format!("byte-identical reports {same}/{}{}", commands.len(), if bad.is_empty() { String::new() } else { format!(", differing: {bad:?}") }))
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        (1, "fwht exactness", Duration::from_secs(1), fwht_exactness),
        (2, "leverage scores sum to rank", Duration::from_secs(5), leverage_sum),
        (3, "srht flattening", Duration::from_secs(5), srht_flattening),
        (4, "constant-factor embedding", Duration::from_secs(60), constant_factor_embedding),
        (5, "sdp reweighting", Duration::from_secs(10), sdp_reweighting),
        (6, "(1+eps) embedding", Duration::from_secs(120), eps_embedding),
        (7, "sampling sandwich", Duration::from_secs(120), sampling_sandwich),
        (8, "basis selection", Duration::from_secs(120), basis_selection),
        (9, "approximate matrix product", Duration::from_secs(30), approximate_product),
        (10, "regression", Duration::from_secs(120), regression),
        (11, "determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = out.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {} ({:.2}s, limit {}s{})",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
