use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use super::mtx::{format_matrix_market, parse_matrix_market, read_matrix_market, read_vector};
use super::suite::{BenchSuite, Instance};
use super::{Params, RunReport, Task};
use crate::basis::{select_independent_rows, BasisConfig};
use crate::embed::{constant_embed, EmbedConfig};
use crate::error::{Error, Result};
use crate::leverage::{eps_subspace_embed, LevSampleConfig};
use crate::linalg::{exact_leverage_scores, numerical_rank, DenseMatrix, Matrix, SparseMatrix, RANK_TOL_FACTOR};
use crate::regression::{solve_regression, RegressionConfig};
use crate::rng::{self, Module};
use crate::sdp::{build_packing_instance, solve_packing_sdp, ProjectionMethod};
use crate::sketch::{fwht, hadamard_entry, StackedSrht};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub alpha: f64,
    /// Defaults to 0.25 for `levscore` and 0.1 for `regress`.
    pub epsilon: Option<f64>,
    pub mtx: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
    pub oracle: bool,
    pub constants: BTreeMap<String, f64>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub k: Option<usize>,
    /// Number of seeds for `bench`.
    pub seeds: Option<u64>,
    pub timing: bool,
}

impl RunConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            seed,
            alpha: 0.25,
            epsilon: None,
            mtx: None,
            rhs: None,
            oracle: false,
            constants: BTreeMap::new(),
            n: None,
            d: None,
            k: None,
            seeds: None,
            timing: true,
        }
    }
}

/// Header plus rows of a CSV trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrace {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTrace {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: RunReport,
    pub csv: Option<CsvTrace>,
}

struct Configs {
    embed: EmbedConfig,
    lev: LevSampleConfig,
    basis: BasisConfig,
    regression: RegressionConfig,
}

fn as_count(key: &str, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e12 {
        Ok(v as usize)
    } else {
        Err(Error::InvalidParameter(format!("constant {key} must be a non-negative integer, got {v}")))
    }
}

fn configs(cfg: &RunConfig, epsilon: f64) -> Result<Configs> {
    let mut embed = EmbedConfig { alpha: cfg.alpha, ..EmbedConfig::with_seed(cfg.seed) };
    let mut lev = LevSampleConfig { epsilon, alpha: cfg.alpha, ..LevSampleConfig::with_seed(cfg.seed) };
    let mut basis = BasisConfig { alpha: cfg.alpha, ..BasisConfig::with_seed(cfg.seed) };
    let mut regression = RegressionConfig { epsilon, alpha: cfg.alpha, oracle: cfg.oracle, ..RegressionConfig::with_seed(cfg.seed) };
    for (key, &v) in &cfg.constants {
        match key.as_str() {
            "osnap_s2_rows_const" | "s2_rows_const" => embed.osnap_s2_rows_const = v,
            "osnap_s1_rows_const" | "s1_rows_const" => embed.osnap_s1_rows_const = v,
            "m" | "srht_blocks" => embed.srht_blocks = as_count(key, v)?,
            "C" | "sample_const" => embed.sample_const = v,
            "sdp" => embed.sdp = v != 0.0,
            "sdp_accuracy" => embed.sdp_accuracy = v,
            "sdp_max_iter" => embed.sdp_max_iter = as_count(key, v)?,
            "sdp_target" => embed.sdp_target = v,
            "c_s" => lev.c_s = v,
            "jl_cols_stage1" => lev.jl_cols_stage1 = as_count(key, v)?,
            "stage2_log_mult" => lev.stage2_log_mult = v,
            "c_r" => basis.c_r = v,
            "cap_log_mult" => basis.cap_log_mult = v,
            "cap_add" => basis.cap_add = as_count(key, v)?,
            "k_start" => basis.k_start = as_count(key, v)?,
            "reduce_const" => basis.reduce_const = v,
            "c_it" => regression.c_it = v,
            "gd_cap" => regression.cap = Some(as_count(key, v)?),
            other => return Err(Error::InvalidParameter(format!("unknown constant {other:?}"))),
        }
    }
    embed.validate()?;
    lev.embed = embed.clone();
    lev.validate()?;
    regression.embed = embed.clone();
    regression.lev = lev.clone();
    Ok(Configs { embed, lev, basis, regression })
}

fn dims(cfg: &RunConfig, n: usize, d: usize) -> (usize, usize) {
    (cfg.n.unwrap_or(n), cfg.d.unwrap_or(d))
}

fn input_matrix(cfg: &RunConfig, fallback: Instance) -> Result<Matrix> {
    match &cfg.mtx {
        Some(path) => read_matrix_market(path),
        None => Ok(Matrix::Dense(fallback.generate(cfg.seed)?)),
    }
}

/// Gaussian `A` with `b = A x̂ + g`, both `x̂` and `g` standard normal.
pub fn planted_regression(n: usize, d: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
    let mut r = rng::stream(seed, Module::Bench, 100);
    let a = DenseMatrix::from_fn(n, d, |_, _| rng::gaussian(&mut r));
    let x_hat = rng::gaussian_vec(&mut r, d);
    let mut b = a.matvec(&x_hat).expect("matching shapes");
    b.iter_mut().for_each(|v| *v += rng::gaussian(&mut r));
    (a, b)
}

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

/// Runs one task. Errors map to exit code 2; the report carries pass/fail.
pub fn run_task(cfg: &RunConfig) -> Result<Outcome> {
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {}", cfg.alpha)));
    }
    let epsilon = cfg.epsilon.unwrap_or(match cfg.task {
        Task::Regress => 0.1,
        _ => 0.25,
    });
    let uses_eps = matches!(cfg.task, Task::Levscore | Task::Regress);
    let params = Params { alpha: cfg.alpha, epsilon: uses_eps.then_some(epsilon), constants: cfg.constants.clone() };
    let mut report = RunReport::new(cfg.task, cfg.seed, params);
    let configs = configs(cfg, epsilon)?;
    let start = Instant::now();
    let csv = match cfg.task {
        Task::Embed => run_embed(cfg, &configs, &mut report)?,
        Task::Levscore => run_levscore(cfg, &configs, &mut report)?,
        Task::Basis => run_basis(cfg, &configs, &mut report)?,
        Task::Regress => run_regress(cfg, &configs, &mut report)?,
        Task::Selftest => run_selftest(cfg, &mut report)?,
        Task::Bench => run_bench(cfg, &configs, &mut report)?,
    };
    if cfg.timing {
        report.runtime_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(Outcome { report, csv })
}

fn run_embed(cfg: &RunConfig, c: &Configs, report: &mut RunReport) -> Result<Option<CsvTrace>> {
    let (n, d) = dims(cfg, 4096, 32);
    let a = input_matrix(cfg, Instance::Gaussian { n, d })?;
    let ecfg = EmbedConfig { measure: true, ..c.embed.clone() };
    let res = constant_embed(a.as_input(), &ecfg)?;
    let r = &res.report;
    report.rows_in = r.rows_in;
    report.cols_in = r.cols_in;
    report.rows_out = r.rows_out;
    let distortion = r.distortion.unwrap_or(f64::INFINITY);
    report.metric("distortion", distortion);
    report.metric("sigma_min", r.sigma_min.unwrap_or(f64::NAN));
    report.metric("sigma_max", r.sigma_max.unwrap_or(f64::NAN));
    report.metric("rank", r.dims.k as f64);
    report.flags.extend(r.flags.iter().cloned());
    let mut csv = CsvTrace::new(&["iteration", "sdp_objective"]);
    if let Some(sdp) = &r.sdp {
        report.metric("sdp_objective", sdp.objective);
        report.metric("sdp_lower_bound", sdp.lower_bound);
        report.metric("sdp_iterations", sdp.iterations as f64);
        for (i, v) in sdp.trace.iter().enumerate() {
            csv.push(vec![i.to_string(), fmt_f(*v)]);
        }
    }
    report.pass = distortion <= 10.0 && r.rows_out <= 10 * r.cols_in.max(1);
    Ok(Some(csv))
}

fn run_levscore(cfg: &RunConfig, c: &Configs, report: &mut RunReport) -> Result<Option<CsvTrace>> {
    let (n, d) = dims(cfg, 8192, 32);
    let a = input_matrix(cfg, Instance::Gaussian { n, d })?;
    let lcfg = LevSampleConfig { measure: true, ..c.lev.clone() };
    let res = eps_subspace_embed(a.as_input(), &lcfg)?;
    let r = &res.report;
    report.rows_in = r.rows_in;
    report.cols_in = r.cols_in;
    report.rows_out = r.rows_out;
    let dev = r.max_deviation.unwrap_or(f64::INFINITY);
    report.metric("singular_deviation", dev);
    report.metric("sigma_min", r.sigma_min.unwrap_or(f64::NAN));
    report.metric("sigma_max", r.sigma_max.unwrap_or(f64::NAN));
    report.metric("budget", r.budget);
    report.metric("xi", r.xi);
    report.flags.extend(r.flags.iter().cloned());
    let mut csv = CsvTrace::new(&["row", "probability"]);
    for (&i, &p) in res.sample.indices.iter().zip(&res.sample.probs) {
        csv.push(vec![i.to_string(), fmt_f(p)]);
    }
    report.pass = dev <= lcfg.epsilon && (r.rows_out as f64) <= r.budget;
    Ok(Some(csv))
}

fn run_basis(cfg: &RunConfig, c: &Configs, report: &mut RunReport) -> Result<Option<CsvTrace>> {
    let (n, d) = dims(cfg, 2000, 40);
    let k = cfg.k.unwrap_or(d / 2);
    let a = input_matrix(cfg, Instance::RankDeficient { n, d, k })?;
    let res = select_independent_rows(a.as_input(), &c.basis)?;
    let dense = a.to_dense();
    let oracle = numerical_rank(&dense, RANK_TOL_FACTOR)?;
    let sub = if res.indices.is_empty() { 0 } else { numerical_rank(&dense.select_rows(&res.indices), RANK_TOL_FACTOR)? };
    report.rows_in = dense.rows();
    report.cols_in = dense.cols();
    report.rows_out = res.k;
    report.metric("rank", res.k as f64);
    report.metric("oracle_rank", oracle as f64);
    report.metric("submatrix_rank", sub as f64);
    report.metric("iterations", res.iterations as f64);
    if res.fallback {
        report.flags.push("fallback".into());
    }
    let mut csv = CsvTrace::new(&["iteration", "residual_rank", "sampled", "gained"]);
    for it in &res.trace {
        csv.push(vec![it.iteration.to_string(), it.residual_rank.to_string(), it.sampled.to_string(), it.gained.to_string()]);
    }
    report.pass = res.k == oracle && sub == oracle;
    Ok(Some(csv))
}

fn run_regress(cfg: &RunConfig, c: &Configs, report: &mut RunReport) -> Result<Option<CsvTrace>> {
    let (a, b) = match (&cfg.mtx, &cfg.rhs) {
        (Some(m), Some(r)) => (read_matrix_market(m)?.to_dense(), read_vector(r)?),
        (None, None) => {
            let (n, d) = dims(cfg, 8192, 50);
            planted_regression(n, d, cfg.seed)
        }
        _ => return Err(Error::InvalidParameter("regress needs both --mtx and --rhs, or neither".into())),
    };
    let res = solve_regression(&a, &b, &c.regression)?;
    report.rows_in = a.rows();
    report.cols_in = a.cols();
    report.rows_out = res.rows_sketched;
    report.metric("residual", res.residual);
    report.metric("warm_start_residual", res.warm_start_residual);
    report.metric("kappa_sar", res.kappa_sar);
    report.metric("iterations", res.iterations as f64);
    if let (Some(ratio), Some(opt)) = (res.oracle_ratio, res.oracle_residual) {
        report.metric("oracle_ratio", ratio);
        report.metric("oracle_residual", opt);
    }
    let monotone = res.gd_trace.windows(2).all(|w| w[1] <= w[0]);
    report.metric("monotone", if monotone { 1.0 } else { 0.0 });
    report.flags.extend(res.flags.iter().cloned());
    let mut csv = CsvTrace::new(&["iteration", "objective"]);
    for (i, v) in res.gd_trace.iter().enumerate() {
        csv.push(vec![i.to_string(), fmt_f(*v)]);
    }
    report.pass = monotone && res.oracle_ratio.is_none_or(|r| r <= 1.0 + c.regression.epsilon);
    Ok(Some(csv))
}

type Check = (&'static str, fn(u64) -> Result<bool>);

const CHECKS: [Check; 9] = [
    ("fwht", check_fwht),
    ("leverage_sum", check_leverage_sum),
    ("srht_flattening", check_flattening),
    ("sdp_feasible", check_sdp),
    ("embed", check_embed),
    ("levscore", check_levscore),
    ("basis", check_basis),
    ("regress", check_regress),
    ("matrix_market", check_matrix_market),
];

fn check_fwht(seed: u64) -> Result<bool> {
    let mut r = rng::stream(seed, Module::Bench, 200);
    for len in [1usize, 2, 4, 8, 16, 32, 64] {
        let x = rng::gaussian_vec(&mut r, len);
        let fast = fwht(&x)?;
        for (i, f) in fast.iter().enumerate() {
            let naive: f64 = (0..len).map(|j| hadamard_entry(i, j) * x[j]).sum();
            if (naive - f).abs() > 1e-10 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn check_leverage_sum(seed: u64) -> Result<bool> {
    for (i, inst) in [Instance::Gaussian { n: 40, d: 8 }, Instance::RankDeficient { n: 40, d: 8, k: 3 }].iter().enumerate() {
        let a = inst.generate(seed + i as u64)?;
        let total: f64 = exact_leverage_scores(&a)?.iter().sum();
        if (total - numerical_rank(&a, RANK_TOL_FACTOR)? as f64).abs() > 1e-8 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_flattening(seed: u64) -> Result<bool> {
    let mut r = rng::stream(seed, Module::Bench, 201);
    let (mut big, mut total) = (0usize, 0usize);
    for t in 0..10u64 {
        let h = StackedSrht::new(128, 8, seed.wrapping_add(t))?;
        let mut x = rng::gaussian_vec(&mut r, 128);
        let norm = crate::linalg::norm2(&x);
        x.iter_mut().for_each(|v| *v /= norm);
        let y = h.apply_unscaled(&x)?;
        big += y.iter().filter(|v| v.abs() >= 0.1).count();
        total += y.len();
    }
    Ok(big as f64 >= 0.9 * total as f64)
}

fn check_sdp(seed: u64) -> Result<bool> {
    let basis = crate::linalg::householder_qr(&Instance::Gaussian { n: 30, d: 6 }.generate(seed)?)?;
    let inst = build_packing_instance(&basis.q, &DenseMatrix::identity(6), &DenseMatrix::identity(6), ProjectionMethod::Exact)?;
    let sol = solve_packing_sdp(&inst, 0.0, 0.1, 200)?;
    Ok(sol.weights.is_feasible())
}

fn check_embed(seed: u64) -> Result<bool> {
    let a = Instance::Gaussian { n: 1024, d: 16 }.generate(seed)?;
    let res = constant_embed(&a, &EmbedConfig { measure: true, ..EmbedConfig::with_seed(seed) })?;
    Ok(res.report.distortion.is_some_and(|x| x <= 10.0) && res.report.rows_out <= 160)
}

fn check_levscore(seed: u64) -> Result<bool> {
    let a = Instance::Gaussian { n: 2048, d: 8 }.generate(seed)?;
    let cfg = LevSampleConfig { epsilon: 0.5, measure: true, ..LevSampleConfig::with_seed(seed) };
    let res = eps_subspace_embed(&a, &cfg)?;
    Ok(res.report.max_deviation.is_some_and(|x| x <= 0.5))
}

fn check_basis(seed: u64) -> Result<bool> {
    let a = Instance::RankDeficient { n: 200, d: 20, k: 5 }.generate(seed)?;
    let res = select_independent_rows(&a, &BasisConfig::with_seed(seed))?;
    Ok(res.k == 5 && numerical_rank(&a.select_rows(&res.indices), RANK_TOL_FACTOR)? == 5)
}

fn check_regress(seed: u64) -> Result<bool> {
    let (a, b) = planted_regression(2000, 10, seed);
    let cfg = RegressionConfig { oracle: true, ..RegressionConfig::with_seed(seed) };
    let res = solve_regression(&a, &b, &cfg)?;
    Ok(res.oracle_ratio.is_some_and(|r| r <= 1.1))
}

fn check_matrix_market(seed: u64) -> Result<bool> {
    let mut r = rng::stream(seed, Module::Bench, 202);
    let dense = DenseMatrix::from_fn(5, 3, |_, _| rng::gaussian(&mut r));
    let mut triplets = Vec::new();
    for i in 0..6 {
        triplets.push((i, (i * 7) % 4, rng::gaussian(&mut r)));
    }
    let sparse = SparseMatrix::from_triplets(6, 4, &triplets)?;
    for m in [Matrix::Dense(dense), Matrix::Sparse(sparse)] {
        if parse_matrix_market(&format_matrix_market(&m))? != m {
            return Ok(false);
        }
    }
    Ok(true)
}

fn run_selftest(cfg: &RunConfig, report: &mut RunReport) -> Result<Option<CsvTrace>> {
    let mut csv = CsvTrace::new(&["check", "pass"]);
    let mut passed = 0;
    for (name, check) in CHECKS {
        let ok = check(cfg.seed)?;
        passed += usize::from(ok);
        report.metric(&format!("check.{name}"), if ok { 1.0 } else { 0.0 });
        csv.push(vec![name.to_string(), ok.to_string()]);
    }
    report.metric("checks_passed", passed as f64);
    report.metric("checks_total", CHECKS.len() as f64);
    report.pass = passed == CHECKS.len();
    Ok(Some(csv))
}

fn run_bench(cfg: &RunConfig, c: &Configs, report: &mut RunReport) -> Result<Option<CsvTrace>> {
    let (n, d) = dims(cfg, 2048, 16);
    let mut suite = BenchSuite::standard(n, d, cfg.seeds.unwrap_or(3));
    suite.seeds.iter_mut().for_each(|s| *s = s.wrapping_add(cfg.seed));
    let mut csv = CsvTrace::new(&["instance", "seed", "rank", "distortion", "basis_rank", "fallback"]);
    let mut pass = true;
    for inst in &suite.instances {
        let mut worst: f64 = 0.0;
        let mut basis_ok = 0usize;
        for &seed in &suite.seeds {
            let a = inst.generate(seed)?;
            let rank = numerical_rank(&a, RANK_TOL_FACTOR)?;
            let ecfg = EmbedConfig { measure: true, rank_adaptive: true, seed, ..c.embed.clone() };
            let distortion = constant_embed(&a, &ecfg)?.report.distortion.unwrap_or(f64::INFINITY);
            let basis = select_independent_rows(&a, &BasisConfig { seed, ..c.basis.clone() })?;
            let sub = numerical_rank(&a.select_rows(&basis.indices), RANK_TOL_FACTOR)?;
            let ok = basis.k == rank && sub == rank;
            basis_ok += usize::from(ok);
            worst = worst.max(distortion);
            csv.push(vec![
                inst.name().to_string(),
                seed.to_string(),
                rank.to_string(),
                fmt_f(distortion),
                sub.to_string(),
                basis.fallback.to_string(),
            ]);
            report.rows_in += a.rows();
        }
        report.metric(&format!("{}.distortion_max", inst.name()), worst);
        report.metric(&format!("{}.basis_ok", inst.name()), basis_ok as f64);
        pass &= worst <= 10.0 && basis_ok == suite.seeds.len();
    }
    report.cols_in = d;
    report.rows_out = csv.rows.len();
    report.pass = pass;
    Ok(Some(csv))
}
