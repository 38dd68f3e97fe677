//! Experiment drivers: single solves, sweeps, `R_m` selection, slices and
//! the approximation-rate study, with their CSV tables.
//!
//! One seed drives a run. The layer, the training points, the test points
//! and the restart perturbations read independent streams of it (see
//! [`crate::rng`]), so sweeping one quantity leaves the others fixed.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{self, AssemblyOptions, Method, System, TrainedModel};
use crate::error::{invalid, unsupported, Error, Result};
use crate::eval::{self, ErrorPair, SliceSpec};
use crate::features::FeatureLayer;
use crate::geometry::{self, decompose};
use crate::lsq::{self, NllsqOptions};
use crate::points::PointBlock;
use crate::problems::{make_problem, PdeProblem};
use crate::rng::{self, Stream};

/// Domain decomposition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSpec {
    pub dirs: Vec<usize>,
    pub counts: Vec<usize>,
    #[serde(default = "one")]
    pub continuity_order: usize,
}

fn one() -> usize {
    1
}

/// Everything a run depends on. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub d: usize,
    pub method: Method,
    /// Number of features `M` (per sub-domain).
    pub width: usize,
    pub n_in: usize,
    pub n_bc: usize,
    pub n_t0: usize,
    pub r_m: f64,
    /// Candidates for `select-rm`; empty means `[r_m]`.
    pub r_m_candidates: Vec<f64>,
    pub seed: u64,
    pub decomposition: Option<DecompositionSpec>,
    pub boundary_scale: f64,
    pub solver: NllsqOptions,
    pub test_n_bc: usize,
    pub test_n_in: usize,
    pub sweep: Option<SweepSpec>,
    pub slice: Option<SliceConfig>,
    pub rate: Option<RateConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: "poisson".into(),
            d: 2,
            method: Method::Elm,
            width: 200,
            n_in: 200,
            n_bc: 50,
            n_t0: 0,
            r_m: 0.5,
            r_m_candidates: Vec::new(),
            seed: 1,
            decomposition: None,
            boundary_scale: 1.0,
            solver: NllsqOptions::default(),
            test_n_bc: 100,
            test_n_in: 7000,
            sweep: None,
            slice: None,
            rate: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Checks the configuration and builds its problem.
    pub fn problem(&self) -> Result<PdeProblem> {
        if self.width == 0 {
            return Err(invalid("width must be positive"));
        }
        if !(self.r_m > 0.0 && self.r_m.is_finite()) {
            return Err(invalid("r_m must be positive"));
        }
        if !(self.boundary_scale > 0.0) {
            return Err(invalid("boundary_scale must be positive"));
        }
        let problem = make_problem(&self.problem, self.d)?;
        if self.n_t0 > 0 && !problem.domain.is_time_dependent() {
            return Err(invalid(format!("n_t0 must be 0 for the stationary problem '{}'", self.problem)));
        }
        if let Some(dec) = &self.decomposition {
            if self.method == Method::ElmAtfc {
                return Err(unsupported("the face-operator method does not combine with domain decomposition"));
            }
            if problem.linear.max_order() >= 3 && dec.counts.iter().any(|&c| c > 1) {
                return Err(unsupported("third-order problems cannot be decomposed"));
            }
        }
        self.solver.validate()?;
        Ok(problem)
    }

    fn solver_options(&self) -> NllsqOptions {
        NllsqOptions { seed: self.seed, ..self.solver.clone() }
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub assemble_s: f64,
    pub solve_s: f64,
    pub eval_s: f64,
    pub total_s: f64,
}

/// Result of one solve, echoing its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: RunConfig,
    pub n_rows: usize,
    pub n_dof: usize,
    pub coeffs: Vec<f64>,
    pub residual_norm: f64,
    pub residual_rms: f64,
    pub rank: Option<usize>,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Errors on the test set; absent without an exact solution.
    pub errors: Option<ErrorPair>,
    pub timings: Timings,
}

impl SolveReport {
    pub fn row(&self) -> RunRow {
        let c = &self.config;
        RunRow {
            problem: c.problem.clone(),
            d: c.d,
            method: c.method,
            width: c.width,
            n_in: c.n_in,
            n_bc: c.n_bc,
            n_t0: c.n_t0,
            r_m: c.r_m,
            seed: c.seed,
            e_inf: self.errors.map(|e| e.e_inf),
            e_rms: self.errors.map(|e| e.e_rms),
            residual: self.residual_norm,
            iters: self.iterations,
            time_s: self.timings.total_s,
        }
    }
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub problem: String,
    pub d: usize,
    pub method: Method,
    #[serde(rename = "M")]
    pub width: usize,
    pub n_in: usize,
    pub n_bc: usize,
    pub n_t0: usize,
    pub r_m: f64,
    pub seed: u64,
    pub e_inf: Option<f64>,
    pub e_rms: Option<f64>,
    pub residual: f64,
    pub iters: usize,
    pub time_s: f64,
}

/// Column names of `runs.csv`.
pub const RUN_COLUMNS: [&str; 14] =
    ["problem", "d", "method", "M", "n_in", "n_bc", "n_t0", "r_m", "seed", "e_inf", "e_rms", "residual", "iters", "time_s"];

/// A finished solve: report, trained model and the problem it solved.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub report: SolveReport,
    pub model: TrainedModel,
    pub problem: PdeProblem,
}

/// Samples, assembles, solves and evaluates one configuration.
pub fn run_solve(config: &RunConfig) -> Result<SolveOutcome> {
    let problem = config.problem()?;
    let start = Instant::now();
    let dim = problem.domain.dim_total();
    let opts = AssemblyOptions {
        continuity_order: config.decomposition.as_ref().map_or(1, |d| d.continuity_order),
        boundary_scale: config.boundary_scale,
    };
    let (system, build): (System, Box<dyn Fn(&[f64]) -> Result<TrainedModel>>) = match (&config.method, &config.decomposition) {
        (Method::ElmAtfc, _) => {
            let layer = FeatureLayer::new(dim, config.width, config.r_m, config.seed)?;
            let set = geometry::sample_collocation(&problem.domain, config.n_in, config.n_bc, config.n_t0, config.seed)?;
            let system = assembly::assemble_atfc(&problem, &layer, &set, &opts)?;
            let p = problem.clone();
            (system, Box::new(move |phi| TrainedModel::atfc(&p, layer.clone(), phi)))
        }
        (Method::Elm, dec) => {
            let (dirs, counts) = dec.as_ref().map_or((&[][..], &[][..]), |d| (&d.dirs[..], &d.counts[..]));
            let dec = decompose(&problem.domain, dirs, counts)?;
            let layers = assembly::loc_elm_layers(&dec, config.width, config.r_m, config.seed)?;
            let sets = dec.sample(config.n_in, config.n_bc, config.n_t0, config.seed)?;
            let system = assembly::assemble_loc_elm(&problem, &dec, &layers, &sets, &opts)?;
            (system, Box::new(move |phi| TrainedModel::elm(&dec, layers.clone(), phi)))
        }
    };
    let assembled = Instant::now();
    let sol = lsq::solve_system(&system, &config.solver_options())?;
    let solved = Instant::now();
    let model = build(&sol.phi)?;
    let errors = match &problem.exact {
        Some(exact) => {
            let test = geometry::sample_test_set(&problem.domain, config.test_n_bc, config.test_n_in, config.seed);
            let pred = model.predict(&test)?;
            let truth: Vec<f64> = test.iter().map(|x| exact.value(x)).collect();
            Some(eval::errors(&pred, &truth)?)
        }
        None => None,
    };
    let done = Instant::now();
    let secs = |a: Instant, b: Instant| (b - a).as_secs_f64();
    let report = SolveReport {
        config: config.clone(),
        n_rows: system.n_rows(),
        n_dof: system.n_dof(),
        residual_rms: sol.residual_norm / (system.n_rows() as f64).sqrt(),
        residual_norm: sol.residual_norm,
        coeffs: sol.phi,
        rank: sol.rank,
        iterations: sol.iterations,
        restarts: sol.restarts,
        converged: sol.converged,
        errors,
        timings: Timings {
            assemble_s: secs(start, assembled),
            solve_s: secs(assembled, solved),
            eval_s: secs(solved, done),
            total_s: secs(start, done),
        },
    };
    Ok(SolveOutcome { report, model, problem })
}

/// Writes rows under the `runs.csv` header, after optional `# ` comment lines.
pub fn write_runs<W: Write>(mut out: W, comments: &[String], rows: &[RunRow]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RUN_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `runs.csv` table, skipping comment lines.
pub fn read_runs(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(RUN_COLUMNS) {
        return Err(invalid(format!("unexpected runs.csv header: {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One candidate of an `R_m` selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub r_m: f64,
    pub e_rms: Option<f64>,
    pub residual: f64,
}

/// Index of the preferred candidate: smallest test error when every
/// candidate has one, else smallest residual norm; ties go to the smaller
/// `R_m`. Non-finite scores never win against finite ones.
pub fn select_rm(table: &[Candidate]) -> Option<usize> {
    let use_error = table.iter().all(|c| c.e_rms.is_some());
    let score = |c: &Candidate| {
        let s = if use_error { c.e_rms.unwrap() } else { c.residual };
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    };
    (0..table.len()).min_by(|&a, &b| {
        score(&table[a]).total_cmp(&score(&table[b])).then(table[a].r_m.total_cmp(&table[b].r_m))
    })
}

/// Selection result.
#[derive(Debug, Clone)]
pub struct SelectRm {
    pub chosen: f64,
    pub reports: Vec<SolveReport>,
}

/// Solves once per candidate with everything else fixed and picks one with
/// [`select_rm`].
pub fn run_select_rm(config: &RunConfig) -> Result<SelectRm> {
    let candidates = if config.r_m_candidates.is_empty() { vec![config.r_m] } else { config.r_m_candidates.clone() };
    let mut reports = Vec::with_capacity(candidates.len());
    for &r_m in &candidates {
        reports.push(run_solve(&RunConfig { r_m, ..config.clone() })?.report);
    }
    let table: Vec<Candidate> = reports
        .iter()
        .map(|r| Candidate { r_m: r.config.r_m, e_rms: r.errors.map(|e| e.e_rms), residual: r.residual_norm })
        .collect();
    let chosen = candidates[select_rm(&table).expect("candidate list is non-empty")];
    Ok(SelectRm { chosen, reports })
}

/// Swept quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Width,
    NBc,
    NIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

/// Header comment stating the seed policy of a sweep.
pub fn sweep_comment(config: &RunConfig, spec: &SweepSpec) -> String {
    format!(
        "sweep axis={:?}; layer and collocation seed fixed at {} for every row",
        spec.axis, config.seed
    )
}

/// One solve per value, run one after another with the same seed.
pub fn run_sweep(config: &RunConfig, spec: &SweepSpec) -> Result<Vec<SolveReport>> {
    if spec.values.len() < 2 {
        return Err(invalid("a sweep needs at least two values"));
    }
    spec.values
        .iter()
        .map(|&v| {
            let mut c = config.clone();
            match spec.axis {
                SweepAxis::Width => c.width = v,
                SweepAxis::NBc => c.n_bc = v,
                SweepAxis::NIn => c.n_in = v,
            }
            run_solve(&c).map(|o| o.report)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub i: usize,
    pub j: usize,
    #[serde(default)]
    pub fixed: Option<Vec<f64>>,
    #[serde(default = "default_q")]
    pub q: usize,
}

fn default_q() -> usize {
    800
}

/// Solves, then streams the slice table to `out`.
pub fn run_slice<W: Write>(config: &RunConfig, slice: &SliceConfig, out: W) -> Result<(SolveReport, ErrorPair)> {
    let outcome = run_solve(config)?;
    let exact = outcome.problem.exact.as_ref().ok_or_else(|| invalid("slices need an exact solution"))?;
    let spec = SliceSpec { i: slice.i, j: slice.j, fixed: slice.fixed.clone(), q: slice.q };
    let err = eval::write_slice(out, &outcome.model, exact.as_ref(), &outcome.problem.domain, &spec)?;
    Ok((outcome.report, err))
}

/// Function fitted by the rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateTarget {
    /// `|s| + sin s` with `s` the coordinate mean.
    AbsPlusSin,
    Constant(f64),
}

impl RateTarget {
    pub fn value(self, x: &[f64]) -> f64 {
        match self {
            RateTarget::AbsPlusSin => {
                let s = x.iter().sum::<f64>() / x.len() as f64;
                s.abs() + s.sin()
            }
            RateTarget::Constant(c) => c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub d: usize,
    pub widths: Vec<usize>,
    /// Training points; the held-out set has the same size.
    pub samples: usize,
    pub seeds: Vec<u64>,
    pub r_m: f64,
    pub target: RateTarget,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            d: 8,
            widths: vec![64, 128, 256, 512, 1024],
            samples: 4000,
            seeds: vec![1, 2, 3, 4, 5],
            r_m: RATE_R_M,
            target: RateTarget::AbsPlusSin,
        }
    }
}

/// Default feature scale of the rate study.
pub const RATE_R_M: f64 = 1.0;

/// One line of `rate.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln mse_mean` against `ln n`.
    pub slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Random-feature least-squares fits of the target on `[-1, 1]^d` for each
/// width and seed; mean and standard deviation over seeds of the held-out
/// mean-squared error.
pub fn run_rate_study(cfg: &RateConfig) -> Result<RateStudy> {
    if cfg.widths.len() < 3 || cfg.widths.iter().any(|&w| w == 0) {
        return Err(invalid("the rate study needs at least three positive widths"));
    }
    if cfg.seeds.len() < 3 || cfg.samples == 0 || cfg.d == 0 {
        return Err(invalid("the rate study needs three seeds, samples and a positive dimension"));
    }
    let domain = geometry::BoxDomain::cube(cfg.d, -1.0, 1.0, None)?;
    let mut rows = Vec::with_capacity(cfg.widths.len());
    for &n in &cfg.widths {
        let mut mses = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let train = uniform_block(&domain, cfg.samples, seed, 0);
            let test = uniform_block(&domain, cfg.samples, seed, 1);
            let layer = FeatureLayer::new(cfg.d, n, cfg.r_m, rng::derive_seed(seed, n as u64))?;
            let a = layer.eval_features(&train, 0)?.values;
            let b: Vec<f64> = train.iter().map(|x| cfg.target.value(x)).collect();
            let fit = lsq::min_norm_lsq(&a, &b)?;
            let pred = layer.predict(&test, &fit.phi)?;
            let mse = test.iter().zip(&pred).map(|(x, p)| (p - cfg.target.value(x)).powi(2)).sum::<f64>() / test.len() as f64;
            mses.push(mse);
        }
        let k = mses.len() as f64;
        let mean = mses.iter().sum::<f64>() / k;
        let var = if mses.len() > 1 { mses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
        rows.push(RateRow { n, mse_mean: mean, mse_std: var.sqrt() });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mse_mean).collect();
    Ok(RateStudy { slope: log_log_slope(&xs, &ys), rows })
}

fn uniform_block(domain: &geometry::BoxDomain, n: usize, seed: u64, which: u64) -> PointBlock {
    use rand::Rng;
    let mut rng = rng::stream(rng::derive_seed(seed, which), Stream::RateStudy);
    let mut out = PointBlock::with_capacity(domain.d(), n);
    let mut x = vec![0.0; domain.d()];
    for _ in 0..n {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rng.random_range(domain.lo()[i]..domain.hi()[i]);
        }
        out.push(&x);
    }
    out
}

/// Column names of `rate.csv`.
pub const RATE_COLUMNS: [&str; 3] = ["n", "mse_mean", "mse_std"];

/// Writes `rate.csv` with the fitted slope as a leading comment.
pub fn write_rate<W: Write>(mut out: W, study: &RateStudy) -> Result<()> {
    writeln!(out, "# slope={:.17e}", study.slope)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RATE_COLUMNS)?;
    for r in &study.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
