//! Monte Carlo estimation of the epsilon-constrained coding delay and
//! average coding delay.
//!
//! Every trial's code and traffic seeds are derived from the master seed and
//! the trial's index, and results are folded in index order, so an estimate
//! depends only on the plan and never on how many workers ran it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::bounds::BoundResult;
use crate::dense_code::{run_session, CodingDelay, SessionOptions, SessionTrace};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::traffic::{sample_traffic, NetworkConfig, TrafficRealization};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub cfg: NetworkConfig,
    pub epsilon: f64,
    /// Sessions for the raw coding delay.
    pub trials: usize,
    /// Codes and traffics per code for the average coding delay.
    pub codes: usize,
    pub traffics_per_code: usize,
    pub master_seed: u64,
    /// One-sided confidence level of `upper_ci`.
    pub confidence: f64,
    /// Worker threads; 0 uses rayon's default.
    pub workers: usize,
    /// Recorded traffics to use instead of sampling, indexed like the
    /// sessions of the run (trial `i`, or `c * traffics_per_code + t`).
    pub replay: Option<Vec<TrafficRealization>>,
}

impl ExperimentPlan {
    pub fn new(cfg: NetworkConfig, epsilon: f64, master_seed: u64) -> Self {
        Self {
            cfg,
            epsilon,
            trials: 0,
            codes: 0,
            traffics_per_code: 0,
            master_seed,
            confidence: DEFAULT_CONFIDENCE,
            workers: 0,
            replay: None,
        }
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_codes(mut self, codes: usize, traffics_per_code: usize) -> Self {
        self.codes = codes;
        self.traffics_per_code = traffics_per_code;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn check_common(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} outside (0,1)",
                self.epsilon
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence {} outside (0,1)",
                self.confidence
            )));
        }
        Ok(())
    }

    fn check_replay(&self, sessions: usize) -> Result<()> {
        if let Some(r) = &self.replay {
            if r.len() != sessions {
                return Err(Error::TrafficMismatch(format!(
                    "{} recorded traffics for {sessions} sessions",
                    r.len()
                )));
            }
        }
        Ok(())
    }
}

/// Smallest trial count accepted for an `epsilon`-quantile: `ceil(10/eps)`.
pub fn sample_floor(epsilon: f64) -> usize {
    (10.0 / epsilon - 1e-9).ceil() as usize
}

pub fn code_seed(master: u64, index: usize) -> u64 {
    seed::derive(master, &[stream::CODE, index as u64])
}

pub fn traffic_seed(master: u64, index: usize) -> u64 {
    seed::derive(master, &[stream::TRAFFIC, index as u64])
}

pub fn avg_traffic_seed(master: u64, code: usize, traffic: usize) -> u64 {
    seed::derive(master, &[stream::AVG_TRAFFIC, code as u64, traffic as u64])
}

pub fn traffic_from_seed(cfg: &NetworkConfig, seed: u64) -> Result<TrafficRealization> {
    sample_traffic(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Traffic of raw trial `i`.
pub fn raw_traffic(plan: &ExperimentPlan, i: usize) -> Result<TrafficRealization> {
    match &plan.replay {
        Some(r) => Ok(r[i].clone()),
        None => traffic_from_seed(&plan.cfg, traffic_seed(plan.master_seed, i)),
    }
}

/// Traffic `t` of code `c` in the average-delay grid.
pub fn grid_traffic(plan: &ExperimentPlan, c: usize, t: usize) -> Result<TrafficRealization> {
    match &plan.replay {
        Some(r) => Ok(r[c * plan.traffics_per_code + t].clone()),
        None => traffic_from_seed(&plan.cfg, avg_traffic_seed(plan.master_seed, c, t)),
    }
}

fn par_map<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Runs the raw-delay sessions of `plan` and maps each trace through `f`,
/// returning results in trial order.
pub fn map_sessions<T, F>(plan: &ExperimentPlan, opts: &SessionOptions, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, SessionTrace) -> T + Sync + Send,
{
    plan.check_common()?;
    plan.check_replay(plan.trials)?;
    par_map(plan.workers, plan.trials, |i| {
        let tr = raw_traffic(plan, i)?;
        let mut trace = run_session(&plan.cfg, &tr, code_seed(plan.master_seed, i), opts)?;
        trace.traffic_seed = plan
            .replay
            .is_none()
            .then(|| traffic_seed(plan.master_seed, i));
        Ok(f(i, trace))
    })
}

/// Coding delays of every session of the average-delay grid, `codes` rows of
/// `traffics_per_code` each.
pub fn delay_grid(plan: &ExperimentPlan) -> Result<Vec<Vec<CodingDelay>>> {
    plan.check_common()?;
    if plan.codes == 0 || plan.traffics_per_code == 0 {
        return Err(Error::InvalidParameter(
            "average delay needs at least one code and one traffic per code".into(),
        ));
    }
    let t = plan.traffics_per_code;
    plan.check_replay(plan.codes * t)?;
    let flat = par_map(plan.workers, plan.codes * t, |i| {
        let (c, j) = (i / t, i % t);
        let tr = grid_traffic(plan, c, j)?;
        let trace = run_session(
            &plan.cfg,
            &tr,
            code_seed(plan.master_seed, c),
            &SessionOptions::delay_only(),
        )?;
        Ok(trace.coding_delay())
    })?;
    Ok(flat.chunks(t).map(<[CodingDelay]>::to_vec).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    Raw,
    Average,
}

impl EstimateMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimateMode::Raw => "raw",
            EstimateMode::Average => "average",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayEstimate {
    pub mode: EstimateMode,
    pub k: usize,
    pub links: usize,
    pub epsilon: f64,
    /// Quantile sample count: sessions (raw) or codes (average).
    pub samples: usize,
    /// Traffics averaged per code; 1 for raw estimates.
    pub traffics_per_code: usize,
    pub point: f64,
    pub upper_ci: f64,
    pub confidence: f64,
    /// Sessions that hit the horizon before decoding.
    pub timeouts: usize,
    /// False when more than `eps * samples / 2` samples are infinite.
    pub valid: bool,
    /// Set when the sample count is below [`sample_floor`].
    pub low_confidence: bool,
}

/// Order statistic at 1-based index `ceil(q * M)` of ascending `sorted`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidParameter(
            "quantile of an empty sample".into(),
        ));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile level {q} outside (0,1]"
        )));
    }
    Ok(sorted[quantile_index(sorted.len(), q) - 1])
}

fn quantile_index(m: usize, q: f64) -> usize {
    ((q * m as f64 - 1e-9).ceil() as usize).clamp(1, m)
}

/// One-sided upper confidence bound for the `q`-quantile: the order statistic
/// `X_(u)` with the smallest `u` such that `P(Bin(M, q) <= u - 1) >= conf`,
/// or `+inf` when no such `u <= M` exists.
pub fn quantile_upper_ci(sorted: &[f64], q: f64, confidence: f64) -> Result<f64> {
    let point = quantile(sorted, q)?;
    let m = sorted.len();
    if q >= 1.0 {
        return Ok(point);
    }
    let bin = Binomial::new(q, m as u64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut u = quantile_index(m, q);
    while u <= m && bin.cdf(u as u64 - 1) < confidence {
        u += 1;
    }
    Ok(if u > m {
        f64::INFINITY
    } else {
        sorted[u - 1].max(point)
    })
}

fn summarize(
    mode: EstimateMode,
    plan: &ExperimentPlan,
    mut values: Vec<f64>,
    timeouts: usize,
    traffics_per_code: usize,
) -> Result<DelayEstimate> {
    values.sort_by(f64::total_cmp);
    let q = 1.0 - plan.epsilon;
    let m = values.len();
    let infinite = values.iter().filter(|v| v.is_infinite()).count();
    Ok(DelayEstimate {
        mode,
        k: plan.cfg.messages,
        links: plan.cfg.links,
        epsilon: plan.epsilon,
        samples: m,
        traffics_per_code,
        point: quantile(&values, q)?,
        upper_ci: quantile_upper_ci(&values, q, plan.confidence)?,
        confidence: plan.confidence,
        timeouts,
        valid: infinite as f64 <= plan.epsilon * m as f64 / 2.0,
        low_confidence: m < sample_floor(plan.epsilon),
    })
}

/// Raw estimate: the `(1 - eps)`-quantile of `plan.trials` coding delays.
pub fn estimate_coding_delay(plan: &ExperimentPlan) -> Result<DelayEstimate> {
    plan.check_common()?;
    let floor = sample_floor(plan.epsilon);
    if plan.trials < floor {
        return Err(Error::SampleSizeFloor {
            trials: plan.trials,
            floor,
            epsilon: plan.epsilon,
        });
    }
    let delays = map_sessions(plan, &SessionOptions::delay_only(), |_, t| t.coding_delay())?;
    let timeouts = delays.iter().filter(|d| d.is_timeout()).count();
    summarize(
        EstimateMode::Raw,
        plan,
        delays.into_iter().map(CodingDelay::value).collect(),
        timeouts,
        1,
    )
}

/// Average estimate: the `(1 - eps)`-quantile over codes of each code's mean
/// delay across its traffics.
pub fn estimate_avg_coding_delay(plan: &ExperimentPlan) -> Result<DelayEstimate> {
    avg_from_grid(plan, &delay_grid(plan)?)
}

/// Average estimate from an already computed [`delay_grid`].
pub fn avg_from_grid(plan: &ExperimentPlan, grid: &[Vec<CodingDelay>]) -> Result<DelayEstimate> {
    plan.check_common()?;
    let timeouts = grid.iter().flatten().filter(|d| d.is_timeout()).count();
    let means = grid
        .iter()
        .map(|row| row.iter().map(|d| d.value()).sum::<f64>() / row.len() as f64)
        .collect();
    let t = grid.first().map_or(0, Vec::len);
    summarize(EstimateMode::Average, plan, means, timeouts, t)
}

/// Raw estimate pooled over every session of a [`delay_grid`]. Sessions of
/// one code share coefficients, so this matches the grid's average estimate
/// seed for seed.
pub fn raw_from_grid(plan: &ExperimentPlan, grid: &[Vec<CodingDelay>]) -> Result<DelayEstimate> {
    plan.check_common()?;
    let delays: Vec<CodingDelay> = grid.iter().flatten().copied().collect();
    let timeouts = delays.iter().filter(|d| d.is_timeout()).count();
    summarize(
        EstimateMode::Raw,
        plan,
        delays.into_iter().map(CodingDelay::value).collect(),
        timeouts,
        1,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AssertionMode {
    /// Fail when `point > bound * multiplier`.
    Assert {
        multiplier: f64,
    },
    ReportOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Report,
    /// Too many timeouts to trust the estimate.
    Invalid,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Report => "report",
            Verdict::Invalid => "invalid",
        }
    }

    /// Whether this verdict makes an assert-mode run exit nonzero.
    pub fn is_failure(self) -> bool {
        matches!(self, Verdict::Fail | Verdict::Invalid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub estimate: DelayEstimate,
    pub bound_id: String,
    pub bound_value: f64,
    /// `bound / point`.
    pub slack: f64,
    pub mode: AssertionMode,
    pub verdict: Verdict,
}

/// Compares an estimate with a bound for the same `(k, L, eps)`.
pub fn compare(
    estimate: &DelayEstimate,
    bound: &BoundResult,
    mode: AssertionMode,
) -> Result<ReportRow> {
    let mismatch = |what: &str, a: String, b: String| {
        Err(Error::ParameterMismatch(format!(
            "{what}: estimate {a}, bound {b}"
        )))
    };
    if estimate.k != bound.k {
        return mismatch("k", estimate.k.to_string(), bound.k.to_string());
    }
    if estimate.links != bound.links {
        return mismatch("L", estimate.links.to_string(), bound.links.to_string());
    }
    if (estimate.epsilon - bound.epsilon).abs() > 1e-12 {
        return mismatch(
            "epsilon",
            estimate.epsilon.to_string(),
            bound.epsilon.to_string(),
        );
    }
    let verdict = match mode {
        _ if !estimate.valid && matches!(mode, AssertionMode::Assert { .. }) => Verdict::Invalid,
        AssertionMode::ReportOnly => Verdict::Report,
        AssertionMode::Assert { multiplier } => {
            if estimate.point <= bound.value * multiplier {
                Verdict::Pass
            } else {
                Verdict::Fail
            }
        }
    };
    Ok(ReportRow {
        estimate: estimate.clone(),
        bound_id: bound.id.name().to_string(),
        bound_value: bound.value,
        slack: bound.value / estimate.point,
        mode,
        verdict,
    })
}
