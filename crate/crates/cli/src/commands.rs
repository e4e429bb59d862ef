use std::path::{Path, PathBuf};

use linecode::bounds::{self, BoundId, BoundQuery, BoundResult};
use linecode::delay_stats::{
    self, avg_from_grid, compare, delay_grid, estimate_avg_coding_delay, estimate_coding_delay,
    raw_from_grid, DelayEstimate, EstimateMode, ExperimentPlan, Verdict,
};
use linecode::dense_code::{run_session, SessionOptions};
use linecode::rank_laws::{self, StructuredSpec, DEFAULT_CONFIDENCE_DELTA, EXACT_FREE_BITS_LIMIT};
use linecode::seed;
use linecode::traffic::{Loss, NetworkConfig, Schedule, TrafficRealization};
use rayon::prelude::*;

use crate::config::{Resolved, SimMode};

pub struct Output {
    pub text: String,
    pub failed: bool,
}

pub fn run(r: &Resolved) -> Result<Output, String> {
    let (body, failed) = match r.command {
        "validate-lemmas" => validate_lemmas(r)?,
        "simulate" => simulate(r)?,
        "bounds-table" => (bounds_table(r)?, false),
        "compare" => compare_cmd(r)?,
        other => return Err(format!("unknown command {other}")),
    };
    Ok(Output {
        text: r.header() + &body,
        failed,
    })
}

/// One CSV record with LF ending, quoting only where needed.
fn csv_row(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x}")
    }
}

fn fixed(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        num(x)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| format!("worker pool: {e}"))
}

fn err(e: linecode::error::Error) -> String {
    e.to_string()
}

struct LemmaRow {
    law: String,
    spec: String,
    gamma: String,
    threshold: usize,
    trials: usize,
    failures: usize,
    empirical: f64,
    exact: Option<f64>,
    bound: f64,
    hoeffding: f64,
    verdict: Verdict,
}

impl LemmaRow {
    fn csv(&self) -> String {
        csv_row(&[
            self.law.clone(),
            self.spec.clone(),
            self.gamma.clone(),
            self.threshold.to_string(),
            self.trials.to_string(),
            self.failures.to_string(),
            fixed(self.empirical),
            self.exact.map_or("none".to_string(), fixed),
            fixed(self.bound),
            fixed(self.hoeffding),
            self.verdict.name().to_string(),
        ])
    }
}

fn lemma_verdict(
    r: &Resolved,
    empirical: f64,
    slack: f64,
    exact: Option<f64>,
    bound: f64,
) -> Verdict {
    let ok = empirical <= bound + slack && exact.is_none_or(|e| e <= bound);
    match (r.report_only, ok) {
        (true, _) => Verdict::Report,
        (false, true) => Verdict::Pass,
        (false, false) => Verdict::Fail,
    }
}

/// Rows for one structured spec: every deficiency up to the grid maximum,
/// all from one shared rank histogram.
fn spec_rows(
    r: &Resolved,
    law: &str,
    spec: &StructuredSpec,
    gammas: &[usize],
    bound_of: &dyn Fn(usize) -> linecode::error::Result<f64>,
    index: usize,
) -> Result<(Vec<LemmaRow>, bool), String> {
    let grid = r.lemma_grid.as_ref().expect("lemma grid resolved");
    let (trials, exact) = (grid.trials, grid.exact);
    let mut rng = seed::rng_for(r.seed, &[index as u64]);
    let hist = rank_laws::rank_histogram(spec, trials, &mut rng).map_err(err)?;
    let dist = if exact && spec.free_bits() <= EXACT_FREE_BITS_LIMIT {
        Some(rank_laws::exact_rank_distribution(spec).map_err(err)?)
    } else {
        None
    };
    let full = spec.full_rank();
    let mut rows = Vec::new();
    for &gamma in gammas {
        let threshold = full - gamma;
        let est = rank_laws::deficiency_from_histogram(&hist, threshold, DEFAULT_CONFIDENCE_DELTA);
        let exact_p = dist.as_ref().map(|d| d.iter().take(threshold).sum::<f64>());
        let bound = bound_of(gamma).map_err(err)?;
        rows.push(LemmaRow {
            law: law.to_string(),
            spec: spec.describe(),
            gamma: gamma.to_string(),
            threshold,
            trials: est.trials,
            failures: est.failures,
            empirical: est.empirical_prob,
            exact: exact_p,
            bound,
            hoeffding: est.hoeffding_slack,
            verdict: lemma_verdict(r, est.empirical_prob, est.hoeffding_slack, exact_p, bound),
        });
    }
    Ok((rows, exact && dist.is_none()))
}

fn validate_lemmas(r: &Resolved) -> Result<(String, bool), String> {
    let grid = r
        .lemma_grid
        .as_ref()
        .ok_or("validate-lemmas needs a lemma grid")?;
    let specs: Vec<StructuredSpec> = grid.specs.iter().map(|g| g.structured()).collect();
    for s in &specs {
        s.validate().map_err(err)?;
    }
    let dense: Vec<(StructuredSpec, usize, f64)> = grid
        .dense_rank
        .iter()
        .map(|row| {
            let k = rank_laws::dense_rank_threshold(row.n, row.epsilon).map_err(err)?;
            if k == 0 {
                return Err(format!(
                    "dense-rank row n={} eps={} leaves no columns",
                    row.n, row.epsilon
                ));
            }
            Ok((
                StructuredSpec::Vertical {
                    r: row.n,
                    widths: vec![k],
                },
                k,
                row.epsilon,
            ))
        })
        .collect::<Result<_, String>>()?;
    let cells = specs.len() + dense.len();
    let results: Vec<Result<(Vec<LemmaRow>, bool), String>> = pool(r.workers)?.install(|| {
        (0..cells)
            .into_par_iter()
            .map(|i| {
                if i < specs.len() {
                    let spec = &specs[i];
                    let top = grid.max_gamma.min(spec.full_rank() - 1);
                    let gammas: Vec<usize> = (0..=top).collect();
                    spec_rows(
                        r,
                        spec.family(),
                        spec,
                        &gammas,
                        &|g| Ok(rank_laws::bound_for(spec, g)?.value()),
                        i,
                    )
                } else {
                    let (spec, k, eps) = &dense[i - specs.len()];
                    let n = spec.nrows();
                    let (mut rows, downgraded) = spec_rows(
                        r,
                        "dense-rank",
                        spec,
                        &[0],
                        &|_| Ok(rank_laws::bound_dense_rank(n, *k)?.value()),
                        i,
                    )?;
                    rows[0].gamma = format!("eps={eps}");
                    Ok((rows, downgraded))
                }
            })
            .collect()
    });
    let mut out = csv_row(
        &[
            "law",
            "spec",
            "gamma",
            "threshold",
            "trials",
            "failures",
            "empirical",
            "exact",
            "bound",
            "hoeffding",
            "verdict",
        ]
        .map(String::from),
    );
    let mut failed = false;
    let mut downgraded = 0;
    for res in results {
        let (rows, down) = res?;
        downgraded += usize::from(down);
        for row in rows {
            failed |= row.verdict.is_failure();
            out.push_str(&row.csv());
        }
    }
    if downgraded > 0 {
        eprintln!(
            "linecode: {downgraded} specs exceed {EXACT_FREE_BITS_LIMIT} free bits; Monte Carlo only for those"
        );
    }
    Ok((out, failed))
}

const SIM_COLUMNS: [&str; 15] = [
    "k",
    "L",
    "schedule",
    "loss",
    "p_or_lambda",
    "epsilon",
    "mode",
    "samples",
    "point",
    "upper_ci",
    "timeouts",
    "bound_id",
    "bound_value",
    "slack",
    "verdict",
];

fn sim_row(
    cfg: &NetworkConfig,
    est: &DelayEstimate,
    bound_id: &str,
    bound_value: Option<f64>,
    verdict: Verdict,
) -> String {
    let rates = cfg
        .effective_rates()
        .iter()
        .map(|x| num(*x))
        .collect::<Vec<_>>()
        .join(";");
    csv_row(&[
        cfg.messages.to_string(),
        cfg.links.to_string(),
        cfg.schedule_name().to_string(),
        cfg.loss_name().to_string(),
        rates,
        num(est.epsilon),
        est.mode.name().to_string(),
        est.samples.to_string(),
        num(est.point),
        num(est.upper_ci),
        est.timeouts.to_string(),
        bound_id.to_string(),
        bound_value.map_or(String::new(), fixed),
        bound_value.map_or(String::new(), |b| fixed(b / est.point)),
        verdict.name().to_string(),
    ])
}

/// Bounds that apply to `cfg` for an estimate of the given kind.
fn applicable(cfg: &NetworkConfig, mode: EstimateMode) -> Vec<BoundId> {
    let rates = cfg.effective_rates();
    let identical = rates.iter().all(|&x| x == rates[0]);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let unique_min = rates.len() >= 2 && rates.iter().filter(|&&x| x == min).count() == 1;
    let lossless = matches!(cfg.schedule, Schedule::Regular) && matches!(cfg.loss, Loss::Lossless);
    let mut ids = Vec::new();
    match mode {
        EstimateMode::Raw => {
            if lossless {
                ids.push(BoundId::Thm1);
            }
            if identical {
                ids.push(BoundId::Thm2);
            }
            if unique_min {
                ids.push(BoundId::Thm4);
            }
        }
        EstimateMode::Average => {
            if identical {
                ids.push(BoundId::Thm3);
            }
            if unique_min {
                ids.push(BoundId::Thm5);
            }
        }
    }
    ids
}

fn bound_query(r: &Resolved, cfg: &NetworkConfig) -> BoundQuery {
    let f_k = r
        .f_k
        .unwrap_or_else(|| (cfg.messages as f64).log2().max(f64::MIN_POSITIVE));
    BoundQuery::new(cfg.messages, cfg.links, r.epsilon)
        .with_rates(cfg.effective_rates())
        .with_f_k(f_k)
}

/// Report rows for one estimate against every applicable bound.
fn estimate_rows(
    r: &Resolved,
    cfg: &NetworkConfig,
    est: &DelayEstimate,
) -> Result<(String, bool), String> {
    if est.low_confidence {
        eprintln!(
            "linecode: {} estimate uses {} samples, below the floor {}",
            est.mode.name(),
            est.samples,
            delay_stats::sample_floor(est.epsilon)
        );
    }
    let q = bound_query(r, cfg);
    let mut out = String::new();
    let mut failed = false;
    let ids = applicable(cfg, est.mode);
    let mut any = false;
    for id in ids {
        let bound: BoundResult = match bounds::evaluate(id, &q) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("linecode: {} not evaluated: {e}", id.name());
                continue;
            }
        };
        let row = compare(est, &bound, r.assertion(id.name())).map_err(err)?;
        failed |= row.verdict.is_failure();
        out.push_str(&sim_row(
            cfg,
            est,
            &row.bound_id,
            Some(row.bound_value),
            row.verdict,
        ));
        any = true;
    }
    if !any {
        let verdict = if !est.valid && !r.report_only {
            Verdict::Invalid
        } else {
            Verdict::Report
        };
        failed |= verdict.is_failure();
        out.push_str(&sim_row(cfg, est, "none", None, verdict));
    }
    Ok((out, failed))
}

fn trial_file(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("trial_{i:06}.tsv"))
}

fn grid_file(dir: &Path, c: usize, t: usize) -> PathBuf {
    dir.join(format!("code_{c:06}_{t:06}.tsv"))
}

fn plan_for(r: &Resolved) -> Result<ExperimentPlan, String> {
    let cfg = r.cfg.clone().ok_or("network config missing")?;
    let mut plan = ExperimentPlan::new(cfg, r.epsilon, r.seed)
        .with_trials(r.trials)
        .with_codes(r.codes, r.traffics_per_code)
        .with_workers(r.workers);
    plan.confidence = r.confidence;
    Ok(plan)
}

fn record_raw(plan: &ExperimentPlan, dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for i in 0..plan.trials {
        let tr = delay_stats::raw_traffic(plan, i).map_err(err)?;
        let path = trial_file(dir, i);
        tr.write_file(&plan.cfg, &path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn record_grid(plan: &ExperimentPlan, dir: &Path) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for c in 0..plan.codes {
        for t in 0..plan.traffics_per_code {
            let tr = delay_stats::grid_traffic(plan, c, t).map_err(err)?;
            let path = grid_file(dir, c, t);
            tr.write_file(&plan.cfg, &path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    Ok(())
}

fn read_all(
    cfg: &NetworkConfig,
    paths: impl Iterator<Item = PathBuf>,
) -> Result<Vec<TrafficRealization>, String> {
    paths
        .map(|p| {
            TrafficRealization::read_file(cfg, &p).map_err(|e| format!("{}: {e}", p.display()))
        })
        .collect()
}

fn replay_raw(plan: &ExperimentPlan, dir: &Path) -> Result<Vec<TrafficRealization>, String> {
    read_all(&plan.cfg, (0..plan.trials).map(|i| trial_file(dir, i)))
}

fn replay_grid(plan: &ExperimentPlan, dir: &Path) -> Result<Vec<TrafficRealization>, String> {
    let t = plan.traffics_per_code;
    read_all(
        &plan.cfg,
        (0..plan.codes * t).map(|i| grid_file(dir, i / t, i % t)),
    )
}

fn export_trace(plan: &ExperimentPlan, path: &Path) -> Result<(), String> {
    let tr = delay_stats::raw_traffic(plan, 0).map_err(err)?;
    let trace = run_session(
        &plan.cfg,
        &tr,
        delay_stats::code_seed(plan.master_seed, 0),
        &SessionOptions::full(),
    )
    .map_err(err)?;
    let text = trace.export_events().map_err(err)?;
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn simulate(r: &Resolved) -> Result<(String, bool), String> {
    let plan = plan_for(r)?;
    let raw = matches!(r.mode, SimMode::Raw | SimMode::Both);
    let avg = matches!(r.mode, SimMode::Average | SimMode::Both);
    if let Some(dir) = &r.record_traffic {
        if raw {
            record_raw(&plan, dir)?;
        }
        if avg {
            record_grid(&plan, dir)?;
        }
    }
    let mut out = csv_row(&SIM_COLUMNS.map(String::from));
    let mut failed = false;
    if raw {
        let mut p = plan.clone();
        if let Some(dir) = &r.replay_traffic {
            p.replay = Some(replay_raw(&plan, dir)?);
        }
        if let Some(path) = &r.export_trace {
            export_trace(&p, path)?;
        }
        let est = estimate_coding_delay(&p).map_err(err)?;
        let (rows, f) = estimate_rows(r, &plan.cfg, &est)?;
        out.push_str(&rows);
        failed |= f;
    }
    if avg {
        let mut p = plan.clone();
        if let Some(dir) = &r.replay_traffic {
            p.replay = Some(replay_grid(&plan, dir)?);
        }
        if !raw {
            if let Some(path) = &r.export_trace {
                export_trace(&plan, path)?;
            }
        }
        let est = estimate_avg_coding_delay(&p).map_err(err)?;
        let (rows, f) = estimate_rows(r, &plan.cfg, &est)?;
        out.push_str(&rows);
        failed |= f;
    }
    Ok((out, failed))
}

fn compare_cmd(r: &Resolved) -> Result<(String, bool), String> {
    let mut plan = plan_for(r)?;
    if let Some(dir) = &r.record_traffic {
        record_grid(&plan, dir)?;
    }
    if let Some(dir) = &r.replay_traffic {
        plan.replay = Some(replay_grid(&plan, dir)?);
    }
    let grid = delay_grid(&plan).map_err(err)?;
    let raw = raw_from_grid(&plan, &grid).map_err(err)?;
    let avg = avg_from_grid(&plan, &grid).map_err(err)?;
    let mut out = csv_row(&SIM_COLUMNS.map(String::from));
    let mut failed = false;
    for est in [&raw, &avg] {
        let (rows, f) = estimate_rows(r, &plan.cfg, est)?;
        out.push_str(&rows);
        failed |= f;
    }
    let verdict = match (r.report_only, avg.point <= raw.point) {
        (true, _) => Verdict::Report,
        (false, true) => Verdict::Pass,
        (false, false) => Verdict::Fail,
    };
    failed |= verdict.is_failure();
    out.push_str(&sim_row(
        &plan.cfg,
        &avg,
        "raw-quantile",
        Some(raw.point),
        verdict,
    ));
    Ok((out, failed))
}

const BOUND_COLUMNS: [&str; 15] = [
    "row",
    "k",
    "L",
    "horizon",
    "epsilon",
    "rates",
    "w",
    "w_raw",
    "clamped",
    "asymptotic",
    "value",
    "thm1_value",
    "components",
    "notes",
    "detail",
];

fn components(c: &[(&str, f64)]) -> String {
    c.iter()
        .map(|(n, v)| format!("{n}={}", fixed(*v)))
        .collect::<Vec<_>>()
        .join(";")
}

fn padded(rates: &[f64], links: usize) -> Vec<f64> {
    let last = *rates.last().unwrap_or(&1.0);
    (0..links)
        .map(|i| rates.get(i).copied().unwrap_or(last))
        .collect()
}

fn join_rates(rates: &[f64]) -> String {
    rates.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

fn bound_row(b: &BoundResult, rates: &[f64]) -> String {
    csv_row(&[
        b.id.name().to_string(),
        b.k.to_string(),
        b.links.to_string(),
        String::new(),
        num(b.epsilon),
        join_rates(rates),
        b.w_used().map_or(String::new(), |w| w.to_string()),
        b.w.and_then(|w| w.raw).map_or(String::new(), fixed),
        b.clamped().to_string(),
        b.asymptotic.to_string(),
        fixed(b.value),
        b.thm1_value.map_or(String::new(), fixed),
        components(&b.components),
        b.notes.join("; "),
        String::new(),
    ])
}

#[allow(clippy::too_many_arguments)]
fn lemma_row(
    id: &str,
    links: usize,
    horizon: u64,
    eps: f64,
    rates: &[f64],
    w: Option<&bounds::WChoice>,
    value: f64,
    comps: &str,
    notes: &str,
    detail: &str,
) -> String {
    csv_row(&[
        id.to_string(),
        String::new(),
        links.to_string(),
        horizon.to_string(),
        num(eps),
        join_rates(rates),
        w.map_or(String::new(), |w| w.w.to_string()),
        w.and_then(|w| w.raw).map_or(String::new(), fixed),
        w.is_some_and(|w| w.clamped).to_string(),
        "false".to_string(),
        fixed(value),
        String::new(),
        comps.to_string(),
        notes.to_string(),
        detail.to_string(),
    ])
}

fn density_rows(out: &mut String, links: usize, horizon: u64, eps: f64, rates: &[f64]) {
    let p = rates[0];
    if !rates.iter().all(|&x| x == p) {
        return;
    }
    if p == 1.0 {
        if let Ok(v) = bounds::lemma5_bound(horizon, links, eps) {
            out.push_str(&lemma_row(
                "lemma5", links, horizon, eps, rates, None, v as f64, "", "", "",
            ));
        }
    }
    let Ok(l11) = bounds::lemma11_bound(horizon, links, p, eps) else {
        return;
    };
    out.push_str(&lemma_row(
        "lemma11",
        links,
        horizon,
        eps,
        rates,
        Some(&l11.w),
        l11.value as f64,
        &components(&l11.terms),
        &l11.notes.join("; "),
        &format!("phi={};w_T={};r={}", fixed(l11.phi), l11.w_t, l11.gamma.r),
    ));
    let r = l11.gamma.r;
    for i in 2..=links {
        if let Ok(v) = bounds::lemma9_bound(r, i, eps) {
            out.push_str(&lemma_row(
                "lemma9",
                links,
                horizon,
                eps,
                rates,
                Some(&l11.w),
                v as f64,
                "",
                "",
                &format!("r={r};i={i}"),
            ));
        }
        if let Ok(l10) = bounds::lemma10_bound(r, i, 2, eps, Some(l11.w_t)) {
            let notes = if l10.in_regime {
                ""
            } else {
                "outside the log(w_T/eps) <= r/4 regime"
            };
            out.push_str(&lemma_row(
                "lemma10",
                links,
                horizon,
                eps,
                rates,
                Some(&l11.w),
                l10.value as f64,
                &format!("o={};loss={}", fixed(l10.o), fixed(l10.loss)),
                notes,
                &format!("r={r};i={i};j=2"),
            ));
        }
    }
}

fn bounds_table(r: &Resolved) -> Result<String, String> {
    let grid = r
        .bounds_grid
        .as_ref()
        .ok_or("bounds-table needs a bounds grid")?;
    let ids: Vec<BoundId> = grid
        .bounds
        .iter()
        .map(|b| BoundId::parse(b).ok_or_else(|| format!("unknown bound {b:?}")))
        .collect::<Result<_, _>>()?;
    let mut out = csv_row(&BOUND_COLUMNS.map(String::from));
    for &links in &grid.links {
        for &eps in &grid.epsilon {
            for rates in &grid.rates {
                let rates = padded(rates, links);
                for &id in &ids {
                    for &k in &grid.k {
                        let q = BoundQuery::new(k, links, eps)
                            .with_rates(rates.clone())
                            .with_f_k(r.f_k.unwrap_or_else(|| (k as f64).log2()));
                        if let Ok(b) = bounds::evaluate(id, &q) {
                            out.push_str(&bound_row(&b, &rates));
                        }
                    }
                }
                for &h in &grid.horizons {
                    density_rows(&mut out, links, h, eps, &rates);
                }
            }
        }
    }
    Ok(out)
}
