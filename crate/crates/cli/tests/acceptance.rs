//! Acceptance criteria A1-A9. Each criterion prints one `A<n> PASS|FAIL`
//! line; the run exits nonzero if any fails.
//!
//! Run with `cargo test -p linecode-cli --test acceptance`.

use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::OnceLock;

use linecode::bounds::{self, BoundId, BoundQuery};
use linecode::delay_stats::{self, avg_from_grid, delay_grid, raw_from_grid, ExperimentPlan};
use linecode::dense_code::{sink_rank_at, CodingDelay, SessionOptions};
use linecode::gf2::EchelonBasis;
use linecode::rank_laws::{self, StructuredSpec};
use linecode::traffic::{Loss, NetworkConfig};
use statrs::distribution::{Binomial, DiscreteCDF};

static FAILED: AtomicBool = AtomicBool::new(false);

fn report(id: &str, ok: bool, detail: String) {
    println!("{id} {} {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        FAILED.store(true, Ordering::SeqCst);
    }
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("KS reference", ks_statistic_reference_values),
        ("A1", a1_structured_rank_monte_carlo),
        ("A2", a2_exact_oracles),
        ("A3", a3_lossless_delay_quantile),
        ("A4", a4_sink_rank_at_horizon),
        ("A5", a5_average_delay_identical_links),
        ("A6", a6_poisson_thinning),
        ("A7", a7_tracked_density_has_rank),
        ("A8", a8_average_not_above_raw),
        ("A9", a9_worker_count_never_changes_output),
    ];
    for (id, check) in criteria {
        if std::panic::catch_unwind(check).is_err() {
            println!("{id} FAIL (panicked)");
            FAILED.store(true, Ordering::SeqCst);
        }
    }
    if FAILED.load(Ordering::SeqCst) {
        std::process::exit(1);
    }
}

fn linecode(args: &[&str]) -> (Option<i32>, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_linecode"))
        .args(args)
        .env_remove("LINECODE_WORKERS")
        .env_remove("LINECODE_SEED")
        .output()
        .expect("binary runs");
    (o.status.code(), String::from_utf8(o.stdout).unwrap())
}

struct LemmaCell {
    law: String,
    empirical: f64,
    exact: Option<f64>,
    bound: f64,
    hoeffding: f64,
    trials: usize,
    verdict: String,
}

/// The default validate-lemmas run: the full structured-matrix grid at 10^5
/// samples per cell, with exact enumeration where it fits.
fn lemma_run() -> &'static (Option<i32>, Vec<LemmaCell>, f64) {
    static RUN: OnceLock<(Option<i32>, Vec<LemmaCell>, f64)> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = std::time::Instant::now();
        let (code, text) = linecode(&["validate-lemmas", "--seed", "20240601"]);
        let secs = start.elapsed().as_secs_f64();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let cells = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                let f = |i: usize| r[i].parse::<f64>().unwrap();
                LemmaCell {
                    law: r[0].to_string(),
                    trials: r[4].parse().unwrap(),
                    empirical: f(6),
                    exact: (&r[7] != "none").then(|| f(7)),
                    bound: f(8),
                    hoeffding: f(9),
                    verdict: r[10].to_string(),
                }
            })
            .collect();
        (code, cells, secs)
    })
}

fn a1_structured_rank_monte_carlo() {
    let (code, cells, secs) = lemma_run();
    let structured: Vec<&LemmaCell> = cells.iter().filter(|c| c.law != "dense-rank").collect();
    let bad = structured
        .iter()
        .filter(|c| c.trials != 100_000 || c.empirical > c.bound + c.hoeffding)
        .count();
    let families = ["single", "square", "vertical", "horizontal"]
        .iter()
        .all(|f| structured.iter().any(|c| c.law == *f));
    report(
        "A1",
        bad == 0 && families && *code == Some(0) && structured.iter().all(|c| c.verdict == "pass"),
        format!(
            "{} cells, {bad} above bound + slack, {secs:.1}s",
            structured.len()
        ),
    );
}

fn a2_exact_oracles() {
    let (_, cells, _) = lemma_run();
    let exact: Vec<&LemmaCell> = cells.iter().filter(|c| c.exact.is_some()).collect();
    let above = exact.iter().filter(|c| c.exact.unwrap() > c.bound).count();
    let off = exact
        .iter()
        .filter(|c| (c.empirical - c.exact.unwrap()).abs() > c.hoeffding)
        .count();
    let dense = rank_laws::exact_deficiency(
        &StructuredSpec::Vertical {
            r: 2,
            widths: vec![2],
        },
        2,
    )
    .unwrap();
    let single =
        rank_laws::exact_deficiency(&StructuredSpec::Single { rows: 2, cols: 2 }, 2).unwrap();
    let square = rank_laws::exact_deficiency(
        &StructuredSpec::Square {
            blocks: 2,
            block: 1,
        },
        2,
    )
    .unwrap();
    // Fully dense: 10 of 16 matrices are singular. The lower-triangular
    // layout [[a,0],[b,c]] is invertible only for a = c = 1.
    let oracle_dense = singular_fraction([true; 4]);
    let oracle_tri = singular_fraction([true, false, true, true]);
    let small = dense == oracle_dense
        && oracle_dense == 0.625
        && single == oracle_tri
        && square == oracle_tri
        && oracle_tri == 0.75;
    report(
        "A2",
        !exact.is_empty() && above == 0 && off == 0 && small,
        format!(
            "{} exact cells, {above} above bound, {off} outside slack; 2x2 dense {dense}, single {single}, square {square}",
            exact.len()
        ),
    );
}

/// Fraction of singular 2x2 matrices `[[a,b],[c,d]]` over GF(2) whose
/// entries are free where `free` is set and zero elsewhere.
fn singular_fraction(free: [bool; 4]) -> f64 {
    let mut singular = 0;
    let mut total = 0;
    for bits in 0u8..16 {
        let e: Vec<u8> = (0..4).map(|i| (bits >> i) & 1).collect();
        if (0..4).any(|i| !free[i] && e[i] == 1) {
            continue;
        }
        total += 1;
        if (e[0] & e[3]) ^ (e[1] & e[2]) == 0 {
            singular += 1;
        }
    }
    singular as f64 / total as f64
}

fn a3_lossless_delay_quantile() {
    let cfg = NetworkConfig::regular_lossless(4, 128).unwrap();
    let plan = ExperimentPlan::new(cfg, 0.05, 3).with_trials(4000);
    let est = delay_stats::estimate_coding_delay(&plan).unwrap();
    let thm1 = bounds::thm1(&BoundQuery::new(128, 4, 0.05)).unwrap().value;
    report(
        "A3",
        est.valid && est.point <= 162.0 && est.point >= 131.0,
        format!("quantile {} in [131, 162], thm1 {thm1:.3}", est.point),
    );
}

/// Smallest count `c` with `Pr{Binomial(n, p) <= c} >= 1 - delta`.
fn binomial_upper(n: usize, p: f64, delta: f64) -> u64 {
    let b = Binomial::new(p, n as u64).unwrap();
    (0..=n as u64).find(|&c| b.cdf(c) >= 1.0 - delta).unwrap()
}

fn a4_sink_rank_at_horizon() {
    let eps = 0.05;
    let horizon = 256u64;
    let trials = 2000;
    let mut details = Vec::new();
    let mut ok = true;
    for links in [2, 4] {
        let cfg = NetworkConfig::regular_lossless(links, horizon as usize)
            .unwrap()
            .with_horizon(horizon as f64)
            .unwrap();
        let plan = ExperimentPlan::new(cfg, eps, 4 + links as u64).with_trials(trials);
        let threshold =
            bounds::lemma5_bound(horizon, links, eps).unwrap() as f64 - (1.0 / eps).log2();
        let opts = SessionOptions {
            track_density: false,
            stop_at_completion: false,
            keep_sink_vectors: false,
        };
        let ranks =
            delay_stats::map_sessions(&plan, &opts, |_, t| sink_rank_at(&t, horizon as f64))
                .unwrap();
        let below = ranks.iter().filter(|&&r| (r as f64) < threshold).count();
        let limit = binomial_upper(trials, 2.0 * eps, 1e-6);
        ok &= below as u64 <= limit;
        details.push(format!(
            "L={links}: {below}/{trials} below {threshold:.2} (limit {limit})"
        ));
    }
    report("A4", ok, details.join("; "));
}

/// The shared code/traffic grid of the identical-link Bernoulli cell.
fn a5_grid() -> &'static (ExperimentPlan, Vec<Vec<CodingDelay>>) {
    static GRID: OnceLock<(ExperimentPlan, Vec<Vec<CodingDelay>>)> = OnceLock::new();
    GRID.get_or_init(|| {
        let cfg = NetworkConfig::regular_bernoulli(2, 1024, vec![0.8; 2]).unwrap();
        let plan = ExperimentPlan::new(cfg, 0.05, 5).with_codes(200, 50);
        let grid = delay_grid(&plan).unwrap();
        (plan, grid)
    })
}

fn a5_average_delay_identical_links() {
    let (plan, grid) = a5_grid();
    let avg = avg_from_grid(plan, grid).unwrap();
    let raw = raw_from_grid(plan, grid).unwrap();
    let q = BoundQuery::new(1024, 2, 0.05).with_p(0.8).with_f_k(10.0);
    let thm3 = bounds::thm3(&q).unwrap().value;
    let mut logged = Vec::new();
    for id in [BoundId::Thm2, BoundId::Thm4, BoundId::Thm5] {
        let est = if id == BoundId::Thm2 { &raw } else { &avg };
        match bounds::evaluate(id, &q) {
            Ok(b) => logged.push(format!("{} slack {:.4}", id.name(), b.value / est.point)),
            Err(e) => logged.push(format!("{} n/a ({e})", id.name())),
        }
    }
    let floor = 1024.0 / 0.8 * 0.98;
    report(
        "A5",
        avg.valid && avg.point <= thm3 * 1.1 && avg.point >= floor,
        format!(
            "avg quantile {:.2} <= {:.2} (1.1 x thm3 {thm3:.2}) and >= {floor:.1}; report-only: {}",
            avg.point,
            thm3 * 1.1,
            logged.join(", ")
        ),
    );
}

fn delays(cfg: NetworkConfig, seed: u64, n: usize) -> Vec<f64> {
    let plan = ExperimentPlan::new(cfg, 0.05, seed).with_trials(n);
    let mut d = delay_stats::map_sessions(&plan, &SessionOptions::delay_only(), |_, t| {
        t.coding_delay().value()
    })
    .unwrap();
    d.sort_by(f64::total_cmp);
    d
}

/// Two-sample Kolmogorov-Smirnov statistic of sorted samples.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn ks_statistic_reference_values() {
    assert_eq!(ks_statistic(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
    assert_eq!(ks_statistic(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    assert_eq!(
        ks_statistic(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]),
        0.5
    );
}

fn a6_poisson_thinning() {
    let lossy = NetworkConfig::poisson(
        2,
        256,
        vec![0.8; 2],
        Loss::Bernoulli {
            success: vec![0.5, 0.5],
        },
    )
    .unwrap();
    let thin = NetworkConfig::poisson(2, 256, vec![0.4; 2], Loss::Lossless).unwrap();
    let a = delays(lossy, 61, 500);
    let b = delays(thin, 62, 500);
    let timeouts = a.iter().chain(&b).filter(|x| x.is_infinite()).count();
    let d = ks_statistic(&a, &b);
    let critical = 1.628 * (2.0f64 / 500.0).sqrt();
    report(
        "A6",
        timeouts == 0 && d < critical,
        format!("KS {d:.4} < {critical:.4}, {timeouts} timeouts"),
    );
}

fn a7_tracked_density_has_rank() {
    let k = 128;
    let cfg = NetworkConfig::regular_bernoulli(3, k, vec![0.7; 3]).unwrap();
    let plan = ExperimentPlan::new(cfg, 0.05, 7).with_trials(1000);
    let opts = SessionOptions {
        keep_sink_vectors: true,
        ..SessionOptions::full()
    };
    let outcome = delay_stats::map_sessions(&plan, &opts, |_, t| {
        let mut basis = EchelonBasis::new(k);
        let mut tracked = 0;
        let mut worst = i64::MAX;
        for p in t.sink_packets.as_ref().unwrap().iter().filter(|p| p.dense) {
            tracked += 1;
            basis.insert(&p.global).unwrap();
            worst = worst.min(basis.rank() as i64 - tracked.min(k) as i64);
        }
        (tracked, worst)
    })
    .unwrap();
    let failures = outcome.iter().filter(|(_, w)| *w < -10).count();
    let mean_tracked = outcome.iter().map(|o| o.0).sum::<usize>() as f64 / outcome.len() as f64;
    report(
        "A7",
        failures <= 3,
        format!("{failures}/1000 sessions lose more than 10 ranks; mean tracked {mean_tracked:.1}"),
    );
}

fn a8_average_not_above_raw() {
    let (plan, grid) = a5_grid();
    let avg = avg_from_grid(plan, grid).unwrap();
    let raw = raw_from_grid(plan, grid).unwrap();
    report(
        "A8",
        avg.point <= raw.point,
        format!(
            "average quantile {:.2} <= raw quantile {:.2}",
            avg.point, raw.point
        ),
    );
}

fn a9_worker_count_never_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    std::fs::write(
        &grid,
        r#"{"lemma_grid": {"specs": [{"family": "square", "w": 2, "r": 2},
            {"family": "vertical", "r": 3, "widths": [1, 2, 3]}], "dense_rank": [{"n": 16, "epsilon": 0.1}],
            "trials": 20000}}"#,
    )
    .unwrap();
    let g = grid.to_str().unwrap();
    let runs: [&[&str]; 5] = [
        &["validate-lemmas", "--config", g],
        &[
            "simulate",
            "--links",
            "3",
            "-k",
            "32",
            "--trials",
            "400",
            "--loss",
            "bernoulli",
            "--p",
            "0.7",
        ],
        &[
            "simulate",
            "--links",
            "2",
            "-k",
            "32",
            "--mode",
            "average",
            "--codes",
            "200",
            "--traffics-per-code",
            "5",
            "--schedule",
            "poisson",
            "--lambda",
            "0.9",
            "--loss",
            "bernoulli",
            "--p",
            "0.5,0.8",
        ],
        &["bounds-table"],
        &[
            "compare",
            "--links",
            "2",
            "-k",
            "32",
            "--codes",
            "200",
            "--traffics-per-code",
            "4",
        ],
    ];
    let mut mismatched = Vec::new();
    for args in runs {
        let outputs: Vec<String> = ["1", "4", "8"]
            .iter()
            .map(|w| {
                let mut a = args.to_vec();
                a.extend(["--workers", w]);
                let (code, text) = linecode(&a);
                assert!(matches!(code, Some(0 | 1)), "{args:?} exited {code:?}");
                text
            })
            .collect();
        if outputs.iter().any(|o| o != &outputs[0]) {
            mismatched.push(args[0]);
        }
    }
    report(
        "A9",
        mismatched.is_empty(),
        format!(
            "{} commands x workers 1/4/8, mismatched: {mismatched:?}",
            runs.len()
        ),
    );
}
