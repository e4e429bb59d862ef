use std::path::Path;
use std::process::{Command, Output};

fn linecode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linecode"))
        .args(args)
        .env_remove("LINECODE_SEED")
        .env_remove("LINECODE_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect()
}

const SMALL_SIM: [&str; 7] = ["simulate", "--links", "2", "-k", "24", "--trials", "300"];

#[test]
fn output_starts_with_header() {
    let o = linecode(&SMALL_SIM);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# linecode "));
    assert_eq!(lines[1], "# command simulate");
    assert_eq!(lines[2], "# seed 1");
    assert!(lines[3].starts_with("# config {"));
    assert_eq!(
        lines[4],
        "k,L,schedule,loss,p_or_lambda,epsilon,mode,samples,point,upper_ci,timeouts,bound_id,bound_value,slack,verdict"
    );
}

#[test]
fn same_seed_same_bytes() {
    let a = linecode(&SMALL_SIM);
    let b = linecode(&SMALL_SIM);
    assert_eq!(a.stdout, b.stdout);
    let mut other = SMALL_SIM.to_vec();
    other.extend(["--seed", "2"]);
    assert_ne!(
        data_rows(&stdout(&a)),
        data_rows(&stdout(&linecode(&other)))
    );
}

#[test]
fn lossless_rows_cover_thm1_and_thm2() {
    let text = stdout(&linecode(&SMALL_SIM));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",thm1,") && rows[0].ends_with(",pass"));
    assert!(rows[1].contains(",thm2,") && rows[1].ends_with(",report"));
}

#[test]
fn config_errors_exit_two() {
    assert_eq!(
        linecode(&["validate-lemmas", "--trials", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        linecode(&["simulate", "--epsilon", "1.5"]).status.code(),
        Some(2)
    );
    assert_eq!(
        linecode(&["simulate", "--trials", "10"]).status.code(),
        Some(2)
    );
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.json");
    std::fs::write(&cfg, r#"{"multipliers": {"thm1": 0.5}}"#).unwrap();
    let mut args = SMALL_SIM.to_vec();
    args.extend(["--config", cfg.to_str().unwrap()]);
    let o = linecode(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(data_rows(&stdout(&o))[0].ends_with(",fail"));
    args.push("--report-only");
    assert_eq!(linecode(&args).status.code(), Some(0));
}

#[test]
fn environment_overrides_defaults() {
    let o = Command::new(env!("CARGO_BIN_EXE_linecode"))
        .args(SMALL_SIM)
        .env("LINECODE_SEED", "77")
        .output()
        .unwrap();
    assert!(stdout(&o).lines().any(|l| l == "# seed 77"));
}

fn files_in(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().count()
}

#[test]
fn replayed_traffic_reproduces_delays() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("traffic");
    let rec_s = rec.to_str().unwrap();
    let base = [
        "simulate",
        "--links",
        "3",
        "-k",
        "16",
        "--loss",
        "bernoulli",
        "--p",
        "0.6",
        "--trials",
        "200",
        "--codes",
        "20",
        "--traffics-per-code",
        "5",
        "--epsilon",
        "0.5",
        "--mode",
        "both",
    ];
    let mut record = base.to_vec();
    record.extend(["--record-traffic", rec_s]);
    let a = linecode(&record);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(files_in(&rec), 200 + 20 * 5);
    let first = std::fs::read_to_string(rec.join("trial_000000.tsv")).unwrap();
    assert!(first.starts_with("# linecode-traffic v1\n# config "));

    let mut replay = base.to_vec();
    replay.extend(["--replay-traffic", rec_s]);
    let b = linecode(&replay);
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(data_rows(&stdout(&a)), data_rows(&stdout(&b)));
}

#[test]
fn replay_rejects_other_config() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().to_str().unwrap().to_string();
    let o = linecode(&[
        "simulate",
        "--links",
        "2",
        "-k",
        "16",
        "--trials",
        "200",
        "--record-traffic",
        &rec,
    ]);
    assert!(o.status.success());
    let o = linecode(&[
        "simulate",
        "--links",
        "2",
        "-k",
        "17",
        "--trials",
        "200",
        "--replay-traffic",
        &rec,
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_export_has_one_row_per_event() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.tsv");
    let mut args = SMALL_SIM.to_vec();
    args.extend(["--export-trace", path.to_str().unwrap()]);
    assert!(linecode(&args).status.success());
    let trace = std::fs::read_to_string(&path).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next(),
        Some("time\tlink\topportunity\temitted\tsink_rank\tdense_1\tdense_2")
    );
    // Default horizon 4k over two lossless links.
    assert_eq!(lines.count(), 2 * 96);
}

#[test]
fn bounds_table_flags_and_cross_links() {
    let text = stdout(&linecode(&["bounds-table"]));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    let cols: Vec<&str> = header.split(',').collect();
    let col = |name: &str| cols.iter().position(|c| *c == name).unwrap();
    let rows: Vec<Vec<&str>> = data_rows(&text)
        .iter()
        .map(|l| l.split(',').collect())
        .collect();
    let thm3: Vec<f64> = rows
        .iter()
        .filter(|r| r[col("row")] == "thm3" && r[col("L")] == "2" && r[col("rates")] == "0.8;0.8")
        .map(|r| r[col("value")].parse().unwrap())
        .collect();
    assert_eq!(thm3.len(), 7);
    assert!(thm3.windows(2).all(|w| w[0] < w[1]));
    let lossless_thm2 = rows
        .iter()
        .find(|r| r[col("row")] == "thm2" && r[col("rates")] == "1;1")
        .unwrap();
    assert!(!lossless_thm2[col("thm1_value")].is_empty());
    assert!(rows
        .iter()
        .all(|r| matches!(r[col("clamped")], "true" | "false")));
}

#[test]
fn compare_orders_average_below_raw() {
    let o = linecode(&[
        "compare",
        "--links",
        "2",
        "-k",
        "32",
        "--loss",
        "bernoulli",
        "--p",
        "0.8",
        "--codes",
        "40",
        "--traffics-per-code",
        "10",
        "--epsilon",
        "0.25",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let last = data_rows(&text).last().unwrap().to_string();
    assert!(
        last.contains(",raw-quantile,") && last.ends_with(",pass"),
        "{last}"
    );
}
