//! Experiment configuration: JSON file, then `LINECODE_*` environment
//! variables, then command-line flags, each layer overriding the previous.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use linecode::delay_stats::{AssertionMode, DEFAULT_CONFIDENCE};
use linecode::rank_laws::StructuredSpec;
use linecode::traffic::{Loss, NetworkConfig, Schedule};
use serde::{Deserialize, Serialize};

use crate::cli::{Common, NetworkFlags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Raw,
    Average,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Regular,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Lossless,
    Bernoulli,
}

/// Network section of the config. Rate lists of length one apply to every
/// link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub links: usize,
    pub messages: usize,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            links: 4,
            messages: 128,
            schedule: ScheduleKind::Regular,
            loss: LossKind::Lossless,
            p: Vec::new(),
            lambda: Vec::new(),
            horizon: None,
        }
    }
}

fn broadcast(v: &[f64], links: usize, what: &str) -> Result<Vec<f64>, String> {
    match v.len() {
        0 => Err(format!("{what} missing")),
        1 => Ok(vec![v[0]; links]),
        n if n == links => Ok(v.to_vec()),
        n => Err(format!("{n} values of {what} for {links} links")),
    }
}

impl NetworkSpec {
    pub fn build(&self) -> Result<NetworkConfig, String> {
        let schedule = match self.schedule {
            ScheduleKind::Regular => Schedule::Regular,
            ScheduleKind::Poisson => Schedule::Poisson {
                rates: broadcast(&self.lambda, self.links, "lambda")?,
            },
        };
        let loss = match self.loss {
            LossKind::Lossless => Loss::Lossless,
            LossKind::Bernoulli => Loss::Bernoulli {
                success: broadcast(&self.p, self.links, "p")?,
            },
        };
        let cfg = NetworkConfig::new(self.links, self.messages, schedule, loss)
            .map_err(|e| e.to_string())?;
        match self.horizon {
            Some(h) => cfg.with_horizon(h).map_err(|e| e.to_string()),
            None => Ok(cfg),
        }
    }

    /// The spec with rate lists expanded and the horizon filled in.
    pub fn resolved(&self, cfg: &NetworkConfig) -> Self {
        let mut out = self.clone();
        out.p = match &cfg.loss {
            Loss::Bernoulli { success } => success.clone(),
            Loss::Lossless => Vec::new(),
        };
        out.lambda = match &cfg.schedule {
            Schedule::Poisson { rates } => rates.clone(),
            Schedule::Regular => Vec::new(),
        };
        out.horizon = Some(cfg.horizon);
        out
    }
}

/// A structured-matrix family in config form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSpec {
    Single { n: usize, d: usize },
    Square { w: usize, r: usize },
    Vertical { r: usize, widths: Vec<usize> },
    Horizontal { r: usize, widths: Vec<usize> },
}

impl GridSpec {
    pub fn structured(&self) -> StructuredSpec {
        match self {
            GridSpec::Single { n, d } => StructuredSpec::Single { rows: *n, cols: *d },
            GridSpec::Square { w, r } => StructuredSpec::Square {
                blocks: *w,
                block: *r,
            },
            GridSpec::Vertical { r, widths } => StructuredSpec::Vertical {
                r: *r,
                widths: widths.clone(),
            },
            GridSpec::Horizontal { r, widths } => StructuredSpec::Horizontal {
                r: *r,
                widths: widths.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseRankRow {
    pub n: usize,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaGrid {
    pub specs: Vec<GridSpec>,
    /// Largest deficiency checked per spec (capped at `n - 1`).
    pub max_gamma: usize,
    pub dense_rank: Vec<DenseRankRow>,
    pub trials: usize,
    /// Enumerate exactly where the free-bit count allows.
    pub exact: bool,
}

fn lists(len: usize, values: &[usize]) -> Vec<Vec<usize>> {
    (0..len).fold(vec![Vec::new()], |acc, _| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

impl Default for LemmaGrid {
    fn default() -> Self {
        let mut specs = Vec::new();
        for n in [8, 16] {
            specs.push(GridSpec::Single { n, d: n });
        }
        for w in [2, 4] {
            for r in [2, 4] {
                specs.push(GridSpec::Square { w, r });
            }
        }
        for w in [2, 3] {
            for r in [2, 3] {
                let narrow: Vec<usize> = (1..=r).collect();
                for widths in lists(w, &narrow) {
                    specs.push(GridSpec::Vertical { r, widths });
                }
                for widths in lists(w, &[r, r + 1]) {
                    specs.push(GridSpec::Horizontal { r, widths });
                }
            }
        }
        let dense_rank = [16, 32]
            .into_iter()
            .flat_map(|n| [0.5, 0.25, 0.1, 0.01].map(|epsilon| DenseRankRow { n, epsilon }))
            .collect();
        Self {
            specs,
            max_gamma: 8,
            dense_rank,
            trials: 100_000,
            exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsGrid {
    pub k: Vec<usize>,
    pub links: Vec<usize>,
    pub epsilon: Vec<f64>,
    /// Success probability lists; a short list is padded with its last value.
    pub rates: Vec<Vec<f64>>,
    pub bounds: Vec<String>,
    /// Horizons for the sink-density rows.
    pub horizons: Vec<u64>,
}

impl Default for BoundsGrid {
    fn default() -> Self {
        Self {
            k: (8..=14).map(|e| 1usize << e).collect(),
            links: vec![2, 4],
            epsilon: vec![0.05],
            rates: vec![vec![1.0], vec![0.8], vec![0.5, 0.9]],
            bounds: ["thm1", "thm2", "thm3", "thm4", "thm5"]
                .map(String::from)
                .to_vec(),
            horizons: vec![256, 4096],
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub epsilon: Option<f64>,
    pub confidence: Option<f64>,
    pub trials: Option<usize>,
    pub codes: Option<usize>,
    pub traffics_per_code: Option<usize>,
    pub mode: Option<SimMode>,
    pub network: Option<NetworkSpec>,
    pub report_only: Option<bool>,
    pub asserted: Option<Vec<String>>,
    pub multipliers: BTreeMap<String, f64>,
    pub f_k: Option<f64>,
    pub lemma_grid: Option<LemmaGrid>,
    pub bounds_grid: Option<BoundsGrid>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Everything a run depends on. Serialized into the output header; the
/// worker count and output path are left out because they never change
/// results.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub command: &'static str,
    pub seed: u64,
    #[serde(skip)]
    pub workers: usize,
    pub epsilon: f64,
    pub confidence: f64,
    pub trials: usize,
    pub codes: usize,
    pub traffics_per_code: usize,
    pub mode: SimMode,
    pub network: NetworkSpec,
    pub report_only: bool,
    /// Bounds whose comparisons can fail the run.
    pub asserted: Vec<String>,
    pub multipliers: BTreeMap<String, f64>,
    pub f_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma_grid: Option<LemmaGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds_grid: Option<BoundsGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_traffic: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_traffic: Option<PathBuf>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub export_trace: Option<PathBuf>,
    #[serde(skip)]
    pub cfg: Option<NetworkConfig>,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_TRIALS: usize = 4000;
pub const DEFAULT_CODES: usize = 200;
pub const DEFAULT_TRAFFICS_PER_CODE: usize = 50;

fn default_multipliers() -> BTreeMap<String, f64> {
    [
        ("thm1", 1.0),
        ("thm2", 1.1),
        ("thm3", 1.1),
        ("thm4", 1.1),
        ("thm5", 1.1),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Bounds asserted by default; the rest are report-only.
const ASSERTED_BY_DEFAULT: [&str; 2] = ["thm1", "thm3"];

fn check_bound_names<'a>(
    names: impl IntoIterator<Item = &'a String>,
    what: &str,
) -> Result<(), String> {
    for key in names {
        if linecode::bounds::BoundId::parse(key).is_none() {
            return Err(format!("unknown bound {key:?} in {what}"));
        }
    }
    Ok(())
}

impl Resolved {
    pub fn resolve(
        command: &'static str,
        common: &Common,
        net: &NetworkFlags,
    ) -> Result<Self, String> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut network = file.network.unwrap_or_default();
        if let Some(v) = net.links {
            network.links = v;
        }
        if let Some(v) = net.messages {
            network.messages = v;
        }
        if let Some(v) = net.schedule {
            network.schedule = v;
        }
        if let Some(v) = net.loss {
            network.loss = v;
        }
        if let Some(v) = &net.p {
            network.p = v.clone();
        }
        if let Some(v) = &net.lambda {
            network.lambda = v.clone();
        }
        if let Some(v) = net.horizon {
            network.horizon = Some(v);
        }
        let mut multipliers = default_multipliers();
        multipliers.extend(file.multipliers);
        check_bound_names(multipliers.keys(), "multipliers")?;
        let report_only =
            !common.assert && (common.report_only || file.report_only.unwrap_or(false));
        let asserted: Vec<String> = if common.assert {
            linecode::bounds::BoundId::ALL
                .iter()
                .map(|b| b.name().to_string())
                .collect()
        } else {
            file.asserted
                .unwrap_or_else(|| ASSERTED_BY_DEFAULT.map(String::from).to_vec())
        };
        check_bound_names(&asserted, "asserted")?;
        let epsilon = common.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(format!("epsilon {epsilon} outside (0,1)"));
        }
        let mut r = Self {
            command,
            seed: common.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            workers: common.workers.or(file.workers).unwrap_or(0),
            epsilon,
            confidence: common
                .confidence
                .or(file.confidence)
                .unwrap_or(DEFAULT_CONFIDENCE),
            trials: common.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
            codes: common.codes.or(file.codes).unwrap_or(DEFAULT_CODES),
            traffics_per_code: common
                .traffics_per_code
                .or(file.traffics_per_code)
                .unwrap_or(DEFAULT_TRAFFICS_PER_CODE),
            mode: common.mode.or(file.mode).unwrap_or(SimMode::Raw),
            network,
            report_only,
            asserted,
            multipliers,
            f_k: common.f_k.or(file.f_k),
            lemma_grid: None,
            bounds_grid: None,
            record_traffic: common.record_traffic.clone(),
            replay_traffic: common.replay_traffic.clone(),
            out: common.out.clone(),
            export_trace: common.export_trace.clone(),
            cfg: None,
        };
        match command {
            "validate-lemmas" => {
                let mut grid = file.lemma_grid.unwrap_or_default();
                if let Some(t) = common.trials {
                    grid.trials = t;
                }
                if grid.trials == 0 {
                    return Err("lemma grid needs trials >= 1".into());
                }
                r.lemma_grid = Some(grid);
            }
            "bounds-table" => r.bounds_grid = Some(file.bounds_grid.unwrap_or_default()),
            _ => {
                let cfg = r.network.build()?;
                r.network = r.network.resolved(&cfg);
                r.cfg = Some(cfg);
            }
        }
        Ok(r)
    }

    pub fn assertion(&self, bound: &str) -> AssertionMode {
        if self.report_only || !self.asserted.iter().any(|b| b == bound) {
            AssertionMode::ReportOnly
        } else {
            AssertionMode::Assert {
                multiplier: self.multipliers.get(bound).copied().unwrap_or(1.0),
            }
        }
    }

    pub fn header(&self) -> String {
        let config = serde_json::to_string(self).expect("config serializes");
        format!(
            "# linecode {}\n# command {}\n# seed {}\n# config {config}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.seed
        )
    }
}
