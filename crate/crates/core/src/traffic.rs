//! Traffic on a line network: transmission schedules, link losses and the
//! merged event timeline the session engine consumes.
//!
//! Losses are applied when the traffic is sampled. An erased transmission
//! never shows up in a [`TrafficRealization`]; only successes are recorded.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Schedule {
    /// One transmission opportunity per link at every integer time.
    Regular,
    /// Independent Poisson opportunities with per-link rate `rates[i]`.
    Poisson { rates: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    Lossless,
    /// Each opportunity on link `i` succeeds independently with `success[i]`.
    Bernoulli {
        success: Vec<f64>,
    },
}

/// A line network `v_0 -> v_1 -> ... -> v_L` and the message size `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub links: usize,
    pub messages: usize,
    pub schedule: Schedule,
    pub loss: Loss,
    /// `N_T`; transmissions happen on `(0, N_T]`.
    pub horizon: f64,
}

impl NetworkConfig {
    /// Builds a config with the default horizon `ceil(4k / min_i rate_i)`.
    pub fn new(links: usize, messages: usize, schedule: Schedule, loss: Loss) -> Result<Self> {
        let mut cfg = Self {
            links,
            messages,
            schedule,
            loss,
            horizon: 1.0,
        };
        cfg.validate()?;
        cfg.horizon = cfg.default_horizon();
        Ok(cfg)
    }

    pub fn regular_lossless(links: usize, messages: usize) -> Result<Self> {
        Self::new(links, messages, Schedule::Regular, Loss::Lossless)
    }

    pub fn regular_bernoulli(links: usize, messages: usize, success: Vec<f64>) -> Result<Self> {
        Self::new(
            links,
            messages,
            Schedule::Regular,
            Loss::Bernoulli { success },
        )
    }

    pub fn poisson(links: usize, messages: usize, rates: Vec<f64>, loss: Loss) -> Result<Self> {
        Self::new(links, messages, Schedule::Poisson { rates }, loss)
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        self.horizon = horizon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.links == 0 {
            return bad("network needs at least one link".into());
        }
        if self.messages == 0 {
            return bad("message must have at least one vector".into());
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if let Schedule::Poisson { rates } = &self.schedule {
            if rates.len() != self.links {
                return bad(format!(
                    "{} Poisson rates for {} links",
                    rates.len(),
                    self.links
                ));
            }
            if let Some(l) = rates.iter().find(|&&l| !(l > 0.0 && l < 1.0)) {
                return bad(format!("Poisson rate {l} outside (0,1)"));
            }
        }
        if let Loss::Bernoulli { success } = &self.loss {
            if success.len() != self.links {
                return bad(format!(
                    "{} success probabilities for {} links",
                    success.len(),
                    self.links
                ));
            }
            if let Some(p) = success.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                return bad(format!("success probability {p} outside (0,1]"));
            }
        }
        Ok(())
    }

    /// Long-run rate of successful transmissions on each link.
    pub fn effective_rates(&self) -> Vec<f64> {
        (0..self.links)
            .map(|i| {
                let opp = match &self.schedule {
                    Schedule::Regular => 1.0,
                    Schedule::Poisson { rates } => rates[i],
                };
                let succ = match &self.loss {
                    Loss::Lossless => 1.0,
                    Loss::Bernoulli { success } => success[i],
                };
                opp * succ
            })
            .collect()
    }

    pub fn default_horizon(&self) -> f64 {
        let min_rate = self
            .effective_rates()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        (4.0 * self.messages as f64 / min_rate).ceil()
    }

    pub fn schedule_name(&self) -> &'static str {
        match self.schedule {
            Schedule::Regular => "regular",
            Schedule::Poisson { .. } => "poisson",
        }
    }

    pub fn loss_name(&self) -> &'static str {
        match self.loss {
            Loss::Lossless => "lossless",
            Loss::Bernoulli { .. } => "bernoulli",
        }
    }

    /// Canonical one-line rendering used for hashing and report headers.
    pub fn canonical(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        let schedule = match &self.schedule {
            Schedule::Regular => "regular".to_string(),
            Schedule::Poisson { rates } => format!("poisson[{}]", list(rates)),
        };
        let loss = match &self.loss {
            Loss::Lossless => "lossless".to_string(),
            Loss::Bernoulli { success } => format!("bernoulli[{}]", list(success)),
        };
        format!(
            "L={} k={} schedule={schedule} loss={loss} horizon={}",
            self.links, self.messages, self.horizon
        )
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Successful transmission times per link (index 0 is link 1).
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficRealization {
    pub horizon: f64,
    pub links: Vec<Vec<f64>>,
}

impl TrafficRealization {
    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn total_events(&self) -> usize {
        self.links.iter().map(Vec::len).sum()
    }

    /// Checks sortedness, the horizon, and, for regular schedules, integrality.
    pub fn validate_for(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.links.len() != cfg.links {
            return Err(Error::TrafficMismatch(format!(
                "traffic has {} links, config has {}",
                self.links.len(),
                cfg.links
            )));
        }
        for (i, times) in self.links.iter().enumerate() {
            if times.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::TrafficMismatch(format!(
                    "link {} times not strictly increasing",
                    i + 1
                )));
            }
            if let Some(&t) = times.iter().find(|&&t| !(t > 0.0 && t <= cfg.horizon)) {
                return Err(Error::TrafficMismatch(format!(
                    "link {} time {t} outside (0, {}]",
                    i + 1,
                    cfg.horizon
                )));
            }
            if cfg.schedule == Schedule::Regular {
                if let Some(&t) = times.iter().find(|&&t| t.fract() != 0.0) {
                    return Err(Error::TrafficMismatch(format!(
                        "link {} time {t} not an integer under a regular schedule",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Serializes as one `link<TAB>time` line per event in timeline order,
    /// after a header carrying the config hash.
    pub fn to_text(&self, cfg: &NetworkConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# linecode-traffic v1");
        let _ = writeln!(out, "# config {}", cfg.config_hash());
        let _ = writeln!(out, "# links {} horizon {}", self.links.len(), self.horizon);
        for e in merge_timeline(self).events {
            let _ = writeln!(out, "{}\t{}", e.link, e.time);
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output, returning the realization and
    /// the config hash from its header.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let fmt_err = |m: String| Error::Format(m);
        let mut hash = None;
        let mut dims = None;
        let mut links: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts.as_slice() {
                    ["config", h] => hash = Some(h.to_string()),
                    ["links", l, "horizon", h] => {
                        let l: usize = l
                            .parse()
                            .map_err(|_| fmt_err(format!("bad link count {l}")))?;
                        let h: f64 = h.parse().map_err(|_| fmt_err(format!("bad horizon {h}")))?;
                        links = vec![Vec::new(); l];
                        dims = Some(h);
                    }
                    _ => {}
                }
                continue;
            }
            if dims.is_none() {
                return Err(fmt_err("event before header".into()));
            }
            let (link, time) = line
                .split_once('\t')
                .ok_or_else(|| fmt_err(format!("line {}: expected link<TAB>time", lineno + 1)))?;
            let link: usize = link
                .parse()
                .map_err(|_| fmt_err(format!("line {}: bad link {link}", lineno + 1)))?;
            let time: f64 = time
                .parse()
                .map_err(|_| fmt_err(format!("line {}: bad time {time}", lineno + 1)))?;
            if link == 0 || link > links.len() {
                return Err(fmt_err(format!(
                    "line {}: link {link} out of range",
                    lineno + 1
                )));
            }
            links[link - 1].push(time);
        }
        let horizon = dims.ok_or_else(|| fmt_err("missing links/horizon header".into()))?;
        let hash = hash.ok_or_else(|| fmt_err("missing config header".into()))?;
        Ok((Self { horizon, links }, hash))
    }

    pub fn write_file(&self, cfg: &NetworkConfig, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text(cfg))
    }

    /// Reads a recorded traffic and checks it against `cfg`.
    pub fn read_file(cfg: &NetworkConfig, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let (tr, hash) = Self::from_text(&text)?;
        if hash != cfg.config_hash() {
            return Err(Error::TrafficMismatch(format!(
                "{} was recorded for config {hash}, current config is {}",
                path.display(),
                cfg.config_hash()
            )));
        }
        tr.validate_for(cfg)?;
        Ok(tr)
    }
}

/// Samples one traffic realization. Each link draws from its own stream
/// derived from a single draw of `rng`.
pub fn sample_traffic<R: RngCore + ?Sized>(
    cfg: &NetworkConfig,
    rng: &mut R,
) -> Result<TrafficRealization> {
    cfg.validate()?;
    let base = rng.next_u64();
    let links = (0..cfg.links)
        .map(|i| {
            let mut rng = seed::rng_for(base, &[seed::stream::LINK, i as u64]);
            let keep = match &cfg.loss {
                Loss::Lossless => 1.0,
                Loss::Bernoulli { success } => success[i],
            };
            let mut times = Vec::new();
            let mut offer = |t: f64, rng: &mut rand_chacha::ChaCha8Rng| {
                if keep >= 1.0 || rng.random::<f64>() < keep {
                    times.push(t);
                }
            };
            match &cfg.schedule {
                Schedule::Regular => {
                    for t in 1..=cfg.horizon.floor() as u64 {
                        offer(t as f64, &mut rng);
                    }
                }
                Schedule::Poisson { rates } => {
                    let gap = Exp::new(rates[i]).expect("rate validated positive");
                    let mut t = gap.sample(&mut rng);
                    while t <= cfg.horizon {
                        offer(t, &mut rng);
                        t += gap.sample(&mut rng);
                    }
                }
            }
            times
        })
        .collect();
    Ok(TrafficRealization {
        horizon: cfg.horizon,
        links,
    })
}

/// Lossless Poisson config whose rates are `lambda_i * p_i`: Bernoulli
/// thinning of a Poisson process is again Poisson.
pub fn thin_equivalent(cfg: &NetworkConfig) -> Result<NetworkConfig> {
    let (Schedule::Poisson { rates }, Loss::Bernoulli { success }) = (&cfg.schedule, &cfg.loss)
    else {
        return Err(Error::InvalidParameter(
            "thinning equivalence needs a Poisson schedule with Bernoulli loss".into(),
        ));
    };
    cfg.validate()?;
    let mut out = cfg.clone();
    out.schedule = Schedule::Poisson {
        rates: rates.iter().zip(success).map(|(l, p)| l * p).collect(),
    };
    out.loss = Loss::Lossless;
    Ok(out)
}

/// One successful transmission: link `link` (1-based) at `time`, the
/// `opportunity`-th success on that link (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub link: usize,
    pub opportunity: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTimeline {
    pub events: Vec<Event>,
}

impl EventTimeline {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Times of the events on `link`, in timeline order.
    pub fn project(&self, link: usize) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.link == link)
            .map(|e| e.time)
            .collect()
    }
}

/// Merges per-link sequences into global time order; ties go to the lower
/// link index, so upstream events in a slot come first.
pub fn merge_timeline(tr: &TrafficRealization) -> EventTimeline {
    let mut events: Vec<Event> = tr
        .links
        .iter()
        .enumerate()
        .flat_map(|(i, times)| {
            times.iter().enumerate().map(move |(j, &t)| Event {
                time: t,
                link: i + 1,
                opportunity: j + 1,
            })
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.link.cmp(&b.link)));
    EventTimeline { events }
}
