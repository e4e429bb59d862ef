//! Closed-form delay and density bounds for dense codes on line networks.
//!
//! Logs are base 2 except in [`gamma_star`], which uses the natural log.
//! Parameters given only up to asymptotic equivalence (the partition count
//! `w`, the Chernoff margin `gamma*`) are evaluated as equalities and then
//! made integral; every such adjustment is reported. `(1 + o(1))` factors
//! are 1 unless an explicit `o` is supplied, and results that relied on the
//! default carry the `asymptotic` flag.

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundId {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Thm5,
}

impl BoundId {
    pub const ALL: [BoundId; 5] = [Self::Thm1, Self::Thm2, Self::Thm3, Self::Thm4, Self::Thm5];

    pub fn name(self) -> &'static str {
        match self {
            Self::Thm1 => "thm1",
            Self::Thm2 => "thm2",
            Self::Thm3 => "thm3",
            Self::Thm4 => "thm4",
            Self::Thm5 => "thm5",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }
}

/// How `(1 + o(1))` factors are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum O1Mode {
    /// `o(1) = 0`.
    Zero,
    /// `o(1) = o`.
    Explicit(f64),
}

impl O1Mode {
    fn factor(self) -> f64 {
        match self {
            O1Mode::Zero => 1.0,
            O1Mode::Explicit(o) => 1.0 + o,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub k: usize,
    pub links: usize,
    pub epsilon: f64,
    /// Per-link success probabilities. Empty means lossless; a single value
    /// applies to every link.
    pub rates: Vec<f64>,
    /// Partition count override.
    pub w: Option<usize>,
    /// Value of the slowly growing `f(k)` in the unique-worst-link average bound.
    pub f_k: Option<f64>,
    pub o1: O1Mode,
}

impl BoundQuery {
    pub fn new(k: usize, links: usize, epsilon: f64) -> Self {
        Self {
            k,
            links,
            epsilon,
            rates: Vec::new(),
            w: None,
            f_k: None,
            o1: O1Mode::Zero,
        }
    }

    pub fn with_rates(mut self, rates: Vec<f64>) -> Self {
        self.rates = rates;
        self
    }

    pub fn with_p(self, p: f64) -> Self {
        self.with_rates(vec![p])
    }

    pub fn with_w(mut self, w: usize) -> Self {
        self.w = Some(w);
        self
    }

    pub fn with_f_k(mut self, f_k: f64) -> Self {
        self.f_k = Some(f_k);
        self
    }

    pub fn with_o1(mut self, o1: O1Mode) -> Self {
        self.o1 = o1;
        self
    }

    fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        ensure(self.k >= 1, || "k must be positive".into())?;
        ensure(self.links >= 1, || "L must be positive".into())?;
        ensure(
            self.rates.len() <= 1 || self.rates.len() == self.links,
            || format!("{} rates for {} links", self.rates.len(), self.links),
        )?;
        if let Some(p) = self.rates.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "success probability {p} outside (0,1]"
            )));
        }
        if let O1Mode::Explicit(o) = self.o1 {
            ensure(o.is_finite() && o > -1.0, || {
                format!("o(1) value {o} must exceed -1")
            })?;
        }
        Ok(())
    }

    /// The common rate of identical links (1 when lossless).
    fn identical_p(&self) -> Result<f64> {
        let p = self.rates.first().copied().unwrap_or(1.0);
        ensure(self.rates.iter().all(|&r| r == p), || {
            "this bound needs identical links; use thm4/thm5 for distinct rates".into()
        })?;
        Ok(p)
    }

    /// The unique minimum rate.
    fn unique_min_p(&self) -> Result<f64> {
        let p = self.rates.iter().copied().fold(f64::INFINITY, f64::min);
        if self.rates.len() < 2 || self.rates.iter().filter(|&&r| r == p).count() != 1 {
            return Err(Error::NonUniqueMinimum);
        }
        Ok(p)
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    ensure(eps > 0.0 && eps < 1.0, || {
        format!("epsilon {eps} outside (0,1)")
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    pub id: BoundId,
    pub k: usize,
    pub links: usize,
    pub epsilon: f64,
    /// Success probability the bound was evaluated at.
    pub p: f64,
    /// Sum of `components`.
    pub value: f64,
    pub w: Option<WChoice>,
    pub asymptotic: bool,
    pub components: Vec<(&'static str, f64)>,
    pub notes: Vec<String>,
    /// The thm1 value when `p = 1`, the tighter lossless bound.
    pub thm1_value: Option<f64>,
}

impl BoundResult {
    fn new(id: BoundId, q: &BoundQuery, p: f64, components: Vec<(&'static str, f64)>) -> Self {
        Self {
            id,
            k: q.k,
            links: q.links,
            epsilon: q.epsilon,
            p,
            value: components.iter().map(|c| c.1).sum(),
            w: None,
            asymptotic: false,
            components,
            notes: Vec::new(),
            thm1_value: None,
        }
    }

    pub fn w_used(&self) -> Option<usize> {
        self.w.map(|w| w.w)
    }

    pub fn clamped(&self) -> bool {
        self.w.is_some_and(|w| w.clamped)
    }
}

/// Which asymptotic expression picks `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WContext {
    Thm2,
    Thm3,
    Thm5,
    /// Needs the horizon `N_T`.
    Lemma11 {
        horizon: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WChoice {
    pub w: usize,
    /// The expression's value before rounding; `None` for overrides.
    pub raw: Option<f64>,
    /// Whether the `w >= L + 1` floor was applied.
    pub clamped: bool,
}

/// Partition count for `ctx`: the override if given, else the rounded
/// expression clamped to at least `L + 1`.
pub fn w_for(q: &BoundQuery, ctx: WContext) -> Result<WChoice> {
    q.validate()?;
    let l = q.links as f64;
    let min = q.links + 1;
    if let Some(w) = q.w {
        ensure(w >= min, || format!("w override {w} below L + 1 = {min}"))?;
        return Ok(WChoice {
            w,
            raw: None,
            clamped: false,
        });
    }
    let k = q.k as f64;
    let eps = q.epsilon;
    let p = match ctx {
        WContext::Thm2 | WContext::Thm3 | WContext::Lemma11 { .. } => {
            q.identical_p().or_else(|_| q.unique_min_p())?
        }
        WContext::Thm5 => q.unique_min_p()?,
    };
    let log_term = (k * l / (p * eps)).log2();
    let raw = match ctx {
        WContext::Thm2 => (k * l * l / log_term).cbrt(),
        WContext::Thm3 => (k * l / log_term).sqrt(),
        WContext::Thm5 => {
            let f = q
                .f_k
                .ok_or_else(|| Error::InvalidParameter("thm5 needs f(k)".into()))?;
            ensure(f > 0.0, || format!("f(k) = {f} must be positive"))?;
            k / (p * log_term * f)
        }
        WContext::Lemma11 { horizon } => {
            let n = horizon as f64;
            (p * n * l * l / (n * l / eps).log2()).cbrt()
        }
    };
    let rounded = raw.round();
    Ok(if rounded < min as f64 {
        WChoice {
            w: min,
            raw: Some(raw),
            clamped: true,
        }
    } else {
        WChoice {
            w: rounded as usize,
            raw: Some(raw),
            clamped: false,
        }
    })
}

/// Coding delay under regular lossless traffic:
/// `k + L log(L/eps) + log(1/eps) + L + 1`.
pub fn thm1(q: &BoundQuery) -> Result<BoundResult> {
    q.validate()?;
    ensure(q.rates.iter().all(|&p| p == 1.0), || {
        "thm1 applies to lossless links only".into()
    })?;
    let l = q.links as f64;
    let eps = q.epsilon;
    Ok(BoundResult::new(
        BoundId::Thm1,
        q,
        1.0,
        vec![
            ("k", q.k as f64),
            ("L*log(L/eps)", l * (l / eps).log2()),
            ("log(1/eps)", (1.0 / eps).log2()),
            ("L+1", l + 1.0),
        ],
    ))
}

struct Partitioned {
    p: f64,
    w: WChoice,
    log_wl: f64,
    factor: f64,
}

fn partitioned(q: &BoundQuery, p: f64, ctx: WContext) -> Result<Partitioned> {
    let w = w_for(q, ctx)?;
    Ok(Partitioned {
        p,
        w,
        log_wl: (w.w as f64 * q.links as f64 / q.epsilon).log2(),
        factor: q.o1.factor(),
    })
}

fn finish(
    id: BoundId,
    q: &BoundQuery,
    part: &Partitioned,
    terms: Vec<(&'static str, f64)>,
) -> BoundResult {
    let p = part.p;
    let mut components = vec![("k/p", q.k as f64 / p)];
    components.extend(terms.into_iter().map(|(n, v)| (n, part.factor * v / p)));
    let mut r = BoundResult::new(id, q, p, components);
    r.w = Some(part.w);
    r.asymptotic = q.o1 == O1Mode::Zero;
    if part.w.clamped {
        r.notes.push(format!("w clamped to L+1 = {}", part.w.w));
    }
    r
}

fn thm1_cross_ref(q: &BoundQuery, r: &mut BoundResult) {
    if r.p == 1.0 {
        let lossless = BoundQuery {
            rates: Vec::new(),
            ..q.clone()
        };
        if let Ok(t1) = thm1(&lossless) {
            r.thm1_value = Some(t1.value);
            r.notes.push(format!(
                "thm1 gives the tighter lossless bound {:.4}",
                t1.value
            ));
        }
    }
}

/// Coding delay, regular traffic over identical Bernoulli(`p`) links.
pub fn thm2(q: &BoundQuery) -> Result<BoundResult> {
    q.validate()?;
    let p = q.identical_p()?;
    let part = partitioned(q, p, WContext::Thm2)?;
    let (k, l, w) = (q.k as f64, q.links as f64, part.w.w as f64);
    let mut r = finish(
        BoundId::Thm2,
        q,
        &part,
        vec![
            ("kL/(pw)", k * l / w),
            ("sqrt(k*w*log(wL/eps))/p", (k * w * part.log_wl).sqrt()),
            ("w*log(wL/eps)/p", w * part.log_wl),
        ],
    );
    thm1_cross_ref(q, &mut r);
    Ok(r)
}

/// Average coding delay over identical Bernoulli(`p`) links.
pub fn thm3(q: &BoundQuery) -> Result<BoundResult> {
    q.validate()?;
    let p = q.identical_p()?;
    let part = partitioned(q, p, WContext::Thm3)?;
    let (k, l, w) = (q.k as f64, q.links as f64, part.w.w as f64);
    let mut r = finish(
        BoundId::Thm3,
        q,
        &part,
        vec![("kL/(pw)", k * l / w), ("w*log(wL/eps)/p", w * part.log_wl)],
    );
    thm1_cross_ref(q, &mut r);
    Ok(r)
}

/// Coding delay, regular traffic over Bernoulli links with a unique worst
/// link `p = min p_i`.
pub fn thm4(q: &BoundQuery) -> Result<BoundResult> {
    q.validate()?;
    let p = q.unique_min_p()?;
    let part = partitioned(q, p, WContext::Thm2)?;
    let (k, l, w) = (q.k as f64, q.links as f64, part.w.w as f64);
    Ok(finish(
        BoundId::Thm4,
        q,
        &part,
        vec![
            ("kL/(pw)", k * l / w),
            ("sqrt(k*w*log(wL/eps))/p", (k * w * part.log_wl).sqrt()),
        ],
    ))
}

/// Average coding delay over Bernoulli links with a unique worst link.
pub fn thm5(q: &BoundQuery) -> Result<BoundResult> {
    q.validate()?;
    let p = q.unique_min_p()?;
    let part = partitioned(q, p, WContext::Thm5)?;
    let (k, l, w) = (q.k as f64, q.links as f64, part.w.w as f64);
    Ok(finish(
        BoundId::Thm5,
        q,
        &part,
        vec![("kL/(pw)", k * l / w)],
    ))
}

pub fn evaluate(id: BoundId, q: &BoundQuery) -> Result<BoundResult> {
    match id {
        BoundId::Thm1 => thm1(q),
        BoundId::Thm2 => thm2(q),
        BoundId::Thm3 => thm3(q),
        BoundId::Thm4 => thm4(q),
        BoundId::Thm5 => thm5(q),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaStar {
    /// `sqrt((2/phi) ln(2/eps))` before adjustment.
    pub raw: f64,
    /// Smallest `gamma >= raw` making `r` integral.
    pub gamma: f64,
    /// `(1 - gamma) * phi`.
    pub r: usize,
}

/// Chernoff margin for a partition expecting `phi` packets.
pub fn gamma_star(phi: f64, epsilon: f64) -> Result<GammaStar> {
    check_epsilon(epsilon)?;
    ensure(phi > 0.0 && phi.is_finite(), || {
        format!("phi {phi} must be positive")
    })?;
    let raw = (2.0 / phi * (2.0 / epsilon).ln()).sqrt();
    if raw >= 1.0 {
        return Err(Error::DegenerateRegime(format!(
            "gamma* = {raw:.4} >= 1 for phi = {phi}, eps = {epsilon}"
        )));
    }
    let r = ((1.0 - raw) * phi + 1e-9).floor();
    if r < 1.0 {
        return Err(Error::DegenerateRegime(format!(
            "no packets left per partition at phi = {phi}"
        )));
    }
    Ok(GammaStar {
        raw,
        gamma: 1.0 - r / phi,
        r: r as usize,
    })
}

fn floor_count(x: f64) -> usize {
    if x > 0.0 {
        (x + 1e-9).floor() as usize
    } else {
        0
    }
}

/// Sink density under regular lossless traffic: `N_T - L log(N_T L / eps)`.
pub fn lemma5_bound(horizon: u64, links: usize, epsilon: f64) -> Result<usize> {
    check_epsilon(epsilon)?;
    ensure(horizon >= 1, || "N_T must be positive".into())?;
    if links == 0 {
        return Ok(horizon as usize);
    }
    let (n, l) = (horizon as f64, links as f64);
    Ok(floor_count(n - l * (n * l / epsilon).log2()))
}

/// Density of the first active partition on link `i`:
/// `r - log(1/eps) - log(i) - 1`.
pub fn lemma9_bound(r: usize, i: usize, epsilon: f64) -> Result<usize> {
    check_epsilon(epsilon)?;
    ensure(i >= 2, || format!("link index {i} must be at least 2"))?;
    Ok(floor_count(
        r as f64 - (1.0 / epsilon).log2() - (i as f64).log2() - 1.0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma10 {
    pub value: usize,
    /// The `o(1)` term `(log(ij/eps) + 1)/r`.
    pub o: f64,
    /// The loss term `L_ij`.
    pub loss: f64,
    /// Whether `log(w_T/eps) <= r/4` held.
    pub in_regime: bool,
}

/// Density of the first `j` active partitions on link `i`: `rj - L_ij`.
/// The regime guard uses `w_t`, defaulting to `i * j`.
pub fn lemma10_bound(
    r: usize,
    i: usize,
    j: usize,
    epsilon: f64,
    w_t: Option<usize>,
) -> Result<Lemma10> {
    check_epsilon(epsilon)?;
    ensure(i >= 2 && j >= 2, || {
        format!("indices ({i}, {j}) must both be at least 2")
    })?;
    ensure(r >= 1, || "r must be positive".into())?;
    let (rf, jf) = (r as f64, j as f64);
    let ij = (i * j) as f64;
    let base = (ij / epsilon).log2() + 1.0;
    let o = base / rf;
    let loss = jf * (1.0 + o) * base + ((jf * (1.0 + o) + 1.0) / epsilon).log2() + ij.log2() + 1.0;
    let wt = w_t.unwrap_or(i * j) as f64;
    Ok(Lemma10 {
        value: floor_count(rf * jf - loss),
        o,
        loss,
        in_regime: (wt / epsilon).log2() <= rf / 4.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma11 {
    pub value: usize,
    pub w: WChoice,
    pub phi: f64,
    pub w_t: usize,
    pub gamma: GammaStar,
    /// Signed addends of the bound, in order.
    pub terms: Vec<(&'static str, f64)>,
    pub notes: Vec<String>,
}

/// Sink density under regular traffic with identical Bernoulli(`p`) links.
pub fn lemma11_bound(horizon: u64, links: usize, p: f64, epsilon: f64) -> Result<Lemma11> {
    ensure(p > 0.0 && p <= 1.0, || format!("p {p} outside (0,1]"))?;
    ensure(horizon >= 1, || "N_T must be positive".into())?;
    let q = BoundQuery::new(1, links, epsilon).with_p(p);
    let w = w_for(&q, WContext::Lemma11 { horizon })?;
    let phi = p * horizon as f64 / w.w as f64;
    let gamma = gamma_star(phi, epsilon)?;
    let w_t = active_partitions(w.w, links)?;
    let (wt, l) = (w_t as f64, links as f64);
    let (phi_dot, eps_dot) = (phi / 2.0, epsilon / 2.0);
    let log_wt_dot = (wt / eps_dot).log2();
    let log_wt = (wt / epsilon).log2();
    let lead = wt * phi / l;
    let terms = vec![
        ("w_T*phi/L", lead),
        (
            "-w_T*phi/L*sqrt(log(w_T/eps.)/phi.)",
            -lead * (log_wt_dot / phi_dot).sqrt(),
        ),
        ("-(w_T/L)*log(w_T/eps.)", -(wt / l) * log_wt_dot),
        (
            "-(w_T/(L*phi))*log^2(w_T/eps)",
            -(wt / (l * phi)) * log_wt * log_wt,
        ),
        ("-(w_T/(L*phi))*log(w_T/eps)", -(wt / (l * phi)) * log_wt),
        ("-log(w_T/eps)", -log_wt),
        ("-log(w_T/L)", -(wt / l).log2()),
        ("-1", -1.0),
    ];
    let mut notes =
        vec!["the first three terms take eps/2 and the rest take eps as written".to_string()];
    if w.clamped {
        notes.push(format!("w clamped to L+1 = {}", w.w));
    }
    Ok(Lemma11 {
        value: floor_count(terms.iter().map(|t| t.1).sum()),
        w,
        phi,
        w_t,
        gamma,
        terms,
        notes,
    })
}

/// Whether partition `j` of link `i` is active: `i <= j <= w - L + i`.
pub fn is_active(i: usize, j: usize, w: usize, links: usize) -> bool {
    i <= j && j + links <= w + i
}

/// Number of active partitions, `L (w - L + 1)`.
pub fn active_partitions(w: usize, links: usize) -> Result<usize> {
    ensure(links >= 1 && w >= links, || {
        format!("need 1 <= L <= w, got L = {links}, w = {w}")
    })?;
    Ok(links * (w - links + 1))
}
