//! Structured random matrices and their rank laws.
//!
//! Four families of partially random GF(2) matrices show up when bounding the
//! rank of transfer matrices:
//!
//! - [`StructuredSpec::Single`]: an `n x d` matrix whose column `j` (1-based)
//!   has i.u.d. entries in its last `d - j + 1` rows.
//! - [`StructuredSpec::Square`]: `w x w` blocks of size `r x r`, dense on and
//!   below the block diagonal, zero above.
//! - [`StructuredSpec::Vertical`]: `w` block rows of `r` rows, block column `j`
//!   of width `r_j <= r`, dense for `j <= i`.
//! - [`StructuredSpec::Horizontal`]: as vertical but with `r_j >= r`.
//!
//! Entries that the rank laws allow to be arbitrary are set to zero.
//!
//! Each family has a closed-form upper bound on `Pr{rank < n - gamma}`. This
//! module evaluates those bounds and provides two independent estimators of
//! the true probability: Monte Carlo sampling and exhaustive enumeration.

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gf2::{BitMatrix, BitVector};
use crate::seed;

/// Largest number of free bits [`exact_deficiency`] will enumerate.
pub const EXACT_FREE_BITS_LIMIT: usize = 24;

/// Default Hoeffding failure probability for Monte Carlo slack.
pub const DEFAULT_CONFIDENCE_DELTA: f64 = 1e-6;

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StructuredSpec {
    Single { rows: usize, cols: usize },
    Square { blocks: usize, block: usize },
    Vertical { r: usize, widths: Vec<usize> },
    Horizontal { r: usize, widths: Vec<usize> },
}

impl StructuredSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Self::Single { rows, cols } if cols > rows => bad(format!(
                "single family needs d <= n, got n={rows}, d={cols}"
            )),
            Self::Square { blocks, block } if *blocks == 0 || *block == 0 => {
                bad("square family needs w >= 1 and r >= 1".into())
            }
            Self::Vertical { r, widths } => {
                if widths.is_empty() {
                    bad("vertical family needs at least one block".into())
                } else if let Some(&rj) = widths.iter().find(|&&rj| rj > *r) {
                    bad(format!(
                        "vertical family needs r_j <= r, got r_j={rj} > r={r}"
                    ))
                } else {
                    Ok(())
                }
            }
            Self::Horizontal { r, widths } => {
                if widths.is_empty() || *r == 0 {
                    bad("horizontal family needs w >= 1 and r >= 1".into())
                } else if let Some(&rj) = widths.iter().find(|&&rj| rj < *r) {
                    bad(format!(
                        "horizontal family needs r_j >= r, got r_j={rj} < r={r}"
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Single { .. } => "single",
            Self::Square { .. } => "square",
            Self::Vertical { .. } => "vertical",
            Self::Horizontal { .. } => "horizontal",
        }
    }

    pub fn nrows(&self) -> usize {
        match self {
            Self::Single { rows, .. } => *rows,
            Self::Square { blocks, block } => blocks * block,
            Self::Vertical { r, widths } | Self::Horizontal { r, widths } => r * widths.len(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Self::Single { cols, .. } => *cols,
            Self::Square { blocks, block } => blocks * block,
            Self::Vertical { widths, .. } | Self::Horizontal { widths, .. } => widths.iter().sum(),
        }
    }

    /// The rank the law is stated against: `d` for the single family, `n`
    /// otherwise (`n = wr` for square/horizontal, `n = sum r_j` for vertical).
    pub fn full_rank(&self) -> usize {
        match self {
            Self::Single { cols, .. } => *cols,
            Self::Square { .. } | Self::Horizontal { .. } => self.nrows(),
            Self::Vertical { .. } => self.ncols(),
        }
    }

    /// Whether entry `(row, col)` is i.u.d.
    pub fn is_free(&self, row: usize, col: usize) -> bool {
        match self {
            Self::Single { rows, cols } => row >= rows - (cols - col),
            Self::Square { block, .. } => col / block <= row / block,
            Self::Vertical { r, widths } | Self::Horizontal { r, widths } => {
                let block_row = row / r;
                let mut edge = 0;
                let block_col = widths
                    .iter()
                    .position(|&w| {
                        edge += w;
                        col < edge
                    })
                    .expect("column inside matrix");
                block_col <= block_row
            }
        }
    }

    /// Per-row masks of the i.u.d. entries.
    pub fn row_masks(&self) -> Vec<BitVector> {
        let cols = self.ncols();
        (0..self.nrows())
            .map(|row| {
                let mut m = BitVector::zeros(cols);
                for col in 0..cols {
                    if self.is_free(row, col) {
                        m.set(col, true);
                    }
                }
                m
            })
            .collect()
    }

    pub fn free_bits(&self) -> usize {
        self.row_masks().iter().map(BitVector::count_ones).sum()
    }

    pub fn describe(&self) -> String {
        let list = |v: &[usize]| {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";")
        };
        match self {
            Self::Single { rows, cols } => format!("single(n={rows} d={cols})"),
            Self::Square { blocks, block } => format!("square(w={blocks} r={block})"),
            Self::Vertical { r, widths } => {
                format!("vertical(w={} r={r} rj={})", widths.len(), list(widths))
            }
            Self::Horizontal { r, widths } => {
                format!("horizontal(w={} r={r} rj={})", widths.len(), list(widths))
            }
        }
    }
}

/// Samples a matrix from the family described by `spec`.
pub fn gen_structured<R: RngCore + ?Sized>(
    spec: &StructuredSpec,
    rng: &mut R,
) -> Result<BitMatrix> {
    spec.validate()?;
    let masks = spec.row_masks();
    Ok(sample_masked(spec.ncols(), &masks, rng))
}

fn sample_masked<R: RngCore + ?Sized>(cols: usize, masks: &[BitVector], rng: &mut R) -> BitMatrix {
    let rows = masks
        .iter()
        .map(|m| {
            let mut v = BitVector::random(cols, rng);
            v.and_assign(m);
            v
        })
        .collect();
    BitMatrix::from_rows(cols, rows).expect("rows built at matrix width")
}

/// A closed-form probability bound, kept unclamped so reports can flag
/// vacuous (> 1) cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbBound {
    pub raw: f64,
}

impl ProbBound {
    pub fn value(&self) -> f64 {
        self.raw.clamp(0.0, 1.0)
    }

    pub fn is_vacuous(&self) -> bool {
        self.raw >= 1.0
    }
}

fn check_gamma(gamma: usize, n: usize) -> Result<()> {
    if n == 0 || gamma > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "gamma={gamma} outside 0..={}",
            n as i64 - 1
        )));
    }
    Ok(())
}

/// `Pr{rank(T) < d - gamma} <= (d - gamma) 2^{-(gamma+1)}` for the single family.
pub fn bound_single(d: usize, gamma: usize) -> Result<ProbBound> {
    check_gamma(gamma, d)?;
    Ok(ProbBound {
        raw: (d - gamma) as f64 * (-(gamma as f64 + 1.0)).exp2(),
    })
}

/// `ceil((n - gamma)/r) (1 - 2^{-r}) 2^{-gamma}` for the block lower-triangular family.
pub fn bound_square(n: usize, r: usize, gamma: usize) -> Result<ProbBound> {
    if r == 0 || !n.is_multiple_of(r) {
        return Err(Error::InvalidParameter(format!("r={r} must divide n={n}")));
    }
    check_gamma(gamma, n)?;
    let u = (n - gamma).div_ceil(r) as f64;
    Ok(ProbBound {
        raw: u * (1.0 - (-(r as f64)).exp2()) * (-(gamma as f64)).exp2(),
    })
}

/// `u (1 - 2^{-r_max}) 2^{-gamma + n - wr + (r - r_min)(u - 1)}` with
/// `u = ceil((n - gamma)/r_min)`.
pub fn bound_vertical(spec: &StructuredSpec, gamma: usize) -> Result<ProbBound> {
    let StructuredSpec::Vertical { r, widths } = spec else {
        return Err(Error::InvalidParameter(format!(
            "vertical bound applied to {} spec",
            spec.family()
        )));
    };
    spec.validate()?;
    let r_min = *widths.iter().min().expect("validated non-empty");
    let r_max = *widths.iter().max().expect("validated non-empty");
    if r_min == 0 {
        return Err(Error::DegenerateSpec("r_min = 0 leaves u undefined".into()));
    }
    let n = spec.full_rank();
    check_gamma(gamma, n)?;
    let w = widths.len() as f64;
    let u = (n - gamma).div_ceil(r_min) as f64;
    let exp = -(gamma as f64) + n as f64 - w * *r as f64 + (*r - r_min) as f64 * (u - 1.0);
    Ok(ProbBound {
        raw: u * (1.0 - (-(r_max as f64)).exp2()) * exp.exp2(),
    })
}

/// `u (1 - 2^{-r}) 2^{-gamma + n - w r_min + (r_min - r)(u - 1)}` with
/// `u = ceil((n - gamma)/r)`.
pub fn bound_horizontal(spec: &StructuredSpec, gamma: usize) -> Result<ProbBound> {
    let StructuredSpec::Horizontal { r, widths } = spec else {
        return Err(Error::InvalidParameter(format!(
            "horizontal bound applied to {} spec",
            spec.family()
        )));
    };
    spec.validate()?;
    let r_min = *widths.iter().min().expect("validated non-empty");
    let n = spec.full_rank();
    check_gamma(gamma, n)?;
    let w = widths.len() as f64;
    let u = (n - gamma).div_ceil(*r) as f64;
    let exp =
        -(gamma as f64) + n as f64 - w * r_min as f64 + (r_min as f64 - *r as f64) * (u - 1.0);
    Ok(ProbBound {
        raw: u * (1.0 - (-(*r as f64)).exp2()) * exp.exp2(),
    })
}

/// The family's own bound on `Pr{rank < full_rank - gamma}`.
pub fn bound_for(spec: &StructuredSpec, gamma: usize) -> Result<ProbBound> {
    spec.validate()?;
    match spec {
        StructuredSpec::Single { cols, .. } => bound_single(*cols, gamma),
        StructuredSpec::Square { blocks, block } => bound_square(blocks * block, *block, gamma),
        StructuredSpec::Vertical { .. } => bound_vertical(spec, gamma),
        StructuredSpec::Horizontal { .. } => bound_horizontal(spec, gamma),
    }
}

/// Largest `k` with `k <= n - log2(1/eps)`, i.e. the widest dense `n x k`
/// matrix guaranteed full column rank with failure probability at most `eps`.
pub fn dense_rank_threshold(n: usize, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps={eps} outside (0,1)")));
    }
    let k = n as f64 - (1.0 / eps).log2();
    // absorb rounding in log2 for exact powers of two
    Ok((k + 1e-9).floor().max(0.0) as usize)
}

/// Smallest `eps` for which an `n x k` dense matrix is covered by
/// [`dense_rank_threshold`]: `2^{-(n-k)}`.
pub fn bound_dense_rank(n: usize, k: usize) -> Result<ProbBound> {
    if k > n {
        return Err(Error::InvalidParameter(format!("k={k} exceeds n={n}")));
    }
    Ok(ProbBound {
        raw: (-((n - k) as f64)).exp2(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeficiencyEstimate {
    pub threshold: usize,
    pub trials: usize,
    pub failures: usize,
    pub empirical_prob: f64,
    pub hoeffding_slack: f64,
}

/// Two-sided Hoeffding half-width at failure probability `delta`.
pub fn hoeffding_slack(trials: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * trials as f64)).sqrt()
}

/// Histogram of sampled ranks: entry `i` counts trials with rank `i`.
///
/// Trials are split into fixed-size chunks, each with a stream derived from a
/// single draw of `rng`, so the histogram does not depend on the worker count.
pub fn rank_histogram<R: RngCore + ?Sized>(
    spec: &StructuredSpec,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    spec.validate()?;
    let base = rng.next_u64();
    let masks = spec.row_masks();
    let cols = spec.ncols();
    let max_rank = spec.nrows().min(cols);
    let chunks = trials.div_ceil(MC_CHUNK);
    let hist = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng_for(base, &[seed::stream::CHUNK, c as u64]);
            let n = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut h = vec![0u64; max_rank + 1];
            for _ in 0..n {
                h[sample_masked(cols, &masks, &mut rng).rank()] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; max_rank + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(hist)
}

/// Failures (rank below `threshold`) recorded in a rank histogram.
pub fn deficiency_from_histogram(hist: &[u64], threshold: usize, delta: f64) -> DeficiencyEstimate {
    let trials: u64 = hist.iter().sum();
    let failures: u64 = hist.iter().take(threshold).sum();
    DeficiencyEstimate {
        threshold,
        trials: trials as usize,
        failures: failures as usize,
        empirical_prob: failures as f64 / trials as f64,
        hoeffding_slack: hoeffding_slack(trials as usize, delta),
    }
}

/// Monte Carlo estimate of `Pr{rank < threshold}` with Hoeffding slack at
/// [`DEFAULT_CONFIDENCE_DELTA`].
pub fn estimate_deficiency<R: RngCore + ?Sized>(
    spec: &StructuredSpec,
    threshold: usize,
    trials: usize,
    rng: &mut R,
) -> Result<DeficiencyEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let hist = rank_histogram(spec, trials, rng)?;
    Ok(deficiency_from_histogram(
        &hist,
        threshold,
        DEFAULT_CONFIDENCE_DELTA,
    ))
}

/// Rank of rows packed into `u64` words (at most 64 columns). Independent of
/// [`BitMatrix::rank`] so the two can check each other.
pub fn rank_u64(rows: &[u64]) -> usize {
    let mut slots = [0u64; 64];
    let mut rank = 0;
    for &row in rows {
        let mut x = row;
        while x != 0 {
            let h = 63 - x.leading_zeros() as usize;
            if slots[h] == 0 {
                slots[h] = x;
                rank += 1;
                break;
            }
            x ^= slots[h];
        }
    }
    rank
}

/// Exact distribution of the rank by enumerating every assignment of the free
/// bits (Gray-code order, one bit flip per step). Entry `i` is `Pr{rank = i}`.
pub fn exact_rank_distribution(spec: &StructuredSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let free: Vec<(usize, usize)> = (0..spec.nrows())
        .flat_map(|r| (0..spec.ncols()).map(move |c| (r, c)))
        .filter(|&(r, c)| spec.is_free(r, c))
        .collect();
    if free.len() > EXACT_FREE_BITS_LIMIT {
        return Err(Error::Infeasible {
            free_bits: free.len(),
            limit: EXACT_FREE_BITS_LIMIT,
        });
    }
    // Every column holds at least one free entry, so cols <= free bits <= 24.
    debug_assert!(spec.ncols() <= 64);
    let mut rows = vec![0u64; spec.nrows()];
    let mut counts = vec![0u64; spec.nrows().min(spec.ncols()) + 1];
    let total: u64 = 1 << free.len();
    counts[rank_u64(&rows)] += 1;
    for step in 1..total {
        let (r, c) = free[step.trailing_zeros() as usize];
        rows[r] ^= 1 << c;
        counts[rank_u64(&rows)] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Exact `Pr{rank < threshold}`; fails when the spec has more than
/// [`EXACT_FREE_BITS_LIMIT`] free bits.
pub fn exact_deficiency(spec: &StructuredSpec, threshold: usize) -> Result<f64> {
    let dist = exact_rank_distribution(spec)?;
    Ok(dist.iter().take(threshold).sum())
}
