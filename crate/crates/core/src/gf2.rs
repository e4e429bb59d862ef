//! Bit-packed linear algebra over GF(2).
//!
//! Vectors are stored as little-endian `u64` words: entry `i` lives in word
//! `i / 64` at bit `i % 64`. Bits at positions `>= len` are always zero, so
//! word-level comparisons and popcounts need no masking.

use std::fmt;

use rand::{Rng, RngCore};

use crate::error::{Error, Result};

const WORD: usize = 64;

#[inline]
fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// A vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    /// Unit vector `e_index` of the given length.
    pub fn unit(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(index, true);
        v
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    /// Wraps raw words; bits at positions `>= len` are cleared.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        let tail = len % WORD;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Self { len, words }
    }

    /// Vector with independent fair bits drawn from `rng`.
    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut words: Vec<u64> = (0..words_for(len)).map(|_| rng.next_u64()).collect();
        let tail = len % WORD;
        if tail != 0 {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        Self { len, words }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit index {i} out of range (len={})",
            self.len
        );
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(
            i < self.len,
            "bit index {i} out of range (len={})",
            self.len
        );
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    /// Adds `other` into `self` (xor). Panics if the lengths differ.
    #[inline]
    pub fn xor_assign(&mut self, other: &BitVector) {
        assert_eq!(self.len, other.len, "xor of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    /// Entry-wise product with `other`. Panics if the lengths differ.
    #[inline]
    pub fn and_assign(&mut self, other: &BitVector) {
        assert_eq!(self.len, other.len, "and of vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Index of the lowest set entry.
    pub fn first_one(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * WORD + w.trailing_zeros() as usize)
    }

    /// Iterator over the indices of set entries, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + bit)
            })
        })
    }

    /// Copy truncated or zero-extended to `len` entries.
    pub fn resized(&self, len: usize) -> BitVector {
        let mut out = BitVector::zeros(len);
        let n = out.words.len().min(self.words.len());
        out.words[..n].copy_from_slice(&self.words[..n]);
        let tail = len % WORD;
        if tail != 0 && len < self.len {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        out
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector(")?;
        for i in 0..self.len {
            write!(f, "{}", self.get(i) as u8)?;
        }
        write!(f, ")")
    }
}

/// A dense matrix over GF(2), stored row-major.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct BitMatrix {
    cols: usize,
    rows: Vec<BitVector>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            cols,
            rows: vec![BitVector::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            cols: n,
            rows: (0..n).map(|i| BitVector::unit(n, i)).collect(),
        }
    }

    /// Builds a matrix from rows; every row must have length `cols`.
    pub fn from_rows(cols: usize, rows: Vec<BitVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Ok(Self { cols, rows })
    }

    /// Builds a matrix from a nested slice of 0/1 entries. Panics on ragged input.
    pub fn from_bits(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let rows = rows
            .iter()
            .map(|r| {
                assert_eq!(r.len(), cols, "ragged matrix literal");
                BitVector::from_bits(r)
            })
            .collect();
        Self { cols, rows }
    }

    /// Matrix whose entries are independent fair bits.
    pub fn random_dense<R: RngCore + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        Self {
            cols,
            rows: (0..rows).map(|_| BitVector::random(cols, rng)).collect(),
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<BitVector> {
        self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.rows[r].set(c, value);
    }

    pub fn push_row(&mut self, row: BitVector) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    /// Dimension of the row space, by in-place Gaussian elimination on a copy.
    pub fn rank(&self) -> usize {
        let mut rows: Vec<Vec<u64>> = self.rows.iter().map(|r| r.words.clone()).collect();
        let mut rank = 0;
        for col in 0..self.cols {
            if rank == rows.len() {
                break;
            }
            let (w, b) = (col / WORD, col % WORD);
            let Some(pivot) = (rank..rows.len()).find(|&i| (rows[i][w] >> b) & 1 == 1) else {
                continue;
            };
            rows.swap(rank, pivot);
            let (head, tail) = rows.split_at_mut(rank + 1);
            let prow = &head[rank];
            for row in tail.iter_mut() {
                if (row[w] >> b) & 1 == 1 {
                    for (x, y) in row[w..].iter_mut().zip(&prow[w..]) {
                        *x ^= *y;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    /// GF(2) product `self * other`.
    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != other.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.nrows(),
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut acc = BitVector::zeros(other.cols);
                for i in r.ones() {
                    acc.xor_assign(&other.rows[i]);
                }
                acc
            })
            .collect();
        Ok(BitMatrix {
            cols: other.cols,
            rows,
        })
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.nrows());
        for (r, row) in self.rows.iter().enumerate() {
            for c in row.ones() {
                t.set(c, r, true);
            }
        }
        t
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.nrows(), self.cols)?;
        for row in &self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{}", row.get(c) as u8)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Rank of a matrix over GF(2).
pub fn rank(m: &BitMatrix) -> usize {
    m.rank()
}

/// Product of two matrices over GF(2).
pub fn mul(a: &BitMatrix, b: &BitMatrix) -> Result<BitMatrix> {
    a.mul(b)
}

/// Random `rows x cols` matrix with i.u.d. entries.
pub fn random_dense<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> BitMatrix {
    BitMatrix::random_dense(rows, cols, rng)
}

/// Online row-echelon basis of a growing set of vectors.
///
/// The basis is kept fully reduced: each basis row has a one at its pivot and
/// zeros at every other pivot column, with pivots strictly increasing. When
/// built with [`RankTracker::new`] each basis row also carries its expression
/// as a combination of the *accepted* inserted vectors (the ones for which
/// [`insert`](RankTracker::insert) returned `true`), numbered in acceptance
/// order. That bookkeeping is what lets [`express_in_span`](RankTracker::express_in_span)
/// report coefficients over the original vectors instead of the reduced basis.
#[derive(Clone, Debug)]
pub struct RankTracker {
    dim: usize,
    basis: Vec<BitVector>,
    pivots: Vec<usize>,
    combos: Option<Vec<BitVector>>,
}

impl RankTracker {
    /// Tracker with coefficient bookkeeping.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            basis: Vec::new(),
            pivots: Vec::new(),
            combos: Some(Vec::new()),
        }
    }

    /// Tracker that only maintains the basis; cheaper, but cannot express
    /// vectors in terms of the accepted originals.
    pub fn rank_only(dim: usize) -> Self {
        Self {
            dim,
            basis: Vec::new(),
            pivots: Vec::new(),
            combos: None,
        }
    }

    #[inline]
    pub fn dimension(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn basis(&self) -> &[BitVector] {
        &self.basis
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.dim
    }

    fn check_len(&self, v: &BitVector) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// Reduces `v` against the basis, accumulating the used basis rows'
    /// combinations into `combo` when present.
    #[inline]
    fn reduce(&self, v: &mut BitVector, mut combo: Option<&mut BitVector>) {
        for (i, &p) in self.pivots.iter().enumerate() {
            if (v.words[p / WORD] >> (p % WORD)) & 1 == 1 {
                v.xor_assign(&self.basis[i]);
                if let (Some(c), Some(combos)) = (combo.as_deref_mut(), self.combos.as_ref()) {
                    c.xor_assign(&combos[i]);
                }
            }
        }
    }

    /// Inserts `v`; returns `true` iff it was outside the current span.
    pub fn insert(&mut self, v: &BitVector) -> Result<bool> {
        self.check_len(v)?;
        if self.is_full() {
            return Ok(false);
        }
        let mut v = v.clone();
        let mut combo = self.combos.as_ref().map(|_| BitVector::zeros(self.dim));
        self.reduce(&mut v, combo.as_mut());
        let Some(p) = v.first_one() else {
            return Ok(false);
        };
        if let Some(c) = combo.as_mut() {
            c.set(self.basis.len(), true);
        }
        let (w, b) = (p / WORD, p % WORD);
        for i in 0..self.basis.len() {
            if (self.basis[i].words[w] >> b) & 1 == 1 {
                self.basis[i].xor_assign(&v);
                if let (Some(combos), Some(c)) = (self.combos.as_mut(), combo.as_ref()) {
                    combos[i].xor_assign(c);
                }
            }
        }
        let at = self.pivots.partition_point(|&q| q < p);
        self.pivots.insert(at, p);
        self.basis.insert(at, v);
        if let (Some(combos), Some(c)) = (self.combos.as_mut(), combo) {
            combos.insert(at, c);
        }
        Ok(true)
    }

    /// Whether `v` lies in the span of the inserted vectors.
    pub fn contains(&self, v: &BitVector) -> Result<bool> {
        self.check_len(v)?;
        let mut v = v.clone();
        self.reduce(&mut v, None);
        Ok(v.is_zero())
    }

    /// Coefficients `c` (length = current rank) over the accepted originals
    /// such that `sum_i c_i * original_i = v`, or `None` when `v` is outside
    /// the span.
    pub fn express_in_span(&self, v: &BitVector) -> Result<Option<BitVector>> {
        self.check_len(v)?;
        if self.combos.is_none() {
            return Err(Error::InvalidParameter(
                "tracker was built without coefficient bookkeeping".into(),
            ));
        }
        let mut v = v.clone();
        let mut combo = BitVector::zeros(self.dim);
        self.reduce(&mut v, Some(&mut combo));
        if v.is_zero() {
            Ok(Some(combo.resized(self.rank())))
        } else {
            Ok(None)
        }
    }
}

/// Rank-only incremental basis in row echelon form, indexed by pivot column.
///
/// Unlike [`RankTracker`] rows are never back-substituted, so an insertion
/// only touches the rows whose pivots it actually hits, and each xor starts
/// at the pivot's word. Works on raw word slices to avoid allocation.
#[derive(Clone, Debug)]
pub struct EchelonBasis {
    dim: usize,
    stride: usize,
    rows: Vec<u64>,
    present: Vec<bool>,
    rank: usize,
    scratch: Vec<u64>,
}

impl EchelonBasis {
    pub fn new(dim: usize) -> Self {
        let stride = words_for(dim);
        Self {
            dim,
            stride,
            rows: vec![0; dim * stride],
            present: vec![false; dim],
            rank: 0,
            scratch: vec![0; stride],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full(&self) -> bool {
        self.rank == self.dim
    }

    /// Inserts the vector whose words are `v` (length `ceil(dim/64)`, tail
    /// bits clear); returns `true` iff it raised the rank.
    pub fn insert_words(&mut self, v: &[u64]) -> bool {
        assert_eq!(v.len(), self.stride, "word count does not match dimension");
        if self.is_full() {
            return false;
        }
        let n = self.stride;
        let x = &mut self.scratch;
        x.copy_from_slice(v);
        let mut w = 0;
        loop {
            while w < n && x[w] == 0 {
                w += 1;
            }
            if w == n {
                return false;
            }
            let p = w * WORD + x[w].trailing_zeros() as usize;
            let row = &mut self.rows[p * n..(p + 1) * n];
            if self.present[p] {
                for (a, b) in x[w..].iter_mut().zip(&row[w..]) {
                    *a ^= b;
                }
            } else {
                row.copy_from_slice(x);
                self.present[p] = true;
                self.rank += 1;
                return true;
            }
        }
    }

    pub fn insert(&mut self, v: &BitVector) -> Result<bool> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(self.insert_words(&v.words))
    }
}

/// Inserts `v` into `t`; see [`RankTracker::insert`].
pub fn tracker_insert(t: &mut RankTracker, v: &BitVector) -> Result<bool> {
    t.insert(v)
}

/// See [`RankTracker::express_in_span`].
pub fn express_in_span(t: &RankTracker, v: &BitVector) -> Result<Option<BitVector>> {
    t.express_in_span(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bv(bits: &[u8]) -> BitVector {
        BitVector::from_bits(bits)
    }

    #[test]
    fn rank_examples() {
        assert_eq!(BitMatrix::identity(3).rank(), 3);
        assert_eq!(BitMatrix::zeros(4, 7).rank(), 0);
        assert_eq!(BitMatrix::from_bits(&[&[1, 1], &[1, 1]]).rank(), 1);
        assert_eq!(BitMatrix::zeros(0, 5).rank(), 0);
        assert_eq!(BitMatrix::zeros(3, 0).rank(), 0);
    }

    #[test]
    fn tracker_examples() {
        let mut t = RankTracker::new(2);
        assert!(t.insert(&bv(&[1, 0])).unwrap());
        assert!(t.insert(&bv(&[0, 1])).unwrap());

        let mut t = RankTracker::new(2);
        assert!(t.insert(&bv(&[1, 1])).unwrap());
        assert!(!t.insert(&bv(&[1, 1])).unwrap());
        assert_eq!(t.rank(), 1);

        let mut t = RankTracker::new(3);
        let got: Vec<bool> = [[1, 1, 0], [0, 1, 1], [1, 0, 1]]
            .iter()
            .map(|v| t.insert(&bv(v)).unwrap())
            .collect();
        assert_eq!(got, vec![true, true, false]);
    }

    #[test]
    fn tracker_rejects_wrong_length() {
        let mut t = RankTracker::new(3);
        assert_eq!(
            t.insert(&bv(&[1, 0])),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        );
        assert!(t.express_in_span(&bv(&[1])).is_err());
    }

    #[test]
    fn zero_dimension_tracker() {
        let mut t = RankTracker::new(0);
        assert!(!t.insert(&BitVector::zeros(0)).unwrap());
        assert_eq!(t.rank(), 0);
        assert_eq!(
            t.express_in_span(&BitVector::zeros(0)).unwrap(),
            Some(BitVector::zeros(0))
        );
    }

    #[test]
    fn mul_examples() {
        let b = BitMatrix::from_bits(&[&[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(BitMatrix::identity(2).mul(&b).unwrap(), b);
        let a = BitMatrix::from_bits(&[&[1, 1]]);
        assert_eq!(
            a.mul(&BitMatrix::identity(2)).unwrap(),
            BitMatrix::from_bits(&[&[1, 1]])
        );
        let a = BitMatrix::from_bits(&[&[1, 1], &[0, 1]]);
        let b = BitMatrix::from_bits(&[&[1, 0], &[1, 1]]);
        assert_eq!(
            a.mul(&b).unwrap(),
            BitMatrix::from_bits(&[&[0, 1], &[1, 1]])
        );
        assert!(matches!(
            a.mul(&BitMatrix::zeros(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn express_examples() {
        let mut t = RankTracker::new(2);
        t.insert(&bv(&[1, 0])).unwrap();
        t.insert(&bv(&[0, 1])).unwrap();
        assert_eq!(t.express_in_span(&bv(&[1, 1])).unwrap(), Some(bv(&[1, 1])));

        let mut t = RankTracker::new(3);
        t.insert(&bv(&[1, 1, 0])).unwrap();
        t.insert(&bv(&[0, 1, 1])).unwrap();
        assert_eq!(
            t.express_in_span(&bv(&[1, 0, 1])).unwrap(),
            Some(bv(&[1, 1]))
        );

        let mut t = RankTracker::new(2);
        t.insert(&bv(&[1, 0])).unwrap();
        assert_eq!(t.express_in_span(&bv(&[0, 1])).unwrap(), None);
    }

    #[test]
    fn express_skips_rejected_vectors() {
        // The second insert is rejected, so coefficients index only the
        // first and third vectors.
        let mut t = RankTracker::new(3);
        t.insert(&bv(&[1, 0, 0])).unwrap();
        assert!(!t.insert(&bv(&[1, 0, 0])).unwrap());
        t.insert(&bv(&[1, 1, 0])).unwrap();
        assert_eq!(
            t.express_in_span(&bv(&[0, 1, 0])).unwrap(),
            Some(bv(&[1, 1]))
        );
    }

    #[test]
    fn rank_only_tracker_cannot_express() {
        let t = RankTracker::rank_only(2);
        assert!(t.express_in_span(&bv(&[0, 0])).is_err());
        assert!(t.contains(&bv(&[0, 0])).unwrap());
    }

    #[test]
    fn random_dense_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_dense(0, 5, &mut rng);
        assert_eq!((m.nrows(), m.ncols()), (0, 5));

        // Column of 1000 fair bits: Binomial(1000, 1/2), mean 500, sd ~15.8.
        let m = random_dense(1000, 1, &mut rng);
        let ones = m.rows().iter().filter(|r| r.get(0)).count() as f64;
        assert!(
            (ones - 500.0).abs() <= 4.0 * (250.0f64).sqrt(),
            "ones={ones}"
        );

        let a = random_dense(17, 130, &mut ChaCha8Rng::seed_from_u64(99));
        let b = random_dense(17, 130, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn random_vectors_keep_tail_clear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in [1, 63, 64, 65, 127, 200] {
            let v = BitVector::random(len, &mut rng);
            assert!(v.ones().all(|i| i < len));
            let mut w = v.clone();
            w.xor_assign(&v);
            assert!(w.is_zero());
        }
    }

    #[test]
    fn resized_masks_tail() {
        let v = bv(&[1; 70]);
        let r = v.resized(65);
        assert_eq!(r.count_ones(), 65);
        assert_eq!(r.resized(80).count_ones(), 65);
    }

    #[test]
    fn ones_iterates_ascending() {
        let mut v = BitVector::zeros(150);
        for i in [0, 5, 63, 64, 149] {
            v.set(i, true);
        }
        assert_eq!(v.ones().collect::<Vec<_>>(), vec![0, 5, 63, 64, 149]);
        assert_eq!(v.first_one(), Some(0));
    }

    #[test]
    fn echelon_agrees_with_tracker() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for dim in [1, 63, 64, 65, 130] {
            let mut e = EchelonBasis::new(dim);
            let mut t = RankTracker::rank_only(dim);
            for i in 0..dim + 10 {
                let mut v = BitVector::random(dim, &mut rng);
                if i % 3 == 0 {
                    v = v.resized(dim / 2).resized(dim);
                }
                assert_eq!(e.insert(&v).unwrap(), t.insert(&v).unwrap());
                assert_eq!(e.rank(), t.rank());
            }
        }
        assert!(EchelonBasis::new(4).insert(&BitVector::zeros(5)).is_err());
    }

    #[test]
    fn from_words_masks_tail() {
        let v = BitVector::from_words(3, vec![u64::MAX]);
        assert_eq!(v.to_bits(), vec![1, 1, 1]);
        assert_eq!(v.count_ones(), 3);
    }
}
