//! Session engine: replays a dense code over one traffic realization.
//!
//! The source emits fresh uniformly random global encoding vectors; every
//! interior node re-encodes a random GF(2) combination of the packets it
//! received strictly before the transmission time. A code is the keyed
//! coefficient stream: the bits used by node `u` at its `j`-th successful
//! opportunity come from a stream keyed `(code seed, u, j)`, bit `m` of which
//! selects the node's `m`-th buffered packet. Replaying one code over several
//! traffics therefore changes which opportunities exist, never the
//! coefficients drawn at a given opportunity.
//!
//! Density tracking follows packets through the chain. Every arrival at
//! `v_1` is dense. Each node keeps, for every arrival, its exact
//! representation over that node's dense arrivals. A transmission's
//! representation is the xor of the selected arrivals' representations, and
//! the receiver marks an arrival dense iff that representation is independent
//! of the ones it already marked. The dense count is therefore the rank of the
//! transfer matrix from the upstream dense arrivals, which lower-bounds the
//! density of the receiver's decoding matrix.

use std::fmt::Write as _;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gf2::{BitVector, EchelonBasis, RankTracker};
use crate::seed;
use crate::traffic::{merge_timeline, NetworkConfig, TrafficRealization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOptions {
    /// Track rank and density at every node. When off only the sink's rank
    /// is maintained.
    pub track_density: bool,
    /// Stop processing events once the sink decodes.
    pub stop_at_completion: bool,
    /// Keep the sink's global encoding vectors in the trace.
    pub keep_sink_vectors: bool,
}

impl SessionOptions {
    pub fn full() -> Self {
        Self {
            track_density: true,
            stop_at_completion: false,
            keep_sink_vectors: false,
        }
    }

    /// Cheapest mode: sink rank only, stopping at completion.
    pub fn delay_only() -> Self {
        Self {
            track_density: false,
            stop_at_completion: true,
            keep_sink_vectors: false,
        }
    }
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self::full()
    }
}

/// State of a node right after one of its arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalRecord {
    pub time: f64,
    /// Rank of the node's decoding matrix.
    pub rank: usize,
    /// Tracked dense count (0 when density is not tracked).
    pub dense: usize,
}

/// One processed timeline event. `emitted` is false when the transmitter had
/// nothing buffered before `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub link: usize,
    pub opportunity: usize,
    pub emitted: bool,
}

/// A packet received by the sink.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkPacket {
    pub time: f64,
    pub global: BitVector,
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    pub config: NetworkConfig,
    pub k: usize,
    pub code_seed: u64,
    pub traffic_seed: Option<u64>,
    pub density_tracked: bool,
    /// `arrivals[u - 1]` holds node `v_u`'s records; without density tracking
    /// only the sink's are filled.
    pub arrivals: Vec<Vec<ArrivalRecord>>,
    pub events: Vec<EventRecord>,
    pub completion: Option<f64>,
    pub final_rank: usize,
    /// Present when requested through [`SessionOptions::keep_sink_vectors`].
    pub sink_packets: Option<Vec<SinkPacket>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodingDelay {
    Complete(f64),
    /// The horizon ran out with the sink at this rank.
    Timeout(usize),
}

impl CodingDelay {
    /// The delay, with timeouts mapped to `+inf`.
    pub fn value(self) -> f64 {
        match self {
            CodingDelay::Complete(t) => t,
            CodingDelay::Timeout(_) => f64::INFINITY,
        }
    }

    pub fn is_timeout(self) -> bool {
        matches!(self, CodingDelay::Timeout(_))
    }
}

impl SessionTrace {
    pub fn links(&self) -> usize {
        self.arrivals.len()
    }

    pub fn events_processed(&self) -> usize {
        self.events.len()
    }

    pub fn coding_delay(&self) -> CodingDelay {
        coding_delay(self)
    }

    pub fn sink_rank_at(&self, t: f64) -> usize {
        sink_rank_at(self, t)
    }

    pub fn density_at(&self, node: usize, t: f64) -> Result<usize> {
        density_at(self, node, t)
    }

    /// Tab-separated per-event rows: time, link, opportunity, emitted, sink
    /// rank, then the dense count at each node after the event.
    pub fn export_events(&self) -> Result<String> {
        if !self.density_tracked {
            return Err(Error::DensityNotTracked);
        }
        let l = self.links();
        let mut out = String::from("time\tlink\topportunity\temitted\tsink_rank");
        for u in 1..=l {
            let _ = write!(out, "\tdense_{u}");
        }
        out.push('\n');
        let mut seen = vec![0usize; l];
        for e in &self.events {
            if e.emitted {
                seen[e.link - 1] += 1;
            }
            let at = |u: usize| seen[u].checked_sub(1).map(|i| self.arrivals[u][i]);
            let rank = at(l - 1).map_or(0, |r| r.rank);
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{rank}",
                e.time, e.link, e.opportunity, e.emitted as u8
            );
            for u in 0..l {
                let _ = write!(out, "\t{}", at(u).map_or(0, |r| r.dense));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn coding_delay(trace: &SessionTrace) -> CodingDelay {
    if trace.k == 0 {
        return CodingDelay::Complete(0.0);
    }
    match trace.completion {
        Some(t) => CodingDelay::Complete(t),
        None => CodingDelay::Timeout(trace.final_rank),
    }
}

fn last_at(records: &[ArrivalRecord], t: f64) -> Option<&ArrivalRecord> {
    let n = records.partition_point(|r| r.time <= t);
    n.checked_sub(1).map(|i| &records[i])
}

/// Rank of the sink's decoding matrix over arrivals at times `<= t`.
pub fn sink_rank_at(trace: &SessionTrace, t: f64) -> usize {
    trace
        .arrivals
        .last()
        .and_then(|r| last_at(r, t))
        .map_or(0, |r| r.rank)
}

/// Tracked dense count at node `v_node` (1-based) over arrivals at times `<= t`.
pub fn density_at(trace: &SessionTrace, node: usize, t: f64) -> Result<usize> {
    if node == 0 || node > trace.links() {
        return Err(Error::InvalidParameter(format!(
            "node {node} outside 1..={}",
            trace.links()
        )));
    }
    if !trace.density_tracked {
        return Err(Error::DensityNotTracked);
    }
    Ok(last_at(&trace.arrivals[node - 1], t).map_or(0, |r| r.dense))
}

const CHUNK: usize = 8;

/// Packet buffer with Four-Russians tables over complete groups of eight
/// packets, so a random combination costs one table lookup per group.
struct Buffer {
    stride: usize,
    vecs: Vec<u64>,
    tables: Vec<u64>,
    len: usize,
}

impl Buffer {
    fn new(dim: usize) -> Self {
        Self {
            stride: dim.div_ceil(64),
            vecs: Vec::new(),
            tables: Vec::new(),
            len: 0,
        }
    }

    fn vector(&self, i: usize) -> &[u64] {
        &self.vecs[i * self.stride..(i + 1) * self.stride]
    }

    fn push(&mut self, v: &[u64]) {
        self.vecs.extend_from_slice(v);
        self.len += 1;
        if self.len.is_multiple_of(CHUNK) {
            let n = self.stride;
            let base = self.tables.len();
            let first = self.len - CHUNK;
            self.tables.resize(base + (1 << CHUNK) * n, 0);
            for m in 1..(1usize << CHUNK) {
                let low = m.trailing_zeros() as usize;
                let prev = m & (m - 1);
                let (done, rest) = self.tables[base..].split_at_mut(m * n);
                let src = &self.vecs[(first + low) * n..(first + low + 1) * n];
                for ((out, a), b) in rest[..n]
                    .iter_mut()
                    .zip(&done[prev * n..(prev + 1) * n])
                    .zip(src)
                {
                    *out = a ^ b;
                }
            }
        }
    }

    /// Xor of the first `n` buffered vectors selected by `coeffs`.
    fn combine(&self, coeffs: &[u64], n: usize, out: &mut [u64]) {
        out.fill(0);
        let s = self.stride;
        let full = n / CHUNK;
        let table_size = (1 << CHUNK) * s;
        for c in 0..full {
            let bit = c * CHUNK;
            let byte = ((coeffs[bit / 64] >> (bit % 64)) & 0xff) as usize;
            if byte != 0 {
                let row = &self.tables[c * table_size + byte * s..c * table_size + (byte + 1) * s];
                for (o, r) in out.iter_mut().zip(row) {
                    *o ^= r;
                }
            }
        }
        for m in full * CHUNK..n {
            if (coeffs[m / 64] >> (m % 64)) & 1 == 1 {
                for (o, r) in out.iter_mut().zip(self.vector(m)) {
                    *o ^= r;
                }
            }
        }
    }
}

struct Node {
    times: Vec<f64>,
    /// Global vectors; only kept for transmitting nodes.
    buffer: Option<Buffer>,
    rank: Option<EchelonBasis>,
    /// Representation of each arrival over this node's dense arrivals.
    coords: Vec<BitVector>,
    /// Representations of the upstream transmissions that were marked dense.
    projection: Option<RankTracker>,
    /// Arrival index of each dense arrival, in acceptance order.
    dense_index: Vec<usize>,
    dense: usize,
}

fn random_words(bits: usize, rng: &mut impl RngCore) -> Vec<u64> {
    let mut w: Vec<u64> = (0..bits.div_ceil(64)).map(|_| rng.next_u64()).collect();
    if !bits.is_multiple_of(64) {
        if let Some(last) = w.last_mut() {
            *last &= (1u64 << (bits % 64)) - 1;
        }
    }
    w
}

/// Runs one session of the code identified by `code_seed` over `tr`.
pub fn run_session(
    cfg: &NetworkConfig,
    tr: &TrafficRealization,
    code_seed: u64,
    opts: &SessionOptions,
) -> Result<SessionTrace> {
    cfg.validate()?;
    tr.validate_for(cfg)?;
    let (l, k) = (cfg.links, cfg.messages);
    let full = opts.track_density;
    let capacity: Vec<usize> = tr.links.iter().map(Vec::len).collect();

    let mut nodes: Vec<Node> = (1..=l)
        .map(|u| Node {
            times: Vec::with_capacity(capacity[u - 1]),
            buffer: (u < l).then(|| Buffer::new(k)),
            rank: (full || u == l).then(|| EchelonBasis::new(k)),
            coords: Vec::new(),
            projection: (full && u >= 2).then(|| RankTracker::new(capacity[u - 2])),
            dense_index: Vec::new(),
            dense: 0,
        })
        .collect();

    let mut arrivals: Vec<Vec<ArrivalRecord>> = vec![Vec::new(); l];
    let mut events = Vec::new();
    let mut sink_packets = opts.keep_sink_vectors.then(Vec::new);
    let mut completion = None;
    let mut global = vec![0u64; k.div_ceil(64)];

    for ev in merge_timeline(tr).events {
        let u = ev.link - 1;
        let t = ev.time;
        let mut rng = seed::rng_for(
            code_seed,
            &[seed::stream::COEFF, u as u64, ev.opportunity as u64],
        );
        let mut projection = None;
        if u == 0 {
            global = random_words(k, &mut rng);
        } else {
            let tx = &nodes[u - 1];
            let n = tx.times.partition_point(|&a| a < t);
            if n == 0 {
                events.push(EventRecord {
                    time: t,
                    link: ev.link,
                    opportunity: ev.opportunity,
                    emitted: false,
                });
                continue;
            }
            let coeffs = random_words(n, &mut rng);
            let buf = tx
                .buffer
                .as_ref()
                .expect("transmitting nodes keep a buffer");
            buf.combine(&coeffs, n, &mut global);
            if full {
                let mut p = BitVector::zeros(capacity[u - 1]);
                let sel = BitVector::from_words(n, coeffs);
                for m in sel.ones() {
                    p.xor_assign(&tx.coords[m]);
                }
                projection = Some(p);
            }
        }
        events.push(EventRecord {
            time: t,
            link: ev.link,
            opportunity: ev.opportunity,
            emitted: true,
        });

        let rx = &mut nodes[u];
        let index = rx.times.len();
        rx.times.push(t);
        if let Some(b) = rx.buffer.as_mut() {
            b.push(&global);
        }
        let rank = rx.rank.as_mut().map(|e| {
            e.insert_words(&global);
            e.rank()
        });
        let mut dense_now = false;
        if full {
            let width = capacity[u];
            let keeps_coords = rx.buffer.is_some();
            match (rx.projection.as_mut(), projection) {
                (Some(tracker), Some(p)) => {
                    if tracker.insert(&p)? {
                        dense_now = true;
                        rx.dense_index.push(index);
                        if keeps_coords {
                            rx.coords.push(BitVector::unit(width, index));
                        }
                    } else if keeps_coords {
                        let gamma = tracker
                            .express_in_span(&p)?
                            .expect("rejected vector lies in the span");
                        let mut c = BitVector::zeros(width);
                        for i in gamma.ones() {
                            c.set(rx.dense_index[i], true);
                        }
                        rx.coords.push(c);
                    }
                }
                _ => {
                    dense_now = true;
                    if keeps_coords {
                        rx.coords.push(BitVector::unit(width, index));
                    }
                }
            }
            if dense_now {
                rx.dense += 1;
            }
        }
        if let Some(rank) = rank {
            arrivals[u].push(ArrivalRecord {
                time: t,
                rank,
                dense: rx.dense,
            });
        }
        if u + 1 == l {
            if let Some(sp) = sink_packets.as_mut() {
                sp.push(SinkPacket {
                    time: t,
                    global: BitVector::from_words(k, global.clone()),
                    dense: dense_now,
                });
            }
            if completion.is_none() && rank == Some(k) {
                completion = Some(t);
                if opts.stop_at_completion {
                    break;
                }
            }
        }
    }

    let final_rank = arrivals[l - 1].last().map_or(0, |r| r.rank);
    Ok(SessionTrace {
        config: cfg.clone(),
        k,
        code_seed,
        traffic_seed: None,
        density_tracked: full,
        arrivals,
        events,
        completion,
        final_rank,
        sink_packets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::sample_traffic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn regular(l: usize, k: usize, horizon: f64) -> (NetworkConfig, TrafficRealization) {
        let cfg = NetworkConfig::regular_lossless(l, k)
            .unwrap()
            .with_horizon(horizon)
            .unwrap();
        let tr = sample_traffic(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        (cfg, tr)
    }

    #[test]
    fn single_link_single_message_is_geometric() {
        let (cfg, tr) = regular(1, 1, 64.0);
        let n = 10_000;
        let mut total = 0.0;
        let mut first = 0;
        for s in 0..n {
            let d = run_session(&cfg, &tr, s, &SessionOptions::delay_only())
                .unwrap()
                .coding_delay()
                .value();
            total += d;
            first += (d == 1.0) as usize;
        }
        let mean = total / n as f64;
        // Geometric(1/2): mean 2, sd sqrt(2).
        assert!(
            (mean - 2.0).abs() < 4.0 * 2f64.sqrt() / (n as f64).sqrt(),
            "mean {mean}"
        );
        let frac = first as f64 / n as f64;
        assert!(
            (frac - 0.5).abs() < 4.0 * 0.5 / (n as f64).sqrt(),
            "Pr(t=1) {frac}"
        );
    }

    #[test]
    fn two_links_skip_empty_buffer() {
        let (cfg, tr) = regular(2, 1, 16.0);
        for s in 0..200 {
            let trace = run_session(&cfg, &tr, s, &SessionOptions::full()).unwrap();
            assert!(!trace.events[1].emitted, "node 1 has nothing at t=1");
            assert_eq!(trace.events[1].link, 2);
            if let CodingDelay::Complete(t) = trace.coding_delay() {
                assert!(t >= 2.0);
            }
        }
    }

    #[test]
    fn sessions_are_deterministic() {
        let (cfg, tr) = regular(3, 16, 80.0);
        let a = run_session(&cfg, &tr, 9, &SessionOptions::full()).unwrap();
        let b = run_session(&cfg, &tr, 9, &SessionOptions::full()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delay_is_at_least_k_plus_l_minus_one() {
        for l in 1..=4 {
            let (cfg, tr) = regular(l, 12, 200.0);
            for s in 0..50 {
                let d = run_session(&cfg, &tr, s, &SessionOptions::delay_only())
                    .unwrap()
                    .coding_delay();
                assert!(d.value() >= (12 + l - 1) as f64, "{d:?}");
            }
        }
    }

    #[test]
    fn delay_only_matches_full_mode() {
        let cfg = NetworkConfig::regular_bernoulli(3, 20, vec![0.7, 0.9, 0.8]).unwrap();
        for s in 0..20 {
            let tr = sample_traffic(&cfg, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            let a = run_session(&cfg, &tr, s, &SessionOptions::full()).unwrap();
            let b = run_session(&cfg, &tr, s, &SessionOptions::delay_only()).unwrap();
            assert_eq!(a.coding_delay(), b.coding_delay());
            assert!(b.density_at(1, 10.0).is_err());
        }
    }

    #[test]
    fn node_one_density_counts_arrivals() {
        let (cfg, tr) = regular(2, 8, 40.0);
        let trace = run_session(&cfg, &tr, 1, &SessionOptions::full()).unwrap();
        for tau in 0..=40 {
            assert_eq!(trace.density_at(1, tau as f64).unwrap(), tau);
        }
        assert!(trace.density_at(0, 1.0).is_err());
        assert!(trace.density_at(3, 1.0).is_err());
        assert_eq!(trace.density_at(2, 0.0).unwrap(), 0);
    }

    #[test]
    fn rank_and_density_sandwich() {
        let cfg = NetworkConfig::regular_bernoulli(3, 24, vec![0.8; 3]).unwrap();
        let tr = sample_traffic(&cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let trace = run_session(&cfg, &tr, 4, &SessionOptions::full()).unwrap();
        let mut prev = 0;
        for t in 0..=cfg.horizon as usize {
            let t = t as f64;
            let r = trace.sink_rank_at(t);
            assert!(r >= prev && r <= 24);
            prev = r;
            let arrived = trace.arrivals[2].iter().filter(|a| a.time <= t).count();
            assert!(r <= arrived);
            for node in 1..=3 {
                let arrived = trace.arrivals[node - 1]
                    .iter()
                    .filter(|a| a.time <= t)
                    .count();
                assert!(trace.density_at(node, t).unwrap() <= arrived);
            }
        }
        assert_eq!(trace.sink_rank_at(0.0), 0);
        if let Some(c) = trace.completion {
            assert_eq!(trace.sink_rank_at(c), 24);
            assert!(trace.sink_rank_at(c - 0.5) < 24);
        }
    }

    #[test]
    fn code_coefficients_do_not_depend_on_traffic() {
        // With a single link the source packet at opportunity j is fixed by
        // the code, whichever time the opportunity lands on.
        let cfg = NetworkConfig::poisson(1, 32, vec![0.5], crate::traffic::Loss::Lossless).unwrap();
        let opts = SessionOptions {
            keep_sink_vectors: true,
            ..SessionOptions::full()
        };
        let a_tr = sample_traffic(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b_tr = sample_traffic(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = run_session(&cfg, &a_tr, 7, &opts)
            .unwrap()
            .sink_packets
            .unwrap();
        let b = run_session(&cfg, &b_tr, 7, &opts)
            .unwrap()
            .sink_packets
            .unwrap();
        let n = a.len().min(b.len());
        assert!(n > 10);
        for i in 0..n {
            assert_eq!(a[i].global, b[i].global);
        }
    }

    #[test]
    fn buffer_combine_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 130;
        let mut buf = Buffer::new(dim);
        let vecs: Vec<BitVector> = (0..37).map(|_| BitVector::random(dim, &mut rng)).collect();
        for v in &vecs {
            buf.push(v.words());
        }
        for n in [1, 7, 8, 9, 16, 37] {
            let coeffs = random_words(n, &mut rng);
            let mut out = vec![0; buf.stride];
            buf.combine(&coeffs, n, &mut out);
            let mut want = BitVector::zeros(dim);
            for m in BitVector::from_words(n, coeffs).ones() {
                want.xor_assign(&vecs[m]);
            }
            assert_eq!(out, want.words());
        }
    }

    #[test]
    fn coding_delay_reads_trace() {
        let (cfg, tr) = regular(1, 4, 3.0);
        let mut trace = run_session(&cfg, &tr, 0, &SessionOptions::full()).unwrap();
        trace.completion = Some(147.0);
        assert_eq!(trace.coding_delay(), CodingDelay::Complete(147.0));
        trace.completion = None;
        trace.final_rank = 1;
        assert_eq!(trace.coding_delay(), CodingDelay::Timeout(1));
        trace.k = 0;
        assert_eq!(trace.coding_delay(), CodingDelay::Complete(0.0));
    }

    #[test]
    fn export_has_one_row_per_event() {
        let (cfg, tr) = regular(2, 4, 10.0);
        let trace = run_session(&cfg, &tr, 5, &SessionOptions::full()).unwrap();
        let text = trace.export_events().unwrap();
        assert_eq!(text.lines().count(), 1 + trace.events.len());
        assert!(text.starts_with("time\tlink\topportunity\temitted\tsink_rank\tdense_1\tdense_2\n"));
    }
}
