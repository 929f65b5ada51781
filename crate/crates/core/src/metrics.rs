//! Packet matching, payload BER and the per-session link report.
//!
//! Transmitted and received packets are paired by sequence number. BER is
//! counted over the payloads of matched pairs only; packets that never
//! arrived show up in the loss counters instead.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::bits::hamming_distance;
use crate::framing::Packet;
use crate::video::{mean_psnr, FramePsnr};

/// Sessions are unwrapped from 16-bit sequence numbers by taking the
/// candidate nearest the last matched value.
pub const SEQ_WINDOW: i64 = 1 << 15;

/// APSNR at or above this marks a session acceptable.
pub const ACCEPTABLE_APSNR_DB: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no matched packet pairs: BER is undefined")]
    NoMatchedPairs,
}

/// Maps wrapped 16-bit sequence numbers onto a monotone count.
#[derive(Debug, Clone, Copy, Default)]
pub struct SeqUnwrapper {
    reference: i64,
}

impl SeqUnwrapper {
    pub fn new(reference: i64) -> Self {
        Self { reference }
    }

    /// Unwrapped value nearest the reference; does not move it.
    pub fn unwrap(&self, seq: u16) -> i64 {
        let delta = i64::from(seq.wrapping_sub(self.reference.rem_euclid(1 << 16) as u16) as i16);
        self.reference + delta
    }

    pub fn advance(&mut self, unwrapped: i64) {
        self.reference = unwrapped;
    }
}

/// Pairs of transmitted and received packets sharing a sequence number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchResult<'a> {
    pub pairs: Vec<(&'a Packet, &'a Packet)>,
    /// Transmitted, never received.
    pub tx_only: usize,
    /// Received with no transmitted counterpart (false detections).
    pub rx_only: usize,
    /// Repeat receptions of an already matched sequence number.
    pub duplicates: usize,
}

/// Match in arrival order. Tx sequence numbers are unwrapped in order; each
/// rx number is unwrapped against the last one that names a transmitted
/// packet, so a corrupted header cannot drag the window away.
///
/// The link delivers in order, so the pairs kept are the longest run of rx
/// packets with strictly increasing sequence numbers. A packet outside that
/// run is a duplicate if its number was matched elsewhere and a false
/// detection otherwise; this keeps a header with a corrupted `seq_num` from
/// being paired with an unrelated payload. When adjacent rx packets carry
/// the same number, the one closest to the transmitted payload is paired.
pub fn match_packets<'a>(tx_log: &'a [Packet], rx_log: &'a [Packet]) -> MatchResult<'a> {
    let mut index: BTreeMap<i64, usize> = BTreeMap::new();
    let mut tx_unwrap = SeqUnwrapper::default();
    let mut first = None;
    for (i, p) in tx_log.iter().enumerate() {
        let s = tx_unwrap.unwrap(p.seq_num());
        tx_unwrap.advance(s);
        first.get_or_insert(s);
        index.entry(s).or_insert(i);
    }

    let mut rx_unwrap = SeqUnwrapper::new(first.unwrap_or(0));
    let mut result = MatchResult::default();
    let mut candidates: Vec<(usize, i64)> = Vec::new();
    for (j, p) in rx_log.iter().enumerate() {
        let s = rx_unwrap.unwrap(p.seq_num());
        if index.contains_key(&s) {
            rx_unwrap.advance(s);
            candidates.push((j, s));
        } else {
            result.rx_only += 1;
        }
    }

    let seqs: Vec<i64> = candidates.iter().map(|c| c.1).collect();
    let mut keep = longest_increasing(&seqs);
    // Adjacent copies of one number: pair the copy nearest the tx payload.
    let mut start = 0;
    while start < candidates.len() {
        let s = seqs[start];
        let end = start + seqs[start..].iter().take_while(|&&v| v == s).count();
        if let Some(kept) = (start..end).find(|&c| keep[c]) {
            let tx = &tx_log[index[&s]].payload;
            let distance = |c: usize| {
                let rx = &rx_log[candidates[c].0].payload;
                if rx.len() == tx.len() {
                    hamming_distance(tx, rx)
                } else {
                    u64::MAX
                }
            };
            let best = (start..end).min_by_key(|&c| distance(c)).unwrap_or(kept);
            keep[kept] = false;
            keep[best] = true;
        }
        start = end;
    }
    let mut matched = BTreeMap::new();
    for (&(j, s), &k) in candidates.iter().zip(&keep) {
        if k {
            matched.insert(s, ());
            result.pairs.push((&tx_log[index[&s]], &rx_log[j]));
        }
    }
    for (&(_, s), &k) in candidates.iter().zip(&keep) {
        if !k {
            if matched.contains_key(&s) {
                result.duplicates += 1;
            } else {
                result.rx_only += 1;
            }
        }
    }
    result.tx_only = index.len() - result.pairs.len();
    result
}

/// Mask of one longest strictly increasing subsequence. Among equal values
/// the earliest is kept.
fn longest_increasing(values: &[i64]) -> Vec<bool> {
    let mut tails: Vec<usize> = Vec::new();
    let mut prev = alloc::vec![usize::MAX; values.len()];
    for (i, &v) in values.iter().enumerate() {
        let pos = tails.partition_point(|&t| values[t] < v);
        if pos < tails.len() && values[tails[pos]] == v {
            continue;
        }
        if pos > 0 {
            prev[i] = tails[pos - 1];
        }
        if pos == tails.len() {
            tails.push(i);
        } else {
            tails[pos] = i;
        }
    }
    let mut keep = alloc::vec![false; values.len()];
    let mut cur = tails.last().copied().unwrap_or(usize::MAX);
    while cur != usize::MAX {
        keep[cur] = true;
        cur = prev[cur];
    }
    keep
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BerCounts {
    pub bit_errors: u64,
    pub bits_compared: u64,
    /// Pairs left out because their payload lengths differ.
    pub length_mismatches: usize,
}

impl BerCounts {
    pub fn ber(&self) -> Option<f64> {
        (self.bits_compared > 0).then(|| self.bit_errors as f64 / self.bits_compared as f64)
    }
}

/// Hamming distance over matched payloads.
pub fn compute_ber(matches: &MatchResult<'_>) -> Result<BerCounts, MetricsError> {
    if matches.pairs.is_empty() {
        return Err(MetricsError::NoMatchedPairs);
    }
    let mut counts = BerCounts::default();
    for (tx, rx) in &matches.pairs {
        if tx.payload.len() != rx.payload.len() {
            counts.length_mismatches += 1;
            continue;
        }
        counts.bit_errors += hamming_distance(&tx.payload, &rx.payload);
        counts.bits_compared += 8 * tx.payload.len() as u64;
    }
    Ok(counts)
}

/// One row of results for a session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinkReport {
    pub session_id: String,
    /// `None` when nothing could be compared.
    pub ber: Option<f64>,
    pub bit_errors: u64,
    pub bits_compared: u64,
    pub packets_tx: u64,
    pub packets_rx: u64,
    pub packets_dropped: u64,
    pub packets_malformed: u64,
    pub packets_rx_only: u64,
    pub packets_duplicate: u64,
    pub length_mismatches: u64,
    pub psnr_series: Vec<FramePsnr>,
    /// `None` when no frame was received.
    pub apsnr_db: Option<f64>,
    pub frames_absent: u64,
    pub acceptable: bool,
}

/// Assemble the report. `packets_rx` counts everything the receiver
/// delivered, `packets_malformed` the header discards.
pub fn build_report(
    session_id: &str,
    matches: &MatchResult<'_>,
    ber: Result<BerCounts, MetricsError>,
    psnr_series: &[FramePsnr],
    packets_malformed: u64,
) -> LinkReport {
    let counts = ber.unwrap_or_default();
    let apsnr_db = mean_psnr(psnr_series);
    LinkReport {
        session_id: session_id.into(),
        ber: counts.ber(),
        bit_errors: counts.bit_errors,
        bits_compared: counts.bits_compared,
        packets_tx: (matches.pairs.len() + matches.tx_only) as u64,
        packets_rx: (matches.pairs.len() + matches.rx_only + matches.duplicates) as u64,
        packets_dropped: matches.tx_only as u64,
        packets_malformed,
        packets_rx_only: matches.rx_only as u64,
        packets_duplicate: matches.duplicates as u64,
        length_mismatches: counts.length_mismatches as u64,
        psnr_series: psnr_series.to_vec(),
        apsnr_db,
        frames_absent: psnr_series.iter().filter(|p| p.psnr_db.is_none()).count() as u64,
        acceptable: apsnr_db.is_some_and(|a| a >= ACCEPTABLE_APSNR_DB),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::DEFAULT_MAX_PAYLOAD;
    use alloc::vec;
    use proptest::prelude::*;

    fn packet(seq: u16, payload: Vec<u8>) -> Packet {
        Packet::new(payload, seq, 1, DEFAULT_MAX_PAYLOAD).unwrap()
    }

    fn log(n: usize, len: usize) -> Vec<Packet> {
        (0..n).map(|i| packet(i as u16, vec![(i * 7) as u8; len])).collect()
    }

    #[test]
    fn identical_logs() {
        let tx = log(50, 100);
        let m = match_packets(&tx, &tx);
        assert_eq!((m.pairs.len(), m.tx_only, m.rx_only, m.duplicates), (50, 0, 0, 0));
        let c = compute_ber(&m).unwrap();
        assert_eq!(c.ber(), Some(0.0));
        assert_eq!(c.bits_compared, 50 * 800);
    }

    #[test]
    fn missing_phantom_and_duplicate() {
        let tx = log(10, 20);
        let mut rx: Vec<Packet> = tx.iter().filter(|p| !(5..=7).contains(&p.seq_num())).cloned().collect();
        rx.push(packet(400, vec![0; 20]));
        rx.push(tx[0].clone());
        let m = match_packets(&tx, &rx);
        assert_eq!((m.pairs.len(), m.tx_only, m.rx_only, m.duplicates), (7, 3, 1, 1));
    }

    #[test]
    fn one_flip_in_1000_bytes() {
        let tx = vec![packet(0, vec![0x5a; 1000])];
        let mut rx = tx.clone();
        rx[0].payload[999] ^= 0x01;
        let c = compute_ber(&match_packets(&tx, &rx)).unwrap();
        assert_eq!((c.bit_errors, c.bits_compared), (1, 8000));
        assert_eq!(c.ber(), Some(1.0 / 8000.0));
    }

    #[test]
    fn boundary_fraction_is_exact() {
        // 1e5 bits, 320 flipped.
        let tx: Vec<Packet> = (0..10).map(|i| packet(i, vec![0; 1250])).collect();
        let mut rx = tx.clone();
        for k in 0..320 {
            rx[k % 10].payload[(k / 10) * 3] ^= 1 << (k % 8);
        }
        let c = compute_ber(&match_packets(&tx, &rx)).unwrap();
        assert_eq!(c.bits_compared, 100_000);
        assert_eq!(c.ber(), Some(3.20e-3));
    }

    #[test]
    fn length_mismatch_excluded() {
        let tx = vec![packet(0, vec![1; 10]), packet(1, vec![2; 10])];
        let rx = vec![packet(0, vec![1; 9]), packet(1, vec![2; 10])];
        let c = compute_ber(&match_packets(&tx, &rx)).unwrap();
        assert_eq!(c.length_mismatches, 1);
        assert_eq!(c.bits_compared, 80);
    }

    #[test]
    fn disjoint_logs_have_no_ber() {
        let tx = log(3, 4);
        let rx = vec![packet(1000, vec![0; 4])];
        let m = match_packets(&tx, &rx);
        assert_eq!(compute_ber(&m), Err(MetricsError::NoMatchedPairs));
        let r = build_report("s", &m, compute_ber(&m), &[], 0);
        assert_eq!(r.ber, None);
        assert_eq!(r.apsnr_db, None);
        assert!(!r.acceptable);
        assert_eq!((r.packets_tx, r.packets_rx, r.packets_dropped), (3, 1, 3));
    }

    #[test]
    fn wrap_over_long_session() {
        let n = 70_000;
        let tx: Vec<Packet> = (0..n).map(|i| packet(i as u16, vec![(i % 251) as u8; 2])).collect();
        // Drop every 1000th packet; the rest must pair with their own copy.
        let rx: Vec<Packet> = tx.iter().enumerate().filter(|(i, _)| i % 1000 != 0).map(|(_, p)| p.clone()).collect();
        let m = match_packets(&tx, &rx);
        assert_eq!(m.pairs.len(), n - 70);
        assert_eq!((m.tx_only, m.rx_only, m.duplicates), (70, 0, 0));
        assert!(m.pairs.iter().all(|(a, b)| core::ptr::eq(*a, *b) || a == b));
        assert_eq!(compute_ber(&m).unwrap().bit_errors, 0);
    }

    #[test]
    fn corrupted_seq_is_not_paired() {
        let tx = log(20, 16);
        let mut rx = tx.clone();
        // Packet 5 arrives claiming to be 13; 13 arrives later as itself.
        rx[5].header.seq_num = 13;
        let m = match_packets(&tx, &rx);
        assert_eq!(m.pairs.len(), 19);
        assert_eq!((m.tx_only, m.rx_only, m.duplicates), (1, 0, 1));
        assert!(m.pairs.iter().all(|(t, r)| t.payload == r.payload));
        assert_eq!(compute_ber(&m).unwrap().bit_errors, 0);
    }

    #[test]
    fn adjacent_same_seq_pairs_closest_payload() {
        let tx = log(20, 16);
        let mut rx = tx.clone();
        // Packet 8 arrives claiming to be 9, just before the real 9.
        rx[8].header.seq_num = 9;
        let m = match_packets(&tx, &rx);
        assert_eq!((m.tx_only, m.rx_only, m.duplicates), (1, 0, 1));
        assert!(m.pairs.iter().all(|(t, r)| t.payload == r.payload));
    }

    #[test]
    fn longest_increasing_run() {
        assert_eq!(longest_increasing(&[1, 2, 900, 3, 4]), vec![true, true, false, true, true]);
        assert_eq!(longest_increasing(&[5, 5, 6]), vec![true, false, true]);
        assert_eq!(longest_increasing(&[]), Vec::<bool>::new());
        assert_eq!(longest_increasing(&[3, 1, 2]), vec![false, true, true]);
    }

    #[test]
    fn unwrapper_picks_nearest() {
        let u = SeqUnwrapper::new(65_530);
        assert_eq!(u.unwrap(3), 65_539);
        assert_eq!(u.unwrap(65_000), 65_000);
        assert_eq!(SeqUnwrapper::new(0).unwrap(65_535), -1);
    }

    #[test]
    fn report_fields() {
        let tx = log(4, 10);
        let m = match_packets(&tx, &tx);
        let series = [
            FramePsnr { frame_index: 0, psnr_db: Some(100.0) },
            FramePsnr { frame_index: 1, psnr_db: None },
        ];
        let r = build_report("loop", &m, compute_ber(&m), &series, 2);
        assert_eq!(r.ber, Some(0.0));
        assert_eq!(r.apsnr_db, Some(100.0));
        assert_eq!(r.frames_absent, 1);
        assert_eq!(r.packets_malformed, 2);
        assert!(r.acceptable);
        let low = [FramePsnr { frame_index: 0, psnr_db: Some(29.99) }];
        assert!(!build_report("x", &m, compute_ber(&m), &low, 0).acceptable);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn injected_flips_counted_and_order_free(
            payloads in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 1..64), 1..20),
            flips in proptest::collection::vec((any::<usize>(), any::<usize>()), 0..40),
            rot in any::<usize>(),
        ) {
            let tx: Vec<Packet> = payloads.iter().enumerate().map(|(i, p)| packet(i as u16, p.clone())).collect();
            let mut rx = tx.clone();
            let mut flipped = alloc::collections::BTreeSet::new();
            for (pi, bi) in flips {
                let pi = pi % rx.len();
                let bi = bi % (rx[pi].payload.len() * 8);
                if flipped.insert((pi, bi)) {
                    rx[pi].payload[bi / 8] ^= 0x80 >> (bi % 8);
                }
            }
            let mut m = match_packets(&tx, &rx);
            let c = compute_ber(&m).unwrap();
            prop_assert_eq!(c.bit_errors, flipped.len() as u64);
            prop_assert_eq!(c.ber() == Some(0.0), tx == rx);
            let k = rot % m.pairs.len();
            m.pairs.rotate_left(k);
            m.pairs.reverse();
            prop_assert_eq!(compute_ber(&m).unwrap(), c);
        }
    }
}
