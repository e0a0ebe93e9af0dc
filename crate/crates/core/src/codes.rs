//! Bipolar code sequences and complementary Golay pair construction.

use crate::error::{Error, Result};

/// The 8-chip complementary pair used for coded transmission, sequence A.
pub const GOLAY8_A: [i8; 8] = [1, 1, -1, -1, -1, 1, -1, 1];
/// The 8-chip complementary pair used for coded transmission, sequence B.
pub const GOLAY8_B: [i8; 8] = [1, 1, 1, 1, -1, 1, 1, -1];

/// A bipolar (+1/-1) chip sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSequence {
    chips: Vec<i8>,
}

impl CodeSequence {
    pub fn new(chips: Vec<i8>) -> Result<Self> {
        if chips.is_empty() {
            return Err(Error::InvalidArgument("code must be non-empty".into()));
        }
        if chips.iter().any(|&c| c != 1 && c != -1) {
            return Err(Error::InvalidArgument("chips must be +1 or -1".into()));
        }
        Ok(Self { chips })
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Aperiodic autocorrelation at integer lags `0..len`.
    pub fn autocorrelation(&self) -> Vec<i64> {
        let n = self.chips.len();
        (0..n)
            .map(|lag| {
                (0..n - lag)
                    .map(|i| self.chips[i] as i64 * self.chips[i + lag] as i64)
                    .sum()
            })
            .collect()
    }
}

/// Sum of the two autocorrelations at lags `0..len`; a complementary pair
/// gives `2N` at lag 0 and exactly 0 elsewhere.
pub fn complementary_autocorrelation(a: &CodeSequence, b: &CodeSequence) -> Result<Vec<i64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.autocorrelation()
        .iter()
        .zip(b.autocorrelation())
        .map(|(x, y)| x + y)
        .collect())
}

/// True when the sequences form a complementary pair (integer arithmetic).
pub fn is_complementary_pair(a: &CodeSequence, b: &CodeSequence) -> bool {
    match complementary_autocorrelation(a, b) {
        Ok(c) => c[0] == 2 * a.len() as i64 && c[1..].iter().all(|&v| v == 0),
        Err(_) => false,
    }
}

/// Generate a complementary Golay pair of the given power-of-two length.
///
/// Length 8 returns the fixed pair in [`GOLAY8_A`]/[`GOLAY8_B`]; other
/// lengths come from the doubling recursion `A' = A||B, B' = A||-B` seeded
/// from `({1}, {1})`.
pub fn golay_pair(length: usize) -> Result<(CodeSequence, CodeSequence)> {
    if length == 0 || !length.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "golay pair length must be a power of two, got {length}"
        )));
    }
    if length == 8 {
        return Ok((
            CodeSequence::new(GOLAY8_A.to_vec())?,
            CodeSequence::new(GOLAY8_B.to_vec())?,
        ));
    }
    let mut a = vec![1i8];
    let mut b = vec![1i8];
    while a.len() < length {
        let next_a: Vec<i8> = a.iter().chain(b.iter()).copied().collect();
        let next_b: Vec<i8> = a.iter().copied().chain(b.iter().map(|&c| -c)).collect();
        a = next_a;
        b = next_b;
    }
    Ok((CodeSequence::new(a)?, CodeSequence::new(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn length_eight_matches_published_pair() {
        let (a, b) = golay_pair(8).unwrap();
        assert_eq!(a.chips(), &[1, 1, -1, -1, -1, 1, -1, 1]);
        assert_eq!(b.chips(), &[1, 1, 1, 1, -1, 1, 1, -1]);
        assert!(is_complementary_pair(&a, &b));
    }

    #[test]
    fn base_case() {
        let (a, b) = golay_pair(1).unwrap();
        assert_eq!(a.chips(), &[1]);
        assert_eq!(b.chips(), &[1]);
    }

    #[test]
    fn eight_chip_sidelobes_cancel() {
        // brute-force autocorrelation over all lags
        let (a, b) = golay_pair(8).unwrap();
        let sum = complementary_autocorrelation(&a, &b).unwrap();
        assert_eq!(sum[0], 16);
        assert!(sum[1..].iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(golay_pair(0).is_err());
        assert!(golay_pair(3).is_err());
        assert!(golay_pair(12).is_err());
    }

    proptest! {
        #[test]
        fn doubling_construction_is_complementary(k in 0u32..10) {
            let n = 1usize << k;
            let (a, b) = golay_pair(n).unwrap();
            let sum = complementary_autocorrelation(&a, &b).unwrap();
            prop_assert_eq!(sum[0], 2 * n as i64);
            prop_assert!(sum[1..].iter().all(|&v| v == 0));
        }
    }
}
