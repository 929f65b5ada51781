//! Byte/bit conversions.
//!
//! Bit streams are `u8` slices holding one bit (0 or 1) per element.
//! Bytes serialize MSB first.

use alloc::vec::Vec;

/// Expand bytes into bits, MSB first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len() * 8);
    extend_bits(&mut out, bytes);
    out
}

/// Append the bits of `bytes` (MSB first) to `out`.
pub fn extend_bits(out: &mut Vec<u8>, bytes: &[u8]) {
    for &b in bytes {
        for k in (0..8).rev() {
            out.push((b >> k) & 1);
        }
    }
}

/// Pack bits into bytes, MSB first. A trailing partial byte is dropped.
///
/// When `invert` is set every bit is complemented while packing.
pub fn bits_to_bytes(bits: &[u8], invert: bool) -> Vec<u8> {
    let flip = u8::from(invert);
    bits.chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | ((b ^ flip) & 1)))
        .collect()
}

/// Number of differing bits between two equal-length byte slices.
pub fn hamming_distance(a: &[u8], b: &[u8]) -> u64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| u64::from((x ^ y).count_ones()))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn msb_first() {
        assert_eq!(bytes_to_bits(&[0x80, 0x01]), [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(bits_to_bytes(&[1, 0, 1, 0, 0, 0, 0, 1, 1], false), [0xA1]);
        assert_eq!(bits_to_bytes(&[1, 0, 1, 0, 0, 0, 0, 1], true), [0x5E]);
    }

    #[test]
    fn hamming() {
        assert_eq!(hamming_distance(&[0xFF, 0x00], &[0x0F, 0x01]), 5);
        assert_eq!(hamming_distance(&[], &[]), 0);
    }

    proptest! {
        #[test]
        fn pack_unpack(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(bits_to_bytes(&bytes_to_bits(&bytes), false), bytes);
        }
    }
}
