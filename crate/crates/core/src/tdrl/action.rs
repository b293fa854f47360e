//! Binary action grammar.
//!
//! A full sequence is `[scheduling | RIS toggles | compression]`:
//!
//! * scheduling: for each band, `K` transmit indicators then `K` receive
//!   indicators; every `(r, k)` with both set and `r != k` is a candidate link;
//! * RIS: `T_φ` groups of `⌈log2(N+1)⌉` bits (MSB first), each naming an
//!   element to toggle, with values `>= N` meaning "no toggle";
//! * compression: 3 bits (MSB first) per active link, canonical link order.

use serde::{Deserialize, Serialize};

use crate::channel::RisConfig;
use crate::env::{Link, SchedulingMatrix};
use crate::error::{Error, Result};

pub const BETA_BITS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub users: usize,
    pub bands: usize,
    pub elements: usize,
    pub toggles: usize,
    /// Always emit `max_links` compression groups (fixed-length actor).
    pub fixed_length: bool,
}

impl Grammar {
    pub fn new(users: usize, bands: usize, elements: usize, toggles: usize) -> Self {
        Self {
            users,
            bands,
            elements,
            toggles,
            fixed_length: false,
        }
    }

    pub fn schedule_len(&self) -> usize {
        2 * self.users * self.bands
    }

    /// Bits per toggle index, `⌈log2(N+1)⌉`.
    pub fn index_bits(&self) -> usize {
        (usize::BITS - self.elements.leading_zeros()) as usize
    }

    pub fn ris_len(&self) -> usize {
        self.toggles * self.index_bits()
    }

    /// Most links a valid schedule can hold.
    pub fn max_links(&self) -> usize {
        self.bands * (self.users / 2)
    }

    /// Compression groups emitted for a schedule with `links` active links.
    pub fn beta_groups(&self, links: usize) -> usize {
        if self.fixed_length {
            self.max_links()
        } else {
            links
        }
    }

    /// Emitted length of a truncated sequence (RIS + compression).
    pub fn truncated_len(&self, links: usize) -> usize {
        self.ris_len() + BETA_BITS * self.beta_groups(links)
    }

    pub fn full_len(&self, links: usize) -> usize {
        self.schedule_len() + self.truncated_len(links)
    }

    /// Candidate schedule from indicator bits (may violate half-duplex).
    pub fn decode_schedule(&self, bits: &[u8]) -> Result<SchedulingMatrix> {
        if bits.len() != self.schedule_len() {
            return Err(Error::Usage(format!(
                "scheduling segment has {} bits, expected {}",
                bits.len(),
                self.schedule_len()
            )));
        }
        let k = self.users;
        let mut b = SchedulingMatrix::empty(k, self.bands);
        for band in 0..self.bands {
            let tx = &bits[2 * k * band..2 * k * band + k];
            let rx = &bits[2 * k * band + k..2 * k * (band + 1)];
            for r in 0..k {
                for q in 0..k {
                    if r != q && tx[r] == 1 && rx[q] == 1 {
                        b.set(Link { tx: r, rx: q, band }, true)?;
                    }
                }
            }
        }
        Ok(b)
    }

    /// Indicator bits describing `b` (who sends and who receives per band).
    pub fn encode_schedule(&self, b: &SchedulingMatrix) -> Vec<u8> {
        let k = self.users;
        let mut bits = vec![0u8; self.schedule_len()];
        for l in b.links() {
            bits[2 * k * l.band + l.tx] = 1;
            bits[2 * k * l.band + k + l.rx] = 1;
        }
        bits
    }

    /// Toggle indices, `None` for the no-op values.
    pub fn decode_toggles(&self, bits: &[u8]) -> Result<Vec<Option<usize>>> {
        if bits.len() != self.ris_len() {
            return Err(Error::Usage(format!(
                "RIS segment has {} bits, expected {}",
                bits.len(),
                self.ris_len()
            )));
        }
        let w = self.index_bits();
        Ok((0..self.toggles)
            .map(|g| {
                let v = msb_value(&bits[g * w..(g + 1) * w]);
                (v < self.elements).then_some(v)
            })
            .collect())
    }

    /// Applies the toggles to `current`; toggling an element twice undoes it.
    pub fn apply_toggles(&self, current: &RisConfig, bits: &[u8]) -> Result<RisConfig> {
        let mut phi = current.clone();
        for n in self.decode_toggles(bits)?.into_iter().flatten() {
            phi.toggle(n);
        }
        Ok(phi)
    }

    /// Compression indices for the first `links` groups.
    pub fn decode_betas(&self, bits: &[u8], links: usize) -> Result<Vec<u8>> {
        let groups = self.beta_groups(links);
        if bits.len() != BETA_BITS * groups || links > groups {
            return Err(Error::Usage(format!(
                "compression segment has {} bits for {links} links",
                bits.len()
            )));
        }
        Ok((0..links)
            .map(|g| msb_value(&bits[g * BETA_BITS..(g + 1) * BETA_BITS]) as u8)
            .collect())
    }
}

fn msb_value(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// MSB-first bits of `value` in a field of `width`.
pub fn to_bits(value: usize, width: usize) -> Vec<u8> {
    (0..width).rev().map(|i| ((value >> i) & 1) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths() {
        let g = Grammar::new(3, 2, 16, 4);
        assert_eq!(g.index_bits(), 5);
        assert_eq!(g.schedule_len(), 12);
        assert_eq!(g.truncated_len(2), 20 + 6);
        assert_eq!(g.full_len(2) - g.truncated_len(2), 12);
        assert_eq!(Grammar::new(2, 1, 4, 4).index_bits(), 3);
        assert_eq!(Grammar::new(2, 1, 0, 4).ris_len(), 0);
        assert_eq!(Grammar::new(4, 2, 8, 4).max_links(), 4);
    }

    #[test]
    fn all_zero_sequence() {
        let g = Grammar::new(2, 1, 4, 4);
        let b = g.decode_schedule(&[0; 4]).unwrap();
        assert!(b.is_idle());
        let phi = g.apply_toggles(&RisConfig::all_off(4), &vec![0; 12]).unwrap();
        // index 0 toggled four times
        assert_eq!(phi, RisConfig::all_off(4));
        assert!(g.decode_betas(&[], 0).unwrap().is_empty());
    }

    #[test]
    fn indicator_decoding() {
        let g = Grammar::new(2, 1, 4, 4);
        let b = g.decode_schedule(&[1, 0, 0, 1]).unwrap();
        assert_eq!(b.links(), vec![Link { tx: 0, rx: 1, band: 0 }]);
        assert_eq!(g.encode_schedule(&b), vec![1, 0, 0, 1]);
    }

    #[test]
    fn toggle_decoding() {
        let g = Grammar::new(2, 1, 4, 1);
        assert_eq!(g.decode_toggles(&[0, 1, 0]).unwrap(), vec![Some(2)]);
        assert_eq!(g.decode_toggles(&[1, 0, 0]).unwrap(), vec![None]);
        let phi = g.apply_toggles(&RisConfig::all_off(4), &[0, 1, 0]).unwrap();
        assert_eq!(phi.bits(), &[0, 0, 1, 0]);
    }

    #[test]
    fn beta_decoding() {
        let g = Grammar::new(3, 2, 16, 4);
        assert_eq!(g.decode_betas(&[1, 0, 1, 0, 1, 1], 2).unwrap(), vec![5, 3]);
        let fixed = Grammar {
            fixed_length: true,
            ..g
        };
        assert_eq!(fixed.beta_groups(0), 2);
        assert_eq!(fixed.decode_betas(&[1, 1, 1, 0, 0, 1], 1).unwrap(), vec![7]);
        assert!(g.decode_betas(&[1, 1, 1], 2).is_err());
    }

    #[test]
    fn outer_product_can_overlap() {
        let g = Grammar::new(3, 1, 4, 4);
        let b = g.decode_schedule(&[1, 1, 0, 1, 1, 0]).unwrap();
        assert_eq!(b.active_count(), 2);
        assert!(!b.is_valid());
    }

    #[test]
    fn bit_helpers() {
        assert_eq!(to_bits(5, 3), vec![1, 0, 1]);
        assert_eq!(msb_value(&to_bits(13, 5)), 13);
    }
}
