//! Binary user-scheduling tensor `b[r][k][c]` and the half-duplex rule.
//!
//! Users and bands are 0-based here; the band number passed to the phase
//! response is `band + 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed link `tx -> rx` on `band`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
    pub band: usize,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}@{}", self.tx + 1, self.rx + 1, self.band + 1)
    }
}

/// User `user` takes part in `count > 1` links on `band`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub user: usize,
    pub band: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchedulingMatrix {
    users: usize,
    bands: usize,
    bits: Vec<u8>,
}

impl SchedulingMatrix {
    pub fn empty(users: usize, bands: usize) -> Self {
        Self {
            users,
            bands,
            bits: vec![0; users * users * bands],
        }
    }

    /// Builds a matrix from explicit links. Self-links are rejected; the
    /// result is not checked for half-duplex validity.
    pub fn from_links(users: usize, bands: usize, links: &[Link]) -> Result<Self> {
        let mut b = Self::empty(users, bands);
        for &l in links {
            b.set(l, true)?;
        }
        Ok(b)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    fn index(&self, tx: usize, rx: usize, band: usize) -> usize {
        (tx * self.users + rx) * self.bands + band
    }

    pub fn get(&self, tx: usize, rx: usize, band: usize) -> bool {
        self.bits[self.index(tx, rx, band)] == 1
    }

    pub fn is_active(&self, link: Link) -> bool {
        self.get(link.tx, link.rx, link.band)
    }

    pub fn set(&mut self, link: Link, on: bool) -> Result<()> {
        if link.tx >= self.users || link.rx >= self.users || link.band >= self.bands {
            return Err(Error::Usage(format!("link {link} outside {}x{}", self.users, self.bands)));
        }
        if link.tx == link.rx {
            return Err(Error::Usage(format!("self-link {link} is not allowed")));
        }
        let i = self.index(link.tx, link.rx, link.band);
        self.bits[i] = on as u8;
        Ok(())
    }

    /// Active links in canonical (row-major `r, k, c`) order.
    pub fn links(&self) -> Vec<Link> {
        let mut out = Vec::new();
        for tx in 0..self.users {
            for rx in 0..self.users {
                for band in 0..self.bands {
                    if self.get(tx, rx, band) {
                        out.push(Link { tx, rx, band });
                    }
                }
            }
        }
        out
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.active_count() == 0
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Row-major bit-string, used as the exact-match cache key.
    pub fn key(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_key(users: usize, bands: usize, key: &str) -> Result<Self> {
        if key.len() != users * users * bands {
            return Err(Error::Usage(format!(
                "schedule key of length {} for {users} users, {bands} bands",
                key.len()
            )));
        }
        let mut b = Self::empty(users, bands);
        for (i, ch) in key.chars().enumerate() {
            b.bits[i] = match ch {
                '0' => 0,
                '1' => 1,
                _ => return Err(Error::Usage(format!("schedule key has non-binary char {ch:?}"))),
            };
        }
        if (0..users).any(|u| (0..bands).any(|c| b.get(u, u, c))) {
            return Err(Error::Usage("schedule key sets a diagonal entry".into()));
        }
        Ok(b)
    }

    /// Number of links user `user` participates in on `band`.
    pub fn participation(&self, user: usize, band: usize) -> usize {
        (0..self.users)
            .map(|k| self.get(user, k, band) as usize + self.get(k, user, band) as usize)
            .sum()
    }

    pub fn transmits(&self, user: usize) -> bool {
        (0..self.users).any(|k| (0..self.bands).any(|c| self.get(user, k, c)))
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for user in 0..self.users {
            for band in 0..self.bands {
                let count = self.participation(user, band);
                if count > 1 {
                    out.push(Violation { user, band, count });
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        (0..self.users).all(|u| (0..self.bands).all(|c| self.participation(u, c) <= 1))
    }

    /// Greedily keeps links in descending `gain` order (ties by canonical
    /// order), dropping any link that would break half-duplex.
    pub fn repair(&self, gain: impl Fn(Link) -> f64) -> Self {
        let mut ranked: Vec<(f64, Link)> = self
            .links()
            .into_iter()
            .map(|l| {
                let g = gain(l);
                (if g.is_nan() { f64::NEG_INFINITY } else { g }, l)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut out = Self::empty(self.users, self.bands);
        let mut busy = vec![false; self.users * self.bands];
        for (_, l) in ranked {
            let (a, b) = (l.tx * self.bands + l.band, l.rx * self.bands + l.band);
            if !busy[a] && !busy[b] {
                busy[a] = true;
                busy[b] = true;
                let i = out.index(l.tx, l.rx, l.band);
                out.bits[i] = 1;
            }
        }
        out
    }

    /// Every half-duplex-valid matrix, in a deterministic order starting with
    /// the idle one.
    pub fn enumerate_valid(users: usize, bands: usize) -> Vec<Self> {
        let per_band = band_matchings(users);
        let mut out = vec![Self::empty(users, bands)];
        for band in 0..bands {
            let mut next = Vec::with_capacity(out.len() * per_band.len());
            for base in &out {
                for m in &per_band {
                    let mut b = base.clone();
                    for &(tx, rx) in m {
                        let i = b.index(tx, rx, band);
                        b.bits[i] = 1;
                    }
                    next.push(b);
                }
            }
            out = next;
        }
        out
    }
}

/// All sets of directed pairs in which every user appears at most once.
fn band_matchings(users: usize) -> Vec<Vec<(usize, usize)>> {
    fn extend(
        users: usize,
        from: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        out.push(cur.clone());
        for tx in 0..users {
            for rx in 0..users {
                let code = tx * users + rx;
                if tx == rx || code < from || used[tx] || used[rx] {
                    continue;
                }
                used[tx] = true;
                used[rx] = true;
                cur.push((tx, rx));
                extend(users, code + 1, used, cur, out);
                cur.pop();
                used[tx] = false;
                used[rx] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(users, 0, &mut vec![false; users], &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(tx: usize, rx: usize, band: usize) -> Link {
        Link { tx, rx, band }
    }

    #[test]
    fn single_link_is_valid() {
        let b = SchedulingMatrix::from_links(2, 1, &[l(0, 1, 0)]).unwrap();
        assert!(b.is_valid());
        assert!(b.violations().is_empty());
    }

    #[test]
    fn simultaneous_tx_rx_flags_both_users() {
        let b = SchedulingMatrix::from_links(2, 1, &[l(0, 1, 0), l(1, 0, 0)]).unwrap();
        let v = b.violations();
        assert_eq!(v.len(), 2);
        assert_eq!((v[0].user, v[1].user), (0, 1));
    }

    #[test]
    fn two_users_one_band_has_three_valid_matrices() {
        let mut valid = 0;
        for mask in 0..4u8 {
            let mut links = Vec::new();
            if mask & 1 == 1 {
                links.push(l(0, 1, 0));
            }
            if mask & 2 == 2 {
                links.push(l(1, 0, 0));
            }
            if SchedulingMatrix::from_links(2, 1, &links).unwrap().is_valid() {
                valid += 1;
            }
        }
        assert_eq!(valid, 3);
        assert_eq!(SchedulingMatrix::enumerate_valid(2, 1).len(), 3);
    }

    #[test]
    fn enumeration_counts() {
        // per band: K=3 -> 1 + 6, K=4 -> 1 + 12 + 12
        assert_eq!(SchedulingMatrix::enumerate_valid(3, 1).len(), 7);
        assert_eq!(SchedulingMatrix::enumerate_valid(3, 2).len(), 49);
        assert_eq!(SchedulingMatrix::enumerate_valid(4, 1).len(), 25);
        for b in SchedulingMatrix::enumerate_valid(4, 2) {
            assert!(b.is_valid());
        }
    }

    #[test]
    fn diagonal_is_rejected() {
        let mut b = SchedulingMatrix::empty(3, 1);
        assert!(b.set(l(1, 1, 0), true).is_err());
        assert!(SchedulingMatrix::from_key(2, 1, "1000").is_err());
    }

    #[test]
    fn repair_keeps_strongest() {
        let full = SchedulingMatrix::from_links(2, 1, &[l(0, 1, 0), l(1, 0, 0)]).unwrap();
        let kept = full.repair(|x| if x.tx == 1 { 2.0 } else { 1.0 });
        assert_eq!(kept.links(), vec![l(1, 0, 0)]);
        // ties resolve to canonical order
        assert_eq!(full.repair(|_| 1.0).links(), vec![l(0, 1, 0)]);
    }

    #[test]
    fn repair_is_identity_on_valid_input() {
        for b in SchedulingMatrix::enumerate_valid(3, 2) {
            assert_eq!(b.repair(|x| x.rx as f64), b);
        }
    }

    #[test]
    fn key_roundtrip_and_canonical_order() {
        let b = SchedulingMatrix::from_links(3, 2, &[l(2, 0, 1), l(0, 1, 0)]).unwrap();
        assert_eq!(b.links(), vec![l(0, 1, 0), l(2, 0, 1)]);
        let k = b.key();
        assert_eq!(k.len(), 18);
        assert_eq!(SchedulingMatrix::from_key(3, 2, &k).unwrap(), b);
    }
}
