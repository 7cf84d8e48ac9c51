//! Spin-1/2 configurations, lattice geometry and basis enumeration.
//!
//! A configuration packs `n_sites` spins into the low bits of a `u64`: bit
//! `i` set means site `i` points up (`σ_i = +1`, `S^z_i = +1/2`). Sites on
//! the square lattice are indexed row-major, `i = row * side + col`.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Largest system for which the full basis may be enumerated.
pub const MAX_ENUMERABLE_SITES: usize = 24;

/// Largest system a configuration word can hold.
pub const MAX_SITES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig {
    bits: u64,
    n_sites: u8,
}

#[inline]
fn site_mask(n_sites: usize) -> u64 {
    if n_sites >= 64 {
        u64::MAX
    } else {
        (1u64 << n_sites) - 1
    }
}

impl SpinConfig {
    pub fn new(bits: u64, n_sites: usize) -> Result<Self> {
        if n_sites == 0 || n_sites > MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "n_sites must lie in 1..={MAX_SITES}, got {n_sites}"
            )));
        }
        if bits & !site_mask(n_sites) != 0 {
            return Err(Error::InvalidArgument(format!(
                "bits {bits:#b} exceed {n_sites} sites"
            )));
        }
        Ok(Self {
            bits,
            n_sites: n_sites as u8,
        })
    }

    /// Builds a configuration from spin values, `+1` up and `-1` down.
    pub fn from_sigmas(sigmas: &[i8]) -> Result<Self> {
        let mut bits = 0u64;
        for (i, &s) in sigmas.iter().enumerate() {
            match s {
                1 => bits |= 1 << i,
                -1 => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "spin value {other} at site {i} is not ±1"
                    )))
                }
            }
        }
        Self::new(bits, sigmas.len())
    }

    /// All spins up.
    pub fn all_up(n_sites: usize) -> Result<Self> {
        Self::new(site_mask(n_sites.min(MAX_SITES)), n_sites)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites as usize
    }

    #[inline]
    pub fn is_up(&self, site: usize) -> bool {
        (self.bits >> site) & 1 == 1
    }

    /// `σ_i ∈ {-1, +1}`.
    #[inline]
    pub fn sigma(&self, site: usize) -> f64 {
        if self.is_up(site) {
            1.0
        } else {
            -1.0
        }
    }

    pub fn sigmas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_sites()).map(move |i| self.sigma(i))
    }

    #[inline]
    pub fn n_up(&self) -> usize {
        self.bits.count_ones() as usize
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites() {
            Err(Error::SiteOutOfRange {
                site,
                n_sites: self.n_sites(),
            })
        } else {
            Ok(())
        }
    }

    pub fn flip(&self, site: usize) -> Result<Self> {
        self.check_site(site)?;
        Ok(self.flipped(site))
    }

    /// Swaps the spins on `i` and `j`; identity when they are equal.
    pub fn exchange(&self, i: usize, j: usize) -> Result<Self> {
        self.check_site(i)?;
        self.check_site(j)?;
        Ok(self.exchanged(i, j))
    }

    #[inline]
    pub(crate) fn flipped(&self, site: usize) -> Self {
        Self {
            bits: self.bits ^ (1 << site),
            n_sites: self.n_sites,
        }
    }

    #[inline]
    pub(crate) fn exchanged(&self, i: usize, j: usize) -> Self {
        if self.is_up(i) == self.is_up(j) {
            *self
        } else {
            Self {
                bits: self.bits ^ ((1 << i) | (1 << j)),
                n_sites: self.n_sites,
            }
        }
    }
}

impl std::fmt::Display for SpinConfig {
    /// Site 0 first, `↑`/`↓`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.n_sites() {
            f.write_str(if self.is_up(i) { "↑" } else { "↓" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Square { side: usize, periodic: bool },
    Chain { length: usize, periodic: bool },
}

/// Sites plus deduplicated nearest and next-nearest neighbour bonds, each
/// stored once as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    geometry: Geometry,
    n_sites: usize,
    nn_pairs: Vec<(usize, usize)>,
    nnn_pairs: Vec<(usize, usize)>,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Lattice {
    /// Square `side × side` lattice with optional periodic wrap.
    pub fn square(side: usize, periodic: bool) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidGeometry(format!(
                "square lattice side must be at least 2, got {side}"
            )));
        }
        let n_sites = side * side;
        if n_sites > MAX_SITES {
            return Err(Error::InvalidGeometry(format!(
                "{n_sites} sites exceed the {MAX_SITES}-site word"
            )));
        }
        let idx = |r: usize, c: usize| r * side + c;
        let mut nn = BTreeSet::new();
        let mut nnn = BTreeSet::new();
        let l = side as isize;
        let wrap = |v: isize| -> Option<usize> {
            if (0..l).contains(&v) {
                Some(v as usize)
            } else if periodic {
                Some(v.rem_euclid(l) as usize)
            } else {
                None
            }
        };
        for r in 0..l {
            for c in 0..l {
                let here = idx(r as usize, c as usize);
                for (dr, dc, nearest) in [(0, 1, true), (1, 0, true), (1, 1, false), (1, -1, false)] {
                    if let (Some(rr), Some(cc)) = (wrap(r + dr), wrap(c + dc)) {
                        let there = idx(rr, cc);
                        if there != here {
                            let set = if nearest { &mut nn } else { &mut nnn };
                            set.insert(ordered(here, there));
                        }
                    }
                }
            }
        }
        Ok(Self {
            geometry: Geometry::Square { side, periodic },
            n_sites,
            nn_pairs: nn.into_iter().collect(),
            nnn_pairs: nnn.into_iter().collect(),
        })
    }

    /// One-dimensional chain; `periodic` closes it into a ring.
    pub fn chain(length: usize, periodic: bool) -> Result<Self> {
        if length == 0 || length > MAX_SITES {
            return Err(Error::InvalidGeometry(format!(
                "chain length must lie in 1..={MAX_SITES}, got {length}"
            )));
        }
        let mut nn = BTreeSet::new();
        let mut nnn = BTreeSet::new();
        for i in 0..length {
            for (d, set) in [(1, &mut nn), (2, &mut nnn)] {
                let j = i + d;
                let j = if j < length {
                    Some(j)
                } else if periodic {
                    Some(j % length)
                } else {
                    None
                };
                if let Some(j) = j {
                    if j != i {
                        set.insert(ordered(i, j));
                    }
                }
            }
        }
        Ok(Self {
            geometry: Geometry::Chain { length, periodic },
            n_sites: length,
            nn_pairs: nn.into_iter().collect(),
            nnn_pairs: nnn.into_iter().collect(),
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn nn_pairs(&self) -> &[(usize, usize)] {
        &self.nn_pairs
    }

    pub fn nnn_pairs(&self) -> &[(usize, usize)] {
        &self.nnn_pairs
    }
}

/// All configurations of a system, optionally restricted to a fixed number
/// of up spins, in ascending bit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisEnumeration {
    n_sites: usize,
    sector: Option<usize>,
    configs: Vec<SpinConfig>,
}

/// Lists the basis of `n_sites` spins, or the `n_up` sector when given.
pub fn enumerate_basis(n_sites: usize, sector: Option<usize>) -> Result<BasisEnumeration> {
    if n_sites > MAX_ENUMERABLE_SITES {
        return Err(Error::EnumerationTooLarge {
            n_sites,
            limit: MAX_ENUMERABLE_SITES,
        });
    }
    if n_sites == 0 {
        return Err(Error::InvalidArgument("n_sites must be positive".into()));
    }
    let configs = match sector {
        None => (0..1u64 << n_sites)
            .map(|bits| SpinConfig {
                bits,
                n_sites: n_sites as u8,
            })
            .collect(),
        Some(n_up) if n_up > n_sites => {
            return Err(Error::InvalidArgument(format!(
                "sector n_up = {n_up} exceeds {n_sites} sites"
            )))
        }
        Some(0) => vec![SpinConfig {
            bits: 0,
            n_sites: n_sites as u8,
        }],
        Some(n_up) => {
            // Gosper's hack walks the fixed-popcount words in increasing order.
            let limit = 1u64 << n_sites;
            let mut v = (1u64 << n_up) - 1;
            let mut out = Vec::new();
            while v < limit {
                out.push(SpinConfig {
                    bits: v,
                    n_sites: n_sites as u8,
                });
                let c = v & v.wrapping_neg();
                let r = v + c;
                v = (((r ^ v) >> 2) / c) | r;
            }
            out
        }
    };
    Ok(BasisEnumeration {
        n_sites,
        sector,
        configs,
    })
}

impl BasisEnumeration {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn sector(&self) -> Option<usize> {
        self.sector
    }

    pub fn configs(&self) -> &[SpinConfig] {
        &self.configs
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Position of `x` in the enumeration, if present.
    pub fn index_of(&self, x: SpinConfig) -> Option<usize> {
        if x.n_sites() != self.n_sites {
            return None;
        }
        match self.sector {
            None => Some(x.bits() as usize),
            Some(_) => self.configs.binary_search(&x).ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: u64, k: u64) -> u64 {
        (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
    }

    #[test]
    fn open_two_by_two_neighbours() {
        let lat = Lattice::square(2, false).unwrap();
        assert_eq!(lat.nn_pairs(), &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(lat.nnn_pairs(), &[(0, 3), (1, 2)]);
    }

    #[test]
    fn periodic_pair_counts_match_brute_force() {
        for side in 3..=6usize {
            let lat = Lattice::square(side, true).unwrap();
            // brute force: every unordered pair at torus distance (1,0)/(0,1) or (1,1)
            let mut nn = 0;
            let mut nnn = 0;
            for a in 0..side * side {
                for b in a + 1..side * side {
                    let (ra, ca) = (a / side, a % side);
                    let (rb, cb) = (b / side, b % side);
                    let dr = ra.abs_diff(rb).min(side - ra.abs_diff(rb));
                    let dc = ca.abs_diff(cb).min(side - ca.abs_diff(cb));
                    match (dr, dc) {
                        (0, 1) | (1, 0) => nn += 1,
                        (1, 1) => nnn += 1,
                        _ => {}
                    }
                }
            }
            assert_eq!(lat.nn_pairs().len(), nn);
            assert_eq!(lat.nnn_pairs().len(), nnn);
            assert_eq!(nn, 2 * side * side);
            assert_eq!(nnn, 2 * side * side);
        }
        let lat = Lattice::square(4, true).unwrap();
        assert_eq!(lat.nn_pairs().len(), 32);
        assert_eq!(lat.nnn_pairs().len(), 32);
    }

    #[test]
    fn pairs_are_ordered_and_unique() {
        for periodic in [false, true] {
            for side in 2..=5 {
                let lat = Lattice::square(side, periodic).unwrap();
                for pairs in [lat.nn_pairs(), lat.nnn_pairs()] {
                    assert!(pairs.iter().all(|&(i, j)| i < j));
                    assert!(pairs.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }

    #[test]
    fn side_one_is_rejected() {
        assert!(matches!(
            Lattice::square(1, true),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn ring_bonds() {
        let ring = Lattice::chain(4, true).unwrap();
        assert_eq!(ring.nn_pairs(), &[(0, 1), (0, 3), (1, 2), (2, 3)]);
        let open = Lattice::chain(2, false).unwrap();
        assert_eq!(open.nn_pairs(), &[(0, 1)]);
        assert!(open.nnn_pairs().is_empty());
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(enumerate_basis(2, None).unwrap().len(), 4);
        assert_eq!(enumerate_basis(4, Some(2)).unwrap().len(), 6);
        assert_eq!(
            enumerate_basis(25, None),
            Err(Error::EnumerationTooLarge {
                n_sites: 25,
                limit: 24
            })
        );
    }

    #[test]
    fn basis_cardinality_and_order_by_brute_force() {
        for n in 1..=12usize {
            let full = enumerate_basis(n, None).unwrap();
            assert_eq!(full.len(), 1 << n);
            for n_up in 0..=n {
                let b = enumerate_basis(n, Some(n_up)).unwrap();
                let brute: Vec<u64> = (0..1u64 << n)
                    .filter(|v| v.count_ones() as usize == n_up)
                    .collect();
                assert_eq!(b.len() as u64, binomial(n as u64, n_up as u64));
                let got: Vec<u64> = b.configs().iter().map(|c| c.bits()).collect();
                assert_eq!(got, brute);
                for (k, &c) in b.configs().iter().enumerate() {
                    assert_eq!(b.index_of(c), Some(k));
                }
            }
        }
    }

    #[test]
    fn flip_and_exchange_examples() {
        let x = SpinConfig::new(0b00, 2).unwrap();
        assert_eq!(x.flip(0).unwrap().bits(), 0b01);
        let y = SpinConfig::new(0b01, 2).unwrap();
        assert_eq!(y.exchange(0, 1).unwrap().bits(), 0b10);
        let z = SpinConfig::new(0b11, 2).unwrap();
        assert_eq!(z.exchange(0, 1).unwrap().bits(), 0b11);
        assert!(matches!(x.flip(2), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(x.exchange(0, 5), Err(Error::SiteOutOfRange { .. })));
    }

    #[test]
    fn bits_beyond_size_rejected() {
        assert!(SpinConfig::new(0b100, 2).is_err());
        assert!(SpinConfig::new(0, 0).is_err());
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(bits in any::<u64>(), n in 1usize..=64, site in 0usize..64) {
            let x = SpinConfig::new(bits & site_mask(n), n).unwrap();
            let site = site % n;
            prop_assert_eq!(x.flip(site).unwrap().flip(site).unwrap(), x);
        }

        #[test]
        fn exchange_conserves_up_count(bits in any::<u64>(), n in 1usize..=64, i in 0usize..64, j in 0usize..64) {
            let x = SpinConfig::new(bits & site_mask(n), n).unwrap();
            let y = x.exchange(i % n, j % n).unwrap();
            prop_assert_eq!(x.n_up(), y.n_up());
        }
    }
}
