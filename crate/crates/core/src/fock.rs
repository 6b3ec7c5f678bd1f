//! Fermionic Fock space over `2N` spin-orbitals.
//!
//! Basis states are occupation bitmasks: bit `m` is set when mode `m` is
//! occupied, with `m = 2 * site + spin` (`Up = 0`, `Down = 1`). A basis state
//! is the ascending creation word applied to the vacuum,
//!
//! ```text
//! |mask> = c†_{m1} c†_{m2} ... c†_{mk} |->,   m1 < m2 < ... < mk
//! ```
//!
//! so `c†_m` acting on `|mask>` picks up `(-1)^(occupied modes below m)`.
//! This is the left-wedge creation rule `c†|a> = |σ>_i ∧ |a>` written in
//! canonical order.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard guard on dense storage: `4^10` amplitudes.
pub const MAX_SITES: usize = 10;

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Up, Spin::Down];

    fn bit(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }
}

/// Flattened spin-orbital index `2 * site + spin`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex(usize);

impl ModeIndex {
    pub fn new(n_sites: usize, site: usize, spin: Spin) -> Result<Self> {
        if site >= n_sites {
            return Err(Error::SiteOutOfRange { site, n_sites });
        }
        Ok(ModeIndex(2 * site + spin.bit()))
    }

    pub fn from_flat(n_sites: usize, mode: usize) -> Result<Self> {
        if mode >= 2 * n_sites {
            return Err(Error::ModeOutOfRange {
                mode,
                n_modes: 2 * n_sites,
            });
        }
        Ok(ModeIndex(mode))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn site(self) -> usize {
        self.0 / 2
    }

    pub fn spin(self) -> Spin {
        if self.0 % 2 == 0 {
            Spin::Up
        } else {
            Spin::Down
        }
    }

    pub fn bit(self) -> usize {
        1 << self.0
    }
}

pub fn mode_index(n_sites: usize, site: usize, spin: Spin) -> Result<ModeIndex> {
    ModeIndex::new(n_sites, site, spin)
}

/// `(-1)^(number of occupied modes strictly below m)`.
#[inline]
pub fn parity_below(mask: usize, mode: usize) -> f64 {
    if (mask & ((1usize << mode) - 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `c†_m |mask>` as `(new mask, sign)`, or `None` when the mode is occupied.
#[inline]
pub fn create_on_mask(mask: usize, mode: usize) -> Option<(usize, f64)> {
    let bit = 1usize << mode;
    if mask & bit != 0 {
        None
    } else {
        Some((mask | bit, parity_below(mask, mode)))
    }
}

/// `c_m |mask>` as `(new mask, sign)`, or `None` when the mode is empty.
#[inline]
pub fn annihilate_on_mask(mask: usize, mode: usize) -> Option<(usize, f64)> {
    let bit = 1usize << mode;
    if mask & bit == 0 {
        None
    } else {
        Some((mask & !bit, parity_below(mask, mode)))
    }
}

/// Number of fermions on `site` (0, 1 or 2).
#[inline]
pub fn site_occupation(mask: usize, site: usize) -> u32 {
    ((mask >> (2 * site)) & 0b11).count_ones()
}

/// Bitmask of both modes of `site`.
#[inline]
pub fn site_mask(site: usize) -> usize {
    0b11 << (2 * site)
}

/// Spin-resolved particle numbers `(n_up, n_down)` of a basis mask.
#[inline]
pub fn spin_counts(mask: usize) -> (u32, u32) {
    const EVEN: usize = 0x5555_5555_5555_5555;
    ((mask & EVEN).count_ones(), (mask & !EVEN).count_ones())
}

/// Dense state vector over the `4^N` occupation basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    n_sites: usize,
    amplitudes: Vec<Complex64>,
}

impl FockVector {
    pub fn zeros(n_sites: usize) -> Result<Self> {
        check_sites(n_sites)?;
        Ok(FockVector {
            n_sites,
            amplitudes: vec![Complex64::new(0.0, 0.0); 1 << (2 * n_sites)],
        })
    }

    /// The vacuum `|->` (all-zeros mask).
    pub fn vacuum(n_sites: usize) -> Result<Self> {
        Self::basis(n_sites, 0)
    }

    pub fn basis(n_sites: usize, mask: usize) -> Result<Self> {
        let mut v = Self::zeros(n_sites)?;
        let dim = v.dim();
        if mask >= dim {
            return Err(Error::InvalidArgument(format!(
                "mask {mask:#b} outside a {dim}-dimensional space"
            )));
        }
        v.amplitudes[mask] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn from_amplitudes(n_sites: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_sites(n_sites)?;
        let expected = 1usize << (2 * n_sites);
        if amplitudes.len() != expected {
            return Err(Error::BadLength {
                expected,
                found: amplitudes.len(),
            });
        }
        Ok(FockVector {
            n_sites,
            amplitudes,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_modes(&self) -> usize {
        2 * self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn amplitude(&self, mask: usize) -> Complex64 {
        self.amplitudes[mask]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize the zero vector".into()));
        }
        let inv = 1.0 / n;
        self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &FockVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Sites touched by any basis state with nonzero amplitude.
    pub fn site_support(&self) -> BTreeSet<usize> {
        let touched = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != Complex64::new(0.0, 0.0))
            .fold(0usize, |acc, (mask, _)| acc | mask);
        (0..self.n_sites)
            .filter(|&s| touched & site_mask(s) != 0)
            .collect()
    }
}

fn check_sites(n_sites: usize) -> Result<()> {
    if n_sites > MAX_SITES {
        return Err(Error::TooManySites {
            n_sites,
            max: MAX_SITES,
        });
    }
    Ok(())
}

fn check_mode(state: &FockVector, m: ModeIndex) -> Result<()> {
    if m.index() >= state.n_modes() {
        return Err(Error::ModeOutOfRange {
            mode: m.index(),
            n_modes: state.n_modes(),
        });
    }
    Ok(())
}

pub fn apply_creation(state: &FockVector, m: ModeIndex) -> Result<FockVector> {
    check_mode(state, m)?;
    let mut out = FockVector::zeros(state.n_sites)?;
    for (mask, amp) in state.amplitudes.iter().enumerate() {
        if let Some((to, sign)) = create_on_mask(mask, m.index()) {
            out.amplitudes[to] += amp * sign;
        }
    }
    Ok(out)
}

pub fn apply_annihilation(state: &FockVector, m: ModeIndex) -> Result<FockVector> {
    check_mode(state, m)?;
    let mut out = FockVector::zeros(state.n_sites)?;
    for (mask, amp) in state.amplitudes.iter().enumerate() {
        if let Some((to, sign)) = annihilate_on_mask(mask, m.index()) {
            out.amplitudes[to] += amp * sign;
        }
    }
    Ok(out)
}

/// `a ∧ b` for states on disjoint site sets: every basis pair contributes
/// `C†_x C†_y |->` where `C†_x` is the ascending creation word of `x`.
pub fn wedge_product(a: &FockVector, b: &FockVector) -> Result<FockVector> {
    if a.n_sites != b.n_sites {
        return Err(Error::SiteCountMismatch {
            left: a.n_sites,
            right: b.n_sites,
        });
    }
    let sa = a.site_support();
    let sb = b.site_support();
    if let Some(&site) = sa.intersection(&sb).next() {
        return Err(Error::OverlappingSupports { site });
    }
    let nonzero = |v: &FockVector| -> Vec<(usize, Complex64)> {
        v.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, amp)| **amp != Complex64::new(0.0, 0.0))
            .map(|(m, amp)| (m, *amp))
            .collect()
    };
    let (xs, ys) = (nonzero(a), nonzero(b));
    let mut out = FockVector::zeros(a.n_sites)?;
    for &(x, alpha) in &xs {
        for &(y, beta) in &ys {
            out.amplitudes[x | y] += alpha * beta * word_sign(y, x);
        }
    }
    Ok(out)
}

/// Sign of `C†_word |base>` for `word ∩ base = ∅`: each created mode sees the
/// base modes below it (the word's own modes are created top-down).
#[inline]
fn word_sign(base: usize, word: usize) -> f64 {
    let mut rest = word;
    let mut odd = 0u32;
    while rest != 0 {
        let m = rest.trailing_zeros() as usize;
        odd ^= (base & ((1usize << m) - 1)).count_ones() & 1;
        rest &= rest - 1;
    }
    if odd == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateVariant {
    Plain,
    Tilde,
}

/// `(|-> + |↑↓>_site)/√2` or `(|-> + i|↑↓>_site)/√2`; other sites empty.
pub fn prepare_site_psi(n_sites: usize, site: usize, variant: StateVariant) -> Result<FockVector> {
    if site >= n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    let mut v = FockVector::zeros(n_sites)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    v.amplitudes[0] = Complex64::new(s, 0.0);
    v.amplitudes[site_mask(site)] = match variant {
        StateVariant::Plain => Complex64::new(s, 0.0),
        StateVariant::Tilde => Complex64::new(0.0, s),
    };
    Ok(v)
}

/// `|↑>_{k1}` or `((1+i)/2)|↑>_{k1} + ((1-i)/2)|↑>_{k2}`.
pub fn prepare_pair_phi(
    n_sites: usize,
    edge: (usize, usize),
    variant: StateVariant,
) -> Result<FockVector> {
    let (k1, k2) = edge;
    for site in [k1, k2] {
        if site >= n_sites {
            return Err(Error::SiteOutOfRange { site, n_sites });
        }
    }
    if k1 == k2 {
        return Err(Error::InvalidArgument(format!("pair state needs two sites, got ({k1}, {k2})")));
    }
    let mut v = FockVector::zeros(n_sites)?;
    let up1 = ModeIndex::new(n_sites, k1, Spin::Up)?.bit();
    let up2 = ModeIndex::new(n_sites, k2, Spin::Up)?.bit();
    match variant {
        StateVariant::Plain => v.amplitudes[up1] = Complex64::new(1.0, 0.0),
        StateVariant::Tilde => {
            v.amplitudes[up1] = Complex64::new(0.5, 0.5);
            v.amplitudes[up2] = Complex64::new(0.5, -0.5);
        }
    }
    Ok(v)
}

/// Rank-one projector `|target><target|` on a set of modes, tensored with the
/// identity on every other mode.
///
/// `target[a]` is the amplitude of the local basis state whose occupied modes
/// are `{support[q] : bit q of a}`, built with the same ascending creation
/// word as the global basis. Targets must have definite fermion parity so the
/// projector is an even operator; projectors on disjoint supports then commute.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorSpec {
    support: Vec<ModeIndex>,
    target: Vec<Complex64>,
}

impl ProjectorSpec {
    pub fn new(support: Vec<ModeIndex>, target: Vec<Complex64>) -> Result<Self> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidProjector(
                "support modes must be distinct and listed in ascending order".into(),
            ));
        }
        if support.len() > 2 * MAX_SITES {
            return Err(Error::InvalidProjector("support too large".into()));
        }
        if target.len() != 1 << support.len() {
            return Err(Error::InvalidProjector(format!(
                "target has {} amplitudes for {} support modes",
                target.len(),
                support.len()
            )));
        }
        let norm: f64 = target.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidProjector(format!("target norm² is {norm}")));
        }
        let parities: BTreeSet<u32> = target
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(local, _)| local.count_ones() % 2)
            .collect();
        if parities.len() > 1 {
            return Err(Error::InvalidProjector("target mixes fermion parities".into()));
        }
        Ok(ProjectorSpec { support, target })
    }

    /// Restrict a global state that lives only on `support` to a projector.
    pub fn from_state(state: &FockVector, support: Vec<ModeIndex>) -> Result<Self> {
        let support_mask = support.iter().fold(0, |acc, m| acc | m.bit());
        for m in &support {
            check_mode(state, *m)?;
        }
        for (mask, amp) in state.amplitudes.iter().enumerate() {
            if mask & !support_mask != 0 && amp.norm_sqr() > 0.0 {
                return Err(Error::InvalidProjector(format!(
                    "state has weight outside the support at mask {mask:#b}"
                )));
            }
        }
        let target = (0..1usize << support.len())
            .map(|local| state.amplitudes[scatter(local, &support)])
            .collect();
        Self::new(support, target)
    }

    /// `O = |ψ><ψ|` on the two modes of `site`.
    pub fn site_psi(n_sites: usize, site: usize) -> Result<Self> {
        let state = prepare_site_psi(n_sites, site, StateVariant::Plain)?;
        Self::from_state(&state, site_modes(n_sites, &[site])?)
    }

    /// `O⁽²⁾ = |φ><φ|`, `|φ> = |↑>_{k1}`, on the four modes of both sites.
    pub fn pair_phi(n_sites: usize, edge: (usize, usize)) -> Result<Self> {
        let state = prepare_pair_phi(n_sites, edge, StateVariant::Plain)?;
        let mut sites = [edge.0, edge.1];
        sites.sort_unstable();
        Self::from_state(&state, site_modes(n_sites, &sites)?)
    }

    pub fn support(&self) -> &[ModeIndex] {
        &self.support
    }

    pub fn target(&self) -> &[Complex64] {
        &self.target
    }

    pub fn support_mask(&self) -> usize {
        self.support.iter().fold(0, |acc, m| acc | m.bit())
    }

    pub fn support_sites(&self) -> BTreeSet<usize> {
        self.support.iter().map(|m| m.site()).collect()
    }

    fn check_fits(&self, state: &FockVector) -> Result<()> {
        for m in &self.support {
            check_mode(state, *m)?;
        }
        Ok(())
    }

    /// Overlaps `w_rest = Σ_b conj(t_b) s(b, rest) ψ[rest ∪ b]` for every
    /// configuration `rest` of the complementary modes.
    fn overlaps(&self, state: &FockVector) -> Vec<(usize, Complex64, usize)> {
        let support_mask = self.support_mask();
        let complement = (state.dim() - 1) & !support_mask;
        let locals: Vec<usize> = (0..self.target.len()).map(|a| scatter(a, &self.support)).collect();
        let mut out = Vec::with_capacity(state.dim() >> self.support.len());
        for_each_subset(complement, |rest| {
            let signs = self.local_sign_bits(rest);
            let mut w = Complex64::new(0.0, 0.0);
            for (b, &global) in locals.iter().enumerate() {
                let t = self.target[b];
                if t.norm_sqr() == 0.0 {
                    continue;
                }
                let amp = state.amplitudes[rest | global];
                let s = if (b & signs).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                w += t.conj() * amp * s;
            }
            out.push((rest, w, signs));
        });
        out
    }

    /// Bit q set when an odd number of `rest` modes lie below `support[q]`.
    #[inline]
    fn local_sign_bits(&self, rest: usize) -> usize {
        self.support
            .iter()
            .enumerate()
            .filter(|(_, m)| (rest & ((1usize << m.index()) - 1)).count_ones() % 2 == 1)
            .fold(0, |acc, (q, _)| acc | (1 << q))
    }

    /// `P |state>`.
    pub fn apply(&self, state: &FockVector) -> Result<FockVector> {
        self.check_fits(state)?;
        let mut out = FockVector::zeros(state.n_sites)?;
        for (rest, w, signs) in self.overlaps(state) {
            if w.norm_sqr() == 0.0 {
                continue;
            }
            for (a, t) in self.target.iter().enumerate() {
                if t.norm_sqr() == 0.0 {
                    continue;
                }
                let s = if (a & signs).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                out.amplitudes[rest | scatter(a, &self.support)] += w * t * s;
            }
        }
        Ok(out)
    }
}

fn site_modes(n_sites: usize, sites: &[usize]) -> Result<Vec<ModeIndex>> {
    let mut modes = Vec::with_capacity(2 * sites.len());
    for &s in sites {
        for spin in Spin::BOTH {
            modes.push(ModeIndex::new(n_sites, s, spin)?);
        }
    }
    Ok(modes)
}

/// Map local bit q to global mode `support[q]`.
#[inline]
fn scatter(local: usize, support: &[ModeIndex]) -> usize {
    support
        .iter()
        .enumerate()
        .filter(|(q, _)| local & (1 << q) != 0)
        .fold(0, |acc, (_, m)| acc | m.bit())
}

/// Visit every submask of `set` in ascending order.
fn for_each_subset(set: usize, mut visit: impl FnMut(usize)) {
    let mut sub = 0usize;
    loop {
        visit(sub);
        if sub == set {
            break;
        }
        sub = (sub | !set).wrapping_add(1) & set;
    }
}

/// `<state| P ⊗ I |state>`.
pub fn projector_expectation(state: &FockVector, proj: &ProjectorSpec) -> Result<f64> {
    proj.check_fits(state)?;
    Ok(proj.overlaps(state).iter().map(|(_, w, _)| w.norm_sqr()).sum())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMode {
    /// Sequential sampling and collapse over the commuting projectors.
    #[default]
    Faithful,
    /// Independent per-projector Bernoulli draws from the pre-measurement
    /// marginals; the joint distribution is not reproduced.
    FastMarginal,
}

fn check_disjoint(projectors: &[ProjectorSpec]) -> Result<()> {
    let mut seen = 0usize;
    for p in projectors {
        let mask = p.support_mask();
        if seen & mask != 0 {
            let site = (seen & mask).trailing_zeros() as usize / 2;
            return Err(Error::OverlappingSupports { site });
        }
        seen |= mask;
    }
    Ok(())
}

/// Measure commuting projectors one after another, collapsing after each.
/// Returns one outcome bit per projector and the normalized post-measurement
/// state.
pub fn projective_measure<R: Rng + ?Sized>(
    state: &FockVector,
    projectors: &[ProjectorSpec],
    rng: &mut R,
) -> Result<(Vec<bool>, FockVector)> {
    check_disjoint(projectors)?;
    let mut current = state.clone();
    current.normalize()?;
    let mut outcomes = Vec::with_capacity(projectors.len());
    for proj in projectors {
        let projected = proj.apply(&current)?;
        let p = projected.norm_sqr();
        let hit = rng.gen::<f64>() < p;
        current = if hit {
            projected
        } else {
            let mut rest = current;
            rest.amplitudes
                .iter_mut()
                .zip(&projected.amplitudes)
                .for_each(|(a, b)| *a -= b);
            rest
        };
        current.normalize()?;
        outcomes.push(hit);
    }
    Ok((outcomes, current))
}

/// Per-projector outcome bits drawn independently from each marginal.
pub fn sample_marginals<R: Rng + ?Sized>(
    state: &FockVector,
    projectors: &[ProjectorSpec],
    rng: &mut R,
) -> Result<Vec<bool>> {
    check_disjoint(projectors)?;
    let norm = state.norm_sqr();
    projectors
        .iter()
        .map(|p| Ok(rng.gen::<f64>() < projector_expectation(state, p)? / norm))
        .collect()
}

/// Outcome bits only, in the requested mode.
pub fn measure<R: Rng + ?Sized>(
    state: &FockVector,
    projectors: &[ProjectorSpec],
    mode: MeasureMode,
    rng: &mut R,
) -> Result<Vec<bool>> {
    match mode {
        MeasureMode::Faithful => projective_measure(state, projectors, rng).map(|(o, _)| o),
        MeasureMode::FastMarginal => sample_marginals(state, projectors, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn mode(n: usize, site: usize, spin: Spin) -> ModeIndex {
        ModeIndex::new(n, site, spin).unwrap()
    }

    /// Dense integer matrix of a ladder operator, column `j` = image of `|j>`.
    fn ladder_matrix(n: usize, m: ModeIndex, create: bool) -> Vec<Vec<i64>> {
        let dim = 1 << (2 * n);
        let mut mat = vec![vec![0i64; dim]; dim];
        for j in 0..dim {
            let v = FockVector::basis(n, j).unwrap();
            let out = if create {
                apply_creation(&v, m).unwrap()
            } else {
                apply_annihilation(&v, m).unwrap()
            };
            for (i, a) in out.amplitudes().iter().enumerate() {
                assert_eq!(a.im, 0.0);
                assert_eq!(a.re.fract(), 0.0);
                mat[i][j] = a.re as i64;
            }
        }
        mat
    }

    fn matmul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let n = a.len();
        let mut out = vec![vec![0; n]; n];
        for i in 0..n {
            for k in 0..n {
                if a[i][k] == 0 {
                    continue;
                }
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn anticommutator(a: &[Vec<i64>], b: &[Vec<i64>]) -> Vec<Vec<i64>> {
        let ab = matmul(a, b);
        let ba = matmul(b, a);
        ab.iter()
            .zip(&ba)
            .map(|(r1, r2)| r1.iter().zip(r2).map(|(x, y)| x + y).collect())
            .collect()
    }

    #[test]
    fn mode_index_convention() {
        assert_eq!(mode_index(4, 0, Spin::Up).unwrap().index(), 0);
        assert_eq!(mode_index(4, 0, Spin::Down).unwrap().index(), 1);
        assert_eq!(mode_index(4, 3, Spin::Up).unwrap().index(), 6);
        assert!(matches!(
            mode_index(3, 3, Spin::Up),
            Err(Error::SiteOutOfRange { site: 3, n_sites: 3 })
        ));
        for m in 0..8 {
            let idx = ModeIndex::from_flat(4, m).unwrap();
            assert_eq!(mode_index(4, idx.site(), idx.spin()).unwrap(), idx);
        }
    }

    #[test]
    fn creation_examples() {
        let vac = FockVector::vacuum(1).unwrap();
        let up = apply_creation(&vac, mode(1, 0, Spin::Up)).unwrap();
        assert_eq!(up, FockVector::basis(1, 0b01).unwrap());

        let updown = apply_creation(&up, mode(1, 0, Spin::Down)).unwrap();
        assert_eq!(updown.amplitude(0b11), c(-1.0, 0.0));
        assert_eq!(updown.norm_sqr(), 1.0);

        let down = FockVector::basis(1, 0b10).unwrap();
        let zero = apply_creation(&down, mode(1, 0, Spin::Down)).unwrap();
        assert_eq!(zero.norm_sqr(), 0.0);
    }

    #[test]
    fn annihilation_examples() {
        let up = FockVector::basis(1, 0b01).unwrap();
        assert_eq!(
            apply_annihilation(&up, mode(1, 0, Spin::Up)).unwrap(),
            FockVector::vacuum(1).unwrap()
        );
        let vac = FockVector::vacuum(1).unwrap();
        assert_eq!(apply_annihilation(&vac, mode(1, 0, Spin::Up)).unwrap().norm_sqr(), 0.0);

        let mut minus_updown = FockVector::zeros(1).unwrap();
        minus_updown.amplitudes_mut()[0b11] = c(-1.0, 0.0);
        assert_eq!(apply_annihilation(&minus_updown, mode(1, 0, Spin::Down)).unwrap(), up);

        // same result read off the transposed brute-force creation matrix
        let cdag = ladder_matrix(1, mode(1, 0, Spin::Down), true);
        let col: Vec<i64> = (0..4).map(|i| cdag[0b11][i] * -1).collect();
        assert_eq!(col, vec![0, 1, 0, 0]);
    }

    #[test]
    fn anticommutation_relations_exact() {
        for n in 1..=3 {
            let dim = 1 << (2 * n);
            let cre: Vec<_> = (0..2 * n)
                .map(|m| ladder_matrix(n, ModeIndex::from_flat(n, m).unwrap(), true))
                .collect();
            let ann: Vec<_> = (0..2 * n)
                .map(|m| ladder_matrix(n, ModeIndex::from_flat(n, m).unwrap(), false))
                .collect();
            for m in 0..2 * n {
                for k in 0..2 * n {
                    let mixed = anticommutator(&cre[m], &ann[k]);
                    let cc = anticommutator(&cre[m], &cre[k]);
                    let aa = anticommutator(&ann[m], &ann[k]);
                    for i in 0..dim {
                        for j in 0..dim {
                            let delta = i64::from(m == k && i == j);
                            assert_eq!(mixed[i][j], delta, "n={n} m={m} k={k}");
                            assert_eq!(cc[i][j], 0);
                            assert_eq!(aa[i][j], 0);
                        }
                    }
                }
                // annihilation is exactly the transpose of creation
                for i in 0..dim {
                    for j in 0..dim {
                        assert_eq!(ann[m][i][j], cre[m][j][i]);
                    }
                }
            }
        }
    }

    #[test]
    fn double_creation_vanishes() {
        let n = 2;
        for mask in 0..16 {
            let v = FockVector::basis(n, mask).unwrap();
            for m in 0..4 {
                let mi = ModeIndex::from_flat(n, m).unwrap();
                let twice = apply_creation(&apply_creation(&v, mi).unwrap(), mi).unwrap();
                assert_eq!(twice.norm_sqr(), 0.0);
            }
        }
    }

    #[test]
    fn wedge_examples() {
        let n = 2;
        let vac = FockVector::vacuum(n).unwrap();
        let psi = prepare_site_psi(n, 1, StateVariant::Tilde).unwrap();
        assert_eq!(wedge_product(&vac, &psi).unwrap(), psi);
        assert_eq!(wedge_product(&psi, &vac).unwrap(), psi);

        let up1 = FockVector::basis(n, 0b0001).unwrap();
        let up2 = FockVector::basis(n, 0b0100).unwrap();
        let w = wedge_product(&up1, &up2).unwrap();
        // c†_0 c†_2 |->
        let brute = apply_creation(
            &apply_creation(&vac, mode(n, 1, Spin::Up)).unwrap(),
            mode(n, 0, Spin::Up),
        )
        .unwrap();
        assert_eq!(w, brute);
        assert_eq!(w.amplitude(0b0101), c(1.0, 0.0));

        // reversed order: c†_2 c†_0 |-> = -|0101>
        let w_rev = wedge_product(&up2, &up1).unwrap();
        assert_eq!(w_rev.amplitude(0b0101), c(-1.0, 0.0));

        let a = prepare_site_psi(n, 0, StateVariant::Plain).unwrap();
        assert!(matches!(
            wedge_product(&a, &prepare_site_psi(n, 0, StateVariant::Tilde).unwrap()),
            Err(Error::OverlappingSupports { site: 0 })
        ));
        let b = prepare_site_psi(n, 1, StateVariant::Tilde).unwrap();
        assert!(wedge_product(&a, &b).unwrap().is_normalized());
    }

    #[test]
    fn prepared_states() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = prepare_site_psi(1, 0, StateVariant::Plain).unwrap();
        assert_eq!(psi.amplitudes(), &[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        let tilde = prepare_site_psi(1, 0, StateVariant::Tilde).unwrap();
        assert_eq!(tilde.amplitudes(), &[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, s)]);
        assert!(psi.is_normalized() && tilde.is_normalized());

        let phi = prepare_pair_phi(2, (0, 1), StateVariant::Plain).unwrap();
        assert_eq!(phi, FockVector::basis(2, 0b0001).unwrap());
        let phit = prepare_pair_phi(2, (0, 1), StateVariant::Tilde).unwrap();
        assert_eq!(phit.amplitude(0b0001), c(0.5, 0.5));
        assert_eq!(phit.amplitude(0b0100), c(0.5, -0.5));
        assert!(phit.is_normalized());
        assert!(prepare_pair_phi(2, (1, 1), StateVariant::Plain).is_err());
    }

    #[test]
    fn projector_examples() {
        let psi = prepare_site_psi(1, 0, StateVariant::Plain).unwrap();
        let o = ProjectorSpec::site_psi(1, 0).unwrap();
        assert!((projector_expectation(&psi, &o).unwrap() - 1.0).abs() < 1e-12);

        // e^{-iHt}|ψ> for H = ξ n↑n↓ is diagonal: phase e^{-iξt} on |↑↓>.
        let evolved = |variant, t: f64| {
            let mut v = prepare_site_psi(1, 0, variant).unwrap();
            v.amplitudes_mut()[0b11] *= Complex64::from_polar(1.0, -t);
            v
        };
        let pi = std::f64::consts::PI;
        let e = projector_expectation(&evolved(StateVariant::Plain, pi), &o).unwrap();
        assert!(e.abs() < 1e-12);
        let e = projector_expectation(&evolved(StateVariant::Tilde, pi / 2.0), &o).unwrap();
        assert!((e - 1.0).abs() < 1e-12);

        let pair = ProjectorSpec::pair_phi(3, (0, 2)).unwrap();
        assert_eq!(pair.support().len(), 4);
        let bad = ProjectorSpec::site_psi(1, 0).unwrap();
        assert!(projector_expectation(&FockVector::vacuum(2).unwrap(), &bad).is_ok());
        let far = ProjectorSpec::site_psi(3, 2).unwrap();
        assert!(matches!(
            projector_expectation(&FockVector::vacuum(2).unwrap(), &far),
            Err(Error::ModeOutOfRange { .. })
        ));
    }

    #[test]
    fn projector_rejects_bad_targets() {
        let modes = vec![mode(1, 0, Spin::Up), mode(1, 0, Spin::Down)];
        let unnormalized = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        assert!(ProjectorSpec::new(modes.clone(), unnormalized).is_err());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mixed = vec![c(s, 0.0), c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        assert!(ProjectorSpec::new(modes.clone(), mixed).is_err());
        let reversed = vec![modes[1], modes[0]];
        assert!(ProjectorSpec::new(reversed, vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).is_err());
    }

    /// Brute-force projector: P = Σ_rest |rest ∧ t><rest ∧ t| via wedge products.
    #[test]
    fn projector_matches_wedge_construction() {
        let n = 3;
        let proj = ProjectorSpec::pair_phi(n, (0, 2)).unwrap();
        let target = prepare_pair_phi(n, (0, 2), StateVariant::Plain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let amps: Vec<Complex64> = (0..64).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let mut state = FockVector::from_amplitudes(n, amps).unwrap();
        state.normalize().unwrap();
        let mut brute = 0.0;
        for rest in 0..64usize {
            if rest & proj.support_mask() != 0 {
                continue;
            }
            let frame = wedge_product(&FockVector::basis(n, rest).unwrap(), &target).unwrap();
            brute += frame.inner(&state).norm_sqr();
        }
        let fast = projector_expectation(&state, &proj).unwrap();
        assert!((brute - fast).abs() < 1e-13);
    }

    #[test]
    fn measurement_deterministic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = prepare_site_psi(1, 0, StateVariant::Plain).unwrap();
        let o = ProjectorSpec::site_psi(1, 0).unwrap();
        for _ in 0..100 {
            let (out, collapsed) = projective_measure(&psi, std::slice::from_ref(&o), &mut rng).unwrap();
            assert_eq!(out, vec![true]);
            assert!(collapsed.is_normalized());
        }
        let vac = FockVector::vacuum(1).unwrap();
        let dbl = ProjectorSpec::from_state(
            &FockVector::basis(1, 0b11).unwrap(),
            vec![mode(1, 0, Spin::Up), mode(1, 0, Spin::Down)],
        )
        .unwrap();
        for _ in 0..100 {
            let (out, _) = projective_measure(&vac, std::slice::from_ref(&dbl), &mut rng).unwrap();
            assert_eq!(out, vec![false]);
        }
        let overlap = vec![o.clone(), o];
        assert!(projective_measure(&psi, &overlap, &mut rng).is_err());
    }

    #[test]
    fn measurement_frequencies_match_expectation() {
        let n = 2;
        let a = prepare_site_psi(n, 0, StateVariant::Tilde).unwrap();
        // a superposition that is not a product across the two supports
        let mut state = a.clone();
        let bb = prepare_site_psi(n, 1, StateVariant::Plain).unwrap();
        let ab = wedge_product(&a, &bb).unwrap();
        for (x, y) in state.amplitudes_mut().iter_mut().zip(ab.amplitudes()) {
            *x = *x * 0.6 + y * 0.8;
        }
        state.normalize().unwrap();
        let projs = vec![ProjectorSpec::site_psi(n, 0).unwrap(), ProjectorSpec::site_psi(n, 1).unwrap()];
        let expect: Vec<f64> = projs.iter().map(|p| projector_expectation(&state, p).unwrap()).collect();
        let shots = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [MeasureMode::Faithful, MeasureMode::FastMarginal] {
            let mut hits = [0usize; 2];
            for _ in 0..shots {
                let out = measure(&state, &projs, mode, &mut rng).unwrap();
                for (h, o) in hits.iter_mut().zip(out) {
                    *h += usize::from(o);
                }
            }
            for (h, p) in hits.iter().zip(&expect) {
                let freq = *h as f64 / shots as f64;
                let se = (p * (1.0 - p) / shots as f64).sqrt();
                assert!((freq - p).abs() < 5.0 * se, "{mode:?}: {freq} vs {p}");
            }
        }
    }

    fn arb_site_state(n: usize, site: usize) -> impl Strategy<Value = FockVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4).prop_map(move |v| {
            let mut s = FockVector::zeros(n).unwrap();
            for (local, (re, im)) in v.into_iter().enumerate() {
                let mask = ((local & 1) | ((local >> 1) << 1)) << (2 * site);
                s.amplitudes_mut()[mask] = c(re, im);
            }
            s
        })
    }

    proptest! {
        #[test]
        fn wedge_norm_multiplies_and_associates(
            a in arb_site_state(3, 0),
            b in arb_site_state(3, 1),
            d in arb_site_state(3, 2),
        ) {
            let ab = wedge_product(&a, &b).unwrap();
            prop_assert!((ab.norm_sqr() - a.norm_sqr() * b.norm_sqr()).abs() < 1e-12);
            let left = wedge_product(&ab, &d).unwrap();
            let right = wedge_product(&a, &wedge_product(&b, &d).unwrap()).unwrap();
            let plus = left.max_abs_diff(&right);
            let mut neg = right.clone();
            neg.amplitudes_mut().iter_mut().for_each(|x| *x = -*x);
            let minus = left.max_abs_diff(&neg);
            prop_assert!(plus.min(minus) < 1e-12);
        }
    }
}
