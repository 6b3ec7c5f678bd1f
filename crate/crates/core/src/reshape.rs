//! Phase twirls `U = ∏_i e^{-iθ_i(n_i↑ + n_i↓)}`, the effective Hamiltonian
//! they induce, segment-count selection and the Monte-Carlo reshaping-error
//! estimator.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve, evolve_with_insertions_using, EvolutionConfig, Propagator};
use crate::fock::{projector_expectation, site_occupation, FockVector, ProjectorSpec};
use crate::hamiltonian::{build_matrix, HubbardModel};
use crate::seed;

/// Per-quadrature reshaping budget `(√3/2 − 2/3)/4`.
pub const PER_RUN_BUDGET: f64 = (0.866_025_403_784_438_6 - 2.0 / 3.0) / 4.0;

/// Calibrated constant `C` in `r = ⌈C t² / budget⌉`: twice the largest
/// `deviation · r / t²` seen in the calibration sweep
/// (`verify::calibration_sweep`).
pub const DEFAULT_CALIBRATION_CONSTANT: f64 = 2.8;

/// Set of sites carrying an independent phase twirl.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwirlSpec {
    sites: BTreeSet<usize>,
}

impl TwirlSpec {
    pub fn new(n_sites: usize, sites: impl IntoIterator<Item = usize>) -> Result<Self> {
        let spec = TwirlSpec {
            sites: sites.into_iter().collect(),
        };
        spec.check(n_sites)?;
        Ok(spec)
    }

    pub fn empty() -> Self {
        TwirlSpec::default()
    }

    /// All sites of `0..n_sites` except `keep`.
    pub fn complement(n_sites: usize, keep: &BTreeSet<usize>) -> Self {
        TwirlSpec {
            sites: (0..n_sites).filter(|s| !keep.contains(s)).collect(),
        }
    }

    pub fn sites(&self) -> &BTreeSet<usize> {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.contains(&site)
    }

    pub fn check(&self, n_sites: usize) -> Result<()> {
        match self.sites.iter().next_back() {
            Some(&s) if s >= n_sites => Err(Error::SiteOutOfRange { site: s, n_sites }),
            _ => Ok(()),
        }
    }
}

/// One draw of the twirl: an angle per twirled site.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTwirl {
    angles: Vec<(usize, f64)>,
}

impl SampledTwirl {
    pub fn from_angles(angles: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut angles: Vec<_> = angles.into_iter().collect();
        angles.sort_by_key(|&(s, _)| s);
        SampledTwirl { angles }
    }

    pub fn angles(&self) -> &[(usize, f64)] {
        &self.angles
    }

    /// `exp(-i Σ θ_i occ_i(mask))`.
    pub fn phase(&self, mask: usize) -> Complex64 {
        let a: f64 = self
            .angles
            .iter()
            .map(|&(s, th)| f64::from(site_occupation(mask, s)) * th)
            .sum();
        Complex64::from_polar(1.0, -a)
    }
}

/// Independent `θ_i ~ U[0, 2π)` in ascending site order.
pub fn sample_twirl<R: Rng + ?Sized>(spec: &TwirlSpec, rng: &mut R) -> SampledTwirl {
    SampledTwirl {
        angles: spec
            .sites
            .iter()
            .map(|&s| (s, rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect(),
    }
}

/// `U|state>`, or `U†|state>` when `inverse`.
pub fn apply_twirl(state: &FockVector, twirl: &SampledTwirl, inverse: bool) -> Result<FockVector> {
    if let Some(&(s, _)) = twirl.angles.last() {
        if s >= state.n_sites() {
            return Err(Error::SiteOutOfRange {
                site: s,
                n_sites: state.n_sites(),
            });
        }
    }
    let mut out = state.clone();
    for (mask, a) in out.amplitudes_mut().iter_mut().enumerate() {
        let p = twirl.phase(mask);
        *a *= if inverse { p.conj() } else { p };
    }
    Ok(out)
}

/// `E_U[U† H U]`: hoppings touching a twirled site vanish, everything else is
/// kept. The graph is unchanged; eliminated hoppings are stored as zero.
pub fn effective_hamiltonian(model: &HubbardModel, spec: &TwirlSpec) -> Result<HubbardModel> {
    spec.check(model.n_sites())?;
    let hopping: BTreeMap<_, _> = model
        .hopping
        .iter()
        .map(|(&e, &h)| {
            let killed = spec.contains(e.lo()) || spec.contains(e.hi());
            (e, if killed { 0.0 } else { h })
        })
        .collect();
    Ok(HubbardModel::new(model.graph.clone(), hopping, model.xi.clone()))
}

/// Total time `t` split into `r` equal segments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReshapeRun {
    t: f64,
    r: usize,
}

impl ReshapeRun {
    pub fn new(t: f64, r: usize) -> Result<Self> {
        if r < 1 {
            return Err(Error::InvalidArgument("at least one segment is required".into()));
        }
        if !t.is_finite() {
            return Err(Error::InvalidArgument(format!("evolution time {t} is not finite")));
        }
        Ok(ReshapeRun { t, r })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn tau(&self) -> f64 {
        self.t / self.r as f64
    }
}

/// `max(1, ⌈C t² / budget⌉)`.
pub fn choose_r(t: f64, error_budget: f64, calibration_constant: f64) -> Result<usize> {
    if !(t > 0.0) || !(error_budget > 0.0) || !(calibration_constant > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "choose_r needs positive inputs, got t = {t}, budget = {error_budget}, C = {calibration_constant}"
        )));
    }
    let r = (calibration_constant * t * t / error_budget).ceil();
    if r > usize::MAX as f64 / 2.0 {
        return Err(Error::InvalidArgument(format!("segment count {r:e} is not representable")));
    }
    Ok((r as usize).max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelErrorEstimate {
    /// `|mean − exact|`.
    pub deviation: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    /// Monte-Carlo mean of `<O>` over insertion realizations.
    pub mean: f64,
    /// `<O>` under `e^{-iH_eff t}`.
    pub exact: f64,
    pub n_samples: usize,
}

pub(crate) fn check_observable(spec: &TwirlSpec, observable: &ProjectorSpec) -> Result<()> {
    match observable.support_sites().into_iter().find(|s| spec.contains(*s)) {
        Some(s) => Err(Error::ObservableOnTwirledSite(s)),
        None => Ok(()),
    }
}

/// Monte-Carlo estimate of the reshaping error of `observable` after time `t`
/// with `r` segments. Realizations run in parallel on substreams seeded from
/// one draw of `rng`, so the result does not depend on the thread count.
#[allow(clippy::too_many_arguments)]
pub fn channel_error_estimate<R: Rng + ?Sized>(
    model: &HubbardModel,
    spec: &TwirlSpec,
    observable: &ProjectorSpec,
    initial: &FockVector,
    t: f64,
    r: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<ChannelErrorEstimate> {
    check_observable(spec, observable)?;
    spec.check(model.n_sites())?;
    if n_samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    let run = ReshapeRun::new(t, r)?;
    let cfg = EvolutionConfig::default();
    let h_eff = build_matrix(&effective_hamiltonian(model, spec)?)?;
    let exact = projector_expectation(&evolve(initial, &h_eff, t, &cfg)?, observable)?;

    let prop = Propagator::new(&build_matrix(model)?, run.tau(), &cfg)?;
    let base: u64 = rng.gen();
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut stream = seed::substream(base, &[i as u64]);
            let out = evolve_with_insertions_using(&prop, initial, r, spec, &mut stream)?;
            projector_expectation(&out, observable)
        })
        .collect::<Result<_>>()?;
    let n = n_samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(ChannelErrorEstimate {
        deviation: (mean - exact).abs(),
        std_error: (var / n).sqrt(),
        mean,
        exact,
        n_samples,
    })
}
