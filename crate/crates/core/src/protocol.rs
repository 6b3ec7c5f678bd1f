//! The learning loop: for every color class, prepare product states on the
//! class, evolve with phase-twirl insertions on all other sites, measure, and
//! turn the two quadratures per level into robust phase estimates.
//!
//! Hopping passes prepare `|φ>` / `|φ̃>` on every edge of the class and read
//! out `e^{i 2h t}`; interaction passes prepare `|ψ>` / `|ψ̃>` on one endpoint
//! set and read out `e^{i ξ t}`.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coloring::{color_graph, ColorPartition};
use crate::error::{Error, Result};
use crate::evolution::{evolve, evolve_with_insertions_batch, EvolutionConfig, Propagator, Spectrum};
use crate::fock::{
    measure, prepare_pair_phi, prepare_site_psi, projector_expectation, wedge_product, FockVector, MeasureMode,
    ProjectorSpec, StateVariant,
};
use crate::hamiltonian::{build_matrix, validate_model, Edge, HubbardModel, InteractionGraph};
use crate::reshape::{choose_r, effective_hamiltonian, TwirlSpec, DEFAULT_CALIBRATION_CONSTANT, PER_RUN_BUDGET};
use crate::rpe::{rpe_refine, rpe_schedule, wrap_pi, RpeSchedule, RpeState, SignalRecord};
use crate::seed;

/// Repetitions advanced together; fixed so results do not depend on the
/// worker count.
const SHOT_CHUNK: usize = 64;

/// Largest system `learn` accepts in shot mode unless the guard is lifted.
pub const SHOT_MODE_SITE_GUARD: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionMode {
    /// Sampled twirls and projective measurements, `N_s/2` repetitions per
    /// quadrature.
    #[default]
    Shot,
    /// Analytic expectations under `e^{-iH_eff t}`, no sampling.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrature {
    Cos,
    Sin,
}

impl Quadrature {
    pub const BOTH: [Quadrature; 2] = [Quadrature::Cos, Quadrature::Sin];

    fn variant(self) -> StateVariant {
        match self {
            Quadrature::Cos => StateVariant::Plain,
            Quadrature::Sin => StateVariant::Tilde,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Endpoint {
    First,
    Second,
}

/// What one pass learns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PassKind {
    Hopping { color: usize },
    Interaction { color: usize, endpoint: Endpoint },
    /// Interactions of sites without any edge.
    Isolated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    Hopping { edge: Edge },
    Interaction { site: usize },
}

/// One `(color, target group)` combination: fixed twirl, targets and
/// observables, run at every level and quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct Pass {
    pub kind: PassKind,
    pub twirl: TwirlSpec,
    pub targets: Vec<Target>,
    pub observables: Vec<ProjectorSpec>,
}

impl Pass {
    pub fn initial_state(&self, n_sites: usize, quadrature: Quadrature) -> Result<FockVector> {
        let variant = quadrature.variant();
        let mut state = FockVector::vacuum(n_sites)?;
        for t in &self.targets {
            let factor = match *t {
                Target::Hopping { edge } => prepare_pair_phi(n_sites, (edge.lo(), edge.hi()), variant)?,
                Target::Interaction { site } => prepare_site_psi(n_sites, site, variant)?,
            };
            state = wedge_product(&state, &factor)?;
        }
        Ok(state)
    }

    pub fn untwirled_sites(&self) -> BTreeSet<usize> {
        self.targets
            .iter()
            .flat_map(|t| match *t {
                Target::Hopping { edge } => edge.sites().to_vec(),
                Target::Interaction { site } => vec![site],
            })
            .collect()
    }
}

/// All passes for a graph, in execution order: per color the hopping pass and
/// the two interaction passes, then one pass for isolated sites if any.
pub fn plan_passes(graph: &InteractionGraph, partition: &ColorPartition) -> Result<Vec<Pass>> {
    let n = graph.n_sites();
    let mut passes = Vec::new();
    for (color, class) in partition.classes().iter().enumerate() {
        for e in &class.edges {
            if !graph.contains(*e) {
                return Err(Error::EdgeAbsent(e.lo(), e.hi()));
            }
        }
        let targets: Vec<Target> = class.edges.iter().map(|&edge| Target::Hopping { edge }).collect();
        let observables = class
            .edges
            .iter()
            .map(|e| ProjectorSpec::pair_phi(n, (e.lo(), e.hi())))
            .collect::<Result<_>>()?;
        passes.push(Pass {
            kind: PassKind::Hopping { color },
            twirl: TwirlSpec::complement(n, &class.vertices),
            targets,
            observables,
        });
        for (endpoint, sites) in [(Endpoint::First, &class.first), (Endpoint::Second, &class.second)] {
            passes.push(interaction_pass(n, PassKind::Interaction { color, endpoint }, sites)?);
        }
    }
    let covered: usize = partition.assignment().len();
    if covered != graph.edges().len() {
        return Err(Error::InvalidGraph(format!(
            "partition colors {covered} edges, graph has {}",
            graph.edges().len()
        )));
    }
    let isolated: BTreeSet<usize> = graph.isolated_sites().into_iter().collect();
    if !isolated.is_empty() {
        passes.push(interaction_pass(n, PassKind::Isolated, &isolated)?);
    }
    Ok(passes)
}

fn interaction_pass(n: usize, kind: PassKind, sites: &BTreeSet<usize>) -> Result<Pass> {
    Ok(Pass {
        kind,
        twirl: TwirlSpec::complement(n, sites),
        targets: sites.iter().map(|&site| Target::Interaction { site }).collect(),
        observables: sites.iter().map(|&s| ProjectorSpec::site_psi(n, s)).collect::<Result<_>>()?,
    })
}

/// One batch of identical runs: a pass at one level and quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan<'a> {
    pub pass: &'a Pass,
    pub level: u32,
    pub quadrature: Quadrature,
    pub shots: usize,
    /// Segments per run.
    pub r: usize,
}

impl ExperimentPlan<'_> {
    /// `t = 2^j`.
    pub fn time(&self) -> f64 {
        2f64.powi(self.level as i32)
    }
}

/// Black-box access to `e^{-iHt}` with single-site phase insertions. The
/// learner only sees the interaction graph; coefficients stay private.
#[derive(Clone, Debug)]
pub struct SimulatedDevice {
    model: HubbardModel,
    spectrum: Spectrum,
    cfg: EvolutionConfig,
}

impl SimulatedDevice {
    pub fn new(model: HubbardModel, cfg: EvolutionConfig) -> Result<Self> {
        let violations = validate_model(&model);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        let spectrum = Spectrum::new(&build_matrix(&model)?)?;
        Ok(SimulatedDevice { model, spectrum, cfg })
    }

    pub fn graph(&self) -> &InteractionGraph {
        &self.model.graph
    }

    pub fn n_sites(&self) -> usize {
        self.model.n_sites()
    }

    /// `e^{-iHτ}` for one segment.
    pub fn segment(&self, tau: f64) -> Result<Propagator> {
        Ok(self.spectrum.propagator(tau))
    }

    /// Noiseless reference: `e^{-iH_eff t}|state>` for the twirl's effective
    /// Hamiltonian.
    pub fn evolve_effective(&self, state: &FockVector, twirl: &TwirlSpec, t: f64) -> Result<FockVector> {
        let h_eff = build_matrix(&effective_hamiltonian(&self.model, twirl)?)?;
        evolve(state, &h_eff, t, &self.cfg)
    }
}

/// Per-target estimators `2·mean − 1` of the quadrature signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalMeans {
    pub values: Vec<f64>,
    pub shots: usize,
}

/// Runs one plan. In shot mode each repetition draws from the substream
/// `[shot]` below `stream_seed`.
pub fn acquire_signal(
    plan: &ExperimentPlan<'_>,
    device: &SimulatedDevice,
    segment: Option<&Propagator>,
    mode: AcquisitionMode,
    measure_mode: MeasureMode,
    stream_seed: u64,
) -> Result<SignalMeans> {
    let pass = plan.pass;
    let n = device.n_sites();
    if pass.targets.len() != pass.observables.len() {
        return Err(Error::InvalidArgument("pass has mismatched targets and observables".into()));
    }
    for obs in &pass.observables {
        crate::reshape::check_observable(&pass.twirl, obs)?;
    }
    pass.twirl.check(n)?;
    let initial = pass.initial_state(n, plan.quadrature)?;
    match mode {
        AcquisitionMode::Exact => {
            let out = device.evolve_effective(&initial, &pass.twirl, plan.time())?;
            let values = pass
                .observables
                .iter()
                .map(|o| Ok(2.0 * projector_expectation(&out, o)? - 1.0))
                .collect::<Result<_>>()?;
            Ok(SignalMeans { values, shots: 0 })
        }
        AcquisitionMode::Shot => {
            if plan.shots == 0 {
                return Err(Error::InvalidArgument("shot mode needs at least one repetition".into()));
            }
            let owned;
            let prop = match segment {
                Some(p) => p,
                None => {
                    owned = device.segment(plan.time() / plan.r as f64)?;
                    &owned
                }
            };
            let k = pass.observables.len();
            let chunks: Vec<(usize, usize)> = (0..plan.shots)
                .step_by(SHOT_CHUNK)
                .map(|lo| (lo, (lo + SHOT_CHUNK).min(plan.shots)))
                .collect();
            let counts = chunks
                .into_par_iter()
                .map(|(lo, hi)| {
                    let mut rngs: Vec<_> = (lo..hi).map(|shot| seed::substream(stream_seed, &[shot as u64])).collect();
                    let outs = evolve_with_insertions_batch(prop, &initial, plan.r, &pass.twirl, &mut rngs)?;
                    let mut c = vec![0usize; k];
                    for (out, rng) in outs.iter().zip(rngs.iter_mut()) {
                        for (ci, bit) in c.iter_mut().zip(measure(out, &pass.observables, measure_mode, rng)?) {
                            *ci += usize::from(bit);
                        }
                    }
                    Ok::<_, Error>(c)
                })
                .try_reduce(
                    || vec![0usize; k],
                    |a, b| Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect()),
                )?;
            let values = counts
                .iter()
                .map(|&c| 2.0 * c as f64 / plan.shots as f64 - 1.0)
                .collect();
            Ok(SignalMeans {
                values,
                shots: plan.shots,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostCounters {
    /// Sum of `t` over all runs.
    pub total_evolution_time: f64,
    /// Number of prepare-evolve-measure runs.
    pub experiments: u64,
    /// Sum over runs of `r · |twirled sites|`.
    pub insertions: u64,
}

impl CostCounters {
    fn record(&mut self, runs: usize, t: f64, r: usize, twirled: usize) {
        self.total_evolution_time += runs as f64 * t;
        self.experiments += runs as u64;
        self.insertions += (runs * r * twirled) as u64;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub mode: AcquisitionMode,
    pub measure_mode: MeasureMode,
    pub calibration_constant: f64,
    pub evolution: EvolutionConfig,
    /// Lifts the shot-mode site guard.
    pub allow_large: bool,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            epsilon: 0.05,
            eta: 0.1,
            mode: AcquisitionMode::Shot,
            measure_mode: MeasureMode::Faithful,
            calibration_constant: DEFAULT_CALIBRATION_CONSTANT,
            evolution: EvolutionConfig::default(),
            allow_large: false,
        }
    }
}

/// Per-level summary of one pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: u32,
    pub time: f64,
    pub r: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub kind: PassKind,
    pub twirled_sites: Vec<usize>,
    pub targets: Vec<Target>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    #[serde(with = "edge_list")]
    pub h_estimates: BTreeMap<Edge, f64>,
    pub xi_estimates: Vec<f64>,
    pub counters: CostCounters,
    pub schedule: RpeSchedule,
    pub seed: u64,
    pub num_colors: usize,
    pub passes: Vec<PassRecord>,
    pub levels: Vec<LevelRecord>,
}

/// Edge-keyed maps as `[[edge, value], ...]`; JSON keys must be strings.
mod edge_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use crate::hamiltonian::Edge;

    pub fn serialize<S: Serializer>(map: &BTreeMap<Edge, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Edge, f64>, D::Error> {
        Ok(Vec::<(Edge, f64)>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub target: Target,
    pub truth: f64,
    pub estimate: f64,
    pub error: f64,
    pub success: bool,
}

impl LearnReport {
    /// Compares every estimate with `truth` at accuracy `epsilon`.
    pub fn score(&self, truth: &HubbardModel, epsilon: f64) -> Result<Vec<TargetScore>> {
        if truth.n_sites() != self.xi_estimates.len() {
            return Err(Error::SiteCountMismatch {
                left: truth.n_sites(),
                right: self.xi_estimates.len(),
            });
        }
        let mut out = Vec::new();
        for (&edge, &estimate) in &self.h_estimates {
            if !truth.graph.contains(edge) {
                return Err(Error::EdgeAbsent(edge.lo(), edge.hi()));
            }
            out.push((Target::Hopping { edge }, truth.hopping(edge), estimate));
        }
        for (site, &estimate) in self.xi_estimates.iter().enumerate() {
            out.push((Target::Interaction { site }, truth.xi[site], estimate));
        }
        Ok(out
            .into_iter()
            .map(|(target, truth, estimate)| {
                let error = (estimate - truth).abs();
                TargetScore {
                    target,
                    truth,
                    estimate,
                    error,
                    success: error < epsilon,
                }
            })
            .collect())
    }
}

/// `Z = X + iY`; an exactly zero signal (possible with finitely many shots)
/// is read as argument 0.
fn signal_value(x: f64, y: f64) -> Complex64 {
    let z = Complex64::new(x, y);
    if z == Complex64::new(0.0, 0.0) {
        Complex64::new(f64::MIN_POSITIVE, 0.0)
    } else {
        z
    }
}

/// Full protocol with a root seed; every pass, level, quadrature and shot draws
/// from its own substream `[pass, level, quadrature]`.
pub fn learn(device: &SimulatedDevice, cfg: &LearnConfig, root_seed: u64) -> Result<LearnReport> {
    let n = device.n_sites();
    if cfg.mode == AcquisitionMode::Shot && n > SHOT_MODE_SITE_GUARD && !cfg.allow_large {
        return Err(Error::TooManySites {
            n_sites: n,
            max: SHOT_MODE_SITE_GUARD,
        });
    }
    let schedule = rpe_schedule(cfg.epsilon, cfg.eta)?;
    let partition = color_graph(device.graph());
    let passes = plan_passes(device.graph(), &partition)?;

    let levels: Vec<LevelRecord> = (0..=schedule.levels)
        .map(|level| {
            let time = 2f64.powi(level as i32);
            Ok(LevelRecord {
                level,
                time,
                r: choose_r(time, PER_RUN_BUDGET, cfg.calibration_constant)?,
            })
        })
        .collect::<Result<_>>()?;
    let segments: Vec<Option<Propagator>> = match cfg.mode {
        AcquisitionMode::Shot => levels
            .iter()
            .map(|l| device.segment(l.time / l.r as f64).map(Some))
            .collect::<Result<_>>()?,
        AcquisitionMode::Exact => vec![None; levels.len()],
    };

    let mut counters = CostCounters::default();
    let mut h_estimates = BTreeMap::new();
    let mut xi_estimates: Vec<Option<f64>> = vec![None; n];
    for (p, pass) in passes.iter().enumerate() {
        let mut states = vec![RpeState::default(); pass.targets.len()];
        for lvl in &levels {
            let mut quads = Vec::with_capacity(2);
            for (q, &quadrature) in Quadrature::BOTH.iter().enumerate() {
                let plan = ExperimentPlan {
                    pass,
                    level: lvl.level,
                    quadrature,
                    shots: schedule.shots_per_quadrature(),
                    r: lvl.r,
                };
                let stream = seed::derive(root_seed, &[p as u64, u64::from(lvl.level), q as u64]);
                let means = acquire_signal(
                    &plan,
                    device,
                    segments[lvl.level as usize].as_ref(),
                    cfg.mode,
                    cfg.measure_mode,
                    stream,
                )?;
                counters.record(plan.shots, plan.time(), plan.r, pass.twirl.len());
                quads.push(means.values);
            }
            for (k, st) in states.iter_mut().enumerate() {
                let rec = SignalRecord {
                    level: lvl.level,
                    z: signal_value(quads[0][k], quads[1][k]),
                    shots_used: 2 * schedule.shots_per_quadrature(),
                };
                *st = rpe_refine(st, rec.z)?;
            }
        }
        for (target, st) in pass.targets.iter().zip(&states) {
            let phase = wrap_pi(st.theta);
            match *target {
                Target::Hopping { edge } => {
                    h_estimates.insert(edge, phase / 2.0);
                }
                Target::Interaction { site } => {
                    xi_estimates[site].get_or_insert(phase);
                }
            }
        }
    }
    let xi_estimates = xi_estimates
        .into_iter()
        .enumerate()
        .map(|(site, x)| x.ok_or_else(|| Error::InvalidGraph(format!("site {site} was never estimated"))))
        .collect::<Result<_>>()?;
    Ok(LearnReport {
        h_estimates,
        xi_estimates,
        counters,
        schedule,
        seed: root_seed,
        num_colors: partition.num_colors(),
        passes: passes
            .iter()
            .map(|p| PassRecord {
                kind: p.kind,
                twirled_sites: p.twirl.sites().iter().copied().collect(),
                targets: p.targets.clone(),
            })
            .collect(),
        levels,
    })
}

/// Outcome of the budget composition check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    pub ok: bool,
    /// `4·reshaping + shot`, compared with `√3/2`.
    pub total: f64,
}

/// Per-quadrature reshaping bias `b` on `<O>` becomes `2b` on `X` (or `Y`) and
/// at most `4b` on `Z`; adding the shot-noise radius must stay below `√3/2`.
pub fn budget_check(reshaping_error_bound: f64, shot_bound: f64) -> BudgetCheck {
    let total = 4.0 * reshaping_error_bound + shot_bound;
    BudgetCheck {
        ok: total <= 3f64.sqrt() / 2.0 + 1e-12,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        assert!(budget_check(PER_RUN_BUDGET, 2.0 / 3.0).ok);
        assert!(!budget_check(0.2, 2.0 / 3.0).ok);
        assert!(budget_check(0.0, 0.0).ok);
        assert!((budget_check(PER_RUN_BUDGET, 2.0 / 3.0).total - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn five_chain_passes() {
        let g = InteractionGraph::chain(5);
        let p = color_graph(&g);
        let passes = plan_passes(&g, &p).unwrap();
        assert_eq!(passes.len(), 9);
        let hop = &passes[0];
        assert_eq!(hop.targets.len(), 2);
        assert_eq!(hop.twirl.sites().iter().copied().collect::<Vec<_>>(), vec![2]);
        assert_eq!(passes[1].untwirled_sites(), BTreeSet::from([0, 3]));
        let init = hop.initial_state(5, Quadrature::Cos).unwrap();
        assert!((init.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_sites_get_their_own_pass() {
        let g = InteractionGraph::new(4, [(0, 1)]).unwrap();
        let passes = plan_passes(&g, &color_graph(&g)).unwrap();
        assert_eq!(passes.len(), 4);
        assert_eq!(passes[3].kind, PassKind::Isolated);
        assert_eq!(passes[3].untwirled_sites(), BTreeSet::from([2, 3]));
    }

    #[test]
    fn zero_signal_reads_as_argument_zero() {
        assert_eq!(signal_value(0.0, 0.0).arg(), 0.0);
        assert_eq!(signal_value(0.5, -0.5), Complex64::new(0.5, -0.5));
    }
}
