//! Experiment orchestration behind the command-line tool: instance generation,
//! learn runs with reports, scaling sweeps and the verification suites.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coloring::{color_graph, ColorPartition};
use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolutionConfig};
use crate::fock::{prepare_pair_phi, prepare_site_psi, spin_counts, FockVector, MeasureMode, ProjectorSpec, StateVariant};
use crate::hamiltonian::{build_matrix, Edge, HubbardModel, InstanceDoc, InteractionGraph};
use crate::protocol::{learn, plan_passes, AcquisitionMode, SHOT_MODE_SITE_GUARD, CostCounters, LearnConfig, LearnReport, TargetScore};
use crate::reshape::{channel_error_estimate, effective_hamiltonian, TwirlSpec, DEFAULT_CALIBRATION_CONSTANT};
use crate::rpe::{circular_distance, rpe_run, rpe_run_schedule, rpe_schedule, SignalRecord};
use crate::seed;
use crate::verify::{exact_signal, fit_loglog, quadrature_effective_hamiltonian, FitResult};

pub const REPORT_FORMAT: &str = "hubbard-report/1";
pub const SCALING_FORMAT: &str = "hubbard-scaling/1";

/// Column order of the scaling CSV.
pub const SCALING_COLUMNS: [&str; 5] = ["epsilon", "total_evolution_time", "experiments", "insertions", "max_error"];

/// Worker count for the global thread pool; unset means one per core.
pub const WORKERS_ENV: &str = "HUBBARD_LEARN_WORKERS";

/// Reads the worker-count variable. `None` when unset or empty.
pub fn workers_from_env() -> Result<Option<usize>> {
    parse_workers(std::env::var(WORKERS_ENV).ok().as_deref())
}

pub fn parse_workers(value: Option<&str>) -> Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidArgument(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Settings shared by `learn` and `scaling`.
///
/// Defaults: `epsilon = 0.05`, `eta = 0.1`, `seed = 0`, shot mode, faithful
/// measurement, the default calibration constant, no output path, guard on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epsilon: f64,
    pub eta: f64,
    pub seed: u64,
    pub mode: AcquisitionMode,
    pub calibration_constant: f64,
    pub measure_mode: MeasureMode,
    /// Not echoed, so reports do not depend on where they are written.
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub allow_large: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: 0.05,
            eta: 0.1,
            seed: 0,
            mode: AcquisitionMode::Shot,
            calibration_constant: DEFAULT_CALIBRATION_CONSTANT,
            measure_mode: MeasureMode::Faithful,
            out: None,
            allow_large: false,
        }
    }
}

impl RunConfig {
    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            epsilon: self.epsilon,
            eta: self.eta,
            mode: self.mode,
            measure_mode: self.measure_mode,
            calibration_constant: self.calibration_constant,
            evolution: EvolutionConfig::default(),
            allow_large: self.allow_large,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InstanceKind {
    Chain { sites: usize },
    Grid { rows: usize, cols: usize },
    /// Pairs are visited in a seeded random order and kept with probability
    /// `edge_probability` while both endpoints have degree below `max_degree`.
    Random { sites: usize, max_degree: usize, edge_probability: f64 },
}

/// Fixed coefficient values; `None` draws uniformly from `[−1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coefficients {
    pub hopping: Option<f64>,
    pub xi: Option<f64>,
}

pub fn generate_graph(kind: InstanceKind, seed: u64) -> Result<InteractionGraph> {
    match kind {
        InstanceKind::Chain { sites } => {
            if sites == 0 {
                return Err(Error::InvalidArgument("a chain needs at least one site".into()));
            }
            Ok(InteractionGraph::chain(sites))
        }
        InstanceKind::Grid { rows, cols } => {
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidArgument("grid dimensions must be positive".into()));
            }
            let id = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            InteractionGraph::new(rows * cols, edges)
        }
        InstanceKind::Random {
            sites,
            max_degree,
            edge_probability,
        } => {
            if sites == 0 || max_degree == 0 {
                return Err(Error::InvalidArgument("random graphs need sites ≥ 1 and degree bound ≥ 1".into()));
            }
            if !(0.0..=1.0).contains(&edge_probability) {
                return Err(Error::InvalidArgument(format!(
                    "edge probability must lie in [0, 1], got {edge_probability}"
                )));
            }
            let mut rng = seed::substream(seed, &[1]);
            let mut pairs: Vec<(usize, usize)> = (0..sites)
                .flat_map(|i| (i + 1..sites).map(move |j| (i, j)))
                .collect();
            pairs.shuffle(&mut rng);
            let mut degree = vec![0usize; sites];
            let mut edges = Vec::new();
            for (i, j) in pairs {
                if degree[i] < max_degree && degree[j] < max_degree && rng.gen_bool(edge_probability) {
                    degree[i] += 1;
                    degree[j] += 1;
                    edges.push((i, j));
                }
            }
            InteractionGraph::new(sites, edges)
        }
    }
}

/// Builds an instance; hoppings are drawn in edge order, then interactions in
/// site order, from substream `[0]` of `seed`.
pub fn generate_instance(kind: InstanceKind, coefficients: Coefficients, seed: u64) -> Result<HubbardModel> {
    let graph = generate_graph(kind, seed)?;
    let mut rng = seed::substream(seed, &[0]);
    let mut draw = |fixed: Option<f64>| fixed.unwrap_or_else(|| rng.gen_range(-1.0..=1.0));
    let hopping = graph.edges().iter().map(|&e| (e, draw(coefficients.hopping))).collect();
    let xi = (0..graph.n_sites()).map(|_| draw(coefficients.xi)).collect();
    Ok(HubbardModel::new(graph, hopping, xi))
}

/// Structured result of one learn run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnDocument {
    pub format: String,
    pub config: RunConfig,
    pub instance: InstanceDoc,
    pub seed: u64,
    pub schedule: crate::rpe::RpeSchedule,
    pub counters: CostCounters,
    pub num_colors: usize,
    pub scores: Vec<TargetScore>,
    pub max_error: f64,
    pub all_success: bool,
    pub report: LearnReport,
}

impl LearnDocument {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub fn run_learn(model: &HubbardModel, cfg: &RunConfig) -> Result<LearnDocument> {
    // checked before the device diagonalizes anything
    let n = model.n_sites();
    if cfg.mode == AcquisitionMode::Shot && n > SHOT_MODE_SITE_GUARD && !cfg.allow_large {
        return Err(Error::TooManySites {
            n_sites: n,
            max: SHOT_MODE_SITE_GUARD,
        });
    }
    let device = crate::protocol::SimulatedDevice::new(model.clone(), EvolutionConfig::default())?;
    let report = learn(&device, &cfg.learn_config(), cfg.seed)?;
    let scores = report.score(model, cfg.epsilon)?;
    let max_error = scores.iter().map(|s| s.error).fold(0.0, f64::max);
    Ok(LearnDocument {
        format: REPORT_FORMAT.to_string(),
        config: cfg.clone(),
        instance: InstanceDoc::from_model(model),
        seed: cfg.seed,
        schedule: report.schedule,
        counters: report.counters,
        num_colors: report.num_colors,
        all_success: scores.iter().all(|s| s.success),
        scores,
        max_error,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub trial: usize,
    pub total_evolution_time: f64,
    pub experiments: u64,
    pub insertions: u64,
    pub max_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSweep {
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub rows: Vec<ScalingRow>,
    /// Passes per learn run, for the closed-form counter audit.
    pub passes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSummary {
    pub format: String,
    pub config: RunConfig,
    /// `ln T` against `ln(1/ε)`, trial means.
    pub time_fit: FitResult,
    pub insertion_fit: FitResult,
    /// `passes · (J+1) · N_s` per epsilon.
    pub expected_experiments: Vec<u64>,
    pub experiments_match: bool,
}

/// Runs `learn` for every `(ε, trial)`; trial `k` at epsilon index `i` uses
/// seed `derive(cfg.seed, [i, k])`. Rows are ordered by `(ε, trial)`.
pub fn run_scaling(model: &HubbardModel, epsilons: &[f64], trials: usize, cfg: &RunConfig) -> Result<ScalingSweep> {
    if epsilons.len() < 3 {
        return Err(Error::InvalidArgument("a scaling sweep needs at least three epsilon values".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("a scaling sweep needs at least one trial".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..epsilons.len())
        .flat_map(|i| (0..trials).map(move |k| (i, k)))
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(i, k)| {
            let run = RunConfig {
                epsilon: epsilons[i],
                seed: seed::derive(cfg.seed, &[i as u64, k as u64]),
                ..cfg.clone()
            };
            let doc = run_learn(model, &run)?;
            Ok(ScalingRow {
                epsilon: epsilons[i],
                trial: k,
                total_evolution_time: doc.counters.total_evolution_time,
                experiments: doc.counters.experiments,
                insertions: doc.counters.insertions,
                max_error: doc.max_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passes = plan_passes(&model.graph, &color_graph(&model.graph))?.len();
    Ok(ScalingSweep {
        epsilons: epsilons.to_vec(),
        trials,
        rows,
        passes,
    })
}

impl ScalingSweep {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SCALING_COLUMNS)?;
        for row in &self.rows {
            w.write_record([
                row.epsilon.to_string(),
                row.total_evolution_time.to_string(),
                row.experiments.to_string(),
                row.insertions.to_string(),
                row.max_error.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn mean_per_epsilon(&self, f: impl Fn(&ScalingRow) -> f64) -> Vec<(f64, f64)> {
        self.epsilons
            .iter()
            .map(|&eps| {
                let vals: Vec<f64> = self.rows.iter().filter(|r| r.epsilon == eps).map(&f).collect();
                (1.0 / eps, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    pub fn summary(&self, cfg: &RunConfig) -> Result<ScalingSummary> {
        let time_fit = fit_loglog(&self.mean_per_epsilon(|r| r.total_evolution_time))?;
        let insertion_fit = fit_loglog(&self.mean_per_epsilon(|r| r.insertions as f64))?;
        let expected_experiments = self
            .epsilons
            .iter()
            .map(|&eps| {
                let s = rpe_schedule(eps, cfg.eta)?;
                Ok((self.passes * s.experiments()) as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        let experiments_match = self.rows.iter().all(|row| {
            let i = self.epsilons.iter().position(|&e| e == row.epsilon).expect("row epsilon is listed");
            row.experiments == expected_experiments[i]
        });
        Ok(ScalingSummary {
            format: SCALING_FORMAT.to_string(),
            config: cfg.clone(),
            time_fit,
            insertion_fit,
            expected_experiments,
            experiments_match,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Signals,
    Reshaping,
    Coloring,
    Rpe,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Signals, Suite::Reshaping, Suite::Coloring, Suite::Rpe];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Signals => "signals",
            Suite::Reshaping => "reshaping",
            Suite::Coloring => "coloring",
            Suite::Rpe => "rpe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub property: String,
    pub measured: f64,
    pub requirement: String,
    pub pass: bool,
}

impl Check {
    fn below(property: &str, measured: f64, bound: f64) -> Self {
        Check {
            property: property.to_string(),
            measured,
            requirement: format!("< {bound:e}"),
            pass: measured < bound,
        }
    }

    fn within(property: &str, measured: f64, lo: f64, hi: f64) -> Self {
        Check {
            property: property.to_string(),
            measured,
            requirement: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&measured),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Signals => signals_suite(seed)?,
        Suite::Reshaping => reshaping_suite(seed)?,
        Suite::Coloring => coloring_suite(seed)?,
        Suite::Rpe => rpe_suite(seed)?,
    };
    Ok(SuiteReport { suite, seed, checks })
}

fn signals_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = seed::substream(seed, &[0]);
    let psi = |v| prepare_site_psi(1, 0, v);
    let o1 = ProjectorSpec::site_psi(1, 0)?;
    let mut site_err: f64 = 0.0;
    for _ in 0..50 {
        let xi = rng.gen_range(-1.0..=1.0);
        let t = rng.gen_range(0.0..10.0);
        let m = HubbardModel::from_edges(1, &[], vec![xi])?;
        let c = exact_signal(&m, &psi(StateVariant::Plain)?, &o1, t)?;
        let s = exact_signal(&m, &psi(StateVariant::Tilde)?, &o1, t)?;
        site_err = site_err
            .max((c - (1.0 + (t * xi).cos()) / 2.0).abs())
            .max((s - (1.0 + (t * xi).sin()) / 2.0).abs());
    }
    let o2 = ProjectorSpec::pair_phi(2, (0, 1))?;
    let mut pair_err: f64 = 0.0;
    for _ in 0..50 {
        let h = rng.gen_range(-1.0..=1.0);
        let t = rng.gen_range(0.0..10.0);
        let xi = vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let m = HubbardModel::from_edges(2, &[(0, 1, h)], xi)?;
        let c = exact_signal(&m, &prepare_pair_phi(2, (0, 1), StateVariant::Plain)?, &o2, t)?;
        let s = exact_signal(&m, &prepare_pair_phi(2, (0, 1), StateVariant::Tilde)?, &o2, t)?;
        pair_err = pair_err
            .max((c - (1.0 + (2.0 * h * t).cos()) / 2.0).abs())
            .max((s - (1.0 + (2.0 * h * t).sin()) / 2.0).abs());
    }
    // with its neighbours twirled the site signal ignores the rest of the chain
    let mut embedded_err: f64 = 0.0;
    for _ in 0..10 {
        let model = generate_instance(InstanceKind::Chain { sites: 3 }, Coefficients::default(), rng.gen())?;
        let t = rng.gen_range(0.0..10.0);
        let eff = effective_hamiltonian(&model, &TwirlSpec::new(3, [0, 2])?)?;
        let init = prepare_site_psi(3, 1, StateVariant::Tilde)?;
        let s = exact_signal(&eff, &init, &ProjectorSpec::site_psi(3, 1)?, t)?;
        embedded_err = embedded_err.max((s - (1.0 + (t * model.xi[1]).sin()) / 2.0).abs());
    }
    let mut leak: f64 = 0.0;
    for _ in 0..10 {
        let model = generate_instance(InstanceKind::Chain { sites: 3 }, Coefficients::default(), rng.gen())?;
        let h = build_matrix(&model)?;
        let sector = (1u32, 2u32);
        let amps: Vec<Complex64> = (0..64usize)
            .map(|m| {
                if spin_counts(m) == sector {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let mut state = FockVector::from_amplitudes(3, amps)?;
        state.normalize()?;
        let out = evolve(&state, &h, rng.gen_range(0.0..10.0), &EvolutionConfig::default())?;
        let outside: f64 = (0..64usize)
            .filter(|&m| spin_counts(m) != sector)
            .map(|m| out.amplitude(m).norm_sqr())
            .sum();
        leak = leak.max(outside);
    }
    Ok(vec![
        Check::below("single-site signal error, 50 draws", site_err, 1e-10),
        Check::below("two-site signal error, 50 draws", pair_err, 1e-10),
        Check::below("interaction signal with twirled neighbours", embedded_err, 1e-10),
        Check::below("weight outside the initial spin sector", leak, 1e-20),
    ])
}

fn random_model(rng: &mut impl Rng, max_sites: usize) -> Result<HubbardModel> {
    let sites = rng.gen_range(2..=max_sites);
    let kind = InstanceKind::Random {
        sites,
        max_degree: 3,
        edge_probability: 0.7,
    };
    generate_instance(kind, Coefficients::default(), rng.gen())
}

/// Four-site chain used by the reshaping error-law checks.
pub fn reshaping_chain(sites: usize) -> Result<HubbardModel> {
    const H: [f64; 5] = [0.8, -0.6, 0.7, 0.5, -0.9];
    const XI: [f64; 6] = [0.4, -0.3, 0.6, -0.5, 0.2, 0.7];
    if !(2..=6).contains(&sites) {
        return Err(Error::InvalidArgument(format!("reshaping chain has 2..=6 sites, got {sites}")));
    }
    let edges: Vec<_> = (0..sites - 1).map(|i| (i, i + 1, H[i])).collect();
    HubbardModel::from_edges(sites, &edges, XI[..sites].to_vec())
}

fn reshaping_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = seed::substream(seed, &[0]);
    let mut oracle_err: f64 = 0.0;
    for _ in 0..30 {
        let model = random_model(&mut rng, 4)?;
        let n = model.n_sites();
        let k = rng.gen_range(1..=n.min(3));
        let mut sites: Vec<usize> = (0..n).collect();
        sites.shuffle(&mut rng);
        let spec = TwirlSpec::new(n, sites[..k].iter().copied())?;
        let fast = build_matrix(&effective_hamiltonian(&model, &spec)?)?;
        let slow = quadrature_effective_hamiltonian(&model, &spec, 5)?;
        oracle_err = oracle_err.max(fast.max_abs_diff(&slow));
    }

    let samples = 2000;
    let chain = reshaping_chain(4)?;
    let pair_spec = TwirlSpec::new(4, 2..4)?;
    let pair_obs = ProjectorSpec::pair_phi(4, (0, 1))?;
    let pair_init = prepare_pair_phi(4, (0, 1), StateVariant::Tilde)?;
    let mut by_r = Vec::new();
    for (i, r) in [8usize, 16, 32, 64, 128].into_iter().enumerate() {
        let mut sub = seed::substream(seed, &[1, i as u64]);
        let e = channel_error_estimate(&chain, &pair_spec, &pair_obs, &pair_init, 2.0, r, samples, &mut sub)?;
        by_r.push((r as f64, e.deviation.abs()));
    }
    let r_slope = fit_loglog(&by_r)?.slope;

    let site = |n: usize| -> Result<(TwirlSpec, ProjectorSpec, FockVector)> {
        Ok((
            TwirlSpec::new(n, 1..n)?,
            ProjectorSpec::site_psi(n, 0)?,
            prepare_site_psi(n, 0, StateVariant::Tilde)?,
        ))
    };
    let (spec, obs, init) = site(4)?;
    let mut by_t = Vec::new();
    for (i, t) in [0.25f64, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let mut sub = seed::substream(seed, &[2, i as u64]);
        let e = channel_error_estimate(&chain, &spec, &obs, &init, t, 16, samples, &mut sub)?;
        by_t.push((t, e.deviation.abs()));
    }
    let t_slope = fit_loglog(&by_t)?.slope;

    let mut sized = Vec::new();
    for (i, n) in [4usize, 6].into_iter().enumerate() {
        let (spec, obs, init) = site(n)?;
        let mut sub = seed::substream(seed, &[3, i as u64]);
        sized.push(channel_error_estimate(&reshaping_chain(n)?, &spec, &obs, &init, 2.0, 16, samples, &mut sub)?);
    }
    let sigma = (sized[0].std_error.powi(2) + sized[1].std_error.powi(2)).sqrt();
    let z = (sized[0].deviation - sized[1].deviation).abs() / sigma;

    Ok(vec![
        Check::below("effective Hamiltonian vs quadrature, 30 models", oracle_err, 1e-10),
        Check::within("deviation vs r slope at t = 2", r_slope, -1.15, -0.85),
        Check::within("deviation vs t slope at r = 16", t_slope, 1.7, 2.3),
        Check::below("N = 4 vs N = 6 deviation difference in σ", z, 3.0),
    ])
}

/// Distinct edges of one class share no vertex and no graph edge joins their
/// endpoints.
pub fn partition_is_valid(graph: &InteractionGraph, partition: &ColorPartition) -> bool {
    let colored: BTreeSet<Edge> = partition.assignment().keys().copied().collect();
    if colored.len() != graph.edges().len() || graph.edges().iter().any(|e| !colored.contains(e)) {
        return false;
    }
    partition.classes().iter().all(|class| {
        class.edges.iter().enumerate().all(|(a, &e)| {
            class.edges[a + 1..].iter().all(|&f| {
                !e.shares_vertex(f)
                    && e.sites()
                        .iter()
                        .all(|&u| f.sites().iter().all(|&v| !graph.contains(Edge::new(u, v))))
            })
        })
    })
}

fn coloring_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = seed::substream(seed, &[0]);
    let mut invalid = 0usize;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..200 {
        let kind = InstanceKind::Random {
            sites: rng.gen_range(2..=20),
            max_degree: rng.gen_range(1..=4),
            edge_probability: rng.gen_range(0.2..=1.0),
        };
        let graph = generate_graph(kind, rng.gen())?;
        let p = color_graph(&graph);
        if !partition_is_valid(&graph, &p) {
            invalid += 1;
        }
        let d = graph.max_degree().max(1);
        worst_ratio = worst_ratio.max(p.num_colors() as f64 / (4 * d * d + 1) as f64);
    }
    let path = color_graph(&InteractionGraph::chain(4)).num_colors();
    Ok(vec![
        Check::below("invalid partitions out of 200", invalid as f64, 0.5),
        Check::within("max χ / (4d² + 1)", worst_ratio, 0.0, 1.0),
        Check::within("χ of the three-edge path", path as f64, 3.0, 3.0),
    ])
}

/// Signal with `shots` repetitions per quadrature of a phase `phi`.
pub fn sampled_signal(rng: &mut impl Rng, phase: f64, shots: usize) -> Complex64 {
    let mean = |p: f64, rng: &mut dyn rand::RngCore| {
        let hits = (0..shots).filter(|_| rng.gen_bool(p.clamp(0.0, 1.0))).count();
        2.0 * hits as f64 / shots as f64 - 1.0
    };
    let x = mean((1.0 + phase.cos()) / 2.0, rng);
    let y = mean((1.0 + phase.sin()) / 2.0, rng);
    Complex64::new(x, y)
}

fn rpe_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = seed::substream(seed, &[0]);
    let mut exact_err = [0.0f64; 2];
    for (slot, eps) in [1e-2, 1e-3].into_iter().enumerate() {
        for _ in 0..100 {
            let xi: f64 = rng.gen_range(-1.0..1.0);
            let out = rpe_run(
                |j| {
                    Ok(SignalRecord {
                        level: j,
                        z: Complex64::from_polar(1.0, 2f64.powi(j as i32) * xi),
                        shots_used: 0,
                    })
                },
                eps,
                0.1,
            )?;
            exact_err[slot] = exact_err[slot].max((out.estimate - xi).abs() / eps);
        }
    }

    let mut invariant_breaks = 0usize;
    let mut noisy_err: f64 = 0.0;
    let eps = 1e-3;
    for _ in 0..100 {
        let xi: f64 = rng.gen_range(-1.0..1.0);
        let dir = rng.gen_range(-PI..PI);
        let out = rpe_run(
            |j| {
                let ideal = Complex64::from_polar(1.0, 2f64.powi(j as i32) * xi);
                Ok(SignalRecord {
                    level: j,
                    z: ideal + ideal * Complex64::from_polar(0.6, dir),
                    shots_used: 0,
                })
            },
            eps,
            0.1,
        )?;
        invariant_breaks += out
            .trajectory
            .iter()
            .filter(|st| circular_distance(st.theta, xi) >= st.confidence_radius())
            .count();
        noisy_err = noisy_err.max((out.estimate - xi).abs() / eps);
    }

    let schedule = rpe_schedule(0.05, 0.1)?;
    let mut successes = 0usize;
    for _ in 0..200 {
        let xi: f64 = rng.gen_range(-1.0..1.0);
        let mut provider = |j: u32| {
            Ok(SignalRecord {
                level: j,
                z: sampled_signal(&mut rng, 2f64.powi(j as i32) * xi, schedule.shots_per_quadrature()),
                shots_used: schedule.shots,
            })
        };
        let out = rpe_run_schedule(&mut provider, &schedule)?;
        if (out.estimate - xi).abs() < 0.05 {
            successes += 1;
        }
    }

    Ok(vec![
        Check::below("exact signals, max error / ε at ε = 1e-2", exact_err[0], 1.0),
        Check::below("exact signals, max error / ε at ε = 1e-3", exact_err[1], 1.0),
        Check::below("interval invariant breaks under noise 0.6", invariant_breaks as f64, 0.5),
        Check::below("noisy signals, max error / ε", noisy_err, 1.0),
        Check::within("shot-noise success rate, 200 trials", successes as f64 / 200.0, 0.9, 1.0),
    ])
}
