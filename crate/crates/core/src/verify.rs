//! Brute-force references for the analytic shortcuts used elsewhere.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use rand::Rng;
use rayon::prelude::*;

use crate::coloring::color_graph;
use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolutionConfig, Propagator};
use crate::fock::{projector_expectation, site_occupation, spin_counts, FockVector, ProjectorSpec};
use crate::hamiltonian::{build_matrix, HubbardModel, InteractionGraph};
use crate::operator::SparseOperator;
use crate::protocol::{plan_passes, Quadrature};
use crate::reshape::{choose_r, effective_hamiltonian, SampledTwirl, TwirlSpec, PER_RUN_BUDGET};
use crate::seed;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Largest twirl handled by the tensor-grid quadrature.
pub const QUADRATURE_MAX_SITES: usize = 3;

/// Average of `U(θ)† H U(θ)` over the `K^{|spec|}` grid `θ_i = 2πk/K`.
pub fn quadrature_effective_hamiltonian(model: &HubbardModel, spec: &TwirlSpec, k: usize) -> Result<SparseOperator> {
    if spec.len() > QUADRATURE_MAX_SITES {
        return Err(Error::InvalidArgument(format!(
            "quadrature grid supports at most {QUADRATURE_MAX_SITES} twirled sites, got {}",
            spec.len()
        )));
    }
    if k < 5 {
        return Err(Error::InvalidArgument(format!("quadrature needs at least 5 nodes, got {k}")));
    }
    spec.check(model.n_sites())?;
    let h = build_matrix(model)?;
    let sites: Vec<usize> = spec.sites().iter().copied().collect();
    let points = k.pow(sites.len() as u32);
    let mut acc: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for g in 0..points {
        let mut rest = g;
        let u = SampledTwirl::from_angles(sites.iter().map(|&s| {
            let idx = rest % k;
            rest /= k;
            (s, std::f64::consts::TAU * idx as f64 / k as f64)
        }));
        for (i, j, v) in h.iter() {
            *acc.entry((i, j)).or_insert(ZERO) += u.phase(i).conj() * v * u.phase(j);
        }
    }
    let scale = 1.0 / points as f64;
    Ok(SparseOperator::from_triplets(
        h.dim(),
        acc.into_iter()
            .map(|((i, j), v)| (i, j, v * scale))
            .filter(|(_, _, v)| v.norm() > 1e-14),
    ))
}

/// Dense propagator from a full (unblocked) eigendecomposition.
fn dense_propagator(op: &SparseOperator, t: f64) -> DMatrix<Complex64> {
    let eig = op.to_dense().symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * t)));
    v * d * v.adjoint()
}

/// Largest system for the dense references.
pub const DENSE_MAX_SITES: usize = 5;

/// `<ψ|e^{iHt} P e^{-iHt}|ψ>` by dense matrix exponential of the full space.
pub fn exact_signal(model: &HubbardModel, initial: &FockVector, proj: &ProjectorSpec, t: f64) -> Result<f64> {
    if model.n_sites() > DENSE_MAX_SITES {
        return Err(Error::TooManySites {
            n_sites: model.n_sites(),
            max: DENSE_MAX_SITES,
        });
    }
    if initial.n_sites() != model.n_sites() {
        return Err(Error::SiteCountMismatch {
            left: model.n_sites(),
            right: initial.n_sites(),
        });
    }
    let u = dense_propagator(&build_matrix(model)?, t);
    let x = nalgebra::DVector::from_column_slice(initial.amplitudes());
    let y = u * x;
    let out = FockVector::from_amplitudes(model.n_sites(), y.iter().copied().collect())?;
    projector_expectation(&out, proj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::InvalidArgument(format!("log-log fit needs positive values, got {p:?}")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// The averaged insertion channel `ρ ↦ E_θ[U† e^{-iHτ} U ρ U† e^{iHτ} U]`
/// restricted to the particle-number sectors of an initial state.
///
/// With `W = U† V U`, `W_ac = e^{iθ·(o_a − o_c)} V_ac` where `o` are the
/// occupations of the twirled sites, so the average keeps exactly the terms
/// with `o_a − o_b = o_c − o_d`. Grouping basis states by their occupation
/// pattern turns each step into small dense products.
#[derive(Clone, Debug)]
pub struct AveragedChannel {
    n_sites: usize,
    indices: Vec<usize>,
    groups: Vec<Vec<usize>>,
    patterns: Vec<Vec<i32>>,
    /// `V` split into pattern blocks, `vb[a][c]`.
    vb: Vec<Vec<DMatrix<Complex64>>>,
    /// For each group pair `(c, d)`, groups `(a, b)` with the same pattern
    /// difference.
    partners: BTreeMap<Vec<i32>, Vec<(usize, usize)>>,
}

impl AveragedChannel {
    pub fn new(model: &HubbardModel, spec: &TwirlSpec, initial: &FockVector, tau: f64) -> Result<Self> {
        spec.check(model.n_sites())?;
        if initial.n_sites() != model.n_sites() {
            return Err(Error::SiteCountMismatch {
                left: model.n_sites(),
                right: initial.n_sites(),
            });
        }
        let sectors: std::collections::BTreeSet<(u32, u32)> = initial
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > 0.0)
            .map(|(m, _)| spin_counts(m))
            .collect();
        let indices: Vec<usize> = (0..initial.dim()).filter(|&m| sectors.contains(&spin_counts(m))).collect();
        let sites: Vec<usize> = spec.sites().iter().copied().collect();
        let mut patterns: Vec<Vec<i32>> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (local, &m) in indices.iter().enumerate() {
            let p: Vec<i32> = sites.iter().map(|&s| site_occupation(m, s) as i32).collect();
            match patterns.iter().position(|q| *q == p) {
                Some(g) => groups[g].push(local),
                None => {
                    patterns.push(p);
                    groups.push(vec![local]);
                }
            }
        }
        let mut partners: BTreeMap<Vec<i32>, Vec<(usize, usize)>> = BTreeMap::new();
        for a in 0..patterns.len() {
            for b in 0..patterns.len() {
                let delta: Vec<i32> = patterns[a].iter().zip(&patterns[b]).map(|(x, y)| x - y).collect();
                partners.entry(delta).or_default().push((a, b));
            }
        }
        let prop = Propagator::new(&build_matrix(model)?, tau, &EvolutionConfig::default())?;
        let d = indices.len();
        let mut v = DMatrix::zeros(d, d);
        for (c, &m) in indices.iter().enumerate() {
            let mut col = FockVector::basis(model.n_sites(), m)?;
            prop.apply(&mut col)?;
            for (r, &mr) in indices.iter().enumerate() {
                v[(r, c)] = col.amplitude(mr);
            }
        }
        let vb = (0..groups.len())
            .map(|a| (0..groups.len()).map(|c| Self::sub(&v, &groups[a], &groups[c])).collect())
            .collect();
        Ok(AveragedChannel {
            n_sites: model.n_sites(),
            indices,
            groups,
            patterns,
            vb,
            partners,
        })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn initial_density(&self, initial: &FockVector) -> DMatrix<Complex64> {
        let x: Vec<Complex64> = self.indices.iter().map(|&m| initial.amplitude(m)).collect();
        DMatrix::from_fn(x.len(), x.len(), |a, b| x[a] * x[b].conj())
    }

    fn sub(m: &DMatrix<Complex64>, rows: &[usize], cols: &[usize]) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
    }

    /// One application of the averaged channel.
    pub fn step(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        let vb = &self.vb;
        for pairs in self.partners.values() {
            for &(c, dd) in pairs {
                let block = Self::sub(rho, &self.groups[c], &self.groups[dd]);
                if block.iter().all(|z| *z == ZERO) {
                    continue;
                }
                for &(a, b) in pairs {
                    let contrib = &vb[a][c] * &block * vb[b][dd].adjoint();
                    for (i, &ri) in self.groups[a].iter().enumerate() {
                        for (j, &cj) in self.groups[b].iter().enumerate() {
                            out[(ri, cj)] += contrib[(i, j)];
                        }
                    }
                }
            }
        }
        out
    }

    /// `Tr(P ρ)`.
    pub fn expectation(&self, rho: &DMatrix<Complex64>, proj: &ProjectorSpec) -> Result<f64> {
        let mut acc = ZERO;
        for (b, &mb) in self.indices.iter().enumerate() {
            let col = proj.apply(&FockVector::basis(self.n_sites, mb)?)?;
            for (a, &ma) in self.indices.iter().enumerate() {
                let p = col.amplitude(ma);
                if p != ZERO {
                    acc += p * rho[(b, a)];
                }
            }
        }
        Ok(acc.re)
    }

    pub fn patterns(&self) -> &[Vec<i32>] {
        &self.patterns
    }
}

/// `E[<O>]` after `r` twirled segments of length `t/r`, without sampling.
pub fn reshaped_expectation(
    model: &HubbardModel,
    spec: &TwirlSpec,
    observable: &ProjectorSpec,
    initial: &FockVector,
    t: f64,
    r: usize,
) -> Result<f64> {
    if r < 1 {
        return Err(Error::InvalidArgument("at least one segment is required".into()));
    }
    let ch = AveragedChannel::new(model, spec, initial, t / r as f64)?;
    let mut rho = ch.initial_density(initial);
    for _ in 0..r {
        rho = ch.step(&rho);
    }
    ch.expectation(&rho, observable)
}

/// One calibration measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub instance: String,
    pub pass: String,
    pub quadrature: Quadrature,
    pub t: f64,
    pub r: usize,
    /// Largest `|E<O>_reshaped − <O>_eff|` over the pass observables.
    pub deviation: f64,
    /// `deviation · r / t²`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub points: Vec<CalibrationPoint>,
    pub max_ratio: f64,
    /// `2 · max_ratio`.
    pub constant: f64,
}

/// Exact reshaping deviation of every protocol experiment on `model` at each
/// time in `times`, with `r = ⌈t² / budget⌉`.
pub fn calibrate_instance(name: &str, model: &HubbardModel, times: &[f64]) -> Result<Vec<CalibrationPoint>> {
    let passes = plan_passes(&model.graph, &color_graph(&model.graph))?;
    let cfg = EvolutionConfig::default();
    let mut jobs = Vec::new();
    for pass in &passes {
        for q in Quadrature::BOTH {
            for &t in times {
                jobs.push((pass, q, t));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(pass, q, t)| {
            let n = model.n_sites();
            let init = pass.initial_state(n, q)?;
            let r = choose_r(t, PER_RUN_BUDGET, 1.0)?;
            let h_eff = build_matrix(&effective_hamiltonian(model, &pass.twirl)?)?;
            let reference = evolve(&init, &h_eff, t, &cfg)?;
            let ch = AveragedChannel::new(model, &pass.twirl, &init, t / r as f64)?;
            let mut rho = ch.initial_density(&init);
            for _ in 0..r {
                rho = ch.step(&rho);
            }
            let mut deviation: f64 = 0.0;
            for o in &pass.observables {
                deviation = deviation.max((ch.expectation(&rho, o)? - projector_expectation(&reference, o)?).abs());
            }
            Ok(CalibrationPoint {
                instance: name.to_string(),
                pass: format!("{:?}", pass.kind),
                quadrature: q,
                t,
                r,
                deviation,
                ratio: deviation * r as f64 / (t * t),
            })
        })
        .collect()
}

/// Instances of the default calibration sweep: chains of 2 to 6 sites, a
/// 4-cycle and a 3-star, each with three seeded coefficient draws.
pub fn calibration_instances() -> Vec<(String, HubbardModel)> {
    let mut shapes: Vec<(String, InteractionGraph)> =
        (2..=6).map(|n| (format!("chain{n}"), InteractionGraph::chain(n))).collect();
    shapes.push(("cycle4".into(), InteractionGraph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).expect("valid cycle")));
    shapes.push(("star4".into(), InteractionGraph::new(4, [(0, 1), (0, 2), (0, 3)]).expect("valid star")));
    let mut out = Vec::new();
    for (name, g) in shapes {
        for s in 0..3u64 {
            let mut rng = seed::substream(0xCA11_B8A7E, &[s, g.n_sites() as u64, g.edges().len() as u64]);
            let hopping = g.edges().iter().map(|&e| (e, rng.gen_range(-1.0..1.0))).collect();
            let xi = (0..g.n_sites()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            out.push((format!("{name}-s{s}"), HubbardModel::new(g.clone(), hopping, xi)));
        }
    }
    out
}

pub fn calibration_sweep(instances: &[(String, HubbardModel)], times: &[f64]) -> Result<CalibrationReport> {
    let mut points = Vec::new();
    for (name, model) in instances {
        points.extend(calibrate_instance(name, model, times)?);
    }
    let max_ratio = points.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(CalibrationReport {
        points,
        max_ratio,
        constant: 2.0 * max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{prepare_pair_phi, prepare_site_psi, StateVariant};
    use crate::reshape::effective_hamiltonian;

    #[test]
    fn quadrature_matches_analytic_two_site() {
        let model = HubbardModel::from_edges(2, &[(0, 1, 0.6)], vec![0.3, -0.8]).unwrap();
        let spec = TwirlSpec::new(2, [0]).unwrap();
        let q = quadrature_effective_hamiltonian(&model, &spec, 8).unwrap();
        let a = build_matrix(&effective_hamiltonian(&model, &spec).unwrap()).unwrap();
        assert!(q.max_abs_diff(&a) < 1e-12);
        assert!(q.is_diagonal());
        let same = quadrature_effective_hamiltonian(&model, &TwirlSpec::empty(), 8).unwrap();
        assert!(same.max_abs_diff(&build_matrix(&model).unwrap()) < 1e-15);
        let k5 = quadrature_effective_hamiltonian(&model, &spec, 5).unwrap();
        let k64 = quadrature_effective_hamiltonian(&model, &spec, 64).unwrap();
        assert!(k5.max_abs_diff(&k64) < 1e-12);
        assert!(quadrature_effective_hamiltonian(&model, &TwirlSpec::new(5, [0, 1, 2, 3]).unwrap(), 8).is_err());
    }

    #[test]
    fn exact_signal_examples() {
        let m = HubbardModel::from_edges(1, &[], vec![0.8]).unwrap();
        let psi = prepare_site_psi(1, 0, StateVariant::Plain).unwrap();
        let p = ProjectorSpec::site_psi(1, 0).unwrap();
        assert!((exact_signal(&m, &psi, &p, 2.0).unwrap() - (1.0 + 1.6f64.cos()) / 2.0).abs() < 1e-12);
        assert!((exact_signal(&m, &psi, &p, 0.0).unwrap() - 1.0).abs() < 1e-12);
        let m2 = HubbardModel::from_edges(2, &[(0, 1, 0.3)], vec![0.0, 0.0]).unwrap();
        let phi = prepare_pair_phi(2, (0, 1), StateVariant::Plain).unwrap();
        let o = ProjectorSpec::pair_phi(2, (0, 1)).unwrap();
        assert!((exact_signal(&m2, &phi, &o, 1.0).unwrap() - 0.3f64.cos().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn fit_examples() {
        let inv: Vec<_> = (1..6).map(|k| (k as f64, 3.0 / k as f64)).collect();
        assert!((fit_loglog(&inv).unwrap().slope + 1.0).abs() < 1e-12);
        let sq: Vec<_> = (1..6).map(|k| (k as f64, 0.5 * (k * k) as f64)).collect();
        let f = fit_loglog(&sq).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_loglog(&sq[..2]).is_err());
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    /// One channel step against a direct average of `W ρ W†` over a grid fine
    /// enough to resolve every pattern difference.
    #[test]
    fn averaged_channel_matches_grid_average() {
        let model = HubbardModel::from_edges(3, &[(0, 1, 0.7), (1, 2, -0.4)], vec![0.5, -0.3, 0.9]).unwrap();
        let spec = TwirlSpec::new(3, [1, 2]).unwrap();
        let init = prepare_site_psi(3, 0, StateVariant::Tilde).unwrap();
        let tau = 0.37;
        let ch = AveragedChannel::new(&model, &spec, &init, tau).unwrap();
        let rho0 = ch.initial_density(&init);
        let rho1 = ch.step(&rho0);

        let h = build_matrix(&model).unwrap();
        let v = dense_propagator(&h, tau);
        let k = 9;
        let dim = 64;
        let mut avg = DMatrix::<Complex64>::zeros(dim, dim);
        let x = nalgebra::DVector::from_column_slice(init.amplitudes());
        let rho_full = &x * x.adjoint();
        for g0 in 0..k {
            for g1 in 0..k {
                let u = SampledTwirl::from_angles([
                    (1, std::f64::consts::TAU * g0 as f64 / k as f64),
                    (2, std::f64::consts::TAU * g1 as f64 / k as f64),
                ]);
                let w = DMatrix::from_fn(dim, dim, |a, c| u.phase(a).conj() * v[(a, c)] * u.phase(c));
                avg += &w * &rho_full * w.adjoint();
            }
        }
        avg /= Complex64::new((k * k) as f64, 0.0);
        let mut diff: f64 = 0.0;
        for (a, &ma) in ch.indices.iter().enumerate() {
            for (b, &mb) in ch.indices.iter().enumerate() {
                diff = diff.max((rho1[(a, b)] - avg[(ma, mb)]).norm());
            }
        }
        assert!(diff < 1e-12, "{diff}");
        let trace: Complex64 = (0..ch.dim()).map(|i| rho1[(i, i)]).sum();
        assert!((trace.re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_twirl_channel_is_plain_evolution() {
        let model = HubbardModel::from_edges(2, &[(0, 1, 0.7)], vec![0.5, -0.3]).unwrap();
        let init = prepare_site_psi(2, 0, StateVariant::Plain).unwrap();
        let o = ProjectorSpec::site_psi(2, 0).unwrap();
        let a = reshaped_expectation(&model, &TwirlSpec::empty(), &o, &init, 1.7, 7).unwrap();
        let b = exact_signal(&model, &init, &o, 1.7).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
