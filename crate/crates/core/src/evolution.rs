//! Exact propagation `e^{-iHt}|ψ>` and evolution with random twirl insertions.
//!
//! All three methods work on the invariant blocks of `H` (its `(n_up, n_down)`
//! sectors for Hubbard operators). Eigendecomposition and scaling-and-squaring
//! produce a dense unitary per block; Krylov applies a Lanczos propagator to
//! the whole vector.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{site_occupation, FockVector};
use crate::operator::SparseOperator;
use crate::reshape::{apply_twirl, sample_twirl, TwirlSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Eigendecomposition,
    ScalingAndSquaring,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub method: Method,
    /// Target accuracy of the propagator and allowed norm drift.
    pub tolerance: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            method: Method::Eigendecomposition,
            tolerance: 1e-10,
        }
    }
}

impl EvolutionConfig {
    pub fn new(method: Method, tolerance: f64) -> Result<Self> {
        if !(tolerance > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tolerance}")));
        }
        Ok(EvolutionConfig { method, tolerance })
    }
}

fn check_hermitian(op: &SparseOperator) -> Result<()> {
    let defect = op.hermiticity_defect();
    if defect > 1e-12 * op.inf_norm().max(1.0) {
        return Err(Error::NonHermitian(defect));
    }
    Ok(())
}

fn dense_block(op: &SparseOperator, indices: &[usize]) -> DMatrix<Complex64> {
    let mut pos = vec![usize::MAX; op.dim()];
    for (k, &i) in indices.iter().enumerate() {
        pos[i] = k;
    }
    let d = indices.len();
    let mut m = DMatrix::zeros(d, d);
    for (r, &i) in indices.iter().enumerate() {
        for (j, v) in op.row(i) {
            let c = pos[j];
            debug_assert!(c != usize::MAX, "block is not invariant");
            m[(r, c)] = v;
        }
    }
    m
}

#[derive(Clone, Debug)]
struct EigenBlock {
    indices: Vec<usize>,
    values: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

/// Blockwise eigendecomposition of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    dim: usize,
    blocks: Vec<EigenBlock>,
}

impl Spectrum {
    pub fn new(op: &SparseOperator) -> Result<Self> {
        check_hermitian(op)?;
        let blocks = op
            .invariant_blocks()
            .into_iter()
            .map(|indices| {
                let m = dense_block(op, &indices);
                let (values, vectors) = hermitian_eigen(m);
                EigenBlock {
                    indices,
                    values,
                    vectors,
                }
            })
            .collect();
        Ok(Spectrum { dim: op.dim(), blocks })
    }

    /// All eigenvalues, unsorted.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    /// `e^{-iHt}` as dense per-block unitaries.
    pub fn propagator(&self, t: f64) -> Propagator {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let d = b.indices.len();
                let phases: Vec<Complex64> = b.values.iter().map(|&l| Complex64::from_polar(1.0, -l * t)).collect();
                let mut scaled = b.vectors.clone();
                for (k, p) in phases.iter().enumerate() {
                    scaled.column_mut(k).scale_mut(1.0);
                    for r in 0..d {
                        scaled[(r, k)] *= p;
                    }
                }
                let u = scaled * b.vectors.adjoint();
                DenseBlock::new(b.indices.clone(), &u)
            })
            .collect();
        Propagator {
            dim: self.dim,
            kind: Kind::Dense(blocks),
        }
    }
}

/// Real-symmetric fast path; complex Hermitian blocks go through the complex
/// solver.
fn hermitian_eigen(m: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    if m.iter().all(|z| z.im == 0.0) {
        let real = m.map(|z| z.re);
        let eig = SymmetricEigen::new(real);
        let vecs = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
        (eig.eigenvalues.iter().copied().collect(), vecs)
    } else {
        let eig = SymmetricEigen::new(m);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }
}

#[derive(Clone, Debug)]
struct DenseBlock {
    indices: Vec<usize>,
    /// Row-major `d x d` unitary.
    u: Vec<Complex64>,
    /// Real part, imaginary part and their sum, for batched products with
    /// three real multiplications.
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    sum: DMatrix<f64>,
}

impl DenseBlock {
    fn new(indices: Vec<usize>, m: &DMatrix<Complex64>) -> Self {
        let d = indices.len();
        let mut u = Vec::with_capacity(d * d);
        for r in 0..d {
            for c in 0..d {
                u.push(m[(r, c)]);
            }
        }
        DenseBlock {
            indices,
            u,
            re: m.map(|z| z.re),
            im: m.map(|z| z.im),
            sum: m.map(|z| z.re + z.im),
        }
    }

    fn dim(&self) -> usize {
        self.indices.len()
    }

    /// `y = U x` on gathered block coordinates.
    #[inline]
    fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        let d = self.dim();
        for (r, yr) in y.iter_mut().enumerate() {
            let row = &self.u[r * d..(r + 1) * d];
            let mut re = 0.0;
            let mut im = 0.0;
            for (a, b) in row.iter().zip(x) {
                re += a.re * b.re - a.im * b.im;
                im += a.re * b.im + a.im * b.re;
            }
            *yr = Complex64::new(re, im);
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Dense(Vec<DenseBlock>),
    Krylov {
        op: SparseOperator,
        t: f64,
        tolerance: f64,
    },
}

/// A fixed-time propagator `e^{-iHt}` ready to be applied repeatedly.
#[derive(Clone, Debug)]
pub struct Propagator {
    dim: usize,
    kind: Kind,
}

impl Propagator {
    pub fn new(op: &SparseOperator, t: f64, cfg: &EvolutionConfig) -> Result<Self> {
        EvolutionConfig::new(cfg.method, cfg.tolerance)?;
        match cfg.method {
            Method::Eigendecomposition => Ok(Spectrum::new(op)?.propagator(t)),
            Method::ScalingAndSquaring => {
                check_hermitian(op)?;
                let blocks = op
                    .invariant_blocks()
                    .into_iter()
                    .map(|indices| {
                        let h = dense_block(op, &indices);
                        let a = h * Complex64::new(0.0, -t);
                        DenseBlock::new(indices, &expm_scaling_squaring(&a))
                    })
                    .collect();
                Ok(Propagator {
                    dim: op.dim(),
                    kind: Kind::Dense(blocks),
                })
            }
            Method::Krylov => {
                check_hermitian(op)?;
                Ok(Propagator {
                    dim: op.dim(),
                    kind: Kind::Krylov {
                        op: op.clone(),
                        t,
                        tolerance: cfg.tolerance,
                    },
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, state: &mut FockVector) -> Result<()> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                operator: self.dim,
                state: state.dim(),
            });
        }
        match &self.kind {
            Kind::Dense(blocks) => {
                let amps = state.amplitudes_mut();
                let mut x = Vec::new();
                let mut y = Vec::new();
                for b in blocks {
                    x.clear();
                    x.extend(b.indices.iter().map(|&i| amps[i]));
                    if x.iter().all(|z| *z == ZERO) {
                        continue;
                    }
                    y.resize(b.dim(), ZERO);
                    b.matvec(&x, &mut y);
                    for (&i, v) in b.indices.iter().zip(&y) {
                        amps[i] = *v;
                    }
                }
                Ok(())
            }
            Kind::Krylov { op, t, tolerance } => {
                let out = krylov_expmv(op, state.amplitudes(), *t, *tolerance)?;
                state.amplitudes_mut().copy_from_slice(&out);
                Ok(())
            }
        }
    }
}

/// `e^{-iHt}|state>`.
pub fn evolve(state: &FockVector, op: &SparseOperator, t: f64, cfg: &EvolutionConfig) -> Result<FockVector> {
    if state.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            operator: op.dim(),
            state: state.dim(),
        });
    }
    let mut out = state.clone();
    if t == 0.0 {
        return Ok(out);
    }
    Propagator::new(op, t, cfg)?.apply(&mut out)?;
    check_norm(state, &out, cfg.tolerance)?;
    Ok(out)
}

fn check_norm(before: &FockVector, after: &FockVector, tolerance: f64) -> Result<()> {
    let drift = (after.norm() - before.norm()).abs();
    if drift > tolerance.max(1e-12) * before.norm().max(1.0) {
        return Err(Error::NoConvergence(format!("norm drifted by {drift:e}")));
    }
    Ok(())
}

/// `<state|H|state>`.
pub fn expectation(op: &SparseOperator, state: &FockVector) -> Complex64 {
    let mut y = vec![ZERO; op.dim()];
    op.apply(state.amplitudes(), &mut y);
    state.amplitudes().iter().zip(&y).map(|(a, b)| a.conj() * b).sum()
}

/// `∏_{l=r..1} U_l† e^{-iHτ} U_l |state>` with `τ = t/r` and a fresh twirl per
/// segment.
pub fn evolve_with_insertions<R: Rng + ?Sized>(
    state: &FockVector,
    op: &SparseOperator,
    t: f64,
    r: usize,
    twirl: &TwirlSpec,
    rng: &mut R,
    cfg: &EvolutionConfig,
) -> Result<FockVector> {
    if r < 1 {
        return Err(Error::InvalidArgument("at least one segment is required".into()));
    }
    let prop = Propagator::new(op, t / r as f64, cfg)?;
    evolve_with_insertions_using(&prop, state, r, twirl, rng)
}

/// Reference implementation of the insertion product: one `apply_twirl` /
/// propagate / `apply_twirl⁻¹` round per segment. Draws the same random
/// stream as [`evolve_with_insertions_using`].
pub fn evolve_with_insertions_naive<R: Rng + ?Sized>(
    prop: &Propagator,
    state: &FockVector,
    r: usize,
    twirl: &TwirlSpec,
    rng: &mut R,
) -> Result<FockVector> {
    let mut cur = state.clone();
    for _ in 0..r {
        let u = sample_twirl(twirl, rng);
        cur = apply_twirl(&cur, &u, false)?;
        prop.apply(&mut cur)?;
        cur = apply_twirl(&cur, &u, true)?;
    }
    Ok(cur)
}

/// Insertion product with a prebuilt `e^{-iHτ}`.
///
/// Dense propagators run block by block: adjacent `U_l† ... U_{l+1}` factors
/// fuse into one diagonal phase that depends only on the occupation pattern
/// of the twirled sites. All angles are drawn up front, segment-major and in
/// ascending site order, matching [`sample_twirl`].
pub fn evolve_with_insertions_using<R: Rng + ?Sized>(
    prop: &Propagator,
    state: &FockVector,
    r: usize,
    twirl: &TwirlSpec,
    rng: &mut R,
) -> Result<FockVector> {
    if r < 1 {
        return Err(Error::InvalidArgument("at least one segment is required".into()));
    }
    twirl.check(state.n_sites())?;
    let blocks = match &prop.kind {
        Kind::Dense(blocks) if !twirl.is_empty() => blocks,
        _ => return evolve_with_insertions_naive(prop, state, r, twirl, rng),
    };
    if state.dim() != prop.dim {
        return Err(Error::DimensionMismatch {
            operator: prop.dim,
            state: state.dim(),
        });
    }
    let sites: Vec<usize> = twirl.sites().iter().copied().collect();
    let k = sites.len();
    let thetas: Vec<f64> = (0..r * k)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();

    let mut out = state.clone();
    let amps = out.amplitudes_mut();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut phase = Vec::new();
    for b in blocks {
        x.clear();
        x.extend(b.indices.iter().map(|&i| amps[i]));
        if x.iter().all(|z| *z == ZERO) {
            continue;
        }
        // occupation patterns of the twirled sites present in this block
        let mut patterns: Vec<Vec<u32>> = Vec::new();
        let pattern_of: Vec<usize> = b
            .indices
            .iter()
            .map(|&mask| {
                let occ: Vec<u32> = sites.iter().map(|&s| site_occupation(mask, s)).collect();
                match patterns.iter().position(|p| *p == occ) {
                    Some(p) => p,
                    None => {
                        patterns.push(occ);
                        patterns.len() - 1
                    }
                }
            })
            .collect();
        let angle = |seg: usize, p: &[u32]| -> f64 {
            p.iter()
                .zip(&thetas[seg * k..(seg + 1) * k])
                .map(|(&o, &th)| f64::from(o) * th)
                .sum()
        };
        y.resize(b.dim(), ZERO);
        phase.resize(patterns.len(), ZERO);
        for seg in 0..=r {
            // U_seg (exp(-iΣθn)) fused with U_{seg-1}† (exp(+iΣθ'n))
            for (ph, p) in phase.iter_mut().zip(&patterns) {
                let next = if seg < r { angle(seg, p) } else { 0.0 };
                let prev = if seg > 0 { angle(seg - 1, p) } else { 0.0 };
                *ph = Complex64::from_polar(1.0, prev - next);
            }
            for (xi, &p) in x.iter_mut().zip(&pattern_of) {
                *xi *= phase[p];
            }
            if seg < r {
                b.matvec(&x, &mut y);
                std::mem::swap(&mut x, &mut y);
            }
        }
        for (&i, v) in b.indices.iter().zip(&x) {
            amps[i] = *v;
        }
    }
    Ok(out)
}

/// Insertion products for a batch of independent runs sharing one initial
/// state; run `s` draws its angles from `rngs[s]` exactly as
/// [`evolve_with_insertions_using`] would, so each output equals the
/// single-run result for that stream. Dense propagators advance all runs of a
/// block together with real matrix products.
pub fn evolve_with_insertions_batch<R: Rng>(
    prop: &Propagator,
    state: &FockVector,
    r: usize,
    twirl: &TwirlSpec,
    rngs: &mut [R],
) -> Result<Vec<FockVector>> {
    if r < 1 {
        return Err(Error::InvalidArgument("at least one segment is required".into()));
    }
    twirl.check(state.n_sites())?;
    let blocks = match &prop.kind {
        Kind::Dense(blocks) if !twirl.is_empty() && rngs.len() > 1 => blocks,
        _ => {
            return rngs
                .iter_mut()
                .map(|rng| evolve_with_insertions_using(prop, state, r, twirl, rng))
                .collect()
        }
    };
    if state.dim() != prop.dim {
        return Err(Error::DimensionMismatch {
            operator: prop.dim,
            state: state.dim(),
        });
    }
    let sites: Vec<usize> = twirl.sites().iter().copied().collect();
    let k = sites.len();
    let runs = rngs.len();
    // every run's angles, segment-major, drawn up front in stream order
    let thetas: Vec<Vec<f64>> = rngs
        .iter_mut()
        .map(|rng| (0..r * k).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect())
        .collect();

    let mut outs = vec![state.clone(); runs];
    let amps = state.amplitudes();
    for b in blocks {
        let d = b.dim();
        if b.indices.iter().all(|&i| amps[i] == ZERO) {
            continue;
        }
        let mut patterns: Vec<Vec<u32>> = Vec::new();
        let pattern_of: Vec<usize> = b
            .indices
            .iter()
            .map(|&mask| {
                let occ: Vec<u32> = sites.iter().map(|&s| site_occupation(mask, s)).collect();
                match patterns.iter().position(|p| *p == occ) {
                    Some(p) => p,
                    None => {
                        patterns.push(occ);
                        patterns.len() - 1
                    }
                }
            })
            .collect();
        let mut xr = DMatrix::<f64>::from_fn(d, runs, |i, _| amps[b.indices[i]].re);
        let mut xi = DMatrix::<f64>::from_fn(d, runs, |i, _| amps[b.indices[i]].im);
        let mut t1 = DMatrix::<f64>::zeros(d, runs);
        let mut t2 = DMatrix::<f64>::zeros(d, runs);
        let mut xs = DMatrix::<f64>::zeros(d, runs);
        let mut phase = vec![ZERO; patterns.len()];
        // per-site factor e^{i(θ_prev − θ_next)} and its square
        let mut w = vec![[ZERO; 3]; k];
        for seg in 0..=r {
            for s in 0..runs {
                let th = &thetas[s];
                for (q, wq) in w.iter_mut().enumerate() {
                    let prev = if seg > 0 { th[(seg - 1) * k + q] } else { 0.0 };
                    let next = if seg < r { th[seg * k + q] } else { 0.0 };
                    let z = Complex64::from_polar(1.0, prev - next);
                    *wq = [Complex64::new(1.0, 0.0), z, z * z];
                }
                for (ph, p) in phase.iter_mut().zip(&patterns) {
                    *ph = p
                        .iter()
                        .zip(&w)
                        .fold(Complex64::new(1.0, 0.0), |acc, (&o, wq)| acc * wq[o as usize]);
                }
                let cr = &mut xr.as_mut_slice()[s * d..(s + 1) * d];
                let ci = &mut xi.as_mut_slice()[s * d..(s + 1) * d];
                for ((re, im), &p) in cr.iter_mut().zip(ci.iter_mut()).zip(&pattern_of) {
                    let z = Complex64::new(*re, *im) * phase[p];
                    *re = z.re;
                    *im = z.im;
                }
            }
            if seg < r {
                // (A + iB)(P + iQ) = (AP − BQ) + i((A + B)(P + Q) − AP − BQ)
                xs.copy_from(&xr);
                xs += &xi;
                t1.gemm(1.0, &b.re, &xr, 0.0);
                t2.gemm(1.0, &b.im, &xi, 0.0);
                xi.gemm(1.0, &b.sum, &xs, 0.0);
                xi -= &t1;
                xi -= &t2;
                xr.copy_from(&t1);
                xr -= &t2;
            }
        }
        for (s, out) in outs.iter_mut().enumerate() {
            let o = out.amplitudes_mut();
            for (i, &idx) in b.indices.iter().enumerate() {
                o[idx] = Complex64::new(xr[(i, s)], xi[(i, s)]);
            }
        }
    }
    Ok(outs)
}

/// Dense `exp(A)` by Taylor expansion of `A / 2^s` followed by `s` squarings.
fn expm_scaling_squaring(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let d = a.nrows();
    let norm = (0..d)
        .map(|i| (0..d).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a / Complex64::new(2f64.powi(s), 0.0);
    let mut result = DMatrix::<Complex64>::identity(d, d);
    let mut term = DMatrix::<Complex64>::identity(d, d);
    for k in 1..=40 {
        term = &term * &b / Complex64::new(k as f64, 0.0);
        result += &term;
        if term.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

const KRYLOV_MAX_DIM: usize = 30;

/// Lanczos approximation of `e^{-iHt} v` with adaptive substeps. The local
/// error estimate is `β₀ β_m |e_mᵀ e^{-iT dt} e_1|`.
fn krylov_expmv(op: &SparseOperator, v: &[Complex64], t: f64, tolerance: f64) -> Result<Vec<Complex64>> {
    let dim = op.dim();
    let mut cur = v.to_vec();
    let mut remaining = t;
    let mut w = vec![ZERO; dim];
    while remaining != 0.0 {
        let beta0 = cur.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if beta0 == 0.0 {
            return Ok(cur);
        }
        let m_max = KRYLOV_MAX_DIM.min(dim);
        let mut basis: Vec<Vec<Complex64>> = vec![cur.iter().map(|z| z / beta0).collect()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut breakdown = false;
        loop {
            let j = basis.len() - 1;
            op.apply(&basis[j], &mut w);
            let a: Complex64 = basis[j].iter().zip(&w).map(|(q, x)| q.conj() * x).sum();
            alpha.push(a.re);
            // full reorthogonalization
            for q in &basis {
                let c: Complex64 = q.iter().zip(&w).map(|(qi, x)| qi.conj() * x).sum();
                w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
            let b = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            beta.push(b);
            if b <= 1e-12 * beta0.max(1.0) {
                breakdown = true;
                break;
            }
            if basis.len() == m_max {
                break;
            }
            basis.push(w.iter().map(|z| z / b).collect());
        }
        let m = alpha.len();
        let tri = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                alpha[i]
            } else if i + 1 == j {
                beta[i]
            } else if j + 1 == i {
                beta[j]
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(tri);
        let small_exp = |dt: f64| -> Vec<Complex64> {
            (0..m)
                .map(|i| {
                    (0..m)
                        .map(|k| {
                            let q = eig.eigenvectors[(i, k)] * eig.eigenvectors[(0, k)];
                            Complex64::from_polar(q, -eig.eigenvalues[k] * dt)
                        })
                        .sum()
                })
                .collect()
        };
        let mut dt = remaining;
        let mut coeffs = small_exp(dt);
        if !breakdown {
            let mut halvings = 0;
            loop {
                let err = beta0 * beta[m - 1] * coeffs[m - 1].norm();
                if err <= tolerance * (dt / t).abs() {
                    break;
                }
                halvings += 1;
                if halvings > 60 {
                    return Err(Error::NoConvergence("Krylov step size underflow".into()));
                }
                dt *= 0.5;
                coeffs = small_exp(dt);
            }
        }
        cur.iter_mut().for_each(|z| *z = ZERO);
        for (q, c) in basis.iter().zip(&coeffs) {
            let s = c * beta0;
            cur.iter_mut().zip(q).for_each(|(z, qi)| *z += s * qi);
        }
        remaining -= dt;
        if remaining.abs() < 1e-15 * t.abs() {
            remaining = 0.0;
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{prepare_site_psi, StateVariant};
    use crate::hamiltonian::{build_matrix, HubbardModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(n: usize, seed: u64) -> HubbardModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.7) {
                    edges.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        let xi = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        HubbardModel::from_edges(n, &edges, xi).unwrap()
    }

    fn random_state(n: usize, seed: u64) -> FockVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps = (0..1 << (2 * n))
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut v = FockVector::from_amplitudes(n, amps).unwrap();
        v.normalize().unwrap();
        v
    }

    fn cfg(method: Method) -> EvolutionConfig {
        EvolutionConfig::new(method, 1e-10).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let h = build_matrix(&random_model(2, 1)).unwrap();
        let s = random_state(2, 2);
        assert_eq!(evolve(&s, &h, 0.0, &cfg(Method::Eigendecomposition)).unwrap(), s);
    }

    #[test]
    fn doubly_occupied_site_picks_up_scalar_phase() {
        let xi = 0.8;
        let t = 1.7;
        let h = build_matrix(&HubbardModel::from_edges(1, &[], vec![xi]).unwrap()).unwrap();
        let s = FockVector::basis(1, 0b11).unwrap();
        for m in [Method::Eigendecomposition, Method::ScalingAndSquaring, Method::Krylov] {
            let out = evolve(&s, &h, t, &cfg(m)).unwrap();
            let expect = Complex64::from_polar(1.0, -xi * t);
            assert!((out.amplitude(0b11) - expect).norm() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn forward_then_backward_restores_state() {
        let h = build_matrix(&random_model(3, 3)).unwrap();
        let s = random_state(3, 4);
        for m in [Method::Eigendecomposition, Method::ScalingAndSquaring, Method::Krylov] {
            let c = cfg(m);
            let back = evolve(&evolve(&s, &h, 2.3, &c).unwrap(), &h, -2.3, &c).unwrap();
            assert!(back.max_abs_diff(&s) < 2.0 * c.tolerance, "{m:?}");
        }
    }

    #[test]
    fn methods_agree_and_conserve_norm_and_energy() {
        for seed in 0..6 {
            let n = 1 + (seed as usize % 3);
            let h = build_matrix(&random_model(n, seed)).unwrap();
            let s = random_state(n, 100 + seed);
            let t = 0.7 + seed as f64;
            let e0 = expectation(&h, &s).re;
            let reference = evolve(&s, &h, t, &cfg(Method::Eigendecomposition)).unwrap();
            assert!((reference.norm() - 1.0).abs() < 1e-9);
            assert!((expectation(&h, &reference).re - e0).abs() < 1e-9);
            for m in [Method::ScalingAndSquaring, Method::Krylov] {
                let other = evolve(&s, &h, t, &cfg(m)).unwrap();
                assert!(reference.max_abs_diff(&other) < 1e-8, "{m:?} seed {seed}");
                assert!((other.norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn complex_hermitian_blocks() {
        let dim = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut trip = Vec::new();
        for i in 0..dim {
            trip.push((i, i, Complex64::new(rng.gen_range(-1.0..1.0), 0.0)));
            for j in i + 1..dim {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                trip.push((i, j, z));
                trip.push((j, i, z.conj()));
            }
        }
        let h = SparseOperator::from_triplets(dim, trip);
        let s = random_state(2, 6);
        let a = evolve(&s, &h, 1.3, &cfg(Method::Eigendecomposition)).unwrap();
        let b = evolve(&s, &h, 1.3, &cfg(Method::ScalingAndSquaring)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }

    #[test]
    fn rejects_non_hermitian_and_bad_config() {
        let op = SparseOperator::from_triplets(4, vec![(0, 1, Complex64::new(1.0, 0.0))]);
        let s = FockVector::vacuum(1).unwrap();
        assert!(matches!(evolve(&s, &op, 1.0, &cfg(Method::Eigendecomposition)), Err(Error::NonHermitian(_))));
        assert!(EvolutionConfig::new(Method::Krylov, 0.0).is_err());
    }

    #[test]
    fn insertions_with_empty_twirl_match_plain_evolution() {
        let model = random_model(2, 8);
        let h = build_matrix(&model).unwrap();
        let s = prepare_site_psi(2, 0, StateVariant::Tilde).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = cfg(Method::Eigendecomposition);
        let out = evolve_with_insertions(&s, &h, 1.5, 7, &TwirlSpec::empty(), &mut rng, &c).unwrap();
        let plain = evolve(&s, &h, 1.5, &c).unwrap();
        assert!(out.max_abs_diff(&plain) < 1e-12);
        assert!(evolve_with_insertions(&s, &h, 1.5, 0, &TwirlSpec::empty(), &mut rng, &c).is_err());
    }

    #[test]
    fn fused_path_matches_naive_segments() {
        let model = random_model(3, 12);
        let h = build_matrix(&model).unwrap();
        let s = random_state(3, 13);
        let twirl = TwirlSpec::new(3, [0, 2]).unwrap();
        let prop = Propagator::new(&h, 0.21, &cfg(Method::Eigendecomposition)).unwrap();
        let fast = evolve_with_insertions_using(&prop, &s, 9, &twirl, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let slow = evolve_with_insertions_naive(&prop, &s, 9, &twirl, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-12);
        assert!((fast.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_matches_single_runs() {
        let model = random_model(3, 31);
        let h = build_matrix(&model).unwrap();
        let s = random_state(3, 32);
        let twirl = TwirlSpec::new(3, [1, 2]).unwrap();
        let prop = Propagator::new(&h, 0.13, &cfg(Method::Eigendecomposition)).unwrap();
        let mut rngs: Vec<_> = (0..5).map(ChaCha8Rng::seed_from_u64).collect();
        let batch = evolve_with_insertions_batch(&prop, &s, 11, &twirl, &mut rngs).unwrap();
        for (seed, out) in batch.iter().enumerate() {
            let single =
                evolve_with_insertions_using(&prop, &s, 11, &twirl, &mut ChaCha8Rng::seed_from_u64(seed as u64)).unwrap();
            assert!(out.max_abs_diff(&single) < 1e-12);
        }
        // streams continue where the single-run path leaves them
        let mut single_rng = ChaCha8Rng::seed_from_u64(4);
        evolve_with_insertions_using(&prop, &s, 11, &twirl, &mut single_rng).unwrap();
        assert_eq!(rngs[4].gen::<u64>(), single_rng.gen::<u64>());
    }

    #[test]
    fn single_segment_is_one_conjugated_factor() {
        let model = random_model(2, 21);
        let h = build_matrix(&model).unwrap();
        let s = random_state(2, 22);
        let twirl = TwirlSpec::new(2, [1]).unwrap();
        let c = cfg(Method::Eigendecomposition);
        let out = evolve_with_insertions(&s, &h, 0.9, 1, &twirl, &mut ChaCha8Rng::seed_from_u64(4), &c).unwrap();
        let u = sample_twirl(&twirl, &mut ChaCha8Rng::seed_from_u64(4));
        let mut manual = apply_twirl(&s, &u, false).unwrap();
        manual = evolve(&manual, &h, 0.9, &c).unwrap();
        manual = apply_twirl(&manual, &u, true).unwrap();
        assert!(out.max_abs_diff(&manual) < 1e-12);
    }
}
