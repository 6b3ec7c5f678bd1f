//! Robust phase estimation.
//!
//! Level `j` supplies `Z_j ≈ e^{i 2^j φ}`. The candidate set
//! `S_j = {(arg Z_j + 2πk) / 2^j}` is narrowed to the element closest, on the
//! circle, to the previous estimate.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpeSchedule {
    pub epsilon: f64,
    pub eta: f64,
    /// Highest level; levels run `0..=levels`.
    pub levels: u32,
    /// Repetitions per level, split evenly between the two quadratures.
    pub shots: usize,
}

impl RpeSchedule {
    pub fn shots_per_quadrature(&self) -> usize {
        self.shots / 2
    }

    /// `Σ_j N_s 2^j = N_s (2^{J+1} − 1)`.
    pub fn total_time(&self) -> f64 {
        self.shots as f64 * (2f64.powi(self.levels as i32 + 1) - 1.0)
    }

    /// Number of single-time experiments, `(J+1) N_s`.
    pub fn experiments(&self) -> usize {
        (self.levels as usize + 1) * self.shots
    }
}

/// Smallest `j ≥ 0` with `2^j ≥ x`, tolerant of rounding just above a power of
/// two.
fn ceil_log2(x: f64) -> u32 {
    let mut j = 0;
    while 2f64.powi(j as i32) < x * (1.0 - 1e-12) {
        j += 1;
    }
    j
}

/// `J = ⌈log₂(3/(πε))⌉`, `N_s = 2⌈9(ln(4/η) + ln(J+1))⌉`.
pub fn rpe_schedule(epsilon: f64, eta: f64) -> Result<RpeSchedule> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta must lie in (0, 1), got {eta}")));
    }
    let levels = ceil_log2(3.0 / (PI * epsilon));
    let shots = 2 * (9.0 * ((4.0 / eta).ln() + f64::from(levels + 1).ln())).ceil() as usize;
    Ok(RpeSchedule {
        epsilon,
        eta,
        levels,
        shots,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub level: u32,
    pub z: Complex64,
    pub shots_used: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpeState {
    /// Estimate in `[0, 2π)`.
    pub theta: f64,
    /// Level of the last refinement; `None` before level 0.
    pub level: Option<u32>,
}

impl Default for RpeState {
    fn default() -> Self {
        RpeState { theta: 0.0, level: None }
    }
}

impl RpeState {
    pub fn next_level(&self) -> u32 {
        self.level.map_or(0, |l| l + 1)
    }

    /// Half-width `π/(3·2^j)` of the interval that contains the true phase
    /// whenever every signal so far was within `√3/2` of exact.
    pub fn confidence_radius(&self) -> f64 {
        PI / (3.0 * 2f64.powi(self.level.unwrap_or(0) as i32))
    }
}

pub fn wrap_2pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Representative of `x` in `(−π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = wrap_2pi(x);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

pub fn circular_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

/// Candidates `(arg Z + 2πk)/2^j`, `k = 0..2^j`, in `[0, 2π)`.
pub fn candidates(level: u32, z: Complex64) -> Result<Vec<f64>> {
    if z == Complex64::new(0.0, 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::ZeroSignal(level as usize));
    }
    let arg = wrap_2pi(z.arg());
    let m = 1u64 << level;
    Ok((0..m)
        .map(|k| wrap_2pi((arg + TAU * k as f64) / m as f64))
        .collect())
}

pub fn rpe_refine(state: &RpeState, z: Complex64) -> Result<RpeState> {
    let level = state.next_level();
    if level > 52 {
        return Err(Error::InvalidArgument("refinement beyond level 52 exceeds f64 resolution".into()));
    }
    let mut best = f64::NAN;
    let mut best_d = f64::INFINITY;
    for c in candidates(level, z)? {
        let d = circular_distance(c, state.theta);
        if d < best_d || (d == best_d && c < best) {
            best = c;
            best_d = d;
        }
    }
    Ok(RpeState {
        theta: best,
        level: Some(level),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RpeOutcome {
    /// Final estimate in `(−π, π]`.
    pub estimate: f64,
    pub trajectory: Vec<RpeState>,
    pub signals: Vec<SignalRecord>,
}

/// Runs levels `0..=J` with signals from `provider(level)`.
pub fn rpe_run<F>(mut provider: F, epsilon: f64, eta: f64) -> Result<RpeOutcome>
where
    F: FnMut(u32) -> Result<SignalRecord>,
{
    let schedule = rpe_schedule(epsilon, eta)?;
    rpe_run_schedule(&mut provider, &schedule)
}

pub fn rpe_run_schedule<F>(provider: &mut F, schedule: &RpeSchedule) -> Result<RpeOutcome>
where
    F: FnMut(u32) -> Result<SignalRecord>,
{
    let mut state = RpeState::default();
    let mut trajectory = Vec::with_capacity(schedule.levels as usize + 1);
    let mut signals = Vec::with_capacity(schedule.levels as usize + 1);
    for j in 0..=schedule.levels {
        let rec = provider(j)?;
        state = rpe_refine(&state, rec.z)?;
        trajectory.push(state);
        signals.push(rec);
    }
    Ok(RpeOutcome {
        estimate: wrap_pi(state.theta),
        trajectory,
        signals,
    })
}
