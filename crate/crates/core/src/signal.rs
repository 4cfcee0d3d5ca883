//! Time-sampled densities on Σ and exact sine-kernel propagation of the
//! scalar oscillator `ü + λu = g(t)` driven by them.
//!
//! A signal is zero before `t_start` and is defined between samples either
//! by linear interpolation or by holding each sample for one step. The
//! oscillator is advanced across every sample interval in closed form, so
//! the only time-discretization error anywhere downstream is the one
//! introduced by the signal representation itself.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Piecewise linear through the samples; zero outside the first and
    /// last sample times.
    #[default]
    Linear,
    /// Sample `k` held on `[t_k, t_k + dt)`.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSignal {
    pub t_start: f64,
    pub dt: f64,
    /// Rows are sample times, columns are Σ positions.
    pub samples: Vec<Vec<f64>>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl SourceSignal {
    pub fn new(t_start: f64, dt: f64, samples: Vec<Vec<f64>>, interpolation: Interpolation) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && t_start.is_finite()) {
            return Err(Error::Signal(format!("bad time grid: t_start {t_start}, dt {dt}")));
        }
        if samples.is_empty() {
            return Err(Error::Signal("no samples".into()));
        }
        let width = samples[0].len();
        if samples.iter().any(|r| r.len() != width) {
            return Err(Error::Signal("ragged sample rows".into()));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Signal("non-finite sample".into()));
        }
        Ok(Self {
            t_start,
            dt,
            samples,
            interpolation,
        })
    }

    pub fn zeros(t_start: f64, dt: f64, steps: usize, width: usize) -> Self {
        Self {
            t_start,
            dt,
            samples: vec![vec![0.0; width]; steps.max(1)],
            interpolation: Interpolation::Linear,
        }
    }

    /// Samples a density given as a function of (time, Σ position).
    pub fn from_fn(
        t_start: f64,
        dt: f64,
        steps: usize,
        width: usize,
        interpolation: Interpolation,
        f: impl Fn(f64, usize) -> f64,
    ) -> Self {
        let samples = (0..steps.max(1))
            .map(|k| {
                let t = t_start + k as f64 * dt;
                (0..width).map(|x| f(t, x)).collect()
            })
            .collect();
        Self {
            t_start,
            dt,
            samples,
            interpolation,
        }
    }

    pub fn width(&self) -> usize {
        self.samples[0].len()
    }

    pub fn steps(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    /// End of the support.
    pub fn t_end(&self) -> f64 {
        match self.interpolation {
            Interpolation::Linear => self.sample_time(self.steps() - 1),
            Interpolation::Hold => self.sample_time(self.steps()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.value_into(t, &mut out);
        out
    }

    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let end = self.t_end();
        let inside = match self.interpolation {
            Interpolation::Linear => t >= self.t_start && t <= end,
            Interpolation::Hold => t >= self.t_start && t < end,
        };
        if !inside {
            return;
        }
        let pos = (t - self.t_start) / self.dt;
        let k = (pos.floor() as usize).min(self.steps() - 1);
        match self.interpolation {
            Interpolation::Hold => out.copy_from_slice(&self.samples[k]),
            Interpolation::Linear => {
                if k + 1 >= self.steps() {
                    out.copy_from_slice(&self.samples[k]);
                    return;
                }
                let theta = pos - k as f64;
                for (o, (a, b)) in out.iter_mut().zip(self.samples[k].iter().zip(&self.samples[k + 1])) {
                    *o = a + theta * (b - a);
                }
            }
        }
    }

    /// Scalar samples `Σ_x c_x·signal_x(t_k)`.
    pub fn project(&self, coeffs: &[f64]) -> Vec<f64> {
        self.samples
            .iter()
            .map(|row| row.iter().zip(coeffs).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.samples.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }

    /// Pointwise sum; both signals must share the grid.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.t_start != other.t_start
            || self.dt != other.dt
            || self.steps() != other.steps()
            || self.width() != other.width()
            || self.interpolation != other.interpolation
        {
            return Err(Error::Signal("signals live on different grids".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.samples.iter_mut().flatten().zip(other.samples.iter().flatten()) {
            *a += b;
        }
        Ok(out)
    }
}

/// Scalar forcing on the grid of a [`SourceSignal`].
#[derive(Debug, Clone, Copy)]
pub struct ScalarSignal<'a> {
    pub t_start: f64,
    pub dt: f64,
    pub samples: &'a [f64],
    pub interpolation: Interpolation,
}

impl<'a> ScalarSignal<'a> {
    pub fn of(signal: &SourceSignal, samples: &'a [f64]) -> Self {
        Self {
            t_start: signal.t_start,
            dt: signal.dt,
            samples,
            interpolation: signal.interpolation,
        }
    }

    fn segment_count(&self) -> usize {
        match self.interpolation {
            Interpolation::Linear => self.samples.len().saturating_sub(1),
            Interpolation::Hold => self.samples.len(),
        }
    }

    /// Values at the left and right end of segment `k`.
    fn segment(&self, k: usize) -> (f64, f64) {
        match self.interpolation {
            Interpolation::Linear => (self.samples[k], self.samples[k + 1]),
            Interpolation::Hold => (self.samples[k], self.samples[k]),
        }
    }
}

/// Displacement and velocity of one oscillator mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeState {
    pub u: f64,
    pub v: f64,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `(1 − cos x)/x²`
fn g0(x: f64) -> f64 {
    let s = sinc(0.5 * x);
    0.5 * s * s
}

/// `(x sin x + cos x − 1)/x²`
fn f1(x: f64) -> f64 {
    let x2 = x * x;
    if x.abs() < 0.1 {
        0.5 - x2 / 8.0 + x2 * x2 / 144.0 - x2 * x2 * x2 / 5760.0 + x2 * x2 * x2 * x2 / 403200.0
    } else {
        (x * x.sin() - 2.0 * (0.5 * x).sin().powi(2)) / x2
    }
}

/// `(sin x − x cos x)/x³`
fn f3(x: f64) -> f64 {
    let x2 = x * x;
    if x.abs() < 0.1 {
        1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0
    } else {
        (x.sin() - x * x.cos()) / (x2 * x)
    }
}

/// Response at the right end of a segment of length `delta` to a forcing
/// that is linear from `g_left` to `g_right` on it, starting at rest.
fn segment_response(omega: f64, delta: f64, g_left: f64, g_right: f64) -> ModeState {
    // With σ = time before the right end, the forcing is g_right + (g_left − g_right)σ/Δ.
    let x = omega * delta;
    let slope = g_left - g_right;
    ModeState {
        u: delta * delta * (g_right * g0(x) + slope * f3(x)),
        v: delta * (g_right * sinc(x) + slope * f1(x)),
    }
}

/// Free evolution over `delta`.
fn rotate(state: ModeState, omega: f64, delta: f64) -> ModeState {
    let x = omega * delta;
    let (c, s) = (x.cos(), delta * sinc(x));
    ModeState {
        u: c * state.u + s * state.v,
        v: -omega * omega * s * state.u + c * state.v,
    }
}

fn advance(state: ModeState, omega: f64, delta: f64, g_left: f64, g_right: f64) -> ModeState {
    let free = rotate(state, omega, delta);
    let forced = segment_response(omega, delta, g_left, g_right);
    ModeState {
        u: free.u + forced.u,
        v: free.v + forced.v,
    }
}

/// Solution of `ü + λu = g`, zero before the forcing starts, evaluated at
/// each of `times` (ascending). Exact for the interpolated forcing.
pub fn oscillator_history(lambda: f64, forcing: ScalarSignal<'_>, times: &[f64]) -> Vec<ModeState> {
    let omega = lambda.max(0.0).sqrt();
    let segments = forcing.segment_count();
    let dt = forcing.dt;
    let mut out = Vec::with_capacity(times.len());
    // State at the left end of segment `seg`.
    let mut seg = 0usize;
    let mut state = ModeState::default();
    for &t in times {
        if t <= forcing.t_start {
            out.push(ModeState::default());
            continue;
        }
        let pos = (t - forcing.t_start) / dt;
        let target = (pos.floor() as usize).min(segments);
        if target < seg {
            // Times went backwards: restart from rest.
            seg = 0;
            state = ModeState::default();
        }
        while seg < target {
            let (a, b) = forcing.segment(seg);
            state = advance(state, omega, dt, a, b);
            seg += 1;
        }
        let rest = t - (forcing.t_start + seg as f64 * dt);
        let value = if rest <= 0.0 {
            state
        } else if seg < segments {
            let (a, b) = forcing.segment(seg);
            let theta = rest / dt;
            let mid = a + theta * (b - a);
            advance(state, omega, rest, a, mid)
        } else {
            rotate(state, omega, rest)
        };
        out.push(value);
    }
    out
}

pub fn oscillator_at(lambda: f64, forcing: ScalarSignal<'_>, t: f64) -> ModeState {
    oscillator_history(lambda, forcing, &[t])[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force Duhamel integral by composite Simpson on a fine grid.
    fn duhamel(lambda: f64, sig: &SourceSignal, t: f64) -> f64 {
        let n = 20000;
        let a = sig.t_start;
        if t <= a {
            return 0.0;
        }
        let h = (t - a) / n as f64;
        let w = lambda.sqrt();
        let kernel = |s: f64| if w == 0.0 { t - s } else { (w * (t - s)).sin() / w };
        let mut acc = 0.0;
        for i in 0..=n {
            let s = a + i as f64 * h;
            let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += c * kernel(s) * sig.value_at(s)[0];
        }
        acc * h / 3.0
    }

    #[test]
    fn zero_mode_triangle_is_second_antiderivative() {
        // Triangle: 0 at t=0, 1 at t=1, 0 at t=2.
        let sig = SourceSignal::new(0.0, 1.0, vec![vec![0.0], vec![1.0], vec![0.0]], Interpolation::Linear).unwrap();
        let samples = sig.project(&[1.0]);
        let st = oscillator_at(0.0, ScalarSignal::of(&sig, &samples), 3.0);
        // ∫(3 − s)h(s)ds = 3·1 − ∫ s h = 3 − 1 = 2; velocity = ∫h = 1.
        assert!((st.u - 2.0).abs() < 1e-14);
        assert!((st.v - 1.0).abs() < 1e-14);
        let mid = oscillator_at(0.0, ScalarSignal::of(&sig, &samples), 0.5);
        assert!((mid.u - 0.5f64.powi(3) / 6.0).abs() < 1e-15);
    }

    #[test]
    fn matches_quadrature_for_several_frequencies() {
        let sig = SourceSignal::from_fn(0.2, 0.05, 30, 1, Interpolation::Linear, |t, _| (3.0 * t).sin() * (t - 0.2) * (1.65 - t));
        let samples = sig.project(&[1.0]);
        for lambda in [0.0, 1e-8, 0.3, 4.0, 250.0] {
            for t in [0.1, 0.93, 1.7, 2.5] {
                let exact = duhamel(lambda, &sig, t);
                let got = oscillator_at(lambda, ScalarSignal::of(&sig, &samples), t).u;
                assert!((exact - got).abs() < 1e-9, "λ={lambda} t={t}: {exact} vs {got}");
            }
        }
    }

    #[test]
    fn hold_signal_matches_quadrature() {
        let sig = SourceSignal::from_fn(0.0, 0.1, 12, 1, Interpolation::Hold, |t, _| 1.0 + t);
        let samples = sig.project(&[1.0]);
        for t in [0.05, 0.55, 1.3, 2.0] {
            let exact = duhamel(9.0, &sig, t);
            let got = oscillator_at(9.0, ScalarSignal::of(&sig, &samples), t).u;
            // Simpson straddles the jumps of the held signal, hence the loose bound.
            assert!((exact - got).abs() < 5e-5, "t={t}: {exact} vs {got}");
        }
    }

    proptest! {
        #[test]
        fn ode_holds_between_samples(lambda in 0.0f64..50.0, vals in proptest::collection::vec(-1.0f64..1.0, 4..12), t in 0.0f64..3.0) {
            let mut rows: Vec<Vec<f64>> = vals.iter().map(|v| vec![*v]).collect();
            rows[0][0] = 0.0;
            let sig = SourceSignal::new(0.0, 0.2, rows, Interpolation::Linear).unwrap();
            let s = sig.project(&[1.0]);
            let f = ScalarSignal::of(&sig, &s);
            let eps = 1e-4;
            let a = oscillator_at(lambda, f, t - eps);
            let b = oscillator_at(lambda, f, t);
            let c = oscillator_at(lambda, f, t + eps);
            let acc = (c.u - 2.0 * b.u + a.u) / (eps * eps);
            let g = sig.value_at(t)[0];
            // Away from kinks the second difference resolves ü exactly up to O(eps²).
            let near_kink = ((t / 0.2) - (t / 0.2).round()).abs() < 2.0 * eps / 0.2;
            prop_assume!(!near_kink && t > 2.0 * eps);
            prop_assert!((acc + lambda * b.u - g).abs() < 1e-4 * (1.0 + lambda));
        }

        #[test]
        fn coefficients_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, lambda in 0.0f64..30.0) {
            let s1 = SourceSignal::from_fn(0.0, 0.1, 15, 1, Interpolation::Linear, |t, _| (t * 5.0).sin());
            let s2 = SourceSignal::from_fn(0.0, 0.1, 15, 1, Interpolation::Linear, |t, _| t * t);
            let combo = s1.scaled(a).add(&s2.scaled(b)).unwrap();
            let p = |s: &SourceSignal| { let v = s.project(&[1.0]); oscillator_at(lambda, ScalarSignal::of(s, &v), 2.3) };
            let lhs = p(&combo);
            let (x, y) = (p(&s1), p(&s2));
            prop_assert!((lhs.u - a * x.u - b * y.u).abs() < 1e-12);
            prop_assert!((lhs.v - a * x.v - b * y.v).abs() < 1e-11);
        }
    }
}
