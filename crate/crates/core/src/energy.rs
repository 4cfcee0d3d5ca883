//! Energy carried into a subdomain by a boundary source, from data alone.
//!
//! A Dirichlet source `F` on a part of Σ bounding a region is first turned
//! into the derivative jump `h_F` whose closed-manifold wave has trace `F`
//! there; inside the region that wave is the boundary-driven one. Its
//! energy then follows from the region's extended eigenfunctions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blago::{blago_coefficients, JumpKind};
use crate::error::{Error, Result};
use crate::manifold::{Region, SpectralDataset};
use crate::signal::{Interpolation, SourceSignal};
use crate::subdomain::{region_boundary, RegionSpectrum};

/// Default regularisation, relative to the norm of the leading block.
pub const DEFAULT_REG: f64 = 1e-10;

/// A derivative jump recovered from a prescribed Σ-trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deconvolution {
    /// Full Σ width, zero off the constrained columns; sample-and-hold.
    pub h: SourceSignal,
    pub eps_reg: f64,
    /// Largest mismatch between the synthesised trace and `F` at the
    /// sample times.
    pub residual: f64,
}

/// Trace response at `x` (row) to a unit hold pulse on `[0, dt)` at `y`
/// (column), observed at `(m+1)·dt`.
fn lag_blocks(data: &SpectralDataset, cols: &[usize], dt: f64, lags: usize) -> Vec<DMatrix<f64>> {
    let s = cols.len();
    let w = data.weights();
    let mut blocks = vec![DMatrix::zeros(s, s); lags];
    for (row, &lambda) in data.traces.iter().zip(&data.lambdas) {
        let omega = lambda.max(0.0).sqrt();
        let theta = omega * dt;
        let outer = DMatrix::from_fn(s, s, |a, b| row[cols[a]] * row[cols[b]] * w[cols[b]]);
        for (m, block) in blocks.iter_mut().enumerate() {
            // (cos mθ − cos (m+1)θ)/ω² written without cancellation.
            let a = if theta < 1e-6 {
                dt * dt * (2 * m + 1) as f64 / 2.0
            } else {
                let mf = m as f64;
                2.0 * ((mf + 0.5) * theta).sin() * (0.5 * theta).sin() / (omega * omega)
            };
            *block += &outer * a;
        }
    }
    blocks
}

/// Derivative jump on `boundary` whose wave has trace `f` there, up to
/// `t_end`, on the sample grid of `f`.
///
/// The map from jump to trace is causal and time-invariant, so with `h`
/// held constant between samples the equations at successive sample times
/// form a block lower-triangular Toeplitz system, solved by forward
/// substitution. `eps_reg` (relative to the leading block) defaults to
/// [`DEFAULT_REG`].
pub fn solve_hf(data: &SpectralDataset, f: &SourceSignal, boundary: Region, t_end: f64, eps_reg: Option<f64>) -> Result<Deconvolution> {
    let cols = region_boundary(boundary).columns(data)?;
    if f.width() != cols.len() {
        return Err(Error::DimensionMismatch {
            what: "boundary source width",
            expected: cols.len(),
            got: f.width(),
        });
    }
    if f.t_start < 0.0 {
        return Err(Error::Signal(format!("boundary source must start at t ≥ 0, got {}", f.t_start)));
    }
    let dt = f.dt;
    let steps = ((t_end - f.t_start) / dt).ceil().max(1.0) as usize;
    let blocks = lag_blocks(data, &cols, dt, steps);
    let lead_norm = blocks[0].norm();
    let eps = eps_reg.unwrap_or(DEFAULT_REG) * lead_norm;
    let s = cols.len();
    let lead = &blocks[0] + DMatrix::identity(s, s) * eps;
    let sv = lead.clone().svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-14 * hi) {
        return Err(Error::Singular(format!(
            "Λ₁ not invertible at this discretization (leading block singular values {lo:.3e}..{hi:.3e})"
        )));
    }
    let lu = lead.lu();

    let targets: Vec<Vec<f64>> = (0..steps).map(|k| f.value_at(f.t_start + (k + 1) as f64 * dt)).collect();
    let mut h: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(steps);
    let mut residual = 0.0f64;
    for k in 0..steps {
        let mut rhs = nalgebra::DVector::from_column_slice(&targets[k]);
        for (i, hi) in h.iter().enumerate() {
            rhs -= &blocks[k - i] * hi;
        }
        let hk = lu.solve(&rhs).ok_or_else(|| Error::Singular("Λ₁ not invertible at this discretization".into()))?;
        // Only regularisation leaves a mismatch at this step.
        residual = residual.max((&blocks[0] * &hk - &rhs).amax());
        h.push(hk);
    }
    let width = data.sigma_len();
    let samples = h
        .iter()
        .map(|hk| {
            let mut row = vec![0.0; width];
            for (a, &c) in cols.iter().enumerate() {
                row[c] = hk[a];
            }
            row
        })
        .collect();
    Ok(Deconvolution {
        h: SourceSignal::new(f.t_start, dt, samples, Interpolation::Hold)?,
        eps_reg: eps,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxRecord {
    pub region: Region,
    pub f: SourceSignal,
    pub h: SourceSignal,
    pub eps_reg: f64,
    pub deconvolution_residual: f64,
    pub times: Vec<f64>,
    /// `coefficients[k][n]`: component of the wave along region mode `n`.
    pub coefficients: Vec<Vec<f64>>,
    pub flux: f64,
    /// Flux evaluated `check_delay` later; equal to `flux` once the source
    /// is off.
    pub flux_later: f64,
    pub check_delay: f64,
}

impl FluxRecord {
    pub fn constancy_error(&self) -> f64 {
        (self.flux_later - self.flux).abs() / self.flux.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxOptions {
    /// Required gap between the end of `F` and the evaluation time.
    pub margin: f64,
    pub check_delay: f64,
    pub eps_reg: Option<f64>,
}

impl Default for FluxOptions {
    fn default() -> Self {
        Self {
            margin: 0.0,
            check_delay: 1.0,
            eps_reg: None,
        }
    }
}

/// Energy of the wave sent into `spectrum.region` by the boundary source
/// `f`, once `f` has ended.
pub fn energy_flux(data: &SpectralDataset, spectrum: &RegionSpectrum, f: &SourceSignal, t_final: f64, opts: &FluxOptions) -> Result<FluxRecord> {
    let end = f.t_end();
    if end > t_final - opts.margin {
        return Err(Error::Signal(format!(
            "source ends at {end}, after the evaluation time {t_final} less margin {}",
            opts.margin
        )));
    }
    let peak = f.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if f.samples.last().is_some_and(|row| row.iter().any(|v| v.abs() > 1e-12 * peak)) {
        return Err(Error::Signal("source must return to zero at its last sample".into()));
    }
    let region = spectrum.region;
    // The jump keeps working after F ends: waves from the far side still
    // have to be cancelled on the boundary.
    let later = t_final + opts.check_delay;
    let dec = solve_hf(data, f, region, later, opts.eps_reg)?;
    let dt = f.dt;
    let steps = ((t_final - f.t_start) / dt).round() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| f.t_start + k as f64 * dt).collect();
    if times.last().is_some_and(|&t| t < t_final) {
        times.push(t_final);
    }
    times.push(later);
    let modes = blago_coefficients(data, &dec.h, &times, JumpKind::Derivative)?;

    let project = |u: &[f64]| -> Vec<f64> {
        spectrum
            .kappas
            .iter()
            .map(|k| k.iter().zip(u).map(|(a, b)| a * b).sum())
            .collect()
    };
    let energy_at = |k: usize| -> f64 {
        let w = project(&modes.values[k]);
        let v = project(&modes.velocities[k]);
        0.5 * w
            .iter()
            .zip(&v)
            .zip(&spectrum.values)
            .map(|((w, v), t)| v * v + t * w * w)
            .sum::<f64>()
    };
    let last = times.len() - 1;
    let flux = energy_at(last - 1);
    let flux_later = energy_at(last);
    let coefficients = modes.values[..last].iter().map(|u| project(u)).collect();
    times.pop();
    Ok(FluxRecord {
        region,
        f: f.clone(),
        h: dec.h,
        eps_reg: dec.eps_reg,
        deconvolution_residual: dec.residual,
        times,
        coefficients,
        flux,
        flux_later,
        check_delay: opts.check_delay,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blago::sigma_trace;
    use crate::manifold::{build_manifold, eigendecompose, emit_spectral_data, ComponentSpec, DataKind, GeometrySpec, Hypersurface};
    use crate::subdomain::assign_spectra;
    use core::f64::consts::PI;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn split_data(n: usize) -> SpectralDataset {
        let man = build_manifold(&GeometrySpec::cycle_with_profile(n, 2.0 * PI, |x| 1.0 + 0.2 * x.sin())).unwrap();
        let a = n / 8;
        let comps = [
            ComponentSpec { vertices: vec![0, a], seed: 1 },
            ComponentSpec { vertices: vec![3 * n / 8, 3 * n / 8 + a + 3], seed: 3 * n / 8 + 1 },
        ];
        let sigma = Hypersurface::carve(&man, &comps).unwrap();
        emit_spectral_data(&eigendecompose(&man, n).unwrap(), &sigma, DataKind::Dirichlet).unwrap()
    }

    fn pulse(amp: [f64; 2], width: f64, dt: f64) -> SourceSignal {
        let steps = (width / dt).round() as usize + 1;
        SourceSignal::from_fn(0.0, dt, steps, 2, Interpolation::Linear, |t, x| amp[x] * (PI * t / width).sin().powi(4))
    }

    #[test]
    fn zero_source_gives_zero() {
        let data = split_data(64);
        let f = SourceSignal::zeros(0.0, 0.05, 20, 2);
        let dec = solve_hf(&data, &f, Region::Inside(0), 2.0, None).unwrap();
        assert!(dec.h.is_zero());
    }

    #[test]
    fn deconvolution_round_trip() {
        let data = split_data(64);
        let f = pulse([1.0, -0.4], 1.0, 0.02);
        let dec = solve_hf(&data, &f, Region::Inside(0), 2.0, None).unwrap();
        let times: Vec<f64> = (1..=100).map(|k| k as f64 * 0.02).collect();
        let trace = sigma_trace(&data, &dec.h, &times).unwrap();
        let cols: Vec<usize> = data.component_range(0).collect();
        for (t, row) in times.iter().zip(&trace) {
            let want = f.value_at(*t);
            for (a, &c) in cols.iter().enumerate() {
                assert!((row[c] - want[a]).abs() < 1e-6, "t {t}: {} vs {}", row[c], want[a]);
            }
        }
        // Σ₂ carries no source.
        let other = data.component_range(1);
        assert!(dec.h.samples.iter().all(|r| other.clone().all(|c| r[c] == 0.0)));
    }

    #[test]
    fn flux_is_conserved_and_quadratic() {
        let data = split_data(64);
        let asg = assign_spectra(&data, None, 1e-6).unwrap();
        let spec = asg.region(Region::Inside(0));
        let f = pulse([1.0, 0.5], 1.0, 0.02);
        let opts = FluxOptions::default();
        let rec = energy_flux(&data, spec, &f, 3.0, &opts).unwrap();
        assert!(rec.flux > 0.0);
        assert!(rec.constancy_error() < 1e-3, "{}", rec.constancy_error());
        let double = energy_flux(&data, spec, &f.scaled(2.0), 3.0, &opts).unwrap();
        assert!((double.flux / rec.flux - 4.0).abs() < 1e-6);
        let zero = energy_flux(&data, spec, &f.scaled(0.0), 3.0, &opts).unwrap();
        assert_eq!(zero.flux, 0.0);
        // Unfinished sources are refused.
        assert!(energy_flux(&data, spec, &f, 0.8, &opts).is_err());
        let late = pulse([1.0, 0.5], 1.0, 0.02);
        let late = SourceSignal { t_start: 0.5, ..late };
        let rec = energy_flux(&data, spec, &late, 3.0, &opts).unwrap();
        for (t, w) in rec.times.iter().zip(&rec.coefficients) {
            if *t <= 0.5 {
                assert!(w.iter().all(|v| *v == 0.0));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn flux_scales_quadratically(a in 0.2f64..2.0, b in -1.0f64..1.0, c in 0.1f64..3.0) {
            let data = split_data(32);
            let asg = assign_spectra(&data, None, 1e-6).unwrap();
            let spec = asg.region(Region::Inside(1));
            let f = pulse([a, b], 0.8, 0.02);
            let one = energy_flux(&data, spec, &f, 2.0, &FluxOptions::default()).unwrap().flux;
            let scaled = energy_flux(&data, spec, &f.scaled(c), 2.0, &FluxOptions::default()).unwrap().flux;
            prop_assert!(one >= 0.0);
            prop_assert!((scaled - c * c * one).abs() <= 1e-6 * c * c * one);
        }
    }
}
