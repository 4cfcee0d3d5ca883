//! Wave quantities computed from spectral data alone.
//!
//! A source on Σ drives each eigenmode as a scalar oscillator
//! `ü_j + λ_j u_j = g_j(t)`, where `g_j` pairs the source with the mode's
//! trace (derivative jumps) or with minus its normal trace (value jumps).
//! Everything here is assembled from those per-mode histories.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::SpectralDataset;
use crate::signal::{oscillator_history, ModeState, ScalarSignal, SourceSignal};

/// Which jump a source prescribes across Σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    /// Jump of the normal derivative; needs only traces.
    Derivative,
    /// Jump of the value; needs normal traces.
    Value,
}

/// Mode coefficients of a wave at a list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveCoefficients {
    pub manifold_id: String,
    pub times: Vec<f64>,
    /// `values[k][j]`: coefficient of mode `j` at `times[k]`.
    pub values: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

/// Per-mode forcing samples `g_j(t_k)`, on the sample grid of `signal`.
pub fn modal_forcing(data: &SpectralDataset, signal: &SourceSignal, kind: JumpKind) -> Result<Vec<Vec<f64>>> {
    let s = data.sigma_len();
    if signal.width() != s {
        return Err(Error::DimensionMismatch {
            what: "source width",
            expected: s,
            got: signal.width(),
        });
    }
    let w = data.weights();
    let rows: &[Vec<f64>] = match kind {
        JumpKind::Derivative => &data.traces,
        JumpKind::Value => data.normal()?,
    };
    let sign = match kind {
        JumpKind::Derivative => 1.0,
        JumpKind::Value => -1.0,
    };
    Ok(rows
        .iter()
        .map(|row| {
            let coeffs: Vec<f64> = row.iter().zip(w).map(|(r, w)| sign * r * w).collect();
            signal.project(&coeffs)
        })
        .collect())
}

fn histories(data: &SpectralDataset, signal: &SourceSignal, times: &[f64], kind: JumpKind) -> Result<Vec<Vec<ModeState>>> {
    let forcing = modal_forcing(data, signal, kind)?;
    Ok(forcing
        .iter()
        .zip(&data.lambdas)
        .map(|(g, &lambda)| oscillator_history(lambda, ScalarSignal::of(signal, g), times))
        .collect())
}

/// Mode coefficients `u_j(t)` of the wave generated by `signal` at each of
/// `times` (ascending).
pub fn blago_coefficients(
    data: &SpectralDataset,
    signal: &SourceSignal,
    times: &[f64],
    kind: JumpKind,
) -> Result<WaveCoefficients> {
    let hist = histories(data, signal, times, kind)?;
    let values = (0..times.len()).map(|k| hist.iter().map(|h| h[k].u).collect()).collect();
    let velocities = (0..times.len()).map(|k| hist.iter().map(|h| h[k].v).collect()).collect();
    Ok(WaveCoefficients {
        manifold_id: data.manifold_id.clone(),
        times: times.to_vec(),
        values,
        velocities,
    })
}

/// Field on Σ synthesized from mode coefficients, one row per time.
pub fn synthesize_on_sigma(data: &SpectralDataset, coeffs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    coeffs
        .iter()
        .map(|c| {
            let mut out = vec![0.0; data.sigma_len()];
            for (cj, row) in c.iter().zip(&data.traces) {
                for (o, r) in out.iter_mut().zip(row) {
                    *o += cj * r;
                }
            }
            out
        })
        .collect()
}

/// Σ-trace of the wave driven by a derivative jump `h`, rows per time.
/// Needs Dirichlet data only.
pub fn sigma_trace(data: &SpectralDataset, h: &SourceSignal, t_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    let coeffs = blago_coefficients(data, h, t_grid, JumpKind::Derivative)?;
    Ok(synthesize_on_sigma(data, &coeffs.values))
}

/// `Σ (λ_j + 1) κ_j²`
pub fn quasinorm(lambdas: &[f64], kappa: &[f64]) -> f64 {
    lambdas.iter().zip(kappa).map(|(l, k)| (l + 1.0) * k * k).sum()
}

/// Wave state at `t = 0` generated by a source that starts before it.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub kappa: Vec<f64>,
    pub quasinorm: f64,
}

pub fn wave_map(data: &SpectralDataset, h: &SourceSignal) -> Result<WaveState> {
    if h.t_start >= 0.0 {
        return Err(Error::Signal(alloc::format!(
            "wave map needs a source starting before 0, got t_start {}",
            h.t_start
        )));
    }
    let coeffs = blago_coefficients(data, h, &[0.0], JumpKind::Derivative)?;
    let kappa = coeffs.values.into_iter().next().unwrap_or_default();
    let q = quasinorm(&data.lambdas, &kappa);
    Ok(WaveState { kappa, quasinorm: q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramNorm {
    L2,
    H1,
}

impl GramNorm {
    fn weight(self, lambda: f64) -> f64 {
        match self {
            GramNorm::L2 => 1.0,
            GramNorm::H1 => lambda + 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GramReport {
    pub gram: DMatrix<f64>,
    /// Descending singular values of the weighted state matrix.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    /// Relative distance of each random probe state to the span of the
    /// generated states.
    pub probe_residuals: Vec<f64>,
    pub worst_residual: f64,
}

/// Gram matrix of wave states `kappas` in the chosen norm, its numerical
/// rank at `1e-8` of the top singular value, and projection residuals of
/// `probes` random targets.
pub fn controllability_gram(
    lambdas: &[f64],
    kappas: &[Vec<f64>],
    norm: GramNorm,
    probes: usize,
    seed: u64,
) -> Result<GramReport> {
    let j = lambdas.len();
    if kappas.is_empty() {
        return Err(Error::MissingData("at least one source"));
    }
    if let Some(bad) = kappas.iter().find(|k| k.len() != j) {
        return Err(Error::DimensionMismatch {
            what: "wave state length",
            expected: j,
            got: bad.len(),
        });
    }
    let scale: Vec<f64> = lambdas.iter().map(|&l| norm.weight(l).sqrt()).collect();
    let a = DMatrix::from_fn(j, kappas.len(), |r, c| scale[r] * kappas[c][r]);
    let gram = a.transpose() * &a;

    let svd = a.clone().svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&p, &q| svd.singular_values[q].total_cmp(&svd.singular_values[p]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > 1e-8 * top && top > 0.0).count();
    let u = svd.u.expect("left vectors requested");
    let span = DMatrix::from_fn(j, rank, |r, c| u[(r, order[c])]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe_residuals: Vec<f64> = (0..probes)
        .map(|_| {
            let target = DVector::from_fn(j, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let proj = &span * (span.transpose() * &target);
            (&target - proj).norm() / target.norm()
        })
        .collect();
    let worst_residual = probe_residuals.iter().copied().fold(0.0, f64::max);
    Ok(GramReport {
        gram,
        singular_values,
        rank,
        probe_residuals,
        worst_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, eigendecompose, emit_spectral_data, ComponentSpec, DataKind, GeometrySpec, Hypersurface};
    use crate::signal::Interpolation;
    use crate::transmission::{solve_transmission_time, TimeOptions};
    use core::f64::consts::PI;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn cycle_data(n: usize, pair: [usize; 2], seed: usize) -> (crate::manifold::DiscreteManifold, Hypersurface, SpectralDataset) {
        let man = build_manifold(&GeometrySpec::cycle_with_profile(n, 2.0 * PI, |x| 1.0 + 0.25 * (2.0 * x).cos())).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: pair.to_vec(), seed }]).unwrap();
        let basis = eigendecompose(&man, n).unwrap();
        let data = emit_spectral_data(&basis, &sigma, DataKind::Cauchy).unwrap();
        (man, sigma, data)
    }

    fn bump(t0: f64, width: f64, at: usize) -> impl Fn(f64, usize) -> f64 {
        move |t, k| {
            let s = (t - t0) / width;
            if k == at && (0.0..=1.0).contains(&s) { (PI * s).sin().powi(4) } else { 0.0 }
        }
    }

    #[test]
    fn zero_signal_gives_zero() {
        let (_, _, data) = cycle_data(16, [0, 5], 2);
        let sig = SourceSignal::zeros(0.0, 0.1, 10, 2);
        let c = blago_coefficients(&data, &sig, &[0.5, 2.0], JumpKind::Value).unwrap();
        assert!(c.values.iter().flatten().all(|v| *v == 0.0));
        assert!(sigma_trace(&data, &sig, &[1.0]).unwrap()[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn value_jump_needs_normal_traces() {
        let (_, _, data) = cycle_data(16, [0, 5], 2);
        let sig = SourceSignal::zeros(0.0, 0.1, 10, 2);
        let err = blago_coefficients(&data.as_dirichlet(), &sig, &[1.0], JumpKind::Value);
        assert!(matches!(err, Err(Error::MissingData(_))));
    }

    #[test]
    fn causal_before_start() {
        let (_, _, data) = cycle_data(16, [0, 5], 2);
        let sig = SourceSignal::from_fn(1.0, 0.05, 20, 2, Interpolation::Linear, bump(1.0, 0.95, 0));
        let tr = sigma_trace(&data, &sig, &[0.0, 0.5, 1.0]).unwrap();
        assert!(tr.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn wave_map_needs_past_source() {
        let (_, _, data) = cycle_data(16, [0, 5], 2);
        let sig = SourceSignal::zeros(0.0, 0.1, 10, 2);
        assert!(wave_map(&data, &sig).is_err());
        let past = SourceSignal::zeros(-1.0, 0.1, 10, 2);
        let st = wave_map(&data, &past).unwrap();
        assert_eq!(st.quasinorm, 0.0);
    }

    #[test]
    fn matches_time_domain_oracle() {
        let (man, sigma, data) = cycle_data(64, [0, 20], 5);
        let h = SourceSignal::from_fn(0.0, 0.02, 40, 2, Interpolation::Linear, bump(0.0, 0.78, 0));
        let f = SourceSignal::from_fn(0.1, 0.02, 40, 2, Interpolation::Linear, bump(0.1, 0.78, 1));
        let basis = eigendecompose(&man, 64).unwrap();
        let t = 1.5;
        let mut opts = TimeOptions::new(t, 2.5e-4);
        opts.t_start = Some(0.0);
        for (hs, fs, kind, sig) in [
            (Some(&h), None, JumpKind::Derivative, &h),
            (None, Some(&f), JumpKind::Value, &f),
        ] {
            let field = solve_transmission_time(&man, &sigma, fs, hs, &opts).unwrap();
            let k = field.frame_at(t);
            let proj = field.modal_projection(&basis, &man.mass, k);
            let coeffs = blago_coefficients(&data, sig, &[t], kind).unwrap();
            let err: f64 = proj.iter().zip(&coeffs.values[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = proj.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(err < 1e-3 * norm, "{kind:?}: {err} vs {norm}");
        }
    }

    #[test]
    fn symmetric_pair_loses_rank() {
        let man = build_manifold(&GeometrySpec::uniform_cycle(32, 2.0 * PI)).unwrap();
        let basis = eigendecompose(&man, 32).unwrap();
        let run = |pair: Vec<usize>| {
            let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: pair, seed: 1 }]).unwrap();
            let data = emit_spectral_data(&basis, &sigma, DataKind::Dirichlet).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let kappas: Vec<Vec<f64>> = (0..160)
                .map(|_| {
                    let amps: Vec<[f64; 2]> = (0..12).map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
                    let sig = SourceSignal::from_fn(-3.0, 0.01, 301, 2, Interpolation::Linear, |t, x| {
                        let s = (t + 3.0) / 3.0;
                        let env = (PI * s).sin().powi(2);
                        env * amps.iter().enumerate().map(|(m, a)| a[x] * ((m as f64 + 1.0) * 1.4 * t).sin()).sum::<f64>()
                    });
                    wave_map(&data, &sig).unwrap().kappa
                })
                .collect();
            controllability_gram(&data.lambdas, &kappas, GramNorm::H1, 8, 1).unwrap()
        };
        let generic = run(vec![0, 5]);
        let symmetric = run(vec![0, 16]);
        assert!(symmetric.rank < generic.rank, "{} vs {}", symmetric.rank, generic.rank);
        assert!(symmetric.rank <= 17);
    }

    #[test]
    fn gram_rank_of_duplicates() {
        let lambdas = [0.0, 1.0, 4.0];
        let a = vec![1.0, 2.0, 3.0];
        let r1 = controllability_gram(&lambdas, &[a.clone()], GramNorm::L2, 2, 0).unwrap();
        let r2 = controllability_gram(&lambdas, &[a.clone(), a], GramNorm::L2, 2, 0).unwrap();
        assert_eq!((r1.rank, r2.rank), (1, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn coefficients_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.0f64..3.0, seed in 0u64..1000) {
            let (_, _, data) = cycle_data(16, [0, 5], 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut random = || {
                let rows = (0..12).map(|_| vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
                SourceSignal::new(0.2, 0.1, rows, Interpolation::Linear).unwrap()
            };
            let (p, q) = (random(), random());
            let combo = p.scaled(a).add(&q.scaled(b)).unwrap();
            for kind in [JumpKind::Derivative, JumpKind::Value] {
                let cp = blago_coefficients(&data, &p, &[t], kind).unwrap().values.remove(0);
                let cq = blago_coefficients(&data, &q, &[t], kind).unwrap().values.remove(0);
                let cc = blago_coefficients(&data, &combo, &[t], kind).unwrap().values.remove(0);
                for j in 0..16 {
                    let expect = a * cp[j] + b * cq[j];
                    prop_assert!((cc[j] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
                }
            }
        }
    }
}
