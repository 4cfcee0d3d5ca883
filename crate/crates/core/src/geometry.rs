//! Distances on Σ from eigenvalues and traces alone.
//!
//! The heat kernel restricted to Σ×Σ is a finite sum over the data. Its
//! short-time logarithm gives the ambient distance; chaining short ambient
//! hops along Σ gives the intrinsic one.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::SpectralDataset;

#[derive(Debug, Clone)]
pub struct HeatTrace {
    pub t: f64,
    pub values: DMatrix<f64>,
    /// Rough size of the omitted modes' contribution.
    pub remainder: f64,
}

pub fn heat_trace_matrix(data: &SpectralDataset, t: f64) -> Result<HeatTrace> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange(alloc::format!("heat time must be positive, got {t}")));
    }
    let s = data.sigma_len();
    let mut values = DMatrix::zeros(s, s);
    let mut peak_sum = 0.0;
    for (lambda, row) in data.lambdas.iter().zip(&data.traces) {
        let e = (-lambda * t).exp();
        for x in 0..s {
            let ex = e * row[x];
            for y in 0..s {
                values[(x, y)] += ex * row[y];
            }
        }
        peak_sum += row.iter().fold(0.0f64, |m, v| m.max(v * v));
    }
    let last = data.lambdas.last().copied().unwrap_or(0.0);
    Ok(HeatTrace {
        t,
        values,
        remainder: (-last * t).exp() * peak_sum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Ambient,
    Intrinsic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    /// Σ vertex ids, in dataset order.
    pub labels: Vec<usize>,
    pub kind: DistanceKind,
    /// NaN where a pair could not be estimated.
    pub values: Vec<Vec<f64>>,
    /// Fit-based error estimate per pair (ambient kind).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<Vec<Vec<f64>>>,
    /// Pairs whose kernel estimate was unusable.
    #[serde(default)]
    pub flagged: Vec<(usize, usize)>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x][y]
    }
}

/// Least-squares line through `(x, y)`; returns intercept, slope and the
/// RMS residual.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (intercept, slope, rms)
}

/// Ambient distances between Σ vertices from short-time heat asymptotics.
///
/// Per pair, `D(t) = −4t log H(x,y;t) − 2m t log(4πt)` removes the Gaussian
/// prefactor in dimension `m`, leaving `d² + O(t)`; a line through the
/// admissible grid times is extrapolated to `t = 0`. Times where the
/// truncation remainder exceeds 10% of `H` are dropped; pairs left with
/// fewer than two times, or with `H ≤ 0`, are flagged.
pub fn varadhan_distances(data: &SpectralDataset, t_grid: &[f64]) -> Result<DistanceMatrix> {
    if t_grid.len() < 2 {
        return Err(Error::OutOfRange("at least two heat times are needed".into()));
    }
    let dim = data.sigma.coords.first().map_or(1, Vec::len) as f64;
    let traces: Vec<HeatTrace> = t_grid.iter().map(|&t| heat_trace_matrix(data, t)).collect::<Result<_>>()?;
    let s = data.sigma_len();
    let mut values = vec![vec![0.0; s]; s];
    let mut errors = vec![vec![0.0; s]; s];
    let mut flagged = Vec::new();
    for x in 0..s {
        for y in x + 1..s {
            let mut ts = Vec::new();
            let mut ds = Vec::new();
            let mut bad = false;
            for ht in &traces {
                let h = ht.values[(x, y)];
                if h <= 0.0 {
                    bad = true;
                    break;
                }
                if ht.remainder > 0.1 * h {
                    continue;
                }
                let t = ht.t;
                ts.push(t);
                ds.push(-4.0 * t * h.ln() - 2.0 * dim * t * (4.0 * core::f64::consts::PI * t).ln());
            }
            let (d, err) = if bad || ts.len() < 2 {
                flagged.push((x, y));
                (f64::NAN, f64::NAN)
            } else {
                let (d2, _, rms) = fit_line(&ts, &ds);
                let d = d2.max(0.0).sqrt();
                // Error in d from the fit residual in d².
                (d, rms / (2.0 * d.max(rms.sqrt())))
            };
            values[x][y] = d;
            values[y][x] = d;
            errors[x][y] = err;
            errors[y][x] = err;
        }
    }
    Ok(DistanceMatrix {
        labels: data.sigma.components.iter().flatten().copied().collect(),
        kind: DistanceKind::Ambient,
        values,
        errors: Some(errors),
        flagged,
    })
}

/// Shortest chains of hops no longer than `eps`, weighted by the ambient
/// distance. Errors with the connected pieces when some pair has no chain.
pub fn intrinsic_distances(ambient: &DistanceMatrix, eps: f64) -> Result<DistanceMatrix> {
    let s = ambient.len();
    let hop = |x: usize, y: usize| {
        let d = ambient.values[x][y];
        (x != y && d.is_finite() && d <= eps).then_some(d)
    };
    let mut values = vec![vec![f64::INFINITY; s]; s];
    for (src, row) in values.iter_mut().enumerate() {
        // Dense Dijkstra; Σ has at most a few hundred vertices.
        let mut done = vec![false; s];
        row[src] = 0.0;
        for _ in 0..s {
            let Some(u) = (0..s).filter(|&v| !done[v] && row[v].is_finite()).min_by(|&a, &b| row[a].total_cmp(&row[b])) else {
                break;
            };
            done[u] = true;
            for v in 0..s {
                if let Some(d) = hop(u, v) {
                    if row[u] + d < row[v] {
                        row[v] = row[u] + d;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; s];
    let mut components = Vec::new();
    for x in 0..s {
        if !seen[x] {
            let comp: Vec<usize> = (0..s).filter(|&y| values[x][y].is_finite()).collect();
            comp.iter().for_each(|&y| seen[y] = true);
            components.push(comp.iter().map(|&y| ambient.labels[y]).collect::<Vec<_>>());
        }
    }
    if components.len() > 1 {
        return Err(Error::Disconnected { scale: eps, components });
    }
    Ok(DistanceMatrix {
        labels: ambient.labels.clone(),
        kind: DistanceKind::Intrinsic,
        values,
        errors: None,
        flagged: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, eigendecompose, emit_spectral_data, square_ring, ComponentSpec, DataKind, GeometrySpec, Hypersurface};
    use core::f64::consts::PI;

    fn cycle_data(n: usize, pair: [usize; 2]) -> SpectralDataset {
        let man = build_manifold(&GeometrySpec::uniform_cycle(n, 2.0 * PI)).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: pair.to_vec(), seed: pair[0] + 1 }]).unwrap();
        emit_spectral_data(&eigendecompose(&man, n).unwrap(), &sigma, DataKind::Dirichlet).unwrap()
    }

    #[test]
    fn heat_trace_limits() {
        let data = cycle_data(32, [0, 9]);
        assert!(heat_trace_matrix(&data, 0.0).is_err());
        let late = heat_trace_matrix(&data, 1e3).unwrap();
        assert!(late.values.iter().all(|v| (v - 1.0 / (2.0 * PI)).abs() < 1e-12));
        let early = heat_trace_matrix(&data, 1e-3).unwrap();
        assert!((0..2).all(|x| early.values[(x, x)] > 0.0));
    }

    #[test]
    fn antipodal_distance_on_cycle() {
        let data = cycle_data(256, [0, 128]);
        let grid = [0.1, 0.13, 0.16, 0.2, 0.25];
        let dm = varadhan_distances(&data, &grid).unwrap();
        assert_eq!(dm.get(0, 0), 0.0);
        assert!((dm.get(0, 1) - PI).abs() < 0.03 * PI, "{}", dm.get(0, 1));
    }

    #[test]
    fn chaining_on_a_ring() {
        let man = build_manifold(&GeometrySpec::uniform_torus(12, 12, 1.0, 1.0)).unwrap();
        let ring = square_ring(&man, 3, 3, 5, 5).unwrap();
        let sigma = Hypersurface::carve(&man, &[ring]).unwrap();
        let s = sigma.len();
        // Exact ambient distances in the grid plane, as a synthetic input.
        let coords = &sigma.coords;
        let values = (0..s)
            .map(|x| (0..s).map(|y| ((coords[x][0] - coords[y][0]).powi(2) + (coords[x][1] - coords[y][1]).powi(2)).sqrt()).collect())
            .collect();
        let ambient = DistanceMatrix {
            labels: sigma.vertices.clone(),
            kind: DistanceKind::Ambient,
            values,
            errors: None,
            flagged: Vec::new(),
        };
        let h = 1.0 / 12.0;
        let tight = intrinsic_distances(&ambient, 1.5 * h).unwrap();
        let loose = intrinsic_distances(&ambient, 4.0 * h).unwrap();
        for x in 0..s {
            for y in 0..s {
                assert!(tight.get(x, y) >= ambient.get(x, y) - 1e-12);
                assert!(loose.get(x, y) <= tight.get(x, y) + 1e-12);
            }
        }
        assert!((tight.get(0, 1) - ambient.get(0, 1)).abs() < 1e-15);
        assert!(matches!(intrinsic_distances(&ambient, 0.5 * h), Err(Error::Disconnected { .. })));
    }
}
