use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use num_traits::Float;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DiscreteManifold, Hypersurface};
use crate::error::{Error, Result};
use crate::linalg::{filtered_lowest_eigenpairs, sorted_symmetric_eigen, CsrMatrix, FilterOptions};

/// Largest order solved with a dense symmetric eigensolver.
const DENSE_LIMIT: usize = 2048;

/// Mass-orthonormal eigenpairs of `K φ = λ M φ`, ascending.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub manifold_id: String,
    pub lambdas: Vec<f64>,
    /// Columns are the modes.
    pub modes: DMatrix<f64>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        let n = self.modes.nrows();
        &self.modes.as_slice()[j * n..(j + 1) * n]
    }
}

pub fn eigendecompose(man: &DiscreteManifold, count: usize) -> Result<EigenBasis> {
    let n = man.vertex_count();
    if count == 0 || count > n {
        return Err(Error::OutOfRange(format!("truncation {count} outside 1..={n}")));
    }
    let inv_sqrt: Vec<f64> = man.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let scaled_trip: Vec<(usize, usize, f64)> = man
        .stiffness
        .triplets()
        .into_iter()
        .map(|(r, c, v)| (r, c, v * inv_sqrt[r] * inv_sqrt[c]))
        .collect();
    let scaled = CsrMatrix::from_triplets(n, n, &scaled_trip);

    let (lambdas, vecs) = if n <= DENSE_LIMIT {
        let (vals, vecs) = sorted_symmetric_eigen(&scaled.to_dense());
        (vals[..count].to_vec(), vecs.columns(0, count).into_owned())
    } else {
        filtered_lowest_eigenpairs(&scaled, count, FilterOptions::default())?
    };

    let mut modes = vecs;
    for (r, s) in inv_sqrt.iter().enumerate() {
        for c in 0..count {
            modes[(r, c)] *= s;
        }
    }
    let mut lambdas = lambdas;
    // The kernel is exactly the constants; pin it to remove rounding noise.
    let constant = 1.0 / man.volume().sqrt();
    lambdas[0] = 0.0;
    modes.column_mut(0).fill(constant);
    for c in 1..count {
        lambdas[c] = lambdas[c].max(0.0);
        let col = modes.column(c);
        let pivot = col.iter().copied().fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            modes.column_mut(c).neg_mut();
        }
    }

    let basis = EigenBasis {
        manifold_id: man.id.clone(),
        lambdas,
        modes,
    };
    check_residuals(man, &basis)?;
    Ok(basis)
}

fn check_residuals(man: &DiscreteManifold, basis: &EigenBasis) -> Result<()> {
    let scale = man.spectral_upper_bound();
    let mut residuals = Vec::with_capacity(basis.len());
    for j in 0..basis.len() {
        let phi = basis.mode(j);
        let kphi = man.stiffness.mul_vec(phi);
        let num: f64 = kphi
            .iter()
            .zip(phi)
            .zip(&man.mass)
            .map(|((k, p), m)| {
                let r = (k - basis.lambdas[j] * m * p) / m.sqrt();
                r * r
            })
            .sum::<f64>()
            .sqrt();
        residuals.push(num / scale.max(1.0));
    }
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(Error::EigenNonConvergence {
            iterations: 0,
            worst_residual: worst,
            residuals,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Cauchy,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaDescriptor {
    pub components: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
}

/// Eigenvalues with eigenfunction traces on Σ and, for Cauchy data, the
/// normal-derivative traces (normal pointing into the enclosed side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDataset {
    pub version: String,
    pub kind: DataKind,
    pub manifold_id: String,
    pub sigma: SigmaDescriptor,
    pub lambdas: Vec<f64>,
    /// One row per eigenvalue, one column per Σ vertex.
    pub traces: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_traces: Option<Vec<Vec<f64>>>,
}

pub fn emit_spectral_data(basis: &EigenBasis, sigma: &Hypersurface, kind: DataKind) -> Result<SpectralDataset> {
    if basis.manifold_id != sigma.manifold_id {
        return Err(Error::ManifoldMismatch(basis.manifold_id.clone(), sigma.manifold_id.clone()));
    }
    let traces: Vec<Vec<f64>> = (0..basis.len())
        .map(|j| sigma.vertices.iter().map(|&x| basis.modes[(x, j)]).collect())
        .collect();
    let normal_traces = match kind {
        DataKind::Dirichlet => None,
        DataKind::Cauchy => Some(
            (0..basis.len())
                .map(|j| {
                    let phi = basis.mode(j);
                    sigma
                        .stencils
                        .iter()
                        .map(|st| st.plus_derivative(phi, basis.lambdas[j]))
                        .collect()
                })
                .collect(),
        ),
    };
    Ok(SpectralDataset {
        version: "1".into(),
        kind,
        manifold_id: basis.manifold_id.clone(),
        sigma: SigmaDescriptor {
            components: sigma.components.clone(),
            weights: sigma.weights.clone(),
            coords: sigma.coords.clone(),
        },
        lambdas: basis.lambdas.clone(),
        traces,
        normal_traces,
    })
}

impl SpectralDataset {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn sigma_len(&self) -> usize {
        self.sigma.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.sigma.weights
    }

    pub fn component_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.sigma.components[..i].iter().map(Vec::len).sum();
        start..start + self.sigma.components[i].len()
    }

    pub fn normal(&self) -> Result<&[Vec<f64>]> {
        match (&self.kind, &self.normal_traces) {
            (DataKind::Cauchy, Some(nt)) => Ok(nt),
            _ => Err(Error::MissingData("normal-derivative traces (Cauchy data required)")),
        }
    }

    /// Trace matrix, rows = modes, columns = Σ vertices.
    pub fn trace_matrix(&self) -> DMatrix<f64> {
        rows_to_matrix(&self.traces, self.sigma_len())
    }

    pub fn normal_matrix(&self) -> Result<DMatrix<f64>> {
        Ok(rows_to_matrix(self.normal()?, self.sigma_len()))
    }

    /// The first `count` modes.
    pub fn truncated(&self, count: usize) -> SpectralDataset {
        let count = count.min(self.len());
        let mut out = self.clone();
        out.lambdas.truncate(count);
        out.traces.truncate(count);
        if let Some(nt) = out.normal_traces.as_mut() {
            nt.truncate(count);
        }
        out
    }

    /// Dirichlet view of the same data.
    pub fn as_dirichlet(&self) -> SpectralDataset {
        let mut out = self.clone();
        out.kind = DataKind::Dirichlet;
        out.normal_traces = None;
        out
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma_len();
        let listed: usize = self.sigma.components.iter().map(Vec::len).sum();
        if listed != s {
            return Err(Error::DimensionMismatch {
                what: "sigma weights vs component vertices",
                expected: listed,
                got: s,
            });
        }
        if self.traces.len() != self.lambdas.len() {
            return Err(Error::DimensionMismatch {
                what: "trace rows",
                expected: self.lambdas.len(),
                got: self.traces.len(),
            });
        }
        if let Some(row) = self.traces.iter().find(|r| r.len() != s) {
            return Err(Error::DimensionMismatch {
                what: "trace row length",
                expected: s,
                got: row.len(),
            });
        }
        if self.lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::OutOfRange("eigenvalues must be ascending".into()));
        }
        match (self.kind, &self.normal_traces) {
            (DataKind::Dirichlet, Some(_)) => {
                Err(Error::OutOfRange("Dirichlet data must not carry normal traces".into()))
            }
            (DataKind::Cauchy, None) => Err(Error::MissingData("normal-derivative traces (Cauchy data required)")),
            (DataKind::Cauchy, Some(nt)) => {
                if nt.len() != self.lambdas.len() || nt.iter().any(|r| r.len() != s) {
                    Err(Error::DimensionMismatch {
                        what: "normal trace shape",
                        expected: self.lambdas.len(),
                        got: nt.len(),
                    })
                } else {
                    Ok(())
                }
            }
            (DataKind::Dirichlet, None) => Ok(()),
        }
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, ComponentSpec, GeometrySpec};
    use alloc::vec;
    use core::f64::consts::PI;

    #[test]
    fn full_basis_is_complete() {
        let spec = GeometrySpec::cycle_with_profile(12, 2.0, |x| 1.0 + 0.4 * (PI * x).cos());
        let man = build_manifold(&spec).unwrap();
        let basis = eigendecompose(&man, 12).unwrap();
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(man.mass.clone()));
        let id = &basis.modes * basis.modes.transpose() * &m;
        assert!((id - DMatrix::identity(12, 12)).amax() < 1e-10);
        let gram = basis.modes.transpose() * &m * &basis.modes;
        assert!((gram - DMatrix::identity(12, 12)).amax() < 1e-10);
    }

    #[test]
    fn single_mode_is_the_constant() {
        let man = build_manifold(&GeometrySpec::uniform_cycle(9, 3.0)).unwrap();
        let basis = eigendecompose(&man, 1).unwrap();
        assert_eq!(basis.lambdas, vec![0.0]);
        assert!((basis.modes[(4, 0)] - 1.0 / 3.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dataset_kinds_and_constant_row() {
        let man = build_manifold(&GeometrySpec::uniform_cycle(16, 2.0 * PI)).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![0, 7], seed: 1 }]).unwrap();
        let basis = eigendecompose(&man, 16).unwrap();
        let d = emit_spectral_data(&basis, &sigma, DataKind::Dirichlet).unwrap();
        assert!(d.normal_traces.is_none());
        d.validate().unwrap();
        let c = emit_spectral_data(&basis, &sigma, DataKind::Cauchy).unwrap();
        c.validate().unwrap();
        let root = 1.0 / (2.0 * PI).sqrt();
        for x in 0..2 {
            assert!((c.traces[0][x] - root).abs() < 1e-14);
            assert!(c.normal().unwrap()[0][x].abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_manifolds_rejected() {
        let a = build_manifold(&GeometrySpec::uniform_cycle(16, 1.0)).unwrap();
        let b = build_manifold(&GeometrySpec::uniform_cycle(16, 2.0)).unwrap();
        let sigma = Hypersurface::carve(&b, &[ComponentSpec { vertices: vec![0, 7], seed: 1 }]).unwrap();
        let basis = eigendecompose(&a, 4).unwrap();
        assert!(matches!(
            emit_spectral_data(&basis, &sigma, DataKind::Dirichlet),
            Err(Error::ManifoldMismatch(..))
        ));
    }
}
