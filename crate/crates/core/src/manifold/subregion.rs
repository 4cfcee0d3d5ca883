use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DiscreteManifold, Hypersurface, VertexLabel};
use crate::error::{Error, Result};
use crate::linalg::sorted_symmetric_eigen;

/// Subdomains whose Dirichlet spectra enter the two-component theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// The region enclosed by component `i`.
    Inside(usize),
    /// Everything not enclosed by any component, Σ excluded.
    Outside,
    /// The complement of the closure of `Inside(i)`.
    Complement(usize),
}

impl Region {
    pub fn label(&self) -> String {
        match self {
            Region::Inside(i) => format!("S{}", i + 1),
            Region::Outside => "M\\S".into(),
            Region::Complement(i) => format!("M\\S{}", i + 1),
        }
    }

    /// The five regions of a two-component hypersurface, in report order.
    pub fn all_five() -> [Region; 5] {
        [
            Region::Inside(0),
            Region::Inside(1),
            Region::Outside,
            Region::Complement(0),
            Region::Complement(1),
        ]
    }
}

pub fn region_vertices(sigma: &Hypersurface, region: Region) -> Vec<usize> {
    let keep = |label: &VertexLabel| match (region, *label) {
        (Region::Inside(i), VertexLabel::Inside(k)) => i == k,
        (Region::Outside, VertexLabel::Outside) => true,
        (Region::Complement(i), VertexLabel::Inside(k)) => i != k,
        (Region::Complement(i), VertexLabel::Sigma { component, .. }) => i != component,
        (Region::Complement(_), VertexLabel::Outside) => true,
        _ => false,
    };
    sigma
        .labels
        .iter()
        .enumerate()
        .filter(|(_, l)| keep(l))
        .map(|(v, _)| v)
        .collect()
}

/// Dirichlet eigenpairs of a region: the stiffness/mass pencil restricted to
/// functions vanishing off the region. Modes are returned as full vertex
/// vectors (zero outside), mass-orthonormal. At most `count` pairs; fewer
/// when the region is smaller.
pub fn subdomain_dirichlet_modes(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    region: Region,
    count: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if man.id != sigma.manifold_id {
        return Err(Error::ManifoldMismatch(man.id.clone(), sigma.manifold_id.clone()));
    }
    let verts = region_vertices(sigma, region);
    if verts.is_empty() {
        return Err(Error::OutOfRange(format!("region {} is empty", region.label())));
    }
    let k = man.stiffness.principal_submatrix(&verts).to_dense();
    let inv_sqrt: Vec<f64> = verts.iter().map(|&v| 1.0 / man.mass[v].sqrt()).collect();
    let a = DMatrix::from_fn(verts.len(), verts.len(), |r, c| k[(r, c)] * inv_sqrt[r] * inv_sqrt[c]);
    let (vals, vecs) = sorted_symmetric_eigen(&a);
    let take = count.min(verts.len());
    let mut modes = DMatrix::zeros(man.vertex_count(), take);
    for c in 0..take {
        for (r, &v) in verts.iter().enumerate() {
            modes[(v, c)] = vecs[(r, c)] * inv_sqrt[r];
        }
    }
    Ok((vals[..take].to_vec(), modes))
}

pub fn subdomain_dirichlet_spectrum(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    region: Region,
    count: usize,
) -> Result<Vec<f64>> {
    subdomain_dirichlet_modes(man, sigma, region, count).map(|(v, _)| v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessReport {
    pub spectra: Vec<(String, Vec<f64>)>,
    pub min_pairwise_gap: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Smallest distance between values of two different spectra.
pub fn min_cross_gap(spectra: &[Vec<f64>]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, a) in spectra.iter().enumerate() {
        for b in &spectra[i + 1..] {
            for x in a {
                for y in b {
                    gap = gap.min((x - y).abs());
                }
            }
        }
    }
    gap
}

pub fn check_disjointness(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    count: usize,
    tolerance: f64,
) -> Result<DisjointnessReport> {
    if sigma.components.len() != 2 {
        return Err(Error::InvalidHypersurface(format!(
            "disjointness needs two components, got {}",
            sigma.components.len()
        )));
    }
    let mut spectra = Vec::new();
    for region in Region::all_five() {
        spectra.push((region.label(), subdomain_dirichlet_spectrum(man, sigma, region, count)?));
    }
    let values: Vec<Vec<f64>> = spectra.iter().map(|(_, v)| v.clone()).collect();
    let gap = min_cross_gap(&values);
    Ok(DisjointnessReport {
        spectra,
        min_pairwise_gap: gap,
        tolerance,
        passes: gap > 2.0 * tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, ComponentSpec, GeometrySpec};
    use alloc::vec;
    use core::f64::consts::PI;

    fn path_spectrum(len: usize, h: f64) -> Vec<f64> {
        (1..=len)
            .map(|k| {
                let s = (k as f64 * PI / (2.0 * (len as f64 + 1.0))).sin();
                4.0 / (h * h) * s * s
            })
            .collect()
    }

    #[test]
    fn arc_matches_path_spectrum() {
        let man = build_manifold(&GeometrySpec::uniform_cycle(16, 2.0 * PI)).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![0, 8], seed: 1 }]).unwrap();
        let h = 2.0 * PI / 16.0;
        let vals = subdomain_dirichlet_spectrum(&man, &sigma, Region::Inside(0), 10).unwrap();
        assert_eq!(vals.len(), 7);
        for (a, b) in vals.iter().zip(path_spectrum(7, h)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn layout_with_coprime_paths_is_disjoint() {
        let man = build_manifold(&GeometrySpec::uniform_cycle(16, 2.0 * PI)).unwrap();
        let comps = [
            ComponentSpec { vertices: vec![0, 3], seed: 1 },
            ComponentSpec { vertices: vec![7, 12], seed: 8 },
        ];
        let sigma = Hypersurface::carve(&man, &comps).unwrap();
        let report = check_disjointness(&man, &sigma, 5, 1e-6).unwrap();
        assert!(report.passes, "gap {}", report.min_pairwise_gap);
        assert!(!check_disjointness(&man, &sigma, 5, f64::INFINITY).unwrap().passes);

        let sym = [
            ComponentSpec { vertices: vec![0, 3], seed: 1 },
            ComponentSpec { vertices: vec![8, 11], seed: 9 },
        ];
        let sigma = Hypersurface::carve(&man, &sym).unwrap();
        assert!(!check_disjointness(&man, &sigma, 5, 1e-6).unwrap().passes);
    }

    #[test]
    fn dirichlet_values_dominate_closed_values() {
        let spec = GeometrySpec::cycle_with_profile(20, 1.0, |x| 1.0 + 0.5 * (2.0 * PI * x).sin());
        let man = build_manifold(&spec).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![2, 9], seed: 5 }]).unwrap();
        let closed = crate::manifold::eigendecompose(&man, 20).unwrap().lambdas;
        for region in [Region::Inside(0), Region::Outside] {
            let vals = subdomain_dirichlet_spectrum(&man, &sigma, region, 20).unwrap();
            for (n, v) in vals.iter().enumerate() {
                assert!(*v >= closed[n] - 1e-9);
            }
        }
    }
}
