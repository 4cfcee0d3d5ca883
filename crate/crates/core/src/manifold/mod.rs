//! Discrete closed manifolds: uniform-topology cycles and tori with a
//! variable metric, plus everything derived from them alone (hypersurfaces,
//! eigenbases, spectral datasets, subdomain spectra).
//!
//! Cycles carry a per-edge stretch factor, so edge `i` (between vertex `i`
//! and `i+1`) has length `h·a_i`. Tori carry a per-vertex conformal factor
//! `c`, i.e. the metric `c·(dx² + dy²)`; the 5-point stiffness is then
//! independent of `c` and only the mass sees it.

mod sigma;
mod spectral;
mod subregion;

pub use sigma::{square_ring, ComponentSpec, Hypersurface, Side, SigmaStencil, VertexLabel};
pub use spectral::{eigendecompose, emit_spectral_data, DataKind, EigenBasis, SigmaDescriptor, SpectralDataset};
pub use subregion::{check_disjointness, min_cross_gap, region_vertices, subdomain_dirichlet_modes, subdomain_dirichlet_spectrum, DisjointnessReport, Region};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

pub const MIN_CYCLE_VERTICES: usize = 8;
pub const MIN_TORUS_SIDE: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case")]
pub enum GeometrySpec {
    Cycle {
        n: usize,
        circumference: f64,
        /// Edge stretch factors, one per edge.
        metric: Vec<f64>,
    },
    Torus {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        /// Conformal factor per vertex, row-major with `x` fastest.
        conformal: Vec<f64>,
    },
}

impl GeometrySpec {
    pub fn uniform_cycle(n: usize, circumference: f64) -> Self {
        Self::Cycle {
            n,
            circumference,
            metric: vec![1.0; n],
        }
    }

    /// Cycle whose stretch factor is `profile` sampled at edge midpoints of
    /// the parameter `x ∈ [0, circumference)`.
    pub fn cycle_with_profile(n: usize, circumference: f64, profile: impl Fn(f64) -> f64) -> Self {
        let h = circumference / n as f64;
        Self::Cycle {
            n,
            circumference,
            metric: (0..n).map(|i| profile((i as f64 + 0.5) * h)).collect(),
        }
    }

    pub fn uniform_torus(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self::Torus {
            nx,
            ny,
            lx,
            ly,
            conformal: vec![1.0; nx * ny],
        }
    }

    pub fn torus_with_factor(nx: usize, ny: usize, lx: f64, ly: f64, factor: impl Fn(f64, f64) -> f64) -> Self {
        let (hx, hy) = (lx / nx as f64, ly / ny as f64);
        let mut conformal = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                conformal.push(factor(i as f64 * hx, j as f64 * hy));
            }
        }
        Self::Torus { nx, ny, lx, ly, conformal }
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            Self::Cycle { n, .. } => *n,
            Self::Torus { nx, ny, .. } => nx * ny,
        }
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over the defining numbers; stable across platforms.
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |bits: u64| {
            for byte in bits.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
        };
        match self {
            Self::Cycle { n, circumference, metric } => {
                eat(1);
                eat(*n as u64);
                eat(circumference.to_bits());
                metric.iter().for_each(|v| eat(v.to_bits()));
            }
            Self::Torus { nx, ny, lx, ly, conformal } => {
                eat(2);
                eat(*nx as u64);
                eat(*ny as u64);
                eat(lx.to_bits());
                eat(ly.to_bits());
                conformal.iter().for_each(|v| eat(v.to_bits()));
            }
        }
        hash
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Stiffness weight of the edge.
    pub conductance: f64,
    /// Riemannian length of the edge.
    pub length: f64,
}

/// A closed manifold discretized as a weighted graph with a stiffness form
/// and a diagonal mass form.
#[derive(Debug, Clone)]
pub struct DiscreteManifold {
    pub id: String,
    pub dim: usize,
    pub spec: GeometrySpec,
    pub stiffness: CsrMatrix<f64>,
    pub mass: Vec<f64>,
    pub coords: Vec<[f64; 2]>,
    pub edges: Vec<Edge>,
    /// Per vertex: (neighbour, edge index).
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

pub fn build_manifold(spec: &GeometrySpec) -> Result<DiscreteManifold> {
    match spec {
        GeometrySpec::Cycle { n, circumference, metric } => build_cycle(spec, *n, *circumference, metric),
        GeometrySpec::Torus { nx, ny, lx, ly, conformal } => build_torus(spec, *nx, *ny, *lx, *ly, conformal),
    }
}

fn check_positive(name: &str, samples: &[f64]) -> Result<()> {
    if let Some((i, v)) = samples.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidGeometry(format!("{name} sample {i} is {v}, must be positive and finite")));
    }
    Ok(())
}

fn build_cycle(spec: &GeometrySpec, n: usize, circumference: f64, metric: &[f64]) -> Result<DiscreteManifold> {
    if n < MIN_CYCLE_VERTICES {
        return Err(Error::InvalidGeometry(format!(
            "cycle needs at least {MIN_CYCLE_VERTICES} vertices, got {n}"
        )));
    }
    if !(circumference > 0.0 && circumference.is_finite()) {
        return Err(Error::InvalidGeometry(format!("circumference {circumference} must be positive")));
    }
    if metric.len() != n {
        return Err(Error::DimensionMismatch {
            what: "cycle metric profile",
            expected: n,
            got: metric.len(),
        });
    }
    check_positive("metric", metric)?;
    let h = circumference / n as f64;
    let edges: Vec<Edge> = (0..n)
        .map(|i| {
            let length = h * metric[i];
            Edge {
                a: i,
                b: (i + 1) % n,
                conductance: 1.0 / length,
                length,
            }
        })
        .collect();
    let mass = (0..n)
        .map(|v| 0.5 * (edges[v].length + edges[(v + n - 1) % n].length))
        .collect();
    let coords = (0..n).map(|v| [v as f64 * h, 0.0]).collect();
    Ok(assemble(spec, 1, n, edges, mass, coords))
}

fn build_torus(spec: &GeometrySpec, nx: usize, ny: usize, lx: f64, ly: f64, conformal: &[f64]) -> Result<DiscreteManifold> {
    if nx < MIN_TORUS_SIDE || ny < MIN_TORUS_SIDE {
        return Err(Error::InvalidGeometry(format!(
            "torus sides must be at least {MIN_TORUS_SIDE}, got {nx}×{ny}"
        )));
    }
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidGeometry(format!("torus periods {lx}×{ly} must be positive")));
    }
    if conformal.len() != nx * ny {
        return Err(Error::DimensionMismatch {
            what: "torus conformal factor",
            expected: nx * ny,
            got: conformal.len(),
        });
    }
    check_positive("conformal factor", conformal)?;
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let id = |i: usize, j: usize| (j % ny) * nx + (i % nx);
    let mut edges = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v = id(i, j);
            let right = id(i + 1, j);
            let up = id(i, j + 1);
            let stretch = |u: usize| 0.5 * (conformal[v].sqrt() + conformal[u].sqrt());
            edges.push(Edge {
                a: v,
                b: right,
                conductance: hy / hx,
                length: hx * stretch(right),
            });
            edges.push(Edge {
                a: v,
                b: up,
                conductance: hx / hy,
                length: hy * stretch(up),
            });
        }
    }
    let mass = conformal.iter().map(|c| c * hx * hy).collect();
    let mut coords = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            coords.push([i as f64 * hx, j as f64 * hy]);
        }
    }
    Ok(assemble(spec, 2, nx * ny, edges, mass, coords))
}

fn assemble(
    spec: &GeometrySpec,
    dim: usize,
    n: usize,
    edges: Vec<Edge>,
    mass: Vec<f64>,
    coords: Vec<[f64; 2]>,
) -> DiscreteManifold {
    let mut trip = Vec::with_capacity(4 * edges.len());
    let mut adjacency = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        trip.push((e.a, e.a, e.conductance));
        trip.push((e.b, e.b, e.conductance));
        trip.push((e.a, e.b, -e.conductance));
        trip.push((e.b, e.a, -e.conductance));
        adjacency[e.a].push((e.b, k));
        adjacency[e.b].push((e.a, k));
    }
    let kind = if dim == 1 { "cycle" } else { "torus" };
    let id = format!("{kind}-{n}-{:016x}", spec.fingerprint());
    DiscreteManifold {
        id,
        dim,
        spec: spec.clone(),
        stiffness: CsrMatrix::from_triplets(n, n, &trip),
        mass,
        coords,
        edges,
        adjacency,
    }
}

impl DiscreteManifold {
    pub fn vertex_count(&self) -> usize {
        self.mass.len()
    }

    pub fn volume(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Shortest edge length; sets the explicit time-step bound.
    pub fn min_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    /// Gershgorin bound on the largest eigenvalue of `M⁻¹K`.
    pub fn spectral_upper_bound(&self) -> f64 {
        (0..self.vertex_count())
            .map(|v| 2.0 * self.stiffness.get(v, v) / self.mass[v])
            .fold(0.0, f64::max)
    }

    /// `K − λM` as a sparse matrix.
    pub fn shifted_operator(&self, lambda: f64) -> CsrMatrix<f64> {
        let mut trip = self.stiffness.triplets();
        for (v, m) in self.mass.iter().enumerate() {
            trip.push((v, v, -lambda * m));
        }
        CsrMatrix::from_triplets(self.vertex_count(), self.vertex_count(), &trip)
    }

    /// Closed-form spectrum of the uniform discrete cycle, ascending.
    pub fn uniform_cycle_spectrum(n: usize, circumference: f64) -> Vec<f64> {
        let h = circumference / n as f64;
        let mut vals: Vec<f64> = (0..n)
            .map(|k| {
                let s = (PI * k as f64 / n as f64).sin();
                4.0 / (h * h) * s * s
            })
            .collect();
        vals.sort_by(f64::total_cmp);
        vals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_cycle_matches_closed_form() {
        let n = 8;
        let man = build_manifold(&GeometrySpec::uniform_cycle(n, 2.0 * PI)).unwrap();
        let basis = eigendecompose(&man, n).unwrap();
        let expected = DiscreteManifold::uniform_cycle_spectrum(n, 2.0 * PI);
        for (a, b) in basis.lambdas.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_metric_sample_is_rejected() {
        let mut metric = vec![1.0; 8];
        metric[3] = 0.0;
        let spec = GeometrySpec::Cycle {
            n: 8,
            circumference: 1.0,
            metric,
        };
        assert!(matches!(build_manifold(&spec), Err(Error::InvalidGeometry(_))));
        assert!(build_manifold(&GeometrySpec::uniform_cycle(7, 1.0)).is_err());
    }

    #[test]
    fn torus_kernel_is_constant() {
        let man = build_manifold(&GeometrySpec::uniform_torus(8, 8, 1.0, 1.0)).unwrap();
        let basis = eigendecompose(&man, 3).unwrap();
        assert!(basis.lambdas[0].abs() < 1e-12);
        assert!(basis.lambdas[1] > 1e-3);
        let c = 1.0 / man.volume().sqrt();
        assert!(basis.modes.column(0).iter().all(|v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn volume_and_symmetry() {
        let spec = GeometrySpec::torus_with_factor(10, 12, 2.0, 3.0, |x, y| 1.0 + 0.3 * (x * PI).sin() * (y).cos());
        let man = build_manifold(&spec).unwrap();
        assert!(man.stiffness.is_symmetric(0.0));
        let row_sums: f64 = (0..man.vertex_count())
            .map(|r| man.stiffness.row(r).map(|(_, v)| v).sum::<f64>().abs())
            .sum();
        assert!(row_sums < 1e-12);
        let spec = GeometrySpec::cycle_with_profile(16, 3.0, |x| 1.0 + 0.5 * x.sin());
        let man = build_manifold(&spec).unwrap();
        let length: f64 = man.edges.iter().map(|e| e.length).sum();
        assert!((man.volume() - length).abs() < 1e-12);
    }
}
