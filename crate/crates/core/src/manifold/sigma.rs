use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{DiscreteManifold, GeometrySpec};
use crate::error::{Error, Result};

/// One hypersurface component: its vertices and one vertex of the region it
/// encloses (the `S_i` side).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub vertices: Vec<usize>,
    pub seed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexLabel {
    /// On component `component`, at position `index` of the flattened Σ.
    Sigma { component: usize, index: usize },
    /// Enclosed by component `i`.
    Inside(usize),
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Enclosed side, where the normal points.
    Minus,
    Plus,
}

/// Split of the stiffness row at one Σ vertex into its two one-sided halves.
///
/// With `P_λ(u) = Σ_plus c(u_x − u_y) + ½ Σ_tang c(u_x − u_y) − ½λ m u_x`
/// and `Q_λ` the same over minus neighbours, `P + Q` is exactly row `x` of
/// `(K − λM)u`. The one-sided normal derivatives are `P/w` (plus side) and
/// `−Q/w` (minus side), with the normal pointing into the enclosed side.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStencil {
    pub vertex: usize,
    pub component: usize,
    pub plus: Vec<(usize, f64)>,
    pub minus: Vec<(usize, f64)>,
    pub tangential: Vec<(usize, f64)>,
    pub mass: f64,
    pub weight: f64,
}

impl SigmaStencil {
    fn half_flux(&self, own: &[(usize, f64)], ux: f64, u: impl Fn(usize) -> f64, lambda: f64) -> f64 {
        let normal: f64 = own.iter().map(|&(y, c)| c * (ux - u(y))).sum();
        let tangential: f64 = self.tangential.iter().map(|&(y, c)| c * (ux - u(y))).sum();
        normal + 0.5 * tangential - 0.5 * lambda * self.mass * ux
    }

    /// `P_λ` with the Σ values (this vertex and tangential neighbours) taken
    /// from `u` as well.
    pub fn plus_flux(&self, u: &[f64], lambda: f64) -> f64 {
        self.half_flux(&self.plus, u[self.vertex], |y| u[y], lambda)
    }

    pub fn minus_flux(&self, u: &[f64], lambda: f64) -> f64 {
        self.half_flux(&self.minus, u[self.vertex], |y| u[y], lambda)
    }

    /// Plus-side normal derivative of a globally defined vertex function.
    pub fn plus_derivative(&self, u: &[f64], lambda: f64) -> f64 {
        self.plus_flux(u, lambda) / self.weight
    }

    pub fn minus_derivative(&self, u: &[f64], lambda: f64) -> f64 {
        -self.minus_flux(u, lambda) / self.weight
    }

    pub fn conductance_plus(&self) -> f64 {
        self.plus.iter().map(|p| p.1).sum()
    }

    pub fn conductance_minus(&self) -> f64 {
        self.minus.iter().map(|p| p.1).sum()
    }
}

/// A hypersurface realized as a vertex separator with its two-sided
/// stencils and quadrature weights.
#[derive(Debug, Clone)]
pub struct Hypersurface {
    pub manifold_id: String,
    pub components: Vec<Vec<usize>>,
    pub seeds: Vec<usize>,
    /// All Σ vertices, components concatenated in order.
    pub vertices: Vec<usize>,
    pub labels: Vec<VertexLabel>,
    pub stencils: Vec<SigmaStencil>,
    pub weights: Vec<f64>,
    /// Intrinsic coordinates of the Σ vertices.
    pub coords: Vec<Vec<f64>>,
}

impl Hypersurface {
    pub fn carve(man: &DiscreteManifold, spec: &[ComponentSpec]) -> Result<Self> {
        let n = man.vertex_count();
        if spec.is_empty() {
            return Err(Error::InvalidHypersurface("no components given".into()));
        }
        let mut owner = vec![usize::MAX; n];
        for (ci, comp) in spec.iter().enumerate() {
            if comp.vertices.is_empty() {
                return Err(Error::InvalidHypersurface(format!("component {ci} is empty")));
            }
            for &v in &comp.vertices {
                if v >= n {
                    return Err(Error::InvalidHypersurface(format!("vertex {v} out of range (n = {n})")));
                }
                if owner[v] != usize::MAX {
                    return Err(Error::InvalidHypersurface(format!(
                        "vertex {v} listed twice (components {} and {ci})",
                        owner[v]
                    )));
                }
                owner[v] = ci;
            }
        }
        for (ci, comp) in spec.iter().enumerate() {
            for &v in &comp.vertices {
                for &(u, _) in &man.adjacency[v] {
                    if owner[u] != usize::MAX && owner[u] != ci {
                        return Err(Error::InvalidHypersurface(format!(
                            "components {ci} and {} touch at vertices {v}, {u}",
                            owner[u]
                        )));
                    }
                }
            }
        }

        let mut labels = vec![VertexLabel::Outside; n];
        let mut index = 0;
        for (ci, comp) in spec.iter().enumerate() {
            for &v in &comp.vertices {
                labels[v] = VertexLabel::Sigma { component: ci, index };
                index += 1;
            }
        }
        for (ci, comp) in spec.iter().enumerate() {
            let seed = comp.seed;
            if seed >= n || owner[seed] != usize::MAX {
                return Err(Error::InvalidHypersurface(format!(
                    "seed {seed} of component {ci} must be a vertex off the hypersurface"
                )));
            }
            let region = flood(man, seed, |v| owner[v] == ci);
            if let Some(&v) = region.iter().find(|&&v| owner[v] != usize::MAX) {
                return Err(Error::InvalidHypersurface(format!(
                    "region of component {ci} reaches component {} at vertex {v}",
                    owner[v]
                )));
            }
            let free = (0..n).filter(|&v| owner[v] != ci).count();
            if region.len() == free {
                return Err(Error::InvalidHypersurface(format!(
                    "component {ci} does not separate its seed {seed} from the rest"
                )));
            }
            for v in region {
                if let VertexLabel::Inside(other) = labels[v] {
                    return Err(Error::InvalidHypersurface(format!(
                        "regions of components {other} and {ci} overlap"
                    )));
                }
                labels[v] = VertexLabel::Inside(ci);
            }
        }

        let vertices: Vec<usize> = spec.iter().flat_map(|c| c.vertices.iter().copied()).collect();
        let mut stencils = Vec::with_capacity(vertices.len());
        for &x in &vertices {
            let ci = owner[x];
            let mut st = SigmaStencil {
                vertex: x,
                component: ci,
                plus: Vec::new(),
                minus: Vec::new(),
                tangential: Vec::new(),
                mass: man.mass[x],
                weight: 0.0,
            };
            for &(y, e) in &man.adjacency[x] {
                let c = man.edges[e].conductance;
                match labels[y] {
                    VertexLabel::Sigma { .. } => st.tangential.push((y, c)),
                    VertexLabel::Inside(_) => st.minus.push((y, c)),
                    VertexLabel::Outside => st.plus.push((y, c)),
                }
            }
            if st.minus.is_empty() || st.plus.is_empty() {
                return Err(Error::InvalidHypersurface(format!(
                    "vertex {x} of component {ci} lacks a neighbour on one side"
                )));
            }
            st.weight = surface_weight(man, x, &st)?;
            stencils.push(st);
        }
        let weights = stencils.iter().map(|s| s.weight).collect();
        let coords = vertices.iter().map(|&x| man.coords[x][..man.dim].to_vec()).collect();
        Ok(Self {
            manifold_id: man.id.clone(),
            components: spec.iter().map(|c| c.vertices.clone()).collect(),
            seeds: spec.iter().map(|c| c.seed).collect(),
            vertices,
            labels,
            stencils,
            weights,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Positions of component `i` inside the flattened Σ.
    pub fn component_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.components[..i].iter().map(Vec::len).sum();
        start..start + self.components[i].len()
    }

    pub fn side_of(&self, v: usize) -> Option<Side> {
        match self.labels[v] {
            VertexLabel::Sigma { .. } => None,
            VertexLabel::Inside(_) => Some(Side::Minus),
            VertexLabel::Outside => Some(Side::Plus),
        }
    }

    pub fn sigma_index(&self, v: usize) -> Option<usize> {
        match self.labels[v] {
            VertexLabel::Sigma { index, .. } => Some(index),
            _ => None,
        }
    }

    pub fn component_specs(&self) -> Vec<ComponentSpec> {
        self.components
            .iter()
            .zip(&self.seeds)
            .map(|(v, &s)| ComponentSpec {
                vertices: v.clone(),
                seed: s,
            })
            .collect()
    }
}

fn flood(man: &DiscreteManifold, seed: usize, blocked: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut seen = vec![false; man.vertex_count()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen[seed] = true;
    queue.push_back(seed);
    while let Some(v) = queue.pop_front() {
        out.push(v);
        for &(u, _) in &man.adjacency[v] {
            if !seen[u] && !blocked(u) {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    out.sort_unstable();
    out
}

fn surface_weight(man: &DiscreteManifold, x: usize, st: &SigmaStencil) -> Result<f64> {
    match &man.spec {
        GeometrySpec::Cycle { .. } => Ok(1.0),
        GeometrySpec::Torus { nx, ny, lx, ly, conformal } => {
            let (hx, hy) = (lx / *nx as f64, ly / *ny as f64);
            // Cross-section transverse to each edge into the enclosed side.
            let across = |y: usize| if y % nx != x % nx { hy } else { hx };
            let w: f64 = st.minus.iter().map(|&(y, _)| across(y)).sum::<f64>() * conformal[x].sqrt();
            if w > 0.0 {
                Ok(w)
            } else {
                Err(Error::InvalidHypersurface(format!("vertex {x} has zero surface weight")))
            }
        }
    }
}

/// Square ring around the interior block `[i0, i0+a) × [j0, j0+b)` of a
/// torus: the four sides at distance one from the block, corners excluded.
pub fn square_ring(man: &DiscreteManifold, i0: usize, j0: usize, a: usize, b: usize) -> Result<ComponentSpec> {
    let GeometrySpec::Torus { nx, ny, .. } = man.spec else {
        return Err(Error::InvalidHypersurface("square rings need a torus".into()));
    };
    if a == 0 || b == 0 || a + 2 >= nx || b + 2 >= ny {
        return Err(Error::InvalidHypersurface(format!("ring block {a}×{b} does not fit a {nx}×{ny} torus")));
    }
    let id = |i: isize, j: isize| {
        let i = i.rem_euclid(nx as isize) as usize;
        let j = j.rem_euclid(ny as isize) as usize;
        j * nx + i
    };
    let (i0, j0, a, b) = (i0 as isize, j0 as isize, a as isize, b as isize);
    let mut vertices = Vec::new();
    for i in i0..i0 + a {
        vertices.push(id(i, j0 - 1));
    }
    for j in j0..j0 + b {
        vertices.push(id(i0 + a, j));
    }
    for i in (i0..i0 + a).rev() {
        vertices.push(id(i, j0 + b));
    }
    for j in (j0..j0 + b).rev() {
        vertices.push(id(i0 - 1, j));
    }
    Ok(ComponentSpec {
        vertices,
        seed: id(i0, j0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, GeometrySpec};

    fn cycle(n: usize) -> DiscreteManifold {
        build_manifold(&GeometrySpec::uniform_cycle(n, 1.0)).unwrap()
    }

    #[test]
    fn cycle_pair_encloses_arc() {
        let man = cycle(16);
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![0, 8], seed: 3 }]).unwrap();
        for v in 1..8 {
            assert_eq!(sigma.labels[v], VertexLabel::Inside(0));
        }
        for v in 9..16 {
            assert_eq!(sigma.labels[v], VertexLabel::Outside);
        }
        for st in &sigma.stencils {
            assert_eq!((st.plus.len(), st.minus.len()), (1, 1));
            assert_eq!(st.weight, 1.0);
        }
    }

    #[test]
    fn stencil_halves_sum_to_row() {
        let spec = GeometrySpec::torus_with_factor(12, 12, 1.0, 1.0, |x, y| 1.2 + (6.0 * x).sin() * (3.0 * y).cos() * 0.3);
        let man = build_manifold(&spec).unwrap();
        let ring = square_ring(&man, 4, 4, 3, 2).unwrap();
        let sigma = Hypersurface::carve(&man, &[ring]).unwrap();
        let u: Vec<f64> = (0..man.vertex_count()).map(|v| (v as f64 * 0.7).sin()).collect();
        let lambda = 3.5;
        let row = man.shifted_operator(lambda).mul_vec(&u);
        for st in &sigma.stencils {
            let sum = st.plus_flux(&u, lambda) + st.minus_flux(&u, lambda);
            assert!((sum - row[st.vertex]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_grid_circle_is_rejected() {
        let man = build_manifold(&GeometrySpec::uniform_torus(16, 16, 1.0, 1.0)).unwrap();
        let circle: Vec<usize> = (0..16).map(|i| 5 * 16 + i).collect();
        let err = Hypersurface::carve(&man, &[ComponentSpec { vertices: circle, seed: 0 }]);
        assert!(err.is_err());
        let diagonal: Vec<usize> = (0..16).map(|i| i * 16 + i).collect();
        assert!(Hypersurface::carve(&man, &[ComponentSpec { vertices: diagonal, seed: 1 }]).is_err());
    }

    #[test]
    fn two_circles_bound_a_band() {
        let man = build_manifold(&GeometrySpec::uniform_torus(16, 16, 1.0, 1.0)).unwrap();
        let mut band: Vec<usize> = (0..16).map(|i| 3 * 16 + i).collect();
        band.extend((0..16).map(|i| 9 * 16 + i));
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: band, seed: 5 * 16 }]).unwrap();
        let inside = sigma.labels.iter().filter(|l| matches!(l, VertexLabel::Inside(0))).count();
        assert_eq!(inside, 5 * 16);
    }

    #[test]
    fn overlapping_or_touching_components_rejected() {
        let man = cycle(16);
        let a = ComponentSpec { vertices: vec![0, 3], seed: 1 };
        let b = ComponentSpec { vertices: vec![3, 8], seed: 5 };
        assert!(Hypersurface::carve(&man, &[a.clone(), b]).is_err());
        let c = ComponentSpec { vertices: vec![4, 8], seed: 5 };
        assert!(Hypersurface::carve(&man, &[a, c]).is_err());
    }
}
