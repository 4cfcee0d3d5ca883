//! Ground-truth computations that need the manifold itself. Only the test
//! mode of the driver and the test suites call into here.


use ispec_core::manifold::{region_vertices, DiscreteManifold, Hypersurface, Region};
use ispec_core::signal::SourceSignal;
use ispec_core::subdomain::region_boundary;
use ispec_core::{Error, Result};
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};

/// Graph geodesic distances from `sources` to every vertex, along edges
/// weighted by their Riemannian length.
pub fn dijkstra_geodesics(man: &DiscreteManifold, sources: &[usize]) -> Vec<Vec<f64>> {
    let mut g = UnGraph::<(), f64>::with_capacity(man.vertex_count(), man.edges.len());
    let nodes: Vec<NodeIndex> = (0..man.vertex_count()).map(|_| g.add_node(())).collect();
    for e in &man.edges {
        g.add_edge(nodes[e.a], nodes[e.b], e.length);
    }
    sources
        .iter()
        .map(|&s| {
            let dist = dijkstra(&g, nodes[s], None, |e| *e.weight());
            (0..man.vertex_count()).map(|v| dist.get(&nodes[v]).copied().unwrap_or(f64::INFINITY)).collect()
        })
        .collect()
}

/// Leapfrog history of the wave in one region driven by Dirichlet data on
/// its boundary part of Σ, from rest.
#[derive(Debug, Clone)]
pub struct SubdomainWave {
    pub region: Region,
    pub vertices: Vec<usize>,
    pub boundary: Vec<usize>,
    pub dt: f64,
    /// Field on `vertices` at every step.
    pub frames: Vec<Vec<f64>>,
}

impl SubdomainWave {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn step_at(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.frames.len() - 1)
    }

    /// Leapfrog-conserved energy between steps `k` and `k+1`; the physical
    /// energy once the boundary data has ended.
    pub fn energy(&self, man: &DiscreteManifold, k: usize) -> f64 {
        let (a, b) = (&self.frames[k], &self.frames[k + 1]);
        let mut local = vec![usize::MAX; man.vertex_count()];
        for (i, &v) in self.vertices.iter().enumerate() {
            local[v] = i;
        }
        let mut kinetic = 0.0;
        let mut potential = 0.0;
        for (i, &v) in self.vertices.iter().enumerate() {
            let vel = (b[i] - a[i]) / self.dt;
            kinetic += man.mass[v] * vel * vel;
            let mut ka = 0.0;
            for (y, c) in man.stiffness.row(v) {
                if local[y] != usize::MAX {
                    ka += c * a[local[y]];
                }
            }
            potential += b[i] * ka;
        }
        0.5 * (kinetic + potential)
    }

    /// `Σ m_v w_v²` at step `k`.
    pub fn mass_norm_sq(&self, man: &DiscreteManifold, k: usize) -> f64 {
        self.vertices.iter().zip(&self.frames[k]).map(|(&v, w)| man.mass[v] * w * w).sum()
    }
}

/// Wave in `region` with boundary values `f` (columns in the dataset's Σ
/// order restricted to the region's boundary part), stepped with `dt` up
/// to `t_end`.
pub fn subdomain_wave(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    region: Region,
    f: &SourceSignal,
    dt: f64,
    t_end: f64,
) -> Result<SubdomainWave> {
    let cols: Vec<usize> = match region_boundary(region) {
        ispec_core::subdomain::SigmaSubset::All => (0..sigma.len()).collect(),
        ispec_core::subdomain::SigmaSubset::Component(i) => sigma.component_range(i).collect(),
        ispec_core::subdomain::SigmaSubset::Components(list) => list.iter().flat_map(|&i| sigma.component_range(i)).collect(),
    };
    let boundary: Vec<usize> = cols.iter().map(|&c| sigma.vertices[c]).collect();
    if f.width() != boundary.len() {
        return Err(Error::DimensionMismatch {
            what: "boundary data width",
            expected: boundary.len(),
            got: f.width(),
        });
    }
    let bound = man.min_edge_length() * 0.5;
    if dt > bound {
        return Err(Error::Cfl { dt, bound });
    }
    let vertices = region_vertices(sigma, region);
    let n = man.vertex_count();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in vertices.iter().enumerate() {
        local[v] = i;
    }
    let mut on_boundary = vec![usize::MAX; n];
    for (i, &v) in boundary.iter().enumerate() {
        on_boundary[v] = i;
    }
    let steps = (t_end / dt).ceil() as usize;
    let mut frames = Vec::with_capacity(steps + 1);
    let mut prev = vec![0.0; vertices.len()];
    let mut cur = vec![0.0; vertices.len()];
    frames.push(cur.clone());
    let mut fb = vec![0.0; boundary.len()];
    for k in 0..steps {
        f.value_into(k as f64 * dt, &mut fb);
        let mut next = vec![0.0; vertices.len()];
        for (i, &v) in vertices.iter().enumerate() {
            let mut kw = 0.0;
            for (y, c) in man.stiffness.row(v) {
                if local[y] != usize::MAX {
                    kw += c * cur[local[y]];
                } else if on_boundary[y] != usize::MAX {
                    kw += c * fb[on_boundary[y]];
                } else {
                    return Err(Error::InvalidHypersurface(format!(
                        "vertex {y} borders region {} without lying on its boundary",
                        region.label()
                    )));
                }
            }
            next[i] = 2.0 * cur[i] - prev[i] - dt * dt * kw / man.mass[v];
        }
        prev = std::mem::replace(&mut cur, next);
        frames.push(cur.clone());
    }
    Ok(SubdomainWave {
        region,
        vertices,
        boundary,
        dt,
        frames,
    })
}

/// Jump of the normal derivative across component `component` of the wave
/// that equals `f` there and solves the boundary problems on both sides,
/// at each of `times`. Rows per time, one column per component vertex.
pub fn interface_jump(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    component: usize,
    f: &SourceSignal,
    dt: f64,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let t_end = times.iter().copied().fold(0.0, f64::max) + 2.0 * dt;
    let inner = subdomain_wave(man, sigma, Region::Inside(component), f, dt, t_end)?;
    let outer = subdomain_wave(man, sigma, Region::Complement(component), f, dt, t_end)?;
    let n = man.vertex_count();
    let mut where_in = vec![usize::MAX; n];
    for (i, &v) in inner.vertices.iter().enumerate() {
        where_in[v] = i;
    }
    let mut where_out = vec![usize::MAX; n];
    for (i, &v) in outer.vertices.iter().enumerate() {
        where_out[v] = i;
    }
    let range = sigma.component_range(component);
    let mut fb = vec![0.0; f.width()];
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let k = inner.step_at(t);
        let tk = inner.time(k);
        let value = |fb: &mut Vec<f64>, s: f64| {
            f.value_into(s, fb);
            fb.clone()
        };
        let (fm, f0, fp) = (value(&mut fb, tk - dt), value(&mut fb, tk), value(&mut fb, tk + dt));
        let row = range
            .clone()
            .enumerate()
            .map(|(a, c)| {
                let x = sigma.vertices[c];
                let mut ku = 0.0;
                for (y, cy) in man.stiffness.row(x) {
                    let uy = if y == x {
                        f0[a]
                    } else if let Some(b) = sigma.sigma_index(y).filter(|b| range.contains(b)) {
                        f0[b - range.start]
                    } else if where_in[y] != usize::MAX {
                        inner.frames[k][where_in[y]]
                    } else {
                        outer.frames[k][where_out[y]]
                    };
                    ku += cy * uy;
                }
                let acc = (fp[a] - 2.0 * f0[a] + fm[a]) / (dt * dt);
                (man.mass[x] * acc + ku) / sigma.weights[c]
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}
