//! Direct solvers for fields with prescribed jumps across Σ. These use the
//! whole manifold and serve as ground truth for the data-only procedures.
//!
//! Every Σ vertex carries two values, `u₊` (outside copy) and `u₋` (enclosed
//! copy). The jump conditions are `u₊ − u₋ = f` and
//! `P_λ(u₊) + Q_λ(u₋) = w·h`, where `P`, `Q` are the one-sided stencil
//! halves of [`SigmaStencil`](crate::manifold::SigmaStencil). Eliminating the
//! duplicates through the average `ū = (u₊ + u₋)/2` gives
//! `(K − λM)ū = W h + F f` on the plain vertex set, which is what the time
//! integrator advances.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{BandLu, CsrMatrix};
use crate::manifold::{DiscreteManifold, EigenBasis, Hypersurface, Side};
use crate::signal::SourceSignal;

#[derive(Debug, Clone, Default)]
pub struct FrequencyOptions {
    /// Eigenvalues to keep away from; skipped when absent.
    pub spectrum: Option<Vec<f64>>,
    /// Minimal admissible distance to `spectrum`; defaults to
    /// `1e-6·λ_max`.
    pub delta_gap: Option<f64>,
}

/// Frequency-domain field with both Σ copies.
#[derive(Debug, Clone)]
pub struct Field {
    pub lambda: f64,
    /// Vertex values; Σ vertices hold the outside copy `u₊`.
    pub plus: Vec<f64>,
    /// Enclosed copies `u₋`, indexed by Σ position.
    pub minus_sigma: Vec<f64>,
    /// Relative residual of the duplicated-node system.
    pub residual: f64,
}

impl Field {
    pub fn plus_trace(&self, sigma: &Hypersurface) -> Vec<f64> {
        sigma.vertices.iter().map(|&x| self.plus[x]).collect()
    }

    pub fn minus_trace(&self) -> Vec<f64> {
        self.minus_sigma.clone()
    }

    /// Vertex values with the enclosed copies on Σ.
    pub fn minus_view(&self, sigma: &Hypersurface) -> Vec<f64> {
        let mut u = self.plus.clone();
        for (s, &x) in sigma.vertices.iter().enumerate() {
            u[x] = self.minus_sigma[s];
        }
        u
    }

    pub fn plus_derivative(&self, sigma: &Hypersurface) -> Vec<f64> {
        sigma
            .stencils
            .iter()
            .map(|st| st.plus_derivative(&self.plus, self.lambda))
            .collect()
    }

    pub fn minus_derivative(&self, sigma: &Hypersurface) -> Vec<f64> {
        let u = self.minus_view(sigma);
        sigma
            .stencils
            .iter()
            .map(|st| st.minus_derivative(&u, self.lambda))
            .collect()
    }
}

fn check_gap(man: &DiscreteManifold, lambda: f64, opts: &FrequencyOptions) -> Result<()> {
    if let Some(spec) = &opts.spectrum {
        let delta = opts.delta_gap.unwrap_or(1e-6 * man.spectral_upper_bound());
        let gap = spec.iter().map(|l| (l - lambda).abs()).fold(f64::INFINITY, f64::min);
        if gap < delta {
            return Err(Error::NearSpectrum { lambda, gap });
        }
    }
    Ok(())
}

/// Solves the duplicated-node transmission system with jumps `f` (values)
/// and `h` (normal derivatives) at spectral parameter `λ`.
pub fn solve_transmission_frequency(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    f: &[f64],
    h: &[f64],
    lambda: f64,
    opts: &FrequencyOptions,
) -> Result<Field> {
    let (n, s) = (man.vertex_count(), sigma.len());
    if f.len() != s || h.len() != s {
        return Err(Error::DimensionMismatch {
            what: "jump densities",
            expected: s,
            got: f.len().min(h.len()),
        });
    }
    if man.id != sigma.manifold_id {
        return Err(Error::ManifoldMismatch(man.id.clone(), sigma.manifold_id.clone()));
    }
    check_gap(man, lambda, opts)?;

    // Unknowns 0..n are vertex values (outside copies on Σ); n+s is the
    // enclosed copy of Σ position s.
    let copy_for = |v: usize, side: Side| match (sigma.sigma_index(v), side) {
        (Some(idx), Side::Minus) => n + idx,
        _ => v,
    };
    let mut trip = Vec::with_capacity(6 * n);
    let mut rhs = vec![0.0; n + s];
    for v in 0..n {
        let Some(side) = sigma.side_of(v) else { continue };
        let mut diag = -lambda * man.mass[v];
        for &(u, e) in &man.adjacency[v] {
            let c = man.edges[e].conductance;
            diag += c;
            trip.push((v, copy_for(u, side), -c));
        }
        trip.push((v, v, diag));
    }
    for (idx, st) in sigma.stencils.iter().enumerate() {
        let (x, minus) = (st.vertex, n + idx);
        trip.push((x, x, 1.0));
        trip.push((x, minus, -1.0));
        rhs[x] = f[idx];

        let row = minus;
        let mut diag_plus = -0.5 * lambda * st.mass;
        let mut diag_minus = -0.5 * lambda * st.mass;
        for &(y, c) in &st.plus {
            diag_plus += c;
            trip.push((row, y, -c));
        }
        for &(y, c) in &st.minus {
            diag_minus += c;
            trip.push((row, y, -c));
        }
        for &(y, c) in &st.tangential {
            let yi = sigma.sigma_index(y).expect("tangential neighbour on Σ");
            diag_plus += 0.5 * c;
            diag_minus += 0.5 * c;
            trip.push((row, y, -0.5 * c));
            trip.push((row, n + yi, -0.5 * c));
        }
        trip.push((row, x, diag_plus));
        trip.push((row, minus, diag_minus));
        rhs[row] = st.weight * h[idx];
    }
    let a = CsrMatrix::from_triplets(n + s, n + s, &trip);
    let lu = BandLu::factor(&a).map_err(|e| match e {
        Error::Singular(_) => Error::NearSpectrum { lambda, gap: 0.0 },
        other => other,
    })?;
    let sol = lu.solve(&rhs);
    let ax = a.mul_vec(&sol);
    let res = ax.iter().zip(&rhs).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let scale = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    Ok(Field {
        lambda,
        plus: sol[..n].to_vec(),
        minus_sigma: sol[n..].to_vec(),
        residual: if scale > f64::MIN_POSITIVE { res / scale } else { res },
    })
}

/// Layer operators built from a known eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Single layer `S`: trace of the field generated by a derivative jump.
    Single,
    /// Mid-value double layer `D°`.
    Double,
    /// Mid-value normal derivative of the single layer, `J°`.
    NormalSingle,
}

#[derive(Debug, Clone)]
pub struct LayerPotential {
    pub values: Vec<f64>,
    /// Set when the normal-derivative series was cut short of the full
    /// basis, where it does not converge in the continuum limit.
    pub non_convergent: bool,
}

/// Normal-derivative traces `P_{λ_j}(φ_j)/w` of each mode, computed from the
/// manifold directly. Rows are modes.
pub fn normal_traces(basis: &EigenBasis, sigma: &Hypersurface) -> DMatrix<f64> {
    DMatrix::from_fn(basis.len(), sigma.len(), |j, s| {
        sigma.stencils[s].plus_derivative(basis.mode(j), basis.lambdas[j])
    })
}

pub fn layer_potentials(
    basis: &EigenBasis,
    sigma: &Hypersurface,
    density: &[f64],
    lambda: f64,
    kind: LayerKind,
) -> Result<LayerPotential> {
    let s = sigma.len();
    if density.len() != s {
        return Err(Error::DimensionMismatch {
            what: "layer density",
            expected: s,
            got: density.len(),
        });
    }
    let gap = basis.lambdas.iter().map(|l| (l - lambda).abs()).fold(f64::INFINITY, f64::min);
    if gap == 0.0 {
        return Err(Error::NearSpectrum { lambda, gap });
    }
    let traces = DMatrix::from_fn(basis.len(), s, |j, k| basis.modes[(sigma.vertices[k], j)]);
    let normals = normal_traces(basis, sigma);
    let (outer, inner) = match kind {
        LayerKind::Single => (&traces, &traces),
        LayerKind::Double => (&traces, &normals),
        LayerKind::NormalSingle => (&normals, &traces),
    };
    let mut values = vec![0.0; s];
    for j in 0..basis.len() {
        let pairing: f64 = (0..s).map(|k| inner[(j, k)] * density[k] * sigma.weights[k]).sum();
        let coeff = pairing / (basis.lambdas[j] - lambda);
        for k in 0..s {
            values[k] += outer[(j, k)] * coeff;
        }
    }
    let full = basis.len() == basis.modes.nrows();
    Ok(LayerPotential {
        values,
        non_convergent: !full && kind != LayerKind::Single,
    })
}

/// Integrator for the time-domain oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit, second order, conditionally stable.
    #[default]
    Leapfrog,
    /// Trapezoidal (average acceleration) rule, unconditionally stable.
    ImplicitMidpoint,
}

#[derive(Debug, Clone)]
pub struct TimeOptions {
    /// Defaults to the earlier of the two source starts.
    pub t_start: Option<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    /// `dt ≤ cfl·(shortest edge)` is required for the explicit scheme.
    pub cfl: f64,
    pub integrator: Integrator,
}

impl TimeOptions {
    pub fn new(t_end: f64, dt: f64) -> Self {
        Self {
            t_start: None,
            t_end,
            dt,
            record_every: 1,
            cfl: 0.5,
            integrator: Integrator::Leapfrog,
        }
    }
}

/// Recorded history of a time-domain transmission solve.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    pub t0: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Averaged field `ū` per recorded step.
    pub frames: Vec<Vec<f64>>,
    /// Discrete energy per recorded step.
    pub energies: Vec<f64>,
    pub sigma_vertices: Vec<usize>,
    pub value_jump: Option<SourceSignal>,
}

impl SpaceTimeField {
    pub fn frame_time(&self, k: usize) -> f64 {
        self.t0 + (k * self.record_every) as f64 * self.dt
    }

    /// Index of the recorded frame closest to `t`.
    pub fn frame_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / (self.dt * self.record_every as f64)).round();
        (k.max(0.0) as usize).min(self.frames.len() - 1)
    }

    fn jump_at(&self, k: usize) -> Vec<f64> {
        match &self.value_jump {
            Some(f) => f.value_at(self.frame_time(k)),
            None => vec![0.0; self.sigma_vertices.len()],
        }
    }

    pub fn average_trace(&self, k: usize) -> Vec<f64> {
        self.sigma_vertices.iter().map(|&x| self.frames[k][x]).collect()
    }

    pub fn plus_trace(&self, k: usize) -> Vec<f64> {
        let f = self.jump_at(k);
        self.average_trace(k).iter().zip(&f).map(|(u, f)| u + 0.5 * f).collect()
    }

    pub fn minus_trace(&self, k: usize) -> Vec<f64> {
        let f = self.jump_at(k);
        self.average_trace(k).iter().zip(&f).map(|(u, f)| u - 0.5 * f).collect()
    }

    /// Frame with both Σ copies: vertex values (outside copies on Σ)
    /// followed by the enclosed copies.
    pub fn duplicated_frame(&self, k: usize) -> Vec<f64> {
        let mut out = self.frames[k].clone();
        let plus = self.plus_trace(k);
        for (s, &x) in self.sigma_vertices.iter().enumerate() {
            out[x] = plus[s];
        }
        out.extend(self.minus_trace(k));
        out
    }

    /// `(φ_j, ū)` in the mass inner product for every mode of `basis`.
    pub fn modal_projection(&self, basis: &EigenBasis, mass: &[f64], k: usize) -> Vec<f64> {
        let weighted: Vec<f64> = self.frames[k].iter().zip(mass).map(|(u, m)| u * m).collect();
        (0..basis.len())
            .map(|j| basis.mode(j).iter().zip(&weighted).map(|(p, q)| p * q).sum())
            .collect()
    }
}

/// Sparse representation of the load `W h + F f` on vertices.
struct JumpLoads {
    /// (vertex, Σ position, coefficient) for the value jump.
    value: Vec<(usize, usize, f64)>,
    /// (vertex, Σ position, weight) for the derivative jump.
    derivative: Vec<(usize, usize, f64)>,
}

impl JumpLoads {
    fn new(sigma: &Hypersurface) -> Self {
        let mut value = Vec::new();
        let mut derivative = Vec::new();
        for (idx, st) in sigma.stencils.iter().enumerate() {
            derivative.push((st.vertex, idx, st.weight));
            value.push((st.vertex, idx, -0.5 * (st.conductance_plus() - st.conductance_minus())));
            for &(y, c) in &st.plus {
                value.push((y, idx, 0.5 * c));
            }
            for &(y, c) in &st.minus {
                value.push((y, idx, -0.5 * c));
            }
        }
        Self { value, derivative }
    }

    fn load(&self, f: &[f64], h: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(v, s, c) in &self.value {
            out[v] += c * f[s];
        }
        for &(v, s, w) in &self.derivative {
            out[v] += w * h[s];
        }
    }
}

pub fn solve_transmission_time(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    f: Option<&SourceSignal>,
    h: Option<&SourceSignal>,
    opts: &TimeOptions,
) -> Result<SpaceTimeField> {
    let (n, s) = (man.vertex_count(), sigma.len());
    for sig in [f, h].into_iter().flatten() {
        if sig.width() != s {
            return Err(Error::DimensionMismatch {
                what: "source width",
                expected: s,
                got: sig.width(),
            });
        }
    }
    let dt = opts.dt;
    if !(dt > 0.0) || opts.record_every == 0 {
        return Err(Error::OutOfRange(format!("time step {dt}, record stride {}", opts.record_every)));
    }
    if opts.integrator == Integrator::Leapfrog {
        let bound = opts.cfl * man.min_edge_length();
        let stable = 2.0 / man.spectral_upper_bound().sqrt();
        if dt > bound || dt >= stable {
            return Err(Error::Cfl { dt, bound: bound.min(stable) });
        }
    }
    let starts = [f, h].into_iter().flatten().map(|s| s.t_start);
    let t0 = opts.t_start.unwrap_or_else(|| starts.fold(f64::INFINITY, f64::min));
    let t0 = if t0.is_finite() { t0 } else { 0.0 };
    let steps = ((opts.t_end - t0) / dt).round().max(0.0) as usize;

    let loads = JumpLoads::new(sigma);
    let mut fbuf = vec![0.0; s];
    let mut hbuf = vec![0.0; s];
    let mut force_at = |t: f64, out: &mut [f64]| {
        match f {
            Some(sig) => sig.value_into(t, &mut fbuf),
            None => fbuf.iter_mut().for_each(|v| *v = 0.0),
        }
        match h {
            Some(sig) => sig.value_into(t, &mut hbuf),
            None => hbuf.iter_mut().for_each(|v| *v = 0.0),
        }
        loads.load(&fbuf, &hbuf, out);
    };

    let k = &man.stiffness;
    let m = &man.mass;
    let mut frames = Vec::new();
    let mut energies = Vec::new();
    let mut force = vec![0.0; n];
    let mut force_prev = vec![0.0; n];
    let mut force_next = vec![0.0; n];
    let mut ku = vec![0.0; n];
    let energy = |prev: &[f64], next: &[f64], ku_prev: &[f64], implicit: bool| -> f64 {
        let kinetic: f64 = prev
            .iter()
            .zip(next)
            .zip(m)
            .map(|((a, b), mm)| {
                let v = (b - a) / dt;
                mm * v * v
            })
            .sum();
        let potential: f64 = if implicit {
            let mid: Vec<f64> = prev.iter().zip(next).map(|(a, b)| 0.5 * (a + b)).collect();
            let kmid = k.mul_vec(&mid);
            mid.iter().zip(&kmid).map(|(a, b)| a * b).sum()
        } else {
            next.iter().zip(ku_prev).map(|(a, b)| a * b).sum()
        };
        0.5 * (kinetic + potential)
    };

    let mut u = vec![0.0; n];
    let mut u_prev;
    match opts.integrator {
        Integrator::Leapfrog => {
            force_at(t0, &mut force);
            u_prev = force.iter().zip(m).map(|(fv, mm)| 0.5 * dt * dt * fv / mm).collect::<Vec<f64>>();
            for step in 0..=steps {
                let t = t0 + step as f64 * dt;
                force_at(t, &mut force);
                k.mul_vec_into(&u, &mut ku);
                let next: Vec<f64> = (0..n)
                    .map(|i| {
                        if step == 0 {
                            // Taylor start from rest.
                            u[i] + 0.5 * dt * dt * (force[i] - ku[i]) / m[i]
                        } else {
                            2.0 * u[i] - u_prev[i] + dt * dt * (force[i] - ku[i]) / m[i]
                        }
                    })
                    .collect();
                if step % opts.record_every == 0 {
                    frames.push(u.clone());
                    energies.push(energy(&u, &next, &ku, false));
                }
                u_prev = core::mem::replace(&mut u, next);
            }
        }
        Integrator::ImplicitMidpoint => {
            let q = dt * dt / 4.0;
            let mut trip: Vec<(usize, usize, f64)> = k.triplets().into_iter().map(|(r, c, v)| (r, c, q * v)).collect();
            for (i, mm) in m.iter().enumerate() {
                trip.push((i, i, *mm));
            }
            let lu = BandLu::factor(&CsrMatrix::from_triplets(n, n, &trip))?;
            u_prev = vec![0.0; n];
            force_at(t0 - dt, &mut force_prev);
            force_at(t0, &mut force);
            for step in 0..=steps {
                let t = t0 + step as f64 * dt;
                force_at(t + dt, &mut force_next);
                let combo: Vec<f64> = (0..n).map(|i| 2.0 * u[i] + u_prev[i]).collect();
                let kc = k.mul_vec(&combo);
                let rhs: Vec<f64> = (0..n)
                    .map(|i| {
                        m[i] * (2.0 * u[i] - u_prev[i]) - q * kc[i]
                            + q * (force_next[i] + 2.0 * force[i] + force_prev[i])
                    })
                    .collect();
                let next = lu.solve(&rhs);
                if step % opts.record_every == 0 {
                    frames.push(u.clone());
                    energies.push(energy(&u, &next, &ku, true));
                }
                u_prev = core::mem::replace(&mut u, next);
                core::mem::swap(&mut force_prev, &mut force);
                core::mem::swap(&mut force, &mut force_next);
            }
        }
    }

    Ok(SpaceTimeField {
        t0,
        dt,
        record_every: opts.record_every,
        frames,
        energies,
        sigma_vertices: sigma.vertices.clone(),
        value_jump: f.cloned(),
    })
}
