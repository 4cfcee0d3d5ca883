//! Time-domain Green records on Σ×Σ and the spectral data hidden in them.
//!
//! On a closed manifold the Green function with a unit velocity kick at
//! `y` is `G(x,y;t) = c₀ t + Σ_j φ_j(x) φ_j(y) sin(ω_j t)/ω_j`, where
//! `ω_j = √λ_j` and `c₀ t` is the constant mode. Its frequency transform has
//! a pole at each `ω_j` whose residue is the Σ-restricted eigenprojector
//! over `2ω_j`. Poles are recovered with a multichannel matrix pencil, and
//! the residues are factored back into trace rows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{DataKind, DiscreteManifold, Hypersurface, SigmaDescriptor, SpectralDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenRecord {
    pub manifold_id: String,
    pub sigma: SigmaDescriptor,
    /// Record spacing; sample `k` is at `k·dt`.
    pub dt: f64,
    /// `samples[k][x][y]`, response at Σ position `x` to a kick at `y`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

impl GreenRecord {
    pub fn sigma_len(&self) -> usize {
        self.sigma.weights.len()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len().saturating_sub(1) as f64
    }

    /// Zero before the kick, linear interpolation between samples after it.
    pub fn at(&self, t: f64, x: usize, y: usize) -> f64 {
        if t <= 0.0 || self.samples.is_empty() {
            return 0.0;
        }
        let pos = t / self.dt;
        let k = pos.floor() as usize;
        if k + 1 >= self.samples.len() {
            return self.samples.last().map_or(0.0, |s| s[x][y]);
        }
        let th = pos - k as f64;
        (1.0 - th) * self.samples[k][x][y] + th * self.samples[k + 1][x][y]
    }

    /// Largest `|G(x,y) − G(y,x)|` over the record.
    pub fn asymmetry(&self) -> f64 {
        let s = self.sigma_len();
        let mut worst = 0.0f64;
        for frame in &self.samples {
            for x in 0..s {
                for y in 0..x {
                    worst = worst.max((frame[x][y] - frame[y][x]).abs());
                }
            }
        }
        worst
    }
}

/// Leapfrog Green record of the closed manifold, one kick per Σ vertex.
///
/// Steps with `dt`, keeps every `record_every`-th state. Needs the manifold,
/// so it is a ground-truth operation.
pub fn simulate_green(
    man: &DiscreteManifold,
    sigma: &Hypersurface,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<GreenRecord> {
    if man.id != sigma.manifold_id {
        return Err(Error::ManifoldMismatch(man.id.clone(), sigma.manifold_id.clone()));
    }
    let rho = man.spectral_upper_bound();
    let bound = 2.0 / rho.sqrt();
    if !(dt > 0.0 && dt < bound) {
        return Err(Error::Cfl { dt, bound });
    }
    if record_every == 0 {
        return Err(Error::OutOfRange("record_every must be positive".into()));
    }
    let n = man.vertex_count();
    let s = sigma.len();
    let steps = (t_end / dt).round() as usize;
    let frames = steps / record_every + 1;
    let mut samples = vec![vec![vec![0.0; s]; s]; frames];
    let inv_mass: Vec<f64> = man.mass.iter().map(|m| 1.0 / m).collect();
    let mut ku = vec![0.0; n];
    for (col, &y) in sigma.vertices.iter().enumerate() {
        // u(dt) by Taylor: dt·v₀ − dt³/6 · M⁻¹K v₀.
        let mut v0 = vec![0.0; n];
        v0[y] = inv_mass[y];
        man.stiffness.mul_vec_into(&v0, &mut ku);
        let mut prev = vec![0.0; n];
        let mut cur: Vec<f64> = (0..n).map(|i| dt * v0[i] - dt * dt * dt / 6.0 * inv_mass[i] * ku[i]).collect();
        let mut record = |k: usize, u: &[f64]| {
            if k % record_every == 0 && k / record_every < frames {
                for (row, &x) in sigma.vertices.iter().enumerate() {
                    samples[k / record_every][row][col] = u[x];
                }
            }
        };
        record(0, &prev);
        record(1, &cur);
        for k in 1..steps {
            man.stiffness.mul_vec_into(&cur, &mut ku);
            for i in 0..n {
                let next = 2.0 * cur[i] - prev[i] - dt * dt * inv_mass[i] * ku[i];
                prev[i] = cur[i];
                cur[i] = next;
            }
            record(k + 1, &cur);
        }
    }
    Ok(GreenRecord {
        manifold_id: man.id.clone(),
        sigma: SigmaDescriptor {
            components: sigma.components.clone(),
            weights: sigma.weights.clone(),
            coords: sigma.coords.clone(),
        },
        dt: dt * record_every as f64,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    /// `√λ`, zero for the constant mode.
    pub frequency: f64,
    /// Residue of the frequency-domain Green function on Σ×Σ, after
    /// symmetrisation and projection onto the PSD cone.
    pub residue: Vec<Vec<f64>>,
    /// Numerical rank of the residue.
    pub multiplicity: usize,
    /// How far the raw fit was from the PSD cone (spectral norm).
    pub psd_projection: f64,
    /// Closer than the resolution limit to a neighbouring pole.
    pub unresolved: bool,
}

impl Pole {
    pub fn lambda(&self) -> f64 {
        self.frequency * self.frequency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSet {
    pub manifold_id: String,
    pub sigma: SigmaDescriptor,
    /// Ascending frequency; the constant mode first when present.
    pub poles: Vec<Pole>,
    /// Smallest frequency gap the record length resolves.
    pub resolution: f64,
    /// RMS misfit of the fitted model against the record.
    pub fit_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PencilOptions {
    /// Pencil depth; a third of the record when unset. Must exceed twice
    /// the number of frequencies present.
    pub depth: Option<usize>,
    /// Relative singular-value cut for the signal subspace.
    pub rank_tol: f64,
    /// Relative cut for the residue rank.
    pub multiplicity_tol: f64,
    /// Frequencies closer than this (relative) are one pole.
    pub merge_tol: f64,
    /// Resolution constant: gaps below `resolution_const / T` are flagged.
    pub resolution_const: f64,
    /// Cap on channel-samples in the Hankel stack; channels are thinned
    /// evenly beyond it.
    pub max_stack: usize,
}

impl Default for PencilOptions {
    fn default() -> Self {
        Self {
            depth: None,
            rank_tol: 1e-6,
            multiplicity_tol: 1e-6,
            merge_tol: 1e-6,
            resolution_const: 16.0 * core::f64::consts::PI,
            max_stack: 4_000_000,
        }
    }
}

/// Distinct frequencies of a multichannel record of real exponentials,
/// by the matrix pencil on its block Hankel stack.
fn pencil_frequencies(channels: &[Vec<f64>], dt: f64, opts: &PencilOptions) -> Result<Vec<f64>> {
    let len = channels.first().map_or(0, Vec::len);
    let depth = opts.depth.unwrap_or(len / 3).min(len / 2);
    if depth < 2 {
        return Err(Error::OutOfRange(format!("record of {len} samples is too short")));
    }
    let cols = len - depth;
    let stride = (channels.len() * cols).div_ceil(opts.max_stack).max(1);
    let used: Vec<&Vec<f64>> = channels.iter().step_by(stride).collect();
    let mut hankel = DMatrix::zeros(depth + 1, used.len() * cols);
    for (c, ch) in used.iter().enumerate() {
        for n in 0..cols {
            for i in 0..=depth {
                hankel[(i, c * cols + n)] = ch[n + i];
            }
        }
    }
    // Left singular vectors from the Gram matrix: the signal gap is many
    // orders wide, so squaring it costs nothing and keeps the work at
    // `depth²` per column.
    let gram = &hankel * hankel.transpose();
    let (vals, u) = crate::linalg::sorted_symmetric_eigen(&gram);
    let top = vals.iter().copied().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return Ok(Vec::new());
    }
    // Ascending order from the eigensolver; signal columns sit at the end.
    let model: Vec<usize> = (0..vals.len()).rev().filter(|&i| vals[i] > opts.rank_tol * opts.rank_tol * top).collect();
    if model.len() >= depth {
        return Err(Error::OutOfRange(format!(
            "pencil depth {depth} does not exceed the model order {}",
            model.len()
        )));
    }
    let m = model.len();
    let upper = DMatrix::from_fn(depth, m, |i, c| u[(i, model[c])]);
    let lower = DMatrix::from_fn(depth, m, |i, c| u[(i + 1, model[c])]);
    let qr = upper.qr();
    let shift = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * lower))
        .ok_or_else(|| Error::Singular("pencil shift is rank deficient".into()))?;
    let mut freqs: Vec<f64> = shift
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| z.im.atan2(z.re) / dt)
        .collect();
    freqs.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for w in freqs {
        match merged.last_mut() {
            Some(last) if (w - *last).abs() <= opts.merge_tol * w.max(1.0) => {
                // Running mean over the group.
                count += 1;
                *last += (w - *last) / count as f64;
            }
            _ => {
                merged.push(w);
                count = 1;
            }
        }
    }
    Ok(merged)
}

/// Nearest PSD matrix to the symmetric part of `a`, with the symmetric
/// part's eigenvalues.
fn psd_project(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let (vals, vecs) = crate::linalg::sorted_symmetric_eigen(&sym);
    let out = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        (0..vals.len()).map(|k| vecs[(i, k)] * vals[k].max(0.0) * vecs[(j, k)]).sum::<f64>()
    });
    (out, vals.iter().copied().collect())
}

/// Poles and residues of the record's frequency transform.
///
/// The record is second-differenced to drop the affine constant-mode part
/// before the pencil; amplitudes are then fitted on the raw record with
/// `t`, `1`, `cos ω t` and `sin ω t` columns per channel.
pub fn poles_and_residues(record: &GreenRecord, n_max: Option<usize>, opts: &PencilOptions) -> Result<PoleSet> {
    let s = record.sigma_len();
    let len = record.samples.len();
    if len < 8 {
        return Err(Error::OutOfRange(format!("record of {len} samples is too short")));
    }
    let pairs: Vec<(usize, usize)> = (0..s).flat_map(|x| (x..s).map(move |y| (x, y))).collect();
    let raw: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(x, y)| record.samples.iter().map(|f| 0.5 * (f[x][y] + f[y][x])).collect())
        .collect();
    let second: Vec<Vec<f64>> = raw.iter().map(|c| c.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect()).collect();
    let mut freqs = pencil_frequencies(&second, record.dt, opts)?;
    if let Some(cap) = n_max {
        freqs.truncate(cap);
    }

    // Least squares: columns t, 1, then cos/sin per frequency.
    let times: Vec<f64> = (0..len).map(|k| k as f64 * record.dt).collect();
    let ncol = 2 + 2 * freqs.len();
    let basis = DMatrix::from_fn(len, ncol, |k, c| {
        let t = times[k];
        match c {
            0 => t,
            1 => 1.0,
            _ => {
                let w = freqs[(c - 2) / 2];
                if (c - 2) % 2 == 0 { (w * t).cos() } else { (w * t).sin() }
            }
        }
    });
    let rhs = DMatrix::from_fn(len, pairs.len(), |k, p| raw[p][k]);
    let qr = basis.clone().qr();
    let qt_rhs = qr.q().transpose() * &rhs;
    let coef = qr
        .r()
        .solve_upper_triangular(&qt_rhs)
        .ok_or_else(|| Error::Singular("amplitude fit is rank deficient".into()))?;
    let misfit = &basis * &coef - &rhs;
    let fit_residual = (misfit.norm_squared() / misfit.len() as f64).sqrt();

    let unpack = |row: usize, scale: f64| {
        let mut m = DMatrix::zeros(s, s);
        for (p, &(x, y)) in pairs.iter().enumerate() {
            m[(x, y)] = coef[(row, p)] * scale;
            m[(y, x)] = coef[(row, p)] * scale;
        }
        m
    };
    let to_rows = |m: &DMatrix<f64>| (0..s).map(|x| (0..s).map(|y| m[(x, y)]).collect()).collect();
    let resolution = opts.resolution_const / record.duration();
    // Σ-restricted projectors: the `t` slope for the constant mode, `ω`
    // times the sin amplitude otherwise.
    let mut raw_proj = vec![(0.0, unpack(0, 1.0))];
    raw_proj.extend(freqs.iter().enumerate().map(|(i, &w)| (w, unpack(3 + 2 * i, w))));
    let projected: Vec<_> = raw_proj.iter().map(|(w, p)| (*w, psd_project(p))).collect();
    let scale = projected.iter().map(|(_, (_, vals))| vals.iter().copied().fold(0.0f64, f64::max)).fold(0.0, f64::max);
    let mut poles = Vec::new();
    for (i, (w, (proj, vals))) in projected.into_iter().enumerate() {
        let multiplicity = vals.iter().filter(|&&v| v > opts.multiplicity_tol * scale).count();
        if multiplicity == 0 {
            continue;
        }
        let psd_projection = vals.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        let unresolved = i > 0 && {
            let k = i - 1;
            let gap_lo = if k > 0 { w - freqs[k - 1] } else { w };
            let gap_hi = freqs.get(k + 1).map_or(f64::INFINITY, |v| v - w);
            gap_lo.min(gap_hi) < resolution
        };
        // The constant mode keeps the projector; the others carry P/(2ω).
        let residue = if w == 0.0 { proj } else { proj / (2.0 * w) };
        poles.push(Pole {
            frequency: w,
            residue: to_rows(&residue),
            multiplicity,
            psd_projection,
            unresolved,
        });
    }
    Ok(PoleSet {
        manifold_id: record.manifold_id.clone(),
        sigma: record.sigma.clone(),
        poles,
        resolution,
        fit_residual,
    })
}

/// Trace rows from residues: `2ω·residue` is the Σ-restricted projector of
/// the eigenspace, so its top `multiplicity` eigenvectors scaled by the
/// root eigenvalues are the traces up to an orthogonal mixing.
pub fn residues_to_spectral_data(poles: &PoleSet) -> Result<SpectralDataset> {
    let s = poles.sigma.weights.len();
    let mut lambdas = Vec::new();
    let mut traces = Vec::new();
    for p in &poles.poles {
        let scale = if p.frequency == 0.0 { 1.0 } else { 2.0 * p.frequency };
        let proj = DMatrix::from_fn(s, s, |x, y| p.residue[x][y] * scale);
        let (vals, vecs) = crate::linalg::sorted_symmetric_eigen(&proj);
        let top = vals.iter().copied().fold(0.0f64, f64::max);
        if vals.iter().any(|&v| v < -1e-8 * top) {
            return Err(Error::OutOfRange(format!(
                "residue at ω = {} has a negative eigenvalue",
                p.frequency
            )));
        }
        for k in (0..s).rev().take(p.multiplicity) {
            let root = vals[k].max(0.0).sqrt();
            let mut row: Vec<f64> = (0..s).map(|x| vecs[(x, k)] * root).collect();
            // Deterministic sign: largest entry positive.
            let lead = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if lead < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
            lambdas.push(p.lambda());
            traces.push(row);
        }
    }
    let data = SpectralDataset {
        version: "1".into(),
        kind: DataKind::Dirichlet,
        manifold_id: poles.manifold_id.clone(),
        sigma: poles.sigma.clone(),
        lambdas,
        traces,
        normal_traces: None,
    };
    data.validate()?;
    Ok(data)
}

/// Groups of equal eigenvalues (relative `tol`) as index ranges.
pub fn eigenspace_groups(lambdas: &[f64], tol: f64) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        if i == lambdas.len() || (lambdas[i] - lambdas[i - 1]).abs() > tol * lambdas[i].abs().max(1.0) {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// `Σ_l φ_l(x) φ_l(y)` over the rows in `rows`, on Σ×Σ.
pub fn eigenspace_projector(data: &SpectralDataset, rows: core::ops::Range<usize>) -> DMatrix<f64> {
    let s = data.sigma_len();
    let mut p = DMatrix::zeros(s, s);
    for r in rows {
        let t = DVector::from_column_slice(&data.traces[r]);
        p += &t * t.transpose();
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, eigendecompose, emit_spectral_data, ComponentSpec, GeometrySpec};
    use core::f64::consts::PI;

    fn descriptor(s: usize) -> SigmaDescriptor {
        SigmaDescriptor {
            components: vec![(0..s).collect()],
            weights: vec![1.0; s],
            coords: vec![vec![0.0]; s],
        }
    }

    fn synthetic(modes: &[(f64, Vec<f64>)], constant: Option<Vec<f64>>, dt: f64, len: usize) -> GreenRecord {
        let s = modes.first().map_or_else(|| constant.as_ref().unwrap().len(), |m| m.1.len());
        let samples = (0..len)
            .map(|k| {
                let t = k as f64 * dt;
                (0..s)
                    .map(|x| {
                        (0..s)
                            .map(|y| {
                                let osc: f64 = modes.iter().map(|(w, v)| v[x] * v[y] * (w * t).sin() / w).sum();
                                osc + constant.as_ref().map_or(0.0, |c| c[x] * c[y] * t)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        GreenRecord {
            manifold_id: "synthetic".into(),
            sigma: descriptor(s),
            dt,
            samples,
        }
    }

    #[test]
    fn single_mode_is_exact() {
        let rec = synthetic(&[(2.3, vec![0.4, -0.7, 0.2])], None, 0.05, 800);
        let ps = poles_and_residues(&rec, None, &PencilOptions::default()).unwrap();
        assert_eq!(ps.poles.len(), 1);
        let p = &ps.poles[0];
        assert!((p.frequency - 2.3).abs() < 1e-8);
        assert_eq!(p.multiplicity, 1);
        let v = [0.4, -0.7, 0.2];
        for x in 0..3 {
            for y in 0..3 {
                assert!((p.residue[x][y] - v[x] * v[y] / (2.0 * 2.3)).abs() < 1e-8);
            }
        }
        let data = residues_to_spectral_data(&ps).unwrap();
        assert_eq!(data.len(), 1);
        let sign = data.traces[0][1].signum() * -1.0;
        for x in 0..3 {
            assert!((data.traces[0][x] * sign - v[x]).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_mode_and_degenerate_pair() {
        let c = vec![0.3, 0.3];
        let modes = [(1.0, vec![0.5, 0.1]), (1.0, vec![-0.2, 0.6]), (1.7, vec![0.3, 0.4])];
        let rec = synthetic(&modes, Some(c.clone()), 0.05, 2400);
        let ps = poles_and_residues(&rec, None, &PencilOptions::default()).unwrap();
        let freqs: Vec<f64> = ps.poles.iter().map(|p| p.frequency).collect();
        assert_eq!(freqs.len(), 3, "{freqs:?}");
        assert_eq!(ps.poles[0].multiplicity, 1);
        assert_eq!(ps.poles[1].multiplicity, 2);
        assert_eq!(ps.poles[2].multiplicity, 1);
        assert!(ps.poles.iter().all(|p| !p.unresolved));
        assert!((ps.poles[0].residue[0][1] - 0.09).abs() < 1e-8, "{:?} {}", ps.poles, ps.fit_residual);
    }

    #[test]
    fn close_pair_is_flagged() {
        let modes = [(1.0, vec![0.5, 0.1]), (1.02, vec![-0.2, 0.6])];
        let rec = synthetic(&modes, None, 0.05, 1000);
        let ps = poles_and_residues(&rec, None, &PencilOptions::default()).unwrap();
        let f: Vec<f64> = ps.poles.iter().map(|p| p.frequency).collect();
        assert_eq!(ps.poles.len(), 2, "{f:?} {:?}", ps.poles.iter().map(|p| p.multiplicity).collect::<Vec<_>>());
        assert!(ps.poles.iter().all(|p| p.unresolved));
    }

    #[test]
    fn simulated_record_is_reciprocal_and_causal() {
        let man = build_manifold(&GeometrySpec::cycle_with_profile(32, 2.0 * PI, |x| 1.0 + 0.3 * x.cos())).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![0, 11], seed: 1 }]).unwrap();
        let rec = simulate_green(&man, &sigma, 4.0, 0.01, 5).unwrap();
        assert!(rec.asymmetry() < 1e-8);
        assert_eq!(rec.at(-1.0, 0, 1), 0.0);
        assert!(rec.samples[0].iter().flatten().all(|v| *v == 0.0));
        assert!(simulate_green(&man, &sigma, 4.0, 1.0, 1).is_err());
    }

    #[test]
    fn simulated_cycle_poles() {
        let n = 32;
        let man = build_manifold(&GeometrySpec::uniform_cycle(n, 2.0 * PI)).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![0, 5], seed: 1 }]).unwrap();
        let rec = simulate_green(&man, &sigma, 60.0, 2e-4, 250).unwrap();
        let ps = poles_and_residues(&rec, None, &PencilOptions::default()).unwrap();
        let exact = crate::manifold::DiscreteManifold::uniform_cycle_spectrum(n, 2.0 * PI);
        let mut distinct: Vec<f64> = Vec::new();
        for l in exact {
            if distinct.last().is_none_or(|d| (l - d).abs() > 1e-8) {
                distinct.push(l);
            }
        }
        for (p, l) in ps.poles.iter().zip(&distinct).take(6) {
            assert!((p.lambda() - l).abs() <= 1e-5 * l.max(1.0), "{} vs {l}", p.lambda());
        }
        assert_eq!(ps.poles[1].multiplicity, 2);

        let got = residues_to_spectral_data(&ps).unwrap();
        let basis = eigendecompose(&man, n).unwrap();
        let want = emit_spectral_data(&basis, &sigma, DataKind::Dirichlet).unwrap();
        let g1 = eigenspace_groups(&got.lambdas, 1e-6);
        let g2 = eigenspace_groups(&want.lambdas, 1e-6);
        for (a, b) in g1.into_iter().zip(g2).take(5) {
            let d = (eigenspace_projector(&got, a) - eigenspace_projector(&want, b)).amax();
            assert!(d < 1e-6, "{d}");
        }
    }
}
