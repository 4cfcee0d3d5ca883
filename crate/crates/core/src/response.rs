//! Layer operators, the response operator and Neumann-to-Dirichlet maps,
//! built from spectral data on Σ.
//!
//! Operators act on Σ densities and are stored as matrices; the pairing on
//! Σ is `⟨a, b⟩_w = Σ w a b`, so the adjoint of `A` is `W⁻¹AᵀW`.
//!
//! The normal derivative of the single layer (`J`) does not converge as a
//! truncated mode sum. It is obtained instead by integrating its
//! λ-derivative, which does converge, along a segment from an anchor `iT`
//! where `J ≈ ½` is known.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, BandLu, CsrMatrix};
use crate::manifold::{region_vertices, DiscreteManifold, Hypersurface, Region, Side, SpectralDataset};
use crate::signal::SourceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorLabel {
    S,
    D,
    J,
    R,
    Lambda,
}

/// Linear operator on Σ densities.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaOperator {
    pub label: OperatorLabel,
    pub lambda: f64,
    pub weights: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

impl SigmaOperator {
    pub fn apply(&self, density: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(density);
        (&self.matrix * v).iter().copied().collect()
    }

    /// Adjoint with respect to the weighted pairing.
    pub fn adjoint_matrix(&self) -> DMatrix<f64> {
        weighted_adjoint(&self.matrix, &self.weights)
    }

    /// `max |A − A*|` relative to `max |A|`.
    pub fn asymmetry(&self) -> f64 {
        let adj = self.adjoint_matrix();
        (&self.matrix - adj).amax() / self.matrix.amax().max(f64::MIN_POSITIVE)
    }
}

pub fn weighted_adjoint(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |x, y| a[(y, x)] * w[y] / w[x])
}

fn check_off_spectrum(data: &SpectralDataset, lambda: f64, delta: Option<f64>) -> Result<()> {
    let top = data.lambdas.last().copied().unwrap_or(1.0).max(1.0);
    let delta = delta.unwrap_or(1e-6 * top);
    let gap = data.lambdas.iter().map(|l| (l - lambda).abs()).fold(f64::INFINITY, f64::min);
    if gap < delta {
        return Err(Error::NearSpectrum { lambda, gap });
    }
    Ok(())
}

/// `Σ_j c_j a_j(x) b_j(y) w(y)` for rows `a`, `b` of the dataset.
fn mode_sum<T>(a: &[Vec<f64>], b: &[Vec<f64>], w: &[f64], coeff: impl Fn(usize) -> T) -> DMatrix<T>
where
    T: nalgebra::Scalar + Copy + core::ops::AddAssign + core::ops::Mul<f64, Output = T> + num_traits::Zero,
{
    let s = w.len();
    let mut m = DMatrix::from_element(s, s, T::zero());
    for j in 0..a.len() {
        let c = coeff(j);
        for y in 0..s {
            let by = b[j][y] * w[y];
            if by == 0.0 {
                continue;
            }
            for x in 0..s {
                m[(x, y)] += c * (a[j][x] * by);
            }
        }
    }
    m
}

/// Single layer `S_λ`: trace of the field generated by a derivative jump.
pub fn single_layer_from_data(data: &SpectralDataset, lambda: f64) -> Result<SigmaOperator> {
    check_off_spectrum(data, lambda, None)?;
    let l = &data.lambdas;
    let matrix = mode_sum(&data.traces, &data.traces, data.weights(), |j| 1.0 / (l[j] - lambda));
    Ok(SigmaOperator {
        label: OperatorLabel::S,
        lambda,
        weights: data.weights().to_vec(),
        matrix,
    })
}

/// λ-derivative of the single layer, `Σ φ⊗φ w/(λ_j − λ)²`.
pub fn single_layer_derivative(data: &SpectralDataset, lambda: f64) -> Result<DMatrix<f64>> {
    check_off_spectrum(data, lambda, None)?;
    let l = &data.lambdas;
    Ok(mode_sum(&data.traces, &data.traces, data.weights(), |j| 1.0 / (l[j] - lambda).powi(2)))
}

/// Mid-value double layer `D°` as a plain truncated sum.
pub fn double_layer_naive(data: &SpectralDataset, lambda: f64) -> Result<SigmaOperator> {
    check_off_spectrum(data, lambda, None)?;
    let l = &data.lambdas;
    let matrix = mode_sum(&data.traces, data.normal()?, data.weights(), |j| 1.0 / (l[j] - lambda));
    Ok(SigmaOperator {
        label: OperatorLabel::D,
        lambda,
        weights: data.weights().to_vec(),
        matrix,
    })
}

/// `J = ½ + J°` with `J°` as a plain truncated sum.
pub fn j_naive(data: &SpectralDataset, lambda: f64) -> Result<SigmaOperator> {
    check_off_spectrum(data, lambda, None)?;
    let l = &data.lambdas;
    let mut matrix = mode_sum(data.normal()?, &data.traces, data.weights(), |j| 1.0 / (l[j] - lambda));
    for x in 0..matrix.nrows() {
        matrix[(x, x)] += 0.5;
    }
    Ok(SigmaOperator {
        label: OperatorLabel::J,
        lambda,
        weights: data.weights().to_vec(),
        matrix,
    })
}

/// `J°` at a complex parameter.
pub fn j_mid_complex(data: &SpectralDataset, z: Complex64) -> Result<DMatrix<Complex64>> {
    let l = &data.lambdas;
    Ok(mode_sum(data.normal()?, &data.traces, data.weights(), |j| (Complex64::new(l[j], 0.0) - z).inv()))
}

#[derive(Debug, Clone, Copy)]
pub struct AnchorOptions {
    /// Anchor height `T`; tuned from the data when absent.
    pub anchor: Option<f64>,
    /// Stop doubling panels once the operator changes less than this.
    pub tol: f64,
    pub max_panels: usize,
}

impl Default for AnchorOptions {
    fn default() -> Self {
        Self {
            anchor: None,
            tol: 1e-8,
            max_panels: 1 << 14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct JOperator {
    pub anchored: SigmaOperator,
    pub naive: SigmaOperator,
    pub anchor: f64,
    pub panels: usize,
    /// Largest imaginary entry of the integrated operator, a by-product of
    /// anchoring at a complex point with truncated data.
    pub imaginary_residual: f64,
}

const GAUSS_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫ dτ/(λ_j − τ)²` from `iT` to `λ` for every mode, by composite
/// Gauss–Legendre in `u` with `τ = λ + (iT − λ)u²`, which clusters nodes
/// toward the real endpoint where the integrand is sharpest.
fn segment_integrals(lambdas: &[f64], lambda: f64, anchor: f64, panels: usize) -> Vec<Complex64> {
    let start = Complex64::new(0.0, anchor);
    let end = Complex64::new(lambda, 0.0);
    let span = start - end;
    let h = 1.0 / panels as f64;
    lambdas
        .iter()
        .map(|&lj| {
            let pole = Complex64::new(lj, 0.0);
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..panels {
                let mid = (p as f64 + 0.5) * h;
                for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                    let u = mid + 0.5 * h * x;
                    let tau = end + span * (u * u);
                    let d = pole - tau;
                    acc += (d * d).inv() * (w * 0.5 * h * 2.0 * u);
                }
            }
            // Integrating from u = 1 down to 0 flips the sign.
            -acc * span
        })
        .collect()
}

/// Anchor heights tried when tuning, with the stationarity measure
/// `‖T ∂_T J°(iT)‖ / (‖J°(iT)‖ + 0.01)` of the truncated data at each.
pub fn anchor_profile(data: &SpectralDataset, lambda: f64) -> Result<Vec<(f64, f64)>> {
    let nonzero = data.lambdas.iter().copied().find(|&l| l > 0.0).unwrap_or(1.0);
    let top = data.lambdas.last().copied().unwrap_or(1.0);
    let lo = 4.0 * lambda.abs().max(nonzero);
    let hi = top / 4.0;
    if !(hi > lo) {
        return Ok(vec![(lo.max(hi), 0.0)]);
    }
    let steps = ((hi / lo).log10() * 8.0).ceil() as usize;
    let l = &data.lambdas;
    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = lo * (hi / lo).powf(k as f64 / steps as f64);
        let z = Complex64::new(0.0, t);
        let value = j_mid_complex(data, z)?;
        let slope = mode_sum(data.normal()?, &data.traces, data.weights(), |j| {
            let d = Complex64::new(l[j], 0.0) - z;
            Complex64::new(0.0, t) * (d * d).inv()
        });
        let fro = |m: &DMatrix<Complex64>| m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        out.push((t, fro(&slope) / (fro(&value) + 0.01)));
    }
    Ok(out)
}

pub fn tune_anchor(data: &SpectralDataset, lambda: f64) -> Result<f64> {
    let profile = anchor_profile(data, lambda)?;
    Ok(profile
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .unwrap_or(1.0))
}

/// `J_λ` by integrating the λ-derivative of `J°` from the anchor `iT`,
/// where `J ≈ ½`, to `λ`. The plain truncated sum is returned alongside.
pub fn j_operator(data: &SpectralDataset, lambda: f64, opts: &AnchorOptions) -> Result<JOperator> {
    check_off_spectrum(data, lambda, None)?;
    let normals = data.normal()?;
    let anchor = match opts.anchor {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::OutOfRange(format!("anchor height must be positive, got {t}"))),
        None => tune_anchor(data, lambda)?,
    };
    let w = data.weights();
    // Bound on the entry change per unit change of a mode integral.
    let scale: Vec<f64> = (0..data.len())
        .map(|j| {
            let a = normals[j].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let b = data.traces[j].iter().zip(w).fold(0.0f64, |m, (v, w)| m.max((v * w).abs()));
            a * b
        })
        .collect();
    let mut panels = 4;
    let mut ints = segment_integrals(&data.lambdas, lambda, anchor, panels);
    loop {
        let finer = segment_integrals(&data.lambdas, lambda, anchor, 2 * panels);
        let change: f64 = finer.iter().zip(&ints).zip(&scale).map(|((a, b), s)| (a - b).norm() * s).sum();
        ints = finer;
        panels *= 2;
        if change < opts.tol {
            break;
        }
        if panels >= opts.max_panels {
            return Err(Error::OutOfRange(format!(
                "contour quadrature did not settle with {panels} panels (change {change:.3e})"
            )));
        }
    }
    let integrated = mode_sum(normals, &data.traces, w, |j| ints[j]);
    let imaginary_residual = integrated.iter().fold(0.0f64, |m, c| m.max(c.im.abs()));
    let mut matrix = integrated.map(|c| c.re);
    for x in 0..matrix.nrows() {
        matrix[(x, x)] += 0.5;
    }
    Ok(JOperator {
        anchored: SigmaOperator {
            label: OperatorLabel::J,
            lambda,
            weights: w.to_vec(),
            matrix,
        },
        naive: j_naive(data, lambda)?,
        anchor,
        panels,
        imaginary_residual,
    })
}

/// How `J` is obtained for the response operator.
#[derive(Debug, Clone, Copy)]
pub enum JRoute {
    /// Plain truncated sum; exact at full basis.
    Direct,
    Anchored(AnchorOptions),
}

/// `D° = (J − ½)*`.
pub fn double_from_j(j: &SigmaOperator) -> SigmaOperator {
    let mut mid = j.matrix.clone();
    for x in 0..mid.nrows() {
        mid[(x, x)] -= 0.5;
    }
    SigmaOperator {
        label: OperatorLabel::D,
        lambda: j.lambda,
        weights: j.weights.clone(),
        matrix: weighted_adjoint(&mid, &j.weights),
    }
}

fn j_by_route(data: &SpectralDataset, lambda: f64, route: JRoute) -> Result<SigmaOperator> {
    match route {
        JRoute::Direct => j_naive(data, lambda),
        JRoute::Anchored(opts) => Ok(j_operator(data, lambda, &opts)?.anchored),
    }
}

/// Outside trace of the transmission field with jumps `f`, `h`:
/// `R(f, h) = S h − (D° − ½) f`.
pub fn response(data: &SpectralDataset, f: &[f64], h: &[f64], lambda: f64, route: JRoute) -> Result<Vec<f64>> {
    let s = data.sigma_len();
    if f.len() != s || h.len() != s {
        return Err(Error::DimensionMismatch {
            what: "response densities",
            expected: s,
            got: f.len().min(h.len()),
        });
    }
    let mut out = single_layer_from_data(data, lambda)?.apply(h);
    if f.iter().any(|v| *v != 0.0) {
        let d = double_from_j(&j_by_route(data, lambda, route)?);
        let df = d.apply(f);
        for ((o, dv), fv) in out.iter_mut().zip(df).zip(f) {
            *o -= dv - 0.5 * fv;
        }
    }
    Ok(out)
}

/// Matrix of `R(·, 0)` and `R(0, ·)`.
pub fn response_matrices(data: &SpectralDataset, lambda: f64, route: JRoute) -> Result<(SigmaOperator, SigmaOperator)> {
    let single = single_layer_from_data(data, lambda)?;
    let d = double_from_j(&j_by_route(data, lambda, route)?);
    let mut value = -d.matrix.clone();
    for x in 0..value.nrows() {
        value[(x, x)] += 0.5;
    }
    Ok((
        SigmaOperator {
            label: OperatorLabel::R,
            lambda,
            weights: d.weights.clone(),
            matrix: value,
        },
        single,
    ))
}

/// Largest condition number accepted when solving `R(f, h) = 0`.
pub const ND_CONDITION_LIMIT: f64 = 1e10;

/// Neumann-to-Dirichlet map of one side at `λ` (outward normals).
///
/// The enclosed side solves `(D° − ½) f = S h` and returns `−f`; the outside
/// solves `(D° + ½) f = S h` and returns `f`.
pub fn recover_nd(data: &SpectralDataset, lambda: f64, side: Side, route: JRoute) -> Result<SigmaOperator> {
    let single = single_layer_from_data(data, lambda)?;
    let d = double_from_j(&j_by_route(data, lambda, route)?);
    let shift = match side {
        Side::Minus => -0.5,
        Side::Plus => 0.5,
    };
    let mut a = d.matrix.clone();
    for x in 0..a.nrows() {
        a[(x, x)] += shift;
    }
    let cond = condition_number(&a);
    if !(cond <= ND_CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition: cond,
            context: format!("λ = {lambda} lies in an excluded spectrum"),
        });
    }
    let sol = a.lu().solve(&single.matrix).ok_or_else(|| Error::Singular("ND system".into()))?;
    let matrix = match side {
        Side::Minus => -sol,
        Side::Plus => sol,
    };
    Ok(SigmaOperator {
        label: OperatorLabel::Lambda,
        lambda,
        weights: d.weights,
        matrix,
    })
}

/// Dirichlet and Neumann traces on Σ of the outside wave, one row per time.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePair {
    pub times: Vec<f64>,
    pub dirichlet: Vec<Vec<f64>>,
    pub neumann: Vec<Vec<f64>>,
}

/// Time-domain Dirichlet-to-Neumann data of the hidden outside, given
/// Dirichlet data and a model of the enclosed side.
///
/// The Σ-trace of the wave from `h` is synthesized from the data; the
/// enclosed side is then driven with that trace as Dirichlet data, its
/// normal derivative read off, and `h` added across Σ.
pub fn hidden_side_dtn(
    data: &SpectralDataset,
    known: &DiscreteManifold,
    sigma: &Hypersurface,
    h: &SourceSignal,
    dt: f64,
    t_end: f64,
) -> Result<TracePair> {
    let s = data.sigma_len();
    if sigma.len() != s || known.id != sigma.manifold_id {
        return Err(Error::DimensionMismatch {
            what: "known side Σ size",
            expected: s,
            got: sigma.len(),
        });
    }
    if h.t_start < 0.0 {
        return Err(Error::Signal(format!("source must start at t ≥ 0, got {}", h.t_start)));
    }
    let bound = 0.5 * known.min_edge_length();
    if !(dt > 0.0) || dt > bound {
        return Err(Error::Cfl { dt, bound });
    }
    let steps = (t_end / dt).round() as usize;
    // One extra time on each side for the second difference of the trace.
    let grid: Vec<f64> = (0..steps + 3).map(|k| (k as f64 - 1.0) * dt).collect();
    let trace = crate::blago::sigma_trace(data, h, &grid)?;

    let inner: Vec<usize> = (0..sigma.components.len())
        .flat_map(|i| region_vertices(sigma, Region::Inside(i)))
        .collect();
    let mut local = vec![usize::MAX; known.vertex_count()];
    for (i, &v) in inner.iter().enumerate() {
        local[v] = i;
    }
    let k = &known.stiffness;
    let m: Vec<f64> = inner.iter().map(|&v| known.mass[v]).collect();
    let step_load = |u: &[f64], g: &[f64]| -> Vec<f64> {
        inner
            .iter()
            .map(|&v| {
                k.row(v)
                    .map(|(c, a)| match (local[c], sigma.sigma_index(c)) {
                        (l, _) if l != usize::MAX => a * u[l],
                        (_, Some(idx)) => a * g[idx],
                        _ => 0.0,
                    })
                    .sum::<f64>()
            })
            .collect()
    };

    let mut u = vec![0.0; inner.len()];
    let mut u_prev = vec![0.0; inner.len()];
    let mut times = Vec::with_capacity(steps + 1);
    let mut dirichlet = Vec::with_capacity(steps + 1);
    let mut neumann = Vec::with_capacity(steps + 1);
    let mut hbuf = vec![0.0; s];
    for n in 0..=steps {
        let t = n as f64 * dt;
        let g = &trace[n + 1];
        let mut full = vec![0.0; known.vertex_count()];
        for (i, &v) in inner.iter().enumerate() {
            full[v] = u[i];
        }
        for (idx, &x) in sigma.vertices.iter().enumerate() {
            full[x] = g[idx];
        }
        h.value_into(t, &mut hbuf);
        let row: Vec<f64> = sigma
            .stencils
            .iter()
            .enumerate()
            .map(|(idx, st)| {
                let accel = (trace[n + 2][idx] - 2.0 * g[idx] + trace[n][idx]) / (dt * dt);
                // −λ in the frequency-domain stencil is ∂²_t here.
                let q = st.minus_flux(&full, 0.0) + 0.5 * st.mass * accel;
                -q / st.weight + hbuf[idx]
            })
            .collect();
        times.push(t);
        dirichlet.push(g.clone());
        neumann.push(row);

        let load = step_load(&u, g);
        let next: Vec<f64> = (0..inner.len())
            .map(|i| 2.0 * u[i] - u_prev[i] - dt * dt * load[i] / m[i])
            .collect();
        u_prev = core::mem::replace(&mut u, next);
    }
    Ok(TracePair { times, dirichlet, neumann })
}

/// Factored `K − λM` restricted to one side with a Neumann flux on Σ; the
/// enclosed side uses `Q_λ`, the outside `P_λ`. Used by oracles.
pub fn side_neumann_system(man: &DiscreteManifold, sigma: &Hypersurface, side: Side, lambda: f64) -> Result<(Vec<usize>, BandLu<f64>)> {
    let n = man.vertex_count();
    let keep: Vec<usize> = (0..n)
        .filter(|&v| sigma.side_of(v).map_or(true, |s| s == side))
        .collect();
    let mut local = vec![usize::MAX; n];
    for (i, &v) in keep.iter().enumerate() {
        local[v] = i;
    }
    let mut trip = Vec::new();
    for (i, &v) in keep.iter().enumerate() {
        if let Some(idx) = sigma.sigma_index(v) {
            let st = &sigma.stencils[idx];
            let own = match side {
                Side::Minus => &st.minus,
                Side::Plus => &st.plus,
            };
            let mut diag = -0.5 * lambda * st.mass;
            for &(y, c) in own {
                diag += c;
                trip.push((i, local[y], -c));
            }
            for &(y, c) in &st.tangential {
                diag += 0.5 * c;
                trip.push((i, local[y], -0.5 * c));
            }
            trip.push((i, i, diag));
        } else {
            let mut diag = -lambda * man.mass[v];
            for &(u, e) in &man.adjacency[v] {
                let c = man.edges[e].conductance;
                diag += c;
                trip.push((i, local[u], -c));
            }
            trip.push((i, i, diag));
        }
    }
    let a = CsrMatrix::from_triplets(keep.len(), keep.len(), &trip);
    Ok((keep, BandLu::factor(&a)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_manifold, eigendecompose, emit_spectral_data, ComponentSpec, DataKind, GeometrySpec};
    use crate::transmission::{layer_potentials, solve_transmission_frequency, LayerKind};
    use core::f64::consts::PI;

    fn setup(n: usize) -> (DiscreteManifold, Hypersurface, SpectralDataset) {
        let man = build_manifold(&GeometrySpec::cycle_with_profile(n, 2.0 * PI, |x| 1.0 + 0.2 * x.cos())).unwrap();
        let sigma = Hypersurface::carve(&man, &[ComponentSpec { vertices: vec![0, n / 3], seed: 1 }]).unwrap();
        let basis = eigendecompose(&man, n).unwrap();
        let data = emit_spectral_data(&basis, &sigma, DataKind::Cauchy).unwrap();
        (man, sigma, data)
    }

    #[test]
    fn single_layer_is_weighted_symmetric_and_decays() {
        let (_, _, data) = setup(32);
        let s = single_layer_from_data(&data, -1.0).unwrap();
        assert!(s.asymmetry() < 1e-13);
        let far = single_layer_from_data(&data, -1e6).unwrap();
        assert!(far.matrix.amax() < 1e-5);
    }

    #[test]
    fn data_operators_match_basis_sums() {
        let (man, sigma, data) = setup(40);
        let basis = eigendecompose(&man, 40).unwrap();
        let lambda = -2.5;
        let dens = [0.7, -1.3];
        let s = single_layer_from_data(&data, lambda).unwrap().apply(&dens);
        let d = double_layer_naive(&data, lambda).unwrap().apply(&dens);
        let j = j_naive(&data, lambda).unwrap().apply(&dens);
        let so = layer_potentials(&basis, &sigma, &dens, lambda, LayerKind::Single).unwrap().values;
        let dof = layer_potentials(&basis, &sigma, &dens, lambda, LayerKind::Double).unwrap().values;
        let jo = layer_potentials(&basis, &sigma, &dens, lambda, LayerKind::NormalSingle).unwrap().values;
        for k in 0..2 {
            assert!((s[k] - so[k]).abs() < 1e-12);
            assert!((d[k] - dof[k]).abs() < 1e-12);
            assert!((j[k] - 0.5 * dens[k] - jo[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_single_layer() {
        let (_, _, data) = setup(24);
        let (l, e) = (-3.0, 1e-5);
        let fd = (single_layer_from_data(&data, l + e).unwrap().matrix - single_layer_from_data(&data, l - e).unwrap().matrix) / (2.0 * e);
        let exact = single_layer_derivative(&data, l).unwrap();
        assert!((fd - &exact).amax() < 1e-7 * exact.amax());
    }

    #[test]
    fn response_matches_oracle_at_full_basis() {
        let (man, sigma, data) = setup(48);
        let (f, h) = ([0.4, -0.9], [1.1, 0.3]);
        let lambda = -1.7;
        let r = response(&data, &f, &h, lambda, JRoute::Direct).unwrap();
        let field = solve_transmission_frequency(&man, &sigma, &f, &h, lambda, &Default::default()).unwrap();
        let plus = field.plus_trace(&sigma);
        for k in 0..2 {
            assert!((r[k] - plus[k]).abs() < 1e-10, "{} vs {}", r[k], plus[k]);
        }
    }

    #[test]
    fn contour_integral_matches_closed_form() {
        let (_, _, data) = setup(32);
        let lambda = -2.0;
        let t = 40.0;
        let j = j_operator(&data, lambda, &AnchorOptions { anchor: Some(t), ..Default::default() }).unwrap();
        let at_anchor = j_mid_complex(&data, Complex64::new(0.0, t)).unwrap();
        let mut expected = j.naive.matrix.clone();
        for x in 0..2 {
            for y in 0..2 {
                expected[(x, y)] -= at_anchor[(x, y)].re;
            }
        }
        assert!((&j.anchored.matrix - expected).amax() < 1e-8);
    }

    #[test]
    fn nd_maps_match_neumann_oracle() {
        let (man, sigma, data) = setup(64);
        let lambda = -2.0;
        for side in [Side::Minus, Side::Plus] {
            let nd = recover_nd(&data, lambda, side, JRoute::Direct).unwrap();
            assert!(nd.asymmetry() < 1e-8);
            let (keep, lu) = side_neumann_system(&man, &sigma, side, lambda).unwrap();
            for col in 0..2 {
                let mut rhs = vec![0.0; keep.len()];
                let x = sigma.vertices[col];
                let i = keep.iter().position(|&v| v == x).unwrap();
                rhs[i] = sigma.weights[col];
                let u = lu.solve(&rhs);
                for (row, &y) in sigma.vertices.iter().enumerate() {
                    let iy = keep.iter().position(|&v| v == y).unwrap();
                    assert!((nd.matrix[(row, col)] - u[iy]).abs() < 1e-8, "{side:?}");
                }
            }
        }
    }

    #[test]
    fn zero_source_gives_zero_dtn_pair() {
        let (man, sigma, data) = setup(32);
        let h = SourceSignal::zeros(0.0, 0.1, 5, 2);
        let pair = hidden_side_dtn(&data.as_dirichlet(), &man, &sigma, &h, 0.01, 0.5).unwrap();
        assert!(pair.dirichlet.iter().chain(&pair.neumann).flatten().all(|v| *v == 0.0));
    }
}
