//! The acceptance suite: every oracle cross-check of the pipeline, each
//! reduced to named measurements compared against a bound.
//!
//! Reports carry no timings, so identical seeds give byte-identical JSON.

use std::cell::OnceCell;
use std::f64::consts::PI;
use std::fmt::Write as _;

use ispec_core::blago::{blago_coefficients, controllability_gram, wave_map, GramNorm, JumpKind};
use ispec_core::energy::{energy_flux, FluxOptions};
use ispec_core::geometry::{heat_trace_matrix, varadhan_distances};
use ispec_core::green::{
    eigenspace_groups, eigenspace_projector, poles_and_residues, residues_to_spectral_data, simulate_green, PencilOptions,
};
use ispec_core::linalg::projector_distance;
use ispec_core::manifold::{
    build_manifold, eigendecompose, emit_spectral_data, region_vertices, square_ring, subdomain_dirichlet_modes, ComponentSpec,
    DataKind, DiscreteManifold, EigenBasis, GeometrySpec, Hypersurface, Region, Side, SpectralDataset,
};
use ispec_core::response::{
    anchor_profile, double_layer_naive, j_mid_complex, j_naive, j_operator, recover_nd, response, side_neumann_system,
    single_layer_from_data, AnchorOptions, JRoute,
};
use ispec_core::signal::{Interpolation, SourceSignal};
use ispec_core::subdomain::{assign_spectra, extended_eigenfunctions, maxmin_spectrum, SigmaSubset, SpectralAssignment};
use ispec_core::transmission::{layer_potentials, solve_transmission_frequency, solve_transmission_time, LayerKind, TimeOptions};
use ispec_core::Error as CoreError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::to_json;
use crate::oracles::{dijkstra_geodesics, subdomain_wave};

type Outcome = Result<(), Box<dyn std::error::Error>>;

/// How a measured value is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost,
    Below,
    AtLeast,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    /// Set when the check could not run to completion.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub passed: bool,
    pub criteria: Vec<CriterionReport>,
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "wave coefficients from interface data"),
    (2, "layer-potential algebra"),
    (3, "anchored J operator"),
    (4, "Neumann-to-Dirichlet recovery"),
    (5, "distances from heat asymptotics"),
    (6, "subdomain spectra"),
    (7, "extended eigenfunctions"),
    (8, "energy flux"),
    (9, "controllability rank"),
    (10, "Green record pipeline"),
    (11, "determinism"),
];

/// Parses `all` or a comma-separated list of criterion numbers.
pub fn parse_suite(s: &str) -> Result<Vec<u8>, String> {
    if s.trim() == "all" {
        return Ok(CRITERIA.iter().map(|c| c.0).collect());
    }
    let mut ids: Vec<u8> = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<u8>()
                .ok()
                .filter(|id| CRITERIA.iter().any(|c| c.0 == *id))
                .ok_or_else(|| format!("unknown criterion '{t}'"))
        })
        .collect::<Result<_, _>>()?;
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

struct Checks {
    list: Vec<Measurement>,
}

impl Checks {
    fn push(&mut self, name: impl Into<String>, value: f64, bound: Bound, limit: f64) {
        let passed = match bound {
            Bound::AtMost => value <= limit,
            Bound::Below => value < limit,
            Bound::AtLeast => value >= limit,
            Bound::Info => true,
        };
        self.list.push(Measurement {
            name: name.into(),
            value,
            bound,
            limit,
            passed,
        });
    }

    fn at_most(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.push(name, value, Bound::AtMost, limit);
    }

    fn below(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.push(name, value, Bound::Below, limit);
    }

    fn at_least(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        self.push(name, value, Bound::AtLeast, limit);
    }

    fn info(&mut self, name: impl Into<String>, value: f64) {
        self.push(name, value, Bound::Info, f64::NAN);
    }

    fn holds(&mut self, name: impl Into<String>, ok: bool) {
        self.push(name, if ok { 1.0 } else { 0.0 }, Bound::AtLeast, 1.0);
    }
}

/// Runs the requested criteria. Criterion 11 reruns 1 to 10 and compares
/// the serialized reports.
pub fn run_suite(ids: &[u8], seed: u64) -> Report {
    run_suite_with(ids, seed, |_| {})
}

/// As [`run_suite`], calling `progress` after each criterion.
pub fn run_suite_with(ids: &[u8], seed: u64, mut progress: impl FnMut(&CriterionReport)) -> Report {
    let lab = Lab::default();
    let mut criteria = Vec::new();
    for &id in ids.iter().filter(|&&id| id != 11) {
        let rep = run_criterion(&lab, id, seed);
        progress(&rep);
        criteria.push(rep);
    }
    if ids.contains(&11) {
        let rep = determinism(&criteria, seed);
        progress(&rep);
        criteria.push(rep);
    }
    Report {
        seed,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

fn title(id: u8) -> &'static str {
    CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1)
}

fn run_criterion(lab: &Lab, id: u8, seed: u64) -> CriterionReport {
    let mut checks = Checks { list: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(id as u64));
    let outcome = match id {
        1 => wave_coefficients(&mut checks),
        2 => layer_algebra(&mut checks, &mut rng),
        3 => anchored_j(&mut checks, &mut rng),
        4 => nd_recovery(&mut checks),
        5 => heat_distances(&mut checks, &mut rng),
        6 => subdomain_spectra(lab, &mut checks),
        7 => extended_modes(lab, &mut checks),
        8 => flux(&mut checks, &mut rng),
        9 => controllability(&mut checks, &mut rng),
        10 => green_pipeline(&mut checks),
        _ => Err(format!("criterion {id} does not exist").into()),
    };
    let error = outcome.err().map(|e| e.to_string());
    CriterionReport {
        id,
        title: title(id).into(),
        passed: error.is_none() && !checks.list.is_empty() && checks.list.iter().all(|m| m.passed),
        measurements: checks.list,
        error,
    }
}

fn determinism(first: &[CriterionReport], seed: u64) -> CriterionReport {
    let ids: Vec<u8> = (1..=10).collect();
    let have: Vec<u8> = first.iter().map(|c| c.id).collect();
    let reference = if have == ids {
        first.to_vec()
    } else {
        run_suite(&ids, seed).criteria
    };
    let again = run_suite(&ids, seed).criteria;
    let mut checks = Checks { list: Vec::new() };
    for (a, b) in reference.iter().zip(&again) {
        checks.holds(format!("criterion {} report identical", a.id), to_json(a) == to_json(b));
    }
    CriterionReport {
        id: 11,
        title: title(11).into(),
        passed: checks.list.iter().all(|m| m.passed),
        measurements: checks.list,
        error: None,
    }
}

/// Plain-text rendering with every comparison listed.
pub fn summary(report: &Report) -> String {
    let mut out = String::new();
    for c in &report.criteria {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{tag}] {:>2} {}", c.id, c.title);
        for m in &c.measurements {
            let rel = match m.bound {
                Bound::AtMost => format!("<= {:.3e}", m.limit),
                Bound::Below => format!("< {:.3e}", m.limit),
                Bound::AtLeast => format!(">= {:.3e}", m.limit),
                Bound::Info => String::new(),
            };
            let mark = if m.passed { " " } else { "!" };
            let _ = writeln!(out, "   {mark} {:<48} {:>12.5e} {rel}", m.name, m.value);
        }
        if let Some(e) = &c.error {
            let _ = writeln!(out, "   ! error: {e}");
        }
    }
    let _ = writeln!(
        out,
        "{} of {} criteria passed",
        report.criteria.iter().filter(|c| c.passed).count(),
        report.criteria.len()
    );
    out
}

// ---------------------------------------------------------------------------
// Shared fixtures

struct Fixture {
    man: DiscreteManifold,
    sigma: Hypersurface,
    basis: EigenBasis,
    data: SpectralDataset,
}

fn fixture(spec: GeometrySpec, comps: Vec<ComponentSpec>, kind: DataKind) -> Result<Fixture, CoreError> {
    let man = build_manifold(&spec)?;
    let sigma = Hypersurface::carve(&man, &comps)?;
    let basis = eigendecompose(&man, man.vertex_count())?;
    let data = emit_spectral_data(&basis, &sigma, kind)?;
    Ok(Fixture { man, sigma, basis, data })
}

fn pair(a: usize, b: usize, seed: usize) -> ComponentSpec {
    ComponentSpec { vertices: vec![a, b], seed }
}

fn profiled_cycle(n: usize) -> GeometrySpec {
    GeometrySpec::cycle_with_profile(n, 2.0 * PI, |x| 1.0 + 0.2 * x.sin())
}

/// Fixtures reused by more than one criterion within a run.
#[derive(Default)]
struct Lab {
    splits: OnceCell<Result<Vec<SplitCase>, String>>,
}

struct SplitCase {
    name: &'static str,
    fx: Fixture,
    assignment: SpectralAssignment,
}

impl Lab {
    fn splits(&self) -> Result<&[SplitCase], Box<dyn std::error::Error>> {
        self.splits
            .get_or_init(|| split_cases().map_err(|e| e.to_string()))
            .as_deref()
            .map_err(|e| e.clone().into())
    }
}

fn split_cases() -> Result<Vec<SplitCase>, CoreError> {
    let cycle = fixture(
        GeometrySpec::uniform_cycle(16, 2.0 * PI),
        vec![pair(0, 3, 1), pair(7, 12, 8)],
        DataKind::Dirichlet,
    )?;
    let torus_man = build_manifold(&GeometrySpec::uniform_torus(32, 32, 1.0, 1.0))?;
    let rings = vec![square_ring(&torus_man, 4, 4, 5, 4)?, square_ring(&torus_man, 16, 16, 8, 6)?];
    let torus = fixture(GeometrySpec::uniform_torus(32, 32, 1.0, 1.0), rings, DataKind::Dirichlet)?;
    let mut out = Vec::new();
    for (name, fx) in [("cycle", cycle), ("torus", torus)] {
        let assignment = assign_spectra(&fx.data, None, 1e-6)?;
        out.push(SplitCase { name, fx, assignment });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Numerics

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn rel_l2(got: &[f64], want: &[f64]) -> f64 {
    let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(want).max(f64::MIN_POSITIVE)
}

fn rel_max(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).amax() / want.amax().max(f64::MIN_POSITIVE)
}

fn wdot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

fn uniform_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sin4_pulse(dt: f64, width: f64, amp: Vec<f64>) -> SourceSignal {
    let steps = (width / dt).round() as usize + 1;
    let w = amp.len();
    SourceSignal::from_fn(0.0, dt, steps, w, Interpolation::Linear, move |t, x| amp[x] * (PI * t / width).sin().powi(4))
}

/// Columns of a Σ operator from a basis, one layer potential per unit
/// density.
fn layer_matrix(fx: &Fixture, lambda: f64, kind: LayerKind) -> Result<DMatrix<f64>, CoreError> {
    let s = fx.sigma.len();
    let mut m = DMatrix::zeros(s, s);
    for k in 0..s {
        let mut e = vec![0.0; s];
        e[k] = 1.0;
        let col = layer_potentials(&fx.basis, &fx.sigma, &e, lambda, kind)?.values;
        m.set_column(k, &DVector::from_vec(col));
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Criteria

fn wave_coefficients(c: &mut Checks) -> Outcome {
    let fx = fixture(profiled_cycle(256), vec![pair(0, 90, 1)], DataKind::Dirichlet)?;
    let h = sin4_pulse(1e-3, 1.0, vec![1.0, -0.5]);
    let t = 2.0;
    let from_data = blago_coefficients(&fx.data, &h, &[t], JumpKind::Derivative)?.values.remove(0);
    let mut errs = Vec::new();
    for dt in [1e-3f64, 5e-4, 2.5e-4] {
        let opts = TimeOptions {
            t_start: Some(0.0),
            record_every: (0.5 / dt).round() as usize,
            ..TimeOptions::new(t, dt)
        };
        let field = solve_transmission_time(&fx.man, &fx.sigma, None, Some(&h), &opts)?;
        let proj = field.modal_projection(&fx.basis, &fx.man.mass, field.frame_at(t));
        errs.push(rel_l2(&proj, &from_data));
    }
    c.at_most("relative error, dt = 1e-3", errs[0], 1e-3);
    c.info("relative error, dt = 5e-4", errs[1]);
    c.info("relative error, dt = 2.5e-4", errs[2]);
    c.at_least("error reduction over two halvings", errs[0] / errs[2], 3.0);
    Ok(())
}

fn layer_algebra(c: &mut Checks, rng: &mut ChaCha8Rng) -> Outcome {
    let cycle = fixture(profiled_cycle(64), vec![pair(0, 20, 1), pair(35, 50, 36)], DataKind::Cauchy)?;
    let torus_spec = GeometrySpec::torus_with_factor(12, 12, 1.0, 1.0, |x, y| 1.0 + 0.2 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
    let torus_man = build_manifold(&torus_spec)?;
    let ring = square_ring(&torus_man, 3, 4, 4, 3)?;
    let torus = fixture(torus_spec, vec![ring], DataKind::Cauchy)?;
    for (name, fx, lambda) in [("cycle", &cycle, -1.7), ("torus", &torus, -3.0)] {
        let s = fx.sigma.len();
        let w = fx.data.weights();
        let single = single_layer_from_data(&fx.data, lambda)?.matrix;
        let double = double_layer_naive(&fx.data, lambda)?.matrix;
        let j = j_naive(&fx.data, lambda)?.matrix;
        let half = DMatrix::identity(s, s) * 0.5;
        let j_mid = &j - &half;
        c.at_most(
            format!("{name}: S against basis sums"),
            rel_max(&single, &layer_matrix(fx, lambda, LayerKind::Single)?),
            1e-12,
        );
        c.at_most(
            format!("{name}: D against basis sums"),
            rel_max(&double, &layer_matrix(fx, lambda, LayerKind::Double)?),
            1e-12,
        );
        c.at_most(
            format!("{name}: J against basis sums"),
            rel_max(&j_mid, &layer_matrix(fx, lambda, LayerKind::NormalSingle)?),
            1e-12,
        );

        let mut adj: f64 = 0.0;
        for _ in 0..20 {
            let f = DVector::from_vec(uniform_vec(rng, s));
            let h = DVector::from_vec(uniform_vec(rng, s));
            let df = &double * &f;
            let jh = &j_mid * &h;
            let lhs = wdot(df.as_slice(), h.as_slice(), w);
            let rhs = wdot(f.as_slice(), jh.as_slice(), w);
            let scale = norm(df.as_slice()) * norm(h.as_slice()) + norm(f.as_slice()) * norm(jh.as_slice());
            adj = adj.max((lhs - rhs).abs() / scale);
        }
        c.at_most(format!("{name}: adjoint pairing, 20 probes"), adj, 1e-12);

        let mut sup: f64 = 0.0;
        let mut resp: f64 = 0.0;
        let s_or = layer_matrix(fx, lambda, LayerKind::Single)?;
        let d_or = layer_matrix(fx, lambda, LayerKind::Double)?;
        for _ in 0..3 {
            let f = uniform_vec(rng, s);
            let h = uniform_vec(rng, s);
            let field = solve_transmission_frequency(&fx.man, &fx.sigma, &f, &h, lambda, &Default::default())?;
            let plus = field.plus_trace(&fx.sigma);
            let fv = DVector::from_column_slice(&f);
            let layers = &s_or * DVector::from_column_slice(&h) - &d_or * &fv + fv * 0.5;
            let scale = plus.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let e = plus.iter().zip(layers.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            sup = sup.max(e);
            let r = response(&fx.data, &f, &h, lambda, JRoute::Direct)?;
            let e = plus.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
            resp = resp.max(e);
        }
        c.at_most(format!("{name}: field trace against layer superposition"), sup, 1e-8);
        c.at_most(format!("{name}: field trace against response from data"), resp, 1e-8);
    }
    Ok(())
}

fn anchored_j(c: &mut Checks, rng: &mut ChaCha8Rng) -> Outcome {
    let n = 1024;
    let spec = GeometrySpec::cycle_with_profile(n, 2.0 * PI, |x| 1.0 + 0.2 * x.cos());
    let fx = fixture(spec, vec![pair(0, n / 3, 1)], DataKind::Cauchy)?;
    let lambda = -2.0;
    let trunc = fx.data.truncated(64);
    let full = j_naive(&fx.data, lambda)?.matrix;
    let op = j_operator(&trunc, lambda, &AnchorOptions::default())?;
    let (mut anchored, mut naive) = (0.0f64, 0.0f64);
    for _ in 0..8 {
        let p = DVector::from_vec(uniform_vec(rng, fx.sigma.len()));
        let want = &full * &p;
        anchored = anchored.max(rel_l2((&op.anchored.matrix * &p).as_slice(), want.as_slice()));
        naive = naive.max(rel_l2((&op.naive.matrix * &p).as_slice(), want.as_slice()));
    }
    c.info("tuned anchor height", op.anchor);
    c.at_most("anchored error, 8 probes", anchored, 0.05);
    c.below("anchored error under naive error", anchored, naive);
    c.info("naive error, 8 probes", naive);

    let second = trunc.lambdas.iter().copied().find(|&l| l > 0.0).unwrap_or(1.0);
    let lo = 4.0 * lambda.abs().max(second);
    let hi = trunc.lambdas.last().copied().unwrap_or(lo) / 4.0;
    let per_decade = 10.0;
    let steps = ((hi / lo).log10() * per_decade).floor() as usize;
    let (mut best, mut run_start) = (0.0f64, None);
    for k in 0..=steps {
        let t = lo * 10f64.powf(k as f64 / per_decade);
        let r = j_mid_complex(&fx.data, Complex64::new(0.0, t))?.norm();
        match (r <= 0.05, run_start) {
            (true, None) => run_start = Some(t),
            (true, Some(t0)) => best = best.max((t / t0).log10()),
            (false, _) => run_start = None,
        }
    }
    c.info("anchor window low", lo);
    c.info("anchor window high", hi);
    c.at_least("decades with anchor residual <= 0.05", best, 1.0);
    // The data-side profile must be computable over the same window.
    c.holds("anchor profile available", !anchor_profile(&trunc, lambda)?.is_empty());
    Ok(())
}

fn nd_oracle(fx: &Fixture, side: Side, lambda: f64) -> Result<DMatrix<f64>, CoreError> {
    let (keep, lu) = side_neumann_system(&fx.man, &fx.sigma, side, lambda)?;
    let s = fx.sigma.len();
    let local = |v: usize| keep.iter().position(|&k| k == v);
    let mut m = DMatrix::zeros(s, s);
    for col in 0..s {
        let mut rhs = vec![0.0; keep.len()];
        let i = local(fx.sigma.vertices[col]).ok_or(CoreError::MissingData("Σ vertex in side system"))?;
        rhs[i] = fx.sigma.weights[col];
        let u = lu.solve(&rhs);
        for (row, &y) in fx.sigma.vertices.iter().enumerate() {
            let iy = local(y).ok_or(CoreError::MissingData("Σ vertex in side system"))?;
            m[(row, col)] = u[iy];
        }
    }
    Ok(m)
}

fn nd_recovery(c: &mut Checks) -> Outcome {
    let fx = fixture(profiled_cycle(128), vec![pair(0, 40, 1)], DataKind::Cauchy)?;
    let trunc = fx.data.truncated(32);
    for lambda in [-2.0, -5.0] {
        for (side, label) in [(Side::Minus, "M-"), (Side::Plus, "M+")] {
            let oracle = nd_oracle(&fx, side, lambda)?;
            let full = recover_nd(&fx.data, lambda, side, JRoute::Direct)?;
            let cut = recover_nd(&trunc, lambda, side, JRoute::Anchored(AnchorOptions::default()))?;
            c.at_most(format!("{label}, λ = {lambda}: full basis"), rel_max(&full.matrix, &oracle), 1e-6);
            c.at_most(format!("{label}, λ = {lambda}: J = 32"), rel_max(&cut.matrix, &oracle), 0.02);
            c.at_most(format!("{label}, λ = {lambda}: asymmetry, full basis"), full.asymmetry(), 1e-10);
            // Truncated data keeps the identities only to truncation accuracy.
            c.at_most(format!("{label}, λ = {lambda}: asymmetry, J = 32"), cut.asymmetry(), 0.02);
        }
    }
    Ok(())
}

fn antipodal_error(n: usize) -> Result<f64, CoreError> {
    let fx = fixture(GeometrySpec::uniform_cycle(n, 2.0 * PI), vec![pair(0, n / 2, 1)], DataKind::Dirichlet)?;
    let dm = varadhan_distances(&fx.data, &[0.2, 0.3, 0.4, 0.5])?;
    Ok((dm.get(0, 1) - PI).abs() / PI)
}

fn heat_distances(c: &mut Checks, rng: &mut ChaCha8Rng) -> Outcome {
    let coarse = antipodal_error(256)?;
    let fine = antipodal_error(512)?;
    c.at_most("cycle n = 512: antipodal distance error", fine, 0.02);
    c.info("cycle n = 256: antipodal distance error", coarse);
    c.below("error shrinks under refinement", fine, coarse);

    let man = build_manifold(&GeometrySpec::uniform_torus(64, 64, 1.0, 1.0))?;
    let ring = square_ring(&man, 20, 20, 24, 24)?;
    let sigma = Hypersurface::carve(&man, &[ring])?;
    let basis = eigendecompose(&man, 256)?;
    let data = emit_spectral_data(&basis, &sigma, DataKind::Dirichlet)?;
    // Pairs on one straight side of the ring, where the grid path is the
    // straight segment.
    let coords = &sigma.coords;
    let mut candidates = Vec::new();
    for a in 0..sigma.len() {
        for b in a + 1..sigma.len() {
            let (dx, dy) = (coords[a][0] - coords[b][0], coords[a][1] - coords[b][1]);
            let steps = (dx.abs() + dy.abs()) * 64.0;
            if (dx.abs() < 1e-12 || dy.abs() < 1e-12) && (8.0..=20.0).contains(&steps.round()) {
                candidates.push((a, b));
            }
        }
    }
    let mut picks = Vec::new();
    while picks.len() < 10 && !candidates.is_empty() {
        picks.push(candidates.swap_remove(rng.random_range(0..candidates.len())));
    }
    let dm = varadhan_distances(&data, &[0.01, 0.015, 0.02, 0.025, 0.03])?;
    let sources: Vec<usize> = picks.iter().map(|&(a, _)| sigma.vertices[a]).collect();
    let geo = dijkstra_geodesics(&man, &sources);
    let mut worst: f64 = 0.0;
    for (k, &(a, b)) in picks.iter().enumerate() {
        let want = geo[k][sigma.vertices[b]];
        worst = worst.max((dm.get(a, b) - want).abs() / want);
    }
    c.at_least("torus 64x64: pairs compared", picks.len() as f64, 10.0);
    c.at_most("torus 64x64: worst relative error", worst, 0.03);
    Ok(())
}

fn subdomain_spectra(lab: &Lab, c: &mut Checks) -> Outcome {
    for case in lab.splits()? {
        let fx = &case.fx;
        let n = fx.man.vertex_count();
        let mut err: f64 = 0.0;
        for region in Region::all_five() {
            let (oracle, _) = subdomain_dirichlet_modes(&fx.man, &fx.sigma, region, 5)?;
            let got = &case.assignment.region(region).values;
            c.at_least(
                format!("{}: values recovered in {}", case.name, region.label()),
                got.len().min(5) as f64,
                oracle.len() as f64,
            );
            for (a, b) in got.iter().zip(&oracle) {
                err = err.max((a - b).abs() / b.max(1.0));
            }
        }
        c.at_most(format!("{}: full basis, worst relative error", case.name), err, 1e-8);

        // Half the modes: each constrained run against the union of the
        // spectra of the regions it separates.
        let half = fx.data.truncated(n / 2);
        let runs = [
            (SigmaSubset::All, vec![Region::Inside(0), Region::Inside(1), Region::Outside]),
            (SigmaSubset::Component(0), vec![Region::Inside(0), Region::Complement(0)]),
            (SigmaSubset::Component(1), vec![Region::Inside(1), Region::Complement(1)]),
        ];
        let mut worst: f64 = 0.0;
        for (subset, regions) in runs {
            let mut union = Vec::new();
            for r in regions {
                union.extend(subdomain_dirichlet_modes(&fx.man, &fx.sigma, r, 5)?.0);
            }
            union.sort_by(f64::total_cmp);
            let cols = subset.columns(&half)?.len();
            let take = 5.min(half.len() - cols);
            let split = maxmin_spectrum(&half, &subset, take)?;
            for (a, b) in split.t_values.iter().zip(&union) {
                worst = worst.max((a - b).abs() / b.max(1.0));
            }
        }
        c.at_most(format!("{}: J = N/2, worst relative error", case.name), worst, 0.02);
    }
    let sym = fixture(
        GeometrySpec::uniform_cycle(16, 2.0 * PI),
        vec![pair(0, 3, 1), pair(8, 11, 9)],
        DataKind::Dirichlet,
    )?;
    let ambiguous = matches!(assign_spectra(&sym.data, None, 1e-6), Err(CoreError::Ambiguous { .. }));
    c.holds("symmetric split raises ambiguity", ambiguous);
    Ok(())
}

fn extended_modes(lab: &Lab, c: &mut Checks) -> Outcome {
    for case in lab.splits()? {
        let fx = &case.fx;
        let n = fx.man.vertex_count();
        let (mut cert, mut dist) = (0.0f64, 0.0f64);
        for region in Region::all_five() {
            let got = case.assignment.region(region);
            let inner = region_vertices(&fx.sigma, region);
            let outside: Vec<usize> = (0..n).filter(|v| !inner.contains(v)).collect();
            let ext = extended_eigenfunctions(got, &fx.data, Some((&fx.basis, &outside)))?;
            cert = ext.iter().fold(cert, |m, e| m.max(e.certificate));
            let k = got.values.len();
            let (oracle, modes) = subdomain_dirichlet_modes(&fx.man, &fx.sigma, region, k)?;
            let weighted = DMatrix::from_fn(n, k, |v, col| modes[(v, col)] * fx.man.mass[v]);
            let oracle_kappa = fx.basis.modes.transpose() * weighted;
            // Eigenspaces meeting the first five values, kept whole.
            for g in eigenspace_groups(&oracle, 1e-6).into_iter().take_while(|g| g.start < 5) {
                let mine = DMatrix::from_fn(n, g.len(), |j, col| ext[g.start + col].kappa[j]);
                let theirs = oracle_kappa.columns(g.start, g.len()).into_owned();
                dist = dist.max(projector_distance(&mine, &theirs));
            }
        }
        c.at_most(format!("{}: complement certificate", case.name), cert, 1e-8);
        c.at_most(format!("{}: eigenspace projector distance", case.name), dist, 1e-6);
    }
    Ok(())
}

/// Random band-limited source under a `sin⁴` envelope on `[0, 1]`.
fn band_limited(rng: &mut ChaCha8Rng, width: usize) -> SourceSignal {
    let tones: Vec<(f64, f64, Vec<f64>)> = (0..4)
        .map(|_| {
            let omega = rng.random_range(1.0..6.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            (omega, phase, uniform_vec(rng, width))
        })
        .collect();
    SourceSignal::from_fn(0.0, 0.01, 101, width, Interpolation::Linear, move |t, x| {
        let env = (PI * t).sin().powi(4);
        env * tones.iter().map(|(w, p, a)| a[x] * (w * t + p).sin()).sum::<f64>()
    })
}

fn flux(c: &mut Checks, rng: &mut ChaCha8Rng) -> Outcome {
    let fx = fixture(profiled_cycle(256), vec![pair(0, 37, 1), pair(100, 190, 101)], DataKind::Dirichlet)?;
    let asg = assign_spectra(&fx.data, None, 1e-6)?;
    let region = Region::Inside(0);
    let spec = asg.region(region);
    let opts = FluxOptions::default();
    let (mut direct, mut quad, mut flat) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..3 {
        let f = band_limited(rng, fx.data.component_range(0).len());
        let rec = energy_flux(&fx.data, spec, &f, 2.0, &opts)?;
        let wave = subdomain_wave(&fx.man, &fx.sigma, region, &f, 1e-3, 2.5)?;
        let e = wave.energy(&fx.man, wave.step_at(2.0));
        direct = direct.max((rec.flux - e).abs() / e);
        let double = energy_flux(&fx.data, spec, &f.scaled(2.0), 2.0, &opts)?;
        quad = quad.max((double.flux / rec.flux - 4.0).abs());
        flat = flat.max(rec.constancy_error());
    }
    c.at_most("flux against direct subdomain energy", direct, 1e-2);
    c.at_most("|flux(2F)/flux(F) - 4|", quad, 1e-6);
    c.at_most("flux drift after source off", flat, 1e-3);
    Ok(())
}

fn gram_rank(fx: &Fixture, rng: &mut ChaCha8Rng, sources: usize, probe_seed: u64) -> Result<(usize, f64), CoreError> {
    let horizon = 8.0f64;
    let dt = 0.05;
    let steps = (horizon / dt).round() as usize + 1;
    let mut kappas = Vec::with_capacity(sources);
    for _ in 0..sources {
        let noise: Vec<Vec<f64>> = (0..steps).map(|_| uniform_vec(rng, 2)).collect();
        let h = SourceSignal::from_fn(-horizon, dt, steps, 2, Interpolation::Linear, |t, x| {
            let k = ((t + horizon) / dt).round() as usize;
            (PI * (t + horizon) / horizon).sin().powi(2) * noise[k][x]
        });
        kappas.push(wave_map(&fx.data, &h)?.kappa);
    }
    let rep = controllability_gram(&fx.data.lambdas, &kappas, GramNorm::H1, 16, probe_seed)?;
    Ok((rep.rank, rep.worst_residual))
}

fn controllability(c: &mut Checks, rng: &mut ChaCha8Rng) -> Outcome {
    let n = 64;
    let generic = fixture(GeometrySpec::uniform_cycle(n, 2.0 * PI), vec![pair(0, 7, 1)], DataKind::Dirichlet)?;
    let symmetric = fixture(GeometrySpec::uniform_cycle(n, 2.0 * PI), vec![pair(0, 32, 1)], DataKind::Dirichlet)?;
    let probe_seed = rng.random();
    let (rank, residual) = gram_rank(&generic, rng, 512, probe_seed)?;
    c.at_least("H1 Gram rank, 512 sources", rank as f64, (0.95 * n as f64).ceil());
    c.at_most("worst probe residual", residual, 1e-2);
    let (sym_rank, _) = gram_rank(&symmetric, rng, 512, probe_seed)?;
    c.below("symmetric control rank", sym_rank as f64, n as f64);
    Ok(())
}

fn green_pipeline(c: &mut Checks) -> Outcome {
    let n = 128;
    let fx = fixture(GeometrySpec::uniform_cycle(n, 2.0 * PI), vec![pair(0, 11, 1)], DataKind::Dirichlet)?;
    let record = simulate_green(&fx.man, &fx.sigma, 200.0, 1e-4, 500)?;
    let poles = poles_and_residues(&record, None, &PencilOptions::default())?;
    let rebuilt = residues_to_spectral_data(&poles)?;

    let exact = DiscreteManifold::uniform_cycle_spectrum(n, 2.0 * PI);
    let want_groups = eigenspace_groups(&fx.data.lambdas, 1e-6);
    let got_groups = eigenspace_groups(&rebuilt.lambdas, 1e-6);
    let (mut lam, mut proj) = (0.0f64, 0.0f64);
    let mut ranks_ok = true;
    let count = 10.min(want_groups.len()).min(got_groups.len()).min(poles.poles.len());
    for k in 0..count {
        let (wg, gg) = (&want_groups[k], &got_groups[k]);
        let l = exact[wg.start];
        lam = lam.max((rebuilt.lambdas[gg.start] - l).abs() / l.max(1.0));
        ranks_ok &= poles.poles[k].multiplicity == wg.len();
        let d = eigenspace_projector(&rebuilt, gg.clone()) - eigenspace_projector(&fx.data, wg.clone());
        proj = proj.max(d.amax());
    }
    c.at_least("distinct eigenvalues compared", count as f64, 10.0);
    c.at_most("worst relative eigenvalue error", lam, 1e-3);
    c.holds("multiplicities match (pairs have rank 2)", ranks_ok);
    c.at_most("eigenspace projector distance", proj, 1e-6);
    let mut heat: f64 = 0.0;
    for t in [0.1, 0.5, 1.0] {
        let a = heat_trace_matrix(&rebuilt, t)?.values;
        let b = heat_trace_matrix(&fx.data, t)?.values;
        heat = heat.max(rel_max(&a, &b));
    }
    c.at_most("heat trace agreement", heat, 1e-3);
    Ok(())
}
