//! Dirichlet spectra of the pieces cut out by Σ, from Dirichlet data alone.
//!
//! A coefficient vector κ describes the function `Σ_j κ_j φ_j`. Requiring
//! its trace to vanish on part of Σ and minimising the energy `Σ_j λ_j κ_j²`
//! over that subspace gives the Dirichlet spectrum of the complement of
//! that part. Three such runs (all of Σ, each component alone) are then
//! cross-matched to attribute every value to one of five regions.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{null_space, sorted_symmetric_eigen};
use crate::manifold::{EigenBasis, Region, SpectralDataset};

/// Relative rank tolerance for the trace constraints.
pub const CONSTRAINT_TOL: f64 = 1e-10;
/// Largest fraction of unattributable values before giving up.
pub const MAX_AMBIGUOUS_FRACTION: f64 = 0.2;
/// Minimisers matched across two runs must span nearly the same space.
pub const SAME_SPACE_COSINE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSubset {
    All,
    Component(usize),
    /// Any union of components; empty means no constraint.
    Components(Vec<usize>),
}

impl SigmaSubset {
    /// Columns of the trace matrix covered by the subset.
    pub fn columns(&self, data: &SpectralDataset) -> Result<Vec<usize>> {
        let count = data.sigma.components.len();
        let comps: Vec<usize> = match self {
            SigmaSubset::All => (0..count).collect(),
            SigmaSubset::Component(i) => vec![*i],
            SigmaSubset::Components(list) => list.clone(),
        };
        let mut cols = Vec::new();
        for c in comps {
            if c >= count {
                return Err(Error::OutOfRange(format!("Σ component {c} of {count}")));
            }
            cols.extend(data.component_range(c));
        }
        Ok(cols)
    }
}

/// Coefficient vectors whose traces vanish on a part of Σ.
#[derive(Debug, Clone)]
pub struct ConstrainedSourceSpace {
    pub subset: SigmaSubset,
    /// Columns are H¹-orthonormal: `Σ_j (1+λ_j) a_j b_j = δ`. They are also
    /// energy-diagonal, ordered by `energies`.
    pub basis: DMatrix<f64>,
    /// `Σ_j λ_j κ_j²` of each L²-normalised basis column.
    pub energies: Vec<f64>,
    /// Largest trace of a basis column on the constrained vertices.
    pub trace_residual: f64,
}

impl ConstrainedSourceSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn max_trace(data: &SpectralDataset, cols: &[usize], kappa: &[f64]) -> f64 {
    cols.iter()
        .map(|&x| data.traces.iter().zip(kappa).map(|(row, k)| row[x] * k).sum::<f64>().abs())
        .fold(0.0, f64::max)
}

pub fn constrained_sources(data: &SpectralDataset, subset: &SigmaSubset) -> Result<ConstrainedSourceSpace> {
    data.validate()?;
    let cols = subset.columns(data)?;
    let jn = data.len();
    let constraints = DMatrix::from_fn(cols.len(), jn, |r, j| data.traces[j][cols[r]]);
    let z = null_space(&constraints, CONSTRAINT_TOL);
    if z.ncols() == 0 {
        return Err(Error::Singular(format!(
            "trace constraints on {} vertices leave nothing of a {jn}-mode basis",
            cols.len()
        )));
    }
    // One eigendecomposition of the restricted energy gives both the
    // minimisers and the H¹ normalisation.
    let lam = &data.lambdas;
    let zt_lz = DMatrix::from_fn(z.ncols(), z.ncols(), |a, b| (0..jn).map(|j| z[(j, a)] * lam[j] * z[(j, b)]).sum());
    let (energies, v) = sorted_symmetric_eigen(&zt_lz);
    let mut basis = &z * v;
    for (c, e) in energies.iter().enumerate() {
        let scale = 1.0 / (1.0 + e.max(0.0)).sqrt();
        basis.column_mut(c).scale_mut(scale);
    }
    let trace_residual = (0..basis.ncols())
        .map(|c| max_trace(data, &cols, basis.column(c).as_slice()) * (1.0 + energies[c].max(0.0)).sqrt())
        .fold(0.0, f64::max);
    Ok(ConstrainedSourceSpace {
        subset: subset.clone(),
        basis,
        energies,
        trace_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Region(Region),
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpectrum {
    pub subset: SigmaSubset,
    pub t_values: Vec<f64>,
    /// L²-orthonormal minimisers, one per value.
    pub kappas: Vec<Vec<f64>>,
    /// Filled by [`assign_spectra`]; `None` where a value was not examined.
    pub labels: Vec<Option<ModeLabel>>,
}

/// The lowest `n_max` values of the constrained energy and their minimisers.
pub fn maxmin_spectrum(data: &SpectralDataset, subset: &SigmaSubset, n_max: usize) -> Result<SplitSpectrum> {
    split_from_space(&constrained_sources(data, subset)?, n_max)
}

fn split_from_space(space: &ConstrainedSourceSpace, n_max: usize) -> Result<SplitSpectrum> {
    if n_max > space.dim() {
        return Err(Error::OutOfRange(format!(
            "{n_max} values requested from a {}-dimensional constrained space",
            space.dim()
        )));
    }
    let kappas = (0..n_max)
        .map(|c| {
            let scale = (1.0 + space.energies[c].max(0.0)).sqrt();
            space.basis.column(c).iter().map(|v| v * scale).collect()
        })
        .collect();
    Ok(SplitSpectrum {
        subset: space.subset.clone(),
        t_values: space.energies[..n_max].to_vec(),
        kappas,
        labels: vec![None; n_max],
    })
}

/// Values and minimisers attributed to one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpectrum {
    pub region: Region,
    pub values: Vec<f64>,
    pub kappas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralAssignment {
    /// Runs constrained on Σ, Σ₁ and Σ₂, labelled.
    pub runs: [SplitSpectrum; 3],
    /// In the order of [`Region::all_five`].
    pub regions: Vec<RegionSpectrum>,
    /// Values above this were left unlabelled: some run may have cut off
    /// their partners.
    pub threshold: f64,
    pub tau: f64,
    pub ambiguous: usize,
    pub examined: usize,
}

impl SpectralAssignment {
    pub fn region(&self, region: Region) -> &RegionSpectrum {
        self.regions.iter().find(|r| r.region == region).expect("all five regions are present")
    }
}

/// Attribute the values of the three constrained runs to the five regions.
///
/// The Σ run sees `S₁ ∪ S₂ ∪ M∖S`, the Σ₁ run `S₁ ∪ M∖S₁`, the Σ₂ run
/// `S₂ ∪ M∖S₂`. Values are grouped when within `tau` (relative, floor 1);
/// a group is attributed by which runs contribute to it and how often.
/// `n_max` caps each run; `None` takes every value.
pub fn assign_spectra(data: &SpectralDataset, n_max: Option<usize>, tau: f64) -> Result<SpectralAssignment> {
    if data.sigma.components.len() != 2 {
        return Err(Error::InvalidHypersurface(format!(
            "assignment needs two components, got {}",
            data.sigma.components.len()
        )));
    }
    let subsets = [SigmaSubset::All, SigmaSubset::Component(0), SigmaSubset::Component(1)];
    let mut runs: Vec<SplitSpectrum> = Vec::new();
    for s in &subsets {
        let space = constrained_sources(data, s)?;
        let n = n_max.map_or(space.dim(), |n| n.min(space.dim()));
        runs.push(split_from_space(&space, n)?);
    }
    let threshold = runs
        .iter()
        .map(|r| r.t_values.last().copied().unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);

    // (value, run, index) below the threshold, sorted; single-linkage groups.
    let mut entries: Vec<(f64, usize, usize)> = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for (i, &t) in run.t_values.iter().enumerate() {
            if t <= threshold * (1.0 + tau) {
                entries.push((t, r, i));
            }
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut groups: Vec<Vec<(f64, usize, usize)>> = Vec::new();
    for e in entries {
        match groups.last_mut() {
            Some(g) if (e.0 - g.last().unwrap().0).abs() <= tau * e.0.abs().max(1.0) => g.push(e),
            _ => groups.push(vec![e]),
        }
    }

    let mut regions: Vec<RegionSpectrum> = Region::all_five()
        .into_iter()
        .map(|region| RegionSpectrum {
            region,
            values: Vec::new(),
            kappas: Vec::new(),
        })
        .collect();
    let slot = |region: Region| Region::all_five().iter().position(|r| *r == region).unwrap();
    let (mut ambiguous, mut examined) = (0, 0);
    for g in &groups {
        let count = |r: usize| g.iter().filter(|e| e.1 == r).count();
        let (a, b, c) = (count(0), count(1), count(2));
        // The run whose minimisers represent the region.
        let verdict = match (a, b, c) {
            (a, b, 0) if a > 0 && a == b => Some((Region::Inside(0), 0)),
            (a, 0, c) if a > 0 && a == c => Some((Region::Inside(1), 0)),
            (_, 0, 0) => Some((Region::Outside, 0)),
            (0, _, 0) => Some((Region::Complement(0), 1)),
            (0, 0, _) => Some((Region::Complement(1), 2)),
            _ => None,
        };
        // An enclosed region's eigenfunctions come out of two runs and must
        // be the same functions in both; a mere value coincidence is not.
        let verdict = verdict.filter(|&(region, _)| match region {
            Region::Inside(i) => {
                let pick = |r: usize| -> Vec<&Vec<f64>> { g.iter().filter(|e| e.1 == r).map(|e| &runs[r].kappas[e.2]).collect() };
                min_cosine(&pick(0), &pick(i + 1)) >= SAME_SPACE_COSINE
            }
            _ => true,
        });
        examined += g.len();
        match verdict {
            Some((region, source)) => {
                for &(_, r, i) in g {
                    runs[r].labels[i] = Some(ModeLabel::Region(region));
                }
                let dst = &mut regions[slot(region)];
                for &(t, r, i) in g.iter().filter(|e| e.1 == source) {
                    dst.values.push(t);
                    dst.kappas.push(runs[r].kappas[i].clone());
                }
            }
            None => {
                ambiguous += g.len();
                for &(_, r, i) in g {
                    runs[r].labels[i] = Some(ModeLabel::Ambiguous);
                }
            }
        }
    }
    if examined > 0 && ambiguous as f64 > MAX_AMBIGUOUS_FRACTION * examined as f64 {
        return Err(Error::Ambiguous {
            ambiguous,
            total: examined,
        });
    }
    let [r0, r1, r2]: [SplitSpectrum; 3] = runs.try_into().expect("three runs");
    Ok(SpectralAssignment {
        runs: [r0, r1, r2],
        regions,
        threshold,
        tau,
        ambiguous,
        examined,
    })
}

/// Smallest cosine of the principal angles between two equally sized sets
/// of orthonormal vectors.
fn min_cosine(a: &[&Vec<f64>], b: &[&Vec<f64>]) -> f64 {
    let k = a.len();
    let cross = DMatrix::from_fn(k, k, |p, q| a[p].iter().zip(b[q]).map(|(x, y)| x * y).sum::<f64>());
    cross.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// The part of Σ on which the extended eigenfunctions of a region vanish.
pub fn region_boundary(region: Region) -> SigmaSubset {
    match region {
        Region::Inside(i) | Region::Complement(i) => SigmaSubset::Component(i),
        Region::Outside => SigmaSubset::All,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedMode {
    pub region: Region,
    pub value: f64,
    /// Unit-norm Fourier coefficients of the zero-extended eigenfunction.
    pub kappa: Vec<f64>,
    /// Sup of the synthesised function on the certifying vertex set.
    pub certificate: f64,
}

/// Normalised coefficients of the extended eigenfunctions of one region.
///
/// Without a manifold the certificate is the trace residual on the region's
/// boundary part of Σ. With `oracle = Some((basis, outside))` it is the sup
/// of `Σ_j κ_j φ_j` over the listed vertices outside the region.
pub fn extended_eigenfunctions(
    spectrum: &RegionSpectrum,
    data: &SpectralDataset,
    oracle: Option<(&EigenBasis, &[usize])>,
) -> Result<Vec<ExtendedMode>> {
    let cols = region_boundary(spectrum.region).columns(data)?;
    let mut out = Vec::with_capacity(spectrum.values.len());
    for (&value, kappa) in spectrum.values.iter().zip(&spectrum.kappas) {
        let norm = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
        let kappa: Vec<f64> = kappa.iter().map(|k| k / norm).collect();
        let certificate = match oracle {
            None => max_trace(data, &cols, &kappa),
            Some((basis, verts)) => complement_sup(basis, &kappa, verts)?,
        };
        out.push(ExtendedMode {
            region: spectrum.region,
            value,
            kappa,
            certificate,
        });
    }
    Ok(out)
}

/// Sup over `verts` of the function with coefficients `kappa`.
pub fn complement_sup(basis: &EigenBasis, kappa: &[f64], verts: &[usize]) -> Result<f64> {
    if kappa.len() > basis.len() {
        return Err(Error::DimensionMismatch {
            what: "coefficients vs eigenbasis",
            expected: basis.len(),
            got: kappa.len(),
        });
    }
    Ok(verts
        .iter()
        .map(|&v| kappa.iter().enumerate().map(|(j, k)| k * basis.modes[(v, j)]).sum::<f64>().abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::projector_distance;
    use crate::manifold::{
        build_manifold, eigendecompose, emit_spectral_data, region_vertices, subdomain_dirichlet_modes, ComponentSpec, DataKind, GeometrySpec,
        Hypersurface,
    };
    use core::f64::consts::PI;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn cycle_split(n: usize, comps: &[(usize, usize, usize)], count: usize) -> (crate::manifold::DiscreteManifold, Hypersurface, EigenBasis, SpectralDataset) {
        let man = build_manifold(&GeometrySpec::uniform_cycle(n, 2.0 * PI)).unwrap();
        let specs: Vec<ComponentSpec> = comps.iter().map(|&(a, b, seed)| ComponentSpec { vertices: vec![a, b], seed }).collect();
        let sigma = Hypersurface::carve(&man, &specs).unwrap();
        let basis = eigendecompose(&man, count).unwrap();
        let data = emit_spectral_data(&basis, &sigma, DataKind::Dirichlet).unwrap();
        (man, sigma, basis, data)
    }

    #[test]
    fn constrained_dimensions_and_feasibility() {
        let (_, _, _, data) = cycle_split(16, &[(0, 7, 1)], 16);
        let all = constrained_sources(&data, &SigmaSubset::All).unwrap();
        assert_eq!(all.dim(), 14);
        assert!(all.trace_residual < 1e-10);
        let free = constrained_sources(&data, &SigmaSubset::Components(vec![])).unwrap();
        assert_eq!(free.dim(), 16);
        // H¹-orthonormal columns.
        let h1 = DMatrix::from_fn(all.dim(), all.dim(), |a, b| {
            (0..16).map(|j| (1.0 + data.lambdas[j]) * all.basis[(j, a)] * all.basis[(j, b)]).sum::<f64>()
        });
        assert!((h1 - DMatrix::identity(14, 14)).amax() < 1e-10);
        assert!(maxmin_spectrum(&data, &SigmaSubset::All, 0).unwrap().t_values.is_empty());
        assert!(maxmin_spectrum(&data, &SigmaSubset::All, 15).is_err());
    }

    #[test]
    fn union_of_path_spectra() {
        let (man, sigma, _, data) = cycle_split(16, &[(0, 7, 1)], 16);
        let split = maxmin_spectrum(&data, &SigmaSubset::All, 14).unwrap();
        let mut expect = crate::manifold::subdomain_dirichlet_spectrum(&man, &sigma, Region::Inside(0), 16).unwrap();
        expect.extend(crate::manifold::subdomain_dirichlet_spectrum(&man, &sigma, Region::Outside, 16).unwrap());
        expect.sort_by(f64::total_cmp);
        for (a, b) in split.t_values.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-8 * b.max(1.0), "{a} vs {b}");
        }
        for (n, k) in split.kappas.iter().enumerate() {
            for (p, q) in split.kappas.iter().enumerate() {
                let d: f64 = k.iter().zip(q).map(|(a, b)| a * b).sum();
                assert!((d - if n == p { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn asymmetric_split_is_attributed() {
        let (man, sigma, basis, data) = cycle_split(16, &[(0, 3, 1), (7, 12, 8)], 16);
        let asg = assign_spectra(&data, None, 1e-6).unwrap();
        assert_eq!(asg.ambiguous, 0);
        for region in Region::all_five() {
            let (oracle, modes) = subdomain_dirichlet_modes(&man, &sigma, region, 16).unwrap();
            let got = asg.region(region);
            // A prefix of the region's spectrum that never splits a degenerate pair.
            let k = got.values.len();
            assert!(k >= oracle.len().min(5), "{}", region.label());
            assert!(k == oracle.len() || oracle[k] - oracle[k - 1] > 1e-6);
            for (a, b) in got.values.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8 * b.max(1.0));
            }
            let outside: Vec<usize> = {
                let inner = region_vertices(&sigma, region);
                (0..16).filter(|v| !inner.contains(v)).collect()
            };
            let ext = extended_eigenfunctions(got, &data, Some((&basis, &outside))).unwrap();
            assert!(ext.iter().all(|m| m.certificate < 1e-8));
            let blind = extended_eigenfunctions(got, &data, None).unwrap();
            assert!(blind.iter().all(|m| m.certificate < 1e-10));
            // Compare spans through mode coefficients.
            let kap = DMatrix::from_fn(16, k, |j, c| ext[c].kappa[j]);
            let weighted = DMatrix::from_fn(16, k, |v, c| modes[(v, c)] * man.mass[v]);
            let oracle_kap = basis.modes.transpose() * weighted;
            assert!(projector_distance(&kap, &oracle_kap) < 1e-6);
        }
    }

    #[test]
    fn symmetric_split_is_ambiguous() {
        let (_, _, _, data) = cycle_split(16, &[(0, 3, 1), (8, 11, 9)], 16);
        assert!(matches!(assign_spectra(&data, None, 1e-6), Err(Error::Ambiguous { .. })));
    }

    #[test]
    fn too_few_components() {
        let (_, _, _, data) = cycle_split(16, &[(0, 7, 1)], 16);
        assert!(assign_spectra(&data, None, 1e-6).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn more_constraints_raise_values(a in 0usize..4, gap in 2usize..5, b in 10usize..15) {
            let (_, _, _, data) = cycle_split(24, &[(a, a + gap, a + 1), (b, b + 4, b + 1)], 24);
            let one = maxmin_spectrum(&data, &SigmaSubset::Component(0), 18).unwrap();
            let both = maxmin_spectrum(&data, &SigmaSubset::All, 18).unwrap();
            let closed = &data.lambdas;
            for n in 0..18 {
                prop_assert!(both.t_values[n] >= one.t_values[n] - 1e-9);
                prop_assert!(one.t_values[n] >= closed[n] - 1e-9);
            }
        }
    }
}
