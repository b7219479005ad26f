//! Composition of plaquette maps into level maps and the states `φ_n`.
//!
//! The maps are applied in the forward order `E_root`, then the
//! out-boundary of each level `n = 1, 2, ...` in its enumeration order, so
//! `φ_n = φ0 ∘ E_{n,n+1} ∘ ⋯ ∘ E_{1,2} ∘ E_root`.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{tensor_all, AlgebraError, LocalOperator, ProductOperator, ProductState, SiteDims};
use crate::graph::{Region, VertexId};
use crate::linalg::{self, Mat, C64, ONE, ZERO};
use crate::tessellation::{Classification, Tessellation, TessellationError};
use crate::tolerances::{Tolerances, FACTOR_SPLIT_TOL};
use crate::transition::{
    make_isometry_te, make_product_te, make_transpose_te, make_unrepaired_isometry_te, plaquette_of,
    CompatibilityReport, GenericTe, KrausTe, TeError, TransitionExpectation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error(transparent)]
    Tessellation(#[from] TessellationError),
    #[error("standing conditions fail: {0}")]
    ConditionsFailed(String),
    #[error("map at {site} does not match its classification: {reason}")]
    TeMismatch { site: VertexId, reason: String },
    #[error(transparent)]
    Te(TeError),
    #[error(transparent)]
    Algebra(AlgebraError),
    #[error("joint dimension {dim} on {support:?} exceeds the cap {max}")]
    Cap { support: Region, dim: usize, max: usize },
    #[error("level {n} is outside 0..={max}")]
    LevelOutOfRange { n: usize, max: usize },
    #[error("support {0:?} is not covered by the tessellation")]
    NotCovered(Region),
    #[error("observable first covered at level {n0}; depth {depth} gives fewer than two evaluations")]
    TooShallow { n0: usize, depth: usize },
    #[error("input is not factorized over the in-boundary: {0}")]
    NotFactorized(String),
}

impl From<AlgebraError> for FieldError {
    fn from(e: AlgebraError) -> Self {
        match e {
            AlgebraError::DimensionCap { support, dim, max } => FieldError::Cap { support, dim, max },
            other => FieldError::Algebra(other),
        }
    }
}

impl From<TeError> for FieldError {
    fn from(e: TeError) -> Self {
        match e {
            TeError::Algebra(a) => a.into(),
            other => FieldError::Te(other),
        }
    }
}

impl FieldError {
    pub fn is_cap(&self) -> bool {
        matches!(self, FieldError::Cap { .. })
    }
}

/// How the map at one site is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TeSource {
    Product,
    Isometry { seed: u64 },
    UnrepairedIsometry { seed: u64 },
    Transpose,
    /// Kraus operators with rows in canonical plaquette order and columns in
    /// canonical `N^(s)` order; `np`/`ns` must match the classification.
    Kraus { np: Region, ns: Region, kraus: Vec<Mat> },
    Map(TransitionExpectation),
}

/// Reference state, maps and tessellation.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    tess: Tessellation,
    dims: SiteDims,
    phi0: ProductState,
    tol: Tolerances,
    maps: Vec<TransitionExpectation>,
    levels: Vec<Range<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectivityReport {
    pub level: usize,
    pub pass: bool,
    pub residual: f64,
    pub deltas: Vec<Region>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stabilized,
    NotStabilized,
    PhaseTransitionSuspected,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stabilized => "stabilized",
            Verdict::NotStabilized => "not-stabilized",
            Verdict::PhaseTransitionSuspected => "phase-transition-suspected",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub observable: String,
    pub support: Region,
    pub covering_level: usize,
    /// Levels `n` at which `φ_n(a)` was evaluated.
    pub levels: Vec<usize>,
    pub values: Vec<f64>,
    pub max_imaginary: f64,
    pub successive_deviations: Vec<f64>,
    pub max_successive_deviation: f64,
    /// `n_a`: set only for the verdict "stabilized".
    pub stabilization_index: Option<usize>,
    /// Smallest `m` before the last level such that all later values agree
    /// with `φ_m(a)` within tolerance.
    pub tail_stabilization_index: Option<usize>,
    pub clusters: usize,
    pub all_compatible: bool,
    pub verdict: Verdict,
    /// Largest localization residual of `E_{n-1,n} ∘ ⋯ ∘ E_root(a)` in
    /// `∂←V_n`; `None` when the forward pass exceeds the cap.
    pub intermediate_localization: Option<f64>,
}

/// `Δ_j = D_j \ (D_1 ∪ ⋯ ∪ D_{j-1})`.
pub fn delta_decomposition(sets: &[Region]) -> Vec<Region> {
    let mut seen = Region::empty();
    sets.iter()
        .map(|d| {
            let delta = d.difference(&seen);
            seen = seen.union(d);
            delta
        })
        .collect()
}

fn check_against_class(te: &TransitionExpectation, class: &Classification) -> Result<(), FieldError> {
    let mismatch = |reason: String| FieldError::TeMismatch { site: class.vertex.clone(), reason };
    if te.site() != &class.vertex {
        return Err(mismatch(format!("site {}", te.site())));
    }
    if te.domain() != &plaquette_of(class) {
        return Err(mismatch(format!("domain {:?}", te.domain())));
    }
    if te.np() != &class.np || te.ns() != &class.ns {
        return Err(mismatch(format!("np {:?}, ns {:?}", te.np(), te.ns())));
    }
    if te.codomain() != &class.ns {
        return Err(mismatch(format!("codomain {:?}", te.codomain())));
    }
    Ok(())
}

impl FieldSpec {
    /// Builds every map for the classified sites. Fails when a standing
    /// condition of the tessellation fails.
    pub fn new(
        tess: Tessellation,
        dims: SiteDims,
        phi0: ProductState,
        tol: Tolerances,
        assign: impl Fn(&Classification) -> TeSource + Sync,
    ) -> Result<Self, FieldError> {
        let report = tess.check_conditions();
        if !report.all_pass() {
            let mut failed = Vec::new();
            if !report.n0_empty.pass {
                failed.push("N0 empty");
            }
            if !report.s_disjoint.pass {
                failed.push("successor disjointness");
            }
            if !report.edge_bipartition.pass {
                failed.push("edge bipartition");
            }
            return Err(FieldError::ConditionsFailed(failed.join(", ")));
        }
        let last = tess.level(tess.depth()).expect("depth >= 1");
        phi0.validate_region(&last.v, &dims, &tol)?;
        let classes: Vec<&Classification> = tess.classifications().collect();
        let maps: Vec<TransitionExpectation> = classes
            .par_iter()
            .map(|class| -> Result<TransitionExpectation, FieldError> {
                let te: TransitionExpectation = match assign(class) {
                    TeSource::Product => make_product_te(&phi0, &dims, class, &tol)?.into(),
                    TeSource::Isometry { seed } => make_isometry_te(seed, &phi0, &dims, class, &tol)?.into(),
                    TeSource::UnrepairedIsometry { seed } => make_unrepaired_isometry_te(seed, &dims, class)?.into(),
                    TeSource::Transpose => make_transpose_te(&dims, class)?.into(),
                    TeSource::Kraus { np, ns, kraus } => {
                        if np != class.np || ns != class.ns {
                            return Err(FieldError::TeMismatch {
                                site: class.vertex.clone(),
                                reason: format!("given np {np:?}, ns {ns:?}; expected np {:?}, ns {:?}", class.np, class.ns),
                            });
                        }
                        KrausTe::new(class.vertex.clone(), plaquette_of(class), ns.clone(), np, ns, &dims, kraus)?.into()
                    }
                    TeSource::Map(te) => te,
                };
                check_against_class(&te, class)?;
                Ok(te)
            })
            .collect::<Result<_, _>>()?;
        let mut levels: Vec<Range<usize>> = std::iter::once(0..1).collect();
        let mut start = 1;
        for n in 1..tess.depth() {
            let len = tess.level(n).unwrap().out_boundary.len();
            levels.push(start..start + len);
            start += len;
        }
        Ok(FieldSpec { tess, dims, phi0, tol, maps, levels })
    }

    pub fn tessellation(&self) -> &Tessellation {
        &self.tess
    }

    pub fn dims(&self) -> &SiteDims {
        &self.dims
    }

    pub fn phi0(&self) -> &ProductState {
        &self.phi0
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn max_dim(&self) -> usize {
        self.dims.max_dim()
    }

    /// All maps in forward order.
    pub fn maps(&self) -> &[TransitionExpectation] {
        &self.maps
    }

    /// Highest `n` for which `E_{n,n+1}` is available.
    pub fn max_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// Maps of level `n` (`n = 0` is the root map) in enumeration order.
    pub fn level_maps(&self, n: usize) -> Result<&[TransitionExpectation], FieldError> {
        self.levels
            .get(n)
            .map(|r| &self.maps[r.clone()])
            .ok_or(FieldError::LevelOutOfRange { n, max: self.max_level() })
    }

    /// `E_root, ..., E_{n,n+1}` in forward order.
    pub fn maps_upto(&self, n: usize) -> Result<&[TransitionExpectation], FieldError> {
        let r = self.levels.get(n).ok_or(FieldError::LevelOutOfRange { n, max: self.max_level() })?;
        Ok(&self.maps[..r.end])
    }

    pub fn map_at(&self, y: &VertexId) -> Option<&TransitionExpectation> {
        self.maps.iter().find(|te| te.site() == y)
    }

    pub fn compatibility_reports(&self) -> Result<Vec<CompatibilityReport>, FieldError> {
        self.maps
            .par_iter()
            .map(|te| te.check_compatibility(&self.phi0, self.tol.compatibility).map_err(FieldError::from))
            .collect()
    }

    pub fn all_compatible(&self) -> Result<bool, FieldError> {
        Ok(self.compatibility_reports()?.iter().all(|r| r.pass))
    }

    fn apply_tracked(&self, te: &TransitionExpectation, op: &mut ProductOperator, absorb_identity: bool) -> Result<(), FieldError> {
        let hit = op.take_intersecting(te.domain());
        let merged = tensor_all(hit, self.max_dim())?;
        let out = te.apply(&merged, self.max_dim())?;
        let mut piece = ProductOperator::from_local(out);
        piece.simplify_with(FACTOR_SPLIT_TOL, absorb_identity);
        op.absorb(piece);
        Ok(())
    }

    /// `E_{n,n+1}` on a product of local factors, tracking minimal supports.
    /// Images of the identity stay explicit factors, so the result compares
    /// factor by factor with single-plaquette applications.
    pub fn level_map_apply_product(&self, n: usize, a: &ProductOperator) -> Result<ProductOperator, FieldError> {
        let mut op = a.clone();
        for te in self.level_maps(n)? {
            self.apply_tracked(te, &mut op, false)?;
        }
        Ok(op)
    }

    pub fn level_map_apply(&self, n: usize, a: &LocalOperator) -> Result<LocalOperator, FieldError> {
        let out = self.level_map_apply_product(n, &ProductOperator::from_local(a.clone()))?;
        Ok(out.to_local(self.max_dim())?)
    }

    /// `E_{n,n+1}` without factor tracking: each map acts on the whole
    /// current operator.
    pub fn level_map_apply_dense(&self, n: usize, a: &LocalOperator) -> Result<LocalOperator, FieldError> {
        let mut op = a.clone();
        for te in self.level_maps(n)? {
            op = te.apply(&op, self.max_dim())?;
        }
        Ok(op)
    }

    /// `E_{n,n+1} ∘ ⋯ ∘ E_root` on a product of local factors.
    pub fn full_map_apply_product(&self, n: usize, a: &ProductOperator) -> Result<ProductOperator, FieldError> {
        let mut op = a.clone();
        for te in self.maps_upto(n)? {
            self.apply_tracked(te, &mut op, true)?;
        }
        Ok(op)
    }

    pub fn full_map_apply(&self, n: usize, a: &LocalOperator) -> Result<LocalOperator, FieldError> {
        let out = self.full_map_apply_product(n, &ProductOperator::from_local(a.clone()))?;
        Ok(out.to_local(self.max_dim())?)
    }

    /// `φ_n(a)`, pulled back through the maps in the Schrödinger picture.
    ///
    /// With `S_k = supp(a) ∪ codomain(E_1) ∪ ⋯ ∪ codomain(E_{k-1})`, the
    /// functional `ω_k = ω_{k+1} ∘ E_k` is only needed on `S_k`; it is kept
    /// as a product of density factors and each map only touches the factors
    /// meeting its codomain.
    pub fn phi_n(&self, n: usize, a: &LocalOperator) -> Result<C64, FieldError> {
        let maps = self.maps_upto(n)?;
        let max = self.max_dim();
        let mut needed = Vec::with_capacity(maps.len() + 1);
        needed.push(a.support().clone());
        for te in maps {
            let next = needed.last().unwrap().union(te.codomain());
            needed.push(next);
        }
        let mut omega = ProductOperator::identity();
        for v in needed.last().unwrap() {
            omega.absorb(ProductOperator::from_local(LocalOperator::single_site(v.clone(), self.phi0.density(v)?.clone())?));
        }
        for (k, te) in maps.iter().enumerate().rev() {
            let keep = needed[k].difference(te.domain()).union(te.codomain());
            omega.partial_trace(&needed[k + 1].difference(&keep))?;
            let merged = tensor_all(omega.take_intersecting(te.codomain()), max)?;
            let pulled = te.apply_predual(&merged, max)?;
            let reduced = pulled.partial_trace(&te.domain().difference(&needed[k]))?;
            let mut piece = ProductOperator::from_local(reduced);
            piece.simplify_with(FACTOR_SPLIT_TOL, false);
            omega.absorb(piece);
        }
        let rho = omega.to_local(max)?;
        debug_assert_eq!(rho.support(), a.support());
        Ok(contract(rho.matrix(), a.matrix()))
    }

    /// `φ_n(a)` as `φ0` applied to the forward full map.
    pub fn phi_n_forward(&self, n: usize, a: &LocalOperator) -> Result<C64, FieldError> {
        let out = self.full_map_apply_product(n, &ProductOperator::from_local(a.clone()))?;
        Ok(out.expectation(&self.phi0)?)
    }

    /// Brute-force `φ_n(a)`: every intermediate is re-embedded into the full
    /// truncation algebra `A_L`, `L = V_{n+1} ∪ supp(a)`.
    pub fn oracle_eval(&self, n: usize, a: &LocalOperator) -> Result<C64, FieldError> {
        let maps = self.maps_upto(n)?;
        let level = self.tess.level(n + 1).ok_or(FieldError::LevelOutOfRange { n, max: self.max_level() })?;
        let l = level.v.union(a.support());
        let dims = self.dims.leg_dims(&l)?;
        self.dims.check_cap(&l, &dims)?;
        let mut op = a.embed(&l, &self.dims)?;
        for te in maps {
            op = te.apply_embedded(&op)?;
        }
        Ok(self.phi0.eval(&op)?)
    }

    /// Largest joint dimension the oracle would materialize at level `n`.
    pub fn oracle_dim(&self, n: usize, a: &LocalOperator) -> Option<usize> {
        let level = self.tess.level(n + 1)?;
        let l = level.v.union(a.support());
        linalg::checked_product(&self.dims.leg_dims(&l).ok()?)
    }

    /// Compares `E_{n,n+1}(b)` with `⊗_j E_{y_j}(b_{Δ_j})` for `b` a product
    /// of factors on `∂←V_n`, each contained in a single `Δ_j`.
    pub fn verify_projectivity(&self, n: usize, b: &[LocalOperator]) -> Result<ProjectivityReport, FieldError> {
        let maps = self.level_maps(n)?;
        let max = self.max_dim();
        let nps: Vec<Region> = maps.iter().map(|te| te.np().clone()).collect();
        let deltas = delta_decomposition(&nps);
        let input = ProductOperator::new(ONE, b.to_vec())?;
        let covered = deltas.iter().fold(Region::empty(), |acc, d| acc.union(d));
        let mut parts: Vec<Vec<LocalOperator>> = vec![Vec::new(); maps.len()];
        for f in b {
            match deltas.iter().position(|d| f.support().is_subset(d)) {
                Some(j) => parts[j].push(f.clone()),
                None if f.support().is_disjoint(&covered) => {
                    return Err(FieldError::NotFactorized(format!("factor on {:?} lies outside ∂←V_{n}", f.support())))
                }
                None => return Err(FieldError::NotFactorized(format!("factor on {:?} straddles two Δ sets", f.support()))),
            }
        }
        let lhs = self.level_map_apply_product(n, &input)?;
        let mut rhs_factors = Vec::with_capacity(maps.len());
        for (te, part) in maps.iter().zip(parts) {
            let b_delta = tensor_all(part, max)?;
            rhs_factors.push(te.apply(&b_delta, max)?);
        }
        let mut rhs = ProductOperator::new(ONE, rhs_factors)?;
        rhs.simplify_with(FACTOR_SPLIT_TOL, false);
        let residual = lhs.distance(&rhs, max)?;
        Ok(ProjectivityReport { level: n, pass: residual <= self.tol.equivalence, residual, deltas })
    }

    /// Localization residual of `E_{n,n+1}(a)` in `∂←V_{n+1}`.
    pub fn level_localization(&self, n: usize, a: &ProductOperator) -> Result<f64, FieldError> {
        let target = &self.tess.level(n + 1).ok_or(FieldError::LevelOutOfRange { n, max: self.max_level() })?.in_boundary;
        Ok(self.level_map_apply_product(n, a)?.localization_residual(target))
    }

    /// `φ_n(a)` for `n0 ≤ n ≤ depth-1` with the stabilization verdict.
    pub fn convergence_report(&self, name: &str, a: &LocalOperator, tol: f64) -> Result<ConvergenceReport, FieldError> {
        let n0 = self.tess.covering_level(a.support()).ok_or_else(|| FieldError::NotCovered(a.support().clone()))?;
        let last = self.max_level();
        if n0 >= last {
            return Err(FieldError::TooShallow { n0, depth: self.tess.depth() });
        }
        let levels: Vec<usize> = (n0..=last).collect();
        let raw: Vec<C64> = levels.par_iter().map(|&n| self.phi_n(n, a)).collect::<Result<_, _>>()?;
        let values: Vec<f64> = raw.iter().map(|z| z.re).collect();
        let max_imaginary = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let successive_deviations: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let max_successive_deviation = successive_deviations.iter().copied().fold(0.0, f64::max);
        let within = |m: usize| values[m..].iter().all(|v| (v - values[m]).abs() <= tol);
        let stabilized = successive_deviations.iter().all(|&d| d <= tol) && within(0);
        let tail_stabilization_index = (0..values.len() - 1).find(|&m| within(m)).map(|m| levels[m]);
        let all_compatible = self.all_compatible()?;
        let (clusters, reentered) = cluster_visits(&values, 10.0 * tol);
        let verdict = if stabilized {
            Verdict::Stabilized
        } else if !all_compatible && clusters >= 2 && reentered {
            Verdict::PhaseTransitionSuspected
        } else {
            Verdict::NotStabilized
        };
        let intermediate_localization = self.intermediate_localization(a, n0.max(1), last).ok();
        Ok(ConvergenceReport {
            observable: name.to_string(),
            support: a.support().clone(),
            covering_level: n0,
            levels,
            values,
            max_imaginary,
            successive_deviations,
            max_successive_deviation,
            stabilization_index: stabilized.then_some(n0),
            tail_stabilization_index,
            clusters,
            all_compatible,
            verdict,
            intermediate_localization,
        })
    }

    /// Largest residual of `E_{n-1,n} ∘ ⋯ ∘ E_root(a)` in `∂←V_n` over
    /// `from ≤ n ≤ to`.
    pub fn intermediate_localization(&self, a: &LocalOperator, from: usize, to: usize) -> Result<f64, FieldError> {
        let mut op = ProductOperator::from_local(a.clone());
        let mut worst: f64 = 0.0;
        for n in 1..=to {
            for te in self.level_maps(n - 1)? {
                self.apply_tracked(te, &mut op, true)?;
            }
            if n >= from {
                let target = &self.tess.level(n).unwrap().in_boundary;
                worst = worst.max(op.localization_residual(target));
            }
        }
        Ok(worst)
    }
}

/// `tr(ρ a) = Σ_ij ρ_ji a_ij`.
fn contract(rho: &Mat, a: &Mat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += rho[(j, i)] * a[(i, j)];
        }
    }
    acc
}

/// Single-linkage clusters of the values (gap > `gap`), and whether the
/// sequence returns to a cluster after leaving it.
fn cluster_visits(values: &[f64], gap: f64) -> (usize, bool) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut bounds = vec![sorted[0]];
    for w in sorted.windows(2) {
        if w[1] - w[0] > gap {
            bounds.push(w[1]);
        }
    }
    let id = |v: f64| bounds.iter().rposition(|&b| v >= b).unwrap();
    let ids: Vec<usize> = values.iter().map(|&v| id(v)).collect();
    let mut left = std::collections::BTreeSet::new();
    let mut reentered = false;
    for w in ids.windows(2) {
        if w[0] != w[1] {
            left.insert(w[0]);
            if left.contains(&w[1]) {
                reentered = true;
            }
        }
    }
    (bounds.len(), reentered)
}

/// Convenience for tests and tools: a generic map from a matrix function on
/// the plaquette of `class`, with codomain `N^(s)`.
pub fn generic_map(dims: &SiteDims, class: &Classification, f: impl Fn(&Mat) -> Mat) -> Result<TransitionExpectation, FieldError> {
    Ok(GenericTe::from_fn(class.vertex.clone(), plaquette_of(class), class.ns.clone(), class.np.clone(), class.ns.clone(), dims, f)?.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_graph, GraphSpec};
    use crate::rng::stream_rng;

    fn v(i: i64) -> VertexId {
        VertexId::index(i)
    }

    fn region(ids: &[i64]) -> Region {
        ids.iter().copied().map(v).collect()
    }

    fn biased() -> ProductState {
        ProductState::uniform(Mat::from_row_slice(
            2,
            2,
            &[C64::new(0.75, 0.0), C64::new(0.1, 0.05), C64::new(0.1, -0.05), C64::new(0.25, 0.0)],
        ))
    }

    fn spec(graph: GraphSpec, root: i64, depth: usize, source: TeSource) -> FieldSpec {
        let g = make_graph(&graph).unwrap();
        let t = Tessellation::build(&g, v(root), depth).unwrap();
        FieldSpec::new(t, SiteDims::qubits(), biased(), Tolerances::default(), move |_| source.clone()).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_decomposition(&[region(&[1, 2]), region(&[2, 3])]), vec![region(&[1, 2]), region(&[3])]);
        let d = region(&[4, 5]);
        assert_eq!(delta_decomposition(&[d.clone(), d.clone(), d.clone()]), vec![d.clone(), Region::empty(), Region::empty()]);
    }

    #[test]
    fn product_maps_reproduce_reference_state() {
        let f = spec(GraphSpec::Path { n: None }, 1, 4, TeSource::Product);
        let mut rng = stream_rng(3, 0);
        let a = LocalOperator::new(region(&[1, 2, 3]), f.dims(), linalg::random_gaussian(&mut rng, 8, 8)).unwrap();
        let expected = f.phi0().eval(&a).unwrap();
        for n in 0..=f.max_level() {
            let got = f.phi_n(n, &a).unwrap();
            assert!((got - expected).norm() < 1e-12, "n={n}: {got} vs {expected}");
        }
    }

    #[test]
    fn pullback_matches_forward_and_oracle() {
        for (graph, root, depth) in [(GraphSpec::Path { n: None }, 1, 4), (GraphSpec::RegularTree { k: 3 }, 0, 2)] {
            let f = spec(graph, root, depth, TeSource::UnrepairedIsometry { seed: 17 });
            let mut rng = stream_rng(5, 0);
            let sup = f.tessellation().level(1).unwrap().v.clone();
            let dim = f.dims().region_dim(&sup).unwrap();
            let a = LocalOperator::new(sup, f.dims(), linalg::random_gaussian(&mut rng, dim, dim)).unwrap();
            for n in 0..=f.max_level() {
                let p = f.phi_n(n, &a).unwrap();
                let q = f.phi_n_forward(n, &a).unwrap();
                assert!((p - q).norm() < 1e-10, "forward n={n}: {p} vs {q}");
                if f.oracle_dim(n, &a).unwrap() <= 1024 {
                    let o = f.oracle_eval(n, &a).unwrap();
                    assert!((p - o).norm() < 1e-10, "oracle n={n}: {p} vs {o}");
                }
            }
        }
    }

    #[test]
    fn unit_is_preserved() {
        let f = spec(GraphSpec::RegularTree { k: 3 }, 0, 3, TeSource::Isometry { seed: 1 });
        let id = LocalOperator::scalar(ONE);
        for n in 0..=f.max_level() {
            assert!((f.phi_n(n, &id).unwrap() - ONE).norm() < 1e-12);
        }
        let id1 = LocalOperator::identity(&region(&[0, 1]), f.dims()).unwrap();
        let out = f.full_map_apply(1, &id1).unwrap();
        assert!(linalg::identity_multiple(out.matrix(), 1e-12).map(|c| (c - ONE).norm() < 1e-12).unwrap_or(false));
    }

    #[test]
    fn projectivity_on_tree() {
        let f = spec(GraphSpec::RegularTree { k: 3 }, 0, 3, TeSource::Isometry { seed: 4 });
        let mut rng = stream_rng(8, 1);
        let b: Vec<LocalOperator> = region(&[1, 2, 3])
            .iter()
            .map(|x| LocalOperator::single_site(x.clone(), linalg::random_gaussian(&mut rng, 2, 2)).unwrap())
            .collect();
        let r = f.verify_projectivity(1, &b).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn conditions_are_enforced() {
        let g = make_graph(&GraphSpec::Lattice { d: 2 }).unwrap();
        let t = Tessellation::build(&g, VertexId::coords(&[0, 0]), 2).unwrap();
        let err = FieldSpec::new(t, SiteDims::qubits(), biased(), Tolerances::default(), |_| TeSource::Product).unwrap_err();
        assert!(matches!(err, FieldError::ConditionsFailed(_)));
    }

    #[test]
    fn clusters_and_reentry() {
        assert_eq!(cluster_visits(&[0.0, 1.0, 0.0], 1e-9), (2, true));
        assert_eq!(cluster_visits(&[0.0, 1.0, 1.0], 1e-9), (2, false));
        assert_eq!(cluster_visits(&[0.5, 0.5], 1e-9), (1, false));
    }
}
