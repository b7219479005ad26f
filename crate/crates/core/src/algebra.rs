//! Operators localized on finite regions, product states, and tensor
//! products of local factors.
//!
//! A [`LocalOperator`] is a dense matrix on `⊗_{x∈Λ} C^{d_x}` with legs in
//! canonical vertex order. The embedding `A_Λ → A_Λ̃` tensors with the
//! identity on `Λ̃ \ Λ` and moves legs into place.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Region, VertexId};
use crate::linalg::{self, Mat, C64, ONE, ZERO};
use crate::tolerances::{Tolerances, DEFAULT_MAX_DIM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("no site dimension assigned to vertex {0}")]
    MissingDimension(VertexId),
    #[error("site dimension {dim} at {site} is below 2")]
    InvalidDimension { site: VertexId, dim: usize },
    #[error("matrix shape {rows}x{cols} does not match the support dimension {expected}")]
    ShapeMismatch { rows: usize, cols: usize, expected: usize },
    #[error("leg dimensions disagree at {0}")]
    LegDimensionMismatch(VertexId),
    #[error("region {sub:?} is not contained in {sup:?}")]
    NotASubset { sub: Region, sup: Region },
    #[error("supports overlap on {0:?}")]
    OverlappingSupports(Region),
    #[error("joint dimension {dim} on {support:?} exceeds the cap {max}")]
    DimensionCap { support: Region, dim: usize, max: usize },
    #[error("no density assigned to vertex {0}")]
    MissingDensity(VertexId),
    #[error("density at {site} is invalid: {reason}")]
    InvalidDensity { site: VertexId, reason: String },
    #[error("unknown named operator {0:?}")]
    UnknownOperator(String),
    #[error("duplicate leg {0} in ordering")]
    DuplicateLeg(VertexId),
}

/// Site dimensions `d_x` together with the cap on any materialized joint
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteDims {
    default: Option<usize>,
    overrides: BTreeMap<VertexId, usize>,
    max_dim: usize,
}

impl SiteDims {
    pub fn uniform(d: usize) -> Result<Self, AlgebraError> {
        if d < 2 {
            return Err(AlgebraError::InvalidDimension { site: VertexId::index(0), dim: d });
        }
        Ok(SiteDims { default: Some(d), overrides: BTreeMap::new(), max_dim: DEFAULT_MAX_DIM })
    }

    pub fn qubits() -> Self {
        SiteDims { default: Some(2), overrides: BTreeMap::new(), max_dim: DEFAULT_MAX_DIM }
    }

    /// Only the listed sites have dimensions.
    pub fn explicit(sites: BTreeMap<VertexId, usize>) -> Result<Self, AlgebraError> {
        let mut s = SiteDims { default: None, overrides: BTreeMap::new(), max_dim: DEFAULT_MAX_DIM };
        for (v, d) in sites {
            s = s.with_site(v, d)?;
        }
        Ok(s)
    }

    pub fn with_site(mut self, site: VertexId, d: usize) -> Result<Self, AlgebraError> {
        if d < 2 {
            return Err(AlgebraError::InvalidDimension { site, dim: d });
        }
        self.overrides.insert(site, d);
        Ok(self)
    }

    pub fn with_max_dim(mut self, max_dim: usize) -> Self {
        self.max_dim = max_dim;
        self
    }

    pub fn max_dim(&self) -> usize {
        self.max_dim
    }

    pub fn dim(&self, v: &VertexId) -> Result<usize, AlgebraError> {
        self.overrides
            .get(v)
            .copied()
            .or(self.default)
            .ok_or_else(|| AlgebraError::MissingDimension(v.clone()))
    }

    pub fn leg_dims(&self, region: &Region) -> Result<Vec<usize>, AlgebraError> {
        region.iter().map(|v| self.dim(v)).collect()
    }

    /// Joint dimension of `region`, failing beyond the cap.
    pub fn region_dim(&self, region: &Region) -> Result<usize, AlgebraError> {
        let dims = self.leg_dims(region)?;
        self.check_cap(region, &dims)
    }

    pub fn check_cap(&self, region: &Region, dims: &[usize]) -> Result<usize, AlgebraError> {
        match linalg::checked_product(dims) {
            Some(d) if d <= self.max_dim => Ok(d),
            other => Err(AlgebraError::DimensionCap {
                support: region.clone(),
                dim: other.unwrap_or(usize::MAX),
                max: self.max_dim,
            }),
        }
    }
}

/// Outcome of a localization test: whether `a` lies in `A_Λ ⊗ id`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Localization {
    pub pass: bool,
    pub residual: f64,
}

#[derive(Clone, PartialEq, Debug)]
pub struct LocalOperator {
    support: Region,
    dims: Vec<usize>,
    matrix: Mat,
}

impl LocalOperator {
    pub fn new(support: Region, dims: &SiteDims, matrix: Mat) -> Result<Self, AlgebraError> {
        let leg_dims = dims.leg_dims(&support)?;
        Self::from_legs(support, leg_dims, matrix)
    }

    pub fn from_legs(support: Region, leg_dims: Vec<usize>, matrix: Mat) -> Result<Self, AlgebraError> {
        let expected = linalg::product(&leg_dims);
        if leg_dims.len() != support.len() || matrix.nrows() != expected || matrix.ncols() != expected {
            return Err(AlgebraError::ShapeMismatch {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                expected,
            });
        }
        Ok(LocalOperator { support, dims: leg_dims, matrix })
    }

    /// Builds an operator whose legs are listed in an arbitrary order.
    pub fn from_ordered(order: &[VertexId], leg_dims: &[usize], matrix: Mat) -> Result<Self, AlgebraError> {
        let support = Region::from(order.to_vec());
        if support.len() != order.len() {
            let dup = order.iter().find(|v| order.iter().filter(|w| w == v).count() > 1).unwrap();
            return Err(AlgebraError::DuplicateLeg(dup.clone()));
        }
        let perm: Vec<usize> = support.iter().map(|v| order.iter().position(|w| w == v).unwrap()).collect();
        let canonical_dims: Vec<usize> = perm.iter().map(|&p| leg_dims[p]).collect();
        let expected = linalg::product(leg_dims);
        if matrix.nrows() != expected || matrix.ncols() != expected {
            return Err(AlgebraError::ShapeMismatch { rows: matrix.nrows(), cols: matrix.ncols(), expected });
        }
        let m = linalg::permute_legs(&matrix, leg_dims, &perm);
        Ok(LocalOperator { support, dims: canonical_dims, matrix: m })
    }

    pub fn scalar(c: C64) -> Self {
        LocalOperator { support: Region::empty(), dims: Vec::new(), matrix: Mat::from_element(1, 1, c) }
    }

    pub fn identity(support: &Region, dims: &SiteDims) -> Result<Self, AlgebraError> {
        let d = dims.region_dim(support)?;
        Self::new(support.clone(), dims, linalg::identity(d))
    }

    pub fn single_site(site: VertexId, matrix: Mat) -> Result<Self, AlgebraError> {
        let d = matrix.nrows();
        Self::from_legs(Region::singleton(site), vec![d], matrix)
    }

    /// Qubit operator `I`, `X`, `Y` or `Z` on one site.
    pub fn named(site: VertexId, name: &str) -> Result<Self, AlgebraError> {
        let m = linalg::pauli(name).ok_or_else(|| AlgebraError::UnknownOperator(name.to_string()))?;
        Self::single_site(site, m)
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn leg_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn into_matrix(self) -> Mat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn leg_dim(&self, v: &VertexId) -> Option<usize> {
        self.support.position(v).map(|i| self.dims[i])
    }

    /// The matrix with legs in the given order (a permutation of the support).
    pub fn matrix_in_order(&self, order: &[VertexId]) -> Mat {
        let perm: Vec<usize> = order.iter().map(|v| self.support.position(v).expect("leg in support")).collect();
        linalg::permute_legs(&self.matrix, &self.dims, &perm)
    }

    pub fn adjoint(&self) -> Self {
        LocalOperator { support: self.support.clone(), dims: self.dims.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, c: C64) -> Self {
        LocalOperator { support: self.support.clone(), dims: self.dims.clone(), matrix: &self.matrix * c }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius(&self.matrix)
    }

    /// `a ⊗ id_{target \ support}` with legs in the canonical order of `target`.
    pub fn embed(&self, target: &Region, dims: &SiteDims) -> Result<Self, AlgebraError> {
        if !self.support.is_subset(target) {
            return Err(AlgebraError::NotASubset { sub: self.support.clone(), sup: target.clone() });
        }
        let mut leg_dims = Vec::with_capacity(target.len());
        for v in target {
            match self.leg_dim(v) {
                Some(d) => {
                    if dims.dim(v).map(|e| e != d).unwrap_or(false) {
                        return Err(AlgebraError::LegDimensionMismatch(v.clone()));
                    }
                    leg_dims.push(d)
                }
                None => leg_dims.push(dims.dim(v)?),
            }
        }
        dims.check_cap(target, &leg_dims)?;
        Ok(self.embed_with(target, &leg_dims))
    }

    /// Embedding with caller-supplied leg dimensions (no cap check).
    pub(crate) fn embed_with(&self, target: &Region, leg_dims: &[usize]) -> Self {
        if *target == self.support {
            return self.clone();
        }
        let extra = target.difference(&self.support);
        let extra_dims: Vec<usize> =
            extra.iter().map(|v| leg_dims[target.position(v).unwrap()]).collect();
        let joint = linalg::kron(&self.matrix, &linalg::identity(linalg::product(&extra_dims)));
        let order: Vec<&VertexId> = self.support.iter().chain(extra.iter()).collect();
        let order_dims: Vec<usize> = self.dims.iter().chain(extra_dims.iter()).copied().collect();
        let perm: Vec<usize> = target.iter().map(|v| order.iter().position(|w| *w == v).unwrap()).collect();
        let m = linalg::permute_legs(&joint, &order_dims, &perm);
        LocalOperator { support: target.clone(), dims: leg_dims.to_vec(), matrix: m }
    }

    /// `a ⊗ b` for disjoint supports.
    pub fn tensor(&self, other: &Self, max_dim: usize) -> Result<Self, AlgebraError> {
        let overlap = self.support.intersection(&other.support);
        if !overlap.is_empty() {
            return Err(AlgebraError::OverlappingSupports(overlap));
        }
        let order: Vec<VertexId> = self.support.iter().chain(other.support.iter()).cloned().collect();
        let order_dims: Vec<usize> = self.dims.iter().chain(other.dims.iter()).copied().collect();
        match linalg::checked_product(&order_dims) {
            Some(d) if d <= max_dim => {}
            other_dim => {
                return Err(AlgebraError::DimensionCap {
                    support: Region::from(order),
                    dim: other_dim.unwrap_or(usize::MAX),
                    max: max_dim,
                })
            }
        }
        Self::from_ordered(&order, &order_dims, linalg::kron(&self.matrix, &other.matrix))
    }

    /// Partial trace over the sites in `out`.
    pub fn partial_trace(&self, out: &Region) -> Result<Self, AlgebraError> {
        if !out.is_subset(&self.support) {
            return Err(AlgebraError::NotASubset { sub: out.clone(), sup: self.support.clone() });
        }
        if out.is_empty() {
            return Ok(self.clone());
        }
        let kept = self.support.difference(out);
        let order: Vec<VertexId> = kept.iter().chain(out.iter()).cloned().collect();
        let m = self.matrix_in_order(&order);
        let kept_dims: Vec<usize> = kept.iter().map(|v| self.leg_dim(v).unwrap()).collect();
        let out_dims: Vec<usize> = out.iter().map(|v| self.leg_dim(v).unwrap()).collect();
        let reduced = linalg::trace_out_trailing(&m, linalg::product(&kept_dims), linalg::product(&out_dims));
        Ok(LocalOperator { support: kept, dims: kept_dims, matrix: reduced })
    }

    /// The normalized partial trace onto `support ∩ region`: the closest
    /// operator of the form `b ⊗ id` (orthogonal projection in the
    /// Hilbert–Schmidt inner product).
    pub fn localize(&self, region: &Region) -> Self {
        let out = self.support.difference(region);
        let d_out: usize = out.iter().map(|v| self.leg_dim(v).unwrap()).product();
        self.partial_trace(&out).expect("subset by construction").scale(C64::new(1.0 / d_out as f64, 0.0))
    }

    /// Whether `a` is of the form `b ⊗ id_{support \ region}`; the residual is
    /// `‖a - b ⊗ id‖_F` with `b` the normalized partial trace.
    pub fn is_localized_in(&self, region: &Region, tol: f64) -> Localization {
        let residual = self.localization_residual(region);
        Localization { pass: residual <= tol, residual }
    }

    pub fn localization_residual(&self, region: &Region) -> f64 {
        if self.support.is_subset(region) {
            return 0.0;
        }
        let b = self.localize(region).embed_with(&self.support, &self.dims);
        linalg::frobenius(&(&self.matrix - b.matrix))
    }

    /// Attempts to factor out the single leg `site`: `a = f ⊗ rest`.
    pub fn split_leg(&self, site: &VertexId, rel_tol: f64) -> Option<(Self, Self)> {
        let pos = self.support.position(site)?;
        if self.support.len() < 2 {
            return None;
        }
        let rest = self.support.difference(&Region::singleton(site.clone()));
        let order: Vec<VertexId> = std::iter::once(site.clone()).chain(rest.iter().cloned()).collect();
        let m = self.matrix_in_order(&order);
        let d = self.dims[pos];
        let rest_dims: Vec<usize> = rest.iter().map(|v| self.leg_dim(v).unwrap()).collect();
        let (a, b) = linalg::split_kron(&m, d, linalg::product(&rest_dims), rel_tol)?;
        Some((
            LocalOperator { support: Region::singleton(site.clone()), dims: vec![d], matrix: a },
            LocalOperator { support: rest, dims: rest_dims, matrix: b },
        ))
    }
}

/// `φ = ⊗_x φ_x` given by per-site densities, with an optional default for
/// every site not listed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductState {
    default: Option<Mat>,
    sites: BTreeMap<VertexId, Mat>,
}

impl ProductState {
    pub fn uniform(rho: Mat) -> Self {
        ProductState { default: Some(rho), sites: BTreeMap::new() }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self::uniform(linalg::identity(d).unscale(d as f64))
    }

    pub fn explicit(sites: BTreeMap<VertexId, Mat>) -> Self {
        ProductState { default: None, sites }
    }

    pub fn with_site(mut self, site: VertexId, rho: Mat) -> Self {
        self.sites.insert(site, rho);
        self
    }

    pub fn density(&self, v: &VertexId) -> Result<&Mat, AlgebraError> {
        self.sites.get(v).or(self.default.as_ref()).ok_or_else(|| AlgebraError::MissingDensity(v.clone()))
    }

    /// Checks hermiticity, unit trace, positivity and dimension of `ρ_v`.
    pub fn validate_site(&self, v: &VertexId, dims: &SiteDims, tol: &Tolerances) -> Result<(), AlgebraError> {
        let rho = self.density(v)?;
        let d = dims.dim(v)?;
        let invalid = |reason: String| AlgebraError::InvalidDensity { site: v.clone(), reason };
        if rho.nrows() != d || rho.ncols() != d {
            return Err(invalid(format!("shape {}x{} but site dimension {d}", rho.nrows(), rho.ncols())));
        }
        let h = linalg::hermitian_residual(rho);
        if h > tol.hermitian {
            return Err(invalid(format!("hermiticity residual {h:e}")));
        }
        let t = rho.trace();
        if (t - ONE).norm() > tol.trace {
            return Err(invalid(format!("trace {t}")));
        }
        let m = linalg::min_hermitian_eigenvalue(rho);
        if m < -tol.psd {
            return Err(invalid(format!("minimum eigenvalue {m:e}")));
        }
        Ok(())
    }

    pub fn validate_region(&self, region: &Region, dims: &SiteDims, tol: &Tolerances) -> Result<(), AlgebraError> {
        region.iter().try_for_each(|v| self.validate_site(v, dims, tol))
    }

    /// `⊗_{x∈region} ρ_x` in canonical leg order.
    pub fn joint_density(&self, region: &Region, max_dim: usize) -> Result<LocalOperator, AlgebraError> {
        let mut acc = LocalOperator::scalar(ONE);
        for v in region {
            let rho = LocalOperator::single_site(v.clone(), self.density(v)?.clone())?;
            acc = acc.tensor(&rho, max_dim)?;
        }
        Ok(acc)
    }

    /// `tr((⊗ρ_x) a)`, contracting one leg at a time.
    pub fn eval(&self, a: &LocalOperator) -> Result<C64, AlgebraError> {
        let mut m = a.matrix().clone();
        for (v, &d) in a.support().iter().zip(a.leg_dims()) {
            let rho = self.density(v)?;
            if rho.nrows() != d {
                return Err(AlgebraError::LegDimensionMismatch(v.clone()));
            }
            let rest = m.nrows() / d;
            m = Mat::from_fn(rest, rest, |r, s| {
                let mut acc = ZERO;
                for i in 0..d {
                    for j in 0..d {
                        let w = rho[(j, i)];
                        if w != ZERO {
                            acc += w * m[(i * rest + r, j * rest + s)];
                        }
                    }
                }
                acc
            });
        }
        Ok(m[(0, 0)])
    }
}

/// `scalar · ⊗_i factor_i` with pairwise disjoint factor supports and the
/// identity everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductOperator {
    scalar: C64,
    factors: Vec<LocalOperator>,
}

impl ProductOperator {
    pub fn identity() -> Self {
        ProductOperator { scalar: ONE, factors: Vec::new() }
    }

    pub fn from_local(op: LocalOperator) -> Self {
        let mut p = Self::identity();
        p.push_factor(op);
        p
    }

    pub fn new(scalar: C64, factors: Vec<LocalOperator>) -> Result<Self, AlgebraError> {
        let mut seen = Region::empty();
        for f in &factors {
            let overlap = seen.intersection(f.support());
            if !overlap.is_empty() {
                return Err(AlgebraError::OverlappingSupports(overlap));
            }
            seen = seen.union(f.support());
        }
        let mut p = ProductOperator { scalar, factors: Vec::new() };
        for f in factors {
            p.push_factor(f);
        }
        Ok(p)
    }

    pub fn scalar(&self) -> C64 {
        self.scalar
    }

    pub fn factors(&self) -> &[LocalOperator] {
        &self.factors
    }

    pub fn support(&self) -> Region {
        self.factors.iter().fold(Region::empty(), |acc, f| acc.union(f.support()))
    }

    pub(crate) fn push_factor(&mut self, f: LocalOperator) {
        if f.support().is_empty() {
            self.scalar *= f.matrix()[(0, 0)];
        } else {
            self.factors.push(f);
            self.factors.sort_by(|a, b| a.support().first().cmp(&b.support().first()));
        }
    }

    /// Multiplies in another product with disjoint support.
    pub fn absorb(&mut self, other: ProductOperator) {
        self.scalar *= other.scalar;
        for f in other.factors {
            self.push_factor(f);
        }
    }

    /// Traces out the listed legs factor by factor; fully traced factors
    /// become scalars. Legs not carried by any factor are ignored.
    pub fn partial_trace(&mut self, out: &Region) -> Result<(), AlgebraError> {
        let hit = self.take_intersecting(out);
        for f in hit {
            let legs = f.support().intersection(out);
            let reduced = f.partial_trace(&legs)?;
            self.push_factor(reduced);
        }
        Ok(())
    }

    /// Removes and returns the factors whose support meets `region`.
    pub fn take_intersecting(&mut self, region: &Region) -> Vec<LocalOperator> {
        let (hit, keep): (Vec<_>, Vec<_>) =
            self.factors.drain(..).partition(|f| !f.support().is_disjoint(region));
        self.factors = keep;
        hit
    }

    /// Splits factors into the finest single-leg pieces that the rank-one
    /// test can certify, and folds identity multiples into the scalar.
    pub fn simplify(&mut self, rel_tol: f64) {
        self.simplify_with(rel_tol, true)
    }

    /// As [`simplify`](Self::simplify); with `absorb_identity = false` every
    /// leg stays carried by some factor.
    pub fn simplify_with(&mut self, rel_tol: f64, absorb_identity: bool) {
        let mut stack: Vec<LocalOperator> = self.factors.drain(..).collect();
        let mut done = Vec::new();
        while let Some(f) = stack.pop() {
            if f.support().is_empty() {
                self.scalar *= f.matrix()[(0, 0)];
                continue;
            }
            if let Some((a, b)) = f.support().iter().find_map(|v| f.split_leg(v, rel_tol)) {
                stack.push(a);
                stack.push(b);
                continue;
            }
            match absorb_identity.then(|| linalg::identity_multiple(f.matrix(), rel_tol)).flatten() {
                Some(c) => self.scalar *= c,
                None => done.push(f),
            }
        }
        for f in done {
            self.push_factor(f);
        }
    }

    /// Dense form on the union of the factor supports.
    pub fn to_local(&self, max_dim: usize) -> Result<LocalOperator, AlgebraError> {
        let mut acc = LocalOperator::scalar(self.scalar);
        for f in &self.factors {
            acc = acc.tensor(f, max_dim)?;
        }
        Ok(acc)
    }

    pub fn expectation(&self, state: &ProductState) -> Result<C64, AlgebraError> {
        let mut acc = self.scalar;
        for f in &self.factors {
            acc *= state.eval(f)?;
        }
        Ok(acc)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.scalar.norm() * self.factors.iter().map(|f| f.frobenius_norm()).product::<f64>()
    }

    /// Localization residual of the full product, computed factor by factor.
    /// With `g_i = ‖G_i‖²`, `h_i = ‖F_i - G_i‖²` (`G_i` the localized
    /// factor) the squared residual is `Π(g_i + h_i) - Π g_i`, accumulated
    /// without cancellation.
    pub fn localization_residual(&self, region: &Region) -> f64 {
        let (mut r, mut p) = (0.0, 1.0);
        for f in &self.factors {
            let g_op = f.localize(region).embed_with(f.support(), f.leg_dims());
            let g = linalg::frobenius_sqr(g_op.matrix());
            let h = linalg::frobenius_sqr(&(f.matrix() - g_op.matrix()));
            r = r * (g + h) + p * h;
            p *= g;
        }
        self.scalar.norm() * r.max(0.0).sqrt()
    }

    pub fn is_localized_in(&self, region: &Region, tol: f64) -> Localization {
        let residual = self.localization_residual(region);
        Localization { pass: residual <= tol, residual }
    }

    /// `‖self - other‖_F`, evaluated blockwise on the common coarsening of
    /// the two factorizations.
    pub fn distance(&self, other: &Self, max_dim: usize) -> Result<f64, AlgebraError> {
        let all: Vec<&LocalOperator> = self.factors.iter().chain(other.factors.iter()).collect();
        let mut leg_dims: BTreeMap<VertexId, usize> = BTreeMap::new();
        for f in &all {
            for (v, &d) in f.support().iter().zip(f.leg_dims()) {
                if *leg_dims.entry(v.clone()).or_insert(d) != d {
                    return Err(AlgebraError::LegDimensionMismatch(v.clone()));
                }
            }
        }
        // connected components of overlapping supports
        let mut blocks: Vec<Region> = Vec::new();
        for f in &all {
            let mut merged = f.support().clone();
            blocks.retain(|b| {
                if b.is_disjoint(&merged) {
                    true
                } else {
                    merged = merged.union(b);
                    false
                }
            });
            blocks.push(merged);
        }
        blocks.sort_by(|a, b| a.first().cmp(&b.first()));
        if blocks.is_empty() {
            return Ok((self.scalar - other.scalar).norm());
        }
        let densify = |op: &Self, block: &Region| -> Result<Mat, AlgebraError> {
            let dims: Vec<usize> = block.iter().map(|v| leg_dims[v]).collect();
            match linalg::checked_product(&dims) {
                Some(d) if d <= max_dim => {}
                d => return Err(AlgebraError::DimensionCap { support: block.clone(), dim: d.unwrap_or(usize::MAX), max: max_dim }),
            }
            let mut acc = LocalOperator::scalar(ONE);
            for f in op.factors.iter().filter(|f| f.support().is_subset(block)) {
                acc = acc.tensor(f, usize::MAX)?;
            }
            Ok(acc.embed_with(block, &dims).into_matrix())
        };
        let mut ps = Vec::with_capacity(blocks.len());
        let mut qs = Vec::with_capacity(blocks.len());
        for b in &blocks {
            ps.push(densify(self, b)?);
            qs.push(densify(other, b)?);
        }
        ps[0] *= self.scalar;
        qs[0] *= other.scalar;
        Ok(product_difference_norm(&ps, &qs))
    }
}

/// Tensor product of operators with pairwise disjoint supports.
pub fn tensor_all(factors: Vec<LocalOperator>, max_dim: usize) -> Result<LocalOperator, AlgebraError> {
    let mut it = factors.into_iter();
    let mut acc = match it.next() {
        Some(f) => f,
        None => return Ok(LocalOperator::scalar(ONE)),
    };
    for f in it {
        acc = acc.tensor(&f, max_dim)?;
    }
    Ok(acc)
}

/// `‖⊗P_i - ⊗Q_i‖_F` through the telescoping sum
/// `Σ_k Q_1..Q_{k-1} ⊗ (P_k - Q_k) ⊗ P_{k+1}..P_B`, so that nearly equal
/// products do not lose precision to cancellation.
fn product_difference_norm(ps: &[Mat], qs: &[Mat]) -> f64 {
    let b = ps.len();
    let ds: Vec<Mat> = ps.iter().zip(qs).map(|(p, q)| p - q).collect();
    let pp: Vec<f64> = ps.iter().map(linalg::frobenius_sqr).collect();
    let qq: Vec<f64> = qs.iter().map(linalg::frobenius_sqr).collect();
    let pq: Vec<C64> = ps.iter().zip(qs).map(|(p, q)| linalg::hs_inner(p, q)).collect();
    let mut q_prefix = vec![1.0; b + 1];
    for i in 0..b {
        q_prefix[i + 1] = q_prefix[i] * qq[i];
    }
    let mut p_suffix = vec![1.0; b + 1];
    for i in (0..b).rev() {
        p_suffix[i] = p_suffix[i + 1] * pp[i];
    }
    let mut total = 0.0;
    for k in 0..b {
        total += q_prefix[k] * linalg::frobenius_sqr(&ds[k]) * p_suffix[k + 1];
        let dq = linalg::hs_inner(&ds[k], &qs[k]);
        let mut between = ONE;
        for l in k + 1..b {
            let pd = linalg::hs_inner(&ps[l], &ds[l]);
            let term = dq * between * pd * (q_prefix[k] * p_suffix[l + 1]);
            total += 2.0 * term.re;
            between *= pq[l];
        }
    }
    total.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn v(i: i64) -> VertexId {
        VertexId::index(i)
    }

    fn region(ids: &[i64]) -> Region {
        ids.iter().copied().map(v).collect()
    }

    fn bell() -> LocalOperator {
        let mut m = Mat::zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(i, j)] = C64::new(0.5, 0.0);
        }
        LocalOperator::new(region(&[1, 2]), &SiteDims::qubits(), m).unwrap()
    }

    #[test]
    fn embed_single_site() {
        let dims = SiteDims::qubits();
        let z = LocalOperator::named(v(1), "Z").unwrap();
        let e = z.embed(&region(&[1, 2]), &dims).unwrap();
        let expected = linalg::kron(&linalg::pauli("Z").unwrap(), &linalg::identity(2));
        assert_eq!(e.matrix(), &expected);
        // embedding onto a smaller-indexed site puts the new leg first
        let e0 = z.embed(&region(&[0, 1]), &dims).unwrap();
        let expected0 = linalg::kron(&linalg::identity(2), &linalg::pauli("Z").unwrap());
        assert_eq!(e0.matrix(), &expected0);
        let id = LocalOperator::identity(&region(&[1]), &dims).unwrap();
        assert_eq!(id.embed(&region(&[1, 2, 3]), &dims).unwrap(), LocalOperator::identity(&region(&[1, 2, 3]), &dims).unwrap());
        assert!(matches!(z.embed(&region(&[2, 3]), &dims), Err(AlgebraError::NotASubset { .. })));
    }

    #[test]
    fn tensor_orders_legs() {
        let x2 = LocalOperator::named(v(2), "X").unwrap();
        let z1 = LocalOperator::named(v(1), "Z").unwrap();
        let t = x2.tensor(&z1, 64).unwrap();
        assert_eq!(t.support(), &region(&[1, 2]));
        let expected = linalg::kron(&linalg::pauli("Z").unwrap(), &linalg::pauli("X").unwrap());
        assert_eq!(t.matrix(), &expected);
        assert!(matches!(t.tensor(&z1, 64), Err(AlgebraError::OverlappingSupports(_))));
        assert!(matches!(x2.tensor(&z1, 3), Err(AlgebraError::DimensionCap { .. })));
    }

    #[test]
    fn bell_marginal_and_localization() {
        let b = bell();
        let m = b.partial_trace(&region(&[2])).unwrap();
        assert!(linalg::frobenius(&(m.matrix() - linalg::identity(2).unscale(2.0))) < 1e-15);
        let loc = b.is_localized_in(&region(&[1]), 1e-10);
        assert!(!loc.pass);
        assert!(loc.residual > 0.5);
        assert_eq!(b.partial_trace(&Region::empty()).unwrap(), b);
        let zi = LocalOperator::named(v(1), "Z").unwrap().embed(&region(&[1, 2]), &SiteDims::qubits()).unwrap();
        let loc = zi.is_localized_in(&region(&[1]), 1e-10);
        assert!(loc.pass && loc.residual == 0.0);
        assert_eq!(b.is_localized_in(&region(&[1, 2, 3]), 0.0).residual, 0.0);
    }

    #[test]
    fn product_state_values() {
        let mixed = ProductState::maximally_mixed(2);
        let z = LocalOperator::named(v(1), "Z").unwrap();
        assert!(mixed.eval(&z).unwrap().norm() < 1e-15);
        let id = LocalOperator::identity(&region(&[1, 2, 3]), &SiteDims::qubits()).unwrap();
        assert!((mixed.eval(&id).unwrap() - ONE).norm() < 1e-15);
        let zero = ProductState::uniform(Mat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]));
        assert!((zero.eval(&z).unwrap() - ONE).norm() < 1e-15);
        assert!(matches!(ProductState::explicit(BTreeMap::new()).eval(&z), Err(AlgebraError::MissingDensity(_))));
    }

    #[test]
    fn density_validation() {
        let tol = Tolerances::default();
        let dims = SiteDims::qubits();
        let bad = ProductState::uniform(linalg::pauli("Z").unwrap());
        assert!(matches!(bad.validate_site(&v(1), &dims, &tol), Err(AlgebraError::InvalidDensity { .. })));
        let neg = ProductState::uniform(Mat::from_row_slice(2, 2, &[C64::new(1.5, 0.0), ZERO, ZERO, C64::new(-0.5, 0.0)]));
        assert!(neg.validate_site(&v(1), &dims, &tol).is_err());
        assert!(ProductState::maximally_mixed(2).validate_site(&v(1), &dims, &tol).is_ok());
    }

    #[test]
    fn product_operator_simplify_and_distance() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let dims = SiteDims::qubits();
        let a = LocalOperator::single_site(v(1), linalg::random_gaussian(&mut rng, 2, 2)).unwrap();
        let b = LocalOperator::single_site(v(3), linalg::random_gaussian(&mut rng, 2, 2)).unwrap();
        let id2 = LocalOperator::identity(&region(&[2]), &dims).unwrap().scale(C64::new(2.0, 0.0));
        let joint = a.tensor(&b, 64).unwrap().tensor(&id2, 64).unwrap();
        let mut p = ProductOperator::from_local(joint.clone());
        p.simplify(1e-12);
        assert_eq!(p.factors().len(), 2);
        let dense = p.to_local(64).unwrap().embed(&region(&[1, 2, 3]), &dims).unwrap();
        assert!(linalg::frobenius(&(dense.matrix() - joint.matrix())) < 1e-12);
        let q = ProductOperator::from_local(joint);
        assert!(p.distance(&q, 64).unwrap() < 1e-12);
        let r = ProductOperator::from_local(a.clone());
        let expected = {
            let lhs = q.to_local(64).unwrap();
            let rhs = r.to_local(64).unwrap().embed(&region(&[1, 2, 3]), &dims).unwrap();
            linalg::frobenius(&(lhs.matrix() - rhs.matrix()))
        };
        assert!((q.distance(&r, 64).unwrap() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn product_localization_matches_dense() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let f1 = LocalOperator::new(region(&[1, 2]), &SiteDims::qubits(), linalg::random_gaussian(&mut rng, 4, 4)).unwrap();
        let f2 = LocalOperator::new(region(&[3, 4]), &SiteDims::qubits(), linalg::random_gaussian(&mut rng, 4, 4)).unwrap();
        let p = ProductOperator::new(C64::new(0.7, 0.2), vec![f1, f2]).unwrap();
        let dense = p.to_local(64).unwrap();
        for keep in [region(&[1, 3]), region(&[2]), region(&[1, 2, 3, 4]), region(&[])] {
            let a = p.localization_residual(&keep);
            let b = dense.localization_residual(&keep);
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{keep:?}: {a} vs {b}");
        }
    }
}
