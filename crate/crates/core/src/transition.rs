//! Transition expectations on plaquettes and their verification.
//!
//! A transition expectation `E_y : A_{{y}∪N_y} → A_codomain` is stored either
//! in Kraus form `E(a) = Σ_i K_i† a K_i` (each `K_i` of shape
//! `dim(domain) × dim(codomain)`) or as a dense map matrix acting on
//! row-major vectorized operators. Both act in the Heisenberg picture.
//!
//! The Choi matrix is `Σ_{kl} E*(e_kl) ⊗ e_kl` with legs ordered
//! (domain ⊗ codomain), `E*` the Hilbert–Schmidt adjoint and `e_kl` the
//! row-major matrix units of the codomain.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{AlgebraError, LocalOperator, ProductState, SiteDims};
use crate::graph::{Region, VertexId};
use crate::linalg::{self, Mat, C64, ONE, ZERO};
use crate::rng::site_rng;
use crate::tessellation::Classification;
use crate::tolerances::{REPAIR_MAX_ITERATIONS, REPAIR_TARGET};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("codomain of the map at {site} is not contained in its domain")]
    CodomainNotInDomain { site: VertexId },
    #[error("Kraus operator {index} at {site} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    KrausShape { site: VertexId, index: usize, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("no Kraus operators given for {site}")]
    EmptyKraus { site: VertexId },
    #[error("map matrix at {site} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    MapShape { site: VertexId, rows: usize, cols: usize, expected_rows: usize, expected_cols: usize },
    #[error("invalid Markov triplet: {0}")]
    InvalidTriplet(String),
    #[error("no compatible transition expectation found for seed {seed} at {site}: deviation {deviation:e} after {iterations} iterations")]
    RepairFailed { site: VertexId, seed: u64, deviation: f64, iterations: usize },
    #[error("state support {support:?} must contain the codomain and avoid the consumed legs of {site}")]
    PredualSupport { site: VertexId, support: Region },
}

/// `E(a) = Σ_i K_i† a K_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausTe {
    site: VertexId,
    domain: Region,
    codomain: Region,
    np: Region,
    ns: Region,
    domain_dims: Vec<usize>,
    codomain_dims: Vec<usize>,
    kraus: Vec<Mat>,
}

/// A linear map given by its matrix on row-major vectorized operators:
/// `vec(E(a)) = M vec(a)`, `M` of shape `dim(codomain)² × dim(domain)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericTe {
    site: VertexId,
    domain: Region,
    codomain: Region,
    np: Region,
    ns: Region,
    domain_dims: Vec<usize>,
    codomain_dims: Vec<usize>,
    map: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionExpectation {
    Kraus(KrausTe),
    Generic(GenericTe),
}

/// Regions `(A, B, C)` with `B ⊆ A` and `C ⊆ A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkovTriplet {
    pub a: Region,
    pub b: Region,
    pub c: Region,
}

impl MarkovTriplet {
    pub fn new(a: Region, b: Region, c: Region) -> Result<Self, TeError> {
        if !b.is_subset(&a) {
            return Err(TeError::InvalidTriplet(format!("{b:?} is not contained in {a:?}")));
        }
        if !c.is_subset(&a) {
            return Err(TeError::InvalidTriplet(format!("{c:?} is not contained in {a:?}")));
        }
        Ok(MarkovTriplet { a, b, c })
    }

    /// `(plaquette, N^(s), N^(p))`, the range containment used downstream.
    pub fn plaquette(te: &TransitionExpectation) -> Self {
        MarkovTriplet { a: te.domain().clone(), b: te.ns().clone(), c: te.np().clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpReport {
    pub cp: bool,
    pub min_choi_eigenvalue: f64,
    pub choi_hermitian_residual: f64,
    pub unital: bool,
    pub unital_residual: f64,
}

impl CpReport {
    pub fn pass(&self) -> bool {
        self.cp && self.unital
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkovReport {
    pub pass: bool,
    pub worst_residual: f64,
    pub basis_size: usize,
}

/// Spanning bases of `A_{N^(p)}` for the compatibility functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatibilityBasis {
    MatrixUnits,
    /// Normalized clock-and-shift operators `X^j Z^k / √d`.
    Weyl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub pass: bool,
    /// `max_a |φ_s(E(a ⊗ id)) - φ_p(a)|` over the basis.
    pub max_deviation: f64,
    /// Euclidean norm of the deviations over the basis; equals the Frobenius
    /// norm of the defect functional for any orthonormal basis.
    pub functional_norm: f64,
    pub basis: CompatibilityBasis,
}

fn check_shape(dims: &[usize]) -> usize {
    linalg::product(dims)
}

impl KrausTe {
    pub fn new(
        site: VertexId,
        domain: Region,
        codomain: Region,
        np: Region,
        ns: Region,
        dims: &SiteDims,
        kraus: Vec<Mat>,
    ) -> Result<Self, TeError> {
        if !codomain.is_subset(&domain) {
            return Err(TeError::CodomainNotInDomain { site });
        }
        if kraus.is_empty() {
            return Err(TeError::EmptyKraus { site });
        }
        let domain_dims = dims.leg_dims(&domain)?;
        let codomain_dims = dims.leg_dims(&codomain)?;
        let d = dims.check_cap(&domain, &domain_dims)?;
        let c = check_shape(&codomain_dims);
        for (index, k) in kraus.iter().enumerate() {
            if k.nrows() != d || k.ncols() != c {
                return Err(TeError::KrausShape {
                    site,
                    index,
                    rows: k.nrows(),
                    cols: k.ncols(),
                    expected_rows: d,
                    expected_cols: c,
                });
            }
        }
        Ok(KrausTe { site, domain, codomain, np, ns, domain_dims, codomain_dims, kraus })
    }

    pub fn kraus(&self) -> &[Mat] {
        &self.kraus
    }
}

impl GenericTe {
    pub fn new(
        site: VertexId,
        domain: Region,
        codomain: Region,
        np: Region,
        ns: Region,
        dims: &SiteDims,
        map: Mat,
    ) -> Result<Self, TeError> {
        if !codomain.is_subset(&domain) {
            return Err(TeError::CodomainNotInDomain { site });
        }
        let domain_dims = dims.leg_dims(&domain)?;
        let codomain_dims = dims.leg_dims(&codomain)?;
        let d = dims.check_cap(&domain, &domain_dims)?;
        let c = check_shape(&codomain_dims);
        if map.nrows() != c * c || map.ncols() != d * d {
            return Err(TeError::MapShape {
                site,
                rows: map.nrows(),
                cols: map.ncols(),
                expected_rows: c * c,
                expected_cols: d * d,
            });
        }
        Ok(GenericTe { site, domain, codomain, np, ns, domain_dims, codomain_dims, map })
    }

    /// Builds the map matrix from a function on domain matrices.
    pub fn from_fn(
        site: VertexId,
        domain: Region,
        codomain: Region,
        np: Region,
        ns: Region,
        dims: &SiteDims,
        f: impl Fn(&Mat) -> Mat,
    ) -> Result<Self, TeError> {
        let d = dims.region_dim(&domain)?;
        let c = dims.region_dim(&codomain)?;
        let mut map = Mat::zeros(c * c, d * d);
        for col in 0..d * d {
            let mut e = Mat::zeros(d, d);
            e[(col / d, col % d)] = ONE;
            let out = f(&e);
            for row in 0..c * c {
                map[(row, col)] = out[(row / c, row % c)];
            }
        }
        Self::new(site, domain, codomain, np, ns, dims, map)
    }

    pub fn map_matrix(&self) -> &Mat {
        &self.map
    }
}

impl From<KrausTe> for TransitionExpectation {
    fn from(k: KrausTe) -> Self {
        TransitionExpectation::Kraus(k)
    }
}

impl From<GenericTe> for TransitionExpectation {
    fn from(g: GenericTe) -> Self {
        TransitionExpectation::Generic(g)
    }
}

macro_rules! common {
    ($self:ident, $field:ident) => {
        match $self {
            TransitionExpectation::Kraus(k) => &k.$field,
            TransitionExpectation::Generic(g) => &g.$field,
        }
    };
}

impl TransitionExpectation {
    pub fn site(&self) -> &VertexId {
        common!(self, site)
    }

    pub fn domain(&self) -> &Region {
        common!(self, domain)
    }

    pub fn codomain(&self) -> &Region {
        common!(self, codomain)
    }

    pub fn np(&self) -> &Region {
        common!(self, np)
    }

    pub fn ns(&self) -> &Region {
        common!(self, ns)
    }

    pub fn domain_dims(&self) -> &[usize] {
        common!(self, domain_dims)
    }

    pub fn codomain_dims(&self) -> &[usize] {
        common!(self, codomain_dims)
    }

    pub fn domain_dim(&self) -> usize {
        linalg::product(self.domain_dims())
    }

    pub fn codomain_dim(&self) -> usize {
        linalg::product(self.codomain_dims())
    }

    pub fn is_kraus(&self) -> bool {
        matches!(self, TransitionExpectation::Kraus(_))
    }

    /// Legs consumed by the map: `domain \ codomain`.
    pub fn consumed(&self) -> Region {
        self.domain().difference(self.codomain())
    }

    /// `E` on a `dim(domain)`-square matrix in canonical domain order.
    pub fn apply_matrix(&self, a: &Mat) -> Mat {
        match self {
            TransitionExpectation::Kraus(k) => {
                let c = linalg::product(&k.codomain_dims);
                let mut out = Mat::zeros(c, c);
                for kr in &k.kraus {
                    out += kr.adjoint() * a * kr;
                }
                out
            }
            TransitionExpectation::Generic(g) => {
                let c = linalg::product(&g.codomain_dims);
                let v = Mat::from_row_iterator(a.nrows() * a.ncols(), 1, a.transpose().iter().copied());
                let out = &g.map * v;
                Mat::from_fn(c, c, |i, j| out[(i * c + j, 0)])
            }
        }
    }

    /// Hilbert–Schmidt adjoint `E*` on a codomain matrix.
    pub fn adjoint_matrix(&self, b: &Mat) -> Mat {
        match self {
            TransitionExpectation::Kraus(k) => {
                let d = linalg::product(&k.domain_dims);
                let mut out = Mat::zeros(d, d);
                for kr in &k.kraus {
                    out += kr * b * kr.adjoint();
                }
                out
            }
            TransitionExpectation::Generic(g) => {
                let d = linalg::product(&g.domain_dims);
                let v = Mat::from_row_iterator(b.nrows() * b.ncols(), 1, b.transpose().iter().copied());
                let out = g.map.adjoint() * v;
                Mat::from_fn(d, d, |i, j| out[(i * d + j, 0)])
            }
        }
    }

    /// Predual `E_*` with `tr(E_*(σ) a) = tr(σ E(a))`.
    pub fn predual_matrix(&self, sigma: &Mat) -> Mat {
        match self {
            TransitionExpectation::Kraus(_) => self.adjoint_matrix(sigma),
            TransitionExpectation::Generic(g) => {
                let d = linalg::product(&g.domain_dims);
                // vec(E_*(σ)ᵀ) = Mᵀ vec(σᵀ), and vec(σᵀ) lists σ column by column
                let v = Mat::from_row_iterator(sigma.nrows() * sigma.ncols(), 1, sigma.iter().copied());
                let out = g.map.transpose() * v;
                Mat::from_fn(d, d, |i, j| out[(j * d + i, 0)])
            }
        }
    }

    /// `(E ⊗ id)(a)` for `a` on any support. The result lives on
    /// `(support(a) \ domain) ∪ codomain`.
    pub fn apply(&self, a: &LocalOperator, max_dim: usize) -> Result<LocalOperator, TeError> {
        let rest = a.support().difference(self.domain());
        let rest_dims: Vec<usize> = rest.iter().map(|v| a.leg_dim(v).unwrap()).collect();
        for v in a.support().intersection(self.domain()).iter() {
            let pos = self.domain().position(v).unwrap();
            if a.leg_dim(v) != Some(self.domain_dims()[pos]) {
                return Err(AlgebraError::LegDimensionMismatch(v.clone()).into());
            }
        }
        let joint = rest.union(self.domain());
        let joint_dims: Vec<usize> = joint
            .iter()
            .map(|v| match self.domain().position(v) {
                Some(p) => self.domain_dims()[p],
                None => a.leg_dim(v).unwrap(),
            })
            .collect();
        cap(&joint, &joint_dims, max_dim)?;
        let order: Vec<VertexId> = rest.iter().chain(self.domain().iter()).cloned().collect();
        let m = a.embed_with(&joint, &joint_dims).matrix_in_order(&order);
        let (r, d, c) = (linalg::product(&rest_dims), self.domain_dim(), self.codomain_dim());
        let blocks: Vec<Option<Mat>> = (0..r * r)
            .into_par_iter()
            .map(|ij| {
                let block = m.view(((ij / r) * d, (ij % r) * d), (d, d)).into_owned();
                (!block.iter().all(|z| *z == ZERO)).then(|| self.apply_matrix(&block))
            })
            .collect();
        let mut out = Mat::zeros(r * c, r * c);
        for (ij, block) in blocks.into_iter().enumerate() {
            if let Some(b) = block {
                out.view_mut(((ij / r) * c, (ij % r) * c), (c, c)).copy_from(&b);
            }
        }
        let out_order: Vec<VertexId> = rest.iter().chain(self.codomain().iter()).cloned().collect();
        let out_dims: Vec<usize> = rest_dims.iter().chain(self.codomain_dims()).copied().collect();
        Ok(LocalOperator::from_ordered(&out_order, &out_dims, out)?)
    }

    /// `E(a)` re-embedded on the support of `a`, which must contain the
    /// domain: consumed legs come back as identities. One gather into domain
    /// blocks and one scatter back, with no intermediate operators.
    pub fn apply_embedded(&self, a: &LocalOperator) -> Result<LocalOperator, TeError> {
        let support = a.support();
        if !self.domain().is_subset(support) {
            return Err(AlgebraError::NotASubset { sub: self.domain().clone(), sup: support.clone() }.into());
        }
        for (v, &d) in self.domain().iter().zip(self.domain_dims()) {
            if a.leg_dim(v) != Some(d) {
                return Err(AlgebraError::LegDimensionMismatch(v.clone()).into());
            }
        }
        let rest = support.difference(self.domain());
        let consumed = self.domain().difference(self.codomain());
        let pos = |v: &VertexId| support.position(v).unwrap();
        let legs = a.leg_dims();
        let in_perm: Vec<usize> = rest.iter().chain(self.domain().iter()).map(pos).collect();
        let out_perm: Vec<usize> =
            rest.iter().chain(self.codomain().iter()).chain(consumed.iter()).map(pos).collect();
        let in_map = linalg::leg_index_map(legs, &in_perm);
        let out_map = linalg::leg_index_map(legs, &out_perm);
        let (r, d, c) = (a.dim() / self.domain_dim(), self.domain_dim(), self.codomain_dim());
        let e = d / c;
        let m = a.matrix();
        let blocks: Vec<Option<Mat>> = (0..r * r)
            .into_par_iter()
            .map(|ij| {
                let (i, j) = (ij / r, ij % r);
                let block = Mat::from_fn(d, d, |p, q| m[(in_map[i * d + p], in_map[j * d + q])]);
                (!block.iter().all(|z| *z == ZERO)).then(|| self.apply_matrix(&block))
            })
            .collect();
        let mut out = Mat::zeros(a.dim(), a.dim());
        for (ij, block) in blocks.into_iter().enumerate() {
            let Some(b) = block else { continue };
            let (i, j) = (ij / r, ij % r);
            for q in 0..c {
                for p in 0..c {
                    for u in 0..e {
                        out[(out_map[(i * c + p) * e + u], out_map[(j * c + q) * e + u])] = b[(p, q)];
                    }
                }
            }
        }
        Ok(LocalOperator::from_legs(support.clone(), legs.to_vec(), out)?)
    }

    /// `(E_* ⊗ id)(σ)` for `σ` whose support contains the codomain and avoids
    /// the consumed legs. The result lives on `(support(σ) \ codomain) ∪ domain`.
    pub fn apply_predual(&self, sigma: &LocalOperator, max_dim: usize) -> Result<LocalOperator, TeError> {
        if !self.codomain().is_subset(sigma.support()) || !sigma.support().is_disjoint(&self.consumed()) {
            return Err(TeError::PredualSupport { site: self.site().clone(), support: sigma.support().clone() });
        }
        let rest = sigma.support().difference(self.codomain());
        let rest_dims: Vec<usize> = rest.iter().map(|v| sigma.leg_dim(v).unwrap()).collect();
        let (r, d, c) = (linalg::product(&rest_dims), self.domain_dim(), self.codomain_dim());
        let out_order: Vec<VertexId> = rest.iter().chain(self.domain().iter()).cloned().collect();
        let out_dims: Vec<usize> = rest_dims.iter().chain(self.domain_dims()).copied().collect();
        cap(&Region::from(out_order.clone()), &out_dims, max_dim)?;
        let in_order: Vec<VertexId> = rest.iter().chain(self.codomain().iter()).cloned().collect();
        let m = sigma.matrix_in_order(&in_order);
        let mut out = Mat::zeros(r * d, r * d);
        for i in 0..r {
            for j in 0..r {
                let block = m.view((i * c, j * c), (c, c)).into_owned();
                if block.iter().all(|z| *z == ZERO) {
                    continue;
                }
                out.view_mut((i * d, j * d), (d, d)).copy_from(&self.predual_matrix(&block));
            }
        }
        Ok(LocalOperator::from_ordered(&out_order, &out_dims, out)?)
    }

    /// Choi matrix with legs (domain ⊗ codomain).
    pub fn choi(&self) -> Mat {
        let (d, c) = (self.domain_dim(), self.codomain_dim());
        let mut choi = Mat::zeros(d * c, d * c);
        for k in 0..c {
            for l in 0..c {
                let mut e = Mat::zeros(c, c);
                e[(k, l)] = ONE;
                let block = self.adjoint_matrix(&e);
                for i in 0..d {
                    for j in 0..d {
                        choi[(i * c + k, j * c + l)] = block[(i, j)];
                    }
                }
            }
        }
        choi
    }

    pub fn is_cp_unital(&self, psd_tol: f64, unital_tol: f64) -> CpReport {
        let choi = self.choi();
        let min_choi_eigenvalue = linalg::min_hermitian_eigenvalue(&choi);
        let choi_hermitian_residual = linalg::hermitian_residual(&choi);
        let unit = self.apply_matrix(&linalg::identity(self.domain_dim()));
        let unital_residual = linalg::frobenius(&(unit - linalg::identity(self.codomain_dim())));
        CpReport {
            cp: min_choi_eigenvalue >= -psd_tol && choi_hermitian_residual <= psd_tol,
            min_choi_eigenvalue,
            choi_hermitian_residual,
            unital: unital_residual <= unital_tol,
            unital_residual,
        }
    }

    /// Applies `E` to every matrix unit of `A \ C` (identity elsewhere on the
    /// domain) and tests localization of the image in `B \ C`.
    pub fn is_markov_te(&self, t: &MarkovTriplet, tol: f64) -> Result<MarkovReport, TeError> {
        if !t.a.is_subset(self.domain()) {
            return Err(TeError::InvalidTriplet(format!("{:?} is not inside the domain {:?}", t.a, self.domain())));
        }
        let free = t.a.difference(&t.c);
        let target = t.b.difference(&t.c);
        let free_dims: Vec<usize> = free.iter().map(|v| self.domain_dims()[self.domain().position(v).unwrap()]).collect();
        let f = linalg::product(&free_dims);
        let mut worst: f64 = 0.0;
        for k in 0..f {
            for l in 0..f {
                let mut e = Mat::zeros(f, f);
                e[(k, l)] = ONE;
                let unit = LocalOperator::from_legs(free.clone(), free_dims.clone(), e)?;
                let full = unit.embed_with(self.domain(), self.domain_dims());
                let image = LocalOperator::from_legs(
                    self.codomain().clone(),
                    self.codomain_dims().to_vec(),
                    self.apply_matrix(full.matrix()),
                )?;
                worst = worst.max(image.localization_residual(&target));
            }
        }
        Ok(MarkovReport { pass: worst <= tol, worst_residual: worst, basis_size: f * f })
    }

    /// Defect `δ = tr_{domain \ Np}(E_*(⊗_{codomain} ρ)) - ⊗_{Np} ρ`, the
    /// operator representing `a ↦ φ_s(E(a ⊗ id)) - φ_p(a)`.
    pub fn compatibility_defect(&self, phi0: &ProductState) -> Result<Mat, TeError> {
        let sigma = phi0.joint_density(self.codomain(), usize::MAX)?;
        let sigma = sigma.embed_with(self.codomain(), self.codomain_dims());
        let tau = LocalOperator::from_legs(
            self.domain().clone(),
            self.domain_dims().to_vec(),
            self.predual_matrix(sigma.matrix()),
        )?;
        let tau_p = tau.partial_trace(&self.domain().difference(self.np()))?;
        let rho_p = phi0.joint_density(self.np(), usize::MAX)?;
        Ok(tau_p.matrix() - rho_p.matrix())
    }

    pub fn check_compatibility(&self, phi0: &ProductState, tol: f64) -> Result<CompatibilityReport, TeError> {
        self.check_compatibility_in(phi0, tol, CompatibilityBasis::MatrixUnits)
    }

    pub fn check_compatibility_in(
        &self,
        phi0: &ProductState,
        tol: f64,
        basis: CompatibilityBasis,
    ) -> Result<CompatibilityReport, TeError> {
        let delta = self.compatibility_defect(phi0)?;
        let p = delta.nrows();
        // deviation on a basis element a is tr(δ a)
        let deviations: Vec<f64> = match basis {
            CompatibilityBasis::MatrixUnits => delta.iter().map(|z| z.norm()).collect(),
            CompatibilityBasis::Weyl => weyl_basis(p).iter().map(|w| (&delta * w).trace().norm()).collect(),
        };
        let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
        let functional_norm = deviations.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(CompatibilityReport { pass: max_deviation <= tol, max_deviation, functional_norm, basis })
    }
}

fn cap(region: &Region, dims: &[usize], max_dim: usize) -> Result<usize, AlgebraError> {
    match linalg::checked_product(dims) {
        Some(d) if d <= max_dim => Ok(d),
        d => Err(AlgebraError::DimensionCap { support: region.clone(), dim: d.unwrap_or(usize::MAX), max: max_dim }),
    }
}

/// Orthonormal clock-and-shift basis `X^j Z^k / √d` of `d × d` matrices.
pub fn weyl_basis(d: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(d * d);
    let norm = 1.0 / (d as f64).sqrt();
    for j in 0..d {
        for k in 0..d {
            let m = Mat::from_fn(d, d, |r, c| {
                if r == (c + j) % d {
                    C64::from_polar(norm, 2.0 * std::f64::consts::PI * (k * c) as f64 / d as f64)
                } else {
                    ZERO
                }
            });
            out.push(m);
        }
    }
    out
}

/// The plaquette `{y} ∪ N_y` of a classified vertex.
pub fn plaquette_of(class: &Classification) -> Region {
    Region::singleton(class.vertex.clone()).union(&class.np).union(&class.ns).union(&class.n0)
}

/// Rows of a `D × C` matrix reordered from `[first, rest]` leg order into the
/// canonical order of `first ∪ rest`.
fn rows_to_canonical(m: &Mat, first: &Region, rest: &Region, dims: &SiteDims) -> Result<Mat, AlgebraError> {
    let order: Vec<VertexId> = first.iter().chain(rest.iter()).cloned().collect();
    let order_dims: Vec<usize> = order.iter().map(|v| dims.dim(v)).collect::<Result<_, _>>()?;
    let joint = first.union(rest);
    let perm: Vec<usize> = joint.iter().map(|v| order.iter().position(|w| w == v).unwrap()).collect();
    Ok(linalg::permute_row_legs(m, &order_dims, &perm))
}

/// Product-type map `E(a_P ⊗ c_s) = φ0_P(a_P) c_s` with `P = plaquette \ N^(s)`:
/// Kraus operators `√λ |v⟩ ⊗ id_s` over the eigenpairs of `⊗_P ρ_x`.
pub fn make_product_te(
    phi0: &ProductState,
    dims: &SiteDims,
    class: &Classification,
    tol: &crate::tolerances::Tolerances,
) -> Result<KrausTe, TeError> {
    let domain = plaquette_of(class);
    let p = domain.difference(&class.ns);
    phi0.validate_region(&p, dims, tol)?;
    // eigenpairs of the product density, built site by site
    let mut pairs: Vec<(f64, Mat)> = vec![(1.0, Mat::from_element(1, 1, ONE))];
    for v in &p {
        let (vals, vecs) = linalg::hermitian_eigen(phi0.density(v)?);
        let mut next = Vec::new();
        for (lam, vec) in &pairs {
            for (i, &mu) in vals.iter().enumerate() {
                let w = lam * mu.max(0.0);
                if w > 0.0 {
                    next.push((w, linalg::kron(vec, &Mat::from_fn(vecs.nrows(), 1, |r, _| vecs[(r, i)]))));
                }
            }
        }
        pairs = next;
    }
    let c = dims.region_dim(&class.ns)?;
    let id = linalg::identity(c);
    let kraus = pairs
        .into_iter()
        .map(|(w, v)| {
            let k = linalg::kron(&v.scale(w.sqrt()), &id);
            rows_to_canonical(&k, &p, &class.ns, dims)
        })
        .collect::<Result<Vec<_>, _>>()?;
    KrausTe::new(class.vertex.clone(), domain, class.ns.clone(), class.np.clone(), class.ns.clone(), dims, kraus)
}

/// Seeded Haar isometry `V : H_{N^(s)} → H_plaquette`, rows in `[N^(p), rest]`
/// order.
fn seeded_isometry(seed: u64, dims: &SiteDims, class: &Classification) -> Result<(Mat, Region, Region), TeError> {
    let domain = plaquette_of(class);
    let d = dims.region_dim(&domain)?;
    let c = dims.region_dim(&class.ns)?;
    let rest = domain.difference(&class.np);
    let mut rng = site_rng(seed, &class.vertex);
    Ok((linalg::haar_isometry(&mut rng, d, c), domain, rest))
}

/// Max entrywise deviation `|tr_rest(V σ V†) - ρ_p|` and the marginal.
fn isometry_marginal(v: &Mat, sigma: &Mat, p: usize, r: usize) -> Mat {
    linalg::trace_out_trailing(&(v * sigma * v.adjoint()), p, r)
}

fn max_abs(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Haar-random isometric map repaired into compatibility with `φ0`.
///
/// The repair alternates a left scaling `V ← (ρ_p^{1/2} τ^{-1/2} ⊗ id) V`,
/// which makes the `N^(p)` marginal `τ = tr_rest(V σ_s V†)` equal to `ρ_p`,
/// with the polar projection `V ← V (V†V)^{-1/2}` back onto isometries.
pub fn make_isometry_te(
    seed: u64,
    phi0: &ProductState,
    dims: &SiteDims,
    class: &Classification,
    tol: &crate::tolerances::Tolerances,
) -> Result<KrausTe, TeError> {
    let (mut v, domain, rest) = seeded_isometry(seed, dims, class)?;
    phi0.validate_region(&domain, dims, tol)?;
    if !class.np.is_empty() {
        let p = dims.region_dim(&class.np)?;
        let r = dims.region_dim(&rest)?;
        let sigma = phi0.joint_density(&class.ns, usize::MAX)?.into_matrix();
        let rho_p = phi0.joint_density(&class.np, usize::MAX)?.into_matrix();
        let rho_sqrt = linalg::hermitian_function(&rho_p, |l| l.max(0.0).sqrt());
        let mut iterations = 0;
        let mut previous = f64::INFINITY;
        loop {
            let tau = isometry_marginal(&v, &sigma, p, r);
            let deviation = max_abs(&(&tau - &rho_p));
            // Polish well below the target; stop once progress stalls inside it.
            let stalled = deviation <= REPAIR_TARGET && deviation > 0.5 * previous;
            if deviation <= 1e-2 * REPAIR_TARGET || stalled {
                break;
            }
            previous = deviation;
            let fail = || TeError::RepairFailed { site: class.vertex.clone(), seed, deviation, iterations };
            if iterations >= REPAIR_MAX_ITERATIONS || !deviation.is_finite() {
                return Err(fail());
            }
            let vals = linalg::hermitian_eigenvalues(&tau);
            if vals[0] <= 1e-14 {
                return Err(fail());
            }
            let a = &rho_sqrt * linalg::hermitian_function(&tau, |l| 1.0 / l.sqrt());
            v = linalg::kron(&a, &linalg::identity(r)) * v;
            v = linalg::polar_isometry(&v).ok_or_else(fail)?;
            iterations += 1;
        }
    }
    let k = rows_to_canonical(&v, &class.np, &rest, dims)?;
    KrausTe::new(class.vertex.clone(), domain, class.ns.clone(), class.np.clone(), class.ns.clone(), dims, vec![k])
}

/// The same Haar isometry without the compatibility repair.
pub fn make_unrepaired_isometry_te(seed: u64, dims: &SiteDims, class: &Classification) -> Result<KrausTe, TeError> {
    let (v, domain, rest) = seeded_isometry(seed, dims, class)?;
    let k = rows_to_canonical(&v, &class.np, &rest, dims)?;
    KrausTe::new(class.vertex.clone(), domain, class.ns.clone(), class.np.clone(), class.ns.clone(), dims, vec![k])
}

/// `E(a) = (⟨0|_P a |0⟩_P)ᵀ`, `P = plaquette \ N^(s)`: unital and positive
/// but not completely positive.
pub fn make_transpose_te(dims: &SiteDims, class: &Classification) -> Result<GenericTe, TeError> {
    let domain = plaquette_of(class);
    let p = domain.difference(&class.ns);
    let c = dims.region_dim(&class.ns)?;
    let pd = dims.region_dim(&p)?;
    let mut e0 = Mat::zeros(pd, 1);
    e0[(0, 0)] = ONE;
    let k = rows_to_canonical(&linalg::kron(&e0, &linalg::identity(c)), &p, &class.ns, dims)?;
    GenericTe::from_fn(
        class.vertex.clone(),
        domain,
        class.ns.clone(),
        class.np.clone(),
        class.ns.clone(),
        dims,
        |a| (k.adjoint() * a * &k).transpose(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_graph, GraphSpec};
    use crate::tessellation::Tessellation;
    use crate::tolerances::Tolerances;

    fn v(i: i64) -> VertexId {
        VertexId::index(i)
    }

    fn region(ids: &[i64]) -> Region {
        ids.iter().copied().map(v).collect()
    }

    fn path_class() -> Classification {
        let g = make_graph(&GraphSpec::Path { n: None }).unwrap();
        let t = Tessellation::build(&g, v(1), 3).unwrap();
        t.classify(1, &v(3)).unwrap().clone()
    }

    fn tree_class() -> Classification {
        let g = make_graph(&GraphSpec::RegularTree { k: 3 }).unwrap();
        let t = Tessellation::build(&g, v(0), 3).unwrap();
        t.classify(1, &v(4)).unwrap().clone()
    }

    fn qubit_identity_channel() -> TransitionExpectation {
        let dims = SiteDims::qubits();
        KrausTe::new(v(1), region(&[1]), region(&[1]), region(&[]), region(&[1]), &dims, vec![linalg::identity(2)])
            .unwrap()
            .into()
    }

    #[test]
    fn identity_channel_choi() {
        let choi = qubit_identity_channel().choi();
        assert!((choi.trace() - C64::new(2.0, 0.0)).norm() < 1e-15);
        let vals = linalg::hermitian_eigenvalues(&choi);
        assert!((vals[3] - 2.0).abs() < 1e-12);
        assert!(vals[..3].iter().all(|l| l.abs() < 1e-12));
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let dims = SiteDims::qubits();
        let t: TransitionExpectation = GenericTe::from_fn(v(1), region(&[1]), region(&[1]), region(&[]), region(&[1]), &dims, |a| a.transpose())
            .unwrap()
            .into();
        let r = t.is_cp_unital(1e-10, 1e-10);
        assert!(!r.cp && r.unital);
        assert!((r.min_choi_eigenvalue + 1.0).abs() < 1e-12);
        let tt: TransitionExpectation = make_transpose_te(&dims, &path_class()).unwrap().into();
        let r = tt.is_cp_unital(1e-10, 1e-10);
        assert!(r.unital && (r.min_choi_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_and_kraus_forms_agree() {
        let dims = SiteDims::qubits();
        let class = path_class();
        let phi0 = ProductState::uniform(Mat::from_row_slice(2, 2, &[C64::new(0.7, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.3, 0.0)]));
        let k = make_isometry_te(5, &phi0, &dims, &class, &Tolerances::default()).unwrap();
        let kte: TransitionExpectation = k.clone().into();
        let g: TransitionExpectation = GenericTe::from_fn(
            class.vertex.clone(), kte.domain().clone(), kte.codomain().clone(), class.np.clone(), class.ns.clone(), &dims,
            |a| kte.apply_matrix(a),
        ).unwrap().into();
        assert!(linalg::frobenius(&(g.choi() - kte.choi())) < 1e-12);
        let mut rng = crate::rng::stream_rng(1, 1);
        let s = linalg::random_density(&mut rng, 2);
        assert!(linalg::frobenius(&(g.predual_matrix(&s) - kte.predual_matrix(&s))) < 1e-12);
        let a = linalg::random_gaussian(&mut rng, 8, 8);
        // duality tr(E_*(σ) a) = tr(σ E(a))
        let lhs = (g.predual_matrix(&s) * &a).trace();
        let rhs = (&s * g.apply_matrix(&a)).trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn product_te_kills_previous_shell() {
        let dims = SiteDims::qubits();
        let class = tree_class();
        let phi0 = ProductState::maximally_mixed(2);
        let te: TransitionExpectation = make_product_te(&phi0, &dims, &class, &Tolerances::default()).unwrap().into();
        assert_eq!(te.domain(), &region(&[1, 4, 10, 11]));
        assert_eq!(te.codomain(), &region(&[10, 11]));
        let z1 = LocalOperator::named(v(1), "Z").unwrap();
        let out = te.apply(&z1, 4096).unwrap();
        assert_eq!(out.support(), &region(&[10, 11]));
        assert!(linalg::frobenius(out.matrix()) < 1e-14);
        let x10 = LocalOperator::named(v(10), "X").unwrap();
        let out = te.apply(&x10, 4096).unwrap();
        let expected = LocalOperator::named(v(10), "X").unwrap().embed(&region(&[10, 11]), &dims).unwrap();
        assert!(linalg::frobenius(&(out.matrix() - expected.matrix())) < 1e-14);
        let comp = te.check_compatibility(&phi0, 1e-12).unwrap();
        assert!(comp.pass && comp.max_deviation <= 1e-14);
        let cp = te.is_cp_unital(1e-10, 1e-10);
        assert!(cp.pass());
    }

    #[test]
    fn isometry_repair_reaches_target_and_is_deterministic() {
        let dims = SiteDims::qubits();
        let phi0 = ProductState::uniform(Mat::from_row_slice(2, 2, &[C64::new(0.8, 0.0), ZERO, ZERO, C64::new(0.2, 0.0)]));
        let tol = Tolerances::default();
        for class in [path_class(), tree_class()] {
            let a = make_isometry_te(9, &phi0, &dims, &class, &tol).unwrap();
            let b = make_isometry_te(9, &phi0, &dims, &class, &tol).unwrap();
            assert_eq!(a, b);
            let te: TransitionExpectation = a.into();
            let comp = te.check_compatibility(&phi0, 1e-12).unwrap();
            assert!(comp.pass, "{comp:?}");
            let weyl = te.check_compatibility_in(&phi0, 1e-12, CompatibilityBasis::Weyl).unwrap();
            assert!((weyl.functional_norm - comp.functional_norm).abs() <= 1e-12);
            assert!(te.is_cp_unital(1e-10, 1e-10).pass());
            let unrepaired: TransitionExpectation = make_unrepaired_isometry_te(9, &dims, &class).unwrap().into();
            assert!(!unrepaired.check_compatibility(&phi0, 1e-12).unwrap().pass);
        }
    }

    #[test]
    fn apply_matches_dense_embedding() {
        let dims = SiteDims::qubits();
        let phi0 = ProductState::maximally_mixed(2);
        let te: TransitionExpectation = make_isometry_te(3, &phi0, &dims, &path_class(), &Tolerances::default()).unwrap().into();
        let mut rng = crate::rng::stream_rng(4, 0);
        let a = LocalOperator::new(region(&[1, 3, 5]), &dims, linalg::random_gaussian(&mut rng, 8, 8)).unwrap();
        let out = te.apply(&a, 4096).unwrap();
        assert_eq!(out.support(), &region(&[1, 4, 5]));
        // oracle: E ⊗ id through the Kraus operator embedded as K ⊗ I on site 1
        let k = match &te {
            TransitionExpectation::Kraus(k) => k.kraus()[0].clone(),
            _ => unreachable!(),
        };
        let emb = a.embed(&region(&[1, 2, 3, 4, 5]), &dims).unwrap();
        let big_k = linalg::kron(&linalg::kron(&linalg::identity(2), &k), &linalg::identity(2));
        let expected = big_k.adjoint() * emb.matrix() * &big_k;
        assert!(linalg::frobenius(&(out.matrix() - expected)) < 1e-12);
    }

    #[test]
    fn markov_checks() {
        let dims = SiteDims::qubits();
        let class = path_class();
        let phi0 = ProductState::maximally_mixed(2);
        let te: TransitionExpectation = make_isometry_te(2, &phi0, &dims, &class, &Tolerances::default()).unwrap().into();
        let r = te.is_markov_te(&MarkovTriplet::plaquette(&te), 1e-10).unwrap();
        assert!(r.pass && r.worst_residual == 0.0);
        // Bell-type correlation between y and its successor
        let domain = plaquette_of(&class);
        let z = linalg::pauli("Z").unwrap();
        let x = linalg::pauli("X").unwrap();
        let zy = linalg::kron(&linalg::kron(&linalg::identity(2), &z), &linalg::identity(2));
        let xx = linalg::kron(&x, &x);
        let bad: TransitionExpectation = GenericTe::from_fn(
            class.vertex.clone(), domain.clone(), region(&[3, 4]), class.np.clone(), class.ns.clone(), &dims,
            |a| linalg::identity(4).scale(a.trace().re / 8.0) + &xx * ((a * &zy).trace() / 8.0),
        ).unwrap().into();
        let t = MarkovTriplet::new(domain.clone(), class.ns.clone(), class.np.clone()).unwrap();
        let r = bad.is_markov_te(&t, 1e-10).unwrap();
        assert!(!r.pass && r.worst_residual > 0.1);
        assert!(MarkovTriplet::new(region(&[3]), region(&[4]), region(&[])).is_err());
    }

    #[test]
    fn predual_respects_support_rules() {
        let dims = SiteDims::qubits();
        let phi0 = ProductState::maximally_mixed(2);
        let te: TransitionExpectation = make_product_te(&phi0, &dims, &path_class(), &Tolerances::default()).unwrap().into();
        let sigma = phi0.joint_density(&region(&[4, 7]), 4096).unwrap();
        let out = te.apply_predual(&sigma, 4096).unwrap();
        assert_eq!(out.support(), &region(&[2, 3, 4, 7]));
        assert!((out.trace() - ONE).norm() < 1e-14);
        let bad = phi0.joint_density(&region(&[2, 4]), 4096).unwrap();
        assert!(matches!(te.apply_predual(&bad, 4096), Err(TeError::PredualSupport { .. })));
    }
}
