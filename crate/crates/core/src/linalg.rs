//! Dense complex matrix helpers shared by the operator-algebra modules.
//!
//! Multi-site operators use the row-major leg convention: a flat row (or
//! column) index is the mixed-radix number formed by the per-leg indices, the
//! first leg being most significant.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Product of dimensions, or `None` on overflow.
pub fn checked_product(dims: &[usize]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

/// For each flat index in the permuted leg order, the flat index in the
/// original order. New leg `k` is old leg `perm[k]`.
pub fn leg_index_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    debug_assert_eq!(dims.len(), perm.len());
    let total = product(dims);
    let mut old_stride = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        old_stride[i] = old_stride[i + 1] * dims[i + 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| old_stride[p]).collect();
    let mut map = Vec::with_capacity(total);
    let mut digits = vec![0usize; dims.len()];
    let mut old = 0usize;
    for _ in 0..total {
        map.push(old);
        for k in (0..new_dims.len()).rev() {
            digits[k] += 1;
            old += strides[k];
            if digits[k] < new_dims[k] {
                break;
            }
            old -= strides[k] * new_dims[k];
            digits[k] = 0;
        }
    }
    map
}

pub fn is_identity_perm(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &p)| i == p)
}

/// Reorders the tensor legs of a square operator.
pub fn permute_legs(m: &Mat, dims: &[usize], perm: &[usize]) -> Mat {
    if is_identity_perm(perm) {
        return m.clone();
    }
    let map = leg_index_map(dims, perm);
    let n = map.len();
    par_from_fn(n, n, |i, j| m[(map[i], map[j])])
}

/// Reorders the tensor legs indexing the rows of a (possibly rectangular) matrix.
pub fn permute_row_legs(m: &Mat, dims: &[usize], perm: &[usize]) -> Mat {
    if is_identity_perm(perm) {
        return m.clone();
    }
    let map = leg_index_map(dims, perm);
    par_from_fn(map.len(), m.ncols(), |i, j| m[(map[i], j)])
}

/// Partial trace over the trailing factor of dimension `traced`.
pub fn trace_out_trailing(m: &Mat, kept: usize, traced: usize) -> Mat {
    Mat::from_fn(kept, kept, |i, j| {
        (0..traced).map(|t| m[(i * traced + t, j * traced + t)]).sum()
    })
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn frobenius_sqr(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Hilbert–Schmidt inner product `tr(a† b)`.
pub fn hs_inner(a: &Mat, b: &Mat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn hermitian_residual(m: &Mat) -> f64 {
    frobenius(&(m - m.adjoint()))
}

pub fn hermitian_part(m: &Mat) -> Mat {
    (m + m.adjoint()).scale(0.5)
}

fn all_finite(m: &Mat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn sorted_eigen(vals: &DVector<f64>, vecs: &Mat) -> (Vec<f64>, Mat) {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let values = order.iter().map(|&i| vals[i]).collect();
    let vectors = Mat::from_fn(vecs.nrows(), order.len(), |r, c| vecs[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues (ascending) and eigenvectors of the Hermitian part of `m`.
///
/// The symmetric QR iteration can return NaN on large, exactly degenerate
/// matrices (Choi matrices of product maps, for instance). The fallback
/// diagonalizes `U h U†` for a fixed seeded Haar unitary `U` and rotates the
/// eigenvectors back.
pub fn hermitian_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let h = hermitian_part(m);
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    if eig.eigenvalues.iter().all(|v| v.is_finite()) && all_finite(&eig.eigenvectors) {
        return sorted_eigen(&eig.eigenvalues, &eig.eigenvectors);
    }
    conjugated_eigen(&h)
}

fn conjugated_eigen(h: &Mat) -> (Vec<f64>, Mat) {
    let n = h.nrows();
    let mut rng = crate::rng::stream_rng(0x5eed, n as u64);
    let u = haar_isometry(&mut rng, n, n);
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(&(&u * h * u.adjoint())));
    sorted_eigen(&eig.eigenvalues, &(u.adjoint() * eig.eigenvectors))
}

/// Ascending eigenvalues of the Hermitian part of `m`; falls back to the
/// diagonal of a complex Schur form when the symmetric iteration fails.
pub fn hermitian_eigenvalues(m: &Mat) -> Vec<f64> {
    let h = hermitian_part(m);
    let direct = h.symmetric_eigenvalues();
    let mut vals: Vec<f64> = if direct.iter().all(|v| v.is_finite()) {
        direct.iter().copied().collect()
    } else {
        let (_, t) = nalgebra::Schur::new(h).unpack();
        (0..t.nrows()).map(|i| t[(i, i)].re).collect()
    };
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn min_hermitian_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    hermitian_eigenvalues(m)[0]
}

/// `f` applied to the spectrum of a Hermitian matrix.
pub fn hermitian_function(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, vecs) = hermitian_eigen(m);
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| C64::new(f(v), 0.0)));
    &vecs * Mat::from_diagonal(&d) * vecs.adjoint()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (br, bc) = b.shape();
    if a.nrows() * br * a.ncols() * bc < PAR_THRESHOLD {
        return a.kronecker(b);
    }
    par_from_fn(a.nrows() * br, a.ncols() * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

const PAR_THRESHOLD: usize = 1 << 16;

/// `Mat::from_fn`, filling columns in parallel once the matrix is large.
pub fn par_from_fn(nrows: usize, ncols: usize, f: impl Fn(usize, usize) -> C64 + Sync) -> Mat {
    if nrows * ncols < PAR_THRESHOLD || nrows == 0 {
        return Mat::from_fn(nrows, ncols, f);
    }
    let mut data = vec![ZERO; nrows * ncols];
    data.par_chunks_mut(nrows).enumerate().for_each(|(j, col)| {
        for (i, z) in col.iter_mut().enumerate() {
            *z = f(i, j);
        }
    });
    Mat::from_vec(nrows, ncols, data)
}

pub fn identity(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn trace(m: &Mat) -> C64 {
    m.trace()
}

/// Attempts `m = a ⊗ b` with `a` of size `da` and `b` of size `db`, through
/// a rank-one test of the realigned matrix. Succeeds when the rank-one
/// residual is at most `rel_tol` times the norm of `m`.
pub fn split_kron(m: &Mat, da: usize, db: usize, rel_tol: f64) -> Option<(Mat, Mat)> {
    debug_assert_eq!(m.nrows(), da * db);
    let norm = frobenius(m);
    if norm == 0.0 {
        return Some((Mat::zeros(da, da), Mat::zeros(db, db)));
    }
    // realigned R[(i1, j1), (i2, j2)] = m[(i1 db + i2, j1 db + j2)]
    let r = |p: usize, q: usize| m[((p / da) * db + q / db, (p % da) * db + q % db)];
    let (mut best, mut bp, mut bq) = (0.0, 0, 0);
    for p in 0..da * da {
        for q in 0..db * db {
            let v = r(p, q).norm_sqr();
            if v > best {
                best = v;
                bp = p;
                bq = q;
            }
        }
    }
    let pivot = r(bp, bq);
    let col: Vec<C64> = (0..da * da).map(|p| r(p, bq)).collect();
    let row: Vec<C64> = (0..db * db).map(|q| r(bp, q) / pivot).collect();
    let mut resid = 0.0;
    for (p, cp) in col.iter().enumerate() {
        for (q, rq) in row.iter().enumerate() {
            resid += (r(p, q) - cp * rq).norm_sqr();
        }
    }
    if resid.sqrt() > rel_tol * norm {
        return None;
    }
    let a = Mat::from_fn(da, da, |i, j| col[i * da + j]);
    let b = Mat::from_fn(db, db, |i, j| row[i * db + j]);
    Some((a, b))
}

/// If `m` is proportional to the identity (relative tolerance), the factor.
pub fn identity_multiple(m: &Mat, rel_tol: f64) -> Option<C64> {
    let n = m.nrows();
    let c = m.trace() / n as f64;
    let mut resid = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { c } else { ZERO };
            resid += (m[(i, j)] - target).norm_sqr();
        }
    }
    let norm = frobenius(m);
    (resid.sqrt() <= rel_tol * norm.max(f64::MIN_POSITIVE)).then_some(c)
}

pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Gaussian matrix scaled to unit Frobenius norm.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    let m = random_gaussian(rng, rows, cols);
    let n = frobenius(&m);
    m.unscale(n)
}

/// Haar-distributed isometry `rows × cols` (`rows >= cols`): QR of a complex
/// Ginibre matrix with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_isometry<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let g = random_gaussian(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random density matrix `g g† / tr(g g†)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Mat {
    let g = random_gaussian(rng, d, d);
    let rho = &g * g.adjoint();
    let t = rho.trace();
    rho.unscale(t.re)
}

/// Closest isometry in Frobenius norm, `v (v† v)^{-1/2}`.
pub fn polar_isometry(v: &Mat) -> Option<Mat> {
    let gram = v.adjoint() * v;
    let vals = hermitian_eigenvalues(&gram);
    if vals.first().map(|&l| l <= 1e-300).unwrap_or(true) {
        return None;
    }
    Some(v * hermitian_function(&gram, |l| 1.0 / l.sqrt()))
}

/// Qubit Pauli matrices by name: `I`, `X`, `Y`, `Z`.
pub fn pauli(name: &str) -> Option<Mat> {
    let (z, o, i) = (ZERO, ONE, C64::new(0.0, 1.0));
    let m = match name {
        "I" => [o, z, z, o],
        "X" => [z, o, o, z],
        "Y" => [z, -i, i, z],
        "Z" => [o, z, z, -o],
        _ => return None,
    };
    Some(Mat::from_row_slice(2, 2, &m))
}
