//! Dense complex linear algebra on window matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `a·b`, skipping zero entries when either factor is mostly zero. Window
/// operators built from monomial maps are very sparse.
pub fn smul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matrix shape mismatch");
    let zero = Complex64::new(0.0, 0.0);
    let nnz = |m: &CMat| m.iter().filter(|z| **z != zero).count();
    let (na, nb) = (nnz(a), nnz(b));
    if na * 8 > a.len() && nb * 8 > b.len() {
        return a * b;
    }
    let mut out = CMat::zeros(a.nrows(), b.ncols());
    if na * b.ncols() <= nb * a.nrows() {
        for k in 0..a.ncols() {
            for i in 0..a.nrows() {
                let x = a[(i, k)];
                if x != zero {
                    for j in 0..b.ncols() {
                        let y = b[(k, j)];
                        if y != zero {
                            out[(i, j)] += x * y;
                        }
                    }
                }
            }
        }
    } else {
        for j in 0..b.ncols() {
            for k in 0..b.nrows() {
                let y = b[(k, j)];
                if y != zero {
                    let col = a.column(k);
                    let mut dst = out.column_mut(j);
                    dst.axpy(y, &col, Complex64::new(1.0, 0.0));
                }
            }
        }
    }
    out
}

/// Orthonormal basis (as columns) of the span of the given columns of `m`,
/// built by two-pass Gram–Schmidt in column order. Columns whose residual
/// norm falls below `tol` are skipped, so coordinate-aligned ranges yield
/// exactly the coordinate vectors.
pub fn range_basis_of(m: &CMat, cols: &[usize], tol: f64) -> CMat {
    let mut basis: Vec<CVec> = Vec::new();
    for &j in cols {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&v);
                v -= b * p;
            }
        }
        let n = v.norm();
        if n > tol {
            basis.push(v / Complex64::new(n, 0.0));
        }
    }
    columns_to_matrix(m.nrows(), &basis)
}

pub fn range_basis(m: &CMat, tol: f64) -> CMat {
    let cols: Vec<usize> = (0..m.ncols()).collect();
    range_basis_of(m, &cols, tol)
}

pub fn columns_to_matrix(rows: usize, cols: &[CVec]) -> CMat {
    let mut out = CMat::zeros(rows, cols.len());
    for (j, v) in cols.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Orthonormal basis of the null space of `m`, from singular values below `tol`.
pub fn nullspace(m: &CMat, tol: f64) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let rows = m.nrows().max(n);
    let mut padded = CMat::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut null = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= tol {
            null.push(vt.row(k).adjoint());
        }
    }
    columns_to_matrix(n, &null)
}

/// Unitary factor of the polar decomposition of a square matrix.
pub fn polar_unitary(m: &CMat) -> CMat {
    if m.nrows() == 0 {
        return m.clone();
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested left singular vectors");
    let vt = svd.v_t.expect("requested right singular vectors");
    u * vt
}

/// Unitary `U` minimising `‖U·from − to‖_F` (orthogonal Procrustes).
pub fn procrustes(from: &CMat, to: &CMat) -> CMat {
    polar_unitary(&(to * from.adjoint()))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    CMat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Largest Euclidean norm of a column of `a − b` over `cols`.
pub fn max_column_deviation(a: &CMat, b: &CMat, cols: &[usize]) -> f64 {
    cols.iter().map(|&j| (a.column(j) - b.column(j)).norm()).fold(0.0, f64::max)
}

/// Frobenius norm of `a − b` restricted to `cols`.
pub fn frobenius_on(a: &CMat, b: &CMat, cols: &[usize]) -> f64 {
    cols.iter().map(|&j| (a.column(j) - b.column(j)).norm_squared()).sum::<f64>().sqrt()
}

/// `max ‖M*M − I‖, ‖MM* − I‖` (entrywise Frobenius).
pub fn unitarity_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let id = CMat::identity(n, n);
    ((m.adjoint() * m) - &id).norm().max(((m * m.adjoint()) - &id).norm())
}

/// Largest distance of a column of `x` from the span of the orthonormal
/// columns of `q`.
pub fn containment_residual(x: &CMat, q: &CMat) -> f64 {
    if x.ncols() == 0 {
        return 0.0;
    }
    let proj = q * (q.adjoint() * x);
    (0..x.ncols()).map(|j| (x.column(j) - proj.column(j)).norm()).fold(0.0, f64::max)
}

/// Spectral projection of the Hermitian part of `m` onto eigenvalues above `threshold`.
pub fn eigen_projection(m: &CMat, threshold: f64) -> CMat {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut p = CMat::zeros(n, n);
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        if *lam > threshold {
            let v = eig.eigenvectors.column(k);
            p += v * v.adjoint();
        }
    }
    p
}

/// Multiplies `m` by the unimodular scalar making its first entry of modulus
/// above `tol` (in column-major order) real and positive.
pub fn normalize_global_phase(m: &CMat, tol: f64) -> CMat {
    match m.iter().find(|z| z.norm() > tol) {
        Some(z) => m * (z.conj() / z.norm()),
        None => m.clone(),
    }
}

/// Largest modulus of an entry; 0 for empty matrices.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn rank(m: &CMat, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    m.clone().svd(false, false).singular_values.iter().filter(|s| **s > tol).count()
}
