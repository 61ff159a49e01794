//! Wold decomposition, defect spaces and the defect splitting of a
//! q-commuting pair, computed on truncation windows.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graded::TruncationWindow;
use crate::linalg::{self, c, CMat, CVec};
use crate::opalg::{densify_on, equal_on_window, BasisKey, LazyOperator, TruncatedMatrix, WindowBasis};
use crate::report::CheckRecord;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Isometry defects larger than this reject an input outright.
pub const ISOMETRY_TOL: f64 = 1e-9;

/// Checks `V*V = I` on the safe columns and returns the largest column residual.
pub fn check_isometry(v: &TruncatedMatrix, tol: f64) -> Result<f64> {
    let g = v.matrix.adjoint() * &v.matrix;
    let mut worst: f64 = 0.0;
    for j in v.safe_columns() {
        let mut col = g.column(j).into_owned();
        col[j] -= c(1.0, 0.0);
        let r = col.norm();
        if r > tol {
            return Err(Error::NotIsometric { column: v.basis.label(j), residual: r });
        }
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Projection `I − VV*` and an orthonormal basis of its range.
#[derive(Clone, Debug)]
pub struct Defect {
    pub projection: CMat,
    pub basis: CMat,
}

pub fn defect(v: &TruncatedMatrix, rank_tol: f64) -> Result<Defect> {
    check_isometry(v, ISOMETRY_TOL)?;
    let n = v.dim();
    let projection = CMat::identity(n, n) - &v.matrix * v.matrix.adjoint();
    let basis = linalg::range_basis(&projection, rank_tol);
    Ok(Defect { projection, basis })
}

/// Stabilised limit of `VⁿV*ⁿ`, rounded to a projection.
#[derive(Clone, Debug)]
pub struct KuProjection {
    pub projection: CMat,
    pub basis: CMat,
    pub iterations: usize,
    pub residual: f64,
}

pub fn ku_projection(v: &TruncatedMatrix, n_max: usize, tol: f64) -> Result<KuProjection> {
    check_isometry(v, ISOMETRY_TOL)?;
    let n = v.dim();
    // VⁿV*ⁿ returns every vector to its own degree, so no column is cut by
    // the window and all of them take part in the stopping test.
    let vh = v.matrix.adjoint();
    let mut prev = CMat::identity(n, n);
    let mut residual = f64::INFINITY;
    for it in 1..=n_max.max(1) {
        let next = linalg::smul(&linalg::smul(&v.matrix, &prev), &vh);
        residual = linalg::max_abs(&(&next - &prev));
        prev = next;
        if residual < tol {
            let projection = if linalg::max_abs(&prev) < 1e-14 {
                CMat::zeros(n, n)
            } else {
                linalg::eigen_projection(&prev, 0.5)
            };
            let basis = linalg::range_basis(&projection, DEFAULT_RANK_TOL);
            return Ok(KuProjection { projection, basis, iterations: it, residual });
        }
    }
    Err(Error::Inconclusive { iterations: n_max, residual })
}

/// Shift/unitary splitting of a window isometry.
#[derive(Clone, Debug)]
pub struct WoldParts {
    pub ku_projection: CMat,
    pub ku_basis: CMat,
    pub shift_multiplicity_basis: CMat,
    pub unitary_part: CMat,
    /// Rows: degree-major `(n, wandering basis index)` for `n < N`, then the unitary part.
    pub wave_map: CMat,
    pub iterations: usize,
    pub ku_residual: f64,
    pub wave_isometry_residual: f64,
    pub intertwining_residual: f64,
}

pub fn wold_decompose(v: &TruncatedMatrix, n_max: usize, tol: f64, rank_tol: f64) -> Result<WoldParts> {
    let def = defect(v, rank_tol)?;
    let ku = ku_projection(v, n_max, tol)?;
    let cap = v.window.cap;
    let m = def.basis.ncols();
    let k = ku.basis.ncols();
    let n = v.dim();
    let vh = v.matrix.adjoint();

    let mut wave = CMat::zeros(cap * m + k, n);
    let mut block = def.basis.adjoint();
    for deg in 0..cap {
        wave.view_mut((deg * m, 0), (m, n)).copy_from(&block);
        block = &block * &vh;
    }
    let unitary_part = ku.basis.adjoint() * &v.matrix * &ku.basis;
    wave.view_mut((cap * m, 0), (k, n)).copy_from(&(ku.basis.adjoint() * &ku.projection));

    let model = shift_plus_unitary(cap, m, &unitary_part);
    let safe = v.safe_columns();
    let gram = wave.adjoint() * &wave;
    let id = CMat::identity(n, n);
    let wave_isometry_residual = linalg::max_column_deviation(&gram, &id, &safe);
    let lhs = &wave * &v.matrix;
    let rhs = &model * &wave;
    let intertwining_residual = linalg::max_column_deviation(&lhs, &rhs, &safe);
    Ok(WoldParts {
        ku_projection: ku.projection,
        ku_basis: ku.basis,
        shift_multiplicity_basis: def.basis,
        unitary_part,
        wave_map: wave,
        iterations: ku.iterations,
        ku_residual: ku.residual,
        wave_isometry_residual,
        intertwining_residual,
    })
}

/// `(M_z ⊗ I_m) ⊕ W` on the degree-major window of cap `cap`.
pub fn shift_plus_unitary(cap: usize, m: usize, w: &CMat) -> CMat {
    let k = w.nrows();
    let mut out = CMat::zeros(cap * m + k, cap * m + k);
    for deg in 0..cap.saturating_sub(1) {
        for i in 0..m {
            out[((deg + 1) * m + i, deg * m + i)] = c(1.0, 0.0);
        }
    }
    out.view_mut((cap * m, cap * m), (k, k)).copy_from(w);
    out
}

/// Column-array JSON form of [`WoldParts`].
#[derive(Clone, Debug, Serialize)]
pub struct WoldPartsJson {
    #[serde(rename = "kuBasis")]
    pub ku_basis: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "shiftMultiplicityBasis")]
    pub shift_multiplicity_basis: Vec<Vec<[f64; 2]>>,
    #[serde(rename = "unitaryPart")]
    pub unitary_part: Vec<Vec<[f64; 2]>>,
    pub iterations: usize,
    pub residuals: WoldResiduals,
}

#[derive(Clone, Debug, Serialize)]
pub struct WoldResiduals {
    pub ku: f64,
    #[serde(rename = "waveIsometry")]
    pub wave_isometry: f64,
    pub intertwining: f64,
}

impl WoldParts {
    pub fn to_json(&self) -> WoldPartsJson {
        WoldPartsJson {
            ku_basis: columns_json(&self.ku_basis),
            shift_multiplicity_basis: columns_json(&self.shift_multiplicity_basis),
            unitary_part: columns_json(&self.unitary_part),
            iterations: self.iterations,
            residuals: WoldResiduals {
                ku: self.ku_residual,
                wave_isometry: self.wave_isometry_residual,
                intertwining: self.intertwining_residual,
            },
        }
    }
}

/// Matrix as a list of columns of `[re, im]` pairs, with tiny entries flushed to zero.
pub fn columns_json(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    let flush = |x: f64| if x.abs() < 1e-15 { 0.0 } else { x };
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| [flush(z.re), flush(z.im)]).collect())
        .collect()
}

/// Dense data of a tuple of operators and their product `V = V₁⋯V_d` on one window.
#[derive(Clone, Debug)]
pub struct OpWindow {
    pub ops: Vec<LazyOperator>,
    pub product: LazyOperator,
    pub basis: Arc<WindowBasis>,
    pub window: TruncationWindow,
    pub dense: Vec<CMat>,
    pub adjoints: Vec<CMat>,
    /// `I − V_iV_i*` compressed to the window.
    pub defects: Vec<CMat>,
    pub defect_bases: Vec<CMat>,
    pub product_dense: TruncatedMatrix,
    pub product_adjoint: CMat,
    pub product_defect: CMat,
    pub product_defect_basis: CMat,
    pub rank_tol: f64,
}

impl OpWindow {
    pub fn new(ops: Vec<LazyOperator>, cap: usize, rank_tol: f64) -> Result<Self> {
        let sig = ops.first().ok_or_else(|| Error::InvalidArgument("empty operator list".into()))?.signature();
        Self::on_basis(ops, Arc::new(WindowBasis::new(sig, cap)), rank_tol)
    }

    pub fn on_basis(ops: Vec<LazyOperator>, basis: Arc<WindowBasis>, rank_tol: f64) -> Result<Self> {
        let sig = basis.signature();
        let product = LazyOperator::product(sig, &ops)?;
        let window = TruncationWindow::new(basis.cap(), product.band())?;
        let dense_of = |op: &LazyOperator| -> Result<CMat> { Ok(densify_on(op, basis.clone())?.matrix) };
        let id = LazyOperator::identity(sig);
        let mut dense = Vec::new();
        let mut adjoints = Vec::new();
        let mut defects = Vec::new();
        let mut defect_bases = Vec::new();
        for op in &ops {
            dense.push(dense_of(op)?);
            adjoints.push(dense_of(&op.adjoint())?);
            let d = dense_of(&id.sub(&op.compose(&op.adjoint())?)?)?;
            defect_bases.push(linalg::range_basis(&d, rank_tol));
            defects.push(d);
        }
        let product_dense = densify_on(&product, basis.clone())?;
        let product_adjoint = dense_of(&product.adjoint())?;
        let product_defect = dense_of(&id.sub(&product.compose(&product.adjoint())?)?)?;
        let product_defect_basis = linalg::range_basis(&product_defect, rank_tol);
        Ok(OpWindow {
            ops,
            product,
            basis,
            window,
            dense,
            adjoints,
            defects,
            defect_bases,
            product_dense,
            product_adjoint,
            product_defect,
            product_defect_basis,
            rank_tol,
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn cap(&self) -> usize {
        self.basis.cap()
    }

    /// Basis vectors of total degree below `cap − band(V)`.
    pub fn safe_columns(&self) -> Vec<usize> {
        self.basis.safe_indices(self.window.safe_cap())
    }

    pub fn densify(&self, op: &LazyOperator) -> Result<CMat> {
        Ok(densify_on(op, self.basis.clone())?.matrix)
    }

    /// Highest total degree carried by a window vector (entries above 1e-12).
    pub fn vector_degree(&self, v: &CVec) -> Option<u32> {
        v.iter()
            .enumerate()
            .filter(|(_, z)| z.norm() > 1e-12)
            .filter_map(|(i, _)| match &self.basis.keys()[i] {
                BasisKey::Hardy(g, _) => Some(g.degree()),
                BasisKey::Ku(_) => Some(0),
            })
            .max()
    }

    /// Dense adjoint of the ordered product of the listed factors.
    pub fn adjoint_of_product(&self, factors: &[usize]) -> CMat {
        let n = self.dim();
        let mut out = CMat::identity(n, n);
        // (V_a V_b ⋯)* = ⋯ V_b* V_a*, so V_a* acts first.
        for &i in factors {
            out = linalg::smul(&self.adjoints[i], &out);
        }
        out
    }
}

/// Outcome of [`lambda_split`].
#[derive(Clone, Debug)]
pub struct LambdaReport {
    /// Matrix of `Λ` from the product-defect basis to the stacked pair-defect bases.
    pub lambda: CMat,
    pub product_defect_dim: usize,
    pub first_defect_dim: usize,
    pub second_defect_dim: usize,
    pub checks: Vec<CheckRecord>,
}

/// Samples used for the randomized norm identity.
const NORM_SAMPLES: usize = 64;

/// Builds `Λ: D_{V*}h ↦ (D_{V₁*}h, D_{V₂*}V₁*h)` and verifies the defect
/// identities of a pair.
pub fn lambda_split(w: &OpWindow, tol: f64, seed: u64) -> Result<LambdaReport> {
    if w.len() != 2 {
        return Err(Error::InvalidArgument("lambda_split needs a pair".into()));
    }
    let sig = w.basis.signature();
    let (e, e1, e2) = (&w.product_defect_basis, &w.defect_bases[0], &w.defect_bases[1]);
    let (m, m1, m2) = (e.ncols(), e1.ncols(), e2.ncols());
    if m > m1 + m2 {
        return Err(Error::RankMismatch(format!(
            "defect of the product has dimension {m} but the pair defects sum to {m1} + {m2}"
        )));
    }
    let (d1, d2) = (&w.defects[0], &w.defects[1]);
    let (a1, a2) = (&w.adjoints[0], &w.adjoints[1]);
    let stack = |top: CMat, bottom: CMat| -> CMat {
        let mut out = CMat::zeros(m1 + m2, top.ncols());
        out.view_mut((0, 0), (m1, top.ncols())).copy_from(&top);
        out.view_mut((m1, 0), (m2, top.ncols())).copy_from(&bottom);
        out
    };
    let g2 = stack(e1.adjoint() * d1, e2.adjoint() * d2 * a1);
    let g1 = stack(e1.adjoint() * d1 * a2, e2.adjoint() * d2);
    let lambda = &g2 * e;

    let mut checks = Vec::new();
    let iso = linalg::max_column_deviation(&(lambda.adjoint() * &lambda), &CMat::identity(m, m), &(0..m).collect::<Vec<_>>());
    checks.push(CheckRecord::residual("lambda-isometry", iso, tol));

    let safe_cap = w.window.safe_cap() as u32;
    let f_degree = |j: usize| -> Option<u32> {
        if j < m1 {
            w.vector_degree(&e1.column(j).into_owned())
        } else {
            w.vector_degree(&e2.column(j - m1).into_owned())
        }
    };
    let safe_codomain: Vec<usize> = (0..m1 + m2).filter(|&j| f_degree(j).is_none_or(|d| d < safe_cap)).collect();
    let coiso = linalg::max_column_deviation(&(&lambda * lambda.adjoint()), &CMat::identity(m1 + m2, m1 + m2), &safe_codomain);
    checks.push(
        CheckRecord::residual("lambda-coisometry", coiso, tol)
            .with_note(format!("dims {m} -> {m1} + {m2}; {} safe codomain vectors", safe_codomain.len())),
    );

    // Operator identities, compared lazily and exactly.
    let v1 = &w.ops[0];
    let v2 = &w.ops[1];
    let id = LazyOperator::identity(sig);
    let defect_of = |op: &LazyOperator| -> Result<LazyOperator> { id.sub(&op.compose(&op.adjoint())?) };
    let dd = defect_of(&w.product)?;
    let dd1 = defect_of(v1)?;
    let dd2 = defect_of(v2)?;
    let sq = |x: &LazyOperator| x.compose(x);
    let lhs = sq(&dd)?;
    let key1 = sq(&dd1)?.add(&v1.compose(&sq(&dd2)?)?.compose(&v1.adjoint())?)?;
    let key2 = v2.compose(&sq(&dd1)?)?.compose(&v2.adjoint())?.add(&sq(&dd2)?)?;
    let window = TruncationWindow::new(w.cap(), w.product.band())?;
    checks.push(CheckRecord::from_comparison("defect-identity-first", &equal_on_window(&lhs, &key1, &window, tol)?));
    checks.push(CheckRecord::from_comparison("defect-identity-second", &equal_on_window(&lhs, &key2, &window, tol)?));

    // Norm identity on random window vectors.
    let safe = w.safe_columns();
    let d = &w.product_defect;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..NORM_SAMPLES {
        let mut h = CVec::zeros(w.dim());
        for &j in &safe {
            h[j] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let nd = (d * &h).norm_squared();
        let first = (d1 * (a2 * &h)).norm_squared() + (d2 * &h).norm_squared();
        let second = (d1 * &h).norm_squared() + (d2 * (a1 * &h)).norm_squared();
        worst = worst.max((nd - first).abs() / nd.max(1.0)).max((nd - second).abs() / nd.max(1.0));
    }
    checks.push(CheckRecord::residual("defect-norm-identity", worst, tol));

    // Both stacked column maps span the same space, which contains every
    // safe defect vector.
    let q1 = linalg::range_basis(&g1, w.rank_tol);
    let q2 = linalg::range_basis(&g2, w.rank_tol);
    let g1_safe = g1.select_columns(&safe);
    let g2_safe = g2.select_columns(&safe);
    let f_safe = CMat::identity(m1 + m2, m1 + m2).select_columns(&safe_codomain);
    let span = linalg::containment_residual(&g2_safe, &q1)
        .max(linalg::containment_residual(&g1_safe, &q2))
        .max(linalg::containment_residual(&f_safe, &q1))
        .max(linalg::containment_residual(&f_safe, &q2));
    checks.push(CheckRecord::residual("defect-span-equality", span, tol));

    Ok(LambdaReport { lambda, product_defect_dim: m, first_defect_dim: m1, second_defect_dim: m2, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::{densify, Atom, SpaceSignature};
    use crate::phase::Phase;
    use crate::smatrix::SMatrix;

    fn shift1() -> LazyOperator {
        LazyOperator::atom(SpaceSignature::hardy(1), Atom::Shift(0)).unwrap()
    }

    #[test]
    fn shift_defect_is_constants() {
        let d = defect(&densify(&shift1(), 8).unwrap(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.basis.ncols(), 1);
        assert_eq!(d.basis[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn rotation_has_no_defect() {
        let r = LazyOperator::atom(SpaceSignature::hardy(1), Atom::Rot(Phase::rational(1, 8))).unwrap();
        let d = defect(&densify(&r, 8).unwrap(), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.basis.ncols(), 0);
        assert!(linalg::max_abs(&d.projection) < 1e-15);
    }

    #[test]
    fn non_isometry_rejected_with_column() {
        let s = SpaceSignature::hardy(1);
        let op = LazyOperator::word(s, vec![Atom::Shift(0), Atom::Coshift(0)]).unwrap();
        match defect(&densify(&op, 6).unwrap(), DEFAULT_RANK_TOL) {
            Err(Error::NotIsometric { column, .. }) => assert_eq!(column, "1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pure_shift_has_no_unitary_part() {
        let v = densify(&shift1(), 16).unwrap();
        let k = ku_projection(&v, 18, 1e-12).unwrap();
        assert_eq!(k.basis.ncols(), 0);
        assert!(linalg::max_abs(&k.projection) < 1e-15);
    }

    #[test]
    fn shift_plus_unitary_block() {
        let s = SpaceSignature::new(1, 1, 3);
        let h = crate::cyclo::Scalar::inv_sqrt2();
        let z = crate::cyclo::Scalar::zero();
        let one = crate::cyclo::Scalar::one();
        let w = SMatrix::from_rows(vec![
            vec![h.clone(), h.clone(), z.clone()],
            vec![h.clone(), -&h, z.clone()],
            vec![z.clone(), z.clone(), crate::cyclo::Scalar::root(1, 3)],
        ])
        .unwrap();
        let _ = one;
        let op = LazyOperator::atom(s, Atom::Shift(0))
            .unwrap()
            .add(&LazyOperator::atom(s, Atom::Ku(Arc::new(w.clone()))).unwrap())
            .unwrap();
        let v = densify(&op, 8).unwrap();
        let k = ku_projection(&v, 10, 1e-12).unwrap();
        // Oracle: the unitary block occupies the last three coordinates.
        let mut expect = CMat::zeros(11, 11);
        for i in 8..11 {
            expect[(i, i)] = c(1.0, 0.0);
        }
        assert!((k.projection - expect).norm() < 1e-12);
        let parts = wold_decompose(&v, 10, 1e-12, DEFAULT_RANK_TOL).unwrap();
        assert!((parts.unitary_part - w.to_dmatrix()).norm() < 1e-12);
        assert!(parts.intertwining_residual < 1e-12);
        assert!(parts.wave_isometry_residual < 1e-12);
        assert!((parts.wave_map - CMat::identity(11, 11)).norm() < 1e-12);
    }

    #[test]
    fn bidisk_product_defect_has_boundary_monomials() {
        let s = SpaceSignature::hardy(2);
        let q = Phase::rational(1, 8);
        let v1 = LazyOperator::word(s, vec![Atom::Rot(q), Atom::Shift(0)]).unwrap();
        let v2 = LazyOperator::atom(s, Atom::Shift(1)).unwrap();
        let w = OpWindow::new(vec![v1, v2], 6, DEFAULT_RANK_TOL).unwrap();
        // Oracle: monomials with min(n1, n2) = 0 inside the 6x6 window.
        let expected: Vec<usize> = w
            .basis
            .keys()
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, BasisKey::Hardy(g, _) if g.0.iter().min() == Some(&0)))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(w.product_defect_basis.ncols(), expected.len());
        for (col, &row) in expected.iter().enumerate() {
            assert_eq!(w.product_defect_basis[(row, col)], c(1.0, 0.0));
        }
    }
}
