//! Tuples of q-commuting isometries: the per-index pair view `(V_i, V_(i))`,
//! the maps `Δ_i` identifying defect spaces, a single shared model frame, and
//! the extension of the model tuple to unitaries on a bilateral window.

pub mod bilateral;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bcl::{self, column_maps, complement, tau_matrix, BCLTuple, Flavor};
use crate::cyclo::Scalar;
use crate::error::{Error, Result};
use crate::graded::TruncationWindow;
use crate::linalg::{self, c, CMat};
use crate::opalg::{densify_on, Atom, Comparison, LazyOperator, SpaceSignature, Term, TruncatedMatrix};
use crate::passage::q_relation;
use crate::phase::{qi_product, Phase, QMatrix};
use crate::report::CheckRecord;
use crate::smatrix::SMatrix;
use crate::wold::{self, OpWindow, DEFAULT_RANK_TOL};

pub use bilateral::{extend_to_unitaries, BiKey, BVec, BilateralOperator, BilateralWindow, Extension};

/// `V_(i)`, the ordered product of every operator except the `i`-th.
pub fn v_complement(ops: &[LazyOperator], i: usize) -> Result<LazyOperator> {
    if ops.len() < 2 {
        return Err(Error::InvalidArgument("a complement needs at least two operators".into()));
    }
    complement(ops, i)
}

/// Checks `V_i V_(i) = q_i V_(i) V_i` on the window.
pub fn index_relation(ops: &[LazyOperator], q: &QMatrix, i: usize, cap: usize, tol: f64) -> Result<Comparison> {
    let comp = v_complement(ops, i)?;
    q_relation(&ops[i], &comp, qi_product(q, i)?, cap, tol)
}

/// `Δ_i` in coordinates: from an orthonormal basis of `ran D_{V_(i)*}` to the
/// stacked defect coordinates of every `j ≠ i`.
#[derive(Clone, Debug)]
pub struct DeltaMap {
    pub index: usize,
    pub matrix: CMat,
    /// `max ‖Δx − y‖` over window columns.
    pub isometry_residual: f64,
    /// Entrywise gap between the Gram matrices of source and target columns.
    pub gram_residual: f64,
    /// Distance of the low-degree target coordinates from the image.
    pub onto_residual: f64,
}

/// Row ranges of each defect summand inside the stacked fiber coordinates.
fn slot_offsets(w: &OpWindow) -> Vec<(usize, usize)> {
    let mut start = 0;
    w.defect_bases
        .iter()
        .map(|b| {
            let r = (start, b.ncols());
            start += b.ncols();
            r
        })
        .collect()
}

pub fn delta_map(w: &OpWindow, i: usize) -> Result<DeltaMap> {
    let comp = v_complement(&w.ops, i)?;
    let sig = w.basis.signature();
    let dc = w.densify(&LazyOperator::identity(sig).sub(&comp.compose(&comp.adjoint())?)?)?;
    let bc = linalg::range_basis(&dc, w.rank_tol);
    let from = bc.adjoint() * &dc;
    let (_, g1) = column_maps(w, i)?;
    let slots = slot_offsets(w);
    let keep: Vec<usize> =
        slots.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, &(s, len))| s..s + len).collect();
    let to = g1.select_rows(keep.iter());
    let matrix = linalg::procrustes(&from, &to);
    let all: Vec<usize> = (0..w.dim()).collect();
    let isometry_residual = linalg::max_column_deviation(&(&matrix * &from), &to, &all);
    let gram_residual = linalg::max_abs(&(from.adjoint() * &from - to.adjoint() * &to));
    let good = bcl::good_fiber(w);
    let targets: Vec<usize> = keep.iter().enumerate().filter(|(_, g)| good.contains(g)).map(|(r, _)| r).collect();
    let mut e = CMat::zeros(keep.len(), targets.len());
    for (col, &r) in targets.iter().enumerate() {
        e[(r, col)] = c(1.0, 0.0);
    }
    let onto_residual = linalg::containment_residual(&e, &linalg::range_basis(&to, w.rank_tol));
    Ok(DeltaMap { index: i, matrix, isometry_residual, gram_residual, onto_residual })
}

/// One operator of a model tuple: `R_{q_i} ⊗ A + M_z R_{q_i} ⊗ B ⊕ W` on
/// `(H² ⊗ F) ⊕ K_u`, where `A = P⊥U` and `B = PU`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexModel {
    pub q: Phase,
    pub lower: SMatrix,
    pub upper: SMatrix,
    pub w: SMatrix,
}

impl IndexModel {
    pub fn unitary(&self) -> SMatrix {
        self.lower.add(&self.upper)
    }

    pub fn projection(&self) -> SMatrix {
        self.upper.mul(&self.unitary().adjoint())
    }

    pub fn is_exact(&self) -> bool {
        self.lower.is_exact() && self.upper.is_exact() && self.w.is_exact()
    }
}

/// A model tuple sharing one fiber and one unitary summand.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TupleModel {
    pub q: QMatrix,
    pub fiber_dim: usize,
    pub ku_dim: usize,
    /// Fiber coordinates on which the model data is pinned down.
    pub good_fiber: Vec<usize>,
    /// Polynomial degree of each fiber basis vector (0 for abstract fibers).
    pub fiber_degrees: Vec<u32>,
    pub indices: Vec<IndexModel>,
    #[serde(default)]
    pub checks: Vec<CheckRecord>,
}

impl TupleModel {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn signature(&self) -> SpaceSignature {
        SpaceSignature::new(1, self.fiber_dim, self.ku_dim)
    }

    pub fn is_exact(&self) -> bool {
        self.indices.iter().all(IndexModel::is_exact)
    }

    /// True when every fiber coordinate is pinned down.
    pub fn fiber_is_complete(&self) -> bool {
        self.good_fiber.len() == self.fiber_dim
    }

    /// The pair tuple as a two-index model (second shape inputs are first
    /// converted to the first shape).
    pub fn from_pair(t: &BCLTuple) -> Result<Self> {
        t.validate(1e-12)?;
        let t = match t.flavor {
            Flavor::First => t.clone(),
            Flavor::Second => bcl::remark_map(t),
        };
        let f = t.fiber_dim();
        let perp = SMatrix::identity(f).sub(&t.p);
        let ua = t.u.adjoint();
        let qb = t.q.conj();
        let first = IndexModel { q: t.q, lower: perp.mul(&t.u), upper: t.p.mul(&t.u), w: t.w1.clone() };
        // R_q̄ M_z = q̄ M_z R_q̄ moves the phase into the upper block.
        let second =
            IndexModel { q: qb, lower: ua.mul(&t.p), upper: ua.mul(&perp).scale(&qb.to_scalar()), w: t.w2.clone() };
        Ok(TupleModel {
            q: QMatrix::pair(t.q),
            fiber_dim: f,
            ku_dim: t.ku_dim(),
            good_fiber: (0..f).collect(),
            fiber_degrees: vec![0; f],
            indices: vec![first, second],
            checks: Vec::new(),
        })
    }

    /// The `i`-th model operator as an exact lazy operator.
    pub fn model_operator(&self, i: usize) -> Result<LazyOperator> {
        let m = self.indices.get(i).ok_or(Error::IndexOutOfRange { index: i, dim: self.len() })?;
        let mut terms = Vec::new();
        if self.fiber_dim > 0 {
            terms.push(Term::new(Scalar::one(), vec![Atom::Rot(m.q), Atom::Fiber(Arc::new(m.lower.clone()))]));
            terms.push(Term::new(
                Scalar::one(),
                vec![Atom::Shift(0), Atom::Rot(m.q), Atom::Fiber(Arc::new(m.upper.clone()))],
            ));
        }
        if self.ku_dim > 0 {
            terms.push(Term::new(Scalar::one(), vec![Atom::Ku(Arc::new(m.w.clone()))]));
        }
        LazyOperator::from_terms(self.signature(), terms)
    }

    /// Approximate entries within `tol` of `m·ζ` (see [`Scalar::snap`])
    /// replaced by the exact value.
    pub fn snapped(&self, tol: f64) -> Self {
        let snap = |m: &SMatrix| m.snap_approx(tol);
        let indices = self
            .indices
            .iter()
            .map(|m| IndexModel { q: m.q, lower: snap(&m.lower), upper: snap(&m.upper), w: snap(&m.w) })
            .collect();
        TupleModel { indices, ..self.clone() }
    }
}

/// Applies `R_q ⊗ A + M_z R_q ⊗ B ⊕ W` to degree-major model coordinates.
fn apply_index_model(q: Phase, a: &CMat, b: &CMat, w: &CMat, cap: usize, x: &CMat) -> CMat {
    let f = a.nrows();
    let k = w.nrows();
    let mut out = CMat::zeros(x.nrows(), x.ncols());
    for n in 0..cap {
        let phase = q.pow(n as i64).value();
        let block = x.rows(n * f, f).map(|z| z * phase);
        let lower = linalg::smul(a, &block);
        let mut dst = out.rows_mut(n * f, f);
        dst += lower;
        if n + 1 < cap {
            let upper = linalg::smul(b, &block);
            let mut dst = out.rows_mut((n + 1) * f, f);
            dst += upper;
        }
    }
    if k > 0 {
        let ku = w * x.rows(cap * f, k);
        out.rows_mut(cap * f, k).copy_from(&ku);
    }
    out
}

/// Extracts a model tuple from `d ≥ 2` operators with phase matrix `q`.
///
/// Each index is first modelled as the pair `(V_i, V_(i))`; the shared frame
/// is the one built from index 1, and every other index is re-expressed in it
/// by reading off the degree-0 and degree-1 coefficients of `τ V_i τ*`.
pub fn extract_tuple(ops: &[LazyOperator], q: &QMatrix, cap: usize, tol: f64) -> Result<TupleModel> {
    let d = ops.len();
    if d < 2 {
        return Err(Error::InvalidArgument("tuple extraction needs at least two operators".into()));
    }
    q.validate()?;
    if q.dim() != d {
        return Err(Error::InconsistentQ(format!("phase matrix has size {} for {d} operators", q.dim())));
    }
    let w = OpWindow::new(ops.to_vec(), cap, DEFAULT_RANK_TOL)?;
    for (i, m) in w.dense.iter().enumerate() {
        let t = TruncatedMatrix::new(TruncationWindow::new(cap, ops[i].band())?, w.basis.clone(), m.clone())?;
        wold::check_isometry(&t, wold::ISOMETRY_TOL)?;
    }
    let mut checks = Vec::new();
    for i in 0..d {
        for j in (i + 1)..d {
            let cmp = q_relation(&ops[i], &ops[j], q.get(i, j), cap, tol)?;
            if !cmp.passed() {
                return Err(Error::InconsistentQ(format!(
                    "V{}V{} ≠ q({},{})V{}V{} (deviation {:.3e})",
                    i + 1,
                    j + 1,
                    i + 1,
                    j + 1,
                    j + 1,
                    i + 1,
                    cmp.deviation
                )));
            }
            checks.push(CheckRecord::from_comparison(format!("relation-{}-{}", i + 1, j + 1), &cmp));
        }
    }
    let ku = wold::ku_projection(&w.product_dense, cap + 2, tol)?;
    let kb = ku.basis.clone();
    let good = bcl::good_fiber(&w);
    let f: usize = w.defect_bases.iter().map(|b| b.ncols()).sum();
    let fiber_degrees: Vec<u32> = w
        .defect_bases
        .iter()
        .flat_map(|b| b.column_iter().map(|v| w.vector_degree(&v.into_owned()).unwrap_or(0)).collect::<Vec<_>>())
        .collect();
    let all: Vec<usize> = (0..w.dim()).collect();
    let mut frame_g2 = None;
    for i in 0..d {
        let label = i + 1;
        checks.push(CheckRecord::from_comparison(
            format!("index-{label}-commutes"),
            &index_relation(ops, q, i, cap, tol)?,
        ));
        let (g2, g1) = column_maps(&w, i)?;
        let u = linalg::procrustes(&g2, &g1);
        checks.push(CheckRecord::residual(
            format!("index-{label}-assembly"),
            linalg::max_column_deviation(&(&u * &g2), &g1, &all),
            tol.max(1e-8),
        ));
        let delta = delta_map(&w, i)?;
        checks.push(CheckRecord::residual(
            format!("delta-{label}-isometric"),
            delta.gram_residual.max(delta.isometry_residual),
            tol,
        ));
        checks.push(CheckRecord::residual(format!("delta-{label}-onto"), delta.onto_residual, tol));
        let paired = ops[i].compose(&v_complement(ops, i)?)?;
        let ki = wold::ku_projection(&densify_on(&paired, w.basis.clone())?, cap + 2, tol)?;
        checks.push(CheckRecord::residual(
            format!("ku-{label}-coincides"),
            linalg::max_abs(&(&ki.projection - &ku.projection)),
            tol,
        ));
        if i == 0 {
            frame_g2 = Some(g2);
        }
    }
    let frame_g2 = frame_g2.expect("d ≥ 2");
    let tau = tau_matrix(&frame_g2, &w.product_adjoint, cap, &ku);
    let h = tau.adjoint().columns(0, f).into_owned();
    let back = linalg::smul(&tau, &h);
    let coverage = good
        .iter()
        .map(|&xi| {
            let mut col = back.column(xi).into_owned();
            col[xi] -= c(1.0, 0.0);
            col.norm()
        })
        .fold(0.0, f64::max);
    checks.push(CheckRecord::residual("frame-covers-fiber", coverage, tol.max(1e-8)));
    let safe = w.safe_columns();
    let mut indices = Vec::with_capacity(d);
    for i in 0..d {
        let label = i + 1;
        let qi = qi_product(q, i)?;
        let lhs = linalg::smul(&tau, &w.dense[i]);
        let image = linalg::smul(&lhs, &h);
        let lower = image.rows(0, f).into_owned();
        let upper = if cap >= 2 { image.rows(f, f).into_owned() } else { CMat::zeros(f, f) };
        let wk = kb.adjoint() * &w.dense[i] * &kb;
        let (lg, ug) = (lower.select_columns(good.iter()), upper.select_columns(good.iter()));
        let id = CMat::identity(good.len(), good.len());
        let shape = linalg::max_abs(&(lg.adjoint() * &ug)).max(linalg::max_abs(
            &(lg.adjoint() * &lg + ug.adjoint() * &ug - id),
        ));
        checks.push(CheckRecord::residual(format!("index-{label}-pair-shape"), shape, tol.max(1e-8)));
        let rhs = apply_index_model(qi, &lower, &upper, &wk, cap, &tau);
        checks.push(CheckRecord::residual(
            format!("model-{label}-intertwines"),
            linalg::max_column_deviation(&lhs, &rhs, &safe),
            1e-8,
        ));
        indices.push(IndexModel {
            q: qi,
            lower: SMatrix::from_dmatrix(&lower),
            upper: SMatrix::from_dmatrix(&upper),
            w: SMatrix::from_dmatrix(&wk),
        });
    }
    Ok(TupleModel {
        q: q.clone(),
        fiber_dim: f,
        ku_dim: kb.ncols(),
        good_fiber: good,
        fiber_degrees,
        indices,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::equal_on_window;

    fn rq_mz(q: Phase) -> Vec<LazyOperator> {
        let sig = SpaceSignature::hardy(1);
        vec![
            LazyOperator::atom(sig, Atom::Rot(q)).unwrap(),
            LazyOperator::atom(sig, Atom::Shift(0)).unwrap(),
        ]
    }

    fn rotated_shifts(q: Phase, d: usize) -> Vec<LazyOperator> {
        let sig = SpaceSignature::hardy(d);
        (0..d).map(|j| LazyOperator::word(sig, vec![Atom::Rot(q.pow((d - 1 - j) as i64)), Atom::Shift(j)]).unwrap()).collect()
    }

    #[test]
    fn three_rotated_shifts_share_one_frame() {
        let q = Phase::rational(1, 8);
        let ops = rotated_shifts(q, 3);
        let model = extract_tuple(&ops, &QMatrix::power_convention(q, 3), 8, 1e-10).unwrap();
        for check in &model.checks {
            assert!(check.passed(), "{check:?}");
        }
        // Defects of the three shifts: monomials free of one variable.
        assert_eq!(model.fiber_dim, 3 * 64);
        assert_eq!(model.ku_dim, 0);
        let ext = extend_to_unitaries(&model, BilateralWindow::new(8, 8)).unwrap();
        assert!(ext.is_exact());
        for check in &ext.checks {
            assert!(check.passed() && check.residual == 0.0, "{check:?}");
        }
    }

    #[test]
    fn complement_needs_two_operators() {
        let ops = rq_mz(Phase::rational(1, 8));
        assert!(v_complement(&ops[..1], 0).is_err());
        assert!(v_complement(&ops, 1).is_ok());
    }

    #[test]
    fn pair_extraction_agrees_with_the_pair_model() {
        let q = Phase::rational(1, 8);
        let ops = rq_mz(q);
        let model = extract_tuple(&ops, &QMatrix::pair(q), 6, 1e-10).unwrap();
        for check in &model.checks {
            assert!(check.passed(), "{check:?}");
        }
        assert_eq!(model.fiber_dim, 1);
        let snapped = model.snapped(1e-12);
        assert!(snapped.is_exact());
        // V1 = R_q is unitary, so its upper block vanishes.
        assert!(snapped.indices[0].upper.get(0, 0).is_zero());
    }

    #[test]
    fn pair_model_operators_reproduce_build_model() {
        let q = Phase::rational(1, 8);
        let (p, u) = (SMatrix::diagonal(vec![Scalar::one(), Scalar::zero()]), {
            let z = Scalar::zero();
            SMatrix::from_rows(vec![vec![z.clone(), q.to_scalar()], vec![Scalar::one(), z]]).unwrap()
        });
        let t = BCLTuple::new(q, p, u, SMatrix::zeros(0, 0), SMatrix::zeros(0, 0), Flavor::First).unwrap();
        let (v1, v2) = bcl::build_model(&t).unwrap();
        let model = TupleModel::from_pair(&t).unwrap();
        let window = TruncationWindow::new(6, 1).unwrap();
        for (i, v) in [v1, v2].iter().enumerate() {
            let cmp = equal_on_window(&model.model_operator(i).unwrap(), v, &window, 0.0).unwrap();
            assert!(cmp.passed() && cmp.exact, "index {i}: {cmp:?}");
        }
    }
}
