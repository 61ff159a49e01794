//! Model tuples `(F, K_u; P, U, W₁, W₂)`: building the model pair, extracting
//! a tuple from a q-commuting pair, the model map `τ`, and equivalence of tuples.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cyclo::Scalar;
use crate::error::{Error, Result};
use crate::graded::{GradedIndex, TruncationWindow};
use crate::linalg::{self, c, CMat};
use crate::opalg::{
    compare_lazy_on, densify, equal_on_window, Atom, BasisKey, Comparison, LazyOperator, SVec, SpaceSignature, Term,
    TruncatedMatrix, WindowBasis,
};
use crate::phase::Phase;
use crate::report::CheckRecord;
use crate::smatrix::SMatrix;
use crate::wold::{self, OpWindow, DEFAULT_RANK_TOL, DEFAULT_TOL};

/// Which of the two model shapes a tuple parametrises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "BCL1")]
    First,
    #[serde(rename = "BCL2")]
    Second,
}

/// Model data: a projection `P` and unitary `U` on `F`, and a q-commuting
/// pair of unitaries on `K_u`.
#[derive(Clone, Debug, PartialEq)]
pub struct BCLTuple {
    pub q: Phase,
    pub p: SMatrix,
    pub u: SMatrix,
    pub w1: SMatrix,
    pub w2: SMatrix,
    pub flavor: Flavor,
}

#[derive(Serialize, Deserialize)]
struct BclTupleJson {
    q: Phase,
    #[serde(rename = "fiberDim")]
    fiber_dim: usize,
    #[serde(rename = "kuDim")]
    ku_dim: usize,
    #[serde(rename = "P")]
    p: SMatrix,
    #[serde(rename = "U")]
    u: SMatrix,
    #[serde(rename = "W1")]
    w1: SMatrix,
    #[serde(rename = "W2")]
    w2: SMatrix,
    flavor: Flavor,
}

impl Serialize for BCLTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BclTupleJson {
            q: self.q,
            fiber_dim: self.fiber_dim(),
            ku_dim: self.ku_dim(),
            p: self.p.clone(),
            u: self.u.clone(),
            w1: self.w1.clone(),
            w2: self.w2.clone(),
            flavor: self.flavor,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BCLTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = BclTupleJson::deserialize(d)?;
        let empty = |m: SMatrix| if m.rows() == 0 { SMatrix::zeros(0, 0) } else { m };
        let t = BCLTuple { q: j.q, p: empty(j.p), u: empty(j.u), w1: empty(j.w1), w2: empty(j.w2), flavor: j.flavor };
        if t.fiber_dim() != j.fiber_dim || t.ku_dim() != j.ku_dim {
            return Err(serde::de::Error::custom("declared dimensions do not match the matrices"));
        }
        Ok(t)
    }
}

impl BCLTuple {
    pub fn new(q: Phase, p: SMatrix, u: SMatrix, w1: SMatrix, w2: SMatrix, flavor: Flavor) -> Result<Self> {
        let t = BCLTuple { q, p, u, w1, w2, flavor };
        t.validate(1e-12)?;
        Ok(t)
    }

    pub fn fiber_dim(&self) -> usize {
        self.p.rows()
    }

    pub fn ku_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn is_exact(&self) -> bool {
        self.p.is_exact() && self.u.is_exact() && self.w1.is_exact() && self.w2.is_exact() && self.q.is_rational()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidTuple(s));
        let (f, k) = (self.fiber_dim(), self.ku_dim());
        if !self.p.is_square() || self.u.rows() != f || self.u.cols() != f {
            return bad(format!("P and U must be {f}x{f}"));
        }
        if !self.w1.is_square() || self.w2.rows() != k || self.w2.cols() != k {
            return bad(format!("W1 and W2 must be {k}x{k}"));
        }
        if self.p.mul(&self.p).deviation(&self.p) > tol || self.p.adjoint().deviation(&self.p) > tol {
            return bad("P is not an orthogonal projection".into());
        }
        for (name, m) in [("U", &self.u), ("W1", &self.w1), ("W2", &self.w2)] {
            let id = SMatrix::identity(m.rows());
            if m.adjoint().mul(m).deviation(&id) > tol || m.mul(&m.adjoint()).deviation(&id) > tol {
                return bad(format!("{name} is not unitary"));
            }
        }
        let q = self.q.to_scalar();
        if self.w1.mul(&self.w2).deviation(&self.w2.mul(&self.w1).scale(&q)) > tol {
            return bad("W1 W2 != q W2 W1".into());
        }
        if let Some(r) = self.q.order() {
            if k > 0 && k % r as usize != 0 {
                return bad(format!("q has order {r}, which does not divide dim K_u = {k}"));
            }
        }
        Ok(())
    }

    pub fn signature(&self) -> SpaceSignature {
        SpaceSignature::new(1, self.fiber_dim(), self.ku_dim())
    }
}

/// Clock and shift on `ℂᵐ` with `C S = q S C`; needs `q^m = 1`.
pub fn weyl_pair(q: Phase, m: usize) -> Result<(SMatrix, SMatrix)> {
    let (num, order) = match q {
        Phase::Rational { num, order } => (num, order),
        Phase::Angle(_) => return Err(Error::IrrationalPhase),
    };
    if m == 0 || !m.is_multiple_of(order as usize) {
        return Err(Error::InvalidArgument(format!("q of order {order} admits no q-commuting unitaries on C^{m}")));
    }
    // q = ζ_m^e with e = num·m/order.
    let e = num * (m as i64 / order as i64);
    let clock = SMatrix::diagonal((0..m).map(|k| Scalar::root(e * k as i64, m as u32)).collect());
    let mut shift = SMatrix::zeros(m, m);
    for k in 0..m {
        shift.set((k + 1) % m, k, Scalar::one());
    }
    Ok((clock, shift))
}

/// The model pair of a tuple, as exact lazy operators on `(H² ⊗ F) ⊕ K_u`.
pub fn build_model(t: &BCLTuple) -> Result<(LazyOperator, LazyOperator)> {
    t.validate(1e-12)?;
    let sig = t.signature();
    let f = t.fiber_dim();
    let perp = SMatrix::identity(f).sub(&t.p);
    let (q, qb) = (t.q, t.q.conj());
    let fib = |m: SMatrix| Atom::Fiber(Arc::new(m));
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    if f > 0 {
        let u = &t.u;
        let ua = u.adjoint();
        // First model:  V1 = R_q ⊗ P⊥U + M_z R_q ⊗ PU,  V2 = R_q̄ ⊗ U*P + R_q̄ M_z ⊗ U*P⊥.
        // Second model: V1 = R_q ⊗ U*P⊥ + M_z R_q ⊗ U*P, V2 = R_q̄ ⊗ PU + R_q̄ M_z ⊗ P⊥U.
        let (a1, b1, a2, b2) = match t.flavor {
            Flavor::First => (perp.mul(u), t.p.mul(u), ua.mul(&t.p), ua.mul(&perp)),
            Flavor::Second => (ua.mul(&perp), ua.mul(&t.p), t.p.mul(u), perp.mul(u)),
        };
        t1.push(Term::new(Scalar::one(), vec![Atom::Rot(q), fib(a1)]));
        t1.push(Term::new(Scalar::one(), vec![Atom::Shift(0), Atom::Rot(q), fib(b1)]));
        t2.push(Term::new(Scalar::one(), vec![Atom::Rot(qb), fib(a2)]));
        t2.push(Term::new(Scalar::one(), vec![Atom::Rot(qb), Atom::Shift(0), fib(b2)]));
    }
    if t.ku_dim() > 0 {
        t1.push(Term::new(Scalar::one(), vec![Atom::Ku(Arc::new(t.w1.clone()))]));
        t2.push(Term::new(Scalar::one(), vec![Atom::Ku(Arc::new(t.w2.clone()))]));
    }
    Ok((LazyOperator::from_terms(sig, t1)?, LazyOperator::from_terms(sig, t2)?))
}

/// `(P, U) ↦ (P, U*)`: the second-shape tuple of the same pair.
pub fn bcl1_to_bcl2(t: &BCLTuple) -> BCLTuple {
    BCLTuple { u: t.u.adjoint(), flavor: Flavor::Second, ..t.clone() }
}

/// `(P, U) ↦ (U*PU, U*)`, switching the shape. Its model is identical to
/// the input's, and applying it twice returns the input.
pub fn remark_map(t: &BCLTuple) -> BCLTuple {
    let ua = t.u.adjoint();
    let flavor = match t.flavor {
        Flavor::First => Flavor::Second,
        Flavor::Second => Flavor::First,
    };
    BCLTuple { p: ua.mul(&t.p).mul(&t.u), u: ua, flavor, ..t.clone() }
}

/// `‖PUP⊥‖` for the first shape and `‖P⊥UP‖` for the second.
pub fn doubly_q_obstruction(t: &BCLTuple) -> f64 {
    let all: Vec<usize> = (0..t.fiber_dim()).collect();
    doubly_q_obstruction_on(t, &all)
}

/// The obstruction restricted to the given fiber coordinates (columns).
pub fn doubly_q_obstruction_on(t: &BCLTuple, cols: &[usize]) -> f64 {
    let perp = SMatrix::identity(t.fiber_dim()).sub(&t.p);
    let m = match t.flavor {
        Flavor::First => t.p.mul(&t.u).mul(&perp),
        Flavor::Second => perp.mul(&t.u).mul(&t.p),
    };
    linalg::frobenius_on(&m.to_dmatrix(), &CMat::zeros(m.rows(), m.cols()), cols)
}

/// Phase `q` with `V₁V₂ = qV₂V₁` on the window, supplied or inferred.
#[derive(Clone, Debug)]
pub struct PhaseFit {
    pub q: Phase,
    pub inferred: bool,
    pub residual: f64,
}

/// Checks a supplied `q`, or finds the unimodular least-squares `q` and
/// snaps it to a rational rotation of order at most 64 when within 1e-9.
pub fn fit_q(v1: &LazyOperator, v2: &LazyOperator, cap: usize, supplied: Option<Phase>, tol: f64) -> Result<PhaseFit> {
    let v12 = v1.compose(v2)?;
    let v21 = v2.compose(v1)?;
    let window = TruncationWindow::new(cap, v12.band())?;
    if let Some(q) = supplied {
        let cmp = equal_on_window(&v12, &v21.scale(q.to_scalar()), &window, tol)?;
        if !cmp.passed() {
            return Err(Error::NotQCommutative { residual: cmp.deviation });
        }
        return Ok(PhaseFit { q, inferred: false, residual: cmp.deviation });
    }
    let a = densify(&v12, cap)?;
    let b = densify(&v21, cap)?;
    let cols = a.safe_columns();
    let mut num = c(0.0, 0.0);
    let mut den = 0.0;
    for &j in &cols {
        num += b.matrix.column(j).dotc(&a.matrix.column(j));
        den += b.matrix.column(j).norm_squared();
    }
    if den == 0.0 || num.norm() == 0.0 {
        return Err(Error::NoUnimodularQ { residual: f64::INFINITY });
    }
    let qv = num / num.norm();
    let residual = linalg::max_column_deviation(&a.matrix, &(&b.matrix * qv), &cols);
    if residual > tol {
        return Err(Error::NoUnimodularQ { residual });
    }
    let theta = qv.arg().rem_euclid(TAU);
    let q = (1..=64u32)
        .find_map(|r| {
            let p = (theta * r as f64 / TAU).round() as i64;
            let cand = Phase::rational(p, r);
            ((cand.value() - qv).norm() < 1e-9).then_some(cand)
        })
        .unwrap_or(Phase::angle(theta));
    let cmp = equal_on_window(&v12, &v21.scale(q.to_scalar()), &window, tol)?;
    Ok(PhaseFit { q, inferred: true, residual: cmp.deviation })
}

/// Stacked column maps `(G₂, G₁)` for index `i` of a window tuple, in the
/// coordinates of the defect bases `D_{V₁*} ⊕ ⋯ ⊕ D_{V_d*}`.
///
/// Slot `i` of `G₂` is `D_{V_i*}h` and slot `j ≠ i` is
/// `D_{V_j*}(∏_{k>j, k≠i} V_k*)V_i* h`; `G₁` has `D_{V_i*}V_{(i)}*h` in slot
/// `i` and `D_{V_j*}(∏_{k>j, k≠i} V_k*)h` elsewhere.
pub fn column_maps(w: &OpWindow, i: usize) -> Result<(CMat, CMat)> {
    let d = w.len();
    if i >= d {
        return Err(Error::IndexOutOfRange { index: i, dim: d });
    }
    let dims: Vec<usize> = w.defect_bases.iter().map(|b| b.ncols()).collect();
    let total: usize = dims.iter().sum();
    let n = w.dim();
    let comp = complement(&w.ops, i)?;
    let comp_adj = w.densify(&comp.adjoint())?;
    let mut g2 = CMat::zeros(total, n);
    let mut g1 = CMat::zeros(total, n);
    let mut row = 0;
    for j in 0..d {
        let bj = linalg::smul(&w.defect_bases[j].adjoint(), &w.defects[j]);
        let (s2, s1) = if j == i {
            (bj.clone(), linalg::smul(&bj, &comp_adj))
        } else {
            let mut tail = CMat::identity(n, n);
            for k in (j + 1)..d {
                if k != i {
                    tail = linalg::smul(&tail, &w.adjoints[k]);
                }
            }
            let s1 = linalg::smul(&bj, &tail);
            (linalg::smul(&s1, &w.adjoints[i]), s1)
        };
        g2.view_mut((row, 0), (dims[j], n)).copy_from(&s2);
        g1.view_mut((row, 0), (dims[j], n)).copy_from(&s1);
        row += dims[j];
    }
    Ok((g2, g1))
}

/// Ordered product of all operators except index `i`.
pub fn complement(ops: &[LazyOperator], i: usize) -> Result<LazyOperator> {
    if i >= ops.len() {
        return Err(Error::IndexOutOfRange { index: i, dim: ops.len() });
    }
    let sig = ops[0].signature();
    let rest: Vec<LazyOperator> = ops.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, o)| o.clone()).collect();
    LazyOperator::product(sig, &rest)
}

/// Dense `τh = Σₙ zⁿ G₂ Z^n h ⊕ K*P_ku h`, with `Z` the compressed adjoint of the
/// shift-like product; rows are degree-major over `cap` degrees, then `K_u`.
pub fn tau_matrix(g2: &CMat, z: &CMat, cap: usize, ku: &wold::KuProjection) -> CMat {
    let f = g2.nrows();
    let n = g2.ncols();
    let k = ku.basis.ncols();
    let mut tau = CMat::zeros(cap * f + k, n);
    let mut block = g2.clone();
    for deg in 0..cap {
        tau.view_mut((deg * f, 0), (f, n)).copy_from(&block);
        block = linalg::smul(&block, z);
    }
    tau.view_mut((cap * f, 0), (k, n)).copy_from(&(ku.basis.adjoint() * &ku.projection));
    tau
}

/// Options for [`extract_bcl1`].
#[derive(Clone, Copy, Debug)]
pub struct ExtractOptions {
    pub q: Option<Phase>,
    pub tol: f64,
    pub rank_tol: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { q: None, tol: DEFAULT_TOL, rank_tol: DEFAULT_RANK_TOL }
    }
}

/// Extracted tuple together with the window data it came from.
#[derive(Clone, Debug)]
pub struct PairExtraction {
    pub tuple: BCLTuple,
    pub fit: PhaseFit,
    pub procrustes_residual: f64,
    /// Fiber coordinates of low enough degree that `U` is pinned down on them
    /// by window vectors; all of them when the fiber is finite.
    pub good_fiber: Vec<usize>,
    pub window: OpWindow,
    pub g2: CMat,
    pub g1: CMat,
    pub ku: wold::KuProjection,
}

impl PairExtraction {
    pub fn defect_dims(&self) -> (usize, usize) {
        (self.window.defect_bases[0].ncols(), self.window.defect_bases[1].ncols())
    }

    pub fn tau(&self) -> Result<CMat> {
        let z = self.window.product_adjoint.clone();
        Ok(tau_matrix(&self.g2, &z, self.window.cap(), &self.ku))
    }
}

pub fn extract_bcl1(v1: &LazyOperator, v2: &LazyOperator, cap: usize, opts: ExtractOptions) -> Result<PairExtraction> {
    let w = OpWindow::new(vec![v1.clone(), v2.clone()], cap, opts.rank_tol)?;
    extract_on(w, opts)
}

/// Extraction on a prepared (possibly restricted) window.
pub fn extract_on(w: OpWindow, opts: ExtractOptions) -> Result<PairExtraction> {
    if w.len() != 2 {
        return Err(Error::InvalidArgument("pair extraction needs two operators".into()));
    }
    for (i, m) in w.dense.iter().enumerate() {
        let band = w.ops[i].band();
        let t = TruncatedMatrix::new(TruncationWindow::new(w.cap(), band)?, w.basis.clone(), m.clone())?;
        wold::check_isometry(&t, wold::ISOMETRY_TOL)?;
    }
    let fit = fit_q_on(&w, opts.q, opts.tol)?;
    let (g2, g1) = column_maps(&w, 0)?;
    let u = linalg::procrustes(&g2, &g1);
    let all: Vec<usize> = (0..w.dim()).collect();
    let procrustes_residual = linalg::max_column_deviation(&(&u * &g2), &g1, &all);
    if procrustes_residual > opts.tol.max(1e-8) {
        return Err(Error::ExtractionFailed(format!("U assembly residual {procrustes_residual:.3e}")));
    }
    let ku = wold::ku_projection(&w.product_dense, w.cap() + 2, opts.tol)?;
    let kb = &ku.basis;
    let w1 = kb.adjoint() * &w.dense[0] * kb;
    let w2 = kb.adjoint() * &w.dense[1] * kb;
    let (m1, m2) = (w.defect_bases[0].ncols(), w.defect_bases[1].ncols());
    let mut p = CMat::zeros(m1 + m2, m1 + m2);
    for i in 0..m1 {
        p[(i, i)] = c(1.0, 0.0);
    }
    let tuple = BCLTuple {
        q: fit.q,
        p: SMatrix::from_dmatrix(&p),
        u: SMatrix::from_dmatrix(&u),
        w1: SMatrix::from_dmatrix(&w1),
        w2: SMatrix::from_dmatrix(&w2),
        flavor: Flavor::First,
    };
    tuple.validate(1e-8)?;
    let good_fiber = good_fiber(&w);
    Ok(PairExtraction { tuple, fit, procrustes_residual, good_fiber, window: w, g2, g1, ku })
}

/// Indices of fiber basis vectors (over all defect summands) whose degree
/// leaves room for the product's band below the cap.
pub fn good_fiber(w: &OpWindow) -> Vec<usize> {
    let band = w.product.band();
    w.defect_bases
        .iter()
        .flat_map(|b| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .enumerate()
        .filter(|(_, v)| w.vector_degree(v).is_none_or(|d| d as usize + band < w.cap()))
        .map(|(i, _)| i)
        .collect()
}

fn fit_q_on(w: &OpWindow, supplied: Option<Phase>, tol: f64) -> Result<PhaseFit> {
    let basis = w.basis.clone();
    if basis.dim() == WindowBasis::new(basis.signature(), w.cap()).dim() {
        return fit_q(&w.ops[0], &w.ops[1], w.cap(), supplied, tol);
    }
    // Restricted windows: compare on the basis vectors actually present.
    let v12 = w.ops[0].compose(&w.ops[1])?;
    let v21 = w.ops[1].compose(&w.ops[0])?;
    let keys: Vec<BasisKey> = w.safe_columns().into_iter().map(|j| basis.keys()[j].clone()).collect();
    let q = match supplied {
        Some(q) => q,
        None => return Err(Error::InvalidArgument("restricted windows need an explicit q".into())),
    };
    let cmp = compare_lazy_on(&v12, &v21.scale(q.to_scalar()), &keys, tol);
    if !cmp.passed() {
        return Err(Error::NotQCommutative { residual: cmp.deviation });
    }
    Ok(PhaseFit { q, inferred: false, residual: cmp.deviation })
}

/// Verifies `τ` against the model built from the extracted tuple.
pub fn verify_tau(ex: &PairExtraction, tol: f64) -> Result<(CMat, Vec<CheckRecord>)> {
    let w = &ex.window;
    let cap = w.cap();
    let tau = ex.tau()?;
    let (m1, m2) = build_model(&ex.tuple)?;
    let d1 = densify(&m1, cap)?.matrix;
    let d2 = densify(&m2, cap)?.matrix;
    let f = ex.tuple.fiber_dim();
    let kb = &ex.ku.basis;
    let wprod = kb.adjoint() * &w.product_dense.matrix * kb;
    let shift = wold::shift_plus_unitary(cap, f, &wprod);
    let safe = w.safe_columns();
    let n = w.dim();
    let mut checks = Vec::new();
    let iso = linalg::max_column_deviation(&(tau.adjoint() * &tau), &CMat::identity(n, n), &safe);
    checks.push(CheckRecord::residual("tau-isometry", iso, tol));
    let prod = linalg::max_column_deviation(&(&tau * &w.product_dense.matrix), &(&shift * &tau), &safe);
    checks.push(CheckRecord::residual("tau-intertwines-product", prod, tol));
    for (i, model) in [(0usize, &d1), (1, &d2)] {
        let r = linalg::max_column_deviation(&(&tau * &w.dense[i]), &(model * &tau), &safe);
        checks.push(CheckRecord::residual(format!("tau-intertwines-v{}", i + 1), r, tol));
    }
    Ok((tau, checks))
}

/// Basis vectors fixed exactly by `I − VV*`, as exact vectors.
pub fn coordinate_defect_vectors(op: &LazyOperator, keys: &[BasisKey]) -> Result<Vec<SVec>> {
    let d = LazyOperator::identity(op.signature()).sub(&op.compose(&op.adjoint())?)?;
    let mut out = Vec::new();
    for k in keys {
        let e = SVec::basis(k.clone());
        if d.apply(&e)?.sub(&e).is_zero() {
            out.push(e);
        }
    }
    Ok(out)
}

/// Exact degree-`n` coefficient of `τh` against given exact defect vectors:
/// `(⟨D_{V₁*}V*ⁿh, e⟩)_{e ∈ first} ⊕ (⟨D_{V₂*}V₁*V*ⁿh, e⟩)_{e ∈ second}`.
pub fn tau_coefficient_exact(
    v1: &LazyOperator,
    v2: &LazyOperator,
    first: &[SVec],
    second: &[SVec],
    n: usize,
    h: &SVec,
) -> Result<Vec<Scalar>> {
    let sig = v1.signature();
    let v = v1.compose(v2)?;
    let va = v.adjoint();
    let mut g = h.clone();
    for _ in 0..n {
        g = va.apply(&g)?;
    }
    let id = LazyOperator::identity(sig);
    let d1 = id.sub(&v1.compose(&v1.adjoint())?)?;
    let d2 = id.sub(&v2.compose(&v2.adjoint())?)?;
    let top = d1.apply(&g)?;
    let bottom = d2.apply(&v1.adjoint().apply(&g)?)?;
    let mut out: Vec<Scalar> = first.iter().map(|e| top.inner(e)).collect();
    out.extend(second.iter().map(|e| bottom.inner(e)));
    Ok(out)
}

/// Unitary intertwiners between two tuples.
#[derive(Clone, Debug)]
pub struct Equivalence {
    pub omega: CMat,
    pub omega_u: CMat,
    pub residual: f64,
}

/// Searches for unitaries `ω`, `ω_u` with `ω(P, U) = (P', U')ω` and
/// `ω_u(W₁, W₂) = (W₁', W₂')ω_u`. `None` means no unitary intertwiner exists
/// (within tolerance).
pub fn tuples_equivalent(t: &BCLTuple, t2: &BCLTuple, tol: f64) -> Result<Option<Equivalence>> {
    if t.q != t2.q || t.flavor != t2.flavor || t.fiber_dim() != t2.fiber_dim() || t.ku_dim() != t2.ku_dim() {
        return Ok(None);
    }
    let fiber = [(t.p.to_dmatrix(), t2.p.to_dmatrix()), (t.u.to_dmatrix(), t2.u.to_dmatrix())];
    let ku = [(t.w1.to_dmatrix(), t2.w1.to_dmatrix()), (t.w2.to_dmatrix(), t2.w2.to_dmatrix())];
    let Some(omega) = unitary_intertwiner(&fiber, tol) else { return Ok(None) };
    let Some(omega_u) = unitary_intertwiner(&ku, tol) else { return Ok(None) };
    let residual = intertwining_residual(&omega, &fiber).max(intertwining_residual(&omega_u, &ku));
    Ok(Some(Equivalence { omega, omega_u, residual }))
}

fn intertwining_residual(x: &CMat, pairs: &[(CMat, CMat)]) -> f64 {
    pairs.iter().map(|(a, b)| (x * a - b * x).norm()).fold(linalg::unitarity_residual(x), f64::max)
}

/// A unitary `X` with `X A = A' X` for every pair (and the adjoint pairs), if any.
pub fn unitary_intertwiner(pairs: &[(CMat, CMat)], tol: f64) -> Option<CMat> {
    let n = pairs.first().map_or(0, |(a, _)| a.nrows());
    if n == 0 {
        return Some(CMat::zeros(0, 0));
    }
    let id = CMat::identity(n, n);
    let mut blocks = Vec::new();
    for (a, b) in pairs {
        for (a, b) in [(a.clone(), b.clone()), (a.adjoint(), b.adjoint())] {
            // vec(XA − BX) = (Aᵀ ⊗ I − I ⊗ B) vec X in column-major order.
            blocks.push(linalg::kron(&a.transpose(), &id) - linalg::kron(&id, &b));
        }
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut sys = CMat::zeros(rows, n * n);
    let mut r = 0;
    for b in &blocks {
        sys.view_mut((r, 0), (b.nrows(), n * n)).copy_from(b);
        r += b.nrows();
    }
    let null = linalg::nullspace(&sys, 1e-8);
    if null.ncols() == 0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x = CMat::zeros(n, n);
    for k in 0..null.ncols() {
        let w = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        for idx in 0..n * n {
            x[(idx % n, idx / n)] += w * null[(idx, k)];
        }
    }
    let omega = linalg::normalize_global_phase(&linalg::polar_unitary(&x), 1e-8);
    (intertwining_residual(&omega, pairs) <= tol).then_some(omega)
}

/// Checks that `diag(I ⊗ ω, ω_u)` intertwines the two models exactly on the lazy window.
pub fn models_intertwined(t: &BCLTuple, t2: &BCLTuple, eq: &Equivalence, cap: usize, tol: f64) -> Result<Comparison> {
    let (a1, a2) = build_model(t)?;
    let (b1, b2) = build_model(t2)?;
    let sig = t.signature();
    let mut terms = Vec::new();
    if t.fiber_dim() > 0 {
        terms.push(Term::new(Scalar::one(), vec![Atom::Fiber(Arc::new(SMatrix::from_dmatrix(&eq.omega)))]));
    }
    if t.ku_dim() > 0 {
        terms.push(Term::new(Scalar::one(), vec![Atom::Ku(Arc::new(SMatrix::from_dmatrix(&eq.omega_u)))]));
    }
    let omega = LazyOperator::from_terms(sig, terms)?;
    let window = TruncationWindow::new(cap, 1)?;
    let c1 = equal_on_window(&omega.compose(&a1)?, &b1.compose(&omega)?, &window, tol)?;
    let c2 = equal_on_window(&omega.compose(&a2)?, &b2.compose(&omega)?, &window, tol)?;
    Ok(if c1.deviation >= c2.deviation { c1 } else { c2 })
}

/// Dimensions of the solution spaces of the off-diagonal intertwining
/// equations `X W = (M_z ⊗ I) X` and `X (M_z ⊗ I) = W' X` on a window of
/// cap `cap`, where `W`, `W'` are the unitary parts of the products. Both are
/// zero when the shift and unitary parts cannot be mixed.
pub fn off_diagonal_rigidity(t: &BCLTuple, t2: &BCLTuple, cap: usize) -> (usize, usize) {
    let w = t.w1.mul(&t.w2).to_dmatrix();
    let w2 = t2.w1.mul(&t2.w2).to_dmatrix();
    let empty = CMat::zeros(0, 0);
    let s = wold::shift_plus_unitary(cap, t.fiber_dim(), &empty);
    let s2 = wold::shift_plus_unitary(cap, t2.fiber_dim(), &empty);
    let solve = |a: &CMat, b: &CMat| -> usize {
        // X a = b X with X of shape b.rows × a.rows.
        if a.nrows() == 0 || b.nrows() == 0 {
            return 0;
        }
        let ia = CMat::identity(b.nrows(), b.nrows());
        let ib = CMat::identity(a.nrows(), a.nrows());
        let sys = linalg::kron(&a.transpose(), &ia) - linalg::kron(&ib, b);
        linalg::nullspace(&sys, 1e-10).ncols()
    };
    (solve(&w, &s2), solve(&s, &w2))
}

/// Monomial basis vector `zⁿ ⊗ e_f` of a one-variable model space.
pub fn model_basis_vector(n: u32, f: usize) -> SVec {
    SVec::basis(BasisKey::Hardy(GradedIndex(vec![n]), f))
}
