//! The unitary `𝔯_q = Σ qⁿVⁿ(I − VV*)V*ⁿ` of a shift product `V = V₁V₂`,
//! passage between commuting and q-commuting pairs, tests for double
//! q-commutativity, and the normal form of doubly q-commuting shift pairs.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::bcl::{self, BCLTuple, Flavor};
use crate::cyclo::Scalar;
use crate::error::{Error, Result};
use crate::graded::{monomials, GradedIndex, TruncationWindow};
use crate::linalg::{self, CMat};
use crate::opalg::{densify, equal_on_window, lazy_test_basis, Atom, BasisKey, Comparison, LazyOperator, SVec, Term};
use crate::phase::Phase;
use crate::report::CheckRecord;
use crate::smatrix::SMatrix;

/// Checks that `op` maps every degree-`n` monomial of the window into degree
/// `n + k` for one fixed `k ≥ 1` and kills the unitary summand; returns `k`.
pub fn uniform_degree_step(op: &LazyOperator, cap: usize) -> Result<usize> {
    let sig = op.signature();
    let window = TruncationWindow::new(cap, 0)?;
    let mut step = None;
    for key in lazy_test_basis(&sig, &window) {
        let img = op.apply(&SVec::basis(key.clone()))?;
        let deg = match key.degree() {
            Some(d) => d as usize,
            None => {
                if img.is_zero() {
                    continue;
                }
                return Err(Error::Hypothesis(format!("operator acts on the unitary summand ({})", key.label(&sig))));
            }
        };
        if img.is_zero() {
            return Err(Error::Hypothesis(format!("operator annihilates {}", key.label(&sig))));
        }
        for (k, _) in img.entries() {
            let d = k.degree().map(|d| d as usize);
            match d {
                Some(d) if d > deg && step.is_none_or(|s| s == d - deg) => step = Some(d - deg),
                _ => {
                    return Err(Error::Hypothesis(format!(
                        "operator does not raise degree uniformly at {}",
                        key.label(&sig)
                    )))
                }
            }
        }
    }
    step.ok_or_else(|| Error::Hypothesis("empty window".into()))
}

/// `𝔯_q` of the product `V₁V₂`, which must be a graded shift.
pub fn rq_operator(v1: &LazyOperator, v2: &LazyOperator, q: Phase, cap: usize) -> Result<LazyOperator> {
    let v = v1.compose(v2)?;
    uniform_degree_step(&v, cap)?;
    Ok(LazyOperator::shift_series(&v, q))
}

/// `(V₁𝔯_q, 𝔯_q̄V₂)`: commuting pair to q-commuting pair.
pub fn to_q_commutative(v1: &LazyOperator, v2: &LazyOperator, q: Phase, cap: usize) -> Result<(LazyOperator, LazyOperator)> {
    let r = rq_operator(v1, v2, q, cap)?;
    let rb = rq_operator(v1, v2, q.conj(), cap)?;
    Ok((v1.compose(&r)?, rb.compose(v2)?))
}

/// `(V₁𝔯_q̄, 𝔯_qV₂)`: q-commuting pair to commuting pair.
pub fn from_q_commutative(v1: &LazyOperator, v2: &LazyOperator, q: Phase, cap: usize) -> Result<(LazyOperator, LazyOperator)> {
    to_q_commutative(v1, v2, q.conj(), cap)
}

/// `V₁V₂ = qV₂V₁` on the window.
pub fn q_relation(v1: &LazyOperator, v2: &LazyOperator, q: Phase, cap: usize, tol: f64) -> Result<Comparison> {
    let lhs = v1.compose(v2)?;
    let rhs = v2.compose(v1)?.scale(q.to_scalar());
    equal_on_window(&lhs, &rhs, &TruncationWindow::new(cap, lhs.band().max(rhs.band()))?, tol)
}

/// `V₂V₁* = qV₁*V₂` on the window.
pub fn doubly_relation(v1: &LazyOperator, v2: &LazyOperator, q: Phase, cap: usize, tol: f64) -> Result<Comparison> {
    let lhs = v2.compose(&v1.adjoint())?;
    let rhs = v1.adjoint().compose(v2)?.scale(q.to_scalar());
    equal_on_window(&lhs, &rhs, &TruncationWindow::new(cap, lhs.band().max(rhs.band()))?, tol)
}

fn unitary_on_window(r: &LazyOperator, cap: usize, tol: f64) -> Result<Comparison> {
    let id = LazyOperator::identity(r.signature());
    let w = TruncationWindow::new(cap, r.band())?;
    let a = equal_on_window(&r.adjoint().compose(r)?, &id, &w, tol)?;
    let b = equal_on_window(&r.compose(&r.adjoint())?, &id, &w, tol)?;
    Ok(if a.deviation >= b.deviation { a } else { b })
}

/// `𝔯 V₁V₂ = q V₁V₂ 𝔯` on the window.
pub fn abstract_r_relation(v1: &LazyOperator, v2: &LazyOperator, r: &LazyOperator, q: Phase, cap: usize, tol: f64) -> Result<Comparison> {
    let v = v1.compose(v2)?;
    let lhs = r.compose(&v)?;
    let rhs = v.compose(r)?.scale(q.to_scalar());
    equal_on_window(&lhs, &rhs, &TruncationWindow::new(cap, lhs.band())?, tol)
}

/// For a unitary `𝔯` with `𝔯V = qV𝔯`, checks that `(V₁, V₂)` commutes exactly
/// when `(V₁𝔯, 𝔯*V₂)` q-commutes.
pub fn abstract_passage_check(
    v1: &LazyOperator,
    v2: &LazyOperator,
    r: &LazyOperator,
    q: Phase,
    cap: usize,
    tol: f64,
) -> Result<Vec<CheckRecord>> {
    let unitary = unitary_on_window(r, cap, tol)?;
    if !unitary.passed() {
        return Err(Error::Hypothesis(format!("r is not unitary on the window (residual {:.3e})", unitary.deviation)));
    }
    let rel = abstract_r_relation(v1, v2, r, q, cap, tol)?;
    if !rel.passed() {
        return Err(Error::Hypothesis(format!("r V != q V r (residual {:.3e})", rel.deviation)));
    }
    let comm = q_relation(v1, v2, Phase::one(), cap, tol)?;
    let w1 = v1.compose(r)?;
    let w2 = r.adjoint().compose(v2)?;
    let qcomm = q_relation(&w1, &w2, q, cap, tol)?;
    Ok(vec![
        CheckRecord::from_comparison("r-unitary", &unitary),
        CheckRecord::from_comparison("r-q-intertwines-product", &rel),
        CheckRecord::boolean("commutative-iff-transformed-q-commutative", comm.passed() == qcomm.passed())
            .with_note(format!("commutative: {}, transformed q-commutative: {}", comm.passed(), qcomm.passed())),
    ])
}

/// Direction of a passage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "comm2q")]
    CommToQ,
    #[serde(rename = "q2comm")]
    QToComm,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comm2q" => Ok(Direction::CommToQ),
            "q2comm" => Ok(Direction::QToComm),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s:?}"))),
        }
    }
}

/// Residuals of one passage run.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PassageCertificate {
    pub direction: Direction,
    pub q: Phase,
    pub cap: usize,
    pub checks: Vec<CheckRecord>,
    /// Diagonal of `𝔯_q` on the window when it is diagonal, as `(monomial, [re, im])`.
    #[serde(rename = "rqDiagonal", skip_serializing_if = "Option::is_none")]
    pub rq_diagonal: Option<Vec<(String, [f64; 2])>>,
}

/// Output of [`passage`]: the transformed pair and its certificate.
#[derive(Clone, Debug)]
pub struct Passage {
    pub pair: (LazyOperator, LazyOperator),
    pub rq: LazyOperator,
    pub certificate: PassageCertificate,
}

/// Runs one direction of the passage with all of its checks: the input
/// relation, unitarity of `𝔯_q`, `𝔯_qV = qV𝔯_q`, the output relation, the
/// round trip, and preservation of the doubly property.
pub fn passage(v1: &LazyOperator, v2: &LazyOperator, q: Phase, direction: Direction, cap: usize, tol: f64) -> Result<Passage> {
    let (q_in, q_out) = match direction {
        Direction::CommToQ => (Phase::one(), q),
        Direction::QToComm => (q, Phase::one()),
    };
    let input = q_relation(v1, v2, q_in, cap, tol)?;
    if !input.passed() {
        return Err(Error::Hypothesis(format!("input pair fails V1V2 = {q_in} V2V1 (residual {:.3e})", input.deviation)));
    }
    let rq = rq_operator(v1, v2, q, cap)?;
    let (w1, w2) = match direction {
        Direction::CommToQ => to_q_commutative(v1, v2, q, cap)?,
        Direction::QToComm => from_q_commutative(v1, v2, q, cap)?,
    };
    let (b1, b2) = match direction {
        Direction::CommToQ => from_q_commutative(&w1, &w2, q, cap)?,
        Direction::QToComm => to_q_commutative(&w1, &w2, q, cap)?,
    };
    let window = TruncationWindow::new(cap, v1.band().max(v2.band()))?;
    let back1 = equal_on_window(&b1, v1, &window, tol)?;
    let back2 = equal_on_window(&b2, v2, &window, tol)?;
    let back = if back1.deviation >= back2.deviation { back1 } else { back2 };
    let doubly_in = doubly_relation(v1, v2, q_in, cap, tol)?.passed();
    let doubly_out = doubly_relation(&w1, &w2, q_out, cap, tol)?.passed();
    let checks = vec![
        CheckRecord::from_comparison("input-relation", &input),
        CheckRecord::from_comparison("rq-unitary", &unitary_on_window(&rq, cap, tol)?),
        CheckRecord::from_comparison("rq-q-intertwines-product", &abstract_r_relation(v1, v2, &rq, q, cap, tol)?),
        CheckRecord::from_comparison("output-relation", &q_relation(&w1, &w2, q_out, cap, tol)?),
        CheckRecord::from_comparison("round-trip", &back),
        CheckRecord::boolean("doubly-property-preserved", doubly_in == doubly_out)
            .with_note(format!("input doubly: {doubly_in}, output doubly: {doubly_out}")),
    ];
    let dense = densify(&rq, cap)?;
    let m = &dense.matrix;
    let off = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)].norm())
        .fold(0.0, f64::max);
    let rq_diagonal = (off <= tol).then(|| {
        (0..m.nrows()).map(|i| (dense.basis.label(i), [m[(i, i)].re, m[(i, i)].im])).collect()
    });
    let certificate = PassageCertificate { direction, q, cap, checks, rq_diagonal };
    Ok(Passage { pair: (w1, w2), rq, certificate })
}

/// Result of a double q-commutativity test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublyQVerdict {
    pub doubly: bool,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    pub route: &'static str,
}

/// What [`is_doubly_q`] is asked about.
#[derive(Clone, Copy, Debug)]
pub enum DoublyQInput<'a> {
    /// A model tuple, tested through `PUP⊥` (or `P⊥UP` for the second shape)
    /// on the listed fiber coordinates.
    Tuple(&'a BCLTuple, &'a [usize]),
    /// A pair tested directly on a window of the given cap.
    Pair(&'a LazyOperator, &'a LazyOperator, Phase, usize),
}

pub fn is_doubly_q(input: DoublyQInput<'_>, tol: f64) -> Result<DoublyQVerdict> {
    match input {
        DoublyQInput::Tuple(t, cols) => {
            let residual = bcl::doubly_q_obstruction_on(t, cols);
            let route = match t.flavor {
                Flavor::First => "PUP⊥",
                Flavor::Second => "P⊥UP",
            };
            Ok(DoublyQVerdict { doubly: residual <= tol, residual, witness: None, route })
        }
        DoublyQInput::Pair(v1, v2, q, cap) => {
            let c = doubly_relation(v1, v2, q, cap, tol)?;
            Ok(DoublyQVerdict { doubly: c.passed(), residual: c.deviation, witness: c.witness.clone(), route: "direct" })
        }
    }
}

/// For a first-shape tuple with `q = 1`: `V₂*V₁ − V₁V₂*` against
/// `(I − M_zM_z*) ⊗ PUP⊥U` on the window.
pub fn aux2_identity(t: &BCLTuple, cap: usize, tol: f64) -> Result<Comparison> {
    if !t.q.is_one() || t.flavor != Flavor::First {
        return Err(Error::Hypothesis("the identity is stated for first-shape tuples with q = 1".into()));
    }
    let (v1, v2) = bcl::build_model(t)?;
    let sig = t.signature();
    let lhs = v2.adjoint().compose(&v1)?.sub(&v1.compose(&v2.adjoint())?)?;
    let perp = SMatrix::identity(t.fiber_dim()).sub(&t.p);
    let block = t.p.mul(&t.u).mul(&perp).mul(&t.u);
    let rhs = LazyOperator::from_terms(
        sig,
        vec![
            Term::new(Scalar::one(), vec![Atom::HardyIdentity, Atom::Fiber(Arc::new(block.clone()))]),
            Term::new(Scalar::integer(-1), vec![Atom::Shift(0), Atom::Coshift(0), Atom::Fiber(Arc::new(block))]),
        ],
    )?;
    equal_on_window(&lhs, &rhs, &TruncationWindow::new(cap, 1)?, tol)
}

/// `(s_q, s_q̄)` and the identification `τ_S` of a doubly q-commuting shift
/// pair with `H²(𝔻²)`, on a per-variable window.
#[derive(Clone, Debug)]
pub struct SlocinskiForm {
    pub cap: usize,
    pub monomials: Vec<GradedIndex>,
    pub s_q: CMat,
    pub s_qbar: CMat,
    /// Unit vector spanning the joint wandering subspace.
    pub wandering: SVec,
    /// `τ_S*(z₁ᵃz₂ᵇ) = A₁ᵃA₂ᵇe`, in the order of `monomials`.
    pub orbit: Vec<SVec>,
    pub checks: Vec<CheckRecord>,
}

impl SlocinskiForm {
    /// Diagonal entries of `s_q` when it is diagonal to `tol`.
    pub fn diagonal_phases(&self, tol: f64) -> Option<Vec<(GradedIndex, Complex64)>> {
        let m = &self.s_q;
        let off = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).filter(move |&j| j != i).map(move |j| m[(i, j)].norm()))
            .fold(0.0, f64::max);
        (off <= tol).then(|| self.monomials.iter().cloned().zip((0..m.nrows()).map(|i| m[(i, i)])).collect())
    }
}

/// Normal form of a doubly q-commuting pair of shifts of joint multiplicity one.
///
/// `A₁ = V₁𝔯_q̄`, `A₂ = 𝔯_qV₂` doubly commute; their joint wandering vector `e`
/// gives `τ_S*: z₁ᵃz₂ᵇ ↦ A₁ᵃA₂ᵇe` and `s_q = τ_S𝔯_qτ_S*`. The checks confirm
/// `V₁τ_S* = τ_S*M_{z₁}s_q` and `V₂τ_S* = τ_S*s_q̄M_{z₂}`.
pub fn slocinski_normal_form(v1: &LazyOperator, v2: &LazyOperator, q: Phase, cap: usize, tol: f64) -> Result<SlocinskiForm> {
    let doubly = doubly_relation(v1, v2, q, cap, tol)?;
    if !doubly.passed() {
        return Err(Error::Hypothesis(format!(
            "pair is not doubly q-commuting (witness {})",
            doubly.witness.as_deref().unwrap_or("?")
        )));
    }
    for (name, v) in [("V1", v1), ("V2", v2)] {
        uniform_degree_step(v, cap).map_err(|e| Error::Hypothesis(format!("{name} is not a graded shift: {e}")))?;
    }
    let rq = rq_operator(v1, v2, q, cap)?;
    let rqb = rq_operator(v1, v2, q.conj(), cap)?;
    let a1 = v1.compose(&rqb)?;
    let a2 = rq.compose(v2)?;
    let sig = v1.signature();
    let id = LazyOperator::identity(sig);
    let d1 = id.sub(&a1.compose(&a1.adjoint())?)?;
    let d2 = id.sub(&a2.compose(&a2.adjoint())?)?;
    let wander = densify(&d1.compose(&d2)?, cap)?;
    let range = linalg::range_basis(&wander.matrix, 1e-8);
    if range.ncols() != 1 {
        return Err(Error::Hypothesis(format!("joint wandering subspace has dimension {} on the window, not 1", range.ncols())));
    }
    let col = linalg::normalize_global_phase(&range, 1e-8);
    let wandering = to_svec(&col, wander.basis.keys());

    let mons = monomials(2, cap);
    let mut orbit = Vec::with_capacity(mons.len());
    for m in &mons {
        let mut g = wandering.clone();
        for _ in 0..m.0[1] {
            g = a2.apply(&g)?;
        }
        for _ in 0..m.0[0] {
            g = a1.apply(&g)?;
        }
        orbit.push(g);
    }
    let n = mons.len();
    let gram = CMat::from_fn(n, n, |i, j| orbit[j].inner(&orbit[i]).to_c64());
    let expand = |op: &LazyOperator| -> Result<(CMat, Vec<SVec>)> {
        let images: Vec<SVec> = orbit.iter().map(|f| op.apply(f)).collect::<Result<_>>()?;
        let m = CMat::from_fn(n, n, |i, j| images[j].inner(&orbit[i]).to_c64());
        Ok((m, images))
    };
    let (s_q, rq_images) = expand(&rq)?;
    let (s_qbar, _) = expand(&rqb)?;

    let index = |g: &GradedIndex| mons.iter().position(|m| m == g);
    let combine = |coef: &CMat, j: usize, shift_var: Option<usize>| -> SVec {
        let mut out = SVec::new();
        for i in 0..n {
            let c = coef[(i, j)];
            if c.norm() == 0.0 {
                continue;
            }
            let mut g = mons[i].clone();
            if let Some(v) = shift_var {
                g.0[v] += 1;
            }
            if let Some(k) = index(&g) {
                out.add_scaled(&orbit[k], &Scalar::approx(c.re, c.im));
            }
        }
        out
    };
    // Columns whose images stay inside the window.
    let inner: Vec<usize> = (0..n).filter(|&j| (mons[j].degree() as usize) + 1 < cap).collect();
    let mut onto = 0.0f64;
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for &j in &inner {
        onto = onto.max(rq_images[j].sub(&combine(&s_q, j, None)).norm());
        first = first.max(v1.apply(&orbit[j])?.sub(&combine(&s_q, j, Some(0))).norm());
        // s_q̄M_{z₂}: shift first, then expand through column j + e₂.
        let mut g = mons[j].clone();
        g.0[1] += 1;
        if let Some(k) = index(&g) {
            second = second.max(v2.apply(&orbit[j])?.sub(&combine(&s_qbar, k, None)).norm());
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let checks = vec![
        CheckRecord::residual("tau-s-isometry", linalg::max_column_deviation(&gram, &CMat::identity(n, n), &all), tol),
        CheckRecord::residual("tau-s-onto-rq-images", onto, tol),
        CheckRecord::residual("tau-s-intertwines-v1", first, tol),
        CheckRecord::residual("tau-s-intertwines-v2", second, tol),
    ];
    Ok(SlocinskiForm { cap, monomials: mons, s_q, s_qbar, wandering, orbit, checks })
}

/// Sparse form of a dense window vector; entries that are exactly 0 or 1 stay exact.
fn to_svec(col: &CMat, keys: &[BasisKey]) -> SVec {
    let mut v = SVec::new();
    for (i, z) in col.column(0).iter().enumerate() {
        if z.norm() < 1e-14 {
            continue;
        }
        let s = if (z - Complex64::new(1.0, 0.0)).norm() < 1e-14 { Scalar::one() } else { Scalar::approx(z.re, z.im) };
        v.add_term(keys[i].clone(), s);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::SpaceSignature;

    fn bidisk() -> (LazyOperator, LazyOperator) {
        let s = SpaceSignature::hardy(2);
        (LazyOperator::atom(s, Atom::Shift(0)).unwrap(), LazyOperator::atom(s, Atom::Shift(1)).unwrap())
    }

    #[test]
    fn rq_on_bidisk_is_min_phase() {
        let q = Phase::rational(1, 8);
        let (v1, v2) = bidisk();
        let r = rq_operator(&v1, &v2, q, 10).unwrap();
        for m in monomials(2, 10) {
            let e = SVec::basis(BasisKey::Hardy(m.clone(), 0));
            // Oracle: q^{min(a,b)} from the terminating series evaluated by hand.
            let expect = e.scaled(&q.pow(m.0[0].min(m.0[1]) as i64).to_scalar());
            assert_eq!(r.apply(&e).unwrap(), expect);
        }
    }

    #[test]
    fn rq_at_one_is_identity() {
        let (v1, v2) = bidisk();
        let r = rq_operator(&v1, &v2, Phase::one(), 8).unwrap();
        let c = equal_on_window(&r, &LazyOperator::identity(v1.signature()), &TruncationWindow::new(8, 0).unwrap(), 0.0).unwrap();
        assert!(c.passed());
    }

    #[test]
    fn rotation_is_rejected_as_shift() {
        let s = SpaceSignature::hardy(1);
        let r = LazyOperator::atom(s, Atom::Rot(Phase::rational(1, 8))).unwrap();
        let m = LazyOperator::atom(s, Atom::Shift(0)).unwrap();
        assert!(uniform_degree_step(&r, 6).is_err());
        assert_eq!(uniform_degree_step(&m.compose(&r).unwrap(), 6).unwrap(), 1);
    }

    #[test]
    fn bidisk_passage_to_q() {
        let q = Phase::rational(1, 8);
        let (v1, v2) = bidisk();
        let p = passage(&v1, &v2, q, Direction::CommToQ, 8, 1e-10).unwrap();
        assert!(p.certificate.checks.iter().all(CheckRecord::passed), "{:?}", p.certificate.checks);
        assert!(p.certificate.rq_diagonal.is_some());
    }

    #[test]
    fn identity_r_fails_hypothesis() {
        let (v1, v2) = bidisk();
        let id = LazyOperator::identity(v1.signature());
        assert!(abstract_passage_check(&v1, &v2, &id, Phase::one(), 6, 1e-10).is_ok());
        assert!(matches!(
            abstract_passage_check(&v1, &v2, &id, Phase::rational(1, 8), 6, 1e-10),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn slocinski_of_transformed_bidisk() {
        let q = Phase::rational(1, 8);
        let (v1, v2) = bidisk();
        let (w1, w2) = to_q_commutative(&v1, &v2, q, 8).unwrap();
        let f = slocinski_normal_form(&w1, &w2, q, 8, 1e-8).unwrap();
        assert!(f.checks.iter().all(CheckRecord::passed), "{:?}", f.checks);
        let phases = f.diagonal_phases(1e-12).unwrap();
        for (m, z) in phases {
            assert!((z - q.pow(m.0[0].min(m.0[1]) as i64).value()).norm() < 1e-12);
        }
    }
}
