//! Unitary extension of a model tuple: `H²` becomes `L²` of the circle, with
//! basis `ζᵏ ⊗ e` for all integers `k`, and `M_z` becomes the bilateral shift.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::TupleModel;
use crate::cyclo::Scalar;
use crate::error::{Error, Result};
use crate::graded::GradedIndex;
use crate::opalg::{BasisKey, Comparison, SVec, Verdict};
use crate::phase::Phase;
use crate::report::CheckRecord;
use crate::smatrix::SMatrix;

/// Entries of snapped model data closer than this to an exact value are
/// replaced by it; comparisons of inexact data use the same bound.
pub const SNAP_TOL: f64 = 1e-12;

/// Laurent degrees `−negative ≤ k < positive`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BilateralWindow {
    pub negative: usize,
    pub positive: usize,
}

impl BilateralWindow {
    pub fn new(negative: usize, positive: usize) -> Self {
        BilateralWindow { negative, positive }
    }

    pub fn degrees(&self) -> std::ops::Range<i64> {
        -(self.negative as i64)..self.positive as i64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BiKey {
    Laurent(i64, usize),
    Ku(usize),
}

impl fmt::Display for BiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BiKey::Laurent(k, e) => write!(f, "ζ^{k} ⊗ e{}", e + 1),
            BiKey::Ku(j) => write!(f, "k{}", j + 1),
        }
    }
}

/// Sparse vector on the bilateral basis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BVec(BTreeMap<BiKey, Scalar>);

impl BVec {
    pub fn basis(key: BiKey) -> Self {
        BVec(BTreeMap::from([(key, Scalar::one())]))
    }

    pub fn entries(&self) -> impl Iterator<Item = (&BiKey, &Scalar)> {
        self.0.iter()
    }

    pub fn add_term(&mut self, key: BiKey, value: Scalar) {
        if value.is_zero() {
            return;
        }
        let sum = match self.0.get(&key) {
            Some(old) => old + &value,
            None => value,
        };
        if sum.is_zero() {
            self.0.remove(&key);
        } else {
            self.0.insert(key, sum);
        }
    }

    pub fn scaled(&self, s: &Scalar) -> BVec {
        BVec(self.0.iter().map(|(k, v)| (k.clone(), s * v)).filter(|(_, v)| !v.is_zero()).collect())
    }

    pub fn sub(&self, other: &BVec) -> BVec {
        let mut out = self.clone();
        for (k, v) in &other.0 {
            out.add_term(k.clone(), -v);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.0.values().all(Scalar::is_exact)
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|v| v.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Non-negative Laurent part as a Hardy-space vector.
    pub fn from_hardy(v: &SVec) -> BVec {
        let mut out = BVec::default();
        for (k, s) in v.entries() {
            let key = match k {
                BasisKey::Hardy(g, e) => BiKey::Laurent(i64::from(g.degree()), *e),
                BasisKey::Ku(j) => BiKey::Ku(*j),
            };
            out.add_term(key, s.clone());
        }
        out
    }
}

/// `ζᵏ ⊗ ξ ↦ s·cᵏ ζ^{k+shift} ⊗ Aξ`.
#[derive(Clone, Debug)]
struct BiTerm {
    scalar: Scalar,
    shift: i64,
    rot: Phase,
    fiber: Arc<SMatrix>,
}

impl BiTerm {
    fn adjoint(&self) -> BiTerm {
        // ⟨T(ζᵏ⊗ξ), ζᵐ⊗η⟩ = s cᵏ δ_{m,k+shift} ⟨Aξ, η⟩, so T* sends ζᵐ⊗η to
        // s̄ c^{shift} c̄ᵐ ζ^{m−shift} ⊗ A*η.
        BiTerm {
            scalar: &self.scalar.conj() * &self.rot.pow(self.shift).to_scalar(),
            shift: -self.shift,
            rot: self.rot.conj(),
            fiber: Arc::new(self.fiber.adjoint()),
        }
    }
}

/// Exact operator on `(L² ⊗ F) ⊕ K_u` built from rotations, the bilateral
/// shift and fiber matrices.
///
/// When the fiber data is pinned down only on some coordinates, an
/// application that would read unreliable data returns `None`. Forward
/// operators refuse inputs outside the pinned columns. An adjoint reads a
/// whole row, so it accepts `η` only when every column its graded support
/// can reach from `η` is pinned.
#[derive(Clone, Debug)]
pub struct BilateralOperator {
    fiber_dim: usize,
    ku_dim: usize,
    terms: Vec<BiTerm>,
    ku: Option<Arc<SMatrix>>,
    pinned: Option<Arc<Reliability>>,
    adjointed: bool,
}

#[derive(Debug)]
struct Reliability {
    forward: Vec<bool>,
    backward: Vec<bool>,
}

impl Reliability {
    /// Pinned columns are those of degree at most `limit`; `reach` bounds the
    /// degree change of any nonzero entry in a pinned column.
    fn new(model: &TupleModel) -> Self {
        let deg = &model.fiber_degrees;
        let mut forward = vec![false; model.fiber_dim];
        for &g in &model.good_fiber {
            forward[g] = true;
        }
        let limit = model.good_fiber.iter().map(|&g| deg[g]).max().unwrap_or(0);
        let mut reach = 0u32;
        for m in &model.indices {
            for fiber in [&m.lower, &m.upper] {
                for &col in &model.good_fiber {
                    for row in 0..model.fiber_dim {
                        if !fiber.get(row, col).is_zero() {
                            reach = reach.max(deg[row].abs_diff(deg[col]));
                        }
                    }
                }
            }
        }
        let consistent = (0..model.fiber_dim).all(|e| forward[e] == (deg[e] <= limit));
        let backward = (0..model.fiber_dim).map(|e| consistent && deg[e] + reach <= limit).collect();
        Reliability { forward, backward }
    }
}

impl BilateralOperator {
    /// `R_q ⊗ A + M_ζ R_q ⊗ B ⊕ W` for index `i` of the model.
    pub fn from_model(model: &TupleModel, i: usize) -> Result<Self> {
        let m = model.indices.get(i).ok_or(Error::IndexOutOfRange { index: i, dim: model.len() })?;
        let term = |shift, fiber: &SMatrix| BiTerm { scalar: Scalar::one(), shift, rot: m.q, fiber: Arc::new(fiber.clone()) };
        let terms = if model.fiber_dim > 0 { vec![term(0, &m.lower), term(1, &m.upper)] } else { Vec::new() };
        let pinned = (!model.fiber_is_complete()).then(|| Arc::new(Reliability::new(model)));
        Ok(BilateralOperator {
            fiber_dim: model.fiber_dim,
            ku_dim: model.ku_dim,
            terms,
            ku: (model.ku_dim > 0).then(|| Arc::new(m.w.clone())),
            pinned,
            adjointed: false,
        })
    }

    pub fn adjoint(&self) -> Self {
        BilateralOperator {
            terms: self.terms.iter().map(BiTerm::adjoint).collect(),
            ku: self.ku.as_ref().map(|w| Arc::new(w.adjoint())),
            adjointed: !self.adjointed,
            ..self.clone()
        }
    }

    pub fn is_exact(&self) -> bool {
        self.terms.iter().all(|t| t.scalar.is_exact() && t.fiber.is_exact())
            && self.ku.as_ref().is_none_or(|w| w.is_exact())
    }

    fn reliable(&self, e: usize) -> bool {
        self.pinned.as_ref().is_none_or(|r| if self.adjointed { r.backward[e] } else { r.forward[e] })
    }

    /// Applies the operator, or `None` when unreliable fiber data would be used.
    pub fn apply(&self, v: &BVec) -> Option<BVec> {
        let mut out = BVec::default();
        for (key, x) in v.entries() {
            match key {
                BiKey::Laurent(k, e) => {
                    if !self.reliable(*e) {
                        return None;
                    }
                    for t in &self.terms {
                        let coeff = &(&t.scalar * &t.rot.pow(*k).to_scalar()) * x;
                        for row in 0..self.fiber_dim {
                            let a = t.fiber.get(row, *e);
                            if a.is_zero() {
                                continue;
                            }
                            out.add_term(BiKey::Laurent(k + t.shift, row), a * &coeff);
                        }
                    }
                }
                BiKey::Ku(j) => {
                    if let Some(w) = &self.ku {
                        for row in 0..self.ku_dim {
                            out.add_term(BiKey::Ku(row), w.get(row, *j) * x);
                        }
                    }
                }
            }
        }
        Some(out)
    }

    pub fn to_json(&self, window: BilateralWindow) -> BilateralJson {
        BilateralJson {
            range: [-(window.negative as i64), window.positive as i64],
            fiber_dim: self.fiber_dim,
            ku_dim: self.ku_dim,
            terms: self
                .terms
                .iter()
                .map(|t| {
                    let s = t.scalar.to_c64();
                    BiTermJson { scalar: [s.re, s.im], shift: t.shift, rot: t.rot, fiber: (*t.fiber).clone() }
                })
                .collect(),
            ku: self.ku.as_ref().map(|w| (**w).clone()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BilateralJson {
    pub range: [i64; 2],
    pub fiber_dim: usize,
    pub ku_dim: usize,
    pub terms: Vec<BiTermJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ku: Option<SMatrix>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BiTermJson {
    pub scalar: [f64; 2],
    pub shift: i64,
    pub rot: Phase,
    pub fiber: SMatrix,
}

/// Unitary extension of a model tuple together with its checks.
#[derive(Clone, Debug)]
pub struct Extension {
    pub window: BilateralWindow,
    pub model: TupleModel,
    pub ops: Vec<BilateralOperator>,
    pub checks: Vec<CheckRecord>,
}

impl Extension {
    pub fn is_exact(&self) -> bool {
        self.ops.iter().all(BilateralOperator::is_exact)
    }
}

/// Running maximum of deviations over basis vectors.
struct Tally {
    deviation: f64,
    exact: bool,
    checked: usize,
    witness: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Tally { deviation: 0.0, exact: true, checked: 0, witness: None }
    }

    fn record(&mut self, key: &BiKey, diff: &BVec) {
        self.checked += 1;
        self.exact &= diff.is_exact();
        let d = if diff.is_zero() { 0.0 } else { diff.norm() };
        if d > self.deviation {
            self.deviation = d;
            self.witness = Some(key.to_string());
        }
    }

    fn finish(self, name: String) -> CheckRecord {
        let tolerance = if self.exact { 0.0 } else { SNAP_TOL };
        let verdict = if self.checked == 0 {
            Verdict::Inconclusive
        } else if self.deviation <= tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        let witness = (verdict == Verdict::Fail).then_some(self.witness).flatten();
        let cmp = Comparison { deviation: self.deviation, tolerance, verdict, exact: self.exact, witness, checked: self.checked };
        CheckRecord::from_comparison(name, &cmp).with_note(format!("{} basis vectors", self.checked))
    }
}

fn apply_all(ops: &[&BilateralOperator], v: &BVec) -> Option<BVec> {
    // Rightmost factor acts first.
    ops.iter().rev().try_fold(v.clone(), |acc, op| op.apply(&acc))
}

/// Extends the model tuple to unitaries `Y_i` on `(L² ⊗ F) ⊕ K_u` and checks,
/// on every basis vector of the window whose computation stays within the
/// pinned fiber data: unitarity, the relations `Y_iY_j = q(i,j)Y_jY_i`,
/// restriction to the model on non-negative degrees, that `Y_1⋯Y_d` acts as
/// the bilateral shift, and that every window vector is reached from
/// `H² ⊗ F` by powers of `(Y_1⋯Y_d)*`.
pub fn extend_to_unitaries(model: &TupleModel, window: BilateralWindow) -> Result<Extension> {
    if model.is_empty() {
        return Err(Error::InvalidArgument("empty model tuple".into()));
    }
    let model = model.snapped(SNAP_TOL);
    let d = model.len();
    let ops: Vec<BilateralOperator> = (0..d).map(|i| BilateralOperator::from_model(&model, i)).collect::<Result<_>>()?;
    let adjoints: Vec<BilateralOperator> = ops.iter().map(BilateralOperator::adjoint).collect();
    let mut basis: Vec<BiKey> =
        window.degrees().flat_map(|k| (0..model.fiber_dim).map(move |e| BiKey::Laurent(k, e))).collect();
    basis.extend((0..model.ku_dim).map(BiKey::Ku));
    let mut checks = Vec::new();

    for i in 0..d {
        let mut tally = Tally::new();
        for key in &basis {
            let b = BVec::basis(key.clone());
            let pairs = [[&adjoints[i], &ops[i]], [&ops[i], &adjoints[i]]];
            for pair in pairs {
                if let Some(img) = apply_all(&pair, &b) {
                    tally.record(key, &img.sub(&b));
                }
            }
        }
        checks.push(tally.finish(format!("unitary-{}", i + 1)));
    }

    for i in 0..d {
        for j in (i + 1)..d {
            let q = model.q.get(i, j).to_scalar();
            let mut tally = Tally::new();
            for key in &basis {
                let b = BVec::basis(key.clone());
                if let (Some(l), Some(r)) = (apply_all(&[&ops[i], &ops[j]], &b), apply_all(&[&ops[j], &ops[i]], &b)) {
                    tally.record(key, &l.sub(&r.scaled(&q)));
                }
            }
            checks.push(tally.finish(format!("relation-{}-{}", i + 1, j + 1)));
        }
    }

    for i in 0..d {
        let x = model.model_operator(i)?;
        let mut tally = Tally::new();
        for key in &basis {
            let hardy = match key {
                BiKey::Laurent(k, e) if *k >= 0 => BasisKey::Hardy(GradedIndex(vec![*k as u32]), *e),
                BiKey::Laurent(..) => continue,
                BiKey::Ku(j) => BasisKey::Ku(*j),
            };
            if let Some(img) = ops[i].apply(&BVec::basis(key.clone())) {
                let expected = BVec::from_hardy(&x.apply(&SVec::basis(hardy))?);
                tally.record(key, &img.sub(&expected));
            }
        }
        checks.push(tally.finish(format!("restricts-to-model-{}", i + 1)));
    }

    let all: Vec<&BilateralOperator> = ops.iter().collect();
    let mut tally = Tally::new();
    for key in &basis {
        if let BiKey::Laurent(k, e) = key {
            if let Some(img) = apply_all(&all, &BVec::basis(key.clone())) {
                tally.record(key, &img.sub(&BVec::basis(BiKey::Laurent(k + 1, *e))));
            }
        }
    }
    checks.push(tally.finish("product-is-bilateral-shift".into()));

    // For ζᵐ ⊗ e with m < 0: (Y_1⋯Y_d)^{|m|} carries it onto 1 ⊗ e ∈ H² ⊗ F,
    // so by unitarity it is (Y_1⋯Y_d)*^{|m|} of that Hardy vector.
    let mut tally = Tally::new();
    for key in &basis {
        let BiKey::Laurent(m, e) = *key else { continue };
        let mut v = BVec::basis(key.clone());
        let mut deviation = None;
        for k in (m + 1)..=0 {
            let Some(next) = apply_all(&all, &v) else { break };
            let diff = next.sub(&BVec::basis(BiKey::Laurent(k, e)));
            if !diff.is_zero() && diff.norm() > SNAP_TOL {
                deviation = Some(diff);
                break;
            }
            v = next;
            if k == 0 {
                deviation = Some(diff);
            }
        }
        if m >= 0 {
            deviation = Some(BVec::default());
        }
        if let Some(diff) = deviation {
            tally.record(key, &diff);
        }
    }
    checks.push(tally.finish("minimality-witness".into()));

    Ok(Extension { window, model, ops, checks })
}
