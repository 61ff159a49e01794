//! Exact lazy operators on `(H²(𝔻ᵈ) ⊗ F) ⊕ K_u` and their dense truncations.
//!
//! Operators are expression trees over atoms; applying one to a finitely
//! supported vector is exact (no truncation), so identities between lazy
//! operators can be checked with zero tolerance whenever all data is exact.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cyclo::Scalar;
use crate::error::{Error, Result};
use crate::graded::{monomials, monomials_up_to_degree, GradedIndex, TruncationWindow};
use crate::phase::Phase;
use crate::smatrix::SMatrix;

/// Shape of the ambient space `(H²(𝔻ᵈ) ⊗ ℂ^fiber_dim) ⊕ ℂ^ku_dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceSignature {
    #[serde(rename = "d")]
    pub vars: usize,
    #[serde(rename = "fiberDim")]
    pub fiber_dim: usize,
    #[serde(rename = "kuDim")]
    pub ku_dim: usize,
}

impl SpaceSignature {
    pub fn new(vars: usize, fiber_dim: usize, ku_dim: usize) -> Self {
        SpaceSignature { vars, fiber_dim, ku_dim }
    }

    pub fn hardy(vars: usize) -> Self {
        Self::new(vars, 1, 0)
    }

    pub fn has_hardy(&self) -> bool {
        self.vars > 0 && self.fiber_dim > 0
    }

    fn check(&self, other: &SpaceSignature) -> Result<()> {
        if self != other {
            return Err(Error::SignatureMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }

    fn admits(&self, key: &BasisKey) -> bool {
        match key {
            BasisKey::Hardy(g, f) => self.has_hardy() && g.vars() == self.vars && *f < self.fiber_dim,
            BasisKey::Ku(k) => *k < self.ku_dim,
        }
    }
}

/// A basis vector: a monomial tensored with a fiber basis vector, or a
/// basis vector of the unitary summand.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisKey {
    Hardy(GradedIndex, usize),
    Ku(usize),
}

impl BasisKey {
    pub fn degree(&self) -> Option<u32> {
        match self {
            BasisKey::Hardy(g, _) => Some(g.degree()),
            BasisKey::Ku(_) => None,
        }
    }

    pub fn label(&self, sig: &SpaceSignature) -> String {
        match self {
            BasisKey::Hardy(g, f) if sig.fiber_dim == 1 => g.label(),
            BasisKey::Hardy(g, f) => format!("{} ⊗ e{}", g.label(), f + 1),
            BasisKey::Ku(k) => format!("k{}", k + 1),
        }
    }
}

/// Finitely supported vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SVec(BTreeMap<BasisKey, Scalar>);

impl SVec {
    pub fn new() -> Self {
        SVec(BTreeMap::new())
    }

    pub fn basis(key: BasisKey) -> Self {
        let mut m = BTreeMap::new();
        m.insert(key, Scalar::one());
        SVec(m)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&BasisKey, &Scalar)> {
        self.0.iter()
    }

    pub fn get(&self, key: &BasisKey) -> Scalar {
        self.0.get(key).cloned().unwrap_or_else(Scalar::zero)
    }

    pub fn add_term(&mut self, key: BasisKey, value: Scalar) {
        if value.is_zero() {
            return;
        }
        match self.0.get_mut(&key) {
            Some(v) => {
                let s = &*v + &value;
                if s.is_zero() {
                    self.0.remove(&key);
                } else {
                    *v = s;
                }
            }
            None => {
                self.0.insert(key, value);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &SVec, s: &Scalar) {
        for (k, v) in &other.0 {
            self.add_term(k.clone(), s * v);
        }
    }

    pub fn scaled(&self, s: &Scalar) -> SVec {
        let mut out = SVec::new();
        out.add_scaled(self, s);
        out
    }

    pub fn sub(&self, other: &SVec) -> SVec {
        let mut out = self.clone();
        out.add_scaled(other, &Scalar::integer(-1));
        out
    }

    /// True when every stored coefficient is zero (exactly, for exact data).
    pub fn is_zero(&self) -> bool {
        self.0.values().all(Scalar::is_zero)
    }

    pub fn is_exact(&self) -> bool {
        self.0.values().all(Scalar::is_exact)
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|v| v.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// `⟨self, other⟩`, linear in the first argument.
    pub fn inner(&self, other: &SVec) -> Scalar {
        let mut acc = Scalar::zero();
        for (k, v) in &self.0 {
            if let Some(w) = other.0.get(k) {
                acc = &acc + &(v * &w.conj());
            }
        }
        acc
    }

    fn retain_hardy(self) -> SVec {
        SVec(self.0.into_iter().filter(|(k, _)| matches!(k, BasisKey::Hardy(..))).collect())
    }

    fn retain_ku(self) -> SVec {
        SVec(self.0.into_iter().filter(|(k, _)| matches!(k, BasisKey::Ku(_))).collect())
    }
}

/// Elementary operators.
#[derive(Clone, Debug)]
pub enum Atom {
    /// `M_{z_j}` (zero-based variable index).
    Shift(usize),
    /// `M_{z_j}^*`, annihilating monomials with zero `j`-th exponent.
    Coshift(usize),
    /// `f(z) ↦ f(cz)`: multiplies a total-degree-`n` monomial by `c^n`.
    Rot(Phase),
    /// Single-variable rotation: multiplies by `c^{n_j}`.
    RotVar(usize, Phase),
    /// A matrix acting on the fiber component.
    Fiber(Arc<SMatrix>),
    /// A matrix acting on the unitary summand.
    Ku(Arc<SMatrix>),
    /// Projection onto the unitary summand.
    KuIdentity,
    /// Projection onto the Hardy summand.
    HardyIdentity,
}

impl Atom {
    fn adjoint(&self) -> Atom {
        match self {
            Atom::Shift(j) => Atom::Coshift(*j),
            Atom::Coshift(j) => Atom::Shift(*j),
            Atom::Rot(c) => Atom::Rot(c.conj()),
            Atom::RotVar(j, c) => Atom::RotVar(*j, c.conj()),
            Atom::Fiber(a) => Atom::Fiber(Arc::new(a.adjoint())),
            Atom::Ku(b) => Atom::Ku(Arc::new(b.adjoint())),
            Atom::KuIdentity => Atom::KuIdentity,
            Atom::HardyIdentity => Atom::HardyIdentity,
        }
    }

    fn validate(&self, sig: &SpaceSignature) -> Result<()> {
        let ok = match self {
            Atom::Shift(j) | Atom::Coshift(j) | Atom::RotVar(j, _) => *j < sig.vars,
            Atom::Fiber(a) => a.rows() == sig.fiber_dim && a.cols() == sig.fiber_dim,
            Atom::Ku(b) => b.rows() == sig.ku_dim && b.cols() == sig.ku_dim,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::SignatureMismatch(format!("atom {self:?} does not fit {sig:?}")))
        }
    }

    fn apply(&self, v: SVec) -> SVec {
        match self {
            Atom::HardyIdentity => v.retain_hardy(),
            Atom::KuIdentity => v.retain_ku(),
            Atom::Shift(j) => map_hardy(v, |mut g, f, s| {
                g.0[*j] += 1;
                Some((g, f, s))
            }),
            Atom::Coshift(j) => map_hardy(v, |mut g, f, s| {
                if g.0[*j] == 0 {
                    return None;
                }
                g.0[*j] -= 1;
                Some((g, f, s))
            }),
            Atom::Rot(c) => map_hardy(v, |g, f, s| {
                let w = &c.pow(g.degree() as i64).to_scalar() * &s;
                Some((g, f, w))
            }),
            Atom::RotVar(j, c) => map_hardy(v, |g, f, s| {
                let w = &c.pow(g.0[*j] as i64).to_scalar() * &s;
                Some((g, f, w))
            }),
            Atom::Fiber(a) => {
                let mut blocks: BTreeMap<GradedIndex, Vec<Scalar>> = BTreeMap::new();
                for (k, s) in v.0 {
                    if let BasisKey::Hardy(g, f) = k {
                        blocks.entry(g).or_insert_with(|| vec![Scalar::zero(); a.cols()])[f] = s;
                    }
                }
                let mut out = SVec::new();
                for (g, xi) in blocks {
                    for (f, s) in a.apply(&xi).into_iter().enumerate() {
                        out.add_term(BasisKey::Hardy(g.clone(), f), s);
                    }
                }
                out
            }
            Atom::Ku(b) => {
                let mut xi = vec![Scalar::zero(); b.cols()];
                let mut any = false;
                for (k, s) in v.0 {
                    if let BasisKey::Ku(i) = k {
                        xi[i] = s;
                        any = true;
                    }
                }
                let mut out = SVec::new();
                if any {
                    for (i, s) in b.apply(&xi).into_iter().enumerate() {
                        out.add_term(BasisKey::Ku(i), s);
                    }
                }
                out
            }
        }
    }

    fn token(&self, matrices: &mut Vec<SMatrix>) -> String {
        match self {
            Atom::Shift(j) => format!("Shift:{}", j + 1),
            Atom::Coshift(j) => format!("Coshift:{}", j + 1),
            Atom::Rot(c) => format!("Rot:{c}"),
            Atom::RotVar(j, c) => format!("RotVar:{}:{c}", j + 1),
            Atom::Fiber(a) => {
                matrices.push((**a).clone());
                format!("Fiber:m{}", matrices.len() - 1)
            }
            Atom::Ku(b) => {
                matrices.push((**b).clone());
                format!("Ku:m{}", matrices.len() - 1)
            }
            Atom::KuIdentity => "KuIdentity".into(),
            Atom::HardyIdentity => "HardyIdentity".into(),
        }
    }
}

fn map_hardy(v: SVec, f: impl Fn(GradedIndex, usize, Scalar) -> Option<(GradedIndex, usize, Scalar)>) -> SVec {
    let mut out = SVec::new();
    for (k, s) in v.0 {
        if let BasisKey::Hardy(g, i) = k {
            if let Some((g2, i2, s2)) = f(g, i, s) {
                out.add_term(BasisKey::Hardy(g2, i2), s2);
            }
        }
    }
    out
}

/// `scalar · atoms[0] atoms[1] ⋯` in operator order (the last atom acts first).
#[derive(Clone, Debug)]
pub struct Term {
    pub scalar: Scalar,
    pub atoms: Vec<Atom>,
}

impl Term {
    pub fn new(scalar: Scalar, atoms: Vec<Atom>) -> Self {
        Term { scalar, atoms }
    }

    fn apply(&self, v: &SVec) -> SVec {
        let mut w = v.clone();
        for a in self.atoms.iter().rev() {
            if w.is_zero() {
                break;
            }
            w = a.apply(w);
        }
        w.scaled(&self.scalar)
    }

    /// Total degree raised and lowered, counted per variable: `M_z M_z*`
    /// moves nothing, `M_{z_1} M_{z_2}*` moves one up and one down.
    fn displacement(&self) -> (usize, usize) {
        let mut net: BTreeMap<usize, i64> = BTreeMap::new();
        for a in &self.atoms {
            match a {
                Atom::Shift(j) => *net.entry(*j).or_default() += 1,
                Atom::Coshift(j) => *net.entry(*j).or_default() -= 1,
                _ => {}
            }
        }
        let up = net.values().filter(|&&n| n > 0).sum::<i64>();
        let down = net.values().filter(|&&n| n < 0).map(|n| -n).sum::<i64>();
        (up as usize, down as usize)
    }

    fn adjoint(&self) -> Term {
        Term { scalar: self.scalar.conj(), atoms: self.atoms.iter().rev().map(Atom::adjoint).collect() }
    }
}

#[derive(Debug)]
enum Expr {
    Terms(Vec<Term>),
    /// Operator order: the last factor acts first.
    Compose(Vec<LazyOperator>),
    Sum(Vec<LazyOperator>),
    Scale(Scalar, LazyOperator),
    /// `Σₙ cⁿ Vⁿ(I − VV*)V*ⁿ`, summed until `V*ⁿ` annihilates the input.
    ShiftSeries(LazyOperator, Phase),
}

/// An exactly applicable operator on a fixed [`SpaceSignature`].
#[derive(Clone, Debug)]
pub struct LazyOperator {
    sig: SpaceSignature,
    expr: Arc<Expr>,
}

impl LazyOperator {
    pub fn from_terms(sig: SpaceSignature, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            for a in &t.atoms {
                a.validate(&sig)?;
            }
        }
        Ok(LazyOperator { sig, expr: Arc::new(Expr::Terms(terms)) })
    }

    pub fn word(sig: SpaceSignature, atoms: Vec<Atom>) -> Result<Self> {
        Self::from_terms(sig, vec![Term::new(Scalar::one(), atoms)])
    }

    pub fn atom(sig: SpaceSignature, atom: Atom) -> Result<Self> {
        Self::word(sig, vec![atom])
    }

    pub fn identity(sig: SpaceSignature) -> Self {
        LazyOperator { sig, expr: Arc::new(Expr::Terms(vec![Term::new(Scalar::one(), vec![])])) }
    }

    pub fn zero(sig: SpaceSignature) -> Self {
        LazyOperator { sig, expr: Arc::new(Expr::Terms(vec![])) }
    }

    pub fn signature(&self) -> SpaceSignature {
        self.sig
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LazyOperator) -> Result<Self> {
        self.sig.check(&other.sig)?;
        Ok(LazyOperator { sig: self.sig, expr: Arc::new(Expr::Compose(vec![self.clone(), other.clone()])) })
    }

    /// Ordered product `ops[0] ops[1] ⋯`; the identity for an empty list.
    pub fn product(sig: SpaceSignature, ops: &[LazyOperator]) -> Result<Self> {
        for op in ops {
            sig.check(&op.sig)?;
        }
        Ok(match ops.len() {
            0 => Self::identity(sig),
            1 => ops[0].clone(),
            _ => LazyOperator { sig, expr: Arc::new(Expr::Compose(ops.to_vec())) },
        })
    }

    pub fn add(&self, other: &LazyOperator) -> Result<Self> {
        self.sig.check(&other.sig)?;
        Ok(LazyOperator { sig: self.sig, expr: Arc::new(Expr::Sum(vec![self.clone(), other.clone()])) })
    }

    pub fn sub(&self, other: &LazyOperator) -> Result<Self> {
        self.add(&other.scale(Scalar::integer(-1)))
    }

    pub fn scale(&self, s: Scalar) -> Self {
        LazyOperator { sig: self.sig, expr: Arc::new(Expr::Scale(s, self.clone())) }
    }

    pub fn adjoint(&self) -> Self {
        let expr = match &*self.expr {
            Expr::Terms(ts) => Expr::Terms(ts.iter().map(Term::adjoint).collect()),
            Expr::Compose(fs) => Expr::Compose(fs.iter().rev().map(LazyOperator::adjoint).collect()),
            Expr::Sum(xs) => Expr::Sum(xs.iter().map(LazyOperator::adjoint).collect()),
            Expr::Scale(s, a) => Expr::Scale(s.conj(), a.adjoint()),
            Expr::ShiftSeries(v, c) => Expr::ShiftSeries(v.clone(), c.conj()),
        };
        LazyOperator { sig: self.sig, expr: Arc::new(expr) }
    }

    /// Largest degree raise or lower any term can produce.
    pub fn band(&self) -> usize {
        self.raise().max(self.lower())
    }

    pub fn raise(&self) -> usize {
        match &*self.expr {
            Expr::Terms(ts) => ts.iter().map(|t| t.displacement().0).max().unwrap_or(0),
            Expr::Compose(fs) => fs.iter().map(LazyOperator::raise).sum(),
            Expr::Sum(xs) => xs.iter().map(LazyOperator::raise).max().unwrap_or(0),
            Expr::Scale(_, a) => a.raise(),
            Expr::ShiftSeries(..) => 0,
        }
    }

    pub fn lower(&self) -> usize {
        match &*self.expr {
            Expr::Terms(ts) => ts.iter().map(|t| t.displacement().1).max().unwrap_or(0),
            Expr::Compose(fs) => fs.iter().map(LazyOperator::lower).sum(),
            Expr::Sum(xs) => xs.iter().map(LazyOperator::lower).max().unwrap_or(0),
            Expr::Scale(_, a) => a.lower(),
            Expr::ShiftSeries(..) => 0,
        }
    }

    /// Exact image of a finitely supported vector.
    pub fn apply(&self, v: &SVec) -> Result<SVec> {
        if let Some((k, _)) = v.entries().find(|(k, _)| !self.sig.admits(k)) {
            return Err(Error::SignatureMismatch(format!("basis vector {k:?} not in {:?}", self.sig)));
        }
        Ok(self.apply_unchecked(v))
    }

    fn apply_unchecked(&self, v: &SVec) -> SVec {
        match &*self.expr {
            Expr::Terms(ts) => {
                let mut out = SVec::new();
                for t in ts {
                    out.add_scaled(&t.apply(v), &Scalar::one());
                }
                out
            }
            Expr::Compose(fs) => {
                let mut w = v.clone();
                for f in fs.iter().rev() {
                    w = f.apply_unchecked(&w);
                }
                w
            }
            Expr::Sum(xs) => {
                let mut out = SVec::new();
                for x in xs {
                    out.add_scaled(&x.apply_unchecked(v), &Scalar::one());
                }
                out
            }
            Expr::Scale(s, a) => a.apply_unchecked(v).scaled(s),
            Expr::ShiftSeries(shift, c) => {
                let adj = shift.adjoint();
                let mut pieces = Vec::new();
                let mut g = v.clone();
                while !g.is_zero() {
                    let vg = shift.apply_unchecked(&adj.apply_unchecked(&g));
                    pieces.push(g.sub(&vg));
                    g = adj.apply_unchecked(&g);
                }
                // Horner: d₀ + cV(d₁ + cV(d₂ + ⋯)).
                let c = c.to_scalar();
                let mut acc = SVec::new();
                for d in pieces.iter().rev() {
                    let mut next = d.clone();
                    next.add_scaled(&shift.apply_unchecked(&acc), &c);
                    acc = next;
                }
                acc
            }
        }
    }

    /// `Σₙ cⁿ Vⁿ(I − VV*)V*ⁿ` for a shift `V` that raises every total degree
    /// by the same positive amount, so that `V*` lowers degrees and the sum is
    /// finite on each finitely supported vector. The result preserves degree.
    pub(crate) fn shift_series(shift: &LazyOperator, c: Phase) -> Self {
        LazyOperator { sig: shift.sig, expr: Arc::new(Expr::ShiftSeries(shift.clone(), c)) }
    }

    /// Expands the expression into a flat sum of terms; `None` when it
    /// contains an infinite series.
    pub fn terms(&self) -> Option<Vec<Term>> {
        Some(match &*self.expr {
            Expr::Terms(ts) => ts.clone(),
            Expr::Compose(fs) => {
                let mut acc = vec![Term::new(Scalar::one(), vec![])];
                for f in fs {
                    let ft = f.terms()?;
                    let mut next = Vec::with_capacity(acc.len() * ft.len());
                    for a in &acc {
                        for b in &ft {
                            let mut atoms = a.atoms.clone();
                            atoms.extend(b.atoms.iter().cloned());
                            next.push(Term::new(&a.scalar * &b.scalar, atoms));
                        }
                    }
                    acc = next;
                }
                acc
            }
            Expr::Sum(xs) => {
                let mut out = Vec::new();
                for x in xs {
                    out.extend(x.terms()?);
                }
                out
            }
            Expr::Scale(s, a) => a.terms()?.into_iter().map(|t| Term::new(s * &t.scalar, t.atoms)).collect(),
            Expr::ShiftSeries(..) => return None,
        })
    }

    /// Projection onto the constants of the Hardy summand.
    pub fn constants_projection(sig: SpaceSignature) -> Result<Self> {
        let mut factors = Vec::new();
        for j in 0..sig.vars {
            let p = LazyOperator::atom(sig, Atom::HardyIdentity)?
                .sub(&LazyOperator::word(sig, vec![Atom::Shift(j), Atom::Coshift(j)])?)?;
            factors.push(p);
        }
        if factors.is_empty() {
            return LazyOperator::atom(sig, Atom::HardyIdentity);
        }
        Self::product(sig, &factors)
    }
}

/// Basis vectors tested by lazy comparisons on a window: every monomial of
/// total degree below the safe cap (times each fiber vector), then every
/// unitary-summand vector.
pub fn lazy_test_basis(sig: &SpaceSignature, window: &TruncationWindow) -> Vec<BasisKey> {
    let mut keys = Vec::new();
    if sig.has_hardy() {
        for g in monomials_up_to_degree(sig.vars, window.safe_cap() as u32 - 1) {
            for f in 0..sig.fiber_dim {
                keys.push(BasisKey::Hardy(g.clone(), f));
            }
        }
    }
    keys.extend((0..sig.ku_dim).map(BasisKey::Ku));
    keys
}

/// Outcome of a single identity check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Result of comparing two operators on a window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub deviation: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    /// True when every compared coefficient was computed exactly.
    pub exact: bool,
    /// First basis vector whose images differ by more than the tolerance.
    pub witness: Option<String>,
    pub checked: usize,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn inconclusive(tol: f64) -> Self {
        Comparison { deviation: 0.0, tolerance: tol, verdict: Verdict::Inconclusive, exact: false, witness: None, checked: 0 }
    }
}

/// Compares the images of two lazy operators on every test basis vector.
pub fn equal_on_window(a: &LazyOperator, b: &LazyOperator, window: &TruncationWindow, tol: f64) -> Result<Comparison> {
    a.sig.check(&b.sig)?;
    let keys = lazy_test_basis(&a.sig, window);
    Ok(compare_lazy_on(a, b, &keys, tol))
}

/// Compares two lazy operators on an explicit list of basis vectors.
pub fn compare_lazy_on(a: &LazyOperator, b: &LazyOperator, keys: &[BasisKey], tol: f64) -> Comparison {
    if keys.is_empty() {
        return Comparison::inconclusive(tol);
    }
    let mut dev: f64 = 0.0;
    let mut exact = true;
    let mut witness = None;
    for k in keys {
        let e = SVec::basis(k.clone());
        let diff = a.apply_unchecked(&e).sub(&b.apply_unchecked(&e));
        exact &= diff.is_exact();
        let d = if diff.is_zero() { 0.0 } else { diff.norm() };
        if d > tol && witness.is_none() {
            witness = Some(k.label(&a.sig));
        }
        dev = dev.max(d);
    }
    let verdict = if dev <= tol { Verdict::Pass } else { Verdict::Fail };
    Comparison { deviation: dev, tolerance: tol, verdict, exact, witness, checked: keys.len() }
}

/// Ordered basis of a truncation window.
#[derive(Clone, Debug)]
pub struct WindowBasis {
    sig: SpaceSignature,
    cap: usize,
    keys: Vec<BasisKey>,
    index: HashMap<BasisKey, usize>,
}

impl WindowBasis {
    /// Monomials with every exponent below `cap` (graded lexicographic),
    /// fiber index fastest, followed by the unitary summand.
    pub fn new(sig: SpaceSignature, cap: usize) -> Self {
        let mut keys = Vec::new();
        if sig.has_hardy() {
            for g in monomials(sig.vars, cap) {
                for f in 0..sig.fiber_dim {
                    keys.push(BasisKey::Hardy(g.clone(), f));
                }
            }
        }
        keys.extend((0..sig.ku_dim).map(BasisKey::Ku));
        Self::from_keys(sig, cap, keys)
    }

    fn from_keys(sig: SpaceSignature, cap: usize, keys: Vec<BasisKey>) -> Self {
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        WindowBasis { sig, cap, keys, index }
    }

    /// The same basis with the keys rejected by `keep` removed.
    pub fn restricted(&self, keep: impl Fn(&BasisKey) -> bool) -> Self {
        let keys = self.keys.iter().filter(|k| keep(k)).cloned().collect();
        Self::from_keys(self.sig, self.cap, keys)
    }

    pub fn signature(&self) -> SpaceSignature {
        self.sig
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn dim(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[BasisKey] {
        &self.keys
    }

    pub fn position(&self, key: &BasisKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn label(&self, i: usize) -> String {
        self.keys[i].label(&self.sig)
    }

    /// Dense coordinates of a vector, dropping everything outside the window.
    pub fn coords(&self, v: &SVec) -> DVector<Complex64> {
        let mut out = DVector::zeros(self.dim());
        for (k, s) in v.entries() {
            if let Some(i) = self.position(k) {
                out[i] = s.to_c64();
            }
        }
        out
    }

    /// Indices of basis vectors whose total degree is below `safe_cap`
    /// (unitary-summand vectors are always included).
    pub fn safe_indices(&self, safe_cap: usize) -> Vec<usize> {
        self.keys
            .iter()
            .enumerate()
            .filter(|(_, k)| k.degree().is_none_or(|d| (d as usize) < safe_cap))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Dense compression of an operator to a window basis.
#[derive(Clone, Debug)]
pub struct TruncatedMatrix {
    pub window: TruncationWindow,
    pub basis: Arc<WindowBasis>,
    pub matrix: DMatrix<Complex64>,
}

impl TruncatedMatrix {
    pub fn new(window: TruncationWindow, basis: Arc<WindowBasis>, matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(Error::SignatureMismatch(format!(
                "matrix {}x{} vs basis of dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                basis.dim()
            )));
        }
        Ok(TruncatedMatrix { window, basis, matrix })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn safe_columns(&self) -> Vec<usize> {
        self.basis.safe_indices(self.window.safe_cap())
    }

    /// Product with the band of the result being the sum of the bands.
    pub fn mul(&self, other: &TruncatedMatrix) -> Result<TruncatedMatrix> {
        let window = self.window.with_band(self.window.band + other.window.band)?;
        TruncatedMatrix::new(window, self.basis.clone(), &self.matrix * &other.matrix)
    }

    pub fn adjoint(&self) -> TruncatedMatrix {
        TruncatedMatrix { window: self.window, basis: self.basis.clone(), matrix: self.matrix.adjoint() }
    }

    /// Compares with another matrix column by column on the given columns.
    pub fn compare(&self, other: &DMatrix<Complex64>, cols: &[usize], tol: f64) -> Comparison {
        compare_columns(&self.matrix, other, cols, tol, |i| self.basis.label(i))
    }
}

/// Column-wise comparison of dense matrices: the deviation is the largest
/// Euclidean norm of a difference column.
pub fn compare_columns(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
    cols: &[usize],
    tol: f64,
    label: impl Fn(usize) -> String,
) -> Comparison {
    if cols.is_empty() {
        return Comparison::inconclusive(tol);
    }
    let mut dev: f64 = 0.0;
    let mut witness = None;
    for &c in cols {
        let d = (a.column(c) - b.column(c)).norm();
        if d > tol && witness.is_none() {
            witness = Some(label(c));
        }
        dev = dev.max(d);
    }
    let verdict = if dev <= tol { Verdict::Pass } else { Verdict::Fail };
    Comparison { deviation: dev, tolerance: tol, verdict, exact: false, witness, checked: cols.len() }
}

/// Densifies `op` on the full window of per-variable cap `cap`.
pub fn densify(op: &LazyOperator, cap: usize) -> Result<TruncatedMatrix> {
    let basis = Arc::new(WindowBasis::new(op.sig, cap));
    densify_on(op, basis)
}

/// Densifies `op` on a given basis; contributions outside it are dropped.
pub fn densify_on(op: &LazyOperator, basis: Arc<WindowBasis>) -> Result<TruncatedMatrix> {
    op.sig.check(&basis.sig)?;
    let window = TruncationWindow::new(basis.cap, op.band())?;
    let n = basis.dim();
    let mut m = DMatrix::zeros(n, n);
    for (c, k) in basis.keys.iter().enumerate() {
        let img = op.apply_unchecked(&SVec::basis(k.clone()));
        for (rk, s) in img.entries() {
            if let Some(r) = basis.position(rk) {
                m[(r, c)] = s.to_c64();
            }
        }
    }
    TruncatedMatrix::new(window, basis, m)
}

impl fmt::Display for LazyOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let json = operator_to_json(self).map_err(|_| fmt::Error)?;
        write!(f, "{}", serde_json::to_string(&json).map_err(|_| fmt::Error)?)
    }
}

/// Serialised operator: a flat sum of scalar-weighted atom words, with
/// matrices referenced by id.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorJson {
    pub signature: SpaceSignature,
    pub terms: Vec<TermJson>,
    #[serde(default)]
    pub matrices: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub scalar: [f64; 2],
    pub atoms: Vec<String>,
}

pub fn operator_to_json(op: &LazyOperator) -> Result<OperatorJson> {
    let mut mats = Vec::new();
    let terms = op
        .terms()
        .ok_or_else(|| Error::InvalidArgument("operator contains a series and has no term form".into()))?
        .iter()
        .map(|t| {
            let z = t.scalar.to_c64();
            TermJson { scalar: [z.re, z.im], atoms: t.atoms.iter().map(|a| a.token(&mut mats)).collect() }
        })
        .collect();
    let matrices = mats.iter().enumerate().map(|(i, m)| (format!("m{i}"), m.to_pairs())).collect();
    Ok(OperatorJson { signature: op.sig, terms, matrices })
}

pub fn operator_from_json(json: &OperatorJson) -> Result<LazyOperator> {
    let bad = |s: &str| Error::OperatorSyntax(s.to_string());
    let matrix = |id: &str| -> Result<Arc<SMatrix>> {
        let rows = json.matrices.get(id).ok_or_else(|| bad(&format!("unknown matrix id `{id}`")))?;
        Ok(Arc::new(SMatrix::from_pairs(rows)?))
    };
    let var = |s: &str| -> Result<usize> {
        let j: usize = s.parse().map_err(|_| bad(&format!("bad variable index `{s}`")))?;
        j.checked_sub(1).ok_or_else(|| bad("variable indices start at 1"))
    };
    let mut terms = Vec::new();
    for t in &json.terms {
        let mut atoms = Vec::new();
        for tok in &t.atoms {
            let (head, rest) = tok.split_once(':').unwrap_or((tok.as_str(), ""));
            let atom = match head {
                "Shift" => Atom::Shift(var(rest)?),
                "Coshift" => Atom::Coshift(var(rest)?),
                "Rot" => Atom::Rot(rest.parse()?),
                "RotVar" => {
                    let (j, c) = rest.split_once(':').ok_or_else(|| bad(tok))?;
                    Atom::RotVar(var(j)?, c.parse()?)
                }
                "Fiber" => Atom::Fiber(matrix(rest)?),
                "Ku" => Atom::Ku(matrix(rest)?),
                "KuIdentity" => Atom::KuIdentity,
                "HardyIdentity" => Atom::HardyIdentity,
                _ => return Err(bad(&format!("unknown atom `{tok}`"))),
            };
            atoms.push(atom);
        }
        // Scalars that are bit-for-bit a simple root of unity stay exact.
        terms.push(Term::new(Scalar::snap(Complex64::new(t.scalar[0], t.scalar[1]), 0.0), atoms));
    }
    LazyOperator::from_terms(json.signature, terms)
}
