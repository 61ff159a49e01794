//! Named example operators with their expected outcomes, and seeded random
//! generators of model tuples.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bcl::{self, weyl_pair, BCLTuple, Flavor};
use crate::cyclo::Scalar;
use crate::error::{Error, Result};
use crate::opalg::{Atom, LazyOperator, SpaceSignature, WindowBasis};
use crate::passage::to_q_commutative;
use crate::phase::{Phase, QMatrix};
use crate::smatrix::SMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixtureName {
    #[serde(rename = "rq-mz")]
    RqMz,
    #[serde(rename = "rqmz-mz")]
    RqmzMz,
    #[serde(rename = "bidisk")]
    Bidisk,
    #[serde(rename = "bidisk-restricted")]
    BidiskRestricted,
    #[serde(rename = "no-q-2x2")]
    NoQ2x2,
    #[serde(rename = "tuple-d")]
    TupleD,
}

impl FixtureName {
    pub const ALL: [FixtureName; 6] = [
        FixtureName::RqMz,
        FixtureName::RqmzMz,
        FixtureName::Bidisk,
        FixtureName::BidiskRestricted,
        FixtureName::NoQ2x2,
        FixtureName::TupleD,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FixtureName::RqMz => "rq-mz",
            FixtureName::RqmzMz => "rqmz-mz",
            FixtureName::Bidisk => "bidisk",
            FixtureName::BidiskRestricted => "bidisk-restricted",
            FixtureName::NoQ2x2 => "no-q-2x2",
            FixtureName::TupleD => "tuple-d",
        }
    }
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FixtureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FixtureName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| Error::UnknownFixture(s.to_string()))
    }
}

/// Coefficient pattern of `V*ⁿ` on the example shifts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauLaw {
    /// Degree-`n` coefficient `q̄^{y_n} a_n`.
    Triangular,
    /// Coefficient pair `q̄^{2y_n}(a_{2n}, q̄^{n+1} a_{2n+1})`.
    DoubledTriangular,
}

/// What the pipelines should report on a fixture.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Expected {
    /// False when no unimodular `q` makes the pair q-commute.
    pub q_exists: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect_dims: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doubly_q: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<SMatrix>,
    #[serde(rename = "U", skip_serializing_if = "Option::is_none")]
    pub u: Option<SMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_law: Option<TauLaw>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

/// Operators of a named example on its window, with expectations.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: FixtureName,
    pub q: Phase,
    pub q_matrix: QMatrix,
    pub ops: Vec<LazyOperator>,
    pub cap: usize,
    /// Window basis when the example lives on a proper subspace.
    pub basis: Option<Arc<WindowBasis>>,
    pub expected: Expected,
}

impl Fixture {
    pub fn signature(&self) -> SpaceSignature {
        self.ops[0].signature()
    }

    pub fn window_basis(&self) -> Arc<WindowBasis> {
        self.basis.clone().unwrap_or_else(|| Arc::new(WindowBasis::new(self.signature(), self.cap)))
    }
}

/// The displayed `U` in the source of the second example has a `0` where
/// the mapping it describes forces a `1`.
pub const SECOND_EXAMPLE_U_NOTE: &str =
    "U comes from the map (a0, conj(q) a1) -> (a1, a0), which is [[0,q],[1,0]]; the variant [[0,q],[0,1]] is not unitary";

/// Builds a named example. `d` is only used by `tuple-d`.
pub fn example(name: FixtureName, q: Phase, cap: usize, d: usize) -> Result<Fixture> {
    let word = |sig, atoms| LazyOperator::word(sig, atoms);
    let h1 = SpaceSignature::hardy(1);
    let h2 = SpaceSignature::hardy(2);
    let z = Scalar::zero;
    let fixture = |ops, expected| Fixture { name, q, q_matrix: QMatrix::pair(q), ops, cap, basis: None, expected };
    Ok(match name {
        FixtureName::RqMz => fixture(
            vec![word(h1, vec![Atom::Rot(q)])?, word(h1, vec![Atom::Shift(0)])?],
            Expected {
                q_exists: true,
                defect_dims: Some((0, 1)),
                doubly_q: Some(true),
                p: Some(SMatrix::zeros(1, 1)),
                u: Some(SMatrix::identity(1)),
                tau_law: Some(TauLaw::Triangular),
                ..Expected::default()
            },
        ),
        FixtureName::RqmzMz => fixture(
            vec![word(h1, vec![Atom::Rot(q), Atom::Shift(0)])?, word(h1, vec![Atom::Shift(0)])?],
            Expected {
                q_exists: true,
                defect_dims: Some((1, 1)),
                doubly_q: Some(false),
                witness: Some("1".into()),
                p: Some(SMatrix::diagonal(vec![Scalar::one(), z()])),
                u: Some(SMatrix::from_rows(vec![vec![z(), q.to_scalar()], vec![Scalar::one(), z()]])?),
                tau_law: Some(TauLaw::DoubledTriangular),
                notes: vec![SECOND_EXAMPLE_U_NOTE.into()],
            },
        ),
        FixtureName::Bidisk => fixture(
            vec![word(h2, vec![Atom::Rot(q), Atom::Shift(0)])?, word(h2, vec![Atom::Shift(1)])?],
            Expected { q_exists: true, doubly_q: Some(true), ..Expected::default() },
        ),
        FixtureName::BidiskRestricted => {
            let proj = LazyOperator::identity(h2).sub(&LazyOperator::constants_projection(h2)?)?;
            let compress = |v: LazyOperator| -> Result<LazyOperator> { proj.compose(&v)?.compose(&proj) };
            let ops = vec![
                compress(word(h2, vec![Atom::Rot(q), Atom::Shift(0)])?)?,
                compress(word(h2, vec![Atom::Shift(1)])?)?,
            ];
            let basis = WindowBasis::new(h2, cap).restricted(|k| k.degree() != Some(0));
            Fixture {
                basis: Some(Arc::new(basis)),
                ..fixture(
                    ops,
                    Expected {
                        q_exists: true,
                        doubly_q: Some(false),
                        witness: Some("z1".into()),
                        ..Expected::default()
                    },
                )
            }
        }
        FixtureName::NoQ2x2 => {
            let sig = SpaceSignature::new(1, 0, 2);
            let v1 = SMatrix::diagonal(vec![Scalar::one(), Scalar::root(1, 4)]);
            let s = Scalar::inv_sqrt2();
            let v2 = SMatrix::from_rows(vec![vec![s.clone(), s.clone()], vec![s.clone(), -&s]])?;
            fixture(
                vec![
                    LazyOperator::atom(sig, Atom::Ku(Arc::new(v1)))?,
                    LazyOperator::atom(sig, Atom::Ku(Arc::new(v2)))?,
                ],
                Expected { q_exists: false, ..Expected::default() },
            )
        }
        FixtureName::TupleD => {
            if d < 2 {
                return Err(Error::InvalidArgument("tuple-d needs d ≥ 2".into()));
            }
            let sig = SpaceSignature::hardy(d);
            let ops = (0..d)
                .map(|j| word(sig, vec![Atom::Rot(q.pow((d - 1 - j) as i64)), Atom::Shift(j)]))
                .collect::<Result<Vec<_>>>()?;
            Fixture { q_matrix: QMatrix::power_convention(q, d), ..fixture(ops, Expected { q_exists: true, ..Expected::default() }) }
        }
    })
}

/// Parameters of a random model tuple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomTupleSpec {
    pub fiber_dim: usize,
    /// Dimension of the unitary summand; a multiple of the order of `q`.
    pub ku_dim: usize,
    pub q: Phase,
    /// Forces `U` to commute with `P`, making the model doubly q-commutative.
    pub doubly: bool,
}

impl RandomTupleSpec {
    pub fn new(fiber_dim: usize, ku_dim: usize, q: Phase) -> Self {
        RandomTupleSpec { fiber_dim, ku_dim, q, doubly: false }
    }

    pub fn doubly(self) -> Self {
        RandomTupleSpec { doubly: true, ..self }
    }
}

/// Exact unitary: a random product of Hadamard gates on coordinate pairs,
/// eighth-root phases and transpositions.
pub fn random_exact_unitary(n: usize, rng: &mut impl Rng) -> SMatrix {
    let mut u = SMatrix::identity(n);
    if n == 0 {
        return u;
    }
    let s = Scalar::inv_sqrt2();
    for _ in 0..3 * n {
        let mut gate = SMatrix::identity(n);
        match rng.gen_range(0..3) {
            0 if n >= 2 => {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(rng);
                let (i, j) = (idx[0], idx[1]);
                gate.set(i, i, s.clone());
                gate.set(i, j, s.clone());
                gate.set(j, i, s.clone());
                gate.set(j, j, -&s);
            }
            1 if n >= 2 => {
                let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
                if i != j {
                    gate.set(i, i, Scalar::zero());
                    gate.set(j, j, Scalar::zero());
                    gate.set(i, j, Scalar::one());
                    gate.set(j, i, Scalar::one());
                }
            }
            _ => {
                let i = rng.gen_range(0..n);
                gate.set(i, i, Scalar::root(rng.gen_range(0..8), 8));
            }
        }
        u = gate.mul(&u);
    }
    u
}

/// Random first-shape tuple: diagonal `P` of random rank, exact random `U`
/// and the clock/shift pair on `K_u`.
pub fn random_bcl_tuple(spec: RandomTupleSpec, seed: u64) -> Result<BCLTuple> {
    let order = spec.q.order().ok_or(Error::IrrationalPhase)? as usize;
    if spec.ku_dim > 0 && !spec.ku_dim.is_multiple_of(order) {
        return Err(Error::InvalidTuple(format!(
            "q has order {order}, which does not divide dim K_u = {}",
            spec.ku_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = spec.fiber_dim;
    let mask: Vec<bool> = (0..f).map(|_| rng.gen_bool(0.5)).collect();
    let p = SMatrix::diagonal(mask.iter().map(|&b| if b { Scalar::one() } else { Scalar::zero() }).collect());
    let u = if spec.doubly {
        // Unitary on each P-block separately, so U commutes with P.
        let mut u = SMatrix::zeros(f, f);
        for side in [true, false] {
            let idx: Vec<usize> = (0..f).filter(|&i| mask[i] == side).collect();
            let block = random_exact_unitary(idx.len(), &mut rng);
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    u.set(i, j, block.get(a, b).clone());
                }
            }
        }
        u
    } else {
        random_exact_unitary(f, &mut rng)
    };
    let (w1, w2) = if spec.ku_dim > 0 {
        weyl_pair(spec.q, spec.ku_dim)?
    } else {
        (SMatrix::zeros(0, 0), SMatrix::zeros(0, 0))
    };
    BCLTuple::new(spec.q, p, u, w1, w2, Flavor::First)
}

/// A random tuple together with its model pair.
pub fn random_bcl_pair(spec: RandomTupleSpec, seed: u64) -> Result<(BCLTuple, LazyOperator, LazyOperator)> {
    let t = random_bcl_tuple(spec, seed)?;
    let (v1, v2) = bcl::build_model(&t)?;
    Ok((t, v1, v2))
}

/// A named doubly q-commutative pair of shifts of joint multiplicity one.
#[derive(Clone, Debug)]
pub struct ShiftPairFixture {
    pub label: String,
    pub q: Phase,
    pub v1: LazyOperator,
    pub v2: LazyOperator,
}

/// Ten doubly q-commutative shift pairs on `H²(𝔻²)`: the rotated bidisk
/// shifts, a single-variable rotation variant, and commuting shifts carried
/// to q-commuting ones.
pub fn shift_pair_fixtures(cap: usize) -> Result<Vec<ShiftPairFixture>> {
    let sig = SpaceSignature::hardy(2);
    let mz1 = LazyOperator::atom(sig, Atom::Shift(0))?;
    let mz2 = LazyOperator::atom(sig, Atom::Shift(1))?;
    let mut out = Vec::new();
    for (p, r) in [(0, 1), (1, 8), (1, 3), (2, 5)] {
        let q = Phase::rational(p, r);
        out.push(ShiftPairFixture {
            label: format!("bidisk q={q}"),
            q,
            v1: LazyOperator::word(sig, vec![Atom::Rot(q), Atom::Shift(0)])?,
            v2: mz2.clone(),
        });
    }
    for (p, r) in [(1, 8), (1, 6), (3, 7)] {
        let q = Phase::rational(p, r);
        out.push(ShiftPairFixture {
            label: format!("variable-rotation q={q}"),
            q,
            v1: LazyOperator::word(sig, vec![Atom::Shift(0), Atom::RotVar(1, q)])?,
            v2: mz2.clone(),
        });
    }
    for (p, r) in [(1, 8), (1, 4), (1, 5)] {
        let q = Phase::rational(p, r);
        let (v1, v2) = to_q_commutative(&mz1, &mz2, q, cap)?;
        out.push(ShiftPairFixture { label: format!("passage q={q}"), q, v1, v2 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opalg::equal_on_window;
    use crate::passage::q_relation;

    #[test]
    fn names_round_trip() {
        for n in FixtureName::ALL {
            assert_eq!(n.as_str().parse::<FixtureName>().unwrap(), n);
        }
        assert!(matches!("annulus".parse::<FixtureName>(), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn pair_examples_q_commute_exactly() {
        let q = Phase::rational(1, 8);
        for name in [FixtureName::RqMz, FixtureName::RqmzMz, FixtureName::Bidisk] {
            let fx = example(name, q, 8, 2).unwrap();
            let cmp = q_relation(&fx.ops[0], &fx.ops[1], q, 8, 0.0).unwrap();
            assert!(cmp.passed() && cmp.exact, "{name}: {cmp:?}");
        }
    }

    #[test]
    fn random_tuples_are_deterministic() {
        let spec = RandomTupleSpec::new(4, 8, Phase::rational(1, 4));
        let a = random_bcl_tuple(spec, 7).unwrap();
        let b = random_bcl_tuple(spec, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_exact());
    }

    #[test]
    fn clock_and_shift_on_four_dimensions() {
        let q = Phase::rational(1, 4);
        let t = random_bcl_tuple(RandomTupleSpec::new(0, 4, q), 1).unwrap();
        let lhs = t.w1.mul(&t.w2);
        let rhs = t.w2.mul(&t.w1).scale(&q.to_scalar());
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn ku_dimension_must_carry_the_order() {
        let spec = RandomTupleSpec::new(2, 6, Phase::rational(1, 4));
        assert!(matches!(random_bcl_tuple(spec, 0), Err(Error::InvalidTuple(_))));
    }

    #[test]
    fn degenerate_parameters_give_the_first_example_up_to_phase() {
        // F = ℂ, P = 0, U = 1: V₁ = R_q, V₂ = R_q̄ M_z; the example's M_z differs by R_q̄.
        let q = Phase::rational(1, 8);
        let t = BCLTuple::new(q, SMatrix::zeros(1, 1), SMatrix::identity(1), SMatrix::zeros(0, 0), SMatrix::zeros(0, 0), Flavor::First)
            .unwrap();
        let (v1, v2) = bcl::build_model(&t).unwrap();
        let fx = example(FixtureName::RqMz, q, 8, 2).unwrap();
        let window = crate::graded::TruncationWindow::new(8, 1).unwrap();
        let expected_v2 = LazyOperator::atom(v2.signature(), Atom::Rot(q.conj())).unwrap().compose(&fx.ops[1]).unwrap();
        assert!(equal_on_window(&v1, &fx.ops[0], &window, 0.0).unwrap().passed());
        assert!(equal_on_window(&v2, &expected_v2, &window, 0.0).unwrap().passed());
    }

    #[test]
    fn doubly_random_tuples_have_no_obstruction() {
        for seed in 0..10 {
            let t = random_bcl_tuple(RandomTupleSpec::new(5, 0, Phase::rational(1, 3)).doubly(), seed).unwrap();
            assert_eq!(bcl::doubly_q_obstruction(&t), 0.0);
        }
    }

    #[test]
    fn ten_shift_pairs() {
        let fx = shift_pair_fixtures(6).unwrap();
        assert_eq!(fx.len(), 10);
        for f in &fx {
            let cmp = q_relation(&f.v1, &f.v2, f.q, 6, 0.0).unwrap();
            assert!(cmp.passed(), "{}: {cmp:?}", f.label);
        }
    }
}
