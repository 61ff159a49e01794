//! Unimodular phases, q-matrices and the phase exponents of product powers.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use num_integer::Integer;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cyclo::Scalar;
use crate::error::{Error, Result};

/// Tolerance for comparing phases given as raw angles.
pub const ANGLE_TOL: f64 = 1e-12;

/// A unimodular complex number.
///
/// Rational rotations `exp(2πi p/r)` are kept as reduced fractions so that
/// products and powers are exact; anything else is a raw angle.
#[derive(Clone, Copy, Debug)]
pub enum Phase {
    Rational { num: i64, order: u32 },
    Angle(f64),
}

impl Phase {
    pub fn one() -> Self {
        Phase::Rational { num: 0, order: 1 }
    }

    /// `exp(2πi p/r)`, reduced to lowest terms with `0 ≤ p < r`.
    pub fn rational(p: i64, r: u32) -> Self {
        assert!(r >= 1, "rotation order must be positive");
        let p = p.rem_euclid(r as i64);
        let g = p.gcd(&(r as i64)).max(1);
        Phase::Rational { num: p / g, order: (r as i64 / g) as u32 }
    }

    pub fn angle(theta: f64) -> Self {
        Phase::Angle(theta.rem_euclid(TAU))
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, Phase::Rational { .. })
    }

    /// Order of a rational rotation (1 for the identity).
    pub fn order(&self) -> Option<u32> {
        match self {
            Phase::Rational { order, .. } => Some(*order),
            Phase::Angle(_) => None,
        }
    }

    pub fn theta(&self) -> f64 {
        match *self {
            Phase::Rational { num, order } => TAU * num as f64 / order as f64,
            Phase::Angle(t) => t,
        }
    }

    pub fn value(&self) -> Complex64 {
        match *self {
            Phase::Rational { num, order } => {
                // Quarter turns are exact; other angles go through sin/cos.
                match (4 * num).checked_rem(order as i64) {
                    Some(0) => match 4 * num / order as i64 {
                        0 => Complex64::new(1.0, 0.0),
                        1 => Complex64::new(0.0, 1.0),
                        2 => Complex64::new(-1.0, 0.0),
                        _ => Complex64::new(0.0, -1.0),
                    },
                    _ => Complex64::from_polar(1.0, self.theta()),
                }
            }
            Phase::Angle(t) => Complex64::from_polar(1.0, t),
        }
    }

    pub fn to_scalar(&self) -> Scalar {
        match *self {
            Phase::Rational { num, order } => Scalar::root(num, order),
            Phase::Angle(_) => Scalar::Approx(self.value()),
        }
    }

    pub fn pow(&self, k: i64) -> Self {
        match *self {
            Phase::Rational { num, order } => {
                let e = (num as i128 * k as i128).rem_euclid(order as i128);
                Phase::rational(e as i64, order)
            }
            Phase::Angle(t) => Phase::angle(t * k as f64),
        }
    }

    pub fn mul(&self, other: &Phase) -> Self {
        match (*self, *other) {
            (Phase::Rational { num: a, order: r }, Phase::Rational { num: b, order: s }) => {
                let l = r.lcm(&s);
                let e = a as i128 * (l / r) as i128 + b as i128 * (l / s) as i128;
                Phase::rational(e.rem_euclid(l as i128) as i64, l)
            }
            _ => Phase::angle(self.theta() + other.theta()),
        }
    }

    pub fn conj(&self) -> Self {
        self.pow(-1)
    }

    pub fn is_one(&self) -> bool {
        *self == Phase::one()
    }
}

impl PartialEq for Phase {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Phase::Rational { num: a, order: r }, Phase::Rational { num: b, order: s }) => {
                a == b && r == s
            }
            _ => (self.value() - other.value()).norm() < ANGLE_TOL,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Rational { num, order } => write!(f, "{num}/{order}"),
            Phase::Angle(t) => write!(f, "rad:{t}"),
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::PhaseSyntax(s.to_string());
        if let Some(rest) = s.strip_prefix("rad:") {
            let t: f64 = rest.trim().parse().map_err(|_| bad())?;
            if !t.is_finite() {
                return Err(bad());
            }
            return Ok(Phase::angle(t));
        }
        let (p, r) = s.split_once('/').ok_or_else(bad)?;
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let r: u32 = r.trim().parse().map_err(|_| bad())?;
        if r == 0 {
            return Err(bad());
        }
        Ok(Phase::rational(p, r))
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `q^k`.
pub fn phase_pow(q: &Phase, k: i64) -> Phase {
    q.pow(k)
}

/// The pair `(x_n, y_n)` from the recursions `x_1 = 0, x_n = x_{n-1} + n - 1`
/// and `y_1 = 1, y_n = y_{n-1} + n`.
pub fn xy_sequences(n: u64) -> Result<(u64, u64)> {
    if n < 1 {
        return Err(Error::InvalidArgument("xy_sequences needs n >= 1".into()));
    }
    let (mut x, mut y) = (0u64, 1u64);
    for k in 2..=n {
        x += k - 1;
        y += k;
    }
    Ok((x, y))
}

/// Pairwise commutation phases of a d-tuple: `V_i V_j = q(i,j) V_j V_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QMatrix {
    d: usize,
    entries: Vec<Vec<Phase>>,
}

impl QMatrix {
    pub fn new(entries: Vec<Vec<Phase>>) -> Result<Self> {
        let m = QMatrix { d: entries.len(), entries };
        m.validate()?;
        Ok(m)
    }

    /// The convention `q(i,j) = q^{j-i}`.
    pub fn power_convention(q: Phase, d: usize) -> Self {
        let entries = (0..d)
            .map(|i| (0..d).map(|j| q.pow(j as i64 - i as i64)).collect())
            .collect();
        QMatrix { d, entries }
    }

    /// The pair matrix with `q(1,2) = q`.
    pub fn pair(q: Phase) -> Self {
        QMatrix { d: 2, entries: vec![vec![Phase::one(), q], vec![q.conj(), Phase::one()]] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.iter().any(|row| row.len() != self.d) {
            return Err(Error::InvalidQMatrix("matrix is not square".into()));
        }
        for i in 0..self.d {
            if !self.entries[i][i].is_one() {
                return Err(Error::InvalidQMatrix(format!("q({0},{0}) != 1", i + 1)));
            }
            for j in 0..self.d {
                if self.entries[i][j] != self.entries[j][i].conj() {
                    return Err(Error::InvalidQMatrix(format!(
                        "q({},{}) is not the conjugate of q({},{})",
                        i + 1,
                        j + 1,
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `q(i,j)` with zero-based indices.
    pub fn get(&self, i: usize, j: usize) -> Phase {
        self.entries[i][j]
    }

    pub fn is_exact(&self) -> bool {
        self.entries.iter().flatten().all(Phase::is_rational)
    }
}

/// `q_i = ∏_j q(i,j)` for the zero-based index `i`.
pub fn qi_product(q: &QMatrix, i: usize) -> Result<Phase> {
    q.validate()?;
    if i >= q.dim() {
        return Err(Error::IndexOutOfRange { index: i, dim: q.dim() });
    }
    Ok((0..q.dim()).fold(Phase::one(), |acc, j| acc.mul(&q.get(i, j))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn quarter_turn_squared_is_minus_one() {
        let q = Phase::rational(1, 4);
        assert_eq!(phase_pow(&q, 2).value(), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn zeroth_power_is_one() {
        assert!(phase_pow(&Phase::rational(3, 7), 0).is_one());
        assert!(phase_pow(&Phase::angle(0.3), 0).value().re == 1.0);
    }

    #[test]
    fn fifth_power_of_cube_root() {
        // Oracle: direct complex exponentiation.
        let q = Phase::rational(1, 3);
        let direct = q.value().powi(5);
        let p = phase_pow(&q, 5);
        assert_eq!(p, Phase::rational(2, 3));
        assert!(close(p.value(), direct, 1e-14));
    }

    #[test]
    fn xy_small_values() {
        assert_eq!(xy_sequences(1).unwrap(), (0, 1));
        assert_eq!(xy_sequences(2).unwrap(), (1, 3));
        assert_eq!(xy_sequences(20).unwrap(), (190, 210));
        assert!(xy_sequences(0).is_err());
    }

    #[test]
    fn qi_of_pair_is_q() {
        let q = Phase::rational(1, 8);
        assert_eq!(qi_product(&QMatrix::pair(q), 0).unwrap(), q);
    }

    #[test]
    fn qi_of_power_convention_middle_index_is_one() {
        let q = Phase::rational(1, 8);
        let m = QMatrix::power_convention(q, 3);
        // Oracle: q^{(1-2)} * q^{0} * q^{(3-2)}.
        let direct = q.pow(-1).mul(&Phase::one()).mul(&q.pow(1));
        assert_eq!(qi_product(&m, 1).unwrap(), direct);
        assert!(direct.is_one());
    }

    #[test]
    fn qi_for_single_variable_is_one() {
        let m = QMatrix::new(vec![vec![Phase::one()]]).unwrap();
        assert!(qi_product(&m, 0).unwrap().is_one());
    }

    #[test]
    fn rejects_nontrivial_diagonal() {
        let q = Phase::rational(1, 5);
        let err = QMatrix::new(vec![vec![q, Phase::one()], vec![Phase::one(), Phase::one()]]);
        assert!(err.is_err());
    }

    #[test]
    fn text_round_trip() {
        for s in ["1/8", "3/4", "0/1"] {
            assert_eq!(s.parse::<Phase>().unwrap().to_string(), s);
        }
        assert_eq!("2/8".parse::<Phase>().unwrap(), Phase::rational(1, 4));
        let a: Phase = "rad:0.5".parse().unwrap();
        assert!((a.theta() - 0.5).abs() < 1e-15);
        assert!("1/0".parse::<Phase>().is_err());
        assert!("half".parse::<Phase>().is_err());
    }

    #[test]
    fn qmatrix_json_shape() {
        let m = QMatrix::power_convention(Phase::rational(1, 8), 2);
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["d"], 2);
        assert_eq!(v["entries"][0][1], "1/8");
        let back: QMatrix = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
