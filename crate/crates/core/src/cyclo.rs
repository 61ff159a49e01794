//! Exact arithmetic in cyclotomic fields, and the [`Scalar`] type that falls
//! back to floating point when exactness is unavailable.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Zero};

/// Rational coefficient type used inside [`Cyclo`].
pub type Rational = Ratio<i128>;

thread_local! {
    static CYCLOTOMIC: RefCell<HashMap<u32, Rc<Vec<i128>>>> = RefCell::new(HashMap::new());
}

/// Coefficients (lowest degree first) of the n-th cyclotomic polynomial.
fn cyclotomic_poly(n: u32) -> Rc<Vec<i128>> {
    if let Some(p) = CYCLOTOMIC.with(|c| c.borrow().get(&n).cloned()) {
        return p;
    }
    // x^n - 1 divided by every Φ_d with d | n, d < n.
    let mut num = vec![0i128; n as usize + 1];
    num[0] = -1;
    num[n as usize] = 1;
    for d in 1..n {
        if n.is_multiple_of(d) {
            num = poly_div_exact(&num, &cyclotomic_poly(d));
        }
    }
    let p = Rc::new(num);
    CYCLOTOMIC.with(|c| c.borrow_mut().insert(n, p.clone()));
    p
}

fn poly_div_exact(num: &[i128], den: &[i128]) -> Vec<i128> {
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let qlen = num.len() - dd;
    let mut quot = vec![0i128; qlen];
    for k in (0..qlen).rev() {
        let c = rem[k + dd];
        quot[k] = c;
        if c != 0 {
            for (j, &dj) in den.iter().enumerate() {
                rem[k + j] -= c * dj;
            }
        }
    }
    quot
}

/// An element of ℚ(ζ_order) stored in the power basis 1, ζ, …, ζ^{φ(order)-1}.
///
/// The representation is canonical for a fixed order, so equality after
/// lifting both operands to a common order is structural.
#[derive(Clone, Debug)]
pub struct Cyclo {
    order: u32,
    coeffs: Vec<Rational>,
}

impl Cyclo {
    pub fn zero() -> Self {
        Self::rational(Rational::zero())
    }

    pub fn one() -> Self {
        Self::rational(Rational::one())
    }

    pub fn rational(value: Rational) -> Self {
        Cyclo { order: 1, coeffs: vec![value] }
    }

    pub fn integer(value: i64) -> Self {
        Self::rational(Rational::from_integer(value as i128))
    }

    /// ζ_r^p = exp(2πi p / r).
    pub fn root(p: i64, r: u32) -> Self {
        assert!(r >= 1, "root of unity order must be positive");
        let mut raw = vec![Rational::zero(); r as usize];
        raw[p.rem_euclid(r as i64) as usize] = Rational::one();
        Self::reduce(r, raw)
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    fn reduce(order: u32, mut raw: Vec<Rational>) -> Self {
        let phi = cyclotomic_poly(order);
        let deg = phi.len() - 1;
        for k in (deg..raw.len()).rev() {
            let c = raw[k];
            if !c.is_zero() {
                for (j, &pj) in phi.iter().enumerate().take(deg) {
                    raw[k - deg + j] -= c * Rational::from_integer(pj);
                }
                raw[k] = Rational::zero();
            }
        }
        raw.truncate(deg);
        Cyclo { order, coeffs: raw }
    }

    fn lift(&self, order: u32) -> Self {
        if order == self.order {
            return self.clone();
        }
        let step = (order / self.order) as usize;
        let mut raw = vec![Rational::zero(); order as usize];
        for (k, c) in self.coeffs.iter().enumerate() {
            raw[k * step] += *c;
        }
        Self::reduce(order, raw)
    }

    fn common(&self, other: &Self) -> (Self, Self) {
        let order = self.order.lcm(&other.order);
        (self.lift(order), other.lift(order))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn conj(&self) -> Self {
        let n = self.order as usize;
        let mut raw = vec![Rational::zero(); n];
        for (k, c) in self.coeffs.iter().enumerate() {
            raw[(n - k) % n] += *c;
        }
        Self::reduce(self.order, raw)
    }

    pub fn to_complex(&self) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| {
                let v = *c.numer() as f64 / *c.denom() as f64;
                unit_root(k as u64, self.order as u64) * v
            })
            .sum()
    }

    fn add_impl(&self, other: &Self, sign: i128) -> Self {
        let (a, b) = self.common(other);
        let s = Rational::from_integer(sign);
        let coeffs = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| *x + s * *y).collect();
        Cyclo { order: a.order, coeffs }
    }

    fn mul_impl(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let (a, b) = self.common(other);
        let n = a.order as usize;
        let mut raw = vec![Rational::zero(); n];
        for (i, x) in a.coeffs.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            for (j, y) in b.coeffs.iter().enumerate().filter(|(_, y)| !y.is_zero()) {
                raw[(i + j) % n] += *x * *y;
            }
        }
        Self::reduce(a.order, raw)
    }
}

impl PartialEq for Cyclo {
    fn eq(&self, other: &Self) -> bool {
        self.add_impl(other, -1).is_zero()
    }
}

impl fmt::Display for Cyclo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate().filter(|(_, c)| !c.is_zero()) {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if k == 0 {
                write!(f, "{c}")?;
            } else {
                write!(f, "({c})ζ{}^{k}", self.order)?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// A complex scalar that stays exact while every ingredient is a rational
/// combination of roots of unity.
#[derive(Clone, Debug)]
pub enum Scalar {
    Exact(Cyclo),
    Approx(Complex64),
}

impl Scalar {
    pub fn zero() -> Self {
        Scalar::Exact(Cyclo::zero())
    }

    pub fn one() -> Self {
        Scalar::Exact(Cyclo::one())
    }

    pub fn integer(v: i64) -> Self {
        Scalar::Exact(Cyclo::integer(v))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Scalar::Exact(Cyclo::rational(Rational::new(num as i128, den as i128)))
    }

    pub fn root(p: i64, r: u32) -> Self {
        Scalar::Exact(Cyclo::root(p, r))
    }

    /// 1/√2, which lies in ℚ(ζ₈).
    pub fn inv_sqrt2() -> Self {
        let half = Scalar::ratio(1, 2);
        &half * &(&Scalar::root(1, 8) + &Scalar::root(7, 8))
    }

    pub fn approx(re: f64, im: f64) -> Self {
        Scalar::Approx(Complex64::new(re, im))
    }

    /// Rounds `z` to an exact value `m·ζ` when one lies within `tol`, with
    /// `m ∈ {0, 1, 1/√2, 1/2}` and `ζ` a root of unity of order at most 64.
    pub fn snap(z: Complex64, tol: f64) -> Self {
        if z.norm() <= tol {
            return Scalar::zero();
        }
        let mags = [(1.0, Scalar::one()), (std::f64::consts::FRAC_1_SQRT_2, Scalar::inv_sqrt2()), (0.5, Scalar::ratio(1, 2))];
        let turn = z.arg() / std::f64::consts::TAU;
        for (m, exact_m) in &mags {
            if (z.norm() - m).abs() > tol {
                continue;
            }
            for r in 1..=64u32 {
                let p = (turn * f64::from(r)).round() as i64;
                let cand = &Scalar::root(p.rem_euclid(i64::from(r)), r) * exact_m;
                if (cand.to_c64() - z).norm() <= tol {
                    return cand;
                }
            }
        }
        Scalar::Approx(z)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Scalar::Exact(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(c) => c.is_zero(),
            Scalar::Approx(z) => z.re == 0.0 && z.im == 0.0,
        }
    }

    pub fn to_c64(&self) -> Complex64 {
        match self {
            Scalar::Exact(c) => c.to_complex(),
            Scalar::Approx(z) => *z,
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_c64().norm()
    }

    pub fn conj(&self) -> Self {
        match self {
            Scalar::Exact(c) => Scalar::Exact(c.conj()),
            Scalar::Approx(z) => Scalar::Approx(z.conj()),
        }
    }
}

impl From<Complex64> for Scalar {
    fn from(z: Complex64) -> Self {
        Scalar::Approx(z)
    }
}

impl PartialEq for Scalar {
    /// Exact comparison when both sides are exact, bitwise otherwise.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a == b,
            _ => self.to_c64() == other.to_c64(),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(c) => write!(f, "{c}"),
            Scalar::Approx(z) => write!(f, "{z}"),
        }
    }
}

impl Add for &Scalar {
    type Output = Scalar;
    fn add(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.add_impl(b, 1)),
            _ => Scalar::Approx(self.to_c64() + rhs.to_c64()),
        }
    }
}

impl Sub for &Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.add_impl(b, -1)),
            _ => Scalar::Approx(self.to_c64() - rhs.to_c64()),
        }
    }
}

impl Mul for &Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &Scalar) -> Scalar {
        match (self, rhs) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(a.mul_impl(b)),
            _ => Scalar::Approx(self.to_c64() * rhs.to_c64()),
        }
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        match self {
            Scalar::Exact(a) => Scalar::Exact(Cyclo::zero().add_impl(a, -1)),
            Scalar::Approx(z) => Scalar::Approx(-z),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Scalar {
            type Output = Scalar;
            fn $m(self, rhs: Scalar) -> Scalar {
                (&self).$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping_recovers_exact_values() {
        let z = Scalar::root(3, 8).to_c64() * std::f64::consts::FRAC_1_SQRT_2;
        let s = Scalar::snap(z + Complex64::new(1e-14, 0.0), 1e-12);
        assert!(s.is_exact());
        assert_eq!(s, &Scalar::root(3, 8) * &Scalar::inv_sqrt2());
        assert!(Scalar::snap(Complex64::new(1e-13, 0.0), 1e-12).is_zero());
        assert!(!Scalar::snap(Complex64::new(0.3, 0.1), 1e-12).is_exact());
    }

    #[test]
    fn cyclotomic_polynomials_match_known_values() {
        assert_eq!(*cyclotomic_poly(1), vec![-1, 1]);
        assert_eq!(*cyclotomic_poly(4), vec![1, 0, 1]);
        assert_eq!(*cyclotomic_poly(8), vec![1, 0, 0, 0, 1]);
        assert_eq!(*cyclotomic_poly(6), vec![1, -1, 1]);
        assert_eq!(*cyclotomic_poly(12), vec![1, 0, -1, 0, 1]);
    }

    #[test]
    fn roots_multiply_by_exponent_addition() {
        let a = Cyclo::root(3, 8);
        let b = Cyclo::root(7, 8);
        assert_eq!(a.mul_impl(&b), Cyclo::root(2, 8));
        assert_eq!(Cyclo::root(2, 8), Cyclo::root(1, 4));
        assert_eq!(Cyclo::root(4, 8), Cyclo::integer(-1));
    }

    #[test]
    fn mixed_orders_lift_to_common_field() {
        let a = Cyclo::root(1, 3);
        let b = Cyclo::root(1, 4);
        let prod = a.mul_impl(&b);
        assert_eq!(prod, Cyclo::root(7, 12));
        let z = prod.to_complex();
        let expect = Complex64::from_polar(1.0, TAU * 7.0 / 12.0);
        assert!((z - expect).norm() < 1e-15);
    }

    #[test]
    fn sum_of_all_roots_vanishes() {
        let mut s = Cyclo::zero();
        for k in 0..6 {
            s = s.add_impl(&Cyclo::root(k, 6), 1);
        }
        assert!(s.is_zero());
    }

    #[test]
    fn inverse_sqrt_two_squares_to_half() {
        let h = Scalar::inv_sqrt2();
        assert_eq!(&h * &h, Scalar::ratio(1, 2));
        assert!((h.to_c64().re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn conjugation_inverts_roots() {
        assert_eq!(Cyclo::root(3, 7).conj(), Cyclo::root(4, 7));
        let i = Scalar::root(1, 4);
        assert_eq!(&i * &i.conj(), Scalar::one());
    }

    #[test]
    fn approximate_contaminates() {
        let s = &Scalar::one() + &Scalar::approx(0.5, 0.0);
        assert!(!s.is_exact());
        assert_eq!(s.to_c64(), Complex64::new(1.5, 0.0));
    }
}

/// `exp(2πi k/n)`, exact at multiples of a quarter turn.
fn unit_root(k: u64, n: u64) -> Complex64 {
    let k = k % n;
    if (4 * k).is_multiple_of(n) {
        return match 4 * k / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    Complex64::from_polar(1.0, TAU * k as f64 / n as f64)
}
