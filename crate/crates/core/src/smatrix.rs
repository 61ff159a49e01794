//! Small dense matrices over [`Scalar`], used for fiber and unitary-part data.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cyclo::Scalar;
use crate::error::{Error, Result};

/// Row-major matrix of exact-or-approximate scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct SMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl SMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SMatrix { rows, cols, data: vec![Scalar::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Scalar::one();
        }
        m
    }

    pub fn diagonal(diag: Vec<Scalar>) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in diag.into_iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Scalar>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        Ok(SMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_dmatrix(m: &DMatrix<Complex64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = Scalar::Approx(m[(i, j)]);
            }
        }
        out
    }

    /// Entrywise [`Scalar::snap`].
    pub fn snapped(m: &DMatrix<Complex64>, tol: f64) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.data[i * m.ncols() + j] = Scalar::snap(m[(i, j)], tol);
            }
        }
        out
    }

    /// Snaps the approximate entries only; exact entries are kept as they are.
    pub fn snap_approx(&self, tol: f64) -> Self {
        let data = self
            .data
            .iter()
            .map(|x| match x {
                Scalar::Approx(z) => Scalar::snap(*z, tol),
                exact => exact.clone(),
            })
            .collect();
        SMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn to_dmatrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_c64())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Scalar) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_exact(&self) -> bool {
        self.data.iter().all(Scalar::is_exact)
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        out
    }

    pub fn mul(&self, other: &SMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if b.is_zero() {
                        continue;
                    }
                    let idx = i * other.cols + j;
                    out.data[idx] = &out.data[idx] + &(a * b);
                }
            }
        }
        out
    }

    pub fn add(&self, other: &SMatrix) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SMatrix) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn scale(&self, s: &Scalar) -> Self {
        SMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| s * x).collect() }
    }

    fn zip(&self, other: &SMatrix, f: impl Fn(&Scalar, &Scalar) -> Scalar) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect();
        SMatrix { rows: self.rows, cols: self.cols, data }
    }

    /// Matrix-vector product on a column given as a slice of scalars.
    pub fn apply(&self, v: &[Scalar]) -> Vec<Scalar> {
        (0..self.rows)
            .map(|i| {
                let mut acc = Scalar::zero();
                for (j, x) in v.iter().enumerate() {
                    let a = self.get(i, j);
                    if !a.is_zero() && !x.is_zero() {
                        acc = &acc + &(a * x);
                    }
                }
                acc
            })
            .collect()
    }

    /// Exact equality when both sides are exact; bitwise otherwise.
    pub fn deviation(&self, other: &SMatrix) -> f64 {
        self.sub(other).data.iter().map(Scalar::norm).fold(0.0, f64::max)
    }

    /// Serialisable form: rows of `[re, im]` pairs.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| {
                        let z = self.get(i, j).to_c64();
                        [z.re, z.im]
                    })
                    .collect()
            })
            .collect()
    }

    pub fn from_pairs(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|[re, im]| Scalar::approx(*re, *im)).collect())
                .collect(),
        )
    }
}

impl fmt::Display for SMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Serialize for SMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        SMatrix::from_pairs(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_hadamard_is_unitary() {
        let h = Scalar::inv_sqrt2();
        let m = SMatrix::from_rows(vec![vec![h.clone(), h.clone()], vec![h.clone(), -&h]]).unwrap();
        let g = m.adjoint().mul(&m);
        assert_eq!(g, SMatrix::identity(2));
        assert_eq!(g.deviation(&SMatrix::identity(2)), 0.0);
    }

    #[test]
    fn json_round_trip_is_approximate_but_close() {
        let m = SMatrix::from_rows(vec![vec![Scalar::root(1, 8), Scalar::zero()]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: SMatrix = serde_json::from_str(&s).unwrap();
        assert!(back.deviation(&m) < 1e-15);
        assert!(!back.is_exact());
    }
}
