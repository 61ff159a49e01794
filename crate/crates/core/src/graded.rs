//! Monomial indexing and truncation geometry for Hardy spaces of the polydisk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A monomial `z_1^{n_1} ⋯ z_d^{n_d}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GradedIndex(pub Vec<u32>);

impl GradedIndex {
    pub fn constant(d: usize) -> Self {
        GradedIndex(vec![0; d])
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn vars(&self) -> usize {
        self.0.len()
    }

    /// Human-readable form such as `z1^2 z2` or `1`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(j, &e)| if e == 1 { format!("z{}", j + 1) } else { format!("z{}^{}", j + 1, e) })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join(" ")
        }
    }
}

/// Per-variable cap `N` (exponents `< N`) and the band of the operator under test.
///
/// The safe cap `N - band` is an exclusive bound on total degree: a banded
/// operator applied to any monomial of total degree below it stays inside
/// the window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub cap: usize,
    pub band: usize,
}

impl TruncationWindow {
    pub fn new(cap: usize, band: usize) -> Result<Self> {
        let w = TruncationWindow { cap, band };
        if cap == 0 || w.safe_cap() < 1 {
            return Err(Error::InvalidWindow { cap, band });
        }
        Ok(w)
    }

    pub fn safe_cap(&self) -> usize {
        self.cap.saturating_sub(self.band)
    }

    pub fn with_band(&self, band: usize) -> Result<Self> {
        Self::new(self.cap, band)
    }

    pub fn is_safe(&self, index: &GradedIndex) -> bool {
        (index.degree() as usize) < self.safe_cap()
    }
}

/// All monomials in `d` variables with every exponent below `cap`, in graded
/// lexicographic order: by total degree, then lexicographically with larger
/// leading exponents first (`z1^2, z1 z2, z2^2`).
pub fn monomials(d: usize, cap: usize) -> Vec<GradedIndex> {
    if d == 0 {
        return vec![GradedIndex(vec![])];
    }
    let max_deg = d * cap.saturating_sub(1);
    let mut out = Vec::new();
    for deg in 0..=max_deg {
        let mut cur = vec![0u32; d];
        push_degree(&mut out, &mut cur, 0, deg as u32, cap as u32);
    }
    out
}

fn push_degree(out: &mut Vec<GradedIndex>, cur: &mut Vec<u32>, pos: usize, left: u32, cap: u32) {
    let d = cur.len();
    if pos == d - 1 {
        if left < cap {
            cur[pos] = left;
            out.push(GradedIndex(cur.clone()));
        }
        return;
    }
    let hi = left.min(cap - 1);
    for e in (0..=hi).rev() {
        cur[pos] = e;
        push_degree(out, cur, pos + 1, left - e, cap);
    }
    cur[pos] = 0;
}

/// Monomials of total degree at most `max_degree` (no per-variable cap).
pub fn monomials_up_to_degree(d: usize, max_degree: u32) -> Vec<GradedIndex> {
    if d == 0 {
        return vec![GradedIndex(vec![])];
    }
    let mut out = Vec::new();
    for deg in 0..=max_degree {
        let mut cur = vec![0u32; d];
        push_degree(&mut out, &mut cur, 0, deg, deg + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn graded_lex_order_two_variables() {
        let m = monomials(2, 3);
        let labels: Vec<String> = m.iter().map(GradedIndex::label).collect();
        assert_eq!(
            labels,
            ["1", "z1", "z2", "z1^2", "z1 z2", "z2^2", "z1^2 z2", "z1 z2^2", "z1^2 z2^2"]
        );
    }

    #[test]
    fn window_rejects_empty_safe_region() {
        assert!(TruncationWindow::new(3, 3).is_err());
        assert!(TruncationWindow::new(0, 0).is_err());
        let w = TruncationWindow::new(4, 1).unwrap();
        assert_eq!(w.safe_cap(), 3);
        assert!(w.is_safe(&GradedIndex(vec![2])));
        assert!(!w.is_safe(&GradedIndex(vec![3])));
    }

    proptest! {
        #[test]
        fn monomial_count_and_degrees(d in 1usize..4, cap in 1usize..6) {
            let m = monomials(d, cap);
            prop_assert_eq!(m.len(), cap.pow(d as u32));
            for w in m.windows(2) {
                prop_assert!(w[0].degree() <= w[1].degree());
                prop_assert!(w[0] != w[1]);
            }
            for g in &m {
                prop_assert_eq!(g.degree(), g.0.iter().sum::<u32>());
                prop_assert!(g.0.iter().all(|&e| (e as usize) < cap));
            }
        }

        #[test]
        fn degree_bounded_enumeration(d in 1usize..4, deg in 0u32..6) {
            let m = monomials_up_to_degree(d, deg);
            prop_assert!(m.iter().all(|g| g.degree() <= deg));
            // Count is C(deg + d, d).
            let mut c: u64 = 1;
            for k in 0..d as u64 {
                c = c * (deg as u64 + d as u64 - k) / (k + 1);
            }
            prop_assert_eq!(m.len() as u64, c);
        }
    }
}
