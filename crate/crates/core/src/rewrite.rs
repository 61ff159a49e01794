//! Normal forms of phase-weighted words in isometric generators `g₁…g_d` and
//! their adjoints, modulo q-commutation (optionally double q-commutation) and
//! `g_i*g_i = 1`.
//!
//! Relations, for `i ≠ j`:
//! - `g_i g_j = q(i,j) g_j g_i` and `g_i* g_j* = q(i,j) g_j* g_i*`;
//! - doubly: `g_j g_i* = q(i,j) g_i* g_j`.
//!
//! Without the doubly relation, plain and starred letters of different
//! generators never pass each other: the normal form sorts every maximal run
//! of plain (or starred) letters by generator index and cancels `g_k*…g_k`
//! across a starred run followed by a plain run. With it, letters of
//! different generators always q-commute, so the normal form groups letters
//! by generator, each group reduced to `g_kᵐ g_k*ⁿ`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opalg::LazyOperator;
use crate::phase::{Phase, QMatrix};

/// `g_{generator+1}` or its adjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter {
    pub generator: usize,
    pub starred: bool,
}

impl Letter {
    pub fn plain(generator: usize) -> Self {
        Letter { generator, starred: false }
    }

    pub fn star(generator: usize) -> Self {
        Letter { generator, starred: true }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}{}", self.generator + 1, if self.starred { "*" } else { "" })
    }
}

/// A phase times a product of letters (leftmost letter is the outermost operator).
#[derive(Clone, Debug, PartialEq)]
pub struct Word {
    pub phase: Phase,
    pub letters: Vec<Letter>,
}

impl Word {
    pub fn new(phase: Phase, letters: Vec<Letter>) -> Self {
        Word { phase, letters }
    }

    pub fn identity() -> Self {
        Word::new(Phase::one(), Vec::new())
    }

    pub fn letter(l: Letter) -> Self {
        Word::new(Phase::one(), vec![l])
    }

    pub fn times(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend(other.letters.iter().copied());
        Word::new(self.phase.mul(&other.phase), letters)
    }

    pub fn pow(&self, k: u32) -> Word {
        (0..k).fold(Word::identity(), |acc, _| acc.times(self))
    }

    pub fn scaled(&self, c: Phase) -> Word {
        Word::new(self.phase.mul(&c), self.letters.clone())
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Largest generator index used, plus one.
    pub fn generators(&self) -> usize {
        self.letters.iter().map(|l| l.generator + 1).max().unwrap_or(0)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if !self.phase.is_one() {
            parts.push(format!("phase:{}", self.phase));
        }
        parts.extend(self.letters.iter().map(Letter::to_string));
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join(" "))
        }
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser { chars: s.chars().collect(), pos: 0 };
        let w = p.sequence()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error("unexpected character"));
        }
        Ok(w)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Grammar: `seq := item*`, `item := atom ('^' n)?`,
/// `atom := 'phase:' p/r | 'g' n '*'? | '(' seq ')'`; whitespace separates items.
struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn error(&self, msg: &str) -> Error {
        let text: String = self.chars.iter().collect();
        Error::WordSyntax(format!("{msg} at offset {} in `{text}`", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn number(&mut self) -> Result<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map_err(|_| self.error("expected a number"))
    }

    fn sequence(&mut self) -> Result<Word> {
        let mut w = Word::identity();
        loop {
            self.skip_ws();
            match self.peek() {
                None | Some(')') => return Ok(w),
                _ => {
                    let item = self.item()?;
                    w = w.times(&item);
                }
            }
        }
    }

    fn item(&mut self) -> Result<Word> {
        let atom = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let k = self.number()?;
            return Ok(atom.pow(k));
        }
        Ok(atom)
    }

    fn atom(&mut self) -> Result<Word> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let w = self.sequence()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(w)
            }
            Some('g') => {
                self.pos += 1;
                let n = self.number()?;
                if n == 0 {
                    return Err(self.error("generators are numbered from 1"));
                }
                let starred = self.peek() == Some('*');
                if starred {
                    self.pos += 1;
                }
                Ok(Word::letter(Letter { generator: n as usize - 1, starred }))
            }
            Some('p') => {
                let rest: String = self.chars[self.pos..].iter().collect();
                let Some(body) = rest.strip_prefix("phase:") else { return Err(self.error("expected `phase:`")) };
                let len: usize = body.chars().take_while(|c| !c.is_whitespace() && *c != ')' && *c != '^').count();
                let text: String = body.chars().take(len).collect();
                let phase: Phase = text.parse()?;
                self.pos += "phase:".len() + len;
                Ok(Word::new(phase, Vec::new()))
            }
            _ => Err(self.error("expected a letter, `phase:` or `(`")),
        }
    }
}

/// Which relations the generators satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationSet {
    #[serde(rename = "Q-COMM")]
    QComm,
    #[serde(rename = "DOUBLY-Q")]
    DoublyQ,
}

/// One applied rewrite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Step {
    pub rule: &'static str,
    pub position: usize,
    pub factor: Phase,
    pub result: String,
}

#[derive(Clone, Copy, Debug)]
enum Move {
    Swap(usize),
    Cancel(usize),
    /// Cancel the starred letter at `.0` against the plain letter at `.1`
    /// across the boundary between a starred run and the plain run after it.
    Across(usize, usize),
}

/// Order in which applicable rewrites are chosen.
#[derive(Clone, Copy, Debug)]
pub enum Strategy {
    Leftmost,
    Random(u64),
}

/// A normal form together with the rewrites that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct Normalized {
    pub word: Word,
    pub trace: Vec<Step>,
}

/// Rewriting engine for a fixed q-matrix and relation set.
#[derive(Clone, Debug)]
pub struct Rewriter {
    q: QMatrix,
    set: RelationSet,
}

impl Rewriter {
    pub fn new(q: QMatrix, set: RelationSet) -> Result<Self> {
        q.validate()?;
        Ok(Rewriter { q, set })
    }

    /// As [`Rewriter::new`], but insists on rational rotations so that every
    /// phase is tracked exactly.
    pub fn exact(q: QMatrix, set: RelationSet) -> Result<Self> {
        if !q.is_exact() {
            return Err(Error::IrrationalPhase);
        }
        Self::new(q, set)
    }

    pub fn relation_set(&self) -> RelationSet {
        self.set
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    fn qij(&self, i: usize, j: usize) -> Phase {
        self.q.get(i, j)
    }

    /// Factor `c` with `a b = c · b a`, if the relations allow the swap.
    fn swap_factor(&self, a: Letter, b: Letter) -> Option<Phase> {
        if a.generator <= b.generator {
            return None;
        }
        let (i, j) = (a.generator, b.generator);
        match (a.starred, b.starred, self.set) {
            (false, false, _) | (true, true, _) => Some(self.qij(i, j)),
            // g_i g_j* = q(j,i) g_j* g_i and g_i* g_j = q(j,i) g_j g_i*.
            (_, _, RelationSet::DoublyQ) => Some(self.qij(j, i)),
            _ => None,
        }
    }

    fn moves(&self, w: &Word) -> Vec<Move> {
        let l = &w.letters;
        let mut out = Vec::new();
        for p in 0..l.len().saturating_sub(1) {
            let (a, b) = (l[p], l[p + 1]);
            if self.swap_factor(a, b).is_some() {
                out.push(Move::Swap(p));
            }
            if a.starred && !b.starred {
                if a.generator == b.generator {
                    out.push(Move::Cancel(p));
                    continue;
                }
                if self.set == RelationSet::DoublyQ {
                    continue;
                }
                // Starred run ending at p, plain run starting at p + 1.
                let s0 = (0..=p).rev().take_while(|&i| l[i].starred).last().unwrap_or(p);
                let t1 = (p + 1..l.len()).take_while(|&i| !l[i].starred).last().unwrap_or(p + 1);
                for (i, letter) in l.iter().enumerate().take(p + 1).skip(s0) {
                    let k = letter.generator;
                    let later = l[i + 1..=p].iter().any(|x| x.generator == k);
                    if later {
                        continue;
                    }
                    if let Some(j) = (p + 1..=t1).find(|&j| l[j].generator == k) {
                        out.push(Move::Across(i, j));
                    }
                }
            }
        }
        out
    }

    fn apply(&self, w: &Word, m: Move) -> (Word, Step) {
        let mut letters = w.letters.clone();
        let (rule, position, factor) = match m {
            Move::Swap(p) => {
                let f = self.swap_factor(letters[p], letters[p + 1]).expect("move was applicable");
                let rule = match (letters[p].starred, letters[p + 1].starred) {
                    (false, false) => "q-swap",
                    (true, true) => "q-swap*",
                    _ => "doubly-swap",
                };
                letters.swap(p, p + 1);
                (rule, p, f)
            }
            Move::Cancel(p) => {
                letters.drain(p..p + 2);
                ("isometry", p, Phase::one())
            }
            Move::Across(i, j) => {
                let k = letters[i].generator;
                let boundary = (i..j).find(|&b| !letters[b + 1].starred).expect("plain run follows");
                let mut f = Phase::one();
                for x in &letters[i + 1..=boundary] {
                    f = f.mul(&self.qij(k, x.generator));
                }
                for x in &letters[boundary + 1..j] {
                    f = f.mul(&self.qij(x.generator, k));
                }
                letters.remove(j);
                letters.remove(i);
                ("isometry-across", i, f)
            }
        };
        let word = Word::new(w.phase.mul(&factor), letters);
        let step = Step { rule, position, factor, result: word.to_string() };
        (word, step)
    }

    pub fn normalize(&self, w: &Word) -> Result<Normalized> {
        self.normalize_with(w, Strategy::Leftmost)
    }

    pub fn normalize_with(&self, w: &Word, strategy: Strategy) -> Result<Normalized> {
        if w.generators() > self.dim() {
            return Err(Error::IndexOutOfRange { index: w.generators() - 1, dim: self.dim() });
        }
        let mut rng = match strategy {
            Strategy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            Strategy::Leftmost => None,
        };
        let mut word = w.clone();
        let mut trace = Vec::new();
        loop {
            let moves = self.moves(&word);
            let chosen = match (&mut rng, moves.first()) {
                (_, None) => break,
                (Some(r), Some(_)) => *moves.choose(r).expect("non-empty"),
                (None, Some(m)) => *m,
            };
            let (next, step) = self.apply(&word, chosen);
            word = next;
            trace.push(step);
        }
        Ok(Normalized { word, trace })
    }

    pub fn prove_identity(&self, lhs: &Word, rhs: &Word) -> Result<Proof> {
        let l = self.normalize(lhs)?;
        let r = self.normalize(rhs)?;
        let holds = l.word == r.word;
        Ok(Proof { holds, lhs: l, rhs: r })
    }
}

/// Outcome of [`Rewriter::prove_identity`].
#[derive(Clone, Debug, Serialize)]
pub struct Proof {
    pub holds: bool,
    pub lhs: Normalized,
    pub rhs: Normalized,
}

/// The operator a word denotes: starred letters become adjoints.
pub fn instantiate(w: &Word, ops: &[LazyOperator]) -> Result<LazyOperator> {
    let sig = ops.first().ok_or_else(|| Error::InvalidArgument("no operators".into()))?.signature();
    let mut factors = Vec::with_capacity(w.len());
    for l in &w.letters {
        let op = ops.get(l.generator).ok_or(Error::IndexOutOfRange { index: l.generator, dim: ops.len() })?;
        factors.push(if l.starred { op.adjoint() } else { op.clone() });
    }
    Ok(LazyOperator::product(sig, &factors)?.scale(w.phase.to_scalar()))
}

/// Uniformly random word over `d` generators with length in `1..=max_len`.
pub fn random_word(d: usize, max_len: usize, rng: &mut impl Rng) -> Word {
    let len = rng.gen_range(1..=max_len);
    let letters = (0..len).map(|_| Letter { generator: rng.gen_range(0..d), starred: rng.gen_bool(0.5) }).collect();
    Word::new(Phase::one(), letters)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine(set: RelationSet) -> Rewriter {
        Rewriter::exact(QMatrix::pair(Phase::rational(1, 8)), set).unwrap()
    }

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn parses_grammar() {
        let x = w("phase:1/8 (g2* g1*)^2 g1^3");
        assert_eq!(x.phase, Phase::rational(1, 8));
        assert_eq!(x.to_string(), "phase:1/8 g2* g1* g2* g1* g1 g1 g1");
        assert_eq!(w("").to_string(), "1");
        assert!("g0".parse::<Word>().is_err());
        assert!("(g1".parse::<Word>().is_err());
        assert!("phase:1/0 g1".parse::<Word>().is_err());
    }

    #[test]
    fn square_of_product() {
        // g1g2g1g2 = q(2,1) g1g1g2g2 by one swap.
        let n = engine(RelationSet::QComm).normalize(&w("(g1 g2)^2")).unwrap();
        assert_eq!(n.word, w("phase:-1/8 g1^2 g2^2"));
        assert_eq!(n.trace.len(), 1);
    }

    #[test]
    fn single_letter_is_normal() {
        let n = engine(RelationSet::QComm).normalize(&w("g1")).unwrap();
        assert_eq!(n.word, w("g1"));
        assert!(n.trace.is_empty());
    }

    #[test]
    fn cancellation_across_runs() {
        let e = engine(RelationSet::QComm);
        // g1*g2*g1 = q(1,2) g2*g1*g1 = q g2*.
        assert_eq!(e.normalize(&w("g1* g2* g1")).unwrap().word, w("phase:1/8 g2*"));
        assert_eq!(e.normalize(&w("g2* g1* g1")).unwrap().word, w("g2*"));
    }

    #[test]
    fn plain_and_starred_do_not_mix_without_doubly() {
        let e = engine(RelationSet::QComm);
        assert_eq!(e.normalize(&w("g2 g1*")).unwrap().word, w("g2 g1*"));
        let d = engine(RelationSet::DoublyQ);
        assert_eq!(d.normalize(&w("g2 g1*")).unwrap().word, w("phase:1/8 g1* g2"));
        assert_eq!(d.normalize(&w("g1 g1*")).unwrap().word, w("g1 g1*"));
        assert_eq!(d.normalize(&w("g1* g2 g1")).unwrap().word, w("phase:-1/8 g2"));
    }

    #[test]
    fn distinct_words_differ() {
        let e = engine(RelationSet::QComm);
        assert!(!e.prove_identity(&w("g1 g2"), &w("g2 g1")).unwrap().holds);
        assert!(e.prove_identity(&w("g1 g2"), &w("phase:1/8 g2 g1")).unwrap().holds);
    }

    #[test]
    fn random_orders_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for set in [RelationSet::QComm, RelationSet::DoublyQ] {
            let e = engine(set);
            for _ in 0..40 {
                let x = random_word(2, 8, &mut rng);
                let base = e.normalize(&x).unwrap().word;
                for s in 0..10 {
                    assert_eq!(e.normalize_with(&x, Strategy::Random(s)).unwrap().word, base, "{x}");
                }
            }
        }
    }

    #[test]
    fn irrational_q_needs_numeric_mode() {
        let q = QMatrix::pair(Phase::angle(1.0));
        assert!(matches!(Rewriter::exact(q.clone(), RelationSet::QComm), Err(Error::IrrationalPhase)));
        assert!(Rewriter::new(q, RelationSet::QComm).is_ok());
    }
}
