//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qwold::bcl::{
    build_model, coordinate_defect_vectors, extract_bcl1, extract_on, tau_coefficient_exact, tuples_equivalent,
    verify_tau, BCLTuple, ExtractOptions,
};
use qwold::fixtures::{self, random_bcl_pair, random_bcl_tuple, shift_pair_fixtures, FixtureName, RandomTupleSpec};
use qwold::graded::monomials;
use qwold::linalg::max_abs;
use qwold::opalg::{equal_on_window, WindowBasis};
use qwold::passage::{
    aux2_identity, is_doubly_q, passage, q_relation, rq_operator, slocinski_normal_form, Direction, DoublyQInput,
};
use qwold::phase::xy_sequences;
use qwold::report::CheckRecord;
use qwold::rewrite::{instantiate, random_word, Letter, RelationSet, Rewriter, Word};
use qwold::tuples::bilateral::{extend_to_unitaries, BilateralWindow, SNAP_TOL};
use qwold::tuples::{extract_tuple, TupleModel};
use qwold::wold::{lambda_split, OpWindow};
use qwold::{Atom, BasisKey, GradedIndex, LazyOperator, Phase, QMatrix, SVec, Scalar, SpaceSignature, TruncationWindow};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn failed_checks(checks: &[CheckRecord]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{} (residual {:.3e}, tol {:.0e})", c.name, c.residual, c.tolerance))
        .collect()
}

fn all_pass(what: &str, checks: &[CheckRecord]) -> Result<(), String> {
    let bad = failed_checks(checks);
    ensure(bad.is_empty(), || format!("{what}: {}", bad.join(", ")))
}

fn err(e: qwold::Error) -> String {
    e.to_string()
}

/// A varied but deterministic spread of random tuple shapes.
fn spec_for(seed: u64) -> RandomTupleSpec {
    let phases = [(0, 1), (1, 2), (1, 3), (1, 4), (3, 8)];
    let (p, r) = phases[(seed % 5) as usize];
    let q = Phase::rational(p, r);
    let ku = if seed.is_multiple_of(2) { 0 } else { r as usize };
    let spec = RandomTupleSpec::new(1 + (seed % 4) as usize, ku, q);
    if seed.is_multiple_of(3) {
        spec.doubly()
    } else {
        spec
    }
}

fn q8() -> Phase {
    Phase::rational(1, 8)
}

fn criterion_1() -> Outcome {
    for seed in 0..50 {
        let t = random_bcl_tuple(spec_for(seed), seed).map_err(err)?;
        let (v1, v2) = build_model(&t).map_err(err)?;
        let c = q_relation(&v1, &v2, t.q, 16, 0.0).map_err(err)?;
        ensure(c.passed() && c.exact && c.deviation == 0.0, || format!("seed {seed}: {c:?}"))?;
    }
    Ok("50 models, zero deviation up to degree 16".into())
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let (t, v1, v2) = random_bcl_pair(spec_for(seed), seed).map_err(err)?;
        let opts = ExtractOptions { q: Some(t.q), ..ExtractOptions::default() };
        let ex = extract_bcl1(&v1, &v2, 8, opts).map_err(err)?;
        let eq = tuples_equivalent(&t, &ex.tuple, 1e-8).map_err(err)?;
        let eq = eq.ok_or_else(|| format!("seed {seed}: extracted tuple not equivalent"))?;
        ensure(eq.residual <= 1e-8, || format!("seed {seed}: residual {:.3e}", eq.residual))?;
        worst = worst.max(eq.residual);
    }
    Ok(format!("50 seeds, worst intertwiner residual {worst:.2e}"))
}

/// `Σ (k+1) z^k` truncated below `cap`.
fn ramp(cap: u32) -> SVec {
    let mut f = SVec::new();
    for k in 0..cap {
        f.add_term(BasisKey::Hardy(GradedIndex(vec![k]), 0), Scalar::integer(i64::from(k) + 1));
    }
    f
}

/// `y_n = y_{n-1} + n`, `x_n = x_{n-1} + n - 1`, starting from zero.
fn xy_oracle(n: u64) -> (u64, u64) {
    (1..=n).fold((0, 0), |(x, y), k| (x + k - 1, y + k))
}

fn criterion_3() -> Outcome {
    let q = q8();
    let qb = q.conj();
    let cap = 16;
    let a = |k: u64| Scalar::integer(k as i64 + 1);
    let ph = |e: u64| qb.pow(e as i64).to_scalar();
    let keys: Vec<BasisKey> = (0..cap as u32).map(|k| BasisKey::Hardy(GradedIndex(vec![k]), 0)).collect();
    for name in [FixtureName::RqMz, FixtureName::RqmzMz] {
        let fx = fixtures::example(name, q, cap, 2).map_err(err)?;
        let (v1, v2) = (&fx.ops[0], &fx.ops[1]);
        let opts = ExtractOptions { q: Some(q), ..ExtractOptions::default() };
        let ex = extract_bcl1(v1, v2, cap, opts).map_err(err)?;
        let (_, checks) = verify_tau(&ex, 1e-10).map_err(err)?;
        all_pass(name.as_str(), &checks)?;
        let first = coordinate_defect_vectors(v1, &keys).map_err(err)?;
        let second = coordinate_defect_vectors(v2, &keys).map_err(err)?;
        let h = ramp(cap as u32);
        for n in 0..=6u64 {
            let (_, y) = xy_oracle(n);
            let got = tau_coefficient_exact(v1, v2, &first, &second, n as usize, &h).map_err(err)?;
            let want = match name {
                FixtureName::RqMz => vec![&ph(y) * &a(n)],
                _ => vec![&ph(2 * y) * &a(2 * n), &(&ph(2 * y) * &ph(n + 1)) * &a(2 * n + 1)],
            };
            ensure(got == want, || format!("{name} n={n}: got {got:?}, want {want:?}"))?;
        }
    }
    Ok("tau intertwines on both examples; coefficient laws exact for n ≤ 6".into())
}

fn criterion_4() -> Outcome {
    let q = q8();
    let tol = 1e-8;
    let cap = 8;
    let mut compared = 0;
    for name in [FixtureName::RqMz, FixtureName::RqmzMz, FixtureName::Bidisk, FixtureName::BidiskRestricted] {
        let fx = fixtures::example(name, q, cap, 2).map_err(err)?;
        let opts = ExtractOptions { q: Some(q), ..ExtractOptions::default() };
        let w = OpWindow::on_basis(fx.ops.clone(), fx.window_basis(), opts.rank_tol).map_err(err)?;
        let ex = extract_on(w, opts).map_err(err)?;
        let via_tuple = is_doubly_q(DoublyQInput::Tuple(&ex.tuple, &ex.good_fiber), tol).map_err(err)?;
        let direct = is_doubly_q(DoublyQInput::Pair(&fx.ops[0], &fx.ops[1], q, cap), tol).map_err(err)?;
        let expected = fx.expected.doubly_q.expect("pair fixtures carry a verdict");
        ensure(via_tuple.doubly == direct.doubly && direct.doubly == expected, || {
            format!("{name}: tuple {} direct {} expected {expected}", via_tuple.doubly, direct.doubly)
        })?;
        ensure(direct.witness == fx.expected.witness, || {
            format!("{name}: witness {:?}, expected {:?}", direct.witness, fx.expected.witness)
        })?;
        compared += 1;
    }
    let mut doubly_count = 0;
    for seed in 0..50 {
        let t = random_bcl_tuple(spec_for(seed), seed).map_err(err)?;
        let (v1, v2) = build_model(&t).map_err(err)?;
        let cols: Vec<usize> = (0..t.fiber_dim()).collect();
        let via_tuple = is_doubly_q(DoublyQInput::Tuple(&t, &cols), tol).map_err(err)?;
        let direct = is_doubly_q(DoublyQInput::Pair(&v1, &v2, t.q, cap), tol).map_err(err)?;
        ensure(via_tuple.doubly == direct.doubly, || {
            format!("seed {seed}: tuple {} vs direct {}", via_tuple.doubly, direct.doubly)
        })?;
        doubly_count += usize::from(direct.doubly);
        compared += 1;
    }
    ensure(doubly_count > 0 && doubly_count < 50, || format!("random sample not mixed: {doubly_count} doubly"))?;
    let mut aux2 = 0;
    for seed in 0..50 {
        let spec = RandomTupleSpec::new(1 + (seed % 4) as usize, 0, Phase::one());
        let t = random_bcl_tuple(spec, seed).map_err(err)?;
        let c = aux2_identity(&t, 12, 1e-12).map_err(err)?;
        ensure(c.passed(), || format!("aux2 seed {seed}: {c:?}"))?;
        aux2 += 1;
    }
    Ok(format!("{compared} verdicts agree ({doubly_count}/50 random doubly); aux2 holds on {aux2} tuples"))
}

fn bidisk_gen(gen: usize) -> Word {
    Word::letter(Letter::plain(gen))
}

fn criterion_5() -> Outcome {
    let q = q8();
    let engine = Rewriter::exact(QMatrix::pair(q), RelationSet::QComm).map_err(err)?;
    let g1 = bidisk_gen(0);
    let g2 = bidisk_gen(1);
    let g1s = Word::letter(Letter::star(0));
    let g2s = Word::letter(Letter::star(1));
    let vstar = g2s.times(&g1s);
    for j in 1..=10u32 {
        let lhs = vstar.pow(j).times(&g1);
        let rhs = g2s.times(&vstar.pow(j - 1)).scaled(q.pow(i64::from(j) - 1));
        let p = engine.prove_identity(&lhs, &rhs).map_err(err)?;
        ensure(p.holds, || format!("first relation fails at j={j}"))?;
        let lhs = vstar.pow(j).times(&g2);
        let rhs = g1s.times(&vstar.pow(j - 1)).scaled(q.conj().pow(i64::from(j)));
        let p = engine.prove_identity(&lhs, &rhs).map_err(err)?;
        ensure(p.holds, || format!("second relation fails at j={j}"))?;
    }
    let v = g1.times(&g2);
    for n in 1..=20u64 {
        let (x, y) = xy_oracle(n);
        ensure(x == n * (n - 1) / 2 && y == n * (n + 1) / 2, || format!("oracle disagrees with closed form at {n}"))?;
        ensure(xy_sequences(n).map_err(err)? == (x, y), || format!("library sequences differ at {n}"))?;
        let k = n as u32;
        let lhs = v.pow(k);
        let ordered = g1.pow(k).times(&g2.pow(k)).scaled(q.conj().pow(x as i64));
        let reversed = g2.pow(k).times(&g1.pow(k)).scaled(q.pow(y as i64));
        for rhs in [ordered, reversed] {
            let p = engine.prove_identity(&lhs, &rhs).map_err(err)?;
            ensure(p.holds, || format!("power identity fails at n={n}"))?;
        }
    }
    let window = TruncationWindow::new(12, 0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut words = 0;
    let cases = [
        (FixtureName::RqmzMz, RelationSet::QComm),
        (FixtureName::RqMz, RelationSet::QComm),
        (FixtureName::RqMz, RelationSet::DoublyQ),
        (FixtureName::Bidisk, RelationSet::DoublyQ),
    ];
    for (name, set) in cases {
        let fx = fixtures::example(name, q, 12, 2).map_err(err)?;
        let engine = Rewriter::exact(QMatrix::pair(q), set).map_err(err)?;
        for _ in 0..50 {
            let w = random_word(2, 8, &mut rng);
            let nf = engine.normalize(&w).map_err(err)?;
            let a = instantiate(&w, &fx.ops).map_err(err)?;
            let b = instantiate(&nf.word, &fx.ops).map_err(err)?;
            let c = equal_on_window(&a, &b, &window, 0.0).map_err(err)?;
            ensure(c.passed() && c.exact, || format!("{name} {set:?}: {w} -> {} differs: {c:?}", nf.word))?;
            words += 1;
        }
    }
    Ok(format!("both relations j ≤ 10, power identity n ≤ 20, {words} random words sound"))
}

/// `Σ_{n ≤ m} q^n (VⁿV*ⁿ − Vⁿ⁺¹V*ⁿ⁺¹) e` for the product `V` of the pair.
fn series_oracle(v: &LazyOperator, q: Phase, terms: u32, e: &SVec) -> Result<SVec, qwold::Error> {
    let power = |n: u32| -> Result<SVec, qwold::Error> {
        let mut x = e.clone();
        for _ in 0..n {
            x = v.adjoint().apply(&x)?;
        }
        for _ in 0..n {
            x = v.apply(&x)?;
        }
        Ok(x)
    };
    let mut out = SVec::new();
    for n in 0..=terms {
        let diff = power(n)?.sub(&power(n + 1)?);
        out.add_scaled(&diff, &q.pow(i64::from(n)).to_scalar());
    }
    Ok(out)
}

fn criterion_6() -> Outcome {
    let tol = 1e-10;
    let cap = 10;
    let mut runs = 0;
    for seed in 0..40u64 {
        let commutative = seed < 20;
        let q = [Phase::rational(1, 8), Phase::rational(1, 3), Phase::rational(2, 5), Phase::rational(1, 4)]
            [(seed % 4) as usize];
        let model_q = if commutative { Phase::one() } else { q };
        let mut spec = RandomTupleSpec::new(1 + (seed % 3) as usize, 0, model_q);
        if seed % 2 == 0 {
            spec = spec.doubly();
        }
        let (_, v1, v2) = random_bcl_pair(spec, seed).map_err(err)?;
        let direction = if commutative { Direction::CommToQ } else { Direction::QToComm };
        let p = passage(&v1, &v2, q, direction, cap, tol).map_err(err)?;
        all_pass(&format!("seed {seed}"), &p.certificate.checks)?;
        runs += 1;
    }
    let sig = SpaceSignature::hardy(2);
    let mz1 = LazyOperator::atom(sig, Atom::Shift(0)).map_err(err)?;
    let mz2 = LazyOperator::atom(sig, Atom::Shift(1)).map_err(err)?;
    let v = mz1.compose(&mz2).map_err(err)?;
    for q in [Phase::rational(1, 8), Phase::rational(2, 5)] {
        let p = passage(&mz1, &mz2, q, Direction::CommToQ, cap, tol).map_err(err)?;
        all_pass("bidisk", &p.certificate.checks)?;
        ensure(p.certificate.rq_diagonal.is_some(), || "bidisk rq not diagonal".into())?;
        let rq = rq_operator(&mz1, &mz2, q, cap).map_err(err)?;
        for m in monomials(2, cap) {
            let (a, b) = (m.0[0], m.0[1]);
            let e = SVec::basis(BasisKey::Hardy(m.clone(), 0));
            let got = rq.apply(&e).map_err(err)?;
            let oracle = series_oracle(&v, q, a + b + 1, &e).map_err(err)?;
            let law = e.scaled(&q.pow(i64::from(a.min(b))).to_scalar());
            ensure(got == oracle && got == law && got.is_exact(), || format!("rq at z1^{a} z2^{b}: {got:?}"))?;
        }
    }
    Ok(format!("{runs} passages certified; bidisk rq diagonal q^min(a,b) exactly"))
}

fn criterion_7() -> Outcome {
    let cap = 8;
    let pairs = shift_pair_fixtures(cap).map_err(err)?;
    ensure(pairs.len() == 10, || format!("{} fixtures", pairs.len()))?;
    for fx in &pairs {
        let form = slocinski_normal_form(&fx.v1, &fx.v2, fx.q, cap, 1e-8).map_err(err)?;
        all_pass(&fx.label, &form.checks)?;
        if fx.q.is_one() {
            let n = form.s_q.nrows();
            let dev = max_abs(&(&form.s_q - nalgebra::DMatrix::identity(n, n)));
            ensure(dev <= 1e-12, || format!("{}: s_1 deviates from I by {dev:.3e}", fx.label))?;
        }
    }
    Ok("10 shift pairs; q = 1 gives the identity".into())
}

fn tuple_d_model() -> Result<TupleModel, String> {
    let fx = fixtures::example(FixtureName::TupleD, q8(), 8, 3).map_err(err)?;
    extract_tuple(&fx.ops, &fx.q_matrix, 8, 1e-10).map_err(err)
}

fn criterion_8() -> Outcome {
    let model = tuple_d_model()?;
    all_pass("tuple-d", &model.checks)?;
    let relations: Vec<&CheckRecord> = model.checks.iter().filter(|c| c.name.starts_with("relation-")).collect();
    ensure(relations.len() == 3 && relations.iter().all(|c| c.residual == 0.0), || {
        format!("relations not exact: {relations:?}")
    })?;
    Ok(format!("{} checks pass (fiber {}, K_u {})", model.checks.len(), model.fiber_dim, model.ku_dim))
}

fn extend_exactly(label: &str, model: &TupleModel) -> Result<(), String> {
    let ext = extend_to_unitaries(model, BilateralWindow::new(8, 8)).map_err(err)?;
    all_pass(label, &ext.checks)?;
    ensure(ext.is_exact(), || format!("{label}: extension data not exact"))?;
    let loose: Vec<&CheckRecord> = ext.checks.iter().filter(|c| c.residual != 0.0).collect();
    ensure(loose.is_empty(), || format!("{label}: nonzero residuals {loose:?}"))
}

fn criterion_9() -> Outcome {
    let mut n = 0;
    let model = tuple_d_model()?.snapped(SNAP_TOL);
    extend_exactly("tuple-d", &model)?;
    n += 1;
    for name in [FixtureName::RqMz, FixtureName::RqmzMz, FixtureName::Bidisk] {
        let fx = fixtures::example(name, q8(), 8, 2).map_err(err)?;
        let model = extract_tuple(&fx.ops, &fx.q_matrix, 8, 1e-10).map_err(err)?;
        all_pass(name.as_str(), &model.checks)?;
        extend_exactly(name.as_str(), &model.snapped(SNAP_TOL))?;
        n += 1;
    }
    for seed in 0..20 {
        let t: BCLTuple = random_bcl_tuple(spec_for(seed), seed).map_err(err)?;
        extend_exactly(&format!("seed {seed}"), &TupleModel::from_pair(&t).map_err(err)?)?;
        n += 1;
    }
    Ok(format!("{n} models extend exactly on the (8, 8) window"))
}

fn criterion_10() -> Outcome {
    let q = q8();
    let mut n = 0;
    for name in [FixtureName::RqMz, FixtureName::RqmzMz, FixtureName::Bidisk, FixtureName::BidiskRestricted] {
        let fx = fixtures::example(name, q, 8, 2).map_err(err)?;
        let w = OpWindow::on_basis(fx.ops.clone(), fx.window_basis(), 1e-9).map_err(err)?;
        all_pass(name.as_str(), &lambda_split(&w, 1e-10, 11).map_err(err)?.checks)?;
        n += 1;
    }
    for seed in 0..50 {
        let (_, v1, v2) = random_bcl_pair(spec_for(seed), seed).map_err(err)?;
        let sig = v1.signature();
        let w = OpWindow::on_basis(vec![v1, v2], Arc::new(WindowBasis::new(sig, 10)), 1e-9).map_err(err)?;
        all_pass(&format!("seed {seed}"), &lambda_split(&w, 1e-10, seed).map_err(err)?.checks)?;
        n += 1;
    }
    Ok(format!("{n} windows"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("model q-commutativity", criterion_1),
        ("extraction round trip", criterion_2),
        ("tau intertwining and coefficient laws", criterion_3),
        ("doubly q-commutativity verdicts", criterion_4),
        ("rewrite identities and soundness", criterion_5),
        ("passage between commutative and q-commutative pairs", criterion_6),
        ("normal form of doubly q-commuting shift pairs", criterion_7),
        ("tuple model", criterion_8),
        ("unitary extension", criterion_9),
        ("defect identities and Lambda", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
