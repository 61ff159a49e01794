use serde_json::{json, Value};

use qwold::bcl::{build_model, extract_on, fit_q, verify_tau, ExtractOptions, PairExtraction};
use qwold::opalg::densify_on;
use qwold::passage::{is_doubly_q, passage as run_passage, q_relation, Direction, DoublyQInput};
use qwold::report::{CheckRecord, Environment, VerificationReport};
use qwold::rewrite::{RelationSet, Rewriter, Word};
use qwold::tuples::bilateral::{extend_to_unitaries, BilateralWindow};
use qwold::tuples::{extract_tuple, TupleModel};
use qwold::wold::{lambda_split, wold_decompose, OpWindow};
use qwold::{Error, LazyOperator, Phase, QMatrix};

use crate::source::{parse_phase, Loaded, SourceArgs};
use crate::Failure;

fn environment(src: &Loaded, tol: f64, seed: Option<u64>) -> Environment {
    Environment { window: Some(src.cap), q: src.q.map(|q| q.to_string()), seed, tolerance: Some(tol) }
}

/// Keeps names unique when two stages report checks of the same name.
fn prefixed(stage: &str, checks: &[CheckRecord]) -> Vec<CheckRecord> {
    checks.iter().map(|c| CheckRecord { name: format!("{stage}-{}", c.name), ..c.clone() }).collect()
}

fn json_failure(e: serde_json::Error) -> Failure {
    Failure::from(Error::Json(e))
}

/// Reports the expected non-existence of q for fixtures that carry it.
fn no_q_report(command: &str, src: &Loaded, args: &SourceArgs) -> Result<Option<VerificationReport>, Failure> {
    let expects_none = src.fixture.as_ref().is_some_and(|f| !f.expected.q_exists);
    if !expects_none {
        return Ok(None);
    }
    let mut report = VerificationReport::new(command, src.label.clone(), environment(src, args.tol, None));
    let verdict = match fit_q(&src.ops[0], &src.ops[1], src.cap, None, args.tol) {
        Err(Error::NoUnimodularQ { residual }) => {
            report.push(
                CheckRecord::boolean("no-unimodular-q", true)
                    .with_note(format!("no unimodular q exists (best residual {residual:.3e})")),
            );
            "no unimodular q exists".to_string()
        }
        Ok(fit) => {
            report.push(CheckRecord::boolean("no-unimodular-q", false).with_note(format!("found q = {}", fit.q)));
            format!("unexpected q = {}", fit.q)
        }
        Err(e) => return Err(e.into()),
    };
    report.data = Some(json!({ "verdict": verdict }));
    Ok(Some(report))
}

fn extract_pair(src: &Loaded, args: &SourceArgs) -> Result<PairExtraction, Failure> {
    let opts = ExtractOptions { q: src.q, tol: args.tol, rank_tol: args.rank_tol };
    let w = OpWindow::on_basis(src.ops.clone(), src.basis.clone(), args.rank_tol)?;
    Ok(extract_on(w, opts)?)
}

fn tuple_q(src: &Loaded) -> Result<QMatrix, Failure> {
    if let Some(m) = &src.q_matrix {
        return Ok(m.clone());
    }
    let q = src.q.ok_or_else(|| Failure::usage("three or more operators need --q (read as q(i,j) = q^(j-i))"))?;
    Ok(QMatrix::power_convention(q, src.ops.len()))
}

fn extract_model(src: &Loaded, args: &SourceArgs) -> Result<TupleModel, Failure> {
    Ok(extract_tuple(&src.ops, &tuple_q(src)?, src.cap, args.tol)?)
}

pub fn verify(args: &SourceArgs, seed: u64) -> Result<VerificationReport, Failure> {
    let src = args.load()?;
    if let Some(r) = no_q_report("verify", &src, args)? {
        return Ok(r);
    }
    if src.ops.len() > 2 {
        let model = extract_model(&src, args)?;
        let mut report = VerificationReport::new("verify", src.label.clone(), environment(&src, args.tol, Some(seed)));
        report.extend(model.checks.iter().cloned());
        report.data = Some(json!({
            "operators": model.len(),
            "fiberDim": model.fiber_dim,
            "kuDim": model.ku_dim,
            "goodFiber": model.good_fiber.len(),
        }));
        return Ok(report);
    }
    let ex = extract_pair(&src, args)?;
    let q = ex.fit.q;
    let env = Environment { q: Some(q.to_string()), ..environment(&src, args.tol, Some(seed)) };
    let mut report = VerificationReport::new("verify", src.label.clone(), env);
    let (v1, v2) = (&src.ops[0], &src.ops[1]);

    report.push(CheckRecord::residual("q-commutativity", ex.fit.residual, args.tol));
    report.push(CheckRecord::residual("extraction-procrustes", ex.procrustes_residual, args.rank_tol));
    let (m1, m2) = build_model(&ex.tuple)?;
    let model_cap = src.cap.min(12);
    report.push(CheckRecord::from_comparison("model-q-commutativity", &q_relation(&m1, &m2, q, model_cap, args.tol)?));
    let (_, tau_checks) = verify_tau(&ex, args.tol)?;
    report.extend(tau_checks);

    let via_tuple = is_doubly_q(DoublyQInput::Tuple(&ex.tuple, &ex.good_fiber), args.rank_tol)?;
    let direct = is_doubly_q(DoublyQInput::Pair(v1, v2, q, src.cap), args.tol)?;
    report.push(
        CheckRecord::boolean("doubly-q-routes-agree", via_tuple.doubly == direct.doubly)
            .with_note(format!("{}: {}, direct: {}", via_tuple.route, via_tuple.doubly, direct.doubly)),
    );
    if let Some(fx) = &src.fixture {
        if let Some(expected) = fx.expected.doubly_q {
            report.push(
                CheckRecord::boolean("doubly-q-expected", direct.doubly == expected)
                    .with_note(format!("expected {expected}, found {}", direct.doubly)),
            );
        }
        if fx.expected.witness.is_some() {
            report.push(
                CheckRecord::boolean("doubly-q-witness", direct.witness == fx.expected.witness)
                    .with_witness(direct.witness.clone()),
            );
        }
        if let Some(dims) = fx.expected.defect_dims {
            report.push(
                CheckRecord::boolean("defect-dims-expected", ex.defect_dims() == dims)
                    .with_note(format!("expected {dims:?}, found {:?}", ex.defect_dims())),
            );
        }
    }
    report.extend(lambda_split(&ex.window, args.tol, seed)?.checks);

    report.data = Some(json!({
        "q": q.to_string(),
        "qInferred": ex.fit.inferred,
        "defectDims": ex.defect_dims(),
        "goodFiber": ex.good_fiber.len(),
        "doublyQ": { "verdict": direct.doubly, "residual": direct.residual, "witness": direct.witness },
        "tuple": serde_json::to_value(&ex.tuple).map_err(json_failure)?,
    }));
    Ok(report)
}

pub fn extract(args: &SourceArgs) -> Result<VerificationReport, Failure> {
    let src = args.load()?;
    if let Some(r) = no_q_report("extract", &src, args)? {
        return Ok(r);
    }
    let mut report = VerificationReport::new("extract", src.label.clone(), environment(&src, args.tol, None));
    if src.ops.len() > 2 {
        let model = extract_model(&src, args)?;
        report.extend(model.checks.iter().cloned());
        report.data = Some(serde_json::to_value(&model).map_err(json_failure)?);
        return Ok(report);
    }
    let ex = extract_pair(&src, args)?;
    report.environment.q = Some(ex.fit.q.to_string());
    report.push(CheckRecord::residual("q-commutativity", ex.fit.residual, args.tol));
    report.push(CheckRecord::residual("extraction-procrustes", ex.procrustes_residual, args.rank_tol));
    report.data = Some(json!({ "tuple": serde_json::to_value(&ex.tuple).map_err(json_failure)?, "goodFiber": ex.good_fiber }));
    Ok(report)
}

pub fn wold(args: &SourceArgs, which: &str) -> Result<VerificationReport, Failure> {
    let src = args.load()?;
    let op: LazyOperator = if which == "product" {
        LazyOperator::product(src.ops[0].signature(), &src.ops)?
    } else {
        let i: usize = which.parse().map_err(|_| Failure::usage(format!("--operator must be `product` or an index, got {which:?}")))?;
        let op = i.checked_sub(1).and_then(|k| src.ops.get(k));
        op.cloned().ok_or_else(|| Failure::usage(format!("no operator {i} (have {})", src.ops.len())))?
    };
    let dense = densify_on(&op, src.basis.clone())?;
    let parts = wold_decompose(&dense, src.cap + 2, args.tol, args.rank_tol)?;
    let mut report = VerificationReport::new("wold", src.label.clone(), environment(&src, args.tol, None));
    report.push(CheckRecord::residual("ku-stable", parts.ku_residual, args.tol));
    report.push(CheckRecord::residual("wave-isometry", parts.wave_isometry_residual, args.tol));
    report.push(CheckRecord::residual("wave-intertwines", parts.intertwining_residual, args.tol));
    report.data = Some(json!({ "operator": which, "parts": serde_json::to_value(parts.to_json()).map_err(json_failure)? }));
    Ok(report)
}

pub fn prove(lhs: &str, rhs: &str, q: &str, doubly: bool) -> Result<VerificationReport, Failure> {
    let q = parse_phase(q)?;
    let lhs: Word = lhs.parse()?;
    let rhs: Word = rhs.parse()?;
    let set = if doubly { RelationSet::DoublyQ } else { RelationSet::QComm };
    let dim = lhs.generators().max(rhs.generators()).max(2);
    let qm = QMatrix::power_convention(q, dim);
    let engine = if qm.is_exact() { Rewriter::exact(qm, set)? } else { Rewriter::new(qm, set)? };
    let proof = engine.prove_identity(&lhs, &rhs)?;
    let env = Environment { q: Some(q.to_string()), ..Environment::default() };
    let mut report = VerificationReport::new("prove", format!("{lhs} = {rhs}"), env);
    report.push(
        CheckRecord::boolean("identity", proof.holds)
            .with_note(format!("normal forms: {} | {}", proof.lhs.word, proof.rhs.word)),
    );
    report.data = Some(serde_json::to_value(&proof).map_err(json_failure)?);
    Ok(report)
}

pub fn extend(args: &SourceArgs, negative: usize, positive: usize) -> Result<VerificationReport, Failure> {
    let src = args.load()?;
    let model = extract_model(&src, args)?;
    let window = BilateralWindow::new(negative, positive);
    let ext = extend_to_unitaries(&model, window)?;
    let mut report = VerificationReport::new("extend", src.label.clone(), environment(&src, args.tol, None));
    report.extend(prefixed("model", &model.checks));
    report.extend(prefixed("extension", &ext.checks));
    let ops: Vec<Value> = ext.ops.iter().map(|o| serde_json::to_value(o.to_json(window))).collect::<Result<_, _>>().map_err(json_failure)?;
    report.data = Some(json!({ "exact": ext.is_exact(), "range": [-(negative as i64), positive as i64], "operators": ops }));
    Ok(report)
}

pub fn passage(args: &SourceArgs, direction: &str) -> Result<VerificationReport, Failure> {
    let direction: Direction = direction.parse()?;
    let q = args.cli_phase()?.ok_or_else(|| Failure::usage("passage needs --q"))?;
    // A commuting fixture is the q = 1 member of its family.
    let src = match direction {
        Direction::CommToQ => args.load_with(Some(Phase::one()))?,
        Direction::QToComm => args.load_with(Some(q))?,
    };
    if src.ops.len() != 2 {
        return Err(Failure::usage("passage works on pairs"));
    }
    let p = run_passage(&src.ops[0], &src.ops[1], q, direction, src.cap, args.tol)?;
    let env = Environment { q: Some(q.to_string()), ..environment(&src, args.tol, None) };
    let mut report = VerificationReport::new("passage", src.label.clone(), env);
    report.extend(p.certificate.checks.iter().cloned());
    report.data = Some(serde_json::to_value(&p.certificate).map_err(json_failure)?);
    Ok(report)
}
