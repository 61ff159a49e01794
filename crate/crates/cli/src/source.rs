//! Where the operators of a run come from: a named fixture or a JSON file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use qwold::fixtures::{self, FixtureName};
use qwold::opalg::{operator_from_json, OperatorJson, WindowBasis};
use qwold::{Error, LazyOperator, Phase, QMatrix};

use crate::Failure;

pub const DEFAULT_TRUNC: usize = 16;
/// Fixtures on three or more variables default to this smaller window.
pub const DEFAULT_TRUNC_MANY_VARS: usize = 8;

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Named fixture (rq-mz, rqmz-mz, bidisk, bidisk-restricted, no-q-2x2, tuple-d).
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub example: Option<String>,
    /// JSON file with `{"q": "p/r", "operators": [...]}` or a bare operator array.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Phase as `p/r` or `rad:θ`; inferred from the operators when omitted.
    #[arg(long)]
    pub q: Option<String>,
    /// Window cap N (monomials of degree below N per variable).
    #[arg(long)]
    pub trunc: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub rank_tol: f64,
    /// Number of operators for `tuple-d`.
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Loaded operators with the window they should be examined on.
pub struct Loaded {
    pub label: String,
    pub ops: Vec<LazyOperator>,
    /// Phase given on the command line, in the file, or by the fixture.
    pub q: Option<Phase>,
    pub q_matrix: Option<QMatrix>,
    pub cap: usize,
    pub basis: Arc<WindowBasis>,
    pub fixture: Option<fixtures::Fixture>,
}

pub fn parse_phase(s: &str) -> Result<Phase, Failure> {
    s.parse::<Phase>().map_err(|e| Failure::usage(e.to_string()))
}

impl SourceArgs {
    pub fn cli_phase(&self) -> Result<Option<Phase>, Failure> {
        self.q.as_deref().map(parse_phase).transpose()
    }

    /// Loads the operators; `fixture_q` overrides the phase a fixture is built with.
    pub fn load_with(&self, fixture_q: Option<Phase>) -> Result<Loaded, Failure> {
        let q = self.cli_phase()?;
        match (&self.example, &self.input) {
            (Some(name), _) => {
                let name: FixtureName = name.parse().map_err(Failure::from)?;
                let build_q = fixture_q.or(q).unwrap_or_else(|| Phase::rational(1, 8));
                let vars = if name == FixtureName::TupleD { self.d } else { 2 };
                let default_cap = if name == FixtureName::TupleD && vars > 2 { DEFAULT_TRUNC_MANY_VARS } else { DEFAULT_TRUNC };
                let cap = self.trunc.unwrap_or(default_cap);
                let fx = fixtures::example(name, build_q, cap, self.d).map_err(Failure::from)?;
                let basis = fx.window_basis();
                let q_exists = fx.expected.q_exists;
                Ok(Loaded {
                    label: name.to_string(),
                    ops: fx.ops.clone(),
                    q: q_exists.then_some(build_q),
                    q_matrix: q_exists.then(|| fx.q_matrix.clone()),
                    cap,
                    basis,
                    fixture: Some(fx),
                })
            }
            (None, Some(path)) => {
                let (ops, file_q) = read_operators(path)?;
                let q = q.or(file_q);
                let cap = self.trunc.unwrap_or(DEFAULT_TRUNC);
                let sig = ops[0].signature();
                Ok(Loaded {
                    label: path.display().to_string(),
                    q_matrix: q.filter(|_| ops.len() == 2).map(QMatrix::pair),
                    ops,
                    q,
                    cap,
                    basis: Arc::new(WindowBasis::new(sig, cap)),
                    fixture: None,
                })
            }
            (None, None) => Err(Failure::usage("one of --example or --input is required")),
        }
    }

    pub fn load(&self) -> Result<Loaded, Failure> {
        self.load_with(None)
    }
}

fn read_operators(path: &Path) -> Result<(Vec<LazyOperator>, Option<Phase>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let (list, q) = match value {
        serde_json::Value::Array(items) => (items, None),
        serde_json::Value::Object(mut obj) => {
            let q = match obj.remove("q") {
                Some(serde_json::Value::String(s)) => Some(s.parse::<Phase>().map_err(|e| Failure::io(e.to_string()))?),
                Some(other) => return Err(Failure::io(format!("`q` must be a phase string, got {other}"))),
                None => None,
            };
            match obj.remove("operators") {
                Some(serde_json::Value::Array(items)) => (items, q),
                _ => return Err(Failure::io("expected an `operators` array")),
            }
        }
        _ => return Err(Failure::io("expected a JSON object or array")),
    };
    if list.len() < 2 {
        return Err(Failure::io("need at least two operators"));
    }
    let ops = list
        .into_iter()
        .map(|v| {
            let json: OperatorJson = serde_json::from_value(v).map_err(|e| Failure::io(e.to_string()))?;
            operator_from_json(&json).map_err(|e| Failure::io(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sig = ops[0].signature();
    if ops.iter().any(|o| o.signature() != sig) {
        return Err(Failure::from(Error::SignatureMismatch("operators live on different spaces".into())));
    }
    Ok((ops, q))
}
