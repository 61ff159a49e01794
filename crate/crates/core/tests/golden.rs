//! Fixture expectations frozen as JSON, cross-checked against what the
//! pipelines actually compute.

use std::path::PathBuf;

use qwold::bcl::{extract_on, fit_q, tuples_equivalent, BCLTuple, ExtractOptions, Flavor};
use qwold::fixtures::{example, Expected, FixtureName};
use qwold::passage::{is_doubly_q, DoublyQInput};
use qwold::wold::OpWindow;
use qwold::{Error, Phase, SMatrix};

fn golden(name: FixtureName) -> Expected {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "golden", &format!("{name}.json")].iter().collect();
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

fn q8() -> Phase {
    Phase::rational(1, 8)
}

#[test]
fn fixture_metadata_matches_the_frozen_files() {
    for name in FixtureName::ALL {
        let fx = example(name, q8(), 8, 3).unwrap();
        let frozen = golden(name);
        assert_eq!(frozen.q_exists, fx.expected.q_exists, "{name}");
        assert_eq!(frozen.defect_dims, fx.expected.defect_dims, "{name}");
        assert_eq!(frozen.doubly_q, fx.expected.doubly_q, "{name}");
        assert_eq!(frozen.witness, fx.expected.witness, "{name}");
        assert_eq!(frozen.tau_law, fx.expected.tau_law, "{name}");
        for (a, b) in [(&frozen.p, &fx.expected.p), (&frozen.u, &fx.expected.u)] {
            match (a, b) {
                (Some(a), Some(b)) => assert!(a.deviation(b) < 1e-15, "{name}"),
                (None, None) => {}
                _ => panic!("{name}: matrix presence differs"),
            }
        }
    }
}

#[test]
fn extracted_pairs_reproduce_the_frozen_tuples() {
    for name in [FixtureName::RqMz, FixtureName::RqmzMz] {
        let fx = example(name, q8(), 12, 2).unwrap();
        let frozen = golden(name);
        let opts = ExtractOptions { q: Some(q8()), ..ExtractOptions::default() };
        let w = OpWindow::on_basis(fx.ops.clone(), fx.window_basis(), opts.rank_tol).unwrap();
        let ex = extract_on(w, opts).unwrap();
        assert_eq!(Some(ex.defect_dims()), frozen.defect_dims, "{name}");
        let empty = SMatrix::zeros(0, 0);
        let expected =
            BCLTuple::new(q8(), frozen.p.unwrap(), frozen.u.unwrap(), empty.clone(), empty, Flavor::First).unwrap();
        assert!(tuples_equivalent(&expected, &ex.tuple, 1e-8).unwrap().is_some(), "{name}");
    }
}

#[test]
fn doubly_verdicts_and_witnesses_match_the_frozen_files() {
    for name in [FixtureName::RqMz, FixtureName::RqmzMz, FixtureName::Bidisk, FixtureName::BidiskRestricted] {
        let fx = example(name, q8(), 8, 2).unwrap();
        let frozen = golden(name);
        let v = is_doubly_q(DoublyQInput::Pair(&fx.ops[0], &fx.ops[1], q8(), 8), 1e-10).unwrap();
        assert_eq!(Some(v.doubly), frozen.doubly_q, "{name}");
        assert_eq!(v.witness, frozen.witness, "{name}");
    }
}

#[test]
fn the_ku_only_pair_admits_no_phase() {
    let fx = example(FixtureName::NoQ2x2, q8(), 4, 2).unwrap();
    assert!(!golden(FixtureName::NoQ2x2).q_exists);
    let fit = fit_q(&fx.ops[0], &fx.ops[1], 4, None, 1e-9);
    assert!(matches!(fit, Err(Error::NoUnimodularQ { .. })), "{fit:?}");
}
