use std::path::PathBuf;

use qsdlab::discrete::DiscreteBranching;
use qsdlab::{fixtures, BranchingMechanism};

fn read(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn shipped_files_match_the_named_mechanisms() {
    for name in fixtures::CONTINUOUS {
        let from_file = BranchingMechanism::from_json(&read(name)).unwrap();
        assert_eq!(from_file, fixtures::continuous(name).unwrap(), "{name}");
        assert_eq!(BranchingMechanism::from_json(&from_file.to_json()).unwrap(), from_file);
    }
    for name in fixtures::DISCRETE {
        let from_file = DiscreteBranching::from_json(&read(name)).unwrap();
        assert_eq!(from_file, fixtures::discrete(name).unwrap(), "{name}");
    }
}

#[test]
fn unknown_names_are_config_errors() {
    assert!(matches!(fixtures::continuous("nope"), Err(qsdlab::Error::Config(_))));
    assert!(matches!(fixtures::discrete("nope"), Err(qsdlab::Error::Config(_))));
}

#[test]
fn malformed_mechanisms_are_rejected() {
    assert!(BranchingMechanism::from_json(r#"{"family":"stable_plus","c":1.0}"#).is_err());
    assert!(BranchingMechanism::from_json(r#"{"family":"stable_plus","c":1.0,"alpha":1.5}"#).is_err());
    assert!(BranchingMechanism::from_json(r#"{"family":"stable_minus","k":-1.0,"alpha":0.5}"#).is_err());
    assert!(BranchingMechanism::from_json(r#"{"family":"stable_plus","c":1.0,"alpha":1.0,"extra":0}"#).is_err());
}
