//! Runs the ten acceptance checks on the reference configuration and
//! prints one line per check.

use indefinite::acceptance::Suite;

#[test]
fn acceptance_criteria() {
    let suite = Suite::reference();
    let mut failed = Vec::new();
    for id in 1..=10 {
        let check = suite.run(id);
        println!("{check}");
        if !check.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed checks: {failed:?}");
}
