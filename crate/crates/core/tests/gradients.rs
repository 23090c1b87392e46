mod common;

use common::grad_cases::all_cases;
use common::FD_REL_TOL;

#[test]
fn central_differences_match_reverse_mode() {
    let mut failures = Vec::new();
    for (name, err, leaf) in all_cases() {
        eprintln!("{name:<36} {err:.3e} ({leaf})");
        if !(err < FD_REL_TOL) {
            failures.push(format!("{name}: {err:.3e} at {leaf}"));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
