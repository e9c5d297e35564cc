//! Acceptance suite: one line per criterion with the measured value, the
//! pinned tolerance and the runtime against its budget.

use std::io::Write;

use emech_cli::checks::run_all;

#[test]
fn acceptance_criteria() {
    // written past the test harness capture so the lines always show
    let outcomes = run_all(|o| {
        let _ = writeln!(std::io::stderr(), "{}", o.line());
    });
    assert_eq!(outcomes.len(), 11);
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.line()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
