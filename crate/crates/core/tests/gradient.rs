//! Analytic gradients of the total loss against central finite differences.

mod common;

use std::time::Instant;

#[test]
fn analytic_gradient_matches_central_differences() {
    let started = Instant::now();
    let g = common::gradient_check(150);
    println!("checked {} of {} probed parameters, worst relative error {:e}", g.checked, g.probed, g.worst);
    assert!(g.failures.is_empty(), "gradient mismatches:\n{}", g.failures.join("\n"));
    assert_eq!(g.checked, 150, "too few parameters with measurable gradients");
    assert!(started.elapsed().as_secs() < 300);
}
