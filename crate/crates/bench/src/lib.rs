//! Criterion benchmarks for the navform crate; see `benches/`.

use std::path::Path;

use navform::Scenario;

/// The shipped reference scenario.
pub fn reference_scenario() -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference_fig1.toml");
    Scenario::load(path).expect("reference scenario loads")
}
