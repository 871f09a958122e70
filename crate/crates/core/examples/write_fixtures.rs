//! Regenerates the JSON fixtures shipped in `fixtures/`.
//!
//! Usage: cargo run -p connkit --example write_fixtures [OUT_DIR]

use std::path::PathBuf;

use connkit::extraction::to_pretty_json;
use connkit::fixtures::Task;
use connkit::graph::save_graph;

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    std::fs::create_dir_all(&out)?;
    for task in Task::ALL {
        std::fs::write(out.join(format!("{task}.graph.json")), save_graph(&task.graph()))?;
        std::fs::write(out.join(format!("{task}.dataset.json")), to_pretty_json(&task.dataset()))?;
    }
    Ok(())
}
