//! Writes the default scene config and sweep specs as JSON starting points.
//!
//! `cargo run --example defaults -- <dir>`

use std::path::PathBuf;

use kaleidocal::harness::SweepSpec;
use kaleidocal::io::to_json;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("scene.json"), to_json(&kaleidocal::default_rig()))?;
    std::fs::write(dir.join("noise_sweep.json"), to_json(&SweepSpec::noise_sweep(100, 2024)))?;
    std::fs::write(dir.join("point_sweep.json"), to_json(&SweepSpec::point_sweep(100, 2024)))?;
    Ok(())
}
