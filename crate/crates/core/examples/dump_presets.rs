//! Writes the built-in scenario presets as JSON files.
//!
//! `cargo run --example dump_presets -- crates/core/scenarios`
use ris_semopt::scenario::Scenario;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "scenarios".into());
    std::fs::create_dir_all(&dir).expect("create output directory");
    for s in [Scenario::default(), Scenario::tiny()] {
        let path = format!("{dir}/{}.json", s.name);
        std::fs::write(&path, s.to_json() + "\n").expect("write scenario");
        println!("{path}  {}", &s.hash()[..12]);
    }
}
