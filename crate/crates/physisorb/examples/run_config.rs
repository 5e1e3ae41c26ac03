//! Full run from a config text, writing the CSV and JSON artifacts.
use physisorb::cli::run;
use physisorb::config::ScenarioConfig;

fn main() -> physisorb::Result<()> {
    let dir = std::env::temp_dir().join("physisorb_example_run");
    let text = format!(
        "preset = \"viii\"\nn_eps = 128\nn_zeta = 512\ncuts = [1.05, 2.0]\nout = \"{}\"\n",
        dir.display()
    );
    let cfg = ScenarioConfig::parse(&text, None)?;
    let outcome = run(&cfg)?;
    println!("artifacts in {}", dir.display());
    for p in &outcome.report.properties {
        println!("  {:<40} {:?}", p.name, p.status);
    }
    Ok(())
}
