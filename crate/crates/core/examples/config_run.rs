//! Config-driven run: parse, simulate into a directory, reload and
//! reclassify from disk.

use rotflow::cli;

const CONFIG: &str = "\
dimension = 2
ic.kind = flat_perturbation
ic.eps_close = 0.05
grid.x_max = 10
grid.points = 1024
time.t_max = 2
output.snapshot_times = 0.5, 1, 1.5
";

fn main() -> rotflow::Result<()> {
    let mut spec = cli::parse_config(CONFIG)?;
    spec.output_dir = std::env::temp_dir().join("rotflow-config-run");
    println!("resolved config ({}):\n{}", cli::config_hash(&spec), cli::emit_config(&spec));
    let (out, manifest) = cli::simulate(&spec)?;
    println!("wrote {} files to {}", manifest.outputs.len(), spec.output_dir.display());
    println!("verdict {:?}, final sup|Rm| {:.3e}", out.report.type_verdict, out.report.final_sup_rm);
    let stored = cli::load_run(&spec.output_dir)?;
    println!("reloaded {} records and {} snapshots", stored.trajectory.records.len(), stored.trajectory.snapshots.len());
    let again = cli::classify(&spec.output_dir)?;
    println!("reclassified: {:?}", again.type_verdict);
    Ok(())
}
