//! A round cylinder shrinks as r(t)² = r₀² − 2(n−1)t; compares the flow
//! against that law.

use rotflow::diagnostics::MonitorSettings;
use rotflow::evolution::{run, OuterBc, SimConfig};
use rotflow::geometry::uniform_grid;
use rotflow::initial_data::make_cylinder;

fn main() -> rotflow::Result<()> {
    let n = 3;
    let r0: f64 = 1.0;
    let profile = make_cylinder(n, r0, uniform_grid(4.0, 256))?;
    let config = SimConfig {
        n,
        outer_bc: OuterBc::CylinderExact,
        t_max: 0.2,
        ..Default::default()
    };
    let out = run(&config, &profile, &MonitorSettings::default())?;
    println!("{:>10} {:>14} {:>14} {:>10}", "t", "phi_min", "exact", "barrier");
    for r in out.trajectory.records.iter().step_by(10) {
        let exact = (r0 * r0 - 2.0 * (n - 1) as f64 * r.t).sqrt();
        println!(
            "{:10.5} {:14.10} {:14.10} {:10.2e}",
            r.t,
            r.phi_min.unwrap_or(f64::NAN),
            exact,
            r.barrier_residual.unwrap_or(0.0)
        );
    }
    println!("stopped: {:?} after {} steps", out.stop, out.final_state.step_count);
    Ok(())
}
