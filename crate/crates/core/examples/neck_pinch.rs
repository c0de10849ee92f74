//! Neckpinch from a sine-modulated profile in dimension 4: the singular
//! time, the blow-up rate and the neck radius against √(T−t).

use rotflow::diagnostics::MonitorSettings;
use rotflow::evolution::{run, OuterBc, SimConfig};
use rotflow::geometry::uniform_grid;
use rotflow::initial_data::make_neck_sine_walpha;

fn main() -> rotflow::Result<()> {
    let profile = make_neck_sine_walpha(4, 0.01, uniform_grid(8.0, 2048), 0.1)?;
    let config = SimConfig {
        n: 4,
        outer_bc: OuterBc::AsymptoticLinear,
        stop_curvature: 1e6,
        snapshot_growth: 10f64.powf(0.25),
        ..Default::default()
    };
    let out = run(&config, &profile, &MonitorSettings::default())?;
    let report = &out.report;
    println!("stop: {:?}, {} steps", out.stop, out.final_state.step_count);
    println!("verdict: {:?}", report.type_verdict);
    println!("T_hat = {:?}", report.t_hat);
    println!("blow-up exponent = {:?}", report.blowup_exponent);
    if let Some(band) = &report.rate_band {
        println!(
            "phi_min^2/(T-t) in [{:.3}, {:.3}] (band [3, 6]): {}",
            band.min_ratio, band.max_ratio, band.ok
        );
    }
    for m in &report.profile_match.cylinder {
        println!("cylinder residual at t={:.8}: {:.3}", m.t, m.result.residual);
    }
    Ok(())
}
