//! Sectional curvatures of the arctan profile and its origin regularity.

use rotflow::geometry::{check_origin_regularity, compute_curvature, uniform_grid, DEFAULT_REGULARITY_TOL};
use rotflow::initial_data::make_arctan_cylindrical;

fn main() -> rotflow::Result<()> {
    let profile = make_arctan_cylindrical(2, uniform_grid(10.0, 1024))?;
    let c = compute_curvature(&profile)?;
    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "x", "phi", "K", "L", "R");
    for i in (0..profile.len()).step_by(64) {
        println!(
            "{:8.4} {:12.6} {:12.6} {:12.6} {:12.6}",
            profile.x[i], profile.phi[i], c.k[i], c.l[i], c.r[i]
        );
    }
    println!("sup|Rm| = {:.6}  (tip value 2)", c.sup_rm());
    println!("min A   = {:.3e}", c.min_a());
    let reg = check_origin_regularity(&profile, DEFAULT_REGULARITY_TOL);
    println!(
        "origin: |phi_s(0)-1| = {:.2e}, |phi_ss(0)| = {:.2e}, passed = {}",
        reg.phi_s_residual, reg.phi_ss_residual, reg.passed
    );
    Ok(())
}
