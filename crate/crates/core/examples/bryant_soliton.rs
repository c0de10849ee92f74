//! The Bryant soliton by shooting, and blow-up matching of a scaled copy.

use rotflow::geometry::RadialProfile;
use rotflow::rescaling::{bryant_profile, parabolic_rescale, profile_match, soliton_residual, Model, Normalization};

fn main() -> rotflow::Result<()> {
    let sol = bryant_profile(3, 20.0, 2001)?;
    println!("R(0) = {:.6}, equation residual {:.2e}", sol.r_tip, soliton_residual(&sol));
    for i in (0..sol.s_hat.len()).step_by(250) {
        println!(
            "s={:6.2} phi={:9.5} phi_s={:.5} phi^2/s={:.4}",
            sol.s_hat[i],
            sol.phi_hat[i],
            sol.phi_s[i],
            if i == 0 { 0.0 } else { sol.phi_hat[i].powi(2) / sol.s_hat[i] }
        );
    }

    // a copy with R(0) = 25, rescaled back to R(0) = 1
    let shrink = 0.2;
    let x: Vec<f64> = sol.s_hat.iter().map(|s| s * shrink).collect();
    let phi: Vec<f64> = sol.phi_hat.iter().map(|p| p * shrink).collect();
    let copy = RadialProfile::new(3, x, phi, vec![1.0; sol.s_hat.len()])?;
    let rescaled = parabolic_rescale(&copy, 0, Normalization::ROrigin)?;
    let m = profile_match(&rescaled, &Model::Bryant(sol), (0.0, 10.0))?;
    println!("lambda = {:.4}, residual against the soliton {:.2e}", rescaled.lambda, m.residual);
    Ok(())
}
