//! Builds every preset initial profile and reports its shape.

use rotflow::diagnostics::phi_s_zero_count;
use rotflow::geometry::uniform_grid;
use rotflow::initial_data::{
    closeness_to_flat, make_arctan_cylindrical, make_cylinder, make_flat_perturbation, make_neck_sine_walpha,
    pinching_report, sine_walpha_crossing,
};

fn main() -> rotflow::Result<()> {
    let arctan = make_arctan_cylindrical(2, uniform_grid(10.0, 512))?;
    println!("arctan: phi(x_max) = {:.6}, zero count {}", arctan.max_phi(), phi_s_zero_count(&arctan)?);

    let cylinder = make_cylinder(3, 1.5, uniform_grid(4.0, 256))?;
    println!("cylinder: radius {:.3}, {} nodes", cylinder.phi[0], cylinder.len());

    for alpha in [0.05, 0.01, 0.002] {
        let neck = make_neck_sine_walpha(4, alpha, uniform_grid(8.0, 2048), 0.1)?;
        let pinch = pinching_report(&neck)?;
        println!(
            "neck alpha={alpha}: crossing x={:.4}, bump {:.4} at {:.3}, neck {:.5} at {:.3}, ratio {:.2} vs threshold {:.3} -> {}",
            sine_walpha_crossing(alpha)?,
            pinch.phi_max0,
            pinch.x_star,
            pinch.phi_min0,
            pinch.y_star,
            pinch.r,
            pinch.threshold,
            pinch.criterion_met
        );
    }

    for eps in [0.05, 0.2] {
        let flat = make_flat_perturbation(2, eps, uniform_grid(10.0, 1024))?;
        println!(
            "flat eps={eps}: closeness {:.4}, zero count {}",
            closeness_to_flat(&flat),
            phi_s_zero_count(&flat)?
        );
    }
    Ok(())
}
