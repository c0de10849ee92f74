use proptest::prelude::*;
use rotflow::geometry::{compute_curvature, uniform_grid, RadialProfile};
use rotflow::initial_data::{make_arctan_cylindrical, make_cylinder};
use rotflow::rescaling::{
    bryant_profile, bryant_profile_with_tip_curvature, parabolic_rescale, profile_match, soliton_residual,
    unit_sphere_volume, volume_ratio_proxy, Model, Normalization,
};
use rotflow::Error;

#[test]
fn soliton_solves_its_equations() {
    for n in 2..=6 {
        let sol = bryant_profile(n, 30.0, 3001).unwrap();
        assert!(soliton_residual(&sol) <= 1e-8, "n={n}: {}", soliton_residual(&sol));
        assert!((sol.r_tip - 1.0).abs() < 1e-9);
        assert!(sol.phi_hat.windows(2).all(|w| w[1] > w[0]));
        assert!((sol.phi_s[0] - 1.0).abs() < 1e-12);
        let p = RadialProfile::new(n, sol.s_hat.clone(), sol.phi_hat.clone(), vec![1.0; 3001]).unwrap();
        let c = compute_curvature(&p).unwrap();
        assert!(c.k.iter().chain(&c.l).all(|&v| v > 0.0), "n={n}");
    }
}

#[test]
fn soliton_family_is_scale_covariant() {
    let (n, m) = (3, 2001);
    let unit = bryant_profile(n, 20.0, m).unwrap();
    for r in [0.25, 4.0, 100.0] {
        let scaled = bryant_profile_with_tip_curvature(n, r, 20.0 / r.sqrt(), m).unwrap();
        let worst = (0..m)
            .map(|i| (scaled.phi_hat[i] * r.sqrt() - unit.phi_hat[i]).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6 * unit.phi_hat[m - 1], "R(0)={r}: {worst}");
    }
}

#[test]
fn shrinking_cylinder_is_self_similar() {
    let n = 3;
    let base = parabolic_rescale(&make_cylinder(n, 1.0, uniform_grid(3.0, 301)).unwrap(), 150, Normalization::RmAtPoint)
        .unwrap();
    for t in [0.05, 0.1, 0.2, 0.24] {
        let r = (1.0 - 2.0 * (n - 1) as f64 * t).sqrt();
        let mut snap = make_cylinder(n, r, uniform_grid(3.0, 301)).unwrap();
        snap.t = t;
        let rescaled = parabolic_rescale(&snap, 150, Normalization::RmAtPoint).unwrap();
        let m = profile_match(&rescaled, &Model::Cylinder, (-2.0, 2.0)).unwrap();
        assert!(m.residual <= 1e-6, "t={t}: {}", m.residual);
        assert!((rescaled.lambda - 1.0 / (r * r)).abs() < 1e-9 / (r * r));
        let diff = rescaled.phi_hat.iter().zip(&base.phi_hat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6);
    }
}

#[test]
fn soliton_matches_itself_after_rescaling() {
    let sol = bryant_profile(2, 40.0, 4001).unwrap();
    let shrink = 1e-2;
    let x: Vec<f64> = sol.s_hat.iter().map(|s| s * shrink).collect();
    let phi: Vec<f64> = sol.phi_hat.iter().map(|p| p * shrink).collect();
    let snap = RadialProfile::new(2, x, phi, vec![1.0; 4001]).unwrap();
    let rescaled = parabolic_rescale(&snap, 0, Normalization::ROrigin).unwrap();
    assert!((rescaled.lambda - 1e4).abs() < 1e-3);
    let m = profile_match(&rescaled, &Model::Bryant(sol), (0.0, 10.0)).unwrap();
    assert!(m.residual < 1e-8, "{}", m.residual);
}

#[test]
fn flat_and_tipless_snapshots_are_rejected() {
    let flat = RadialProfile::from_fn(2, uniform_grid(5.0, 100), |s| s).unwrap();
    assert!(matches!(parabolic_rescale(&flat, 10, Normalization::RmAtPoint), Err(Error::ZeroCurvature(_))));
    let cyl = make_cylinder(2, 1.0, uniform_grid(3.0, 100)).unwrap();
    assert!(matches!(parabolic_rescale(&cyl, 0, Normalization::ROrigin), Err(Error::NotApplicable(_))));
}

#[test]
fn volume_ratio_limits() {
    // unit cylinder: C(n) ν / ν^{n+1}
    let n = 3;
    let cyl = parabolic_rescale(&make_cylinder(n, 1.0, uniform_grid(50.0, 501)).unwrap(), 0, Normalization::RmAtPoint)
        .unwrap();
    for nu in [1.0, 4.0, 16.0] {
        let v = volume_ratio_proxy(&cyl, nu).unwrap();
        let want = unit_sphere_volume(n) * nu.powi(-(n as i32));
        assert!((v - want).abs() < 1e-12 * want.max(1.0), "{v} vs {want}");
    }

    // regular tip opening to a cone of slope β: C(n) βⁿ/(n+1)
    let beta: f64 = 0.4;
    let m = 40001;
    let cone = RadialProfile::from_fn(2, uniform_grid(4000.0, m), |s| beta * s + (1.0 - beta) * s.tanh()).unwrap();
    let cone = parabolic_rescale(&cone, 0, Normalization::ROrigin).unwrap();
    let nu = 0.5 * cone.s_hat[m - 1];
    let v = volume_ratio_proxy(&cone, nu).unwrap();
    let want = unit_sphere_volume(2) * beta * beta / 3.0;
    assert!((v - want).abs() < 0.01 * want, "{v} vs {want}");

    // paraboloid-like soliton: the ratio decays
    let sol = bryant_profile(2, 400.0, 8001).unwrap();
    let snap = RadialProfile::new(2, sol.s_hat.clone(), sol.phi_hat.clone(), vec![1.0; 8001]).unwrap();
    let resc = parabolic_rescale(&snap, 0, Normalization::ROrigin).unwrap();
    let ratios: Vec<f64> = [10.0, 40.0, 160.0].iter().map(|&nu| volume_ratio_proxy(&resc, nu).unwrap()).collect();
    assert!(ratios.windows(2).all(|w| w[1] < 0.6 * w[0]), "{ratios:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Exact up to round-off, which the second differences amplify by 1/h².
    #[test]
    fn normalized_curvature_is_one(c in 0.05f64..20.0, base in 1usize..400) {
        let p = make_arctan_cylindrical(2, uniform_grid(10.0, 401)).unwrap().scaled(c);
        let at_point = parabolic_rescale(&p, base, Normalization::RmAtPoint).unwrap();
        prop_assert!((at_point.curvature_at_base().unwrap() - 1.0).abs() <= 1e-10);
        let origin = parabolic_rescale(&p, base, Normalization::ROrigin).unwrap();
        prop_assert_eq!(origin.base_index, 0);
        prop_assert!((origin.curvature_at_base().unwrap() - 1.0).abs() <= 1e-10);
    }
}
