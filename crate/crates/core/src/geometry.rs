//! Discretized rotationally symmetric metrics `g = ξ²(x) dx² + φ²(x) ĝ` and
//! their pointwise curvature.
//!
//! Derivatives in the geometric direction use `∂_s = (1/ξ) ∂_x`. The x-grid
//! may be graded; stencils act on the node index and the grid Jacobian is
//! folded into the weight `J = ξ · dx/du`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil::{self, Parity};

/// Minimum number of grid nodes of a profile.
pub const MIN_POINTS: usize = 16;

/// Relative radius below which an interior neck marks the state near-singular.
pub const NEAR_SINGULAR_RATIO: f64 = 1e-3;

/// Behaviour of the metric at the first grid node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inner {
    /// Regular origin of R^{n+1}: φ(0) = 0, φ odd and ξ even across x = 0.
    Tip,
    /// Mirror plane of a cylinder-like segment: φ and ξ both even across x[0].
    Mirror,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    /// The manifold is R^{n+1}; fibers are round n-spheres.
    pub n: usize,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    pub xi: Vec<f64>,
    pub t: f64,
    pub inner: Inner,
}

impl RadialProfile {
    /// Builds a profile with a regular origin and checks the type invariants.
    pub fn new(n: usize, x: Vec<f64>, phi: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let p = RadialProfile {
            n,
            x,
            phi,
            xi,
            t: 0.0,
            inner: Inner::Tip,
        };
        p.validate()?;
        Ok(p)
    }

    /// A mirror-symmetric segment (used for exact cylinders).
    pub fn segment(n: usize, x: Vec<f64>, phi: Vec<f64>, xi: Vec<f64>) -> Result<Self> {
        let p = RadialProfile {
            n,
            x,
            phi,
            xi,
            t: 0.0,
            inner: Inner::Mirror,
        };
        p.validate()?;
        Ok(p)
    }

    /// Profile given by `phi(s)` on a grid with ξ ≡ 1 (so x = s).
    pub fn from_fn(n: usize, x: Vec<f64>, phi: impl Fn(f64) -> f64) -> Result<Self> {
        let phi_v = x.iter().map(|&s| phi(s)).collect();
        let xi = vec![1.0; x.len()];
        Self::new(n, x, phi_v, xi)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.x.len();
        if self.n < 2 {
            return Err(Error::InvalidProfile(format!("n = {} < 2", self.n)));
        }
        if m < MIN_POINTS {
            return Err(Error::InvalidProfile(format!(
                "{m} grid points, need at least {MIN_POINTS}"
            )));
        }
        if self.phi.len() != m || self.xi.len() != m {
            return Err(Error::InvalidProfile("array lengths differ".into()));
        }
        if self.inner == Inner::Tip && self.x[0] != 0.0 {
            return Err(Error::InvalidProfile(format!("x[0] = {} != 0", self.x[0])));
        }
        if let Some(i) = self.x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProfile(format!(
                "x not strictly increasing at node {}",
                i + 1
            )));
        }
        if let Some(i) = self.xi.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "xi = {} not positive at node {i}",
                self.xi[i]
            )));
        }
        if let Some(i) = self.phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile(format!("phi not finite at node {i}")));
        }
        match self.inner {
            Inner::Tip => {
                if self.phi[0] != 0.0 {
                    return Err(Error::InvalidProfile(format!(
                        "phi(0) = {} != 0",
                        self.phi[0]
                    )));
                }
            }
            Inner::Mirror => {
                if !(self.phi[0] > 0.0) {
                    return Err(Error::SingularProfile {
                        index: 0,
                        x: self.x[0],
                        phi: self.phi[0],
                    });
                }
            }
        }
        if let Some(i) = (1..m).find(|&i| !(self.phi[i] > 0.0)) {
            return Err(Error::SingularProfile {
                index: i,
                x: self.x[i],
                phi: self.phi[i],
            });
        }
        Ok(())
    }

    /// Grid Jacobian `dx/du` with respect to the node index.
    pub fn grid_jacobian(&self) -> Vec<f64> {
        grid_jacobian(&self.x)
    }

    /// Scales the metric by `c²`: (φ, ξ) → (cφ, cξ).
    pub fn scaled(&self, c: f64) -> RadialProfile {
        let mut p = self.clone();
        p.phi.iter_mut().for_each(|v| *v *= c);
        p.xi.iter_mut().for_each(|v| *v *= c);
        p
    }

    pub fn max_phi(&self) -> f64 {
        self.phi.iter().cloned().fold(0.0, f64::max)
    }
}

/// `dx/du` on the node index, with x continued oddly across the first node.
pub fn grid_jacobian(x: &[f64]) -> Vec<f64> {
    let (d1, _) = stencil::d1_d2(x, Parity::Odd);
    d1
}

/// Arc length `s(x) = ∫₀ˣ ξ` by the trapezoid rule.
pub fn arc_length(profile: &RadialProfile) -> Result<Vec<f64>> {
    let (x, xi) = (&profile.x, &profile.xi);
    if x.len() != xi.len() || x.is_empty() {
        return Err(Error::InvalidProfile("array lengths differ".into()));
    }
    if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidProfile(format!(
            "x not strictly increasing at node {}",
            i + 1
        )));
    }
    if xi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidProfile("nonpositive xi".into()));
    }
    let mut s = Vec::with_capacity(x.len());
    s.push(0.0);
    for i in 1..x.len() {
        let ds = 0.5 * (xi[i] + xi[i - 1]) * (x[i] - x[i - 1]);
        s.push(s[i - 1] + ds);
    }
    Ok(s)
}

/// First and second s-derivatives of φ on every node, plus the third
/// derivative at a regular origin.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub phi_s: Vec<f64>,
    pub phi_ss: Vec<f64>,
    /// φ_sss at the tip; `None` for mirror segments.
    pub phi_sss0: Option<f64>,
}

impl Derivatives {
    /// `xu` is the grid Jacobian of `x`.
    pub fn compute(phi: &[f64], xi: &[f64], xu: &[f64], inner: Inner) -> Derivatives {
        let m = phi.len();
        let j: Vec<f64> = xi.iter().zip(xu).map(|(a, b)| a * b).collect();
        let phi_parity = match inner {
            Inner::Tip => Parity::Odd,
            Inner::Mirror => Parity::Even,
        };
        let (p1, p2) = stencil::d1_d2(phi, phi_parity);
        let (j1, j2) = stencil::d1_d2(&j, Parity::Even);
        let mut phi_s = vec![0.0; m];
        let mut phi_ss = vec![0.0; m];
        for i in 0..m {
            let ps = p1[i] / j[i];
            phi_s[i] = ps;
            phi_ss[i] = (p2[i] - ps * j1[i]) / (j[i] * j[i]);
        }
        let phi_sss0 = match inner {
            Inner::Tip => {
                phi_ss[0] = 0.0;
                let p3 = stencil::d3_at_first_odd(phi);
                Some(p3 / j[0].powi(3) - p1[0] * j2[0] / j[0].powi(4))
            }
            Inner::Mirror => None,
        };
        Derivatives {
            phi_s,
            phi_ss,
            phi_sss0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureField {
    pub k: Vec<f64>,
    pub l: Vec<f64>,
    pub ric_rad: Vec<f64>,
    pub ric_sph: Vec<f64>,
    pub r: Vec<f64>,
    /// |Rm| := max(|K|, |L|).
    pub rm_norm: Vec<f64>,
    /// A = φ²(L − K).
    pub a: Vec<f64>,
    pub phi_s: Vec<f64>,
    pub phi_ss: Vec<f64>,
    /// Some interior neck has radius below `NEAR_SINGULAR_RATIO · max φ`.
    pub near_singular: bool,
}

impl CurvatureField {
    pub fn sup_rm(&self) -> f64 {
        self.rm_norm.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_a(&self) -> f64 {
        self.a.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Scalar curvature evaluated directly from φ and its s-derivatives.
pub fn scalar_curvature_direct(n: usize, phi: f64, phi_s: f64, phi_ss: f64) -> f64 {
    let nf = n as f64;
    nf * (-2.0 * phi_ss / phi + (nf - 1.0) * (1.0 - phi_s * phi_s) / (phi * phi))
}

pub fn compute_curvature(profile: &RadialProfile) -> Result<CurvatureField> {
    profile.validate()?;
    let xu = profile.grid_jacobian();
    Ok(curvature_from_parts(profile, &xu))
}

/// Curvature with a precomputed grid Jacobian; the profile must be valid.
pub(crate) fn curvature_from_parts(profile: &RadialProfile, xu: &[f64]) -> CurvatureField {
    let d = Derivatives::compute(&profile.phi, &profile.xi, xu, profile.inner);
    curvature_from_derivatives(profile, d)
}

pub(crate) fn curvature_from_derivatives(profile: &RadialProfile, d: Derivatives) -> CurvatureField {
    let m = profile.len();
    let nf = profile.n as f64;
    let mut k = vec![0.0; m];
    let mut l = vec![0.0; m];
    let mut a = vec![0.0; m];
    for i in 0..m {
        let p = profile.phi[i];
        if i == 0 && profile.inner == Inner::Tip {
            // K(0) = L(0) = -φ_sss(0) by l'Hôpital.
            let v = -d.phi_sss0.unwrap_or(0.0);
            k[0] = v;
            l[0] = v;
            a[0] = 0.0;
            continue;
        }
        let ps = d.phi_s[i];
        let pss = d.phi_ss[i];
        k[i] = -pss / p;
        l[i] = (1.0 - ps * ps) / (p * p);
        a[i] = p * p * (l[i] - k[i]);
    }
    let ric_rad = k.iter().map(|v| nf * v).collect();
    let ric_sph = k.iter().zip(&l).map(|(k, l)| k + (nf - 1.0) * l).collect();
    let r = k
        .iter()
        .zip(&l)
        .map(|(k, l)| nf * (2.0 * k + (nf - 1.0) * l))
        .collect();
    let rm_norm = k.iter().zip(&l).map(|(k, l)| k.abs().max(l.abs())).collect();
    let near_singular = near_singular(&profile.phi, profile.inner);
    CurvatureField {
        k,
        l,
        ric_rad,
        ric_sph,
        r,
        rm_norm,
        a,
        phi_s: d.phi_s,
        phi_ss: d.phi_ss,
        near_singular,
    }
}

fn near_singular(phi: &[f64], inner: Inner) -> bool {
    let max = phi.iter().cloned().fold(0.0, f64::max);
    let thr = NEAR_SINGULAR_RATIO * max;
    let m = phi.len();
    let first = if inner == Inner::Tip { 1 } else { 0 };
    (first.max(1)..m - 1).any(|i| phi[i] < thr && phi[i] <= phi[i - 1] && phi[i] <= phi[i + 1])
}

/// A = φ²(L − K), the scale-invariant pinching quantity.
pub fn compute_a(profile: &RadialProfile) -> Result<Vec<f64>> {
    Ok(compute_curvature(profile)?.a)
}

/// The second route to A: φ φ_ss + 1 − φ_s².
pub fn compute_a_alt(profile: &RadialProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    let xu = profile.grid_jacobian();
    let d = Derivatives::compute(&profile.phi, &profile.xi, &xu, profile.inner);
    Ok(profile
        .phi
        .iter()
        .zip(d.phi_s.iter().zip(&d.phi_ss))
        .enumerate()
        .map(|(i, (p, (ps, pss)))| {
            if i == 0 && profile.inner == Inner::Tip {
                0.0
            } else {
                p * pss + 1.0 - ps * ps
            }
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    /// |φ_s(0) − 1|
    pub phi_s_residual: f64,
    /// |φ_ss(0)|
    pub phi_ss_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const DEFAULT_REGULARITY_TOL: f64 = 1e-6;

/// One-sided estimates of φ_s(0) and φ_ss(0), compared against the
/// smoothness conditions φ_s(0) = 1, φ_ss(0) = 0.
pub fn check_origin_regularity(profile: &RadialProfile, tol: f64) -> RegularityReport {
    let bad = RegularityReport {
        phi_s_residual: f64::INFINITY,
        phi_ss_residual: f64::INFINITY,
        tolerance: tol,
        passed: false,
    };
    if profile.len() < 6 || profile.inner != Inner::Tip || profile.phi[0] != 0.0 {
        return bad;
    }
    let xu = profile.grid_jacobian();
    let j: Vec<f64> = profile.xi.iter().zip(&xu).map(|(a, b)| a * b).collect();
    let p1 = stencil::one_sided_first(&profile.phi, 1);
    let p2 = stencil::one_sided_first(&profile.phi, 2);
    let j1 = stencil::one_sided_first(&j, 1);
    let ps = p1 / j[0];
    let pss = (p2 - ps * j1) / (j[0] * j[0]);
    let rs = (ps - 1.0).abs();
    let rss = pss.abs();
    RegularityReport {
        phi_s_residual: rs,
        phi_ss_residual: rss,
        tolerance: tol,
        passed: rs <= tol && rss <= tol,
    }
}

/// Uniform grid of `m` points on [0, x_max].
pub fn uniform_grid(x_max: f64, m: usize) -> Vec<f64> {
    let h = x_max / (m - 1) as f64;
    (0..m).map(|i| i as f64 * h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arctan_profile(m: usize, x_max: f64, n: usize) -> RadialProfile {
        RadialProfile::from_fn(n, uniform_grid(x_max, m), f64::atan).unwrap()
    }

    fn value_at(x: &[f64], f: &[f64], x0: f64) -> f64 {
        let i = x.iter().position(|&v| (v - x0).abs() < 1e-12).expect("node");
        f[i]
    }

    #[test]
    fn arc_length_identity_and_scaling() {
        let p = RadialProfile {
            n: 2,
            x: vec![0.0, 1.0, 2.0],
            phi: vec![0.0, 1.0, 2.0],
            xi: vec![1.0; 3],
            t: 0.0,
            inner: Inner::Tip,
        };
        assert_eq!(arc_length(&p).unwrap(), vec![0.0, 1.0, 2.0]);
        let q = RadialProfile {
            x: vec![0.0, 1.0],
            phi: vec![0.0, 1.0],
            xi: vec![2.0; 2],
            ..p
        };
        assert_eq!(arc_length(&q).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn arc_length_second_order() {
        // ∫₀¹ (1 + x) dx = 1.5; trapezoid is exact for linear weights, so use
        // a quadratic weight to see the O(Δx²) error: ∫₀¹ (1 + x²) dx = 4/3.
        let mut errs = vec![];
        for &m in &[17usize, 33, 65] {
            let x = uniform_grid(1.0, m);
            let xi: Vec<f64> = x.iter().map(|v| 1.0 + v).collect();
            let p = RadialProfile { n: 2, phi: x.clone(), x: x.clone(), xi, t: 0.0, inner: Inner::Tip };
            let s = arc_length(&p).unwrap();
            assert!((s[m - 1] - 1.5).abs() < 1e-12);
            let xi2: Vec<f64> = x.iter().map(|v| 1.0 + v * v).collect();
            let p2 = RadialProfile { xi: xi2, ..p };
            let s2 = arc_length(&p2).unwrap();
            errs.push((s2[m - 1] - 4.0 / 3.0).abs());
        }
        let ratio = errs[1] / errs[2];
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn arc_length_rejects_bad_input() {
        let p = RadialProfile {
            n: 2,
            x: vec![0.0, 1.0, 1.0],
            phi: vec![0.0, 1.0, 2.0],
            xi: vec![1.0; 3],
            t: 0.0,
            inner: Inner::Tip,
        };
        assert!(matches!(arc_length(&p), Err(Error::InvalidProfile(_))));
        let q = RadialProfile { x: vec![0.0, 1.0, 2.0], xi: vec![1.0, 0.0, 1.0], ..p };
        assert!(matches!(arc_length(&q), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn flat_metric_has_zero_curvature() {
        for n in [2, 3, 5] {
            let p = RadialProfile::from_fn(n, uniform_grid(5.0, 101), |s| s).unwrap();
            let c = compute_curvature(&p).unwrap();
            assert!(c.k.iter().chain(&c.l).chain(&c.r).all(|v| v.abs() < 1e-9));
            assert!(c.a.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn cylinder_curvature() {
        let x = uniform_grid(4.0, 64);
        let m = x.len();
        let p = RadialProfile::segment(2, x, vec![1.0; m], vec![1.0; m]).unwrap();
        let c = compute_curvature(&p).unwrap();
        for i in 0..m {
            assert!(c.k[i].abs() < 1e-12);
            assert!((c.l[i] - 1.0).abs() < 1e-12);
            assert!((c.r[i] - 2.0).abs() < 1e-12);
            assert!((c.a[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn arctan_curvature_at_s_equals_one() {
        // φ = atan s: φ_s = 1/(1+s²) = 0.5, φ_ss = −2s/(1+s²)² = −0.5 at s = 1.
        let p = arctan_profile(801, 8.0, 2);
        let c = compute_curvature(&p).unwrap();
        let phi1 = std::f64::consts::FRAC_PI_4;
        let k_exact = 0.5 / phi1;
        let l_exact = 0.75 / (phi1 * phi1);
        assert!((k_exact - 0.636_619_772).abs() < 1e-8);
        assert!((l_exact - 1.215_854_204).abs() < 1e-8);
        assert!((value_at(&p.x, &c.k, 1.0) - k_exact).abs() < 1e-7);
        assert!((value_at(&p.x, &c.l, 1.0) - l_exact).abs() < 1e-7);
        let a_exact = phi1 * -0.5 + 1.0 - 0.25;
        assert!((a_exact - 0.357_300_918).abs() < 1e-8);
        assert!((value_at(&p.x, &c.a, 1.0) - a_exact).abs() < 1e-7);
        assert!((value_at(&p.x, &c.ric_rad, 1.0) - 2.0 * k_exact).abs() < 1e-6);
        assert!((value_at(&p.x, &c.ric_sph, 1.0) - (k_exact + l_exact)).abs() < 1e-6);
    }

    #[test]
    fn arctan_tip_curvature_from_series() {
        // atan s = s − s³/3 + …  ⇒  φ_sss(0) = −2, so K(0) = L(0) = 2.
        let p = arctan_profile(401, 8.0, 2);
        let c = compute_curvature(&p).unwrap();
        assert!((c.k[0] - 2.0).abs() < 1e-5, "K(0) = {}", c.k[0]);
        assert!((c.l[0] - 2.0).abs() < 1e-5);
        assert!((c.l[1] - 2.0).abs() < 1e-3);
        assert_eq!(c.a[0], 0.0);
    }

    #[test]
    fn a_two_routes_agree() {
        let p = arctan_profile(257, 6.0, 3);
        let a = compute_a(&p).unwrap();
        let b = compute_a_alt(&p).unwrap();
        let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-10 * (1.0 + amax));
        }
    }

    #[test]
    fn regularity_checks() {
        let x = uniform_grid(4.0, 4096);
        let flat = RadialProfile::from_fn(2, x.clone(), |s| s).unwrap();
        let r = check_origin_regularity(&flat, DEFAULT_REGULARITY_TOL);
        assert!(r.passed && r.phi_s_residual < 1e-12 && r.phi_ss_residual < 1e-9);
        let at = RadialProfile::from_fn(2, x.clone(), f64::atan).unwrap();
        assert!(check_origin_regularity(&at, DEFAULT_REGULARITY_TOL).passed);
        let bad = RadialProfile::from_fn(2, x, |s| s + 0.1 * s * s).unwrap();
        let r = check_origin_regularity(&bad, DEFAULT_REGULARITY_TOL);
        assert!(!r.passed);
        assert!((r.phi_ss_residual - 0.2).abs() < 1e-6);
    }

    #[test]
    fn interior_zero_radius_is_singular() {
        let x = uniform_grid(4.0, 32);
        let mut phi: Vec<f64> = x.clone();
        phi[10] = 0.0;
        let p = RadialProfile { n: 2, x, xi: vec![1.0; 32], phi, t: 0.0, inner: Inner::Tip };
        assert!(matches!(
            compute_curvature(&p),
            Err(Error::SingularProfile { index: 10, .. })
        ));
    }

    #[test]
    fn graded_grid_matches_uniform() {
        // Same metric φ = atan s on a graded grid x = u + 0.3u² (ξ = ds/dx).
        let m = 801;
        let u = uniform_grid(4.0, m);
        let x: Vec<f64> = u.iter().map(|u| u + 0.05 * u * u * u).collect();
        let phi: Vec<f64> = u.iter().map(|&s| s.atan()).collect();
        let xi: Vec<f64> = u.iter().map(|u| 1.0 / (1.0 + 0.15 * u * u)).collect();
        let p = RadialProfile::new(2, x, phi, xi).unwrap();
        let c = compute_curvature(&p).unwrap();
        let i = 200; // s = 1
        assert!((c.k[i] - 0.5 / std::f64::consts::FRAC_PI_4).abs() < 1e-6);
        assert!((c.k[0] - 2.0).abs() < 1e-5);
    }
}
