//! Parabolic blow-up of snapshots and comparison with the two singularity
//! models: the shrinking cylinder and the Bryant steady soliton.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Inner, RadialProfile};
use crate::grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// λ = |Rm| at the base point.
    RmAtPoint,
    /// λ = R at the origin (base point forced to the origin).
    ROrigin,
}

/// `λ g` around a base point: arc length and radius both scaled by √λ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaledProfile {
    pub n: usize,
    pub lambda: f64,
    pub normalization: Normalization,
    pub base_index: usize,
    pub base_x: f64,
    pub base_time: f64,
    /// √λ (s − s(p)).
    pub s_hat: Vec<f64>,
    /// √λ φ.
    pub phi_hat: Vec<f64>,
    /// The snapshot scaled by √λ with its original origin kept; used to
    /// re-evaluate curvature after the blow-up.
    scaled: RadialProfile,
}

/// Below this value of λ·(max φ)² a snapshot counts as flat.
const FLAT_TOL: f64 = 1e-10;

pub fn parabolic_rescale(
    snapshot: &RadialProfile,
    base_index: usize,
    normalization: Normalization,
) -> Result<RescaledProfile> {
    snapshot.validate()?;
    let c = geometry::compute_curvature(snapshot)?;
    let base_index = match normalization {
        Normalization::ROrigin => {
            if snapshot.inner != Inner::Tip {
                return Err(Error::NotApplicable(
                    "origin normalization needs a regular origin".into(),
                ));
            }
            0
        }
        Normalization::RmAtPoint => base_index,
    };
    if base_index >= snapshot.len() {
        return Err(Error::param("base_index", "outside the grid"));
    }
    let lambda = match normalization {
        Normalization::RmAtPoint => c.rm_norm[base_index],
        Normalization::ROrigin => c.r[0],
    };
    let size = snapshot.max_phi();
    if !(lambda > 0.0) || lambda * size * size <= FLAT_TOL || !lambda.is_finite() {
        return Err(Error::ZeroCurvature(lambda));
    }
    let s = geometry::arc_length(snapshot)?;
    let root = lambda.sqrt();
    let s0 = s[base_index];
    let scaled = RadialProfile {
        x: snapshot.x.iter().map(|v| v * root).collect(),
        phi: snapshot.phi.iter().map(|v| v * root).collect(),
        ..snapshot.clone()
    };
    Ok(RescaledProfile {
        n: snapshot.n,
        lambda,
        normalization,
        base_index,
        base_x: snapshot.x[base_index],
        base_time: snapshot.t,
        s_hat: s.iter().map(|v| (v - s0) * root).collect(),
        phi_hat: snapshot.phi.iter().map(|v| v * root).collect(),
        scaled,
    })
}

impl RescaledProfile {
    /// The normalizing curvature re-evaluated on the rescaled metric; 1 up
    /// to roundoff.
    pub fn curvature_at_base(&self) -> Result<f64> {
        let c = geometry::compute_curvature(&self.scaled)?;
        Ok(match self.normalization {
            Normalization::RmAtPoint => c.rm_norm[self.base_index],
            Normalization::ROrigin => c.r[0],
        })
    }

    /// Two-column (ŝ, φ̂) CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s_hat,phi_hat\n");
        for (s, p) in self.s_hat.iter().zip(&self.phi_hat) {
            out.push_str(&format!("{s:.16e},{p:.16e}\n"));
        }
        out
    }
}

/// Rotationally symmetric steady gradient soliton `Ric = Hess f`,
/// normalized to R(0) = 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolitonProfile {
    pub n: usize,
    pub s_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    /// φ̂_s along the grid.
    pub phi_s: Vec<f64>,
    /// Potential f (f(0) = 0) and its derivative f_s.
    pub f: Vec<f64>,
    pub f_s: Vec<f64>,
    /// Scalar curvature at the tip.
    pub r_tip: f64,
}

/// Bryant soliton with R(0) = 1 on `m` uniform nodes of `[0, s_hat_max]`.
pub fn bryant_profile(n: usize, s_hat_max: f64, m: usize) -> Result<SolitonProfile> {
    bryant_profile_with_tip_curvature(n, 1.0, s_hat_max, m)
}

/// Bryant soliton with scalar curvature `r_tip` at the tip.
///
/// With `p = φ_s` and `w = f_s` the soliton equations
///
/// ```text
/// −n φ_ss/φ = f_ss,    (−φ φ_ss + (n−1)(1 − φ_s²))/φ² = f_s φ_s/φ
/// ```
///
/// become `p' = ((n−1)(1 − p²) − w φ p)/φ`, `w' = −n p'/φ`. A regular tip
/// leaves one free coefficient, `φ = s + a s³ + …` with `w = −6 n a s + …`,
/// and R(0) = −6 n(n+1) a fixes it. The shooting variable is that tip
/// coefficient: it is bisected until the solution carries the requested tip
/// curvature with φ_s staying in (0, 1].
pub fn bryant_profile_with_tip_curvature(
    n: usize,
    r_tip: f64,
    s_hat_max: f64,
    m: usize,
) -> Result<SolitonProfile> {
    if n < 2 {
        return Err(Error::param("n", "must be >= 2"));
    }
    if !(r_tip > 0.0) || !(s_hat_max > 0.0) || m < 3 {
        return Err(Error::param("bryant", "need r_tip > 0, s_max > 0, m >= 3"));
    }
    let nf = n as f64;
    let a = shoot_tip_coefficient(n, r_tip)?;
    let h = s_hat_max / (m - 1) as f64;
    let scale = 1.0 / r_tip.sqrt();
    let s_start = 1e-4 * scale;
    let mut y = tip_series(nf, a, s_start);
    let mut s = s_start;
    let mut out = SolitonProfile {
        n,
        s_hat: Vec::with_capacity(m),
        phi_hat: Vec::with_capacity(m),
        phi_s: Vec::with_capacity(m),
        f: Vec::with_capacity(m),
        f_s: Vec::with_capacity(m),
        r_tip: -6.0 * nf * (nf + 1.0) * a,
    };
    out.s_hat.push(0.0);
    out.phi_hat.push(0.0);
    out.phi_s.push(1.0);
    out.f.push(0.0);
    out.f_s.push(0.0);
    for i in 1..m {
        let target = i as f64 * h;
        while s < target {
            // steps shrink near the tip where the system is stiff
            let dh = (target - s).min(0.02 * s.max(s_start)).min(0.25 * scale).min(h / 4.0);
            y = rk4(nf, s, &y, dh);
            s += dh;
        }
        if y.iter().any(|v| !v.is_finite()) || !(y[0] > 0.0) {
            return Err(Error::NumericFailure(format!(
                "soliton integration broke down at s = {s}"
            )));
        }
        out.s_hat.push(target);
        out.phi_hat.push(y[0]);
        out.phi_s.push(y[1]);
        out.f_s.push(y[2]);
        out.f.push(y[3]);
    }
    Ok(out)
}

/// State `[φ, φ_s, f_s, f]` of the tip series at `s`.
fn tip_series(nf: f64, a: f64, s: f64) -> [f64; 4] {
    // φ = s + a s³ + c s⁵; w = b s + d s³ with b = −6na. The fifth-order
    // terms come from expanding both equations one order further.
    let b = -6.0 * nf * a;
    let (c, d) = fifth_order(nf, a, b);
    let s2 = s * s;
    [
        s + a * s * s2 + c * s * s2 * s2,
        1.0 + 3.0 * a * s2 + 5.0 * c * s2 * s2,
        b * s + d * s * s2,
        0.5 * b * s2 + 0.25 * d * s2 * s2,
    ]
}

/// Coefficients of s⁵ in φ and s³ in f_s.
fn fifth_order(nf: f64, a: f64, b: f64) -> (f64, f64) {
    // Substituting φ = s + a s³ + c s⁵, p = φ', w = b s + d s³ into
    //   φ p' = (n−1)(1 − p²) − w φ p      (order s⁴)
    //   φ w' = −n p'                      (order s³)
    // gives the linear system
    //   (20 + 10(n−1)) c + d = −12 a² − 9(n−1) a² − 4 a b
    //   20 n c + 3 d     = −b a
    let n1 = nf - 1.0;
    let (a11, a12, r1) = (20.0 + 10.0 * n1, 1.0, -12.0 * a * a - 9.0 * n1 * a * a - 4.0 * a * b);
    let (a21, a22, r2) = (20.0 * nf, 3.0, -b * a);
    let det = a11 * a22 - a12 * a21;
    ((r1 * a22 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det)
}

fn deriv(nf: f64, y: &[f64; 4]) -> [f64; 4] {
    let (phi, p, w) = (y[0], y[1], y[2]);
    let pp = ((nf - 1.0) * (1.0 - p * p) - w * phi * p) / phi;
    [p, pp, -nf * pp / phi, w]
}

fn rk4(nf: f64, _s: f64, y: &[f64; 4], h: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], k: &[f64; 4], c: f64| -> [f64; 4] {
        [a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]]
    };
    let k1 = deriv(nf, y);
    let k2 = deriv(nf, &add(y, &k1, 0.5 * h));
    let k3 = deriv(nf, &add(y, &k2, 0.5 * h));
    let k4 = deriv(nf, &add(y, &k3, h));
    let mut out = *y;
    for i in 0..4 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Bisects the tip coefficient `a` so that R(0) = −6n(n+1)a equals
/// `r_tip`, rejecting brackets whose solutions overshoot φ_s out of (0, 1]
/// on the first few curvature radii.
fn shoot_tip_coefficient(n: usize, r_tip: f64) -> Result<f64> {
    let nf = n as f64;
    let tip_r = |a: f64| -6.0 * nf * (nf + 1.0) * a;
    let (mut lo, mut hi) = (-r_tip / (nf * (nf + 1.0)), 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tip_r(mid) > r_tip {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-17 * lo.abs() {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    let scale = 1.0 / r_tip.sqrt();
    let mut s = 1e-4 * scale;
    let mut y = tip_series(nf, a, s);
    while s < 10.0 * scale {
        let dh = (0.02 * s).min(0.01 * scale);
        y = rk4(nf, s, &y, dh);
        s += dh;
        if !(y[1] > 0.0 && y[1] <= 1.0 + 1e-12) {
            return Err(Error::NumericFailure(format!(
                "tip coefficient {a:e}: phi_s = {} left (0, 1] at s = {s:e}",
                y[1]
            )));
        }
    }
    Ok(a)
}

/// Max-norm residual of both soliton equations, with φ_ss and f_ss taken
/// from sixth-order differences of the stored φ_s and f_s.
pub fn soliton_residual(sol: &SolitonProfile) -> f64 {
    let m = sol.s_hat.len();
    if m < 8 {
        return f64::INFINITY;
    }
    let nf = sol.n as f64;
    let mut worst: f64 = 0.0;
    for i in 1..m - 1 {
        let lo = i.saturating_sub(3).min(m - 7);
        let nodes = &sol.s_hat[lo..lo + 7];
        let w = crate::stencil::fd_weights(sol.s_hat[i], nodes, 1);
        let dot = |v: &[f64]| -> f64 { w.iter().zip(&v[lo..lo + 7]).map(|(a, b)| a * b).sum() };
        let pss = dot(&sol.phi_s);
        let fss = dot(&sol.f_s);
        let (phi, p, fs) = (sol.phi_hat[i], sol.phi_s[i], sol.f_s[i]);
        let e1 = -nf * pss / phi - fss;
        let e2 = (-phi * pss + (nf - 1.0) * (1.0 - p * p)) / (phi * phi) - fs * p / phi;
        worst = worst.max(e1.abs()).max(e2.abs());
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Model {
    /// φ̂ ≡ 1 (|Rm| = L = 1 on the unit cylinder).
    Cylinder,
    Bryant(SolitonProfile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchResult {
    pub residual: f64,
    pub window: (f64, f64),
    /// The data did not cover the whole window.
    pub truncated: bool,
    pub points: usize,
}

/// max over the window of |φ̂ − φ̂_model| / max φ̂_model, base points aligned
/// (tip to tip for the soliton) and no vertical shift.
pub fn profile_match(rescaled: &RescaledProfile, model: &Model, window: (f64, f64)) -> Result<MatchResult> {
    let (a, b) = window;
    if !(b > a) {
        return Err(Error::param("window", "empty interval"));
    }
    let s = &rescaled.s_hat;
    let lo = s.first().copied().unwrap_or(0.0);
    let hi = s.last().copied().unwrap_or(0.0);
    let mut truncated = lo > a + 1e-12 || hi < b - 1e-12;
    let idx: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= a && s[i] <= b).collect();
    if idx.is_empty() {
        return Err(Error::NotApplicable("no data inside the window".into()));
    }
    let targets: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
    let model_vals: Vec<f64> = match model {
        Model::Cylinder => vec![1.0; targets.len()],
        Model::Bryant(sol) => {
            if sol.n != rescaled.n {
                return Err(Error::param("model", "soliton dimension differs from the profile"));
            }
            let smax = *sol.s_hat.last().unwrap();
            if targets.iter().any(|&t| t < 0.0 || t > smax) {
                truncated = true;
            }
            let inside: Vec<f64> = targets.iter().map(|t| t.clamp(0.0, smax)).collect();
            grid::resample(&sol.s_hat, &sol.phi_hat, Inner::Tip, &inside)
        }
    };
    let norm = model_vals.iter().cloned().fold(0.0, f64::max);
    if !(norm > 0.0) {
        return Err(Error::NotApplicable("model vanishes on the window".into()));
    }
    let residual = idx
        .iter()
        .zip(&model_vals)
        .map(|(&i, mv)| (rescaled.phi_hat[i] - mv).abs())
        .fold(0.0, f64::max)
        / norm;
    Ok(MatchResult {
        residual,
        window,
        truncated,
        points: idx.len(),
    })
}

/// Volume of the unit n-sphere.
pub fn unit_sphere_volume(n: usize) -> f64 {
    let mut v = if n % 2 == 0 { 2.0 } else { 2.0 * std::f64::consts::PI };
    let mut k = if n % 2 == 0 { 0 } else { 1 };
    while k < n {
        k += 2;
        v *= 2.0 * std::f64::consts::PI / (k as f64 - 1.0);
    }
    v
}

/// `C(n) ∫_{|ŝ| ≤ ν} φ̂ⁿ dŝ / ν^{n+1}` around the base point.
pub fn volume_ratio_proxy(rescaled: &RescaledProfile, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::param("nu", "must be positive"));
    }
    let s = &rescaled.s_hat;
    let (lo, hi) = (s[0], *s.last().unwrap());
    let at_origin = rescaled.base_index == 0;
    if hi < nu || (!at_origin && lo > -nu) {
        return Err(Error::NotApplicable(format!(
            "profile spans [{lo}, {hi}], need radius {nu}"
        )));
    }
    let n = rescaled.n as i32;
    let mut integral = 0.0;
    for i in 1..s.len() {
        let (a, b) = (s[i - 1].max(-nu), s[i].min(nu));
        if b <= a {
            continue;
        }
        // linear φ̂ on the cell, integrated exactly at the clipped ends
        let lerp = |t: f64| {
            let w = (t - s[i - 1]) / (s[i] - s[i - 1]);
            rescaled.phi_hat[i - 1] * (1.0 - w) + rescaled.phi_hat[i] * w
        };
        let (fa, fb) = (lerp(a), lerp(b));
        integral += if (fb - fa).abs() > 1e-300 {
            (b - a) * (fb.powi(n + 1) - fa.powi(n + 1)) / ((n + 1) as f64 * (fb - fa))
        } else {
            (b - a) * fa.powi(n)
        };
    }
    Ok(unit_sphere_volume(rescaled.n) * integral / nu.powi(n + 1))
}
