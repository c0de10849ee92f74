//! Initial metrics and the neck-pinching criterion.

use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, ExtremumKind};
use crate::error::{Error, Result};
use crate::geometry::{self, RadialProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Uniform,
    /// `x_max · sinh(γu)/sinh(γ)` on u ∈ [0, 1]: finer toward the origin.
    Graded,
}

impl GridKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GridKind::Uniform => "uniform",
            GridKind::Graded => "graded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(GridKind::Uniform),
            "graded" => Some(GridKind::Graded),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_max: f64,
    pub points: usize,
    pub kind: GridKind,
}

const GRADING: f64 = 3.0;

impl GridSpec {
    pub fn nodes(&self) -> Result<Vec<f64>> {
        if !(self.x_max > 0.0) {
            return Err(Error::param("grid.x_max", "must be positive"));
        }
        if self.points < geometry::MIN_POINTS {
            return Err(Error::param(
                "grid.points",
                format!("need at least {}", geometry::MIN_POINTS),
            ));
        }
        let m = self.points;
        Ok(match self.kind {
            GridKind::Uniform => geometry::uniform_grid(self.x_max, m),
            GridKind::Graded => (0..m)
                .map(|i| {
                    if i == m - 1 {
                        return self.x_max;
                    }
                    let u = i as f64 / (m - 1) as f64;
                    self.x_max * (GRADING * u).sinh() / GRADING.sinh()
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    ArctanCylindrical,
    SineWalphaNeck,
    FlatPerturbation,
    CustomProfile,
    /// φ ≡ r₀ on a mirror segment.
    Cylinder,
}

impl InitialKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InitialKind::ArctanCylindrical => "arctan_cylindrical",
            InitialKind::SineWalphaNeck => "sine_walpha_neck",
            InitialKind::FlatPerturbation => "flat_perturbation",
            InitialKind::CustomProfile => "custom_profile",
            InitialKind::Cylinder => "cylinder",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "arctan_cylindrical" => Some(InitialKind::ArctanCylindrical),
            "sine_walpha_neck" | "sine_walpha" => Some(InitialKind::SineWalphaNeck),
            "flat_perturbation" => Some(InitialKind::FlatPerturbation),
            "custom_profile" => Some(InitialKind::CustomProfile),
            "cylinder" => Some(InitialKind::Cylinder),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    pub kind: InitialKind,
    pub n: usize,
    pub alpha: f64,
    pub eps_close: f64,
    /// Radius of the cylinder kind.
    pub r0: f64,
    pub grid: GridSpec,
    pub smoothing_width: f64,
    pub decay_eps: f64,
    /// CSV with columns x, phi and optionally xi (custom profiles only).
    pub profile_path: Option<PathBuf>,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            kind: InitialKind::ArctanCylindrical,
            n: 2,
            alpha: 0.01,
            eps_close: 0.05,
            r0: 1.0,
            grid: GridSpec {
                x_max: 10.0,
                points: 1024,
                kind: GridKind::Uniform,
            },
            smoothing_width: 0.1,
            decay_eps: 2.0,
            profile_path: None,
        }
    }
}

impl InitialDataSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("dimension", "must be >= 2"));
        }
        if self.grid.points < 64 {
            return Err(Error::param("grid.points", "need at least 64"));
        }
        match self.kind {
            InitialKind::SineWalphaNeck => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return Err(Error::param("ic.alpha", format!("{} not in (0, 1)", self.alpha)));
                }
                if !(self.grid.x_max > std::f64::consts::PI) {
                    return Err(Error::param("grid.x_max", "must exceed pi for the neck"));
                }
                if !(self.smoothing_width > 0.0) {
                    return Err(Error::param("ic.smoothing_width", "must be positive"));
                }
            }
            InitialKind::FlatPerturbation => {
                if !(self.eps_close >= 0.0) {
                    return Err(Error::param("ic.eps_close", "must be >= 0"));
                }
            }
            InitialKind::CustomProfile => {
                if self.profile_path.is_none() {
                    return Err(Error::param("ic.profile", "custom profile needs a path"));
                }
            }
            InitialKind::Cylinder => {
                if !(self.r0 > 0.0) || !self.r0.is_finite() {
                    return Err(Error::param("ic.r0", "must be positive"));
                }
            }
            InitialKind::ArctanCylindrical => {}
        }
        if !(self.decay_eps > 0.0) {
            return Err(Error::param("monitors.decay_eps", "must be positive"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<RadialProfile> {
        self.validate()?;
        let x = self.grid.nodes()?;
        match self.kind {
            InitialKind::ArctanCylindrical => make_arctan_cylindrical(self.n, x),
            InitialKind::SineWalphaNeck => make_neck_sine_walpha(self.n, self.alpha, x, self.smoothing_width),
            InitialKind::FlatPerturbation => make_flat_perturbation(self.n, self.eps_close, x),
            InitialKind::Cylinder => make_cylinder(self.n, self.r0, x),
            InitialKind::CustomProfile => {
                let path = self.profile_path.as_ref().unwrap();
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                custom_profile(self.n, &text)
            }
        }
    }
}

/// φ = arctan(x) with ξ ≡ 1.
pub fn make_arctan_cylindrical(n: usize, x: Vec<f64>) -> Result<RadialProfile> {
    RadialProfile::from_fn(n, x, f64::atan)
}

/// φ ≡ r₀, mirrored at the first node.
pub fn make_cylinder(n: usize, r0: f64, x: Vec<f64>) -> Result<RadialProfile> {
    let m = x.len();
    RadialProfile::segment(n, x, vec![r0; m], vec![1.0; m])
}

/// `√(α + (x − π/2)²)`.
pub fn w_alpha(alpha: f64, x: f64) -> f64 {
    (alpha + (x - FRAC_PI_2) * (x - FRAC_PI_2)).sqrt()
}

/// The crossing of sin and W_α in (0, π/2).
pub fn sine_walpha_crossing(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param("alpha", format!("{alpha} not in (0, 1)")));
    }
    let g = |x: f64| x.sin() - w_alpha(alpha, x);
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quintic on [a, b] matching value, slope and second derivative of two
/// functions at the ends; returns the value and first two derivatives.
fn hermite5(a: f64, b: f64, left: [f64; 3], right: [f64; 3], x: f64) -> [f64; 3] {
    let h = b - a;
    let u = (x - a) / h;
    let (u2, u3) = (u * u, u * u * u);
    let (u4, u5) = (u3 * u, u3 * u2);
    // basis values and their first two u-derivatives
    let basis = [
        [1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5, -30.0 * u2 + 60.0 * u3 - 30.0 * u4, -60.0 * u + 180.0 * u2 - 120.0 * u3],
        [u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5, 1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4, -36.0 * u + 96.0 * u2 - 60.0 * u3],
        [
            0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5),
            0.5 * (2.0 * u - 9.0 * u2 + 12.0 * u3 - 5.0 * u4),
            0.5 * (2.0 - 18.0 * u + 36.0 * u2 - 20.0 * u3),
        ],
        [10.0 * u3 - 15.0 * u4 + 6.0 * u5, 30.0 * u2 - 60.0 * u3 + 30.0 * u4, 60.0 * u - 180.0 * u2 + 120.0 * u3],
        [-4.0 * u3 + 7.0 * u4 - 3.0 * u5, -12.0 * u2 + 28.0 * u3 - 15.0 * u4, -24.0 * u + 84.0 * u2 - 60.0 * u3],
        [0.5 * (u3 - 2.0 * u4 + u5), 0.5 * (3.0 * u2 - 8.0 * u3 + 5.0 * u4), 0.5 * (6.0 * u - 24.0 * u2 + 20.0 * u3)],
    ];
    let w = [left[0], h * left[1], h * h * left[2], right[0], h * right[1], h * h * right[2]];
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let v: f64 = basis.iter().zip(&w).map(|(bf, c)| bf[k] * c).sum();
        *o = v / h.powi(k as i32);
    }
    out
}

/// sin(x) glued to W_α at their crossing x_α through a C² quintic on
/// [x_α − w, x_α + w].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeckBlend {
    pub alpha: f64,
    pub crossing: f64,
    pub width: f64,
    left: [f64; 3],
    right: [f64; 3],
}

impl NeckBlend {
    pub fn new(alpha: f64, width: f64) -> Result<Self> {
        let xa = sine_walpha_crossing(alpha)?;
        let (a, b) = (xa - width, xa + width);
        if !(width > 0.0) || a <= 0.0 || b >= FRAC_PI_2 {
            return Err(Error::param(
                "smoothing_width",
                format!("blend [{a}, {b}] must lie inside (0, pi/2)"),
            ));
        }
        let wb = w_alpha(alpha, b);
        Ok(NeckBlend {
            alpha,
            crossing: xa,
            width,
            left: [a.sin(), a.cos(), -a.sin()],
            right: [wb, (b - FRAC_PI_2) / wb, alpha / (wb * wb * wb)],
        })
    }

    /// φ, φ_x and φ_xx at `x`.
    pub fn eval(&self, x: f64) -> [f64; 3] {
        let (a, b) = (self.crossing - self.width, self.crossing + self.width);
        if x <= a {
            [x.sin(), x.cos(), -x.sin()]
        } else if x >= b {
            let w = w_alpha(self.alpha, x);
            [w, (x - FRAC_PI_2) / w, self.alpha / (w * w * w)]
        } else {
            hermite5(a, b, self.left, self.right, x)
        }
    }
}

pub fn make_neck_sine_walpha(n: usize, alpha: f64, x: Vec<f64>, width: f64) -> Result<RadialProfile> {
    let blend = NeckBlend::new(alpha, width)?;
    RadialProfile::from_fn(n, x, |s| blend.eval(s)[0])
}

/// C² step: 0 for u ≤ 0, 1 for u ≥ 1.
fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Start and end of the raised band of [`make_flat_perturbation`].
pub const PERTURBATION_BAND: (f64, f64) = (1.0, 3.0);
/// Width of its gentle inner edge.
const RISE_WIDTH: f64 = 0.5;
/// Grid spacings needed across the steep outer edge.
const EDGE_NODES: f64 = 6.0;

/// φ = x(1 + η) with η = a on most of [1, 3], a = √(1+ε) − 1 so that
/// max(φ/x, x/φ)² = 1 + ε. The outer edge of the band drops fast enough to
/// open a bump followed by a neck.
pub fn make_flat_perturbation(n: usize, eps_close: f64, x: Vec<f64>) -> Result<RadialProfile> {
    if !(eps_close >= 0.0) {
        return Err(Error::param("eps_close", "must be >= 0"));
    }
    if eps_close == 0.0 {
        return RadialProfile::from_fn(n, x, |s| s);
    }
    let (lo, hi) = PERTURBATION_BAND;
    if *x.last().unwrap() <= hi {
        return Err(Error::param("grid.x_max", format!("must exceed {hi}")));
    }
    let amp = (1.0 + eps_close).sqrt() - 1.0;
    // φ_s = 1 + η + xη' turns negative once the drop is steeper than this
    let max_slope = 1.875;
    let critical = hi * amp * max_slope / (1.0 + amp);
    let width = 0.5 * critical;
    let h = x
        .windows(2)
        .filter(|w| w[1] > hi - width && w[0] < hi)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    if width < EDGE_NODES * h {
        return Err(Error::NoNeck(format!(
            "eps_close = {eps_close} needs an edge of width {width:.3e}; grid spacing {h:.3e} is too coarse"
        )));
    }
    let eta = move |s: f64| amp * smoothstep((s - lo) / RISE_WIDTH) * (1.0 - smoothstep((s - (hi - width)) / width));
    let p = RadialProfile::from_fn(n, x, |s| s * (1.0 + eta(s)))?;
    let count = diagnostics::phi_s_zero_count(&p)?;
    if count != 2 {
        return Err(Error::NoNeck(format!("perturbation produced {count} sign changes of phi_s")));
    }
    Ok(p)
}

/// Smallest ε with (1+ε)⁻¹ x ≤ φ ≤ (1+ε) x on the warped factor, i.e.
/// max over x > 0 of max(φ/x, x/φ)² − 1.
pub fn closeness_to_flat(profile: &RadialProfile) -> f64 {
    let s = geometry::arc_length(profile).unwrap_or_else(|_| profile.x.clone());
    s.iter()
        .zip(&profile.phi)
        .skip(1)
        .map(|(x, p)| {
            let r = (p / x).max(x / p);
            r * r - 1.0
        })
        .fold(0.0, f64::max)
}

/// Profile from CSV text with a header naming `x`, `phi` and optionally
/// `xi` (ξ ≡ 1 when absent).
pub fn custom_profile(n: usize, text: &str) -> Result<RadialProfile> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidProfile("empty profile file".into()))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let (ix, ip) = match (col("x"), col("phi")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidProfile("header needs x and phi columns".into())),
    };
    let iw = col("xi");
    let (mut x, mut phi, mut xi) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let num = |i: usize| -> Result<f64> {
            cells
                .get(i)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::InvalidProfile(format!("row {}: bad number", k + 2)))
        };
        x.push(num(ix)?);
        phi.push(num(ip)?);
        xi.push(match iw {
            Some(i) => num(i)?,
            None => 1.0,
        });
    }
    RadialProfile::new(n, x, phi, xi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchReport {
    pub x_star: f64,
    pub y_star: f64,
    pub phi_max0: f64,
    pub phi_min0: f64,
    /// φ(x*)/φ(y*).
    pub r: f64,
    /// Minimum of A = φ²(L − K) over the grid.
    pub beta: f64,
    /// √((n+1−2β)/(n−1) + 1).
    pub threshold: f64,
    pub criterion_met: bool,
}

/// √((n+1−2β)/(n−1) + 1).
pub fn pinching_threshold(n: usize, beta: f64) -> f64 {
    let nf = n as f64;
    ((nf + 1.0 - 2.0 * beta) / (nf - 1.0) + 1.0).sqrt()
}

/// Pinching ratio of the first bump and the first neck after it, compared
/// with the threshold set by β = inf A.
pub fn pinching_report(profile: &RadialProfile) -> Result<PinchReport> {
    let cps = diagnostics::critical_points(profile)?;
    let bump = cps
        .iter()
        .find(|c| c.kind == ExtremumKind::Bump)
        .ok_or_else(|| Error::NoNeck("no bump".into()))?;
    let neck = cps
        .iter()
        .find(|c| c.kind == ExtremumKind::Neck && c.x > bump.x)
        .ok_or_else(|| Error::NoNeck("no neck after the first bump".into()))?;
    let beta = geometry::compute_a(profile)?.into_iter().fold(f64::INFINITY, f64::min);
    let threshold = pinching_threshold(profile.n, beta);
    let r = bump.phi / neck.phi;
    Ok(PinchReport {
        x_star: bump.x,
        y_star: neck.x,
        phi_max0: bump.phi,
        phi_min0: neck.phi,
        r,
        beta,
        threshold,
        criterion_met: r > threshold,
    })
}
