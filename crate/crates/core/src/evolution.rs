//! Explicit integration of the rotationally symmetric Ricci flow.
//!
//! In a material coordinate x the flow reads
//!
//! ```text
//! φ_t = φ_ss − (n−1)(1 − φ_s²)/φ,      ξ_t = n (φ_ss/φ) ξ.
//! ```
//!
//! The integrator works in arc length instead: the grid is a set of fixed
//! s-values (ξ ≡ 1) and the radius is transported with the material drift
//! `V(s) = n ∫₀ˢ φ_ss/φ ds'`, which is how fast a material point moves away
//! from the origin. The grid is rebuilt around the curvature maximum as it
//! grows, so blow-up can be followed over many decades of |Rm|.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord, MonitorSettings, Monitor, SingularityReport};
use crate::banded::BandLu;
use crate::error::{Error, Result};
use crate::geometry::{self, CurvatureField, Derivatives, Inner, RadialProfile};
use crate::grid::{self, Focus};
use crate::stencil::{self, Parity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBc {
    /// φ pinned at the outer end.
    DirichletFixed,
    /// φ(x_max, t)² = φ(x_max, 0)² − 2(n−1)t.
    CylinderExact,
    /// φ_s = 1 at the last node (flat cone).
    AsymptoticLinear,
}

impl OuterBc {
    pub fn as_str(self) -> &'static str {
        match self {
            OuterBc::DirichletFixed => "dirichlet_fixed",
            OuterBc::CylinderExact => "cylinder_exact",
            OuterBc::AsymptoticLinear => "asymptotic_linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dirichlet_fixed" => Some(OuterBc::DirichletFixed),
            "cylinder_exact" => Some(OuterBc::CylinderExact),
            "asymptotic_linear" => Some(OuterBc::AsymptoticLinear),
            _ => None,
        }
    }
}

/// Time integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Midpoint RK2 under the parabolic step limit.
    #[default]
    Explicit,
    /// Linearly implicit Rosenbrock (ROS2); the step follows the curvature
    /// scale only.
    Implicit,
}

impl TimeScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeScheme::Explicit => "explicit",
            TimeScheme::Implicit => "implicit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "explicit" => Some(TimeScheme::Explicit),
            "implicit" => Some(TimeScheme::Implicit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub cfl: f64,
    pub scheme: TimeScheme,
    pub dt_init: f64,
    pub dt_max: f64,
    /// A run ends once sup|Rm| reaches this value.
    pub stop_curvature: f64,
    /// Flow-time limit.
    pub t_max: f64,
    pub outer_bc: OuterBc,
    /// Diagnostics are recorded every `record_every` steps, and additionally
    /// whenever sup|Rm| has grown by `record_growth` since the last record.
    pub record_every: u64,
    pub record_growth: f64,
    /// Flow times at which full profile snapshots are stored.
    pub snapshot_times: Vec<f64>,
    /// Extra snapshots each time sup|Rm| grows by this factor (0 disables).
    pub snapshot_growth: f64,
    pub max_steps: u64,
    /// Rebuild the grid around the curvature maximum as it sharpens.
    pub adapt_grid: bool,
    /// Radius of the comparison cylinder for the barrier monitor when the
    /// profile is cylindrical at infinity; the largest initial φ if unset.
    pub barrier_radius: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 2,
            cfl: 0.25,
            scheme: TimeScheme::Explicit,
            dt_init: 1e-6,
            dt_max: 1e-2,
            stop_curvature: 1e8,
            t_max: 10.0,
            outer_bc: OuterBc::DirichletFixed,
            record_every: 50,
            record_growth: 1.1,
            snapshot_times: Vec::new(),
            snapshot_growth: 0.0,
            max_steps: 200_000_000,
            adapt_grid: true,
            barrier_radius: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", "dimension parameter must be >= 2"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::param("cfl", format!("{} not in (0, 1]", self.cfl)));
        }
        if !(self.dt_max > 0.0) || !(self.dt_init > 0.0) {
            return Err(Error::param("dt_max", "time steps must be positive"));
        }
        if !(self.stop_curvature > 0.0) {
            return Err(Error::param("stop_curvature", "must be positive"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::param("t_max", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be >= 1"));
        }
        if !(self.record_growth > 1.0) {
            return Err(Error::param("record_growth", "must exceed 1"));
        }
        if self.snapshot_growth != 0.0 && !(self.snapshot_growth > 1.0) {
            return Err(Error::param("snapshot_growth", "must be 0 or exceed 1"));
        }
        Ok(())
    }
}

/// Outer boundary data fixed at the start of a run.
#[derive(Debug, Clone)]
pub struct Boundary {
    pub kind: OuterBc,
    phi_outer0: f64,
    t0: f64,
}

impl Boundary {
    pub fn new(kind: OuterBc, initial: &RadialProfile) -> Self {
        Boundary {
            kind,
            phi_outer0: *initial.phi.last().unwrap(),
            t0: initial.t,
        }
    }

    /// Radius imposed at the outer node at time `t`; `None` for the slope
    /// condition, which depends on the interior.
    pub fn outer_value(&self, n: usize, t: f64) -> Option<f64> {
        match self.kind {
            OuterBc::DirichletFixed => Some(self.phi_outer0),
            OuterBc::CylinderExact => {
                let v = self.phi_outer0 * self.phi_outer0 - 2.0 * (n as f64 - 1.0) * (t - self.t0);
                Some(if v > 0.0 { v.sqrt() } else { f64::NAN })
            }
            OuterBc::AsymptoticLinear => None,
        }
    }

    /// `∂_t φ` of the outer node at fixed arc length. The pinned and cylinder
    /// conditions hold for the material point, which drifts past the node
    /// with speed `v`, so the node also sees `−v φ_s`.
    fn outer_rate(&self, n: usize, phi: f64, phi_s: f64, v: f64) -> f64 {
        match self.kind {
            OuterBc::DirichletFixed => -v * phi_s,
            OuterBc::CylinderExact => -(n as f64 - 1.0) / phi - v * phi_s,
            OuterBc::AsymptoticLinear => 0.0,
        }
    }

    fn apply(&self, x: &[f64], phi: &mut [f64]) {
        if self.kind != OuterBc::AsymptoticLinear {
            return;
        }
        // one-sided φ_s = 1 through the last three nodes
        let m = phi.len();
        let w = stencil::fd_weights(x[m - 1], &x[m - 3..], 1);
        phi[m - 1] = (1.0 - w[0] * phi[m - 3] - w[1] * phi[m - 2]) / w[2];
    }
}

/// Right-hand side of the flow in the material coordinate: `(φ_t, ξ_t)` at
/// every node. The origin keeps φ_t = 0 and uses the limit φ_ss/φ → φ_sss(0)
/// for ξ_t; the outer node is left at zero (it is set by the boundary).
pub fn rhs(profile: &RadialProfile) -> Result<(Vec<f64>, Vec<f64>)> {
    profile.validate()?;
    let xu = profile.grid_jacobian();
    let d = Derivatives::compute(&profile.phi, &profile.xi, &xu, profile.inner);
    let m = profile.len();
    let nf = profile.n as f64;
    let mut dphi = vec![0.0; m];
    let mut dxi = vec![0.0; m];
    for i in 0..m - 1 {
        if i == 0 && profile.inner == Inner::Tip {
            dxi[0] = nf * d.phi_sss0.unwrap_or(0.0) * profile.xi[0];
            continue;
        }
        let phi = profile.phi[i];
        let (ps, pss) = (d.phi_s[i], d.phi_ss[i]);
        dphi[i] = pss - (nf - 1.0) * (1.0 - ps * ps) / phi;
        dxi[i] = nf * pss / phi * profile.xi[i];
    }
    Ok((dphi, dxi))
}

/// Re-expresses a profile with arc length as its coordinate (ξ ≡ 1).
pub fn to_arclength(profile: &RadialProfile) -> Result<RadialProfile> {
    profile.validate()?;
    let mut s = geometry::arc_length(profile)?;
    if profile.inner == Inner::Mirror {
        let x0 = profile.x[0];
        s.iter_mut().for_each(|v| *v += x0);
    }
    let p = RadialProfile {
        n: profile.n,
        x: s,
        phi: profile.phi.clone(),
        xi: vec![1.0; profile.len()],
        t: profile.t,
        inner: profile.inner,
    };
    p.validate()?;
    Ok(p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimState {
    pub profile: RadialProfile,
    pub t: f64,
    pub dt: f64,
    pub step_count: u64,
    pub singular_time_estimate: Option<f64>,
}

impl SimState {
    pub fn new(profile: RadialProfile) -> Self {
        let t = profile.t;
        SimState {
            profile,
            t,
            dt: 0.0,
            step_count: 0,
            singular_time_estimate: None,
        }
    }
}

/// Number of nodes next to a regular origin that are slaved to an odd
/// Taylor fit of the nodes beyond them.
///
/// Without it the drift quadrature puts an anti-diffusive weight of about
/// n/(2i) on node i, which outgrows the diffusion at the first n/2 nodes.
pub fn origin_patch_size(n: usize) -> usize {
    n / 2 + 1
}

/// Integrator on a fixed arc-length grid; caches the grid metrics and the
/// boundary data.
#[derive(Debug, Clone)]
pub struct Stepper {
    n: usize,
    inner: Inner,
    pub boundary: Boundary,
    pub scheme: TimeScheme,
    x: Vec<f64>,
    /// dx/du and its index derivative.
    j: Vec<f64>,
    j1: Vec<f64>,
    j2_first: f64,
    /// Origin patch as a linear map: node `1 + r` gets
    /// `s + Σ_c patch[r][c] (φ − s)` over nodes `k+1..=k+3`.
    patch: Vec<[f64; 3]>,
    /// Per node, `(column, ∂φ_s weight, ∂φ_ss weight)` in arc length.
    weights: Vec<Vec<(usize, f64, f64)>>,
    /// Per node `i ≥ 1`, quadrature weights in s for `∫` over `[x_{i−1}, x_i]`.
    intervals: Vec<Vec<(usize, f64)>>,
    /// Sub- and super-diagonals of the implicit system.
    bands: (usize, usize),
    focus: Option<Focus>,
}

/// Nodes per curvature radius demanded before the grid is rebuilt.
const RESOLUTION: f64 = 8.0;
/// Curvature-scale shrink factor that triggers a rebuild of a focused grid.
const REFOCUS_RATIO: f64 = 1.5;

impl Stepper {
    /// The profile must already be in arc-length form (ξ ≡ 1).
    pub fn new(initial: &RadialProfile, bc: OuterBc) -> Result<Self> {
        if initial.xi.iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidProfile(
                "stepper expects an arc-length profile (xi = 1)".into(),
            ));
        }
        let mut st = Stepper {
            n: initial.n,
            inner: initial.inner,
            boundary: Boundary::new(bc, initial),
            scheme: TimeScheme::Explicit,
            x: Vec::new(),
            j: Vec::new(),
            j1: Vec::new(),
            j2_first: 0.0,
            patch: Vec::new(),
            weights: Vec::new(),
            intervals: Vec::new(),
            bands: (0, 0),
            focus: None,
        };
        st.set_grid(initial.x.clone());
        Ok(st)
    }

    fn set_grid(&mut self, x: Vec<f64>) {
        let j = geometry::grid_jacobian(&x);
        let (j1, j2) = stencil::d1_d2(&j, Parity::Even);
        self.j2_first = j2[0];
        self.j1 = j1;
        self.j = j;
        self.patch = origin_patch(self.n, self.inner, &x);
        let parity = match self.inner {
            Inner::Tip => Parity::Odd,
            Inner::Mirror => Parity::Even,
        };
        let m = x.len();
        self.weights = (0..m)
            .map(|i| {
                let (j, j1) = (self.j[i], self.j1[i]);
                stencil::d1_d2_row(m, i, parity)
                    .into_iter()
                    .map(|(c, w1, w2)| (c, w1 / j, (w2 - w1 * j1 / j) / (j * j)))
                    .collect()
            })
            .collect();
        self.intervals = (0..m)
            .map(|i| {
                if i == 0 {
                    return Vec::new();
                }
                stencil::interval_row(m, i)
                    .into_iter()
                    .map(|(c, w)| (c, w * self.j[c]))
                    .collect()
            })
            .collect();
        self.x = x;
        // the sparsity pattern does not depend on the values
        let probe: Vec<f64> = (0..m).map(|i| 1.0 + i as f64).collect();
        let d = Derivatives {
            phi_s: vec![0.0; m],
            phi_ss: vec![0.0; m],
            phi_sss0: Some(0.0),
        };
        let (mut kl, mut ku) = (0, 0);
        self.assemble(&probe, &d, &probe, 1.0, &mut |r, c, _| {
            kl = kl.max(r.saturating_sub(c));
            ku = ku.max(c.saturating_sub(r));
        });
        self.bands = (kl, ku);
    }

    pub fn grid(&self) -> &[f64] {
        &self.x
    }

    pub fn grid_jacobian(&self) -> &[f64] {
        &self.j
    }

    pub fn focus(&self) -> Option<Focus> {
        self.focus
    }

    fn derivatives(&self, phi: &[f64]) -> Derivatives {
        let m = phi.len();
        let parity = match self.inner {
            Inner::Tip => Parity::Odd,
            Inner::Mirror => Parity::Even,
        };
        let (p1, p2) = stencil::d1_d2(phi, parity);
        let mut phi_s = vec![0.0; m];
        let mut phi_ss = vec![0.0; m];
        for i in 0..m {
            let (j, j1) = (self.j[i], self.j1[i]);
            let ps = p1[i] / j;
            phi_s[i] = ps;
            phi_ss[i] = (p2[i] - ps * j1) / (j * j);
        }
        let phi_sss0 = match self.inner {
            Inner::Tip => {
                phi_ss[0] = 0.0;
                let j0 = self.j[0];
                let p3 = stencil::d3_at_first_odd(phi);
                Some(p3 / j0.powi(3) - p1[0] * self.j2_first / j0.powi(4))
            }
            Inner::Mirror => None,
        };
        Derivatives {
            phi_s,
            phi_ss,
            phi_sss0,
        }
    }

    pub fn curvature(&self, p: &RadialProfile) -> CurvatureField {
        geometry::curvature_from_derivatives(p, self.derivatives(&p.phi))
    }

    /// Material drift `V` on the grid.
    pub fn drift(&self, phi: &[f64]) -> Vec<f64> {
        let d = self.derivatives(phi);
        self.drift_from(phi, &d)
    }

    fn drift_from(&self, phi: &[f64], d: &Derivatives) -> Vec<f64> {
        let m = phi.len();
        let nf = self.n as f64;
        let q = |i: usize| -> f64 {
            if i == 0 && self.inner == Inner::Tip {
                d.phi_sss0.unwrap_or(0.0)
            } else {
                d.phi_ss[i] / phi[i]
            }
        };
        let qs: Vec<f64> = (0..m).map(q).collect();
        let mut v = vec![0.0; m];
        for i in 1..m {
            let step: f64 = self.intervals[i].iter().map(|&(c, w)| w * qs[c]).sum();
            v[i] = v[i - 1] + nf * step;
        }
        v
    }

    /// `∂_t φ` at fixed arc length; zero at the origin.
    pub fn rate(&self, phi: &[f64]) -> Vec<f64> {
        let d = self.derivatives(phi);
        let v = self.drift_from(phi, &d);
        self.rate_from(phi, &d, &v)
    }

    fn rate_from(&self, phi: &[f64], d: &Derivatives, v: &[f64]) -> Vec<f64> {
        let m = phi.len();
        let nf = self.n as f64;
        let first = if self.inner == Inner::Tip { 1 } else { 0 };
        let mut out = vec![0.0; m];
        for i in first..m - 1 {
            let (ps, pss) = (d.phi_s[i], d.phi_ss[i]);
            out[i] = pss - (nf - 1.0) * (1.0 - ps * ps) / phi[i] - v[i] * ps;
        }
        out[m - 1] = self.boundary.outer_rate(self.n, phi[m - 1], d.phi_s[m - 1], v[m - 1]);
        out
    }

    /// Slaves the first nodes after a regular origin to the odd expansion
    /// `s + c₃s³ + c₅s⁵ + c₇s⁷` through the next three nodes.
    fn regularize_origin(&self, phi: &mut [f64]) {
        let k = self.patch.len();
        if k == 0 {
            return;
        }
        phi[0] = 0.0;
        for (r, w) in self.patch.iter().enumerate() {
            let i = r + 1;
            phi[i] = self.x[i]
                + (0..3)
                    .map(|c| w[c] * (phi[k + 1 + c] - self.x[k + 1 + c]))
                    .sum::<f64>();
        }
    }

    fn finish_stage(&self, phi: &mut [f64]) {
        self.boundary.apply(&self.x, phi);
        self.regularize_origin(phi);
        if self.inner == Inner::Tip {
            phi[0] = 0.0;
        }
    }

    /// One step of size `dt` with the configured scheme.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        let next = match self.scheme {
            TimeScheme::Explicit => self.midpoint_step(state, dt)?,
            TimeScheme::Implicit => self.rosenbrock_step(state, dt)?,
        };
        let profile = RadialProfile {
            phi: next,
            t: state.t + dt,
            ..state.profile.clone()
        };
        profile.validate()?;
        Ok(SimState {
            profile,
            t: state.t + dt,
            dt,
            step_count: state.step_count + 1,
            singular_time_estimate: state.singular_time_estimate,
        })
    }

    fn overrun(state: &SimState) -> Error {
        Error::BlowUpOverrun {
            t: state.t,
            step: state.step_count,
        }
    }

    fn midpoint_step(&self, state: &SimState, dt: f64) -> Result<Vec<f64>> {
        let phi = &state.profile.phi;
        let k1 = self.rate(phi);
        let mut half: Vec<f64> = phi.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        self.finish_stage(&mut half);
        if half.iter().any(|v| !v.is_finite()) {
            return Err(Self::overrun(state));
        }
        let k2 = self.rate(&half);
        let mut next: Vec<f64> = phi.iter().zip(&k2).map(|(a, b)| a + dt * b).collect();
        self.finish_stage(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Self::overrun(state));
        }
        Ok(next)
    }

    /// The two-stage Rosenbrock scheme ROS2: second order for any Jacobian,
    /// and L-stable.
    fn rosenbrock_step(&self, state: &SimState, dt: f64) -> Result<Vec<f64>> {
        let p = &state.profile;
        let m = p.len();
        let d = self.derivatives(&p.phi);
        let v = self.drift_from(&p.phi, &d);
        let f0 = self.rate_from(&p.phi, &d, &v);
        let lu = self.implicit_matrix(&p.phi, &d, &v, ROS2_GAMMA * dt)?;
        let solve = |f: &[f64]| -> Vec<f64> {
            let mut b = vec![0.0; 2 * m];
            for i in 0..m {
                if !self.is_constraint(i, m) {
                    b[2 * i] = f[i];
                }
            }
            lu.solve(&mut b);
            (0..m).map(|i| b[2 * i]).collect()
        };
        let k1 = solve(&f0);
        let mut mid: Vec<f64> = p.phi.iter().zip(&k1).map(|(a, k)| a + dt * k).collect();
        self.finish_stage(&mut mid);
        if mid.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Self::overrun(state));
        }
        let f1 = self.rate(&mid);
        let r2: Vec<f64> = f1.iter().zip(&k1).map(|(f, k)| f - 2.0 * k).collect();
        let k2 = solve(&r2);
        let mut next: Vec<f64> = (0..m)
            .map(|i| p.phi[i] + dt * (1.5 * k1[i] + 0.5 * k2[i]))
            .collect();
        self.finish_stage(&mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Self::overrun(state));
        }
        Ok(next)
    }

    /// Rows fixed by an algebraic relation rather than the flow: the origin,
    /// the patched nodes and a slope-type outer node.
    fn is_constraint(&self, i: usize, m: usize) -> bool {
        (self.inner == Inner::Tip && i <= self.patch.len())
            || (i == m - 1 && self.boundary.kind == OuterBc::AsymptoticLinear)
    }

    /// Factorized `I − h J`, with J the Jacobian of [`Stepper::rate`].
    fn implicit_matrix(&self, phi: &[f64], d: &Derivatives, v: &[f64], h: f64) -> Result<BandLu> {
        let (kl, ku) = self.bands;
        let mut lu = BandLu::zeros(2 * phi.len(), kl, ku);
        self.assemble(phi, d, v, h, &mut |r, c, val| lu.add(r, c, val));
        lu.factor()?;
        Ok(lu)
    }

    /// Entries of `I − h J` on the unknowns `(δφ_0, δV_0, δφ_1, δV_1, …)`.
    ///
    /// The drift is a running integral, so its Jacobian is dense below the
    /// diagonal; carrying the drift increment as a second unknown per node
    /// keeps the system banded.
    fn assemble(
        &self,
        phi: &[f64],
        d: &Derivatives,
        v: &[f64],
        h: f64,
        put: &mut impl FnMut(usize, usize, f64),
    ) {
        let m = phi.len();
        let nf = self.n as f64;
        let w = &self.weights;
        let k = self.patch.len();
        let tip = self.inner == Inner::Tip;
        // ∂q_l/∂φ for q = φ_ss/φ, or φ_sss at a regular origin
        let dq = |l: usize, scale: f64, put: &mut dyn FnMut(usize, f64)| {
            if l == 0 && tip {
                let j0 = self.j[0];
                let j03 = j0 * j0 * j0;
                for (c, wc) in stencil::d3_first_odd_row() {
                    put(c, scale * wc / j03);
                }
                // w[0] holds p1 weights over J; φ_sss0 subtracts p1·j2/J⁴
                for &(c, a, _) in &w[0] {
                    put(c, -scale * a * self.j2_first / j03);
                }
            } else {
                for &(c, _, b) in &w[l] {
                    put(c, scale * b / phi[l]);
                }
                put(l, -scale * d.phi_ss[l] / (phi[l] * phi[l]));
            }
        };
        for i in 0..m {
            let (rx, ry) = (2 * i, 2 * i + 1);
            if tip && i == 0 {
                put(rx, rx, 1.0);
            } else if tip && i <= k {
                put(rx, rx, 1.0);
                for c in 0..3 {
                    put(rx, 2 * (k + 1 + c), -self.patch[i - 1][c]);
                }
            } else if i == m - 1 && self.boundary.kind == OuterBc::AsymptoticLinear {
                let wb = stencil::fd_weights(self.x[m - 1], &self.x[m - 3..], 1);
                for c in 0..3 {
                    put(rx, 2 * (m - 3 + c), wb[c]);
                }
            } else if i == m - 1 {
                let mut diag = 1.0;
                if self.boundary.kind == OuterBc::CylinderExact {
                    diag -= h * (nf - 1.0) / (phi[i] * phi[i]);
                }
                put(rx, rx, diag);
                for &(c, a, _) in &w[i] {
                    put(rx, 2 * c, h * v[i] * a);
                }
                put(rx, ry, h * d.phi_s[i]);
            } else {
                let (ps, p) = (d.phi_s[i], phi[i]);
                put(rx, rx, 1.0 - h * (nf - 1.0) * (1.0 - ps * ps) / (p * p));
                for &(c, a, b) in &w[i] {
                    let coef = b + 2.0 * (nf - 1.0) * ps * a / p - v[i] * a;
                    put(rx, 2 * c, -h * coef);
                }
                put(rx, ry, h * ps);
            }
            // drift row: δV_i − δV_{i−1} − n Σ w δq = 0
            put(ry, ry, 1.0);
            if i > 0 {
                put(ry, ry - 2, -1.0);
                for &(l, w) in &self.intervals[i] {
                    dq(l, -nf * w, &mut |c, val| put(ry, 2 * c, val));
                }
            }
        }
    }

    /// Where the grid should be focused for the curvature field `c`, if the
    /// current grid no longer resolves it.
    pub fn wanted_focus(&self, c: &CurvatureField) -> Option<Focus> {
        let sup = c.sup_rm();
        if !(sup > 0.0) || !sup.is_finite() {
            return None;
        }
        let scale = 1.0 / sup.sqrt();
        let imax = c
            .rm_norm
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > c.rm_norm[best] { i } else { best });
        let mut center = self.x[imax];
        if center - self.x[0] < 4.0 * scale {
            center = self.x[0];
        }
        let stale = match self.focus {
            None => grid::spacing_at(&self.x, center) * RESOLUTION > scale,
            Some(f) => scale * REFOCUS_RATIO < f.scale || (center - f.center).abs() > f.scale,
        };
        let s_max = *self.x.last().unwrap();
        (stale && center < s_max).then_some(Focus { center, scale })
    }

    /// Rebuilds the grid around `focus` and transfers the state onto it.
    pub fn regrid(&mut self, state: &SimState, focus: Focus) -> Result<SimState> {
        let p = &state.profile;
        let m = p.len();
        let x0 = p.x[0];
        let s_max = *p.x.last().unwrap();
        let local = Focus {
            center: focus.center - x0,
            scale: focus.scale,
        };
        let x: Vec<f64> = grid::focused_grid(m, s_max - x0, local)?
            .into_iter()
            .map(|s| s + x0)
            .collect();
        let mut phi = grid::resample(&p.x, &p.phi, p.inner, &x);
        *phi.last_mut().unwrap() = *p.phi.last().unwrap();
        self.set_grid(x.clone());
        self.focus = Some(focus);
        self.regularize_origin(&mut phi);
        if p.inner == Inner::Tip {
            phi[0] = 0.0;
        }
        let profile = RadialProfile {
            x,
            phi,
            ..p.clone()
        };
        profile.validate()?;
        Ok(SimState {
            profile,
            ..state.clone()
        })
    }
}

/// Per patched node, the weights mapping `φ − s` on the three nodes beyond
/// the patch to `φ − s` on the node; empty when no patch applies.
fn origin_patch(n: usize, inner: Inner, x: &[f64]) -> Vec<[f64; 3]> {
    let k = origin_patch_size(n);
    if inner != Inner::Tip || x.len() < k + 5 {
        return Vec::new();
    }
    let mut a = [[0.0; 3]; 3];
    for r in 0..3 {
        let s = x[k + 1 + r];
        let s2 = s * s;
        a[r] = [s * s2, s * s2 * s2, s * s2 * s2 * s2];
    }
    // columns of a⁻¹
    let mut inv = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut e = [0.0; 3];
        e[c] = 1.0;
        let Some(col) = solve3(a, e) else {
            return Vec::new();
        };
        for r in 0..3 {
            inv[r][c] = col[r];
        }
    }
    (1..=k)
        .map(|i| {
            let s = x[i];
            let s2 = s * s;
            let basis = [s * s2, s * s2 * s2, s * s2 * s2 * s2];
            let mut w = [0.0; 3];
            for (c, wc) in w.iter_mut().enumerate() {
                *wc = (0..3).map(|r| basis[r] * inv[r][c]).sum();
            }
            w
        })
        .collect()
}

/// Diagonal shift of the Rosenbrock scheme.
const ROS2_GAMMA: f64 = 1.0 + std::f64::consts::FRAC_1_SQRT_2;

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = a;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *o = det(mc) / d;
    }
    Some(out)
}

/// `cfl · min((ξΔx)²/2, 0.1/(1 + sup|Rm|))` over interior nodes, clamped to
/// `[0, dt_max]`: the step limit of the explicit scheme.
pub fn adaptive_dt(state: &SimState, cfl: f64, dt_max: f64) -> Result<f64> {
    let p = &state.profile;
    let c = geometry::compute_curvature(p)?;
    let xu = p.grid_jacobian();
    let j: Vec<f64> = p.xi.iter().zip(&xu).map(|(a, b)| a * b).collect();
    Ok(dt_bound(TimeScheme::Explicit, p, &j, c.sup_rm(), cfl, dt_max))
}

fn dt_bound(scheme: TimeScheme, p: &RadialProfile, j: &[f64], sup_rm: f64, cfl: f64, dt_max: f64) -> f64 {
    let curv = 0.1 / (1.0 + sup_rm);
    let local = match scheme {
        TimeScheme::Explicit => {
            let m = p.len();
            let first = if p.inner == Inner::Tip { 1 } else { 0 };
            j[first..m - 1]
                .iter()
                .fold(f64::INFINITY, |acc, h| acc.min(0.5 * h * h))
        }
        TimeScheme::Implicit => f64::INFINITY,
    };
    (cfl * local.min(curv)).clamp(0.0, dt_max)
}

/// A single step with the given boundary condition. The state is first
/// put in arc-length form.
pub fn step(state: &SimState, dt: f64, bc: OuterBc) -> Result<SimState> {
    let profile = to_arclength(&state.profile)?;
    let st = Stepper::new(&profile, bc)?;
    st.step(
        &SimState {
            profile,
            ..state.clone()
        },
        dt,
    )
}

/// Singular-time estimate from the trailing decade of curvature growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularTimeEstimate {
    pub t_hat: f64,
    /// One-sigma uncertainty of the intercept from the regression.
    pub std_error: f64,
    /// max |u − fit| / max u over the window, with u = 1/sup|Rm|.
    pub residual: f64,
    /// The window is visibly non-linear in u (Type-II-like growth).
    pub large_residual: bool,
    pub samples: usize,
}

/// Minimum samples in the last decade of growth for an estimate.
pub const MIN_ESTIMATE_SAMPLES: usize = 10;
/// Relative fit residual above which the window is flagged as non-linear.
pub const LARGE_RESIDUAL: f64 = 1e-3;

/// Relative dips below this count as discretization noise (a regrid moves
/// the finite-difference curvature by about this much).
pub const MONOTONE_SLACK: f64 = 1e-3;

/// Extrapolates `u(t) = 1/sup|Rm|` linearly to zero over the trailing
/// quarter-decade of curvature, or the trailing decade when the quarter
/// holds fewer than [`MIN_ESTIMATE_SAMPLES`] samples.
///
/// Linear extrapolation lands early whenever u is convex in t, which is the
/// case for every law growing faster than 1/(T − t); a short window keeps
/// that bias small.
pub fn estimate_singular_time(history: &[(f64, f64)]) -> Result<SingularTimeEstimate> {
    let Some(&(_, last)) = history.last() else {
        return Err(Error::NoEstimate("empty history".into()));
    };
    if !(last > 0.0) {
        return Err(Error::NoEstimate("no curvature".into()));
    }
    let since = |ratio: f64| {
        history
            .iter()
            .rposition(|&(_, r)| r < ratio * last)
            .map_or(0, |i| i + 1)
    };
    let quarter = since(10f64.powf(-0.25));
    let start = if history.len() - quarter >= MIN_ESTIMATE_SAMPLES {
        quarter
    } else {
        since(0.1)
    };
    let w = &history[start..];
    if w.len() < MIN_ESTIMATE_SAMPLES {
        return Err(Error::NoEstimate(format!(
            "{} samples in the last decade, need {MIN_ESTIMATE_SAMPLES}",
            w.len()
        )));
    }
    if w.windows(2).any(|p| p[1].1 < p[0].1 * (1.0 - MONOTONE_SLACK) || p[1].0 <= p[0].0) {
        return Err(Error::NoEstimate("curvature not monotone in the window".into()));
    }
    let k = w.len() as f64;
    let t0 = w[0].0;
    let (mut st, mut su, mut stt, mut stu) = (0.0, 0.0, 0.0, 0.0);
    for &(t, r) in w {
        let (t, u) = (t - t0, 1.0 / r);
        st += t;
        su += u;
        stt += t * t;
        stu += t * u;
    }
    let den = k * stt - st * st;
    if !(den > 0.0) {
        return Err(Error::NoEstimate("degenerate time window".into()));
    }
    let slope = (k * stu - st * su) / den;
    let icpt = (su - slope * st) / k;
    if !(slope < 0.0) {
        return Err(Error::NoEstimate("curvature not growing".into()));
    }
    let t_hat = t0 - icpt / slope;
    let mut umax: f64 = 0.0;
    let mut rmax: f64 = 0.0;
    let mut ss = 0.0;
    for &(t, r) in w {
        let u = 1.0 / r;
        let e = u - (icpt + slope * (t - t0));
        umax = umax.max(u);
        rmax = rmax.max(e.abs());
        ss += e * e;
    }
    let residual = rmax / umax;
    // delta method on T = t0 - a/b
    let std_error = if w.len() > 2 {
        let sigma2 = ss / (k - 2.0);
        let var_b = k * sigma2 / den;
        let var_a = sigma2 * stt / den;
        let cov = -st * sigma2 / den;
        let (da, db) = (-1.0 / slope, icpt / (slope * slope));
        (da * da * var_a + db * db * var_b + 2.0 * da * db * cov).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(SingularTimeEstimate {
        t_hat,
        std_error,
        residual,
        large_residual: residual > LARGE_RESIDUAL,
        samples: w.len(),
    })
}

/// A stored full profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub step: u64,
    pub sup_rm: f64,
    pub profile: RadialProfile,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<Snapshot>,
}

impl Trajectory {
    /// `(t, sup|Rm|)` of every record.
    pub fn curvature_history(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.sup_rm)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum StopReason {
    CurvatureThreshold,
    TimeLimit,
    StepLimit,
    /// The step failed; the final state is the last good one.
    StepFailure(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: SingularityReport,
    pub final_state: SimState,
    pub stop: StopReason,
    pub regrids: usize,
}

/// Integrates from `initial` until sup|Rm| reaches the threshold, the time
/// limit, or a step fails. A failing step ends the run with
/// [`StopReason::StepFailure`] and the last good state.
pub fn run(config: &SimConfig, initial: &RadialProfile, monitors: &MonitorSettings) -> Result<RunOutput> {
    config.validate()?;
    if initial.n != config.n {
        return Err(Error::param(
            "n",
            format!("profile has n = {}, config n = {}", initial.n, config.n),
        ));
    }
    let profile = to_arclength(initial)?;
    let mut stepper = Stepper::new(&profile, config.outer_bc)?;
    stepper.scheme = config.scheme;
    let mut state = SimState::new(profile);
    let mut monitor = Monitor::new(monitors.clone(), &state.profile, config);
    let mut traj = Trajectory::default();
    let mut snap_times = config.snapshot_times.clone();
    snap_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut next_snap = 0;
    let mut last_record_rm = f64::NAN;
    let mut last_snap_rm = f64::NAN;
    let mut regrids = 0;
    let mut dt_prev = config.dt_init;
    let mut history: Vec<(f64, f64)> = Vec::new();

    let stop = loop {
        let mut c = stepper.curvature(&state.profile);
        if config.adapt_grid {
            if let Some(f) = stepper.wanted_focus(&c) {
                match stepper.regrid(&state, f) {
                    Ok(s) => {
                        state = s;
                        regrids += 1;
                        c = stepper.curvature(&state.profile);
                    }
                    Err(e) => break StopReason::StepFailure(e.to_string()),
                }
            }
        }
        let sup = c.sup_rm();
        let reached = sup >= config.stop_curvature;
        let timed_out = state.t >= config.t_max * (1.0 - 1e-14);
        let step_limit = state.step_count >= config.max_steps;
        let due = state.step_count % config.record_every == 0
            || !(sup < last_record_rm * config.record_growth)
            || reached
            || timed_out
            || step_limit;
        if due {
            let rec = monitor.record(&state, &c);
            history.push((rec.t, rec.sup_rm));
            if let Ok(est) = estimate_singular_time(&history) {
                state.singular_time_estimate = Some(est.t_hat);
            }
            traj.records.push(rec);
            last_record_rm = sup;
        }
        let mut snap = false;
        while next_snap < snap_times.len() && state.t >= snap_times[next_snap] {
            next_snap += 1;
            snap = true;
        }
        if config.snapshot_growth > 0.0 && !(sup < last_snap_rm * config.snapshot_growth) {
            snap = true;
        }
        if snap || reached || state.step_count == 0 {
            push_snapshot(&mut traj, &state, sup);
            last_snap_rm = sup;
        }
        if reached {
            break StopReason::CurvatureThreshold;
        }
        if timed_out {
            break StopReason::TimeLimit;
        }
        if step_limit {
            break StopReason::StepLimit;
        }
        let mut dt = dt_bound(config.scheme, &state.profile, stepper.grid_jacobian(), sup, config.cfl, config.dt_max);
        if state.step_count == 0 {
            dt = dt.min(config.dt_init.max(dt_prev));
        }
        // land on requested snapshot times and the time limit
        let mut horizon = config.t_max - state.t;
        if next_snap < snap_times.len() {
            horizon = horizon.min(snap_times[next_snap] - state.t);
        }
        if horizon > 0.0 && dt > horizon {
            dt = horizon;
        }
        match stepper.step(&state, dt) {
            Ok(s) => {
                dt_prev = dt;
                state = s;
            }
            Err(e) => {
                let c = stepper.curvature(&state.profile);
                let rec = monitor.record(&state, &c);
                if traj.records.last().map_or(true, |r| r.t < rec.t) {
                    traj.records.push(rec);
                }
                push_snapshot(&mut traj, &state, c.sup_rm());
                break StopReason::StepFailure(e.to_string());
            }
        }
    };
    if traj.snapshots.last().map_or(true, |s| s.t < state.t) {
        let sup = stepper.curvature(&state.profile).sup_rm();
        push_snapshot(&mut traj, &state, sup);
    }
    let report = diagnostics::classify_singularity(&mut traj, &stop, monitor.settings());
    Ok(RunOutput {
        trajectory: traj,
        report,
        final_state: state,
        stop,
        regrids,
    })
}

fn push_snapshot(traj: &mut Trajectory, state: &SimState, sup_rm: f64) {
    if traj.snapshots.last().map_or(false, |s| s.t == state.t) {
        return;
    }
    traj.snapshots.push(Snapshot {
        t: state.t,
        step: state.step_count,
        sup_rm,
        profile: state.profile.clone(),
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::uniform_grid;

    fn flat(n: usize, m: usize) -> RadialProfile {
        RadialProfile::from_fn(n, uniform_grid(5.0, m), |s| s).unwrap()
    }

    #[test]
    fn rhs_fixed_points_and_cylinder_rate() {
        let (dp, dx) = rhs(&flat(3, 64)).unwrap();
        assert!(dp.iter().chain(&dx).all(|v| v.abs() < 1e-9));
        let x = uniform_grid(4.0, 64);
        let cyl = RadialProfile::segment(2, x, vec![1.5; 64], vec![1.0; 64]).unwrap();
        let (dp, dx) = rhs(&cyl).unwrap();
        for i in 0..63 {
            assert!((dp[i] + 1.0 / 1.5).abs() < 1e-12);
            assert!(dx[i].abs() < 1e-12);
        }
    }

    #[test]
    fn rhs_on_arctan_matches_symbolic_value() {
        let m = 2001;
        let p = RadialProfile::from_fn(2, uniform_grid(4.0, m), f64::atan).unwrap();
        let (dp, _) = rhs(&p).unwrap();
        let i = 500; // s = 1
        let expect = -0.5 - 0.75 / std::f64::consts::FRAC_PI_4;
        assert!((dp[i] - expect).abs() < 1e-9, "{}", dp[i]);
    }

    #[test]
    fn flat_state_is_stationary() {
        let s = SimState::new(flat(2, 100));
        let next = step(&s, 1e-3, OuterBc::AsymptoticLinear).unwrap();
        for (a, b) in next.profile.phi.iter().zip(&s.profile.phi) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn cylinder_step_follows_reduced_ode() {
        let x = uniform_grid(3.0, 64);
        let cyl = RadialProfile::segment(2, x, vec![1.0; 64], vec![1.0; 64]).unwrap();
        let s = SimState::new(cyl);
        let next = step(&s, 1e-4, OuterBc::CylinderExact).unwrap();
        for p in &next.profile.phi {
            let d = 1.0 - p * p;
            // the midpoint stage sees the exact boundary value, so agreement is O(dt²)
            assert!((d - 2e-4).abs() < 1e-8, "{d}");
        }
    }

    #[test]
    fn adaptive_dt_formula() {
        let p = RadialProfile::from_fn(2, uniform_grid(1.0, 101), |s| s).unwrap();
        let dt = adaptive_dt(&SimState::new(p), 0.5, 1.0).unwrap();
        assert!((dt - 2.5e-5).abs() < 1e-15);
    }

    #[test]
    fn singular_time_from_linear_inverse_curvature() {
        let h: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let t = 0.5 - 0.05 * 10f64.powf(-2.0 * i as f64 / 39.0);
                (t, 1.0 / (0.5 - t))
            })
            .collect();
        let e = estimate_singular_time(&h).unwrap();
        assert!((e.t_hat - 0.5).abs() < 1e-12);
        assert!(e.residual < 1e-10);
        assert!(!e.large_residual);
    }

    #[test]
    fn singular_time_rejects_short_or_nonmonotone_windows() {
        let h: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 1.0 + i as f64)).collect();
        assert!(matches!(estimate_singular_time(&h), Err(Error::NoEstimate(_))));
        let mut h: Vec<(f64, f64)> = (0..30).map(|i| (i as f64 * 0.01, 1.0 / (1.0 - i as f64 * 0.01))).collect();
        h[25].1 = 0.5 * h[24].1 + 0.5 * h[23].1;
        assert!(matches!(estimate_singular_time(&h), Err(Error::NoEstimate(_))));
    }

    fn arctan_arclength(m: usize) -> RadialProfile {
        let p = RadialProfile::from_fn(2, uniform_grid(6.0, m), f64::atan).unwrap();
        to_arclength(&p).unwrap()
    }

    fn integrate(stepper: &Stepper, p: &RadialProfile, t_end: f64, steps: usize) -> Vec<f64> {
        let mut s = SimState::new(p.clone());
        let dt = t_end / steps as f64;
        for _ in 0..steps {
            s = stepper.step(&s, dt).unwrap();
        }
        s.profile.phi
    }

    #[test]
    fn rosenbrock_is_second_order_in_time() {
        let p = arctan_arclength(129);
        let mut st = Stepper::new(&p, OuterBc::CylinderExact).unwrap();
        st.scheme = TimeScheme::Implicit;
        let t_end = 0.05;
        let exact = integrate(&st, &p, t_end, 1280);
        let err = |k: usize| {
            let a = integrate(&st, &p, t_end, k);
            a.iter().zip(&exact).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(10), err(20), err(40));
        let slope = ((e1 / e2).log2() + (e2 / e3).log2()) / 2.0;
        assert!(slope >= 1.8, "errors {e1:.3e} {e2:.3e} {e3:.3e}, slope {slope:.3}");
    }

    #[test]
    fn implicit_converges_to_the_explicit_run() {
        let p = RadialProfile::from_fn(2, uniform_grid(6.0, 257), f64::atan).unwrap();
        let go = |scheme, cfl| {
            let config = SimConfig {
                n: 2,
                scheme,
                cfl,
                outer_bc: OuterBc::CylinderExact,
                t_max: 0.1,
                adapt_grid: false,
                ..Default::default()
            };
            run(&config, &p, &MonitorSettings::default()).unwrap().final_state
        };
        // the explicit step is bounded by the grid, far below the implicit one
        let reference = go(TimeScheme::Explicit, 0.25);
        let gap = |cfl| {
            let s = go(TimeScheme::Implicit, cfl);
            assert_eq!(s.t, reference.t);
            s.profile.phi.iter().zip(&reference.profile.phi).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (gap(0.25), gap(0.125));
        assert!(coarse < 1e-4, "{coarse:.3e}");
        assert!(fine < coarse / 3.0, "{coarse:.3e} -> {fine:.3e}");
    }

    #[test]
    fn bryant_soliton_is_stationary_under_the_implicit_scheme() {
        let sol = crate::rescaling::bryant_profile(2, 40.0, 801).unwrap();
        let m = sol.s_hat.len();
        let p = RadialProfile::new(2, sol.s_hat.clone(), sol.phi_hat.clone(), vec![1.0; m]).unwrap();
        let config = SimConfig {
            n: 2,
            scheme: TimeScheme::Implicit,
            cfl: 1.0,
            outer_bc: OuterBc::DirichletFixed,
            t_max: 1.0,
            adapt_grid: false,
            ..Default::default()
        };
        let out = run(&config, &p, &MonitorSettings::default()).unwrap();
        let r_tip = geometry::compute_curvature(&out.final_state.profile).unwrap().r[0];
        assert!((r_tip - 1.0).abs() < 2e-3, "{r_tip}");
    }
}
