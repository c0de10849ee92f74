//! Runtime monitors, neck/bump tracking, singularity classification and the
//! cylindrical-asymptotics fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{self, OuterBc, SimConfig, SimState, StopReason, Trajectory};
use crate::geometry::{self, CurvatureField, Inner, RadialProfile};
use crate::rescaling::{self, MatchResult, Model, Normalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSettings {
    /// ε in the decay monitor φ^{2+ε/2}|Rm|.
    pub decay_eps: f64,
    /// δ in Ω = {φ_ss log(φ/δ) < 0}; `None` uses 0.5·min(1, φ_max(0)).
    pub delta_omega: Option<f64>,
    /// The decay monitor only looks at s ≥ ball_radius.
    pub ball_radius: f64,
    /// Relative dead band of the φ_s sign count.
    pub zero_band: f64,
    /// |φ_ss| above this marks an extremum as nondegenerate.
    pub degeneracy_tol: f64,
    /// Blow-up exponents accepted as Type-I.
    pub type_one_band: (f64, f64),
    /// Small constant c and decay ε of the cylindrical asymptotics.
    pub asymptotics_c: f64,
    pub asymptotics_eps: f64,
    pub cylinder_window: (f64, f64),
    pub bryant_window: (f64, f64),
}

impl Default for MonitorSettings {
    fn default() -> Self {
        MonitorSettings {
            decay_eps: 2.0,
            delta_omega: None,
            ball_radius: 1.0,
            zero_band: 1e-7,
            degeneracy_tol: 1e-8,
            type_one_band: (-1.1, -0.9),
            asymptotics_c: 0.2,
            asymptotics_eps: 0.5,
            cylinder_window: (-2.0, 2.0),
            bryant_window: (0.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Bump,
    Neck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub kind: ExtremumKind,
    pub index: usize,
    pub x: f64,
    pub phi: f64,
    pub nondegenerate: bool,
}

/// Signs of φ_s on interior nodes with the dead band collapsed, paired with
/// the node index of each entry.
fn signed_runs(phi_s: &[f64], band: f64, inner: Inner) -> Vec<(usize, i8)> {
    let m = phi_s.len();
    if m < 3 {
        return Vec::new();
    }
    let first = match inner {
        Inner::Tip => 1,
        // φ_s vanishes by symmetry at a mirror end
        Inner::Mirror => 1,
    };
    let scale = phi_s[first..m - 1].iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    // φ_s is dimensionless; below unit scale the band stays at `band`
    let cut = band * scale.max(1.0);
    phi_s[first..m - 1]
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= cut)
        .map(|(k, v)| (k + first, if *v > 0.0 { 1 } else { -1 }))
        .collect()
}

/// Number of sign changes of φ_s on interior nodes, ignoring values inside
/// the dead band `band·max(1, max|φ_s|)`.
pub fn phi_s_zero_count(profile: &RadialProfile) -> Result<usize> {
    let c = geometry::compute_curvature(profile)?;
    Ok(zero_count_of(&c.phi_s, MonitorSettings::default().zero_band, profile.inner))
}

fn zero_count_of(phi_s: &[f64], band: f64, inner: Inner) -> usize {
    signed_runs(phi_s, band, inner)
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .count()
}

/// Interior extrema of φ in x order. A sign change of φ_s from + to − is a
/// bump, − to + a neck; the origin is never a neck. Ties go to the smaller x.
pub fn critical_points(profile: &RadialProfile) -> Result<Vec<CriticalPoint>> {
    let c = geometry::compute_curvature(profile)?;
    let s = MonitorSettings::default();
    Ok(critical_points_of(profile, &c, s.zero_band, s.degeneracy_tol))
}

fn critical_points_of(
    profile: &RadialProfile,
    c: &CurvatureField,
    band: f64,
    tol: f64,
) -> Vec<CriticalPoint> {
    let runs = signed_runs(&c.phi_s, band, profile.inner);
    let mut out = Vec::new();
    for w in runs.windows(2) {
        let ((i, a), (j, b)) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let kind = if a > 0 { ExtremumKind::Bump } else { ExtremumKind::Neck };
        // extreme φ among the nodes spanning the sign change
        let mut best = i;
        for k in i..=j {
            let better = match kind {
                ExtremumKind::Bump => profile.phi[k] > profile.phi[best],
                ExtremumKind::Neck => profile.phi[k] < profile.phi[best],
            };
            if better {
                best = k;
            }
        }
        if kind == ExtremumKind::Neck && best == 0 && profile.inner == Inner::Tip {
            continue;
        }
        out.push(CriticalPoint {
            kind,
            index: best,
            x: profile.x[best],
            phi: profile.phi[best],
            nondegenerate: c.phi_ss[best].abs() > tol,
        });
    }
    out
}

/// One row of monitor values. Fields that depend on the singular time are
/// filled in after the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: u64,
    /// Neck radius and location (minimum of φ for a mirror segment).
    pub phi_min: Option<f64>,
    pub y_star: Option<f64>,
    /// Bump radius and location.
    pub phi_max: Option<f64>,
    pub x_star: Option<f64>,
    pub min_a: f64,
    pub zero_count: usize,
    pub sup_rm: f64,
    pub sup_phi2_rm: f64,
    pub sup_phiflat_rm: f64,
    pub barrier_residual: Option<f64>,
    pub tip_is_max: Option<bool>,
    pub f_max: f64,
    pub psi_min: f64,
    pub inf_r: f64,
    /// max |K| over Ω.
    pub omega_max_k: f64,
    pub inf_r_times_tmt: Option<f64>,
    pub omega_k_bound: Option<f64>,
    pub running: RunningExtrema,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningExtrema {
    pub min_a: f64,
    pub max_sup_phi2_rm: f64,
    pub max_sup_phiflat_rm: f64,
    pub max_f: f64,
    pub min_psi: f64,
}

impl Default for RunningExtrema {
    fn default() -> Self {
        RunningExtrema {
            min_a: f64::INFINITY,
            max_sup_phi2_rm: 0.0,
            max_sup_phiflat_rm: 0.0,
            max_f: f64::NEG_INFINITY,
            min_psi: f64::INFINITY,
        }
    }
}

/// Evaluates monitors along a run.
#[derive(Debug, Clone)]
pub struct Monitor {
    settings: MonitorSettings,
    delta: f64,
    /// Radius and start time of the comparison cylinder.
    cylinder: Option<(f64, f64)>,
    running: RunningExtrema,
}

impl Monitor {
    pub fn new(settings: MonitorSettings, initial: &RadialProfile, config: &SimConfig) -> Self {
        let cylinder = (config.outer_bc == OuterBc::CylinderExact)
            .then(|| (config.barrier_radius.unwrap_or_else(|| initial.max_phi()), initial.t));
        Self::with_cylinder(settings, initial, cylinder)
    }

    /// `cylinder` is the radius r and start time of the barrier
    /// φ² ≤ r² − 2(n−1)(t − t₀), if one applies.
    pub fn with_cylinder(
        settings: MonitorSettings,
        initial: &RadialProfile,
        cylinder: Option<(f64, f64)>,
    ) -> Self {
        let phi_max0 = geometry::compute_curvature(initial)
            .ok()
            .and_then(|c| {
                critical_points_of(initial, &c, settings.zero_band, settings.degeneracy_tol)
                    .into_iter()
                    .find(|p| p.kind == ExtremumKind::Bump)
                    .map(|p| p.phi)
            })
            .unwrap_or_else(|| initial.max_phi());
        let delta = settings.delta_omega.unwrap_or(0.5 * phi_max0.min(1.0));
        Monitor {
            settings,
            delta,
            cylinder,
            running: RunningExtrema::default(),
        }
    }

    pub fn settings(&self) -> &MonitorSettings {
        &self.settings
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn record(&mut self, state: &SimState, c: &CurvatureField) -> DiagnosticsRecord {
        let rec = evaluate(
            &state.profile,
            c,
            state.t,
            state.step_count,
            &self.settings,
            self.delta,
            self.cylinder,
        );
        let r = &mut self.running;
        r.min_a = r.min_a.min(rec.min_a);
        r.max_sup_phi2_rm = r.max_sup_phi2_rm.max(rec.sup_phi2_rm);
        r.max_sup_phiflat_rm = r.max_sup_phiflat_rm.max(rec.sup_phiflat_rm);
        r.max_f = r.max_f.max(rec.f_max);
        r.min_psi = r.min_psi.min(rec.psi_min);
        DiagnosticsRecord {
            running: *r,
            ..rec
        }
    }
}

/// All monitors for a single state, without running extrema or
/// singular-time-dependent fields.
pub fn run_monitors(
    state: &SimState,
    settings: &MonitorSettings,
    cylinder: Option<(f64, f64)>,
) -> Result<DiagnosticsRecord> {
    let c = geometry::compute_curvature(&state.profile)?;
    let mut m = Monitor::with_cylinder(settings.clone(), &state.profile, cylinder);
    Ok(m.record(state, &c))
}

fn evaluate(
    p: &RadialProfile,
    c: &CurvatureField,
    t: f64,
    step: u64,
    settings: &MonitorSettings,
    delta: f64,
    cylinder: Option<(f64, f64)>,
) -> DiagnosticsRecord {
    let m = p.len();
    let nf = p.n as f64;
    let s = geometry::arc_length(p).unwrap_or_else(|_| p.x.clone());
    let crit = critical_points_of(p, c, settings.zero_band, settings.degeneracy_tol);
    let bump = crit.iter().find(|q| q.kind == ExtremumKind::Bump);
    let mut neck = crit.iter().find(|q| q.kind == ExtremumKind::Neck).map(|q| (q.phi, q.x));
    if neck.is_none() && p.inner == Inner::Mirror {
        let i = (0..m).fold(0, |b, i| if p.phi[i] < p.phi[b] { i } else { b });
        neck = Some((p.phi[i], p.x[i]));
    }
    let interior = match p.inner {
        Inner::Tip => 1..m - 1,
        Inner::Mirror => 0..m - 1,
    };
    let mut sup_phi2_rm: f64 = 0.0;
    let mut sup_phiflat_rm: f64 = 0.0;
    let mut f_max = f64::NEG_INFINITY;
    let mut psi_min = f64::INFINITY;
    let mut omega_max_k: f64 = 0.0;
    let flat_power = 2.0 + 0.5 * settings.decay_eps;
    for i in 0..m {
        let phi = p.phi[i];
        sup_phi2_rm = sup_phi2_rm.max(phi * phi * c.rm_norm[i]);
        if s[i] >= settings.ball_radius {
            sup_phiflat_rm = sup_phiflat_rm.max(phi.powf(flat_power) * c.rm_norm[i]);
        }
    }
    for i in interior {
        let (phi, ps, pss) = (p.phi[i], c.phi_s[i], c.phi_ss[i]);
        f_max = f_max.max((ps * ps - 1.0) / phi);
        if phi < 1.0 {
            psi_min = psi_min.min(phi * pss * phi.ln());
        }
        if pss * (phi / delta).ln() < 0.0 {
            omega_max_k = omega_max_k.max(c.k[i].abs());
        }
    }
    if !psi_min.is_finite() {
        psi_min = 0.0;
    }
    let barrier_residual = cylinder.map(|(r, t0)| {
        let bound = r * r - 2.0 * (nf - 1.0) * (t - t0);
        p.phi.iter().fold(0.0_f64, |a, v| a.max(v * v - bound))
    });
    let tip_is_max = (p.inner == Inner::Tip).then(|| {
        let rmax = c.r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        c.r[0] >= rmax - 1e-6 * rmax.abs().max(1e-300)
    });
    DiagnosticsRecord {
        t,
        step,
        phi_min: neck.map(|v| v.0),
        y_star: neck.map(|v| v.1),
        phi_max: bump.map(|q| q.phi),
        x_star: bump.map(|q| q.x),
        min_a: c.min_a(),
        zero_count: zero_count_of(&c.phi_s, settings.zero_band, p.inner),
        sup_rm: c.sup_rm(),
        sup_phi2_rm,
        sup_phiflat_rm,
        barrier_residual,
        tip_is_max,
        f_max,
        psi_min,
        inf_r: c.r.iter().cloned().fold(f64::INFINITY, f64::min),
        omega_max_k,
        inf_r_times_tmt: None,
        omega_k_bound: None,
        running: RunningExtrema::default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeVerdict {
    #[serde(rename = "type_I")]
    TypeI,
    #[serde(rename = "type_II")]
    TypeII,
    #[serde(rename = "immortal")]
    Immortal,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

/// Blow-up rate of a curvature history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub t_hat: Option<f64>,
    pub t_hat_std_error: Option<f64>,
    pub t_hat_residual: Option<f64>,
    pub large_residual: bool,
    /// Slope of log sup|Rm| against log(T̂ − t) over the last two decades.
    pub blowup_exponent: Option<f64>,
    /// Relative change of (T̂ − t)·sup|Rm| per decade of sup|Rm|.
    pub growth_per_decade: Option<f64>,
    /// Decades of curvature growth in the whole history.
    pub decades: f64,
    pub verdict: TypeVerdict,
}

/// Drift of (T̂−t)·sup|Rm| per decade tolerated for Type-I.
pub const TYPE_ONE_DRIFT: f64 = 0.10;
/// Growth of (T̂−t)·sup|Rm| per decade required for Type-II.
pub const TYPE_TWO_GROWTH: f64 = 0.25;

/// Classifies `(t, sup|Rm|)` samples. `blew_up` says whether the run ended at
/// the curvature threshold (or failed while curvature was growing).
pub fn classify_history(history: &[(f64, f64)], blew_up: bool, band: (f64, f64)) -> RateFit {
    let mut fit = RateFit {
        t_hat: None,
        t_hat_std_error: None,
        t_hat_residual: None,
        large_residual: false,
        blowup_exponent: None,
        growth_per_decade: None,
        decades: 0.0,
        verdict: TypeVerdict::Inconclusive,
    };
    let Some(&(_, last)) = history.last() else {
        return fit;
    };
    let low = history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
    fit.decades = if low > 0.0 && last > 0.0 { (last / low).log10().max(0.0) } else { 0.0 };
    if !blew_up {
        if not_growing(history) {
            fit.verdict = TypeVerdict::Immortal;
        }
        return fit;
    }
    let Ok(est) = evolution::estimate_singular_time(history) else {
        return fit;
    };
    fit.t_hat = Some(est.t_hat);
    fit.t_hat_std_error = Some(est.std_error);
    fit.t_hat_residual = Some(est.residual);
    fit.large_residual = est.large_residual;
    if fit.decades < 2.0 {
        return fit;
    }
    let window: Vec<(f64, f64)> = history
        .iter()
        .filter(|h| h.1 >= last / 100.0 && est.t_hat - h.0 > 0.0)
        .map(|&(t, r)| ((est.t_hat - t), r))
        .collect();
    if window.len() < 3 {
        return fit;
    }
    let lt: Vec<f64> = window.iter().map(|w| w.0.ln()).collect();
    let lr: Vec<f64> = window.iter().map(|w| w.1.ln()).collect();
    let lq: Vec<f64> = window.iter().map(|w| (w.0 * w.1).log10()).collect();
    let lr10: Vec<f64> = window.iter().map(|w| w.1.log10()).collect();
    let (Some(exponent), Some(q_slope)) = (slope(&lt, &lr), slope(&lr10, &lq)) else {
        return fit;
    };
    let growth = 10f64.powf(q_slope) - 1.0;
    fit.blowup_exponent = Some(exponent);
    fit.growth_per_decade = Some(growth);
    fit.verdict = if exponent >= band.0 && exponent <= band.1 && growth.abs() <= TYPE_ONE_DRIFT {
        TypeVerdict::TypeI
    } else if growth >= TYPE_TWO_GROWTH {
        TypeVerdict::TypeII
    } else {
        TypeVerdict::Inconclusive
    };
    fit
}

/// sup|Rm| at the end is no larger than at the start of the final half.
fn not_growing(history: &[(f64, f64)]) -> bool {
    let (t0, t1) = (history[0].0, history.last().unwrap().0);
    let mid = 0.5 * (t0 + t1);
    let start = history.iter().find(|h| h.0 >= mid).map_or(0.0, |h| h.1);
    let last = history.last().unwrap().1;
    last <= 1e-10 || last <= start
}

fn slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let k = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBand {
    pub ok: bool,
    /// Extremes of φ_min² / (T̂ − t) over the last decade of curvature.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

/// Relative slack of the rate band; the exact cylinder sits on its upper edge.
const BAND_ROUNDOFF: f64 = 1e-9;

/// (n−1) ≤ φ_min²/(T̂−t) ≤ 2(n−1) over the records in the last decade of
/// sup|Rm|.
pub fn rate_band(records: &[DiagnosticsRecord], n: usize, t_hat: f64) -> Option<RateBand> {
    let last = records.last()?.sup_rm;
    let nf = n as f64;
    let ratios: Vec<f64> = records
        .iter()
        .filter(|r| r.sup_rm >= last / 10.0 && t_hat - r.t > 0.0)
        .filter_map(|r| r.phi_min.map(|p| p * p / (t_hat - r.t)))
        .collect();
    if ratios.is_empty() {
        return None;
    }
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(RateBand {
        ok: min_ratio >= (nf - 1.0) * (1.0 - BAND_ROUNDOFF) && max_ratio <= 2.0 * (nf - 1.0) * (1.0 + BAND_ROUNDOFF),
        min_ratio,
        max_ratio,
        samples: ratios.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsSample {
    pub t: f64,
    pub tau: f64,
    /// Smallest C for the inner bound on this snapshot.
    pub inner_c: f64,
    /// Smallest C for the outer bound, where the band holds any nodes.
    pub outer_c: Option<f64>,
    /// φ/√(2(n−1)(T̂−t)) at the neck.
    pub neck_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsFit {
    /// Inner constant valid across all samples.
    pub c_inner: f64,
    /// The fixed small constant c.
    pub c_small: f64,
    pub epsilon: f64,
    pub c_outer: Option<f64>,
    /// max/min of the per-snapshot inner constants.
    pub inner_spread: f64,
    pub outer_spread: Option<f64>,
    pub samples: Vec<AsymptoticsSample>,
    pub pass: bool,
}

/// Spread tolerated for a constant to count as stable.
pub const STABLE_SPREAD: f64 = 2.0;

/// Fits the constants of
///
/// ```text
/// φ/√(2(n−1)τ) ≤ 1 + C σ²/|log τ|                         for |σ| ≤ c√|log τ|
/// φ/√(2(n−1)τ) ≤ C (|σ|/√|log τ|) √(log(|σ|/|log τ|))     for c√|log τ| ≤ |σ| ≤ τ^{−ε/2}
/// ```
///
/// with τ = T̂ − t and σ = S/√τ, S the arc length from the neck, over the
/// snapshots covering the final decade of τ. The outer bound is only
/// evaluated where log(|σ|/|log τ|) ≥ 1; below that the right side is
/// undefined or degenerate.
pub fn check_cylindrical_asymptotics(
    snapshots: &[&RadialProfile],
    t_hat: f64,
    c_small: f64,
    epsilon: f64,
) -> Result<AsymptoticsFit> {
    let usable: Vec<&RadialProfile> = snapshots
        .iter()
        .copied()
        .filter(|p| t_hat - p.t > 0.0)
        .collect();
    let Some(last) = usable.last() else {
        return Err(Error::NotApplicable("no snapshot before the singular time".into()));
    };
    let tau_end = t_hat - last.t;
    // the final decade of τ, closed by the first snapshot at least 10× back
    let mut chosen: Vec<&RadialProfile> = Vec::new();
    let mut spans = false;
    for p in usable.iter().rev() {
        chosen.push(p);
        if t_hat - p.t >= 10.0 * tau_end {
            spans = true;
            break;
        }
    }
    if !spans || chosen.len() < 3 {
        return Err(Error::NotApplicable(format!(
            "{} snapshots do not span a decade of T - t",
            chosen.len()
        )));
    }
    chosen.reverse();
    let mut samples = Vec::with_capacity(chosen.len());
    for p in chosen {
        samples.push(asymptotics_sample(p, t_hat, c_small, epsilon)?);
    }
    let inner: Vec<f64> = samples.iter().map(|s| s.inner_c).collect();
    let c_inner = inner.iter().cloned().fold(0.0, f64::max);
    let inner_spread = spread(&inner);
    let outer: Vec<f64> = samples.iter().filter_map(|s| s.outer_c).collect();
    let (c_outer, outer_spread) = if outer.is_empty() {
        (None, None)
    } else {
        (Some(outer.iter().cloned().fold(0.0, f64::max)), Some(spread(&outer)))
    };
    let pass = c_inner.is_finite()
        && inner_spread <= STABLE_SPREAD
        && outer_spread.map_or(true, |s| s <= STABLE_SPREAD);
    Ok(AsymptoticsFit {
        c_inner,
        c_small,
        epsilon,
        c_outer,
        inner_spread,
        outer_spread,
        samples,
        pass,
    })
}

/// max/min of nonnegative constants; all-zero counts as perfectly stable.
fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(0.0, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi == 0.0 {
        1.0
    } else if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn asymptotics_sample(p: &RadialProfile, t_hat: f64, c_small: f64, epsilon: f64) -> Result<AsymptoticsSample> {
    let c = geometry::compute_curvature(p)?;
    let set = MonitorSettings::default();
    let neck = match p.inner {
        Inner::Mirror => (0..p.len()).fold(0, |b, i| if p.phi[i] < p.phi[b] { i } else { b }),
        Inner::Tip => critical_points_of(p, &c, set.zero_band, set.degeneracy_tol)
            .into_iter()
            .find(|q| q.kind == ExtremumKind::Neck)
            .map(|q| q.index)
            .ok_or_else(|| Error::NotApplicable(format!("neck lost at t = {}", p.t)))?,
    };
    let s = geometry::arc_length(p)?;
    let tau = t_hat - p.t;
    let lam = tau.ln().abs();
    let root = tau.sqrt();
    let unit = (2.0 * (p.n as f64 - 1.0) * tau).sqrt();
    let inner_edge = c_small * lam.sqrt();
    let outer_edge = tau.powf(-0.5 * epsilon);
    let mut inner_c: f64 = 0.0;
    let mut outer_c: Option<f64> = None;
    let neck_ratio = p.phi[neck] / unit;
    if neck_ratio > 1.0 + 1e-12 {
        inner_c = f64::INFINITY;
    }
    for i in 0..p.len() {
        let sigma = ((s[i] - s[neck]) / root).abs();
        let ratio = p.phi[i] / unit;
        if i != neck && sigma <= inner_edge {
            inner_c = inner_c.max((ratio - 1.0) * lam / (sigma * sigma));
        }
        if sigma >= inner_edge && sigma <= outer_edge {
            let lg = (sigma / lam).ln();
            if lg >= 1.0 {
                let need = ratio / (sigma / lam.sqrt() * lg.sqrt());
                outer_c = Some(outer_c.map_or(need, |c| c.max(need)));
            }
        }
    }
    Ok(AsymptoticsSample {
        t: p.t,
        tau,
        inner_c,
        outer_c,
        neck_ratio,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotMatch {
    pub t: f64,
    pub lambda: f64,
    pub result: MatchResult,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProfileMatches {
    /// Neck-normalized snapshots against the unit cylinder.
    pub cylinder: Vec<SnapshotMatch>,
    /// Origin-normalized snapshots against the Bryant soliton.
    pub bryant: Vec<SnapshotMatch>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularityReport {
    pub t_hat: Option<f64>,
    pub t_hat_std_error: Option<f64>,
    pub t_hat_residual: Option<f64>,
    pub large_residual: bool,
    pub blowup_exponent: Option<f64>,
    pub growth_per_decade: Option<f64>,
    pub decades: f64,
    pub type_verdict: TypeVerdict,
    pub rate_band_ok: Option<bool>,
    pub rate_band: Option<RateBand>,
    pub asymptotics_fit: Option<AsymptoticsFit>,
    /// Why the asymptotics were not fitted, when they were not.
    pub asymptotics_note: Option<String>,
    pub profile_match: ProfileMatches,
    pub final_sup_rm: f64,
    pub final_t: f64,
    pub stop: StopReason,
}

/// Matches of the last `count` snapshots against both singularity models.
pub fn match_snapshots(snaps: &[&RadialProfile], settings: &MonitorSettings, count: usize) -> ProfileMatches {
    let mut out = ProfileMatches::default();
    let tail = &snaps[snaps.len().saturating_sub(count)..];
    let mut soliton: Option<Model> = None;
    for p in tail {
        let Ok(c) = geometry::compute_curvature(p) else { continue };
        let neck = match p.inner {
            Inner::Mirror => Some((0..p.len()).fold(0, |b, i| if p.phi[i] < p.phi[b] { i } else { b })),
            Inner::Tip => critical_points_of(p, &c, settings.zero_band, settings.degeneracy_tol)
                .into_iter()
                .find(|q| q.kind == ExtremumKind::Neck)
                .map(|q| q.index),
        };
        if let Some(i) = neck {
            if let Ok(r) = rescaling::parabolic_rescale(p, i, Normalization::RmAtPoint) {
                if let Ok(m) = rescaling::profile_match(&r, &Model::Cylinder, settings.cylinder_window) {
                    out.cylinder.push(SnapshotMatch { t: p.t, lambda: r.lambda, result: m });
                }
            }
        }
        if p.inner == Inner::Tip && c.r[0] > 0.0 {
            if soliton.is_none() {
                let smax = settings.bryant_window.1.max(1.0) * 1.5;
                match rescaling::bryant_profile(p.n, smax, 3001) {
                    Ok(b) => soliton = Some(Model::Bryant(b)),
                    Err(_) => continue,
                }
            }
            if let Ok(r) = rescaling::parabolic_rescale(p, 0, Normalization::ROrigin) {
                if let Ok(m) = rescaling::profile_match(&r, soliton.as_ref().unwrap(), settings.bryant_window) {
                    out.bryant.push(SnapshotMatch { t: p.t, lambda: r.lambda, result: m });
                }
            }
        }
    }
    out
}

/// Builds the singularity report and fills in the fields of each record
/// that depend on the singular time.
pub fn classify_singularity(
    traj: &mut Trajectory,
    stop: &StopReason,
    settings: &MonitorSettings,
) -> SingularityReport {
    let history = traj.curvature_history();
    let blew_up = match stop {
        StopReason::CurvatureThreshold => true,
        StopReason::StepFailure(_) => {
            let n = history.len();
            n >= 2 && history[n - 1].1 > history[0].1
        }
        _ => false,
    };
    let fit = classify_history(&history, blew_up, settings.type_one_band);
    if let Some(t_hat) = fit.t_hat {
        for r in traj.records.iter_mut() {
            let tau = t_hat - r.t;
            if tau > 0.0 {
                r.inf_r_times_tmt = Some(r.inf_r * tau);
                r.omega_k_bound = Some(tau * r.omega_max_k * tau.ln().abs());
            }
        }
    }
    let n = traj.snapshots.first().map_or(2, |s| s.profile.n);
    let band = fit.t_hat.and_then(|t| rate_band(&traj.records, n, t));
    let profiles: Vec<&RadialProfile> = traj.snapshots.iter().map(|s| &s.profile).collect();
    let (asymptotics_fit, asymptotics_note) = match (fit.verdict, fit.t_hat) {
        (TypeVerdict::TypeI, Some(t_hat)) => {
            match check_cylindrical_asymptotics(&profiles, t_hat, settings.asymptotics_c, settings.asymptotics_eps) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            }
        }
        _ => (None, Some("requires a Type-I verdict".to_string())),
    };
    let profile_match = if blew_up {
        match_snapshots(&profiles, settings, 3)
    } else {
        ProfileMatches::default()
    };
    let last = traj.records.last();
    SingularityReport {
        t_hat: fit.t_hat,
        t_hat_std_error: fit.t_hat_std_error,
        t_hat_residual: fit.t_hat_residual,
        large_residual: fit.large_residual,
        blowup_exponent: fit.blowup_exponent,
        growth_per_decade: fit.growth_per_decade,
        decades: fit.decades,
        type_verdict: fit.verdict,
        rate_band_ok: band.as_ref().map(|b| b.ok),
        rate_band: band,
        asymptotics_fit,
        asymptotics_note,
        profile_match,
        final_sup_rm: last.map_or(0.0, |r| r.sup_rm),
        final_t: last.map_or(0.0, |r| r.t),
        stop: stop.clone(),
    }
}
