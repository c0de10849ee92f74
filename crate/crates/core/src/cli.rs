//! Config files, run orchestration and the on-disk run layout.
//!
//! A run directory holds `trace.csv`, `report.json`, `snapshots/t_<index>.csv`
//! and `manifest.json`; the manifest carries the resolved config so a run can
//! be re-classified or rescaled without the original file.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{self, DiagnosticsRecord, MonitorSettings, ProfileMatches, SingularityReport, TypeVerdict};
use crate::error::{Error, Result};
use crate::evolution::{self, OuterBc, RunOutput, Snapshot, SimConfig, StopReason, TimeScheme, Trajectory};
use crate::geometry::{self, Inner, RadialProfile};
use crate::initial_data::{GridKind, InitialDataSpec, InitialKind};
use crate::rescaling::{self, Normalization};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every accepted key, in the order [`emit_config`] writes them.
pub const KEYS: &[&str] = &[
    "dimension",
    "grid.x_max",
    "grid.points",
    "grid.kind",
    "grid.adapt",
    "ic.kind",
    "ic.alpha",
    "ic.eps_close",
    "ic.r0",
    "ic.smoothing_width",
    "ic.profile",
    "time.scheme",
    "time.cfl",
    "time.dt_init",
    "time.dt_max",
    "time.t_max",
    "time.stop_curvature",
    "time.max_steps",
    "bc.outer",
    "bc.barrier_radius",
    "monitors.delta_omega",
    "monitors.decay_eps",
    "monitors.ball_radius",
    "output.dir",
    "output.record_every",
    "output.snapshot_times",
    "output.snapshot_growth",
];

const REQUIRED: &[&str] = &["dimension", "ic.kind"];

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub sim: SimConfig,
    pub ic: InitialDataSpec,
    pub monitors: MonitorSettings,
    pub output_dir: PathBuf,
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(format!("line {}", k + 1), "expected `key = value`"));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// `--key value` or `--key=value` pairs from the command line.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            return Err(Error::config(a.clone(), "expected a `--key` flag"));
        };
        match flag.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(flag.to_string(), "flag needs a value"))?;
                out.push((flag.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

/// Parses a config file. A key may appear once.
pub fn parse_config(text: &str) -> Result<RunSpec> {
    let pairs = parse_pairs(text)?;
    for (i, (k, _)) in pairs.iter().enumerate() {
        if pairs[..i].iter().any(|(prev, _)| prev == k) {
            return Err(Error::config(k.clone(), "duplicate key"));
        }
    }
    resolve(&pairs)
}

/// Applies `pairs` in order (later ones win) on top of the defaults.
pub fn resolve(pairs: &[(String, String)]) -> Result<RunSpec> {
    let mut map: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in pairs {
        let Some(key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(Error::config(k.clone(), "unknown key"));
        };
        map.insert(key, v.as_str());
    }
    for key in REQUIRED {
        if !map.contains_key(key) {
            return Err(Error::config(*key, "missing required key"));
        }
    }
    let mut spec = RunSpec {
        sim: SimConfig::default(),
        ic: InitialDataSpec::default(),
        monitors: MonitorSettings::default(),
        output_dir: PathBuf::from("out"),
    };
    // the kind decides some defaults, so it goes first
    apply(&mut spec, "ic.kind", map["ic.kind"])?;
    spec.sim.outer_bc = match spec.ic.kind {
        InitialKind::ArctanCylindrical | InitialKind::Cylinder => OuterBc::CylinderExact,
        InitialKind::SineWalphaNeck | InitialKind::FlatPerturbation => OuterBc::AsymptoticLinear,
        InitialKind::CustomProfile => OuterBc::DirichletFixed,
    };
    if spec.ic.kind == InitialKind::ArctanCylindrical {
        spec.sim.barrier_radius = Some(FRAC_PI_2);
    }
    for key in KEYS {
        if let Some(v) = map.get(key) {
            apply(&mut spec, key, v)?;
        }
    }
    spec.ic.n = spec.sim.n;
    spec.ic.decay_eps = spec.monitors.decay_eps;
    spec.ic.validate().map_err(dotted)?;
    spec.sim.validate().map_err(dotted)?;
    Ok(spec)
}

/// Rewrites a parameter error under its config key.
fn dotted(e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => {
            let key = match name {
                "n" => "dimension",
                "cfl" => "time.cfl",
                "dt_max" => "time.dt_max",
                "stop_curvature" => "time.stop_curvature",
                "t_max" => "time.t_max",
                "record_every" => "output.record_every",
                "snapshot_growth" => "output.snapshot_growth",
                other => other,
            };
            Error::config(key, reason)
        }
        other => other,
    }
}

fn number(key: &str, v: &str) -> Result<f64> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::config(key, format!("expected a finite number, got `{v}`"))),
    }
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x = number(key, v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::config(key, format!("must be positive, got {x}")))
    }
}

fn count(key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
    }
}

fn choice<T>(key: &str, v: &str, parsed: Option<T>, allowed: &str) -> Result<T> {
    parsed.ok_or_else(|| Error::config(key, format!("`{v}` is not one of {allowed}")))
}

fn apply(spec: &mut RunSpec, key: &str, v: &str) -> Result<()> {
    match key {
        "dimension" => {
            let n = count(key, v)? as usize;
            if n < 2 {
                return Err(Error::config(key, format!("must be >= 2, got {n}")));
            }
            spec.sim.n = n;
        }
        "grid.x_max" => spec.ic.grid.x_max = positive(key, v)?,
        "grid.points" => spec.ic.grid.points = count(key, v)? as usize,
        "grid.kind" => spec.ic.grid.kind = choice(key, v, GridKind::parse(v), "uniform, graded")?,
        "grid.adapt" => spec.sim.adapt_grid = flag(key, v)?,
        "ic.kind" => {
            spec.ic.kind = choice(
                key,
                v,
                InitialKind::parse(v),
                "arctan_cylindrical, sine_walpha_neck, flat_perturbation, custom_profile, cylinder",
            )?
        }
        "ic.alpha" => {
            let a = number(key, v)?;
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::config(key, format!("alpha {a} out of (0,1)")));
            }
            spec.ic.alpha = a;
        }
        "ic.eps_close" => {
            let e = number(key, v)?;
            if e < 0.0 {
                return Err(Error::config(key, "must be >= 0"));
            }
            spec.ic.eps_close = e;
        }
        "ic.r0" => spec.ic.r0 = positive(key, v)?,
        "ic.smoothing_width" => spec.ic.smoothing_width = positive(key, v)?,
        "ic.profile" => spec.ic.profile_path = Some(PathBuf::from(v)),
        "time.scheme" => spec.sim.scheme = choice(key, v, TimeScheme::parse(v), "explicit, implicit")?,
        "time.cfl" => {
            let c = number(key, v)?;
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::config(key, format!("{c} not in (0, 1]")));
            }
            spec.sim.cfl = c;
        }
        "time.dt_init" => spec.sim.dt_init = positive(key, v)?,
        "time.dt_max" => spec.sim.dt_max = positive(key, v)?,
        "time.t_max" => spec.sim.t_max = positive(key, v)?,
        "time.stop_curvature" => spec.sim.stop_curvature = positive(key, v)?,
        "time.max_steps" => spec.sim.max_steps = count(key, v)?,
        "bc.outer" => {
            spec.sim.outer_bc = choice(
                key,
                v,
                OuterBc::parse(v),
                "dirichlet_fixed, cylinder_exact, asymptotic_linear",
            )?
        }
        "bc.barrier_radius" => {
            spec.sim.barrier_radius = if v == "auto" { None } else { Some(positive(key, v)?) }
        }
        "monitors.delta_omega" => {
            spec.monitors.delta_omega = if v == "auto" { None } else { Some(positive(key, v)?) }
        }
        "monitors.decay_eps" => spec.monitors.decay_eps = positive(key, v)?,
        "monitors.ball_radius" => {
            let r = number(key, v)?;
            if r < 0.0 {
                return Err(Error::config(key, "must be >= 0"));
            }
            spec.monitors.ball_radius = r;
        }
        "output.dir" => {
            if v.is_empty() {
                return Err(Error::config(key, "empty path"));
            }
            spec.output_dir = PathBuf::from(v);
        }
        "output.record_every" => {
            let r = count(key, v)?;
            if r == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
            spec.sim.record_every = r;
        }
        "output.snapshot_times" => {
            let mut times = Vec::new();
            for cell in v.split(',').map(str::trim).filter(|c| !c.is_empty()) {
                let t = number(key, cell)?;
                if t < 0.0 {
                    return Err(Error::config(key, format!("negative time {t}")));
                }
                times.push(t);
            }
            spec.sim.snapshot_times = times;
        }
        "output.snapshot_growth" => {
            let g = number(key, v)?;
            if g != 0.0 && !(g > 1.0) {
                return Err(Error::config(key, "must be 0 or exceed 1"));
            }
            spec.sim.snapshot_growth = g;
        }
        other => return Err(Error::config(other, "unknown key")),
    }
    Ok(())
}

/// The resolved config as `key = value` text; parsing it gives the same spec.
pub fn emit_config(spec: &RunSpec) -> String {
    let mut out = String::new();
    let auto = |v: Option<f64>| v.map_or_else(|| "auto".to_string(), |x| x.to_string());
    for &key in KEYS {
        let value = match key {
            "dimension" => spec.sim.n.to_string(),
            "grid.x_max" => spec.ic.grid.x_max.to_string(),
            "grid.points" => spec.ic.grid.points.to_string(),
            "grid.kind" => spec.ic.grid.kind.as_str().to_string(),
            "grid.adapt" => spec.sim.adapt_grid.to_string(),
            "ic.kind" => spec.ic.kind.as_str().to_string(),
            "ic.alpha" => spec.ic.alpha.to_string(),
            "ic.eps_close" => spec.ic.eps_close.to_string(),
            "ic.r0" => spec.ic.r0.to_string(),
            "ic.smoothing_width" => spec.ic.smoothing_width.to_string(),
            "ic.profile" => match &spec.ic.profile_path {
                Some(p) => p.display().to_string(),
                None => continue,
            },
            "time.scheme" => spec.sim.scheme.as_str().to_string(),
            "time.cfl" => spec.sim.cfl.to_string(),
            "time.dt_init" => spec.sim.dt_init.to_string(),
            "time.dt_max" => spec.sim.dt_max.to_string(),
            "time.t_max" => spec.sim.t_max.to_string(),
            "time.stop_curvature" => spec.sim.stop_curvature.to_string(),
            "time.max_steps" => spec.sim.max_steps.to_string(),
            "bc.outer" => spec.sim.outer_bc.as_str().to_string(),
            "bc.barrier_radius" => auto(spec.sim.barrier_radius),
            "monitors.delta_omega" => auto(spec.monitors.delta_omega),
            "monitors.decay_eps" => spec.monitors.decay_eps.to_string(),
            "monitors.ball_radius" => spec.monitors.ball_radius.to_string(),
            "output.dir" => spec.output_dir.display().to_string(),
            "output.record_every" => spec.sim.record_every.to_string(),
            "output.snapshot_times" => spec
                .sim
                .snapshot_times
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "output.snapshot_growth" => spec.sim.snapshot_growth.to_string(),
            _ => unreachable!("key table out of sync"),
        };
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

/// SHA-256 of the resolved config text, hex encoded.
pub fn config_hash(spec: &RunSpec) -> String {
    hex::encode(Sha256::digest(emit_config(spec).as_bytes()))
}

pub const TRACE_COLUMNS: [&str; 13] = [
    "t",
    "phi_min",
    "phi_max",
    "x_star",
    "y_star",
    "min_A",
    "zero_count",
    "sup_rm",
    "sup_phi2_rm",
    "barrier_residual",
    "tip_is_max",
    "f_max",
    "psi_min",
];

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn maybe(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

pub fn trace_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let cells = [
            real(r.t),
            maybe(r.phi_min),
            maybe(r.phi_max),
            maybe(r.x_star),
            maybe(r.y_star),
            real(r.min_a),
            r.zero_count.to_string(),
            real(r.sup_rm),
            real(r.sup_phi2_rm),
            maybe(r.barrier_residual),
            r.tip_is_max.map(|b| b.to_string()).unwrap_or_default(),
            real(r.f_max),
            real(r.psi_min),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Records from `trace.csv`; fields the trace does not carry are NaN.
pub fn parse_trace(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != TRACE_COLUMNS.join(",") {
        return Err(Error::InvalidProfile("trace.csv header does not match".into()));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != TRACE_COLUMNS.len() {
            return Err(Error::InvalidProfile(format!("trace row {}: wrong column count", k + 2)));
        }
        let bad = |i: usize| Error::InvalidProfile(format!("trace row {}: bad `{}`", k + 2, TRACE_COLUMNS[i]));
        let num = |i: usize| cells[i].parse::<f64>().map_err(|_| bad(i));
        let opt = |i: usize| -> Result<Option<f64>> {
            if cells[i].is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        out.push(DiagnosticsRecord {
            t: num(0)?,
            step: 0,
            phi_min: opt(1)?,
            phi_max: opt(2)?,
            x_star: opt(3)?,
            y_star: opt(4)?,
            min_a: num(5)?,
            zero_count: cells[6].parse().map_err(|_| bad(6))?,
            sup_rm: num(7)?,
            sup_phi2_rm: num(8)?,
            sup_phiflat_rm: f64::NAN,
            barrier_residual: opt(9)?,
            tip_is_max: match cells[10] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                _ => return Err(bad(10)),
            },
            f_max: num(11)?,
            psi_min: num(12)?,
            inf_r: f64::NAN,
            omega_max_k: f64::NAN,
            inf_r_times_tmt: None,
            omega_k_bound: None,
            running: Default::default(),
        });
    }
    Ok(out)
}

pub const SNAPSHOT_COLUMNS: [&str; 8] = ["x", "s", "phi", "xi", "K", "L", "R", "A"];

pub fn snapshot_csv(profile: &RadialProfile) -> Result<String> {
    let c = geometry::compute_curvature(profile)?;
    let s = geometry::arc_length(profile)?;
    let mut out = SNAPSHOT_COLUMNS.join(",");
    out.push('\n');
    for i in 0..profile.len() {
        let row = [profile.x[i], s[i], profile.phi[i], profile.xi[i], c.k[i], c.l[i], c.r[i], c.a[i]];
        out.push_str(&row.iter().map(|v| real(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Reads a snapshot CSV back; curvature columns are ignored.
pub fn parse_snapshot(text: &str, n: usize, inner: Inner, t: f64) -> Result<RadialProfile> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::InvalidProfile(format!("snapshot lacks a `{name}` column")))
    };
    let (ix, ip, iw) = (col("x")?, col("phi")?, col("xi")?);
    let (mut x, mut phi, mut xi) = (Vec::new(), Vec::new(), Vec::new());
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64> {
            cells
                .get(i)
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::InvalidProfile(format!("snapshot row {}: bad number", k + 2)))
        };
        x.push(num(ix)?);
        phi.push(num(ip)?);
        xi.push(num(iw)?);
    }
    let mut p = match inner {
        Inner::Tip => RadialProfile::new(n, x, phi, xi)?,
        Inner::Mirror => RadialProfile::segment(n, x, phi, xi)?,
    };
    p.t = t;
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub file: String,
    pub t: f64,
    pub step: u64,
    pub sup_rm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    /// No randomness enters a run: equal configs give equal files.
    pub deterministic: bool,
    pub config: String,
    pub n: usize,
    pub inner: Inner,
    pub stop: Option<StopReason>,
    pub outputs: Vec<String>,
    pub snapshots: Vec<SnapshotEntry>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Removes outputs of an earlier run in the same directory, so a manifest
/// never sits next to files it does not list.
fn clear_previous(dir: &Path) -> Result<()> {
    for sub in ["snapshots", "rescaled"] {
        let path = dir.join(sub);
        if path.is_dir() {
            fs::remove_dir_all(&path).map_err(|e| Error::Io { path, source: e })?;
        }
    }
    for file in ["trace.csv", "report.json", "rescale.json", "manifest.json"] {
        let path = dir.join(file);
        if path.is_file() {
            fs::remove_file(&path).map_err(|e| Error::Io { path, source: e })?;
        }
    }
    Ok(())
}

fn write_snapshots(dir: &Path, snaps: &[Snapshot]) -> Result<Vec<SnapshotEntry>> {
    let sub = dir.join("snapshots");
    make_dir(&sub)?;
    let mut entries = Vec::with_capacity(snaps.len());
    for (index, s) in snaps.iter().enumerate() {
        let file = format!("snapshots/t_{index:04}.csv");
        write(&dir.join(&file), &snapshot_csv(&s.profile)?)?;
        entries.push(SnapshotEntry {
            index,
            file,
            t: s.t,
            step: s.step,
            sup_rm: s.sup_rm,
        });
    }
    Ok(entries)
}

/// Writes the full run layout into `dir` and returns the manifest.
pub fn emit_outputs(dir: &Path, spec: &RunSpec, out: &RunOutput) -> Result<RunManifest> {
    make_dir(dir)?;
    clear_previous(dir)?;
    write(&dir.join("trace.csv"), &trace_csv(&out.trajectory.records))?;
    write(&dir.join("report.json"), &json(&out.report))?;
    let snapshots = write_snapshots(dir, &out.trajectory.snapshots)?;
    let mut outputs = vec!["trace.csv".to_string(), "report.json".to_string()];
    outputs.extend(snapshots.iter().map(|e| e.file.clone()));
    outputs.push("manifest.json".to_string());
    let manifest = RunManifest {
        config_hash: config_hash(spec),
        tool_version: TOOL_VERSION.to_string(),
        deterministic: true,
        config: emit_config(spec),
        n: out.final_state.profile.n,
        inner: out.final_state.profile.inner,
        stop: Some(out.stop.clone()),
        outputs,
        snapshots,
    };
    write(&dir.join("manifest.json"), &json(&manifest))?;
    Ok(manifest)
}

/// Builds the initial profile and writes it as the only snapshot.
pub fn generate(spec: &RunSpec) -> Result<(RadialProfile, RunManifest)> {
    let profile = spec.ic.build()?;
    let dir = &spec.output_dir;
    make_dir(dir)?;
    clear_previous(dir)?;
    let snaps = [Snapshot {
        t: profile.t,
        step: 0,
        sup_rm: geometry::compute_curvature(&profile)?.sup_rm(),
        profile: profile.clone(),
    }];
    let snapshots = write_snapshots(dir, &snaps)?;
    let mut outputs: Vec<String> = snapshots.iter().map(|e| e.file.clone()).collect();
    outputs.push("manifest.json".to_string());
    let manifest = RunManifest {
        config_hash: config_hash(spec),
        tool_version: TOOL_VERSION.to_string(),
        deterministic: true,
        config: emit_config(spec),
        n: profile.n,
        inner: profile.inner,
        stop: None,
        outputs,
        snapshots,
    };
    write(&dir.join("manifest.json"), &json(&manifest))?;
    Ok((profile, manifest))
}

/// Runs the configured flow and writes the run directory.
pub fn simulate(spec: &RunSpec) -> Result<(RunOutput, RunManifest)> {
    let initial = spec.ic.build()?;
    let out = evolution::run(&spec.sim, &initial, &spec.monitors)?;
    let manifest = emit_outputs(&spec.output_dir, spec, &out)?;
    Ok((out, manifest))
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct StoredRun {
    pub manifest: RunManifest,
    pub spec: RunSpec,
    pub trajectory: Trajectory,
}

pub fn load_run(dir: &Path) -> Result<StoredRun> {
    let manifest_path = dir.join("manifest.json");
    let manifest: RunManifest = serde_json::from_str(&read(&manifest_path)?)
        .map_err(|e| Error::InvalidProfile(format!("{}: {e}", manifest_path.display())))?;
    let spec = parse_config(&manifest.config)?;
    let trace_path = dir.join("trace.csv");
    let records = if trace_path.exists() {
        parse_trace(&read(&trace_path)?)?
    } else {
        Vec::new()
    };
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for e in &manifest.snapshots {
        let profile = parse_snapshot(&read(&dir.join(&e.file))?, manifest.n, manifest.inner, e.t)?;
        snapshots.push(Snapshot {
            t: e.t,
            step: e.step,
            sup_rm: e.sup_rm,
            profile,
        });
    }
    Ok(StoredRun {
        manifest,
        spec,
        trajectory: Trajectory { records, snapshots },
    })
}

/// Re-derives the report of a stored run and rewrites `report.json`.
pub fn classify(dir: &Path) -> Result<SingularityReport> {
    let mut run = load_run(dir)?;
    if run.trajectory.records.is_empty() {
        return Err(Error::NotApplicable("the run has no trace to classify".into()));
    }
    let stop = run.manifest.stop.clone().unwrap_or(StopReason::StepLimit);
    let report = diagnostics::classify_singularity(&mut run.trajectory, &stop, &run.spec.monitors);
    write(&dir.join("report.json"), &json(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaleOutput {
    pub matches: ProfileMatches,
    pub profiles: Vec<String>,
}

/// Blow-up matching on every stored snapshot. Writes the rescaled profiles
/// to `rescaled/` (origin-normalized for tips, neck-normalized otherwise)
/// and the residuals to `rescale.json`.
pub fn rescale(dir: &Path) -> Result<RescaleOutput> {
    let run = load_run(dir)?;
    let snaps: Vec<&RadialProfile> = run.trajectory.snapshots.iter().map(|s| &s.profile).collect();
    let matches = diagnostics::match_snapshots(&snaps, &run.spec.monitors, snaps.len());
    let sub = dir.join("rescaled");
    make_dir(&sub)?;
    let mut profiles = Vec::new();
    for (e, p) in run.manifest.snapshots.iter().zip(&snaps) {
        let rescaled = match p.inner {
            Inner::Tip => rescaling::parabolic_rescale(p, 0, Normalization::ROrigin),
            Inner::Mirror => {
                let neck = (0..p.len()).fold(0, |b, i| if p.phi[i] < p.phi[b] { i } else { b });
                rescaling::parabolic_rescale(p, neck, Normalization::RmAtPoint)
            }
        };
        if let Ok(r) = rescaled {
            let file = format!("rescaled/t_{:04}.csv", e.index);
            write(&dir.join(&file), &r.to_csv())?;
            profiles.push(file);
        }
    }
    let out = RescaleOutput { matches, profiles };
    write(&dir.join("rescale.json"), &json(&out))?;
    Ok(out)
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub alpha: f64,
    pub r0: f64,
    pub dir: PathBuf,
    pub result: Result<SingularityReport>,
}

/// Runs every (α, r₀) pair in its own subdirectory of the output dir, in
/// parallel. Empty lists keep the configured value.
pub fn sweep(spec: &RunSpec, alphas: &[f64], radii: &[f64]) -> Vec<SweepOutcome> {
    let alphas = if alphas.is_empty() { vec![spec.ic.alpha] } else { alphas.to_vec() };
    let radii = if radii.is_empty() { vec![spec.ic.r0] } else { radii.to_vec() };
    let jobs: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| radii.iter().map(move |&r| (a, r)))
        .collect();
    jobs.par_iter()
        .map(|&(alpha, r0)| {
            let mut one = spec.clone();
            one.ic.alpha = alpha;
            one.ic.r0 = r0;
            one.output_dir = spec.output_dir.join(format!("alpha_{alpha}_r0_{r0}"));
            let result = one
                .ic
                .validate()
                .map_err(dotted)
                .and_then(|_| simulate(&one))
                .map(|(out, _)| out.report);
            SweepOutcome {
                alpha,
                r0,
                dir: one.output_dir,
                result,
            }
        })
        .collect()
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 2,
    NumericFailure = 3,
    Inconclusive = 4,
}

impl ExitStatus {
    pub fn of_error(e: &Error) -> Self {
        match e {
            // bad input data is reported before any step is taken
            Error::Config { .. }
            | Error::InvalidParameter { .. }
            | Error::Io { .. }
            | Error::InvalidProfile(_)
            | Error::SingularProfile { .. }
            | Error::NoNeck(_) => ExitStatus::ConfigError,
            _ => ExitStatus::NumericFailure,
        }
    }

    pub fn of_report(report: &SingularityReport) -> Self {
        if matches!(report.stop, StopReason::StepFailure(_)) {
            ExitStatus::NumericFailure
        } else if report.type_verdict == TypeVerdict::Inconclusive {
            ExitStatus::Inconclusive
        } else {
            ExitStatus::Success
        }
    }
}
