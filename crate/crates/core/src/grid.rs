//! Arc-length grids graded toward a point of interest, and transfer of the
//! radius between grids.

use crate::error::{Error, Result};
use crate::geometry::Inner;
use crate::stencil::fd_weights;

/// Where a graded grid concentrates its nodes and on what length scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focus {
    pub center: f64,
    pub scale: f64,
}

/// Nodes spent on the uniform background; the rest follow `1/√(scale² + (s ∓ center)²)`.
pub const UNIFORM_FRACTION: f64 = 0.3;

/// `m` nodes on `[0, s_max]` with density
/// `a/√(scale² + (s − center)²) + a/√(scale² + (s + center)²) + b`.
///
/// The spacing near the center is about `scale / a`, and grows linearly with
/// the distance to the center until the uniform background takes over. The
/// mirrored term keeps the density smooth and even across s = 0, so the
/// grid continues oddly through the origin without a kink.
pub fn focused_grid(m: usize, s_max: f64, focus: Focus) -> Result<Vec<f64>> {
    if m < 2 || !(s_max > 0.0) {
        return Err(Error::param("grid", "need m >= 2 and a positive extent"));
    }
    let Focus { center, scale } = focus;
    if !(scale > 0.0) || !(0.0..=s_max).contains(&center) {
        return Err(Error::param(
            "focus",
            format!("center {center} / scale {scale} outside the grid"),
        ));
    }
    let g = |s: f64| -> f64 { ((s - center) / scale).asinh() + ((s + center) / scale).asinh() };
    let total = (m - 1) as f64;
    let b = UNIFORM_FRACTION * total / s_max;
    let a = (1.0 - UNIFORM_FRACTION) * total / g(s_max);
    let count = |s: f64| b * s + a * g(s);
    let mut x = Vec::with_capacity(m);
    x.push(0.0);
    let mut lo = 0.0;
    for i in 1..m - 1 {
        let target = i as f64;
        let mut hi = s_max;
        let mut l = lo;
        for _ in 0..200 {
            let mid = 0.5 * (l + hi);
            if count(mid) < target {
                l = mid;
            } else {
                hi = mid;
            }
            if hi - l <= 1e-15 * s_max {
                break;
            }
        }
        let s = 0.5 * (l + hi);
        x.push(s);
        lo = s;
    }
    x.push(s_max);
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NumericFailure(format!(
            "focused grid degenerate at scale {scale:e}"
        )));
    }
    Ok(x)
}

/// Local spacing of `x` at the node closest to `s`.
pub fn spacing_at(x: &[f64], s: f64) -> f64 {
    let i = nearest(x, s);
    let left = if i > 0 { x[i] - x[i - 1] } else { f64::INFINITY };
    let right = if i + 1 < x.len() { x[i + 1] - x[i] } else { f64::INFINITY };
    left.min(right)
}

fn nearest(x: &[f64], s: f64) -> usize {
    match x.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i >= x.len() => x.len() - 1,
        Err(i) => {
            if s - x[i - 1] <= x[i] - s {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Six-point Lagrange interpolation of `f` from `x` onto `targets`.
///
/// Across the first node `f` is continued oddly (tip) or evenly (mirror)
/// so the interpolant keeps the symmetry of the metric there.
pub fn resample(x: &[f64], f: &[f64], inner: Inner, targets: &[f64]) -> Vec<f64> {
    const WIDTH: usize = 6;
    let m = x.len();
    let ghosts = WIDTH.min(m - 1);
    // extended arrays: mirrored nodes first
    let mut ex = Vec::with_capacity(m + ghosts);
    let mut ef = Vec::with_capacity(m + ghosts);
    for j in (1..=ghosts).rev() {
        ex.push(2.0 * x[0] - x[j]);
        ef.push(match inner {
            Inner::Tip => 2.0 * f[0] - f[j],
            Inner::Mirror => f[j],
        });
    }
    ex.extend_from_slice(x);
    ef.extend_from_slice(f);
    let me = ex.len();
    targets
        .iter()
        .map(|&s| {
            let k = match ex.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
                Ok(i) => return ef[i],
                Err(i) => i,
            };
            // nodes k-3 .. k+2 bracket s in the middle when possible
            let start = k.saturating_sub(WIDTH / 2).min(me - WIDTH);
            let nodes = &ex[start..start + WIDTH];
            let w = fd_weights(s, nodes, 0);
            w.iter().zip(&ef[start..start + WIDTH]).map(|(w, v)| w * v).sum()
        })
        .collect()
}
