//! Finite-difference weights and index-space derivatives.
//!
//! All derivatives are taken with respect to the node index `u` (unit
//! spacing). A non-uniform x-grid enters only through the Jacobian
//! `dx/du`, which is folded into the coordinate weight, so the same
//! centered stencils serve uniform and graded grids.

/// Fornberg's recursion for the weights of the `order`-th derivative at
/// `x0` from samples at `nodes`.
pub fn fd_weights(x0: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let np = nodes.len();
    assert!(np > order, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; order + 1]; np];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - x0;
    c[0][0] = 1.0;
    for i in 1..np {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - x0;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] *= c4 / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// How a field continues across the first node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

#[inline]
fn at(f: &[f64], i: isize, parity: Parity) -> f64 {
    if i >= 0 {
        f[i as usize]
    } else {
        let v = f[(-i) as usize];
        match parity {
            Parity::Odd => 2.0 * f[0] - v,
            Parity::Even => v,
        }
    }
}

const D1_C4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2_C4: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

/// First and second index derivatives of `f` on every node.
///
/// Fourth-order centered where the stencil fits (reflecting across node 0
/// with `parity`), second-order centered at the penultimate node and a
/// one-sided stencil at the last node.
pub fn d1_d2(f: &[f64], parity: Parity) -> (Vec<f64>, Vec<f64>) {
    let m = f.len();
    let mut d1 = vec![0.0; m];
    let mut d2 = vec![0.0; m];
    for i in 0..m.saturating_sub(2) {
        let ii = i as isize;
        let mut a = 0.0;
        let mut b = 0.0;
        for (k, off) in (-2..=2).enumerate() {
            let v = at(f, ii + off, parity);
            a += D1_C4[k] * v;
            b += D2_C4[k] * v;
        }
        d1[i] = a;
        d2[i] = b;
    }
    if m >= 3 {
        let i = m - 2;
        d1[i] = 0.5 * (f[i + 1] - f[i - 1]);
        d2[i] = f[i + 1] - 2.0 * f[i] + f[i - 1];
    }
    if m >= 5 {
        let i = m - 1;
        let w1 = one_sided_left(1);
        let w2 = one_sided_left(2);
        d1[i] = (0..5).map(|k| w1[k] * f[i - 4 + k]).sum();
        d2[i] = (0..5).map(|k| w2[k] * f[i - 4 + k]).sum();
    }
    (d1, d2)
}

/// The weights behind [`d1_d2`] at node `i` of an `m`-node field, as
/// `(column, d1 weight, d2 weight)` with continued nodes folded back.
pub fn d1_d2_row(m: usize, i: usize, parity: Parity) -> Vec<(usize, f64, f64)> {
    let mut out: Vec<(usize, f64, f64)> = Vec::with_capacity(6);
    let mut put = |col: usize, a: f64, b: f64| match out.iter_mut().find(|e| e.0 == col) {
        Some(e) => {
            e.1 += a;
            e.2 += b;
        }
        None => out.push((col, a, b)),
    };
    if i + 2 < m {
        for (k, off) in (-2..=2).enumerate() {
            for (col, w) in fold(i as isize + off, parity) {
                put(col, w * D1_C4[k], w * D2_C4[k]);
            }
        }
    } else if i + 2 == m && m >= 3 {
        put(i - 1, -0.5, 1.0);
        put(i, 0.0, -2.0);
        put(i + 1, 0.5, 1.0);
    } else if m >= 5 {
        let (w1, w2) = (one_sided_left(1), one_sided_left(2));
        for k in 0..5 {
            put(i - 4 + k, w1[k], w2[k]);
        }
    }
    out
}

/// The weights behind [`d3_at_first_odd`] as `(column, weight)`.
pub fn d3_first_odd_row() -> Vec<(usize, f64)> {
    let mut w = vec![0.0; 4];
    for (off, c) in [(-3, 1.0), (-2, -8.0), (-1, 13.0), (1, -13.0), (2, 8.0), (3, -1.0)] {
        for (col, f) in fold(off, Parity::Odd) {
            w[col] += f * c / 8.0;
        }
    }
    w.into_iter().enumerate().collect()
}

/// Weights of a fourth-order rule for the integral of `f` over the index
/// interval `[i − 1, i]` on unit spacing, as `(node, weight)`; `f` is
/// continued evenly across node 0. Falls back to the trapezoid rule on
/// grids shorter than four nodes.
pub fn interval_row(m: usize, i: usize) -> Vec<(usize, f64)> {
    assert!(i >= 1 && i < m, "interval outside the grid");
    if m < 4 {
        return vec![(i - 1, 0.5), (i, 0.5)];
    }
    let taps: [(isize, f64); 4] = if i + 1 < m {
        [(-2, -1.0), (-1, 13.0), (0, 13.0), (1, -1.0)]
    } else {
        [(-3, 1.0), (-2, -5.0), (-1, 19.0), (0, 9.0)]
    };
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(4);
    for (off, c) in taps {
        for (col, f) in fold(i as isize + off, Parity::Even) {
            match out.iter_mut().find(|e| e.0 == col) {
                Some(e) => e.1 += f * c / 24.0,
                None => out.push((col, f * c / 24.0)),
            }
        }
    }
    out
}

fn fold(i: isize, parity: Parity) -> Vec<(usize, f64)> {
    if i >= 0 {
        vec![(i as usize, 1.0)]
    } else {
        let j = (-i) as usize;
        match parity {
            Parity::Odd => vec![(0, 2.0), (j, -1.0)],
            Parity::Even => vec![(j, 1.0)],
        }
    }
}

fn one_sided_left(order: usize) -> Vec<f64> {
    fd_weights(0.0, &[-4.0, -3.0, -2.0, -1.0, 0.0], order)
}

/// Third index derivative at node 0 for an odd continuation (fourth order).
pub fn d3_at_first_odd(f: &[f64]) -> f64 {
    let g = |i: isize| at(f, i, Parity::Odd);
    (g(-3) - 8.0 * g(-2) + 13.0 * g(-1) - 13.0 * g(1) + 8.0 * g(2) - g(3)) / 8.0
}

/// One-sided derivative of `order` at node 0 using nodes `0..=5`, with no
/// assumption about the continuation across node 0.
pub fn one_sided_first(f: &[f64], order: usize) -> f64 {
    let nodes: Vec<f64> = (0..6).map(|k| k as f64).collect();
    let w = fd_weights(0.0, &nodes, order);
    w.iter().zip(f).map(|(w, v)| w * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rule_is_fourth_order() {
        // even quartic: the rule is exact for cubics, so check convergence
        let f = |x: f64| (x * 0.7).cos() + x * x * x * x * 0.01;
        let big = |x: f64| (x * 0.7).sin() / 0.7 + x.powi(5) * 0.002;
        let err = |m: usize| {
            let h = 3.0 / (m - 1) as f64;
            let vals: Vec<f64> = (0..m).map(|k| f(k as f64 * h)).collect();
            (1..m)
                .map(|i| {
                    let got: f64 = interval_row(m, i).iter().map(|&(c, w)| w * vals[c]).sum::<f64>() * h;
                    let want = big(i as f64 * h) - big((i - 1) as f64 * h);
                    (got - want).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b) = (err(17), err(33));
        assert!(a / b > 24.0, "ratio {}", a / b);
    }

    #[test]
    fn row_weights_reproduce_stencils() {
        let m = 11;
        let f: Vec<f64> = (0..m).map(|i| (0.3 * i as f64).sin() + 0.1 * i as f64).collect();
        for parity in [Parity::Odd, Parity::Even] {
            let (d1, d2) = d1_d2(&f, parity);
            for i in 0..m {
                let row = d1_d2_row(m, i, parity);
                let a: f64 = row.iter().map(|(c, w, _)| w * f[*c]).sum();
                let b: f64 = row.iter().map(|(c, _, w)| w * f[*c]).sum();
                assert!((a - d1[i]).abs() < 1e-13 && (b - d2[i]).abs() < 1e-13, "node {i}");
            }
        }
        let d3: f64 = d3_first_odd_row().iter().map(|(c, w)| w * f[*c]).sum();
        assert!((d3 - d3_at_first_odd(&f)).abs() < 1e-13);
    }

    #[test]
    fn fornberg_reproduces_centered_weights() {
        let w = fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        for (a, b) in w.iter().zip(D2_C4.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 1);
        assert!((w[0] + 0.5).abs() < 1e-15 && w[1].abs() < 1e-15 && (w[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stencils_exact_on_quartics() {
        let f: Vec<f64> = (0..12).map(|i| (i as f64).powi(4) - 2.0 * (i as f64)).collect();
        let (d1, d2) = d1_d2(&f, Parity::Even);
        for i in 2..8 {
            let u = i as f64;
            assert!((d1[i] - (4.0 * u.powi(3) - 2.0)).abs() < 1e-9);
            assert!((d2[i] - 12.0 * u * u).abs() < 1e-9);
        }
        // one-sided last node is exact up to quartics
        let u = 11.0;
        assert!((d1[11] - (4.0 * u * u * u - 2.0)).abs() < 1e-8);
    }

    #[test]
    fn odd_continuation_third_derivative() {
        let f: Vec<f64> = (0..6).map(|i| {
            let u = i as f64;
            u - 0.5 * u * u * u
        }).collect();
        assert!((d3_at_first_odd(&f) + 3.0).abs() < 1e-12);
        assert!((one_sided_first(&f, 1) - 1.0).abs() < 1e-12);
        assert!(one_sided_first(&f, 2).abs() < 1e-12);
    }
}
