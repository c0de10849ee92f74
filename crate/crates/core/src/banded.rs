//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// A square band matrix, factorized in place.
#[derive(Debug, Clone)]
pub(crate) struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    /// A zero matrix with `kl` sub- and `ku` super-diagonals.
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        // room for the fill-in produced by row interchanges
        let width = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            ku,
            width,
            a: vec![0.0; n * width],
            piv: vec![0; n],
        }
    }

    /// Assembles from `(row, col, value)` triplets; repeated entries add up.
    #[cfg(test)]
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let kl = entries.iter().map(|&(r, c, _)| r.saturating_sub(c)).max().unwrap_or(0);
        let ku = entries.iter().map(|&(r, c, _)| c.saturating_sub(r)).max().unwrap_or(0);
        let mut lu = Self::zeros(n, kl, ku);
        for &(r, c, v) in entries {
            lu.add(r, c, v);
        }
        lu
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(c + self.kl >= r && c <= r + self.ku);
        let k = self.idx(r, c);
        self.a[k] += v;
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.width + (c + self.kl - r)
    }

    fn reach(&self, c: usize) -> usize {
        (c + self.kl + self.ku).min(self.n - 1)
    }

    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        for c in 0..n {
            let last = (c + self.kl).min(n - 1);
            let mut p = c;
            let mut best = self.a[self.idx(c, c)].abs();
            for r in c + 1..=last {
                let v = self.a[self.idx(r, c)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::NumericFailure(format!("singular band matrix at column {c}")));
            }
            self.piv[c] = p;
            let reach = self.reach(c);
            if p != c {
                for col in c..=reach {
                    let (i, j) = (self.idx(c, col), self.idx(p, col));
                    self.a.swap(i, j);
                }
            }
            let d = self.a[self.idx(c, c)];
            let len = reach - c;
            let pivot_start = self.idx(c, c + 1);
            for r in c + 1..=last {
                let k = self.idx(r, c);
                let f = self.a[k] / d;
                if f == 0.0 {
                    continue;
                }
                self.a[k] = f;
                // rows are contiguous in column order, and r > c
                let row_start = self.idx(r, c + 1);
                let (head, tail) = self.a.split_at_mut(row_start);
                let pivot = &head[pivot_start..pivot_start + len];
                for (x, u) in tail[..len].iter_mut().zip(pivot) {
                    *x -= f * u;
                }
            }
        }
        Ok(())
    }

    /// Solves in place; `factor` must have succeeded.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for c in 0..n {
            b.swap(c, self.piv[c]);
            let bc = b[c];
            if bc != 0.0 {
                for r in c + 1..=(c + self.kl).min(n - 1) {
                    b[r] -= self.a[self.idx(r, c)] * bc;
                }
            }
        }
        for c in (0..n).rev() {
            let reach = self.reach(c);
            let row = &self.a[self.idx(c, c)..=self.idx(c, reach)];
            let s: f64 = row[1..].iter().zip(&b[c + 1..=reach]).map(|(a, x)| a * x).sum();
            b[c] = (b[c] - s) / row[0];
        }
    }
}
