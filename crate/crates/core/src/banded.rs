//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals. Row `r` stores
/// columns `r - kl ..= r + ku + kl`; the extra `kl` columns hold pivoting
/// fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(
            c + self.kl >= r && c <= r + self.ku + self.kl,
            "({r}, {c}) outside band"
        );
        r * self.width + (c + self.kl - r)
    }

    /// Adds `v` to entry `(r, c)`, which must lie within the declared band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        assert!(
            c + self.kl >= r && c <= r + self.ku,
            "entry ({r}, {c}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c + self.kl < r || c > r + self.ku + self.kl {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    /// Factors in place.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut pivots = vec![0usize; n];
        let mut mult = vec![0.0; n * kl.max(1)];
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for r in j + 1..=last_row {
                let v = self.get(r, j).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot in column {j} of {n}")));
            }
            pivots[j] = p;
            let last_col = (j + ku + kl).min(n - 1);
            if p != j {
                for c in j..=last_col {
                    let (a, b) = (self.slot(j, c), self.slot(p, c));
                    self.data.swap(a, b);
                }
            }
            let d = self.data[self.slot(j, j)];
            for r in j + 1..=last_row {
                let s = self.slot(r, j);
                let l = self.data[s] / d;
                self.data[s] = 0.0;
                mult[j * kl + (r - j - 1)] = l;
                if l != 0.0 {
                    for c in j + 1..=last_col {
                        let u = self.data[self.slot(j, c)];
                        let t = self.slot(r, c);
                        self.data[t] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu {
            a: self,
            pivots,
            mult,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    a: BandMatrix,
    pivots: Vec<usize>,
    mult: Vec<f64>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, kl, ku) = (self.a.n, self.a.kl, self.a.ku);
        assert_eq!(rhs.len(), n);
        let mut b = rhs.to_vec();
        for j in 0..n {
            b.swap(j, self.pivots[j]);
            let bj = b[j];
            if bj != 0.0 {
                for i in 1..=kl.min(n - 1 - j) {
                    b[j + i] -= self.mult[j * kl + i - 1] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let last = (j + ku + kl).min(n - 1);
            let mut s = b[j];
            for c in j + 1..=last {
                s -= self.a.data[self.a.slot(j, c)] * b[c];
            }
            b[j] = s / self.a.data[self.a.slot(j, j)];
        }
        b
    }
}

/// Solves a tridiagonal system: `lower[i]` multiplies `x[i-1]` in row `i`,
/// `upper[i]` multiplies `x[i+1]`.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut m = BandMatrix::zeros(n, 1, 1);
    for i in 0..n {
        m.add(i, i, diag[i]);
        if i > 0 {
            m.add(i, i - 1, lower[i]);
        }
        if i + 1 < n {
            m.add(i, i + 1, upper[i]);
        }
    }
    Ok(m.factor()?.solve(rhs))
}
