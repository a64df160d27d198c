//! Symmetric discrete velocity sets.
//!
//! A [`VelocityGrid`] stores `2K` nodes in ascending order together with
//! weights normalized to sum to one. The negative half is always built by
//! negating the positive half, so `nodes[k] == -nodes[2K-1-k]` holds bit for
//! bit.
//!
//! Besides the natural (ascending) order, the scattering code uses a
//! "half-flux" order: slot `i < K` holds `+V[i]` and slot `K + i` holds
//! `-V[i]`, where `V` is the ascending list of positive speeds.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    half: usize,
}

/// Selects the weight rule for [`VelocityGrid::explicit_symmetric`].
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Uniform,
    /// Weights of the positive speeds, in the same order as the speeds; they
    /// are mirrored onto the negative half and normalized.
    Given(Vec<f64>),
}

impl VelocityGrid {
    /// Gauss–Legendre nodes on (-1, 1) with `2K` points, weights halved so
    /// they sum to one.
    pub fn gauss_legendre(half_count: usize) -> Result<Self> {
        if half_count == 0 {
            return Err(Error::InvalidGrid("K must be at least 1".into()));
        }
        let n = 2 * half_count;
        let mut speeds = Vec::with_capacity(half_count);
        let mut half_weights = Vec::with_capacity(half_count);
        // Roots of P_n in (0, 1), largest first for the standard initial guess.
        for i in 1..=half_count {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            speeds.push(x);
            // Classical weight is 2 / ((1 - x^2) P'(x)^2); halved for normalization.
            half_weights.push(1.0 / ((1.0 - x * x) * dp * dp));
        }
        speeds.reverse();
        half_weights.reverse();
        Self::from_half(speeds, half_weights, false)
    }

    /// Grid with nodes `{-reverse(values)} ∪ {values}`.
    pub fn explicit_symmetric(values: &[f64], weights: Weights) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("no velocities given".into()));
        }
        for w in values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidGrid(format!(
                    "velocities must be strictly increasing (got {} then {})",
                    w[0], w[1]
                )));
            }
        }
        if values[0] <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "velocities must be positive (got {})",
                values[0]
            )));
        }
        let half_weights = match weights {
            Weights::Uniform => vec![1.0; values.len()],
            Weights::Given(w) => {
                if w.len() != values.len() {
                    return Err(Error::InvalidGrid(format!(
                        "{} weights for {} velocities",
                        w.len(),
                        values.len()
                    )));
                }
                if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidGrid("weights must be positive".into()));
                }
                w
            }
        };
        Self::from_half(values.to_vec(), half_weights, true)
    }

    fn from_half(speeds: Vec<f64>, half_weights: Vec<f64>, normalize: bool) -> Result<Self> {
        let half = speeds.len();
        let mut half_weights = half_weights;
        if normalize {
            let total: f64 = 2.0 * half_weights.iter().sum::<f64>();
            for w in &mut half_weights {
                *w /= total;
            }
        }
        let mut nodes = Vec::with_capacity(2 * half);
        let mut weights = Vec::with_capacity(2 * half);
        for i in (0..half).rev() {
            nodes.push(-speeds[i]);
            weights.push(half_weights[i]);
        }
        for i in 0..half {
            nodes.push(speeds[i]);
            weights.push(half_weights[i]);
        }
        Ok(Self {
            nodes,
            weights,
            half,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// K: the number of positive nodes.
    pub fn half_count(&self) -> usize {
        self.half
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Positive speeds in ascending order.
    pub fn speeds(&self) -> &[f64] {
        &self.nodes[self.half..]
    }

    pub fn v_min(&self) -> f64 {
        self.nodes[self.half]
    }

    pub fn v_max(&self) -> f64 {
        self.nodes[2 * self.half - 1]
    }

    /// Natural index of the node `+V[i]`.
    #[inline]
    pub fn pos(&self, i: usize) -> usize {
        self.half + i
    }

    /// Natural index of the node `-V[i]`.
    #[inline]
    pub fn neg(&self, i: usize) -> usize {
        self.half - 1 - i
    }

    /// Natural index of half-flux slot `s`.
    #[inline]
    pub fn slot_to_natural(&self, s: usize) -> usize {
        if s < self.half {
            self.pos(s)
        } else {
            self.neg(s - self.half)
        }
    }

    /// Natural index of the mirrored velocity `-v_k`.
    #[inline]
    pub fn mirror(&self, k: usize) -> usize {
        2 * self.half - 1 - k
    }

    /// Density and flux of one velocity slice.
    pub fn moments(&self, f: &[f64]) -> (f64, f64) {
        debug_assert_eq!(f.len(), self.nodes.len());
        // Summing mirrored pairs keeps the flux of even slices exactly zero.
        let mut rho = 0.0;
        let mut flux = 0.0;
        for i in 0..self.half {
            let (p, n) = (self.pos(i), self.neg(i));
            rho += self.weights[p] * (f[p] + f[n]);
            flux += self.weights[p] * self.nodes[p] * (f[p] - f[n]);
        }
        (rho, flux)
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
