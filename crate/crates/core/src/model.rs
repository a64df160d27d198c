//! Physical parameters, the sign-based tumbling rate, and the two discrete
//! material derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Signal sensitivity.
    pub chi_m: f64,
    /// Nutrient sensitivity.
    pub chi_n: f64,
    pub d_m: f64,
    pub d_n: f64,
    /// Signal degradation rate.
    pub alpha: f64,
    /// Signal production rate.
    pub beta: f64,
    /// Nutrient consumption rate.
    pub gamma: f64,
    /// Nutrient level imposed at the right wall.
    pub n_bar: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(0.0..=1.0).contains(&self.chi_m) || !(0.0..=1.0).contains(&self.chi_n) {
            return bad(format!(
                "sensitivities must lie in [0, 1]: chi_M = {}, chi_N = {}",
                self.chi_m, self.chi_n
            ));
        }
        // Equality lets a rate vanish, as in the pure aggregation setting.
        if self.chi_m + self.chi_n > 1.0 {
            return bad(format!(
                "chi_M + chi_N = {} must not exceed 1",
                self.chi_m + self.chi_n
            ));
        }
        if !(self.d_m > 0.0) || !(self.d_n > 0.0) {
            return bad("diffusivities must be positive".into());
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return bad("reaction rates must be nonnegative".into());
        }
        if !(self.n_bar > 0.0) {
            return bad("N_bar must be positive".into());
        }
        Ok(())
    }

    /// Total sensitivity χ_M + χ_N.
    pub fn chi_total(&self) -> f64 {
        self.chi_m + self.chi_n
    }

    /// Tumbling rate from the signs of the two material derivatives.
    pub fn tumbling_rate(&self, dm: f64, dn: f64) -> f64 {
        tumbling_rate(self, dm, dn)
    }

    pub fn rate_from_signs(&self, sm: i8, sn: i8) -> f64 {
        1.0 - self.chi_m * f64::from(sm) - self.chi_n * f64::from(sn)
    }
}

/// Sign with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `1 - χ_M sgn(DM/Dt) - χ_N sgn(DN/Dt)`.
pub fn tumbling_rate(params: &ModelParams, dm_material: f64, dn_material: f64) -> f64 {
    params.rate_from_signs(sgn(dm_material), sgn(dn_material))
}

/// Where a field's samples live relative to the kinetic cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    /// All `n + 1` cell interfaces, walls included.
    Interfaces,
    /// The `n` cell centers.
    Nodes,
}

/// Current and previous samples of the signal `M` and nutrient `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChemFields {
    pub m_now: Vec<f64>,
    pub m_prev: Vec<f64>,
    pub n_now: Vec<f64>,
    pub n_prev: Vec<f64>,
    /// Time separating `prev` from `now`.
    pub dt_used: f64,
    pub location: Location,
}

impl ChemFields {
    /// Fields at rest: `prev == now`.
    pub fn at_rest(m: Vec<f64>, n: Vec<f64>, dt: f64, location: Location) -> Self {
        assert_eq!(m.len(), n.len());
        Self {
            m_prev: m.clone(),
            m_now: m,
            n_prev: n.clone(),
            n_now: n,
            dt_used: dt,
            location,
        }
    }

    pub fn len(&self) -> usize {
        self.m_now.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m_now.is_empty()
    }

    /// Shift `now` into `prev` and install new current values.
    pub fn rotate(&mut self, m_next: Vec<f64>, n_next: Vec<f64>, dt: f64) {
        debug_assert_eq!(m_next.len(), self.m_now.len());
        debug_assert_eq!(n_next.len(), self.n_now.len());
        self.m_prev = std::mem::replace(&mut self.m_now, m_next);
        self.n_prev = std::mem::replace(&mut self.n_now, n_next);
        self.dt_used = dt;
    }
}

/// MD-1 at the midpoint `x_{j+1/2}` of node samples `j`, `j+1`: centered
/// slope plus the mean of the two backward time differences.
pub fn material_derivative_md1(
    now: &[f64],
    prev: &[f64],
    dt: f64,
    dx: f64,
    j: usize,
    v: f64,
) -> Result<f64> {
    let len = now.len().min(prev.len());
    if j + 1 >= len {
        return Err(Error::OutOfRange { index: j + 1, len });
    }
    let dmdx = (now[j + 1] - now[j]) / dx;
    let dmdt = 0.5 * ((now[j + 1] - prev[j + 1]) / dt + (now[j] - prev[j]) / dt);
    Ok(dmdt + v * dmdx)
}

/// Upwind interpolation of `prev` at `x_j - v dt` (interior points only).
#[inline]
fn md2_interp(prev: &[f64], a: f64, j: usize, v: f64) -> f64 {
    if v > 0.0 {
        (1.0 - a) * prev[j] + a * prev[j - 1]
    } else if v < 0.0 {
        (1.0 - a) * prev[j] + a * prev[j + 1]
    } else {
        prev[j]
    }
}

/// MD-2: `(M^n_j - M^{n-1}(x_j - v dt)) / dt` with the foot of the
/// characteristic found by upwind linear interpolation. At an end point
/// lacking its upwind neighbor the interpolated value of the adjacent
/// interior point is used.
///
/// Panics if `|v| dt > dx`.
pub fn material_derivative_md2(
    now: &[f64],
    prev: &[f64],
    dt: f64,
    dx: f64,
    j: usize,
    v: f64,
) -> Result<f64> {
    let len = now.len().min(prev.len());
    if j >= len {
        return Err(Error::OutOfRange { index: j, len });
    }
    let a = v.abs() * dt / dx;
    assert!(
        a <= 1.0 + 1e-12,
        "MD-2 requires |v| dt <= dx (|v| dt / dx = {a})"
    );
    let interp = if len == 1 {
        prev[j]
    } else if v > 0.0 && j == 0 {
        md2_interp(prev, a, 1, v)
    } else if v < 0.0 && j == len - 1 {
        md2_interp(prev, a, len - 2, v)
    } else {
        md2_interp(prev, a, j, v)
    };
    Ok((now[j] - interp) / dt)
}

/// [`material_derivative_md1`] at every midpoint `j + 1/2`, `j < len - 1`.
pub fn material_derivative_md1_all(
    now: &[f64],
    prev: &[f64],
    dt: f64,
    dx: f64,
    v: f64,
) -> Vec<f64> {
    let len = now.len().min(prev.len());
    (0..len.saturating_sub(1))
        .map(|j| {
            let dmdx = (now[j + 1] - now[j]) / dx;
            let dmdt = 0.5 * ((now[j + 1] - prev[j + 1]) / dt + (now[j] - prev[j]) / dt);
            dmdt + v * dmdx
        })
        .collect()
}

/// [`material_derivative_md2`] at every point.
pub fn material_derivative_md2_all(
    now: &[f64],
    prev: &[f64],
    dt: f64,
    dx: f64,
    v: f64,
) -> Vec<f64> {
    let len = now.len().min(prev.len());
    let a = v.abs() * dt / dx;
    assert!(
        a <= 1.0 + 1e-12,
        "MD-2 requires |v| dt <= dx (|v| dt / dx = {a})"
    );
    let (now, prev) = (&now[..len], &prev[..len]);
    if len < 2 || v == 0.0 {
        return now.iter().zip(prev).map(|(n, p)| (n - p) / dt).collect();
    }
    let mut out = Vec::with_capacity(len);
    if v > 0.0 {
        // foot between j-1 and j; the first point copies its neighbor's foot
        let foot = |j: usize| (1.0 - a) * prev[j] + a * prev[j - 1];
        out.push((now[0] - foot(1)) / dt);
        out.extend((1..len).map(|j| (now[j] - foot(j)) / dt));
    } else {
        let foot = |j: usize| (1.0 - a) * prev[j] + a * prev[j + 1];
        out.extend((0..len - 1).map(|j| (now[j] - foot(j)) / dt));
        out.push((now[len - 1] - foot(len - 2)) / dt);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn wave_params() -> ModelParams {
        ModelParams {
            chi_m: 0.48,
            chi_n: 0.44,
            d_m: 0.5,
            d_n: 1.0,
            alpha: 40.0,
            beta: 1.0,
            gamma: 1.0,
            n_bar: 1.0,
        }
    }

    #[test]
    fn rate_values() {
        let p = wave_params();
        assert_abs_diff_eq!(
            tumbling_rate(&p, 1.0, 2.0),
            1.0 - 0.48 - 0.44,
            epsilon = 1e-15
        );
        assert_eq!(tumbling_rate(&p, 0.0, 0.0), 1.0);
        assert_abs_diff_eq!(tumbling_rate(&p, -1.0, 1.0), 1.04, epsilon = 1e-15);
    }

    #[test]
    fn validation() {
        let mut p = wave_params();
        assert!(p.validate().is_ok());
        p.chi_n = 0.6;
        assert!(p.validate().is_err());
        p.chi_n = 0.52;
        assert!(p.validate().is_ok());
        p.chi_n = 0.1;
        p.d_m = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn md1_examples() {
        let flat = vec![2.0; 5];
        for &v in &[-1.0, 0.3, 1.0] {
            assert_eq!(
                material_derivative_md1(&flat, &flat, 0.1, 0.1, 2, v).unwrap(),
                0.0
            );
        }
        let x: Vec<f64> = (0..5).map(|i| i as f64 * 0.1).collect();
        for &v in &[-1.0, 0.3, 1.0] {
            let d = material_derivative_md1(&x, &x, 0.05, 0.1, 1, v).unwrap();
            assert_abs_diff_eq!(d, v, epsilon = 1e-12);
        }
        let dt = 0.01;
        let prev = vec![1.0; 5];
        let now: Vec<f64> = prev.iter().map(|m| m + dt).collect();
        assert_abs_diff_eq!(
            material_derivative_md1(&now, &prev, dt, 0.1, 2, 0.7).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(material_derivative_md1(&flat, &flat, 0.1, 0.1, 4, 1.0).is_err());
    }

    #[test]
    fn md2_examples() {
        let flat = vec![3.0; 6];
        assert_eq!(
            material_derivative_md2(&flat, &flat, 0.05, 0.1, 2, 0.8).unwrap(),
            0.0
        );
        let dx = 0.1;
        let x: Vec<f64> = (0..6).map(|i| i as f64 * dx).collect();
        // interior points; the end points copy their neighbor's foot value
        for j in 1..5 {
            for &v in &[-1.0, -0.4, 0.0, 0.5, 1.0] {
                let d = material_derivative_md2(&x, &x, 0.07, dx, j, v).unwrap();
                assert_abs_diff_eq!(d, v, epsilon = 1e-12);
            }
        }
        // Full upwind shift.
        let now = vec![1.0, 4.0, 2.0, 7.0];
        let prev = vec![0.5, 3.0, 9.0, 1.0];
        let dt = 0.1;
        let d = material_derivative_md2(&now, &prev, dt, 0.1, 2, 1.0).unwrap();
        assert_abs_diff_eq!(d, (now[2] - prev[1]) / dt, epsilon = 1e-12);
        let d = material_derivative_md2(&now, &prev, dt, 0.1, 2, -1.0).unwrap();
        assert_abs_diff_eq!(d, (now[2] - prev[3]) / dt, epsilon = 1e-12);
    }

    #[test]
    #[should_panic]
    fn md2_cfl_violation_panics() {
        let f = vec![0.0; 4];
        let _ = material_derivative_md2(&f, &f, 0.2, 0.1, 1, 1.0);
    }

    #[test]
    fn md_variants_converge_at_first_order() {
        // M(x, t) = sin(x - t): exact material derivative (v - 1) cos(x - t).
        let t = 0.7;
        let x0 = 0.3;
        let mut prev_err = [f64::NAN; 2];
        for level in 0..5 {
            let dx = 0.1 / 2f64.powi(level);
            let dt = 0.5 * dx;
            let xs: Vec<f64> = (0..5).map(|i| x0 + (i as f64 - 2.0) * dx).collect();
            let now: Vec<f64> = xs.iter().map(|x| (x - t).sin()).collect();
            let prev: Vec<f64> = xs.iter().map(|x| (x - t + dt).sin()).collect();
            let v = 0.6;
            // MD-1 at x_{2+1/2}
            let exact1 = (v - 1.0) * (x0 + 0.5 * dx - t).cos();
            let e1 = (material_derivative_md1(&now, &prev, dt, dx, 2, v).unwrap() - exact1).abs();
            let exact2 = (v - 1.0) * (x0 - t).cos();
            let e2 = (material_derivative_md2(&now, &prev, dt, dx, 2, v).unwrap() - exact2).abs();
            if level > 0 {
                assert!(
                    e1 < 0.6 * prev_err[0] + 1e-13,
                    "MD-1 not converging: {e1} vs {}",
                    prev_err[0]
                );
                assert!(
                    e2 < 0.6 * prev_err[1],
                    "MD-2 not converging: {e2} vs {}",
                    prev_err[1]
                );
            }
            prev_err = [e1, e2];
        }
    }

    #[test]
    fn array_forms_match_pointwise() {
        let now: Vec<f64> = (0..9).map(|i| (0.3 * i as f64).sin()).collect();
        let prev: Vec<f64> = (0..9).map(|i| (0.3 * i as f64 - 0.02).sin()).collect();
        for v in [-1.0, -0.4, 0.0, 0.7, 1.0] {
            let a = material_derivative_md1_all(&now, &prev, 0.05, 0.1, v);
            let b = material_derivative_md2_all(&now, &prev, 0.05, 0.1, v);
            for j in 0..9 {
                if j < 8 {
                    assert_eq!(
                        a[j],
                        material_derivative_md1(&now, &prev, 0.05, 0.1, j, v).unwrap()
                    );
                }
                assert_eq!(
                    b[j],
                    material_derivative_md2(&now, &prev, 0.05, 0.1, j, v).unwrap()
                );
            }
        }
    }
}
