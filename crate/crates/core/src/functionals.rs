//! Energy, dissipation and the residual fields of the Keller-Segel system,
//! plus norms and the exponent windows that parametrize the blow-up theory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian_radial, radial_derivative, Bc, RadialField};

/// Lower clamp applied inside logarithms only.
pub const LOG_FLOOR: f64 = 1e-300;

/// A `(u, v)` pair at time `t`; both components positive on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePair {
    pub u: RadialField,
    pub v: RadialField,
    pub t: f64,
}

impl StatePair {
    pub fn new(u: RadialField, v: RadialField, t: f64) -> Result<Self> {
        let s = Self { u, v, t };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.u.same_grid(&self.v) {
            return Err(Error::GridMismatch);
        }
        for (name, f) in [("u", &self.u), ("v", &self.v)] {
            for (&x, &r) in f.values().iter().zip(f.grid().centers()) {
                if !x.is_finite() {
                    return Err(Error::NotFinite {
                        field: name,
                        radius: r,
                    });
                }
                if x <= 0.0 {
                    return Err(Error::NotPositive {
                        field: name,
                        radius: r,
                        value: x,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &std::sync::Arc<crate::grid::RadialGrid> {
        self.u.grid()
    }
}

/// Every quadrature ingredient of `F` and `D` for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    pub dissipation: f64,
    pub grad_v_sq: f64,
    pub v_sq: f64,
    pub uv: f64,
    pub entropy: f64,
    pub f_norm_sq: f64,
    pub g_norm_sq: f64,
}

fn require_positive_u(u: &RadialField) -> Result<()> {
    for (&x, &r) in u.values().iter().zip(u.grid().centers()) {
        if !(x > 0.0) {
            return Err(Error::NotPositive {
                field: "u",
                radius: r,
                value: x,
            });
        }
    }
    Ok(())
}

/// `f = -Δv + v - u`.
pub fn residual_f(s: &StatePair) -> RadialField {
    let lap = laplacian_radial(&s.v);
    let mut out = lap;
    for ((o, &v), &u) in out
        .values_mut()
        .iter_mut()
        .zip(s.v.values())
        .zip(s.u.values())
    {
        *o = -*o + v - u;
    }
    out
}

/// `g = u_r/√u - √u v_r`, derivatives with zero slope at both ends.
pub fn residual_g(s: &StatePair) -> Result<RadialField> {
    require_positive_u(&s.u)?;
    let ur = radial_derivative(&s.u, Bc::Neumann);
    let vr = radial_derivative(&s.v, Bc::Neumann);
    let mut out = ur;
    for ((o, &u), &vr) in out
        .values_mut()
        .iter_mut()
        .zip(s.u.values())
        .zip(vr.values())
    {
        let su = u.sqrt();
        *o = *o / su - su * vr;
    }
    Ok(out)
}

pub fn energy_report(s: &StatePair) -> Result<EnergyReport> {
    require_positive_u(&s.u)?;
    let grid = s.grid();
    let w = grid.weights();
    let omega = grid.omega_n();
    let vr = radial_derivative(&s.v, Bc::Neumann);

    let (mut grad_v_sq, mut v_sq, mut uv, mut entropy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..w.len() {
        let (u, v, g) = (s.u[i], s.v[i], vr[i]);
        grad_v_sq += w[i] * g * g;
        v_sq += w[i] * v * v;
        uv += w[i] * u * v;
        entropy += w[i] * u * u.max(LOG_FLOOR).ln();
    }
    let f = residual_f(s);
    let g = residual_g(s)?;
    let f_norm_sq = omega
        * f.values()
            .iter()
            .zip(w)
            .map(|(x, w)| w * x * x)
            .sum::<f64>();
    let g_norm_sq = omega
        * g.values()
            .iter()
            .zip(w)
            .map(|(x, w)| w * x * x)
            .sum::<f64>();

    let (grad_v_sq, v_sq, uv, entropy) =
        (omega * grad_v_sq, omega * v_sq, omega * uv, omega * entropy);
    Ok(EnergyReport {
        energy: 0.5 * grad_v_sq + 0.5 * v_sq - uv + entropy,
        dissipation: f_norm_sq + g_norm_sq,
        grad_v_sq,
        v_sq,
        uv,
        entropy,
        f_norm_sq,
        g_norm_sq,
    })
}

/// `F(u, v) = ½∫|∇v|² + ½∫v² - ∫uv + ∫u ln u`.
pub fn energy(s: &StatePair) -> Result<f64> {
    Ok(energy_report(s)?.energy)
}

/// `D(u, v) = ‖f‖² + ‖g‖²`, i.e. `∫v_t² + ∫u|∇u/u - ∇v|²` along solutions.
pub fn dissipation(s: &StatePair) -> Result<f64> {
    Ok(energy_report(s)?.dissipation)
}

/// `θ = 1/(1 + n/((2n+4)κ))`, the sublinear power of `D` that bounds `-F`.
pub fn theta_exponent(n: usize, kappa: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::Dimension(n));
    }
    let nf = n as f64;
    if !(kappa > nf - 2.0) {
        return Err(Error::Window(format!(
            "kappa = {kappa} must exceed n - 2 = {}",
            nf - 2.0
        )));
    }
    let theta = 1.0 / (1.0 + nf / ((2.0 * nf + 4.0) * kappa));
    if !(theta > 0.5 && theta < 1.0 && 2.0 * theta > (2.0 * nf + 4.0) / (nf + 4.0)) {
        return Err(Error::Window(format!(
            "theta = {theta} misses (1/2, 1) or 2θ <= (2n+4)/(n+4)"
        )));
    }
    Ok(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormKind {
    Lp { p: f64 },
    W12,
    Sup,
}

pub fn norm(f: &RadialField, kind: NormKind) -> f64 {
    match kind {
        NormKind::Lp { p } => {
            assert!(p >= 1.0, "L^p norm needs p >= 1");
            f.map(|x| x.abs().powf(p)).integrate().powf(1.0 / p)
        }
        NormKind::W12 => {
            let d = radial_derivative(f, Bc::None);
            (f.map(|x| x * x).integrate() + d.map(|x| x * x).integrate()).sqrt()
        }
        NormKind::Sup => f.values().iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Exponent windows: `κ > n - 2`, `θ(n, κ)`, `1 < p < 2n/(n+2)` and
/// `α ∈ (n - n/p, (n-2)/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamWindow {
    pub n: usize,
    pub kappa: f64,
    pub theta: f64,
    pub p: f64,
    pub alpha: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
}

/// Upper end of the admissible Lebesgue exponent, `2n/(n+2)`.
pub fn p_upper(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 + 2.0)
}

/// Validates `(n, p, κ)` and picks `α` (window midpoint unless given).
pub fn param_window(n: usize, p: f64, kappa: f64, alpha: Option<f64>) -> Result<ParamWindow> {
    if n < 3 {
        return Err(Error::Dimension(n));
    }
    let nf = n as f64;
    let theta = theta_exponent(n, kappa)?;
    if !(p > 1.0) {
        return Err(Error::Window(format!("p = {p} must exceed 1")));
    }
    if !(p < p_upper(n)) {
        return Err(Error::Window(format!(
            "p = {p} must be below 2n/(n+2) = {}; the alpha window ({}, {}) is empty",
            p_upper(n),
            nf - nf / p,
            (nf - 2.0) / 2.0
        )));
    }
    let alpha_lo = nf - nf / p;
    let alpha_hi = (nf - 2.0) / 2.0;
    let alpha = match alpha {
        Some(a) if a > alpha_lo && a < alpha_hi => a,
        Some(a) => {
            return Err(Error::Window(format!(
                "alpha = {a} outside ({alpha_lo}, {alpha_hi})"
            )))
        }
        None => 0.5 * (alpha_lo + alpha_hi),
    };
    Ok(ParamWindow {
        n,
        kappa,
        theta,
        p,
        alpha,
        alpha_lo,
        alpha_hi,
    })
}
