//! Initial data: baseline profiles and the concentrating sequence
//! `(u_k, v_k)` that stays close to a baseline in `L^p × W^{1,2}` while its
//! energy diverges to `-∞`.
//!
//! The inner profiles depend on `r² + η_k` with `η_k` far below the smallest
//! positive double once `k` is moderately large, so `η_k` is carried as
//! `ln η_k` and every integral over `B_{r_k}` is evaluated after the
//! substitution `r = r_k ρ` through [`power_moment`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{energy_report, ParamWindow, StatePair};
use crate::grid::{sphere_area, RadialField, RadialGrid};
use crate::quadrature::{integrate_pieces, log_add_exp, log_ladder, power_moment, Tolerance};

/// Minimum number of cell centers inside `r_k` for a grid-sampled datum.
pub const MIN_CELLS_INSIDE: usize = 8;

/// A positive radial function with its derivative, defined on `[0, R]`.
pub trait Profile: Send + Sync + std::fmt::Debug {
    fn value(&self, r: f64) -> f64;
    fn slope(&self, r: f64) -> f64;
    /// Points where the profile is not smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Profile for Constant {
    fn value(&self, _r: f64) -> f64 {
        self.0
    }
    fn slope(&self, _r: f64) -> f64 {
        0.0
    }
}

/// `amplitude · exp(-(r/width)²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub amplitude: f64,
    pub width: f64,
}

impl Bump {
    /// The bump on `B_R ⊂ R^n` whose integral is `mass`.
    pub fn with_mass(n: usize, radius: f64, mass: f64, width: f64) -> Result<Self> {
        if !(mass > 0.0 && width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bump needs positive mass and width, got {mass}, {width}"
            )));
        }
        let shape = Bump {
            amplitude: 1.0,
            width,
        };
        let unit = ball_integral(n, radius, &[], |r| shape.value(r));
        Ok(Bump {
            amplitude: mass / unit,
            width,
        })
    }
}

impl Profile for Bump {
    fn value(&self, r: f64) -> f64 {
        self.amplitude * (-(r / self.width).powi(2)).exp()
    }
    fn slope(&self, r: f64) -> f64 {
        -2.0 * r / (self.width * self.width) * self.value(r)
    }
}

/// `c (1 + δ cos(π r / R))`, a single Neumann mode on top of a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineMode {
    pub level: f64,
    pub delta: f64,
    pub radius: f64,
}

impl Profile for CosineMode {
    fn value(&self, r: f64) -> f64 {
        let k = std::f64::consts::PI / self.radius;
        self.level * (1.0 + self.delta * (k * r).cos())
    }
    fn slope(&self, r: f64) -> f64 {
        let k = std::f64::consts::PI / self.radius;
        -self.level * self.delta * k * (k * r).sin()
    }
}

/// Piecewise-linear interpolant of a grid field, constant beyond the first
/// and last centers.
#[derive(Debug, Clone)]
pub struct Interpolated {
    r: Vec<f64>,
    f: Vec<f64>,
}

impl Interpolated {
    pub fn new(field: &RadialField) -> Self {
        Self {
            r: field.grid().centers().to_vec(),
            f: field.values().to_vec(),
        }
    }

    fn segment(&self, r: f64) -> Option<usize> {
        if r <= self.r[0] || r >= self.r[self.r.len() - 1] {
            return None;
        }
        Some(self.r.partition_point(|&c| c <= r) - 1)
    }
}

impl Profile for Interpolated {
    fn value(&self, r: f64) -> f64 {
        match self.segment(r) {
            None if r <= self.r[0] => self.f[0],
            None => self.f[self.f.len() - 1],
            Some(i) => {
                let t = (r - self.r[i]) / (self.r[i + 1] - self.r[i]);
                self.f[i] + t * (self.f[i + 1] - self.f[i])
            }
        }
    }
    fn slope(&self, r: f64) -> f64 {
        match self.segment(r) {
            None => 0.0,
            Some(i) => (self.f[i + 1] - self.f[i]) / (self.r[i + 1] - self.r[i]),
        }
    }
    fn kinks(&self) -> Vec<f64> {
        self.r.clone()
    }
}

/// `∫_0^R r^{n-1} f(r) dr · ω_n`, splitting at `kinks`.
fn ball_integral<F: Fn(f64) -> f64>(n: usize, radius: f64, kinks: &[f64], f: F) -> f64 {
    shell_integral(n, 0.0, radius, kinks, f)
}

fn shell_integral<F: Fn(f64) -> f64>(n: usize, a: f64, b: f64, kinks: &[f64], f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut points = vec![a];
    points.extend(kinks.iter().copied().filter(|&k| k > a && k < b));
    points.push(b);
    let nm1 = (n - 1) as i32;
    sphere_area(n) * integrate_pieces(|r| r.powi(nm1) * f(r), &points, Tolerance::default()).value
}

/// `φ(ξ) = ∫_0^1 ρ^{n-1} (ρ² + ξ)^{-n/2} dρ`.
pub fn phi(xi: f64, n: usize) -> Result<f64> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "phi needs xi > 0, got {xi}"
        )));
    }
    Ok(phi_ln(xi.ln(), n))
}

/// [`phi`] with its argument given as `ln ξ`.
pub fn phi_ln(ln_xi: f64, n: usize) -> f64 {
    power_moment(n as f64 - 1.0, n as f64 / 2.0, ln_xi, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaChoice {
    pub ln_eta: f64,
    /// `exp(ln_eta)`; underflows to zero for large targets.
    pub eta: f64,
    /// `r^n φ(η/r²) - target`, never negative.
    pub margin: f64,
    pub iterations: usize,
}

const ETA_MAX_ITER: usize = 200;
const ETA_REL_TOL: f64 = 1e-14;

/// Largest `η ∈ (0, R²)` (to bisection accuracy in `ln η`) with
/// `r^n φ(η/r²) ≥ target`.
pub fn choose_eta(r: f64, target: f64, n: usize, radius: f64) -> Result<EtaChoice> {
    if n < 3 {
        return Err(Error::Dimension(n));
    }
    if !(r > 0.0 && r < radius) {
        return Err(Error::InvalidArgument(format!(
            "radius r = {r} must lie in (0, {radius})"
        )));
    }
    if !target.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target {target} is not finite"
        )));
    }
    let rn = r.powi(n as i32);
    let ln_r2 = 2.0 * r.ln();
    let lhs = |ln_eta: f64| rn * phi_ln(ln_eta - ln_r2, n);

    // bracket: lo satisfies the inequality, hi does not or is the excluded R²
    let mut hi = 2.0 * radius.ln();
    let mut lo = (ln_r2 - 2.0 * target.max(0.0) / rn - 2.0).min(hi - 1.0);
    let mut step = (hi - lo).max(1.0);
    while lhs(lo) < target {
        lo -= step;
        step *= 2.0;
        if !lo.is_finite() {
            return Err(Error::Construction(format!(
                "no eta bracket found for r = {r}, target = {target}"
            )));
        }
    }
    let mut iterations = 0;
    while iterations < ETA_MAX_ITER && hi - lo > ETA_REL_TOL * lo.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lhs(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let margin = lhs(lo) - target;
    assert!(margin >= 0.0, "bisection lost its lower bracket");
    Ok(EtaChoice {
        ln_eta: lo,
        eta: lo.exp(),
        margin,
        iterations,
    })
}

/// `r_k = r0 · ratio^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRule {
    pub r0: f64,
    pub ratio: f64,
}

impl RadiusRule {
    /// `R/2 · 2^{-k}`.
    pub fn halving(radius: f64) -> Self {
        Self {
            r0: 0.5 * radius,
            ratio: 0.5,
        }
    }

    pub fn radius(&self, k: u32) -> f64 {
        self.r0 * self.ratio.powi(k as i32)
    }
}

/// Everything needed to produce `(u_k, v_k)` for any `k`.
#[derive(Debug, Clone)]
pub struct ConcentrationRecipe {
    pub n: usize,
    pub radius: f64,
    pub base_u: Arc<dyn Profile>,
    pub base_v: Arc<dyn Profile>,
    pub window: ParamWindow,
    pub rule: RadiusRule,
    /// `∫ base_u`, the mass every `u_k` carries.
    pub mass: f64,
    /// Grid on which to sample the data, if any.
    pub grid: Option<Arc<RadialGrid>>,
}

const POSITIVITY_SAMPLES: usize = 2049;

impl ConcentrationRecipe {
    pub fn new(
        radius: f64,
        base_u: Arc<dyn Profile>,
        base_v: Arc<dyn Profile>,
        window: ParamWindow,
        rule: RadiusRule,
    ) -> Result<Self> {
        let n = window.n;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius {radius}")));
        }
        if !(window.alpha > window.alpha_lo && window.alpha < window.alpha_hi) {
            return Err(Error::Window(format!(
                "alpha = {} outside ({}, {})",
                window.alpha, window.alpha_lo, window.alpha_hi
            )));
        }
        if !(rule.r0 > 0.0 && rule.r0 < radius && rule.ratio > 0.0 && rule.ratio < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "radius rule needs 0 < r0 < R and 0 < ratio < 1, got {rule:?}"
            )));
        }
        for (name, prof) in [("u", &base_u), ("v", &base_v)] {
            for j in 0..POSITIVITY_SAMPLES {
                let r = radius * j as f64 / (POSITIVITY_SAMPLES - 1) as f64;
                let x = prof.value(r);
                if !(x > 0.0) || !x.is_finite() {
                    return Err(Error::NotPositive {
                        field: name,
                        radius: r,
                        value: x,
                    });
                }
            }
        }
        let mass = ball_integral(n, radius, &base_u.kinks(), |r| base_u.value(r));
        Ok(Self {
            n,
            radius,
            base_u,
            base_v,
            window,
            rule,
            mass,
            grid: None,
        })
    }

    pub fn with_grid(mut self, grid: Arc<RadialGrid>) -> Result<Self> {
        if grid.dim() != self.n || (grid.radius() - self.radius).abs() > 1e-14 * self.radius {
            return Err(Error::Grid(format!(
                "grid (n = {}, R = {}) does not match recipe (n = {}, R = {})",
                grid.dim(),
                grid.radius(),
                self.n,
                self.radius
            )));
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn eta(&self, k: u32) -> Result<EtaChoice> {
        choose_eta(self.rule.radius(k), k as f64, self.n, self.radius)
    }

    /// The pair for index `k` together with its diagnostics.
    pub fn datum(&self, k: u32) -> Result<BlowupDatum> {
        concentrated_pair(self, k)
    }
}

/// Closed-form description of `(ũ_k, v_k)` on `B_{r_k}` in the variable
/// `ρ = r / r_k`.
#[derive(Debug, Clone, Copy)]
struct InnerProfile {
    n: usize,
    r_k: f64,
    ln_xi: f64,
    /// `n - α`
    s: f64,
    alpha: f64,
    /// `u(r_k) (1 + ξ)^{s/2}`
    cu: f64,
    /// `v(r_k) (1 + ξ)^{α/2}`
    cv: f64,
}

impl InnerProfile {
    fn moment(&self, a: f64, b: f64, with_log: bool) -> f64 {
        power_moment(a, b, self.ln_xi, with_log)
    }

    /// `ln(ρ² + ξ)` at `ρ = e^{-x}`.
    fn ell(&self, x: f64) -> f64 {
        log_add_exp(-2.0 * x, self.ln_xi)
    }

    /// `ln ũ_k` at `ρ = e^{-x}`.
    fn ln_u_tilde(&self, x: f64) -> f64 {
        self.cu.ln() - 0.5 * self.s * self.ell(x)
    }

    fn ln_v(&self, x: f64) -> f64 {
        self.cv.ln() - 0.5 * self.alpha * self.ell(x)
    }

    /// `ln |dv_k/dr|`; the slope itself is negative.
    fn ln_v_slope(&self, x: f64) -> f64 {
        (self.alpha * self.cv / self.r_k).ln() - x - (0.5 * self.alpha + 1.0) * self.ell(x)
    }

    fn u_tilde(&self, x: f64) -> f64 {
        self.ln_u_tilde(x).exp()
    }

    fn v(&self, x: f64) -> f64 {
        self.ln_v(x).exp()
    }

    fn transition(&self) -> f64 {
        -0.5 * self.ln_xi
    }
}

/// `e^{-nx} |σ e^{ln_a} - b|^q` without overflowing the intermediate
/// `e^{ln_a}`.
fn weighted_gap(ln_a: f64, sigma: f64, b: f64, q: f64, nx: f64) -> f64 {
    if b == 0.0 {
        return (q * ln_a - nx).exp();
    }
    let ln_b = b.abs().ln();
    let big = ln_a.max(ln_b);
    let d = sigma * (ln_a - big).exp() - b.signum() * (ln_b - big).exp();
    (q * big - nx).exp() * d.abs().powf(q)
}

/// Where numerical integration in `x = -ln ρ` stops; beyond it the inner
/// profile dominates the baseline by a factor `e^{-s X}` or more and the rest
/// is integrated in closed form.
fn numeric_cutoff(x_t: f64) -> f64 {
    const DIRECT_LIMIT: f64 = 1e6;
    if x_t < DIRECT_LIMIT {
        x_t.max(0.0) + 60.0
    } else {
        200.0
    }
}

/// `∫_0^1 ρ^{n-1} h(ρ) dρ` where `h` is dominated for small `ρ` by
/// `coef · (ρ² + ξ)^{-b} ρ^{2j}`; the callback returns `ρ^n h(ρ)` as a
/// function of `x = -ln ρ`.
fn inner_integral<H: Fn(f64) -> f64>(ip: &InnerProfile, h: H, coef: f64, b: f64, j: i32) -> f64 {
    let nf = ip.n as f64;
    let x_end = numeric_cutoff(ip.transition());
    let pts = log_ladder(ip.transition(), x_end);
    let numeric = integrate_pieces(h, &pts, Tolerance::default()).value;
    // ∫_0^{ρ_c} ρ^{n-1+2j} (ρ² + ξ)^{-b} dρ with ρ = ρ_c σ
    let a = nf - 1.0 + 2.0 * j as f64;
    let gamma = a + 1.0 - 2.0 * b;
    let rest = coef * (-gamma * x_end).exp() * power_moment(a, b, ip.ln_xi + 2.0 * x_end, false);
    numeric + rest
}

/// One member of the sequence together with the diagnostics that certify
/// it.
#[derive(Debug, Clone)]
pub struct BlowupDatum {
    pub k: u32,
    pub r_k: f64,
    pub eta: EtaChoice,
    pub summary: DatumSummary,
    /// Grid-sampled pair, when the recipe carries a grid.
    pub state: Option<StatePair>,
}

/// Refined-quadrature values for `(u_k, v_k)`; one row of a construction
/// table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatumSummary {
    pub k: u32,
    pub r_k: f64,
    pub ln_eta: f64,
    pub margin: f64,
    /// `∫ u_k`
    pub mass: f64,
    /// `m / ‖ũ_k‖_{L¹}`
    pub scale: f64,
    pub energy: f64,
    pub grad_v_sq: f64,
    pub v_sq: f64,
    pub uv: f64,
    pub entropy: f64,
    /// `‖u_k - u‖_{L^p}`
    pub lp_dist: f64,
    /// `‖v_k - v‖_{W^{1,2}}`
    pub w12_dist: f64,
    pub uv_over_k: f64,
    /// `ω_n u(0) v(0)`, the limit bound for `uv_over_k`.
    pub uv_bound: f64,
    /// Energy of the grid-sampled pair, when there is one.
    pub grid_energy: Option<f64>,
}

pub fn concentrated_pair(recipe: &ConcentrationRecipe, k: u32) -> Result<BlowupDatum> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = recipe.n;
    let nf = n as f64;
    let omega = sphere_area(n);
    let w = &recipe.window;
    let (u, v) = (&*recipe.base_u, &*recipe.base_v);
    let r_k = recipe.rule.radius(k);
    if !(r_k < recipe.radius) {
        return Err(Error::InvalidArgument(format!(
            "r_k = {r_k} is not inside the ball"
        )));
    }
    let eta = recipe.eta(k)?;
    let ln_xi = eta.ln_eta - 2.0 * r_k.ln();
    let xi = ln_xi.exp();
    let s = nf - w.alpha;
    let alpha = w.alpha;
    let ln1p_xi = xi.ln_1p();
    let ip = InnerProfile {
        n,
        r_k,
        ln_xi,
        s,
        alpha,
        cu: u.value(r_k) * (0.5 * s * ln1p_xi).exp(),
        cv: v.value(r_k) * (0.5 * alpha * ln1p_xi).exp(),
    };
    let rn = r_k.powi(n as i32);
    let (ku, kv) = (u.kinks(), v.kinks());
    let outer =
        |f: &dyn Fn(f64) -> f64, kinks: &[f64]| shell_integral(n, r_k, recipe.radius, kinks, f);
    let inner_base = |f: &dyn Fn(f64) -> f64, kinks: &[f64]| shell_integral(n, 0.0, r_k, kinks, f);

    // normalization
    let inner_mass = omega * rn * ip.cu * ip.moment(nf - 1.0, 0.5 * s, false);
    let excess = inner_mass - inner_base(&|r| u.value(r), &ku);
    let m = recipe.mass;
    let l1_tilde = m + excess;
    let scale = m / l1_tilde;
    let scale_m1 = -excess / l1_tilde;
    let outer_mass = outer(&|r| u.value(r), &ku);
    let mass = scale * (inner_mass + outer_mass);

    // energy ingredients
    let uv_inner = omega * rn * ip.cu * ip.cv * phi_ln(ln_xi, n);
    let uv = scale * (uv_inner + outer(&|r| u.value(r) * v.value(r), &ku));
    let ent_inner = omega
        * rn
        * ip.cu
        * (ip.cu.ln() * ip.moment(nf - 1.0, 0.5 * s, false)
            - 0.5 * s * ip.moment(nf - 1.0, 0.5 * s, true));
    let ent_outer = outer(&|r| u.value(r) * u.value(r).ln(), &ku);
    let entropy = m * scale.ln() + scale * (ent_inner + ent_outer);
    let grad_inner = omega * rn / (r_k * r_k)
        * alpha
        * alpha
        * ip.cv
        * ip.cv
        * ip.moment(nf + 1.0, alpha + 2.0, false);
    let grad_v_sq = grad_inner + outer(&|r| v.slope(r).powi(2), &kv);
    let v_sq = omega * rn * ip.cv * ip.cv * ip.moment(nf - 1.0, alpha, false)
        + outer(&|r| v.value(r).powi(2), &kv);
    let energy = 0.5 * grad_v_sq + 0.5 * v_sq - uv + entropy;

    // distances to the baseline
    let p = w.p;
    let lp_inner = omega
        * rn
        * inner_integral(
            &ip,
            |x| {
                weighted_gap(
                    scale.ln() + ip.ln_u_tilde(x),
                    1.0,
                    u.value(r_k * (-x).exp()),
                    p,
                    nf * x,
                )
            },
            (scale * ip.cu).powf(p),
            0.5 * s * p,
            0,
        );
    let lp_outer = scale_m1.abs().powf(p) * outer(&|r| u.value(r).powf(p), &ku);
    let lp_dist = (lp_inner + lp_outer).powf(1.0 / p);
    let w12_sq = omega
        * rn
        * (inner_integral(
            &ip,
            |x| weighted_gap(ip.ln_v(x), 1.0, v.value(r_k * (-x).exp()), 2.0, nf * x),
            ip.cv * ip.cv,
            alpha,
            0,
        ) + inner_integral(
            &ip,
            |x| {
                weighted_gap(
                    ip.ln_v_slope(x),
                    -1.0,
                    v.slope(r_k * (-x).exp()),
                    2.0,
                    nf * x,
                )
            },
            (alpha * ip.cv / r_k).powi(2),
            alpha + 2.0,
            1,
        ));
    let w12_dist = w12_sq.sqrt();

    let state = match &recipe.grid {
        Some(g) => Some(sample_on_grid(recipe, g, &ip, r_k)?),
        None => None,
    };
    let grid_energy = match &state {
        Some(st) => Some(energy_report(st)?.energy),
        None => None,
    };

    let summary = DatumSummary {
        k,
        r_k,
        ln_eta: eta.ln_eta,
        margin: eta.margin,
        mass,
        scale,
        energy,
        grad_v_sq,
        v_sq,
        uv,
        entropy,
        lp_dist,
        w12_dist,
        uv_over_k: uv / k as f64,
        uv_bound: omega * u.value(0.0) * v.value(0.0),
        grid_energy,
    };
    Ok(BlowupDatum {
        k,
        r_k,
        eta,
        summary,
        state,
    })
}

fn sample_on_grid(
    recipe: &ConcentrationRecipe,
    grid: &Arc<RadialGrid>,
    ip: &InnerProfile,
    r_k: f64,
) -> Result<StatePair> {
    let inside = grid.cells_within(r_k);
    if inside < MIN_CELLS_INSIDE {
        return Err(Error::Construction(format!(
            "only {inside} cells inside r_k = {r_k:e}; need {MIN_CELLS_INSIDE} (refine or grade the grid)"
        )));
    }
    let (u, v) = (&*recipe.base_u, &*recipe.base_v);
    let x_of = |r: f64| (r_k / r).ln();
    let ut = grid.sample(|r| {
        if r <= r_k {
            ip.u_tilde(x_of(r))
        } else {
            u.value(r)
        }
    });
    let vk = grid.sample(|r| if r <= r_k { ip.v(x_of(r)) } else { v.value(r) });
    if !ut.is_finite() {
        return Err(Error::Construction(format!(
            "sampled profile overflows at k-th radius {r_k:e}; the grid resolves scales where u exceeds f64"
        )));
    }
    let total = ut.integrate();
    let uk = ut.map(|x| recipe.mass * x / total);
    StatePair::new(uk, vk, 0.0)
}

/// Baselines used as initial data or as the starting point of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    /// `u ≡ v ≡ c`.
    Constant { c: f64 },
    /// `u = v` a Gaussian bump with `∫u = mass`.
    Bump { mass: f64, width: f64 },
    /// `u ≡ c`, `v = c(1 + δ cos(π r/R))`.
    Perturbed { c: f64, delta: f64 },
}

impl Baseline {
    /// Continuum `(u, v)` profiles on `B_R ⊂ R^n`.
    pub fn profiles(&self, n: usize, radius: f64) -> Result<(Arc<dyn Profile>, Arc<dyn Profile>)> {
        match *self {
            Baseline::Constant { c } => {
                if !(c > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "constant level {c} must be positive"
                    )));
                }
                Ok((Arc::new(Constant(c)), Arc::new(Constant(c))))
            }
            Baseline::Bump { mass, width } => {
                let b = Bump::with_mass(n, radius, mass, width)?;
                Ok((Arc::new(b), Arc::new(b)))
            }
            Baseline::Perturbed { c, delta } => {
                if !(c > 0.0 && delta.abs() < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "perturbed constant needs c > 0 and |delta| < 1, got {c}, {delta}"
                    )));
                }
                Ok((
                    Arc::new(Constant(c)),
                    Arc::new(CosineMode {
                        level: c,
                        delta,
                        radius,
                    }),
                ))
            }
        }
    }
}

/// Samples a baseline on `grid`; the bump is renormalized with the grid
/// quadrature so that the discrete mass is exact.
pub fn baseline_profiles(kind: Baseline, grid: &Arc<RadialGrid>) -> Result<StatePair> {
    let (u, v) = kind.profiles(grid.dim(), grid.radius())?;
    let mut us = grid.sample(|r| u.value(r));
    let vs = grid.sample(|r| v.value(r));
    if let Baseline::Bump { mass, .. } = kind {
        let total = us.integrate();
        us = us.map(|x| mass * x / total);
        return StatePair::new(us.clone(), us, 0.0);
    }
    StatePair::new(us, vs, 0.0)
}
