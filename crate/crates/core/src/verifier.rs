//! Executable versions of the identities and inequalities of the blow-up
//! theory: trajectory checks (conservation, energy decay, t-uniform bounds,
//! the superlinear ODI) and a corpus-based suite that estimates the
//! non-constructive constants as observed suprema.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{
    energy_report, norm, residual_f, residual_g, theta_exponent, NormKind, StatePair,
};
use crate::grid::{radial_derivative, sphere_area, Bc};
use crate::initial_data::DatumSummary;
use crate::quadrature::power_moment;
use crate::solver::SeriesRecord;

/// Relative tolerance on `∫u` along a run.
pub const MASS_TOL: f64 = 1e-10;
/// Relative slack on the `∫v` bound along a run.
pub const MASS_V_TOL: f64 = 1e-8;
/// Membership tolerance on `∫u = m` for corpus states.
pub const CORPUS_MASS_TOL: f64 = 1e-8;
/// Ratio of last- to first-quartile suprema tolerated by the no-growth test.
pub const TREND_FACTOR: f64 = 1.5;
/// Constant of the per-step energy tolerance `C dt² (1 + |F|)`.
pub const SCHEME_TOL_CONSTANT: f64 = 50.0;
/// Rounding allowance, in ulps of `1 + |F|`, on each energy difference.
pub const ENERGY_ROUNDOFF_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    T,
    R,
    K,
    Member,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub axis: Axis,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// False when the check's hypotheses do not hold for the input; such a
    /// report is neither a pass nor a failure.
    pub applicable: bool,
    /// Supremum of LHS/RHS, or the largest violation for identities.
    #[serde(with = "finite_or_null")]
    pub worst_ratio: f64,
    pub location: Option<Location>,
    pub details: BTreeMap<String, f64>,
    pub note: String,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            applicable: true,
            worst_ratio: f64::NAN,
            location: None,
            details: BTreeMap::new(),
            note: String::new(),
        }
    }

    fn detail(&mut self, key: &str, value: f64) -> &mut Self {
        if value.is_finite() {
            self.details.insert(key.to_string(), value);
        }
        self
    }

    fn at(&mut self, axis: Axis, value: f64) -> &mut Self {
        self.location = Some(Location { axis, value });
        self
    }

    /// Passed, or not applicable.
    pub fn ok(&self) -> bool {
        self.passed || !self.applicable
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Index of the maximum, ignoring NaN unless everything is NaN.
fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            _ if x.is_nan() => {
                return Some(i);
            }
            None => best = Some(i),
            Some(b) if x > xs[b] => best = Some(i),
            _ => {}
        }
    }
    best
}

/// Suprema of the first and last quarter of `xs` (by index).
pub fn quartile_sups(xs: &[f64]) -> (f64, f64) {
    let q = xs.len().div_ceil(4).max(1);
    let sup = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (
        sup(&xs[..q.min(xs.len())]),
        sup(&xs[xs.len().saturating_sub(q)..]),
    )
}

/// Last-quartile supremum at most [`TREND_FACTOR`] times the first.
pub fn no_growth_trend(xs: &[f64]) -> bool {
    if xs.is_empty() || xs.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let (first, last) = quartile_sups(xs);
    last <= TREND_FACTOR * first || last <= 0.0
}

/// `∫u` constant to [`MASS_TOL`] and `∫v ≤ max{∫u₀, ∫v₀}(1 + MASS_V_TOL)`.
pub fn check_conservation(series: &[SeriesRecord]) -> CheckReport {
    let mut rep = CheckReport::new("conservation");
    let Some(first) = series.first() else {
        rep.applicable = false;
        rep.note = "empty series".into();
        return rep;
    };
    let m0 = first.mass_u;
    let cap = first.mass_u.max(first.mass_v);
    let drift: Vec<f64> = series
        .iter()
        .map(|r| ((r.mass_u - m0) / m0).abs())
        .collect();
    let v_excess: Vec<f64> = series.iter().map(|r| r.mass_v / cap - 1.0).collect();
    let iu = argmax(&drift).expect("non-empty");
    let iv = argmax(&v_excess).expect("non-empty");
    let u_ok = drift[iu] <= MASS_TOL;
    let v_ok = v_excess[iv] <= MASS_V_TOL;
    rep.passed = u_ok && v_ok;
    rep.worst_ratio = drift[iu];
    rep.detail("max_mass_u_drift", drift[iu])
        .detail("max_mass_v_excess", v_excess[iv])
        .detail("mass_v_cap", cap);
    if !u_ok {
        let bad = drift.iter().position(|&d| !(d <= MASS_TOL)).unwrap_or(iu);
        rep.at(Axis::T, series[bad].t);
        rep.note = format!("u-mass leaves tolerance at record {bad}");
    } else if !v_ok {
        let bad = v_excess
            .iter()
            .position(|&d| !(d <= MASS_V_TOL))
            .unwrap_or(iv);
        rep.at(Axis::T, series[bad].t);
        rep.note = format!("v-mass exceeds its cap at record {bad}");
    } else {
        rep.at(Axis::T, series[iu].t);
    }
    rep
}

/// `F_{j+1} - F_j ≤ -D_j Δt_j + tol_j` for every consecutive pair of records,
/// with `tol_j = (D_j - D_{j+1})⁺ Δt_j + C Δt_j² (1 + |F_j|) + ρ`. The first term
/// is the left-endpoint error of `∫D dt` when `D` falls across the step, and
/// `ρ` is [`ENERGY_ROUNDOFF_ULPS`] ulps of `1 + max |F|` over the pair.
pub fn check_energy_inequality(series: &[SeriesRecord], c_scheme: f64) -> CheckReport {
    let mut rep = CheckReport::new("energy_inequality");
    if series.len() < 2 {
        rep.applicable = false;
        rep.note = "fewer than two records".into();
        return rep;
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = 0;
    let mut strict = 0usize;
    let mut first_bad = None;
    for (j, w) in series.windows(2).enumerate() {
        let dt = w[1].t - w[0].t;
        let dt = if dt > 0.0 { dt } else { w[1].dt };
        let roundoff =
            ENERGY_ROUNDOFF_ULPS * f64::EPSILON * (1.0 + w[0].energy.abs().max(w[1].energy.abs()));
        let tol = c_scheme * dt * dt * (1.0 + w[0].energy.abs()) + roundoff;
        let excess = (w[1].energy - w[0].energy) + w[0].dissipation.min(w[1].dissipation) * dt;
        // excess measured in units of the tolerance; ≤ 1 passes
        let ratio = if tol > 0.0 {
            excess / tol
        } else {
            f64::INFINITY * excess.signum()
        };
        let ratio = if excess <= 0.0 {
            excess / tol.max(f64::MIN_POSITIVE)
        } else {
            ratio
        };
        if !(excess <= tol) && first_bad.is_none() {
            first_bad = Some(j);
        }
        if w[1].energy < w[0].energy {
            strict += 1;
        }
        if ratio > worst || ratio.is_nan() {
            worst = ratio;
            worst_at = j;
        }
    }
    rep.passed = first_bad.is_none();
    rep.worst_ratio = worst;
    rep.at(Axis::T, series[worst_at + 1].t);
    rep.detail("c_scheme", c_scheme)
        .detail("strict_decreases", strict as f64)
        .detail("intervals", (series.len() - 1) as f64)
        .detail(
            "total_decrease",
            series[0].energy - series[series.len() - 1].energy,
        );
    if let Some(j) = first_bad {
        rep.note = format!(
            "energy increases beyond tolerance between records {j} and {}",
            j + 1
        );
    }
    rep
}

/// Sums `‖u₀‖_{L¹} + ‖v₀‖_{L¹} + ‖∇v₀‖_{L²}` and `‖u₀‖_{L¹} + ‖∇v₀‖_{L²}`.
fn initial_scales(s0: &StatePair) -> (f64, f64) {
    let l1u = norm(&s0.u, NormKind::Lp { p: 1.0 });
    let l1v = norm(&s0.v, NormKind::Lp { p: 1.0 });
    let grad = norm(
        &radial_derivative(&s0.v, Bc::Neumann),
        NormKind::Lp { p: 2.0 },
    );
    (l1u + l1v + grad, l1u + grad)
}

fn upto(states: &[StatePair], t_limit: Option<f64>) -> &[StatePair] {
    match t_limit {
        Some(t) => {
            let k = states.partition_point(|s| s.t <= t);
            &states[..k.max(1).min(states.len())]
        }
        None => states,
    }
}

/// `sup_r v(r,t) r^κ / (‖u₀‖₁ + ‖v₀‖₁ + ‖∇v₀‖₂)` per snapshot, required to
/// show no growth trend; the supremum is the empirical constant.
pub fn check_pointwise_bound(
    states: &[StatePair],
    kappa: f64,
    t_limit: Option<f64>,
) -> Result<CheckReport> {
    let Some(s0) = states.first() else {
        return Err(Error::InvalidArgument("no snapshots".into()));
    };
    let n = s0.grid().dim();
    if !(kappa > n as f64 - 2.0) {
        return Err(Error::Window(format!(
            "kappa = {kappa} must exceed n - 2 = {}",
            n - 2
        )));
    }
    let states = upto(states, t_limit);
    let (denom, _) = initial_scales(s0);
    let (ratios, radii): (Vec<f64>, Vec<f64>) = states
        .iter()
        .map(|s| {
            s.v.values()
                .iter()
                .zip(s.grid().centers())
                .map(|(&v, &r)| (v * r.powf(kappa) / denom, r))
                .fold(
                    (f64::NEG_INFINITY, 0.0),
                    |a, b| if b.0 > a.0 { b } else { a },
                )
        })
        .unzip();
    let mut rep = CheckReport::new("pointwise_bound");
    let i = argmax(&ratios).expect("non-empty");
    rep.worst_ratio = ratios[i];
    rep.passed = no_growth_trend(&ratios);
    let (fq, lq) = quartile_sups(&ratios);
    rep.at(Axis::T, states[i].t)
        .detail("kappa", kappa)
        .detail("radius_of_sup", radii[i])
        .detail("first_quartile_sup", fq)
        .detail("last_quartile_sup", lq)
        .detail("snapshots", ratios.len() as f64);
    if !rep.passed {
        rep.note = "v r^kappa grows along the run".into();
    }
    Ok(rep)
}

/// `‖∇v(t)‖_{L^p} / (‖u₀‖₁ + ‖∇v₀‖₂)` per snapshot for `1 < p < n/(n-1)`.
pub fn check_gradv_lp(states: &[StatePair], p: f64, t_limit: Option<f64>) -> Result<CheckReport> {
    let Some(s0) = states.first() else {
        return Err(Error::InvalidArgument("no snapshots".into()));
    };
    let nf = s0.grid().dim() as f64;
    if !(p > 1.0 && p < nf / (nf - 1.0)) {
        return Err(Error::Window(format!(
            "p = {p} must lie in (1, n/(n-1) = {})",
            nf / (nf - 1.0)
        )));
    }
    let states = upto(states, t_limit);
    let (_, denom) = initial_scales(s0);
    let ratios: Vec<f64> = states
        .par_iter()
        .map(|s| norm(&radial_derivative(&s.v, Bc::Neumann), NormKind::Lp { p }) / denom)
        .collect();
    let mut rep = CheckReport::new("gradv_lp");
    let i = argmax(&ratios).expect("non-empty");
    rep.worst_ratio = ratios[i];
    let (fq, lq) = quartile_sups(&ratios);
    rep.passed = no_growth_trend(&ratios);
    rep.at(Axis::T, states[i].t)
        .detail("p", p)
        .detail("first_quartile_sup", fq)
        .detail("last_quartile_sup", lq)
        .detail("snapshots", ratios.len() as f64);
    if !rep.passed {
        rep.note = "gradient norm grows along the run".into();
    }
    Ok(rep)
}

/// `-F / (D^θ + 1)` along a series, required finite and with a last-quartile
/// sup within [`TREND_FACTOR`] of the early ratio or early `(-F)_+` scale.
pub fn check_energy_dissipation_bound(
    series: &[SeriesRecord],
    theta: f64,
    t_limit: Option<f64>,
) -> CheckReport {
    let mut rep = CheckReport::new("energy_dissipation_bound");
    let upto = t_limit.map_or(series.len(), |t| {
        series.partition_point(|r| r.t <= t).max(1)
    });
    let ratios: Vec<f64> = series[..upto]
        .iter()
        .map(|r| (-r.energy).max(0.0) / (r.dissipation.powf(theta) + 1.0))
        .collect();
    let Some(i) = argmax(&ratios) else {
        rep.applicable = false;
        rep.note = "empty series".into();
        return rep;
    };
    rep.worst_ratio = ratios[i];
    let (fq, lq) = quartile_sups(&ratios);
    // the ratio never exceeds (-F)_+, so relaxing runs approach their early energy scale
    let neg_f: Vec<f64> = series[..upto]
        .iter()
        .map(|r| (-r.energy).max(0.0))
        .collect();
    let scale = fq.max(quartile_sups(&neg_f).0);
    rep.passed = ratios.iter().all(|x| x.is_finite()) && (lq <= TREND_FACTOR * scale || lq <= 0.0);
    rep.at(Axis::T, series[i].t)
        .detail("theta", theta)
        .detail("first_quartile_sup", fq)
        .detail("early_energy_scale", scale)
        .detail("last_quartile_sup", lq);
    rep
}

/// Fit of `y = -F` against `y(t) ≥ y(0) (1 - C t)^{-θ/(1-θ)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdiFit {
    /// Largest `C` for which the lower bound holds at every record.
    pub c_bound: f64,
    /// Least-squares `C` of the linearized data `z = (y/y₀)^{-(1-θ)/θ} ≈ 1 - C t`.
    pub c_lsq: f64,
    /// RMS residual of the least-squares line.
    pub residual: f64,
    /// `min (Δy/Δt) / y^{1/θ}` over consecutive records.
    pub c4: f64,
}

pub fn fit_odi(series: &[SeriesRecord], theta: f64) -> Option<OdiFit> {
    let first = series.first()?;
    let y0 = -first.energy;
    let q = theta / (1.0 - theta);
    let pts: Vec<(f64, f64)> = series[1..]
        .iter()
        .map(|r| (r.t - first.t, (-r.energy / y0).powf(-1.0 / q)))
        .filter(|&(t, _)| t > 0.0)
        .collect();
    if pts.is_empty() {
        return None;
    }
    let c_bound = pts
        .iter()
        .map(|&(t, z)| (1.0 - z) / t)
        .fold(f64::INFINITY, f64::min);
    // regression through (0, 1)
    let (stz, stt) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, z)| (a + t * (1.0 - z), b + t * t));
    let c_lsq = stz / stt;
    let residual = (pts
        .iter()
        .map(|&(t, z)| (z - (1.0 - c_lsq * t)).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    let c4 = series
        .windows(2)
        .filter_map(|w| {
            let dt = w[1].t - w[0].t;
            (dt > 0.0).then(|| (w[0].energy - w[1].energy) / dt / (-w[0].energy).powf(1.0 / theta))
        })
        .fold(f64::INFINITY, f64::min);
    Some(OdiFit {
        c_bound,
        c_lsq,
        residual,
        c4,
    })
}

/// Monotone growth of `y = -F` and the fitted blow-up rate; not applicable
/// when `F` is not negative throughout.
pub fn check_odi_blowup(series: &[SeriesRecord], theta: f64, t_detect: Option<f64>) -> CheckReport {
    const MONOTONE_TOL: f64 = 1e-9;
    const RESIDUAL_MAX: f64 = 0.1;
    let mut rep = CheckReport::new("odi_blowup");
    rep.detail("theta", theta);
    if series.is_empty() || series.iter().any(|r| !(r.energy < 0.0)) {
        rep.applicable = false;
        rep.note = "F is not negative along the whole series".into();
        return rep;
    }
    let mut monotone = true;
    for w in series.windows(2) {
        let (y0, y1) = (-w[0].energy, -w[1].energy);
        if y1 < y0 - MONOTONE_TOL * (1.0 + y0.abs()) {
            monotone = false;
            rep.at(Axis::T, w[1].t);
            break;
        }
    }
    let Some(fit) = fit_odi(series, theta) else {
        rep.passed = monotone;
        rep.worst_ratio = 0.0;
        rep.note = "single record; nothing to fit".into();
        return rep;
    };
    let c = fit.c_bound.max(0.0);
    rep.worst_ratio = fit.residual;
    rep.detail("c_fit", fit.c_bound)
        .detail("c_lsq", fit.c_lsq)
        .detail("residual", fit.residual)
        .detail("c4", fit.c4);
    if c > 0.0 {
        rep.detail("implied_t_max", 1.0 / c);
    }
    if let Some(t) = t_detect {
        rep.detail("t_detect", t);
    }
    rep.passed = monotone && fit.residual.is_finite() && fit.residual <= RESIDUAL_MAX;
    rep.note = if !monotone {
        "-F decreases".into()
    } else if c <= 1e-12 {
        "no blow-up implied".into()
    } else {
        match t_detect {
            Some(t) if 1.0 / c >= t => "implied bound 1/C is at least the detection time".into(),
            Some(_) => "implied bound 1/C is below the detection time".into(),
            None => String::new(),
        }
    };
    rep
}

/// Conditions on a constructed sequence: distances to the baseline shrink
/// over the tail, the energy decreases with slope near `-ω_n u(0) v(0)`, and
/// `(1/k)∫u_k v_k ≥ (1-ε) ω_n u(0) v(0)` on the tail.
pub fn check_concentration_sequence(
    rows: &[DatumSummary],
    tail_from: u32,
    energy_threshold: Option<f64>,
) -> CheckReport {
    const EPS: f64 = 0.2;
    const SHRINK: f64 = 1e-2;
    let mut rep = CheckReport::new("concentration_sequence");
    if rows.windows(2).any(|w| w[1].k <= w[0].k) {
        rep.note = "precondition violated: k is not strictly ascending".into();
        return rep;
    }
    let tail: Vec<&DatumSummary> = rows.iter().filter(|r| r.k >= tail_from).collect();
    if tail.len() < 2 {
        rep.note = "tail has fewer than two members".into();
        return rep;
    }
    let first = &rows[0];
    let last = tail[tail.len() - 1];
    let lp_dec = tail.windows(2).all(|w| w[1].lp_dist < w[0].lp_dist);
    let w12_dec = tail.windows(2).all(|w| w[1].w12_dist < w[0].w12_dist);
    let lp_small = last.lp_dist < SHRINK * first.lp_dist;
    let w12_small = last.w12_dist < SHRINK * first.w12_dist;
    let f_dec = tail.windows(2).all(|w| w[1].energy < w[0].energy);
    let f_thr = energy_threshold.is_none_or(|th| last.energy <= th);
    let (mk, mf) = tail.iter().fold((0.0, 0.0), |(a, b), r| {
        (
            a + r.k as f64 / tail.len() as f64,
            b + r.energy / tail.len() as f64,
        )
    });
    let (skf, skk) = tail.iter().fold((0.0, 0.0), |(a, b), r| {
        let dk = r.k as f64 - mk;
        (a + dk * (r.energy - mf), b + dk * dk)
    });
    let slope = skf / skk;
    let bound = last.uv_bound;
    let slope_ok = slope <= -(1.0 - EPS) * bound;
    let worst_uv = tail
        .iter()
        .map(|r| r.uv_over_k / bound)
        .fold(f64::INFINITY, f64::min);
    let uv_ok = worst_uv >= 1.0 - EPS;
    let margins_ok = rows.iter().all(|r| r.margin >= 0.0);

    rep.passed = lp_dec
        && w12_dec
        && lp_small
        && w12_small
        && f_dec
        && f_thr
        && slope_ok
        && uv_ok
        && margins_ok;
    rep.worst_ratio = worst_uv;
    rep.at(Axis::K, last.k as f64)
        .detail("lp_shrink", last.lp_dist / first.lp_dist)
        .detail("w12_shrink", last.w12_dist / first.w12_dist)
        .detail("energy_slope", slope)
        .detail("uv_bound", bound)
        .detail("min_uv_over_k_ratio", worst_uv)
        .detail("final_energy", last.energy);
    let mut failed = Vec::new();
    for (ok, what) in [
        (margins_ok, "negative eta margin"),
        (lp_dec && lp_small, "L^p distance does not shrink"),
        (w12_dec && w12_small, "W^{1,2} distance does not shrink"),
        (f_dec && f_thr, "energy not decreasing below threshold"),
        (slope_ok, "energy slope too shallow"),
        (uv_ok, "uv/k below bound"),
    ] {
        if !ok {
            failed.push(what);
        }
    }
    rep.note = failed.join("; ");
    rep
}

/// The admissible class: `∫u = m`, `∫v ≤ M`, `v ≤ B r^{-κ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleClass {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub kappa: f64,
}

impl AdmissibleClass {
    /// Why `s` is not a member, if it is not.
    pub fn violation(&self, s: &StatePair) -> Option<String> {
        let mu = s.u.integrate();
        if ((mu - self.m) / self.m).abs() > CORPUS_MASS_TOL {
            return Some(format!("mass {mu} differs from m = {}", self.m));
        }
        let mv = s.v.integrate();
        if mv > self.big_m {
            return Some(format!("v-mass {mv} exceeds M = {}", self.big_m));
        }
        for (&v, &r) in s.v.values().iter().zip(s.grid().centers()) {
            if v > self.b * r.powf(-self.kappa) {
                return Some(format!("v({r:e}) = {v:e} exceeds B r^-kappa"));
            }
        }
        None
    }
}

#[derive(Debug, Clone)]
pub struct StateCorpus {
    pub states: Vec<StatePair>,
    pub class: AdmissibleClass,
}

impl StateCorpus {
    pub fn new(states: Vec<StatePair>, class: AdmissibleClass) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Admissibility("empty corpus".into()));
        }
        for (i, s) in states.iter().enumerate() {
            s.validate()?;
            if let Some(why) = class.violation(s) {
                return Err(Error::Admissibility(format!("member {i}: {why}")));
            }
        }
        Ok(Self { states, class })
    }

    /// Smallest class (up to `1 + slack`) that contains every state; all
    /// states must share the same u-mass.
    pub fn enclosing(states: Vec<StatePair>, kappa: f64, slack: f64) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::Admissibility("empty corpus".into()));
        };
        let m = first.u.integrate();
        let mut big_m = 0.0f64;
        let mut b = 0.0f64;
        for s in &states {
            big_m = big_m.max(s.v.integrate());
            for (&v, &r) in s.v.values().iter().zip(s.grid().centers()) {
                b = b.max(v * r.powf(kappa));
            }
        }
        let class = AdmissibleClass {
            m,
            big_m: big_m * (1.0 + slack),
            b: b * (1.0 + slack),
            kappa,
        };
        Self::new(states, class)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Every inequality ratio for one corpus member.
#[derive(Debug, Clone, Copy, Default)]
struct MemberRatios {
    gn_l2: f64,
    l2_absorb: f64,
    uv_by_gradient: f64,
    outer_gradient: f64,
    inner_gradient: f64,
    gradient_by_dissipation: f64,
    uv_by_dissipation: f64,
    energy_by_dissipation: f64,
}

const SUITE_EPS: f64 = 0.25;
const ABSORB_EPS: f64 = 0.5;

fn member_ratios(s: &StatePair, theta: f64, kappa: f64) -> Result<MemberRatios> {
    let grid = s.grid();
    let nf = grid.dim() as f64;
    let radius = grid.radius();
    let rep = energy_report(s)?;
    let f = residual_f(s);
    let g = residual_g(s)?;
    let vr = radial_derivative(&s.v, Bc::Neumann);
    let f2 = norm(&f, NormKind::Lp { p: 2.0 });
    let g2 = norm(&g, NormKind::Lp { p: 2.0 });
    let v1 = norm(&s.v, NormKind::Lp { p: 1.0 });
    let v2 = rep.v_sq.sqrt();
    let grad2 = rep.grad_v_sq;
    let beta = (2.0 * nf + 4.0) * kappa / nf;
    let r0 = if f2 > 0.0 {
        (0.5 * radius).min(f2.powf(-2.0 / (beta + 1.0)))
    } else {
        0.5 * radius
    };
    let w = grid.weights();
    let omega = grid.omega_n();
    let inner_grad: f64 = omega
        * grid
            .centers()
            .iter()
            .zip(w)
            .zip(vr.values())
            .filter(|((&r, _), _)| r < r0)
            .map(|((_, w), d)| w * d * d)
            .sum::<f64>();
    let outer_grad = grad2 - inner_grad;
    let p_f = (2.0 * nf + 4.0) / (nf + 4.0);
    let pos = |x: f64| x.max(0.0);
    Ok(MemberRatios {
        gn_l2: v2 / (grad2.sqrt().powf(nf / (nf + 2.0)) * v1.powf(2.0 / (nf + 2.0)) + v1),
        l2_absorb: pos(rep.v_sq - ABSORB_EPS * grad2) / (v1 * v1),
        uv_by_gradient: pos(rep.uv - 2.0 * grad2) / (f2.powf(p_f) + 1.0),
        outer_gradient: pos(outer_grad - SUITE_EPS * rep.uv - SUITE_EPS * grad2)
            / (r0.powf(-beta) + f2.powf(p_f)),
        inner_gradient: inner_grad / (r0 * f2 * f2 + g2 + rep.v_sq + 1.0),
        gradient_by_dissipation: pos(grad2 - SUITE_EPS * rep.uv)
            / (f2.powf(2.0 * theta) + g2 + 1.0),
        uv_by_dissipation: rep.uv / (f2.powf(2.0 * theta) + g2 + 1.0),
        energy_by_dissipation: pos(-rep.energy) / (rep.dissipation.powf(theta) + 1.0),
    })
}

/// Names of the suite's checks, in report order.
pub const SUITE_CHECKS: [&str; 8] = [
    "gn_l2_interpolation",
    "l2_absorption",
    "uv_by_gradient",
    "outer_gradient",
    "inner_gradient",
    "gradient_by_dissipation",
    "uv_by_dissipation",
    "energy_by_dissipation",
];

/// Evaluates every inequality on every corpus member; each report's
/// `worst_ratio` is the empirical constant.
pub fn inequality_suite(corpus: &StateCorpus) -> Result<Vec<CheckReport>> {
    let class = corpus.class;
    for (i, s) in corpus.states.iter().enumerate() {
        if let Some(why) = class.violation(s) {
            return Err(Error::Admissibility(format!("member {i}: {why}")));
        }
    }
    let n = corpus.states[0].grid().dim();
    let theta = theta_exponent(n, class.kappa)?;
    let ratios: Vec<MemberRatios> = corpus
        .states
        .par_iter()
        .map(|s| member_ratios(s, theta, class.kappa))
        .collect::<Result<_>>()?;
    let pick: [fn(&MemberRatios) -> f64; 8] = [
        |r| r.gn_l2,
        |r| r.l2_absorb,
        |r| r.uv_by_gradient,
        |r| r.outer_gradient,
        |r| r.inner_gradient,
        |r| r.gradient_by_dissipation,
        |r| r.uv_by_dissipation,
        |r| r.energy_by_dissipation,
    ];
    Ok(SUITE_CHECKS
        .iter()
        .zip(pick)
        .map(|(name, get)| {
            let xs: Vec<f64> = ratios.iter().map(get).collect();
            let i = argmax(&xs).expect("non-empty corpus");
            let mut rep = CheckReport::new(name);
            rep.worst_ratio = xs[i];
            rep.passed = xs.iter().all(|x| x.is_finite());
            rep.at(Axis::Member, i as f64)
                .detail("members", xs.len() as f64)
                .detail("theta", theta)
                .detail("m", class.m)
                .detail("M", class.big_m)
                .detail("B", class.b)
                .detail("kappa", class.kappa);
            rep
        })
        .collect())
}

/// Interpolation ratio `‖v‖₂ / (‖∇v‖₂^{n/(n+2)} ‖v‖₁^{2/(n+2)} + ‖v‖₁)` on
/// `v_σ = (r² + σ)^{-α/2}`, evaluated in closed form for each `σ`.
pub fn check_gn_spike_family(
    n: usize,
    radius: f64,
    alpha: f64,
    sigmas: &[f64],
) -> Result<CheckReport> {
    let nf = n as f64;
    if !(alpha > 0.0 && alpha < (nf - 2.0) / 2.0) {
        return Err(Error::Window(format!(
            "alpha = {alpha} must lie in (0, (n-2)/2) for a finite gradient norm"
        )));
    }
    if sigmas.is_empty()
        || sigmas.windows(2).any(|w| w[1] >= w[0])
        || sigmas.iter().any(|&s| !(s > 0.0))
    {
        return Err(Error::InvalidArgument(
            "sigmas must be positive and decreasing".into(),
        ));
    }
    let omega = sphere_area(n);
    let ratios: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            // r = R ρ: ∫_0^R r^{a} (r² + σ)^{-b} dr = R^{a+1-2b} M(a, b, σ/R²)
            let ln_xi = (sigma / (radius * radius)).ln();
            let mom =
                |a: f64, b: f64| radius.powf(a + 1.0 - 2.0 * b) * power_moment(a, b, ln_xi, false);
            let l1 = omega * mom(nf - 1.0, alpha / 2.0);
            let l2 = (omega * mom(nf - 1.0, alpha)).sqrt();
            let grad = (omega * alpha * alpha * mom(nf + 1.0, alpha + 2.0)).sqrt();
            l2 / (grad.powf(nf / (nf + 2.0)) * l1.powf(2.0 / (nf + 2.0)) + l1)
        })
        .collect();
    let mut rep = CheckReport::new("gn_spike_family");
    let i = argmax(&ratios).expect("non-empty");
    rep.worst_ratio = ratios[i];
    rep.passed = no_growth_trend(&ratios);
    let (fq, lq) = quartile_sups(&ratios);
    rep.at(Axis::K, i as f64)
        .detail("sigma_at_sup", sigmas[i])
        .detail("alpha", alpha)
        .detail("first_quartile_sup", fq)
        .detail("last_quartile_sup", lq);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::initial_data::{baseline_profiles, Baseline, DatumSummary};
    use crate::solver::{run, SolverConfig};
    use std::f64::consts::{E, PI};

    fn record(t: f64, dt: f64, f: f64, d: f64, mu: f64, mv: f64) -> SeriesRecord {
        SeriesRecord {
            t,
            dt,
            mass_u: mu,
            mass_v: mv,
            sup_u: 1.0,
            sup_v: 1.0,
            energy: f,
            dissipation: d,
            f_l2: 0.0,
            g_l2: 0.0,
            gradv_lp: 0.0,
        }
    }

    fn perturbed_run(t_end: f64) -> crate::solver::Trajectory {
        let g = build_grid(3, 1.0, 64, 1.0).unwrap();
        let s = baseline_profiles(
            Baseline::Perturbed {
                c: 1.0,
                delta: 0.05,
            },
            &g,
        )
        .unwrap();
        let cfg = SolverConfig {
            t_end,
            snapshot_every: 5,
            ..SolverConfig::default()
        };
        run(&s, &cfg).unwrap()
    }

    #[test]
    fn conservation_on_runs_and_leaks() {
        let tr = perturbed_run(0.2);
        let rep = check_conservation(&tr.series);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.worst_ratio <= 1e-12);
        let mut leaky = tr.series.clone();
        let j = leaky.len() / 2;
        for r in &mut leaky[j..] {
            r.mass_u *= 1.0 - 1e-3;
        }
        let rep = check_conservation(&leaky);
        assert!(!rep.passed);
        assert_eq!(rep.location.unwrap().value, leaky[j].t);
    }

    #[test]
    fn energy_inequality_accepts_runs_and_rejects_reversal() {
        let tr = perturbed_run(0.2);
        let rep = check_energy_inequality(&tr.series, SCHEME_TOL_CONSTANT);
        assert!(rep.passed, "{rep:?}");
        let mut rev = tr.series.clone();
        let energies: Vec<f64> = rev.iter().map(|r| r.energy).rev().collect();
        for (r, f) in rev.iter_mut().zip(energies) {
            r.energy = f;
        }
        assert!(!check_energy_inequality(&rev, SCHEME_TOL_CONSTANT).passed);
    }

    #[test]
    fn constant_run_checks() {
        let g = build_grid(3, 1.0, 32, 1.0).unwrap();
        let s = baseline_profiles(Baseline::Constant { c: 1.0 }, &g).unwrap();
        let tr = run(
            &s,
            &SolverConfig {
                t_end: 0.1,
                snapshot_every: 3,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert!(check_conservation(&tr.series).passed);
        assert!(check_energy_inequality(&tr.series, SCHEME_TOL_CONSTANT).passed);
        let k2 = check_pointwise_bound(&tr.snapshots, 2.0, None).unwrap();
        let k3 = check_pointwise_bound(&tr.snapshots, 3.0, None).unwrap();
        assert!(k2.passed && k3.passed);
        // weight monotonicity: S(κ') ≤ S(κ) R^{κ'-κ}
        assert!(k3.worst_ratio <= k2.worst_ratio * 1.0f64.powf(1.0) + 1e-15);
        let gp = check_gradv_lp(&tr.snapshots, 1.4, None).unwrap();
        assert!(gp.passed && gp.worst_ratio == 0.0);
        assert!(check_gradv_lp(&tr.snapshots, 1.5, None).is_err());
        assert!(check_pointwise_bound(&tr.snapshots, 1.0, None).is_err());
        let odi = check_odi_blowup(&tr.series, 20.0 / 23.0, None);
        assert!(odi.passed, "{odi:?}");
        assert_eq!(odi.note, "no blow-up implied");
    }

    #[test]
    fn odi_fit_recovers_manufactured_rate() {
        let theta = 20.0 / 23.0;
        let q = theta / (1.0 - theta);
        let series: Vec<_> = (0..200)
            .map(|j| {
                let t = 0.49 * j as f64 / 199.0;
                record(t, 0.0, -(1.0 - 2.0 * t).powf(-q), 0.0, 1.0, 1.0)
            })
            .collect();
        let fit = fit_odi(&series, theta).unwrap();
        assert!((fit.c_bound - 2.0).abs() < 0.04, "{fit:?}");
        assert!((fit.c_lsq - 2.0).abs() < 1e-6);
        let rep = check_odi_blowup(&series, theta, Some(0.49));
        assert!(rep.passed);
        // F changing sign makes the check inapplicable, not failed
        let mut s2 = series.clone();
        s2[3].energy = 1.0;
        let rep = check_odi_blowup(&s2, theta, None);
        assert!(!rep.applicable && rep.ok());
    }

    #[test]
    fn suite_on_constants_matches_closed_forms() {
        let g = build_grid(3, 1.0, 64, 1.0).unwrap();
        let vol = 4.0 * PI / 3.0;
        let mut worst = 0.0f64;
        for c in [0.25, 1.0, E, 10.0] {
            let s = baseline_profiles(Baseline::Constant { c }, &g).unwrap();
            let corpus = StateCorpus::enclosing(vec![s], 2.0, 1e-9).unwrap();
            let reps = inequality_suite(&corpus).unwrap();
            assert!(reps.iter().all(|r| r.passed));
            let t9 = reps
                .iter()
                .find(|r| r.name == "energy_by_dissipation")
                .unwrap();
            let exact = (vol * (c * c / 2.0 - c * c.ln())).max(0.0);
            assert!(
                (t9.worst_ratio - exact).abs() < 1e-10 * exact.max(1.0),
                "{c}"
            );
            worst = worst.max(exact);
        }
        assert!(worst > 0.0);
    }

    #[test]
    fn corpus_membership_is_enforced() {
        let g = build_grid(3, 1.0, 32, 1.0).unwrap();
        let a = baseline_profiles(Baseline::Constant { c: 1.0 }, &g).unwrap();
        let b = baseline_profiles(Baseline::Constant { c: 2.0 }, &g).unwrap();
        assert!(StateCorpus::enclosing(vec![a.clone(), b], 2.0, 0.0).is_err());
        let class = AdmissibleClass {
            m: a.u.integrate(),
            big_m: 1.0,
            b: 10.0,
            kappa: 2.0,
        };
        assert!(StateCorpus::new(vec![a], class).is_err());
    }

    fn sequence(alpha: Option<f64>, ks: &[u32]) -> Vec<DatumSummary> {
        use crate::functionals::param_window;
        use crate::initial_data::{ConcentrationRecipe, Constant, RadiusRule};
        use std::sync::Arc;
        let w = param_window(3, 1.1, 2.0, alpha).unwrap();
        let recipe = ConcentrationRecipe::new(
            1.0,
            Arc::new(Constant(1.0)),
            Arc::new(Constant(1.0)),
            w,
            RadiusRule::halving(1.0),
        )
        .unwrap();
        ks.par_iter()
            .map(|&k| recipe.datum(k).unwrap().summary)
            .collect()
    }

    #[test]
    fn sequence_check_passes_and_rejects_shuffles() {
        let ks: Vec<u32> = (1..=30).collect();
        let rows = sequence(None, &ks);
        let rep = check_concentration_sequence(&rows, 10, Some(-300.0));
        assert!(rep.passed, "{rep:?}");
        let mut shuffled = rows.clone();
        shuffled.swap(3, 7);
        let rep = check_concentration_sequence(&shuffled, 10, None);
        assert!(!rep.passed && rep.note.contains("precondition"));
    }

    #[test]
    fn sequence_check_near_window_edge() {
        let ks: Vec<u32> = (1..=40).collect();
        let rows = sequence(Some(0.5 - 1e-6), &ks);
        let mid = sequence(None, &ks);
        // slower W^{1,2} convergence than at the midpoint, but still convergent
        assert!(rows[39].w12_dist > mid[39].w12_dist);
        let rep = check_concentration_sequence(&rows, 10, None);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn spike_family_stays_bounded() {
        let sigmas: Vec<f64> = (0..40).map(|j| 10f64.powf(-0.5 * j as f64)).collect();
        let rep = check_gn_spike_family(3, 1.0, 0.3, &sigmas).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(check_gn_spike_family(3, 1.0, 0.5, &sigmas).is_err());
    }

    #[test]
    fn dissipation_bound_tolerates_relaxation() {
        let relax: Vec<_> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                record(t, 0.1, -2.0 - (-t).exp(), 5.0 * (-2.0 * t).exp(), 1.0, 1.0)
            })
            .collect();
        assert!(check_energy_dissipation_bound(&relax, 0.8, None).passed);
        let runaway: Vec<_> = (0..40)
            .map(|i| record(i as f64, 1.0, -1.0 - i as f64, 1.0, 1.0, 1.0))
            .collect();
        let r = check_energy_dissipation_bound(&runaway, 0.8, None);
        assert!(!r.passed, "{r:?}");
    }

    #[test]
    fn trend_helper() {
        assert!(no_growth_trend(&[1.0, 1.0, 1.2, 1.4]));
        assert!(!no_growth_trend(&[1.0, 1.0, 1.2, 1.6]));
        assert!(!no_growth_trend(&[1.0, f64::NAN]));
    }

    #[test]
    fn report_round_trips_with_nan() {
        let rep = CheckReport::new("x");
        let s = serde_json::to_string(&rep).unwrap();
        let back: CheckReport = serde_json::from_str(&s).unwrap();
        assert!(back.worst_ratio.is_nan());
        assert_eq!(back.name, "x");
    }
}
