//! IMEX time stepping for
//!
//! ```text
//! u_t = Δu - ∇·(u∇v),   v_t = Δv - v + u
//! ```
//!
//! in radial flux form with zero flux at both ends. Each step solves for `v`
//! implicitly with the current `u`, then for `u` with implicit diffusion and
//! an explicit upwinded chemotactic flux built from the fresh `v_r`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{energy_report, norm, NormKind, StatePair};
use crate::grid::{radial_derivative, Bc, LaplacianStencil, RadialField, RadialGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the chemotactic CFL bound a step may use.
    pub safety: f64,
    /// `sup u` growth relative to the initial state that counts as blow-up.
    pub blowup_factor: f64,
    pub t_end: f64,
    /// Keep a full state every this many accepted steps.
    pub snapshot_every: usize,
    /// Append a series record every this many accepted steps.
    pub record_every: usize,
    pub max_steps: usize,
    /// Exponent of the `‖∇v‖_{L^p}` diagnostic.
    pub gradv_p: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-4,
            dt_min: 1e-14,
            dt_max: 1e-2,
            safety: 0.5,
            blowup_factor: 1e4,
            t_end: 1.0,
            snapshot_every: 100,
            record_every: 1,
            max_steps: 10_000_000,
            gradv_p: 1.4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::Config(format!("{msg} ({self:?})")))
            }
        };
        ok(
            self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max,
            "need 0 < dt_min <= dt_init <= dt_max",
        )?;
        ok(
            self.safety > 0.0 && self.safety < 1.0,
            "safety must lie in (0, 1)",
        )?;
        ok(self.blowup_factor > 1.0, "blowup_factor must exceed 1")?;
        ok(
            self.t_end > 0.0 && self.t_end.is_finite(),
            "t_end must be positive",
        )?;
        ok(
            self.snapshot_every > 0 && self.record_every > 0,
            "cadences must be positive",
        )?;
        ok(self.max_steps > 0, "max_steps must be positive")?;
        ok(self.gradv_p >= 1.0, "gradv_p must be at least 1")
    }
}

/// Diagnostics of one accepted step (or of the initial state, with `dt = 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub t: f64,
    pub dt: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    #[serde(rename = "F")]
    pub energy: f64,
    #[serde(rename = "D")]
    pub dissipation: f64,
    pub f_l2: f64,
    pub g_l2: f64,
    pub gradv_lp: f64,
}

impl SeriesRecord {
    pub fn of(s: &StatePair, dt: f64, gradv_p: f64) -> Result<Self> {
        let rep = energy_report(s)?;
        let vr = radial_derivative(&s.v, Bc::Neumann);
        Ok(Self {
            t: s.t,
            dt,
            mass_u: s.u.integrate(),
            mass_v: s.v.integrate(),
            sup_u: s.u.max(),
            sup_v: s.v.max(),
            energy: rep.energy,
            dissipation: rep.dissipation,
            f_l2: rep.f_norm_sq.sqrt(),
            g_l2: rep.g_norm_sq.sqrt(),
            gradv_lp: norm(&vr, NormKind::Lp { p: gradv_p }),
        })
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.dt,
            self.mass_u,
            self.mass_v,
            self.sup_u,
            self.sup_v,
            self.energy,
            self.dissipation,
            self.f_l2,
            self.g_l2,
            self.gradv_lp,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    BlewUp,
    ReachedTEnd,
    DivergedNumerically,
    /// The step budget ran out before any other criterion fired.
    Inconclusive,
}

/// How a run stopped, as seen by the time loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunEnd {
    Completed,
    /// Growth and `dt_min` were both reached.
    Halted,
    /// A step at `dt_min` was rejected.
    Stalled,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupVerdict {
    pub outcome: Outcome,
    pub t_detect: Option<f64>,
    /// Extrapolated blow-up time from the tail of `sup u`; an estimate, not
    /// a measurement.
    pub t_extrapolated: Option<f64>,
    pub trigger: String,
    /// Largest `sup u` over the initial `sup u`.
    pub sup_growth: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<StatePair>,
    pub series: Vec<SeriesRecord>,
    pub verdict: BlowupVerdict,
    pub end: RunEnd,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last_state(&self) -> &StatePair {
        self.snapshots
            .last()
            .expect("trajectory keeps the final state")
    }
}

/// Why a trial step was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    Cfl,
    Positivity,
    NonFinite,
}

/// Reusable per-grid operators.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Arc<RadialGrid>,
    stencil: LaplacianStencil,
    /// `e_i^{n-1}` for interior edges, zero at the walls.
    area: Vec<f64>,
    /// Center spacing across each interior edge.
    gap: Vec<f64>,
}

/// Relative undershoot of `u` tolerated before a step counts as failed.
pub const UNDERSHOOT_TOL: f64 = 1e-12;

impl Stepper {
    pub fn new(grid: &Arc<RadialGrid>) -> Self {
        let n = grid.len();
        let r = grid.centers();
        let mut area = vec![0.0; n + 1];
        let mut gap = vec![1.0; n + 1];
        for e in 1..n {
            area[e] = grid.edge_area(e);
            gap[e] = r[e] - r[e - 1];
        }
        Self {
            grid: Arc::clone(grid),
            stencil: LaplacianStencil::new(grid),
            area,
            gap,
        }
    }

    fn laplacian(&self, y: &[f64], out: &mut [f64]) {
        let n = y.len();
        for i in 0..n {
            let mut acc = 0.0;
            if i + 1 < n {
                acc += self.stencil.upper[i] * (y[i + 1] - y[i]);
            }
            if i > 0 {
                acc += self.stencil.lower[i] * (y[i - 1] - y[i]);
            }
            out[i] = acc;
        }
    }

    /// Solves `(1 + c) δ - dt L δ = rhs` in place.
    fn implicit_solve(&self, dt: f64, c: f64, rhs: &mut [f64]) {
        let n = rhs.len();
        let (up, lo) = (&self.stencil.upper, &self.stencil.lower);
        let sub: Vec<f64> = (0..n)
            .map(|i| if i > 0 { -dt * lo[i] } else { 0.0 })
            .collect();
        let sup: Vec<f64> = (0..n)
            .map(|i| if i + 1 < n { -dt * up[i] } else { 0.0 })
            .collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                1.0 + c
                    + dt * (if i + 1 < n { up[i] } else { 0.0 } + if i > 0 { lo[i] } else { 0.0 })
            })
            .collect();
        thomas(&sub, &diag, &sup, rhs);
    }

    /// Largest `dt` with the upwinded explicit flux keeping `u` positive for
    /// velocity field `w` on the edges.
    fn cfl_limit(&self, w: &[f64]) -> f64 {
        let vol = self.grid.weights();
        let mut best = f64::INFINITY;
        for i in 0..vol.len() {
            let out = self.area[i + 1] * w[i + 1].max(0.0) + self.area[i] * (-w[i]).max(0.0);
            if out > 0.0 {
                best = best.min(vol[i] / out);
            }
        }
        best
    }

    /// One IMEX step; with `safety = None` the CFL bound is not enforced.
    pub fn try_step(
        &self,
        s: &StatePair,
        dt: f64,
        safety: Option<f64>,
    ) -> std::result::Result<StatePair, Rejection> {
        let n = self.grid.len();
        let (u, v) = (s.u.values(), s.v.values());
        let mut lap = vec![0.0; n];

        // v: (1 + dt) v⁺ - dt L v⁺ = v + dt u, solved for the increment
        self.laplacian(v, &mut lap);
        let mut dv: Vec<f64> = (0..n).map(|i| dt * (lap[i] - v[i] + u[i])).collect();
        self.implicit_solve(dt, dt, &mut dv);
        let v_new: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + b).collect();

        // edge velocities ∂_r v⁺ and the upwinded chemotactic flux
        let mut w = vec![0.0; n + 1];
        for e in 1..n {
            w[e] = (v_new[e] - v_new[e - 1]) / self.gap[e];
        }
        if let Some(safety) = safety {
            if dt > safety * self.cfl_limit(&w) {
                return Err(Rejection::Cfl);
            }
        }
        let mut flux = vec![0.0; n + 1];
        for e in 1..n {
            let up = if w[e] > 0.0 { u[e - 1] } else { u[e] };
            flux[e] = self.area[e] * w[e] * up;
        }
        let vol = self.grid.weights();
        self.laplacian(u, &mut lap);
        let mut du: Vec<f64> = (0..n)
            .map(|i| dt * (lap[i] - (flux[i + 1] - flux[i]) / vol[i]))
            .collect();
        self.implicit_solve(dt, 0.0, &mut du);
        let u_new: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + b).collect();

        if !u_new.iter().chain(&v_new).all(|x| x.is_finite()) {
            return Err(Rejection::NonFinite);
        }
        let sup = u_new.iter().fold(0.0f64, |m, &x| m.max(x));
        if u_new.iter().any(|&x| x <= 0.0 || x < -UNDERSHOOT_TOL * sup) {
            return Err(Rejection::Positivity);
        }
        if v_new.iter().any(|&x| x <= 0.0) {
            return Err(Rejection::Positivity);
        }
        let grid = Arc::clone(&self.grid);
        Ok(StatePair {
            u: RadialField::new(Arc::clone(&grid), u_new).expect("length preserved"),
            v: RadialField::new(grid, v_new).expect("length preserved"),
            t: s.t + dt,
        })
    }
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored. The system is
/// diagonally dominant here, so no pivoting is needed.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = sup[0] / beta;
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / beta;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// One IMEX step of size `dt` without the CFL guard.
pub fn step(s: &StatePair, dt: f64) -> Result<StatePair> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt = {dt} must be positive"
        )));
    }
    s.validate()?;
    Stepper::new(s.grid()).try_step(s, dt, None).map_err(|r| {
        Error::Solver(match r {
            Rejection::NonFinite => format!("non-finite state after dt = {dt:e}"),
            _ => format!("u lost positivity after dt = {dt:e}"),
        })
    })
}

/// Time accumulated with compensated summation, so that steps far below
/// `t · ε` still advance the clock.
#[derive(Debug, Clone, Copy, Default)]
struct Clock {
    sum: f64,
    carry: f64,
}

impl Clock {
    fn add(&mut self, dt: f64) {
        let y = dt - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum - self.carry
    }
}

const GROWTH: f64 = 1.2;

fn at_dt_min(dt: f64, dt_min: f64) -> bool {
    (dt - dt_min).abs() <= 1e-9 * dt_min
}

/// Integrates from `s0` until `t_end`, blow-up, or failure.
pub fn run(s0: &StatePair, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    s0.validate()?;
    let stepper = Stepper::new(s0.grid());
    let mut clock = Clock {
        sum: s0.t,
        carry: 0.0,
    };
    let t_end = s0.t + cfg.t_end;
    let mut state = s0.clone();
    let mut series = vec![SeriesRecord::of(&state, 0.0, cfg.gradv_p)?];
    let mut snapshots = vec![state.clone()];
    let sup0 = series[0].sup_u;
    let mut dt = cfg.dt_init;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_dt = 0.0;
    let end;

    loop {
        let remaining = t_end - clock.value();
        if remaining <= 1e-14 * t_end.abs().max(1.0) {
            end = RunEnd::Completed;
            break;
        }
        if accepted >= cfg.max_steps {
            end = RunEnd::StepLimit;
            break;
        }
        let mut h = dt.min(remaining);
        let mut smooth = true;
        let next = loop {
            match stepper.try_step(&state, h, Some(cfg.safety)) {
                Ok(s) => break Some(s),
                Err(_) if at_dt_min(h, cfg.dt_min) || h < cfg.dt_min => break None,
                Err(_) => {
                    rejected += 1;
                    smooth = false;
                    h = (0.5 * h).max(cfg.dt_min);
                }
            }
        };
        let Some(mut next) = next else {
            end = RunEnd::Stalled;
            break;
        };
        clock.add(h);
        next.t = clock.value();
        state = next;
        accepted += 1;

        let forced = at_dt_min(h, cfg.dt_min);
        let grown = state.u.max() >= cfg.blowup_factor * sup0;
        let finished = forced && grown;
        if accepted % cfg.record_every == 0 || finished {
            series.push(SeriesRecord::of(&state, h, cfg.gradv_p)?);
        }
        last_dt = h;
        if accepted % cfg.snapshot_every == 0
            && state.t > snapshots.last().map_or(f64::MIN, |s| s.t)
        {
            snapshots.push(state.clone());
        }
        if finished {
            end = RunEnd::Halted;
            break;
        }
        dt = if smooth {
            (GROWTH * h).min(cfg.dt_max)
        } else {
            h
        };
    }

    // the final state is always kept and recorded
    if series.last().map(|r| r.t) != Some(state.t) {
        series.push(SeriesRecord::of(&state, last_dt, cfg.gradv_p)?);
    }
    if snapshots.last().map(|s| s.t) != Some(state.t) {
        snapshots.push(state.clone());
    }
    let verdict = detect_blowup(&series, cfg, end);
    Ok(Trajectory {
        snapshots,
        series,
        verdict,
        end,
        accepted,
        rejected,
    })
}

/// Classifies a series.
///
/// `blew_up` needs a record with `sup u ≥ blowup_factor · sup u(0)` taken
/// with `dt = dt_min`, or growth past the factor followed by a stall at
/// `dt_min`.
pub fn detect_blowup(series: &[SeriesRecord], cfg: &SolverConfig, end: RunEnd) -> BlowupVerdict {
    let verdict = |outcome, t_detect, trigger: &str, growth| BlowupVerdict {
        outcome,
        t_detect,
        t_extrapolated: None,
        trigger: trigger.to_string(),
        sup_growth: growth,
    };
    let Some(first) = series.first() else {
        return verdict(Outcome::Inconclusive, None, "empty series", f64::NAN);
    };
    if let Some(bad) = series.iter().find(|r| !r.is_finite()) {
        return verdict(
            Outcome::DivergedNumerically,
            Some(bad.t),
            "non-finite diagnostics",
            f64::NAN,
        );
    }
    let sup0 = first.sup_u;
    let growth = series.iter().map(|r| r.sup_u).fold(0.0, f64::max) / sup0;
    let threshold = cfg.blowup_factor * sup0;
    let hit = series
        .iter()
        .find(|r| r.sup_u >= threshold && at_dt_min(r.dt, cfg.dt_min));
    let last = series.last().expect("non-empty");
    let detected = match hit {
        Some(r) => Some((r.t, "sup growth with dt at dt_min")),
        None if end == RunEnd::Stalled && last.sup_u >= threshold => {
            Some((last.t, "sup growth, then stall at dt_min"))
        }
        None => None,
    };
    if let Some((t, trigger)) = detected {
        let mut v = verdict(Outcome::BlewUp, Some(t), trigger, growth);
        v.t_extrapolated = extrapolate_blowup_time(series);
        return v;
    }
    match end {
        RunEnd::Stalled => verdict(
            Outcome::DivergedNumerically,
            Some(last.t),
            "step rejected at dt_min without blow-up growth",
            growth,
        ),
        RunEnd::StepLimit => verdict(Outcome::Inconclusive, None, "step budget exhausted", growth),
        _ if last.t >= first.t + cfg.t_end * (1.0 - 1e-12) => {
            verdict(Outcome::ReachedTEnd, None, "t_end", growth)
        }
        _ => verdict(Outcome::Inconclusive, None, "stopped before t_end", growth),
    }
}

/// Fits `1/(d ln sup u/dt)`, which is linear in `t` with root `T` for
/// `sup u ∝ (T - t)^{-γ}`, over the last quarter of the series.
pub fn extrapolate_blowup_time(series: &[SeriesRecord]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .windows(2)
        .filter(|w| w[1].dt > 0.0)
        .filter_map(|w| {
            let rate = (w[1].sup_u.ln() - w[0].sup_u.ln()) / w[1].dt;
            (rate > 0.0).then(|| (w[1].t - 0.5 * w[1].dt, 1.0 / rate))
        })
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let tail = &pts[pts.len() - (pts.len() / 4).max(8)..];
    let k = tail.len() as f64;
    let (mt, my) = tail
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, y)| (a + t / k, b + y / k));
    let (sty, stt) = tail.iter().fold((0.0, 0.0), |(a, b), &(t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt) * (t - mt))
    });
    if stt <= 0.0 {
        return None;
    }
    let slope = sty / stt;
    if slope >= 0.0 {
        return None;
    }
    Some(mt - my / slope)
}
