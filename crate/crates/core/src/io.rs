//! Experiment configs, run directories and their manifests, and the
//! orchestration behind each CLI subcommand.
//!
//! A run directory holds `series.csv`, `snapshots/*.txt`, `verdict.json`,
//! any `checks_<battery>.json`, and `manifest.json`, which is written last
//! through a rename so that a directory with a manifest is always complete.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::functionals::{param_window, theta_exponent, StatePair};
use crate::grid::{GridSpec, RadialField, RadialGrid};
use crate::initial_data::{
    baseline_profiles, Baseline, ConcentrationRecipe, DatumSummary, RadiusRule,
};
use crate::solver::{run, BlowupVerdict, SeriesRecord, SolverConfig, Trajectory};
use crate::verifier::{
    check_conservation, check_energy_dissipation_bound, check_energy_inequality, check_gradv_lp,
    check_odi_blowup, check_pointwise_bound, inequality_suite, CheckReport, StateCorpus,
    SCHEME_TOL_CONSTANT,
};

/// Overrides the root under which relative output directories are created.
pub const OUTPUT_ROOT_ENV: &str = "KSLAB_OUTPUT_ROOT";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SERIES_HEADER: &str = "t,dt,mass_u,mass_v,sup_u,sup_v,F,D,f_l2,g_l2,gradv_lp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Named batteries for `verify`.
    #[serde(default)]
    pub checks: BTreeMap<String, Vec<CheckSpec>>,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        c: f64,
    },
    Bump {
        mass: f64,
        width: f64,
    },
    Perturbed {
        c: f64,
        delta: f64,
    },
    /// Member `k` (or members `k_range[0]..=k_range[1]`) of the concentrating
    /// sequence built on `baseline`.
    Concentrated {
        #[serde(default = "unit_baseline")]
        baseline: Baseline,
        p: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rule: Option<RadiusRule>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_range: Option<[u32; 2]>,
    },
    /// Restart from a stored snapshot.
    Snapshot {
        path: PathBuf,
    },
}

fn unit_baseline() -> Baseline {
    Baseline::Constant { c: 1.0 }
}

fn default_kappa() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    Conservation,
    EnergyInequality {
        #[serde(default = "default_c_scheme")]
        c_scheme: f64,
    },
    PointwiseBound {
        kappa: f64,
        #[serde(default)]
        t_limit: Option<f64>,
    },
    GradvLp {
        p: f64,
        #[serde(default)]
        t_limit: Option<f64>,
    },
    /// `θ` is taken from `(n, kappa)`.
    OdiBlowup {
        kappa: f64,
    },
    EnergyDissipationBound {
        kappa: f64,
    },
    /// Suite over the run's snapshots as a corpus.
    InequalitySuite {
        kappa: f64,
        #[serde(default = "default_slack")]
        slack: f64,
    },
}

fn default_c_scheme() -> f64 {
    SCHEME_TOL_CONSTANT
}

fn default_slack() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Overrides `solver.snapshot_every` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
    /// Emit a gnuplot script next to the data.
    pub plot: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs"),
            snapshot_every: None,
            plot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "over", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// Uses the concentrated initial spec's `k_range`.
    K,
    Cells {
        values: Vec<usize>,
    },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical compact serialization.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canon.as_bytes()))
    }

    /// Checks every embedded parameter before anything runs.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.solver.validate()?;
        if self.output.snapshot_every == Some(0) {
            return Err(Error::Config(
                "output.snapshot_every must be positive".into(),
            ));
        }
        let n = grid.dim();
        let nf = n as f64;
        match &self.initial {
            InitialSpec::Concentrated {
                p,
                kappa,
                alpha,
                rule,
                k,
                k_range,
                baseline,
            } => {
                param_window(n, *p, *kappa, *alpha)?;
                baseline.profiles(n, grid.radius())?;
                if let Some(r) = rule {
                    if !(r.r0 > 0.0 && r.r0 < grid.radius() && r.ratio > 0.0 && r.ratio < 1.0) {
                        return Err(Error::Config(format!("bad radius rule {r:?}")));
                    }
                }
                match (k, k_range) {
                    (Some(0), _) => return Err(Error::Config("k must be at least 1".into())),
                    (_, Some([a, b])) if *a == 0 || a > b => {
                        return Err(Error::Config(format!("bad k_range [{a}, {b}]")))
                    }
                    (None, None) => {
                        return Err(Error::Config("concentrated data needs k or k_range".into()))
                    }
                    _ => {}
                }
            }
            InitialSpec::Snapshot { .. } => {}
            other => {
                other_baseline(other)
                    .expect("baseline kind")
                    .profiles(n, grid.radius())?;
            }
        }
        for (battery, specs) in &self.checks {
            for spec in specs {
                let bad = |msg: String| Err(Error::Window(format!("battery {battery}: {msg}")));
                match *spec {
                    CheckSpec::PointwiseBound { kappa, .. } if !(kappa > nf - 2.0) => {
                        return bad(format!("kappa = {kappa} must exceed n - 2"));
                    }
                    CheckSpec::GradvLp { p, .. } if !(p > 1.0 && p < nf / (nf - 1.0)) => {
                        return bad(format!("p = {p} must lie in (1, n/(n-1))"));
                    }
                    CheckSpec::OdiBlowup { kappa }
                    | CheckSpec::EnergyDissipationBound { kappa }
                    | CheckSpec::InequalitySuite { kappa, .. } => {
                        theta_exponent(n, kappa)?;
                    }
                    _ => {}
                }
            }
        }
        if let Some(SweepSpec::Cells { values }) = &self.sweep {
            for &c in values {
                GridSpec {
                    cells: c,
                    ..self.grid
                }
                .build()?;
            }
        }
        Ok(())
    }

    /// Output directory, re-rooted under `$KSLAB_OUTPUT_ROOT` when relative.
    pub fn output_dir(&self) -> PathBuf {
        resolve_output(&self.output.dir)
    }

    fn solver_config(&self) -> SolverConfig {
        let mut s = self.solver;
        if let Some(e) = self.output.snapshot_every {
            s.snapshot_every = e;
        }
        s
    }

    /// The battery called `name`; `trajectory` is always available.
    pub fn battery(&self, name: &str) -> Result<Vec<CheckSpec>> {
        if let Some(b) = self.checks.get(name) {
            return Ok(b.clone());
        }
        match name {
            "trajectory" => Ok(vec![
                CheckSpec::Conservation,
                CheckSpec::EnergyInequality {
                    c_scheme: SCHEME_TOL_CONSTANT,
                },
            ]),
            _ => Err(Error::Config(format!("unknown battery {name:?}"))),
        }
    }
}

fn other_baseline(spec: &InitialSpec) -> Option<Baseline> {
    match *spec {
        InitialSpec::Constant { c } => Some(Baseline::Constant { c }),
        InitialSpec::Bump { mass, width } => Some(Baseline::Bump { mass, width }),
        InitialSpec::Perturbed { c, delta } => Some(Baseline::Perturbed { c, delta }),
        _ => None,
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

fn recipe_for(cfg: &ExperimentConfig, grid: &Arc<RadialGrid>) -> Result<ConcentrationRecipe> {
    let InitialSpec::Concentrated {
        baseline,
        p,
        kappa,
        alpha,
        rule,
        ..
    } = &cfg.initial
    else {
        return Err(Error::Config(
            "initial data is not a concentrated sequence".into(),
        ));
    };
    let window = param_window(grid.dim(), *p, *kappa, *alpha)?;
    let (bu, bv) = baseline.profiles(grid.dim(), grid.radius())?;
    let rule = rule.unwrap_or_else(|| RadiusRule::halving(grid.radius()));
    ConcentrationRecipe::new(grid.radius(), bu, bv, window, rule)
}

fn k_values(cfg: &ExperimentConfig) -> Vec<u32> {
    match &cfg.initial {
        InitialSpec::Concentrated {
            k_range: Some([a, b]),
            ..
        } => (*a..=*b).collect(),
        InitialSpec::Concentrated { k: Some(k), .. } => vec![*k],
        _ => Vec::new(),
    }
}

/// Initial state of a run; for a sequence with only `k_range`, its first
/// member.
pub fn initial_state(cfg: &ExperimentConfig) -> Result<StatePair> {
    let grid = cfg.grid.build()?;
    match &cfg.initial {
        InitialSpec::Concentrated { .. } => {
            let k = k_values(cfg)[0];
            concentrated_state(cfg, &grid, k)
        }
        InitialSpec::Snapshot { path } => {
            let (_, s) = load_snapshot(path)?;
            if s.grid().spec() != cfg.grid {
                return Err(Error::Config(
                    "snapshot grid differs from config grid".into(),
                ));
            }
            Ok(s)
        }
        other => baseline_profiles(other_baseline(other).expect("baseline kind"), &grid),
    }
}

fn concentrated_state(cfg: &ExperimentConfig, grid: &Arc<RadialGrid>, k: u32) -> Result<StatePair> {
    let recipe = recipe_for(cfg, grid)?.with_grid(grid.clone())?;
    recipe
        .datum(k)?
        .state
        .ok_or_else(|| Error::Construction("recipe produced no grid state".into()))
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_series(path: &Path, hash: &str, series: &[SeriesRecord]) -> Result<()> {
    let mut out = String::with_capacity(200 * (series.len() + 2));
    writeln!(out, "# config_hash: {hash}").unwrap();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = SERIES_HEADER.split(',').collect();
    w.write_record(&header).map_err(csv_err)?;
    for r in series {
        w.write_record(
            [
                r.t,
                r.dt,
                r.mass_u,
                r.mass_v,
                r.sup_u,
                r.sup_v,
                r.energy,
                r.dissipation,
                r.f_l2,
                r.g_l2,
                r.gradv_lp,
            ]
            .map(fmt_f),
        )
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv is utf-8"));
    write_file(path, out.as_bytes())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Reads a series file; returns the config hash and the records.
pub fn load_series(path: &Path) -> Result<(String, Vec<SeriesRecord>)> {
    let text = fs::read_to_string(path)?;
    let hash = header_hash(&text, path)?;
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rd.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != SERIES_HEADER {
        return Err(Error::Format(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let x: Vec<f64> = row
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("{} row {}: {e}", path.display(), i + 1)))?;
        out.push(SeriesRecord {
            t: x[0],
            dt: x[1],
            mass_u: x[2],
            mass_v: x[3],
            sup_u: x[4],
            sup_v: x[5],
            energy: x[6],
            dissipation: x[7],
            f_l2: x[8],
            g_l2: x[9],
            gradv_lp: x[10],
        });
    }
    Ok((hash, out))
}

fn header_hash(text: &str, path: &Path) -> Result<String> {
    text.lines()
        .find_map(|l| l.strip_prefix("# config_hash:"))
        .map(|h| h.trim().to_string())
        .ok_or_else(|| Error::Format(format!("{}: missing config hash", path.display())))
}

/// Header of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub grid: GridSpec,
    pub t: f64,
    pub config_hash: String,
}

pub fn write_snapshot(path: &Path, hash: &str, s: &StatePair) -> Result<()> {
    let g = s.grid();
    let spec = g.spec();
    let mut out = String::with_capacity(80 * (g.len() + 8));
    writeln!(out, "# n {}", spec.n).unwrap();
    writeln!(out, "# R {}", fmt_f(spec.radius)).unwrap();
    writeln!(out, "# N {}", spec.cells).unwrap();
    writeln!(out, "# grading {}", fmt_f(spec.grading)).unwrap();
    writeln!(out, "# t {}", fmt_f(s.t)).unwrap();
    writeln!(out, "# config_hash {hash}").unwrap();
    writeln!(out, "# r u v").unwrap();
    for ((r, u), v) in g.centers().iter().zip(s.u.values()).zip(s.v.values()) {
        writeln!(out, "{} {} {}", fmt_f(*r), fmt_f(*u), fmt_f(*v)).unwrap();
    }
    write_file(path, out.as_bytes())
}

pub fn load_snapshot(path: &Path) -> Result<(SnapshotHeader, StatePair)> {
    let text = fs::read_to_string(path)?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix('#') {
            if let Some((k, v)) = h.trim().split_once(' ') {
                fields.insert(k, v.trim());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let x: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("unparsable row"))?;
        if x.len() != 3 {
            return Err(bad("rows need r u v"));
        }
        rows.push([x[0], x[1], x[2]]);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| bad(&format!("missing {k}")))
    };
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
    let spec = GridSpec {
        n: get("n")?.parse().map_err(|_| bad("bad n"))?,
        radius: num("R")?,
        cells: get("N")?.parse().map_err(|_| bad("bad N"))?,
        grading: num("grading")?,
    };
    let grid = spec.build()?;
    if rows.len() != grid.len() {
        return Err(bad("row count differs from N"));
    }
    for (row, &r) in rows.iter().zip(grid.centers()) {
        if (row[0] - r).abs() > 1e-12 * r.max(f64::MIN_POSITIVE) {
            return Err(bad("radii do not match the grid"));
        }
    }
    let u = RadialField::new(grid.clone(), rows.iter().map(|x| x[1]).collect())?;
    let v = RadialField::new(grid, rows.iter().map(|x| x[2]).collect())?;
    let t = num("t")?;
    let header = SnapshotHeader {
        grid: spec,
        t,
        config_hash: get("config_hash")?.to_string(),
    };
    Ok((header, StatePair::new(u, v, t)?))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Series,
    Snapshot,
    Verdict,
    Checks,
    Table,
    Plot,
    /// Manifest of a member run of a sweep.
    Member,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory.
    pub path: PathBuf,
    pub kind: FileKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// Everything was written but a check battery failed.
    ChecksFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub started: f64,
    pub finished: f64,
    pub files: Vec<FileEntry>,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<BlowupVerdict>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(m)
    }

    pub fn files_of(&self, kind: FileKind) -> impl Iterator<Item = &FileEntry> {
        self.files.iter().filter(move |f| f.kind == kind)
    }

    /// Writes `manifest.json` through a temporary file and a rename.
    pub fn commit(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let tmp = dir.join(".manifest.json.tmp");
        write_json(&tmp, self)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: T,
}

#[derive(Deserialize)]
struct StampedChecks {
    config_hash: String,
    reports: Vec<CheckReport>,
}

/// Writes a trajectory's files and commits its manifest.
pub fn persist_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    started: f64,
) -> Result<RunManifest> {
    let hash = cfg.hash();
    fs::create_dir_all(dir)?;
    let mut files = vec![FileEntry {
        path: "series.csv".into(),
        kind: FileKind::Series,
    }];
    write_series(&dir.join("series.csv"), &hash, &traj.series)?;
    for (i, s) in traj.snapshots.iter().enumerate() {
        let rel = PathBuf::from(format!("snapshots/snap_{i:06}.txt"));
        write_snapshot(&dir.join(&rel), &hash, s)?;
        files.push(FileEntry {
            path: rel,
            kind: FileKind::Snapshot,
        });
    }
    #[derive(Serialize)]
    struct VerdictBody<'a> {
        verdict: &'a BlowupVerdict,
        end: crate::solver::RunEnd,
        accepted: usize,
        rejected: usize,
    }
    write_json(
        &dir.join("verdict.json"),
        &Stamped {
            config_hash: &hash,
            body: VerdictBody {
                verdict: &traj.verdict,
                end: traj.end,
                accepted: traj.accepted,
                rejected: traj.rejected,
            },
        },
    )?;
    files.push(FileEntry {
        path: "verdict.json".into(),
        kind: FileKind::Verdict,
    });
    let mut manifest = RunManifest {
        config_hash: hash,
        version: VERSION.to_string(),
        started,
        finished: 0.0,
        files,
        status: RunStatus::Complete,
        config: cfg.clone(),
        verdict: Some(traj.verdict.clone()),
    };
    if cfg.output.plot {
        let rel = write_plot_script(dir, &manifest)?;
        manifest.files.push(FileEntry {
            path: rel,
            kind: FileKind::Plot,
        });
    }
    manifest.finished = now();
    manifest.commit(dir)?;
    Ok(manifest)
}

/// `simulate`: run the configured initial state and persist it.
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = now();
    let s0 = initial_state(cfg)?;
    let traj = run(&s0, &cfg.solver_config())?;
    persist_run(dir, cfg, &traj, started)
}

/// `construct`: tabulate the sequence over `k_range` (or the single `k`)
/// with refined quadrature; no grid sampling.
pub fn construct(cfg: &ExperimentConfig, dir: &Path) -> Result<(RunManifest, Vec<DatumSummary>)> {
    cfg.validate()?;
    let started = now();
    let grid = cfg.grid.build()?;
    let recipe = recipe_for(cfg, &grid)?;
    let rows: Vec<DatumSummary> = k_values(cfg)
        .par_iter()
        .map(|&k| recipe.datum(k).map(|d| d.summary))
        .collect::<Result<_>>()?;
    let hash = cfg.hash();
    fs::create_dir_all(dir)?;
    let mut table = String::new();
    writeln!(table, "# config_hash: {hash}").unwrap();
    writeln!(
        table,
        "k,r_k,ln_eta,margin,mass,energy,grad_v_sq,v_sq,uv,entropy,lp_dist,w12_dist,uv_over_k,uv_bound"
    )
    .unwrap();
    for r in &rows {
        let vals = [
            r.r_k,
            r.ln_eta,
            r.margin,
            r.mass,
            r.energy,
            r.grad_v_sq,
            r.v_sq,
            r.uv,
            r.entropy,
            r.lp_dist,
            r.w12_dist,
            r.uv_over_k,
            r.uv_bound,
        ];
        let cols: Vec<String> = vals.iter().map(|&x| fmt_f(x)).collect();
        writeln!(table, "{},{}", r.k, cols.join(",")).unwrap();
    }
    write_file(&dir.join("construction.csv"), table.as_bytes())?;
    write_json(
        &dir.join("construction.json"),
        &Stamped {
            config_hash: &hash,
            body: serde_json::json!({ "rows": rows }),
        },
    )?;
    let manifest = RunManifest {
        config_hash: hash,
        version: VERSION.to_string(),
        started,
        finished: now(),
        files: vec![
            FileEntry {
                path: "construction.csv".into(),
                kind: FileKind::Table,
            },
            FileEntry {
                path: "construction.json".into(),
                kind: FileKind::Table,
            },
        ],
        status: RunStatus::Complete,
        config: cfg.clone(),
        verdict: None,
    };
    manifest.commit(dir)?;
    Ok((manifest, rows))
}

/// `sweep`: independent runs over `k` or over grid sizes, each in its own
/// subdirectory, executed concurrently.
pub fn sweep(cfg: &ExperimentConfig, dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let started = now();
    let members: Vec<(String, ExperimentConfig)> = match &cfg.sweep {
        Some(SweepSpec::K) | None if !k_values(cfg).is_empty() => k_values(cfg)
            .into_iter()
            .map(|k| {
                let mut c = cfg.clone();
                c.sweep = None;
                if let InitialSpec::Concentrated { k: kk, k_range, .. } = &mut c.initial {
                    *kk = Some(k);
                    *k_range = None;
                }
                (format!("k_{k:03}"), c)
            })
            .collect(),
        Some(SweepSpec::Cells { values }) => values
            .iter()
            .map(|&cells| {
                let mut c = cfg.clone();
                c.sweep = None;
                c.grid.cells = cells;
                (format!("N_{cells:05}"), c)
            })
            .collect(),
        _ => return Err(Error::Config("nothing to sweep over".into())),
    };
    fs::create_dir_all(dir)?;
    let manifests: Vec<RunManifest> = members
        .par_iter()
        .map(|(name, c)| simulate(c, &dir.join(name)))
        .collect::<Result<_>>()?;
    let mut files = Vec::new();
    for ((name, _), m) in members.iter().zip(&manifests) {
        files.push(FileEntry {
            path: Path::new(name).join("manifest.json"),
            kind: FileKind::Member,
        });
        for f in m.files_of(FileKind::Series) {
            files.push(FileEntry {
                path: Path::new(name).join(&f.path),
                kind: FileKind::Series,
            });
        }
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        version: VERSION.to_string(),
        started,
        finished: now(),
        files,
        status: RunStatus::Complete,
        config: cfg.clone(),
        verdict: None,
    };
    manifest.commit(dir)?;
    Ok(manifest)
}

/// Series and snapshots of the run a manifest describes.
pub fn load_run(manifest_path: &Path) -> Result<(RunManifest, Vec<SeriesRecord>, Vec<StatePair>)> {
    let m = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let series_file = m
        .files_of(FileKind::Series)
        .next()
        .ok_or_else(|| Error::Format("manifest lists no series".into()))?;
    let (hash, series) = load_series(&dir.join(&series_file.path))?;
    if hash != m.config_hash {
        return Err(Error::Format(
            "series config hash differs from manifest".into(),
        ));
    }
    let snaps = m
        .files_of(FileKind::Snapshot)
        .map(|f| {
            let (h, s) = load_snapshot(&dir.join(&f.path))?;
            if h.config_hash != m.config_hash {
                return Err(Error::Format(format!(
                    "{}: config hash differs",
                    f.path.display()
                )));
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, series, snaps))
}

pub fn run_battery(
    specs: &[CheckSpec],
    series: &[SeriesRecord],
    snapshots: &[StatePair],
    t_detect: Option<f64>,
) -> Result<Vec<CheckReport>> {
    let n = snapshots
        .first()
        .map(|s| s.grid().dim())
        .ok_or_else(|| Error::InvalidArgument("run has no snapshots".into()))?;
    specs
        .par_iter()
        .map(|spec| match *spec {
            CheckSpec::Conservation => Ok(vec![check_conservation(series)]),
            CheckSpec::EnergyInequality { c_scheme } => {
                Ok(vec![check_energy_inequality(series, c_scheme)])
            }
            CheckSpec::PointwiseBound { kappa, t_limit } => Ok(vec![check_pointwise_bound(
                snapshots,
                kappa,
                t_limit.or(t_detect),
            )?]),
            CheckSpec::GradvLp { p, t_limit } => {
                Ok(vec![check_gradv_lp(snapshots, p, t_limit.or(t_detect))?])
            }
            CheckSpec::OdiBlowup { kappa } => Ok(vec![check_odi_blowup(
                series,
                theta_exponent(n, kappa)?,
                t_detect,
            )]),
            CheckSpec::EnergyDissipationBound { kappa } => {
                Ok(vec![check_energy_dissipation_bound(
                    series,
                    theta_exponent(n, kappa)?,
                    t_detect,
                )])
            }
            CheckSpec::InequalitySuite { kappa, slack } => {
                inequality_suite(&StateCorpus::enclosing(snapshots.to_vec(), kappa, slack)?)
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

/// `verify`: run a battery against a stored run, persist the reports, and
/// re-commit the manifest with them listed.
pub fn verify(manifest_path: &Path, battery: &str) -> Result<(RunManifest, Vec<CheckReport>)> {
    let (mut m, series, snaps) = load_run(manifest_path)?;
    let specs = m.config.battery(battery)?;
    let t_detect = m.verdict.as_ref().and_then(|v| v.t_detect);
    let reports = run_battery(&specs, &series, &snaps, t_detect)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let rel = PathBuf::from(format!("checks_{battery}.json"));
    write_json(
        &dir.join(&rel),
        &Stamped {
            config_hash: &m.config_hash,
            body: serde_json::json!({ "battery": battery, "reports": reports }),
        },
    )?;
    if !m.files.iter().any(|f| f.path == rel) {
        m.files.push(FileEntry {
            path: rel,
            kind: FileKind::Checks,
        });
    }
    m.status = if reports.iter().all(CheckReport::ok) {
        RunStatus::Complete
    } else {
        RunStatus::ChecksFailed
    };
    m.finished = now();
    m.commit(dir)?;
    Ok((m, reports))
}

pub fn load_checks(path: &Path) -> Result<(String, Vec<CheckReport>)> {
    let c: StampedChecks = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok((c.config_hash, c.reports))
}

/// Writes `plot.gp` next to a manifest: `F(t)`, `D(t)`, `sup u(t)` and
/// `v r^κ` of the last snapshot.
pub fn write_plot_script(dir: &Path, m: &RunManifest) -> Result<PathBuf> {
    let kappa = match m.config.initial {
        InitialSpec::Concentrated { kappa, .. } => kappa,
        _ => 2.0,
    };
    let series = m
        .files_of(FileKind::Series)
        .next()
        .ok_or_else(|| Error::Format("manifest lists no series".into()))?;
    let last_snap = m.files_of(FileKind::Snapshot).last();
    let mut gp = String::new();
    writeln!(gp, "# config_hash: {}", m.config_hash).unwrap();
    writeln!(gp, "set datafile separator ','").unwrap();
    writeln!(gp, "set datafile commentschars '#'").unwrap();
    writeln!(gp, "set terminal pngcairo size 1200,900").unwrap();
    writeln!(gp, "set output 'plot.png'").unwrap();
    writeln!(gp, "set multiplot layout 2,2").unwrap();
    writeln!(gp, "set xlabel 't'").unwrap();
    let s = series.path.display();
    writeln!(gp, "plot '{s}' using 1:7 skip 1 with lines title 'F'").unwrap();
    writeln!(gp, "set logscale y").unwrap();
    writeln!(gp, "plot '{s}' using 1:8 skip 1 with lines title 'D'").unwrap();
    writeln!(gp, "plot '{s}' using 1:5 skip 1 with lines title 'sup u'").unwrap();
    writeln!(gp, "unset logscale y").unwrap();
    if let Some(snap) = last_snap {
        writeln!(gp, "set datafile separator whitespace").unwrap();
        writeln!(gp, "set xlabel 'r'").unwrap();
        writeln!(gp, "set logscale x").unwrap();
        writeln!(
            gp,
            "plot '{}' using 1:($3*$1**{kappa}) with lines title 'v r^{kappa}'",
            snap.path.display()
        )
        .unwrap();
    }
    writeln!(gp, "unset multiplot").unwrap();
    let rel = PathBuf::from("plot.gp");
    write_file(&dir.join(&rel), gp.as_bytes())?;
    Ok(rel)
}

/// `plot`: emit the script for a stored run and list it in the manifest.
pub fn plot(manifest_path: &Path) -> Result<PathBuf> {
    let mut m = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let rel = write_plot_script(dir, &m)?;
    if !m.files.iter().any(|f| f.path == rel) {
        m.files.push(FileEntry {
            path: rel.clone(),
            kind: FileKind::Plot,
        });
        m.commit(dir)?;
    }
    Ok(dir.join(rel))
}
