#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kslab::grid::{ball_volume, sphere_area};
use kslab::io::{self, ExperimentConfig};
use kslab::{param_window, Error};

#[derive(Parser)]
#[command(
    name = "kslab",
    version,
    about = "Radial Keller-Segel blow-up laboratory"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration and persist series, snapshots and verdict.
    Simulate {
        config: PathBuf,
        /// Output directory; defaults to the config's `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the concentrating sequence over the configured k.
    Construct {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named check battery against a stored run.
    Verify {
        manifest: PathBuf,
        #[arg(long, default_value = "trajectory")]
        battery: String,
    },
    /// Concurrent runs over k or over grid sizes.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print θ, the α window, ω_n and |B_R|.
    Constants {
        n: usize,
        kappa: f64,
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Emit a gnuplot script for a stored run.
    Plot { manifest: PathBuf },
}

enum Failure {
    Error(anyhow::Error),
    ChecksFailed,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.into())
    }
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.map_or_else(|| cfg.output_dir(), |o| io::resolve_output(&o))
}

fn manifest_line(dir: &Path) -> String {
    format!("manifest={}", dir.join("manifest.json").display())
}

fn exec(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir(&cfg, out);
            let m = io::simulate(&cfg, &dir)?;
            let v = m.verdict.expect("runs carry a verdict");
            println!("{}", manifest_line(&dir));
            println!(
                "outcome={} trigger=\"{}\" t_detect={} t_extrapolated={} sup_growth={:e}",
                serde_json::to_value(v.outcome)?.as_str().unwrap_or("?"),
                v.trigger,
                v.t_detect.map_or("none".into(), |t| format!("{t:e}")),
                v.t_extrapolated.map_or("none".into(), |t| format!("{t:e}")),
                v.sup_growth
            );
        }
        Cmd::Construct { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir(&cfg, out);
            let (_, rows) = io::construct(&cfg, &dir)?;
            println!("{}", manifest_line(&dir));
            println!("k,ln_eta,margin,energy,lp_dist,w12_dist,uv_over_k");
            for r in rows {
                println!(
                    "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                    r.k, r.ln_eta, r.margin, r.energy, r.lp_dist, r.w12_dist, r.uv_over_k
                );
            }
        }
        Cmd::Verify { manifest, battery } => {
            let (_, reports) = io::verify(&manifest, &battery)?;
            let mut failed = false;
            for r in &reports {
                let status = match (r.applicable, r.passed) {
                    (false, _) => "N/A",
                    (true, true) => "PASS",
                    (true, false) => {
                        failed = true;
                        "FAIL"
                    }
                };
                println!(
                    "{status} {} worst_ratio={:e} {}",
                    r.name, r.worst_ratio, r.note
                );
            }
            if failed {
                return Err(Failure::ChecksFailed);
            }
        }
        Cmd::Sweep { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir(&cfg, out);
            let m = io::sweep(&cfg, &dir)?;
            println!("{}", manifest_line(&dir));
            for f in m.files_of(io::FileKind::Member) {
                println!("member={}", dir.join(&f.path).display());
            }
        }
        Cmd::Constants {
            n,
            kappa,
            p,
            radius,
        } => {
            let w = param_window(n, p, kappa, None)?;
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument(format!("radius {radius}")).into());
            }
            println!("n={n} kappa={kappa} p={p}");
            println!("theta={:.6}", w.theta);
            println!("alpha_window=({:.6}, {:.6})", w.alpha_lo, w.alpha_hi);
            println!("alpha_mid={:.6}", w.alpha);
            println!("omega_n={:.6}", sphere_area(n));
            println!("ball_volume={:.6}", ball_volume(n, radius));
        }
        Cmd::Plot { manifest } => {
            let p = io::plot(&manifest)?;
            println!("script={}", p.display());
        }
    }
    Ok(())
}

fn error_line(e: &anyhow::Error) -> String {
    let kind = e.downcast_ref::<Error>().map_or("internal", Error::kind);
    let msg = format!("{e:#}")
        .replace('\\', "\\\\")
        .replace('"', "\\\"")
        .replace('\n', " ");
    format!("error: kind={kind} message=\"{msg}\"")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ChecksFailed) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(2)
        }
    }
}
