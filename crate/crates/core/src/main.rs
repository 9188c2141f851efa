use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qstab::harness::{
    export_plotdata, refinement_check, run_experiment, run_sweep, ExperimentConfig, Model,
};
use qstab::hypotheses::{check_hypotheses, DEFAULT_COUPLING_TOL, DEFAULT_RESONANCE_TOL};
use qstab::{Error, Result};

/// Lyapunov-feedback stabilization of a bilinear Schrödinger equation with
/// dipolar and polarizability controls.
#[derive(Parser)]
#[command(name = "qstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Source {
    /// Config file, or a preset name (fig1, fig2, fig3-4, fig5-6, hcn).
    config: String,
    /// Extra `key=value` settings applied after the config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply_overrides(&self.overrides)?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the averaged and oscillating systems and record the trajectory.
    Run(Source),
    /// Run one trajectory per epsilon and report the H² gaps and their ratios.
    Sweep(Source),
    /// Repeat a run at several truncation levels and compare them.
    Refine {
        #[command(flatten)]
        source: Source,
        /// Comma-separated mode counts.
        #[arg(long, value_delimiter = ',', default_value = "5,10")]
        modes: Vec<usize>,
    },
    /// Check the coupling and non-resonance conditions on the retained modes.
    CheckHypotheses {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = DEFAULT_COUPLING_TOL)]
        coupling_tol: f64,
        #[arg(long, default_value_t = DEFAULT_RESONANCE_TOL)]
        resonance_tol: f64,
    },
    /// Print the retained eigenvalues of -d²/dx² + V.
    Eig(Source),
    /// Write two-column plot data files from a trajectory CSV.
    Export {
        record: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(src) => {
            let cfg = src.load()?;
            let out = run_experiment(&cfg)?;
            let path = out.path.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
            println!("wrote {} rows to {path}", out.rows.len());
            if let Some(last) = out.rows.last() {
                println!(
                    "t = {}  L_av = {:.6e}  dist_av = {:.6e}  dist_eps = {:.6e}  gap_H2 = {:.6e}",
                    last.t, last.l_av, last.dist_av, last.dist_eps, last.gap_h2
                );
            }
            if let Some(reason) = &out.header.abort_reason {
                eprintln!("run aborted: {reason}");
            }
            Ok(out.exit_code())
        }
        Command::Sweep(src) => {
            let cfg = src.load()?;
            let summary = run_sweep(&cfg, true)?;
            println!("{:>12} {:>12} {:>16} {:>16}", "epsilon", "dt", "sup gap_H2", "final gap_H2");
            for e in &summary.entries {
                let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
                println!("{:>12e} {:>12e} {:>16} {:>16}", e.epsilon, e.dt, f(e.sup_gap), f(e.final_gap));
                if let Some(r) = &e.abort_reason {
                    eprintln!("  epsilon = {:e} aborted: {r}", e.epsilon);
                }
            }
            for r in &summary.ratios {
                println!(
                    "ratio eps {:e}/{:e}: sup {:?}  final {:?}",
                    r.eps_coarse, r.eps_fine, r.sup_ratio, r.final_ratio
                );
            }
            println!("{}", json(&summary));
            Ok(if summary.any_aborted() { 2 } else { 0 })
        }
        Command::Refine { source, modes } => {
            let cfg = source.load()?;
            let report = refinement_check(&cfg, &modes, true)?;
            for d in &report.diffs {
                println!(
                    "M = {} vs {}: sup|dL| = {:.3e}  sup|d dist_av| = {:.3e}  sup|d dist_eps| = {:.3e}",
                    d.modes_coarse, d.modes_fine, d.sup_lyapunov, d.sup_dist_av, d.sup_dist_eps
                );
            }
            println!("{}", json(&report));
            Ok(0)
        }
        Command::CheckHypotheses {
            source,
            coupling_tol,
            resonance_tol,
        } => {
            let cfg = source.load()?;
            let model = Model::build(&cfg)?;
            let report = check_hypotheses(&model.ops, coupling_tol, resonance_tol);
            print!("{report}");
            println!(
                "{}",
                json(&serde_json::json!({
                    "report": report,
                    "coupling_ok": report.coupling_ok(),
                    "resonance_ok": report.resonance_ok(),
                }))
            );
            Ok(0)
        }
        Command::Eig(src) => {
            let cfg = src.load()?;
            let model = Model::build(&cfg)?;
            for (k, l) in model.basis.eigenvalues().iter().enumerate() {
                println!("lambda_{} = {:.15e}", k + 1, l);
            }
            for (a, b) in model.basis.degenerate_pairs() {
                println!("near-degenerate pair: {} {}", a + 1, b + 1);
            }
            Ok(0)
        }
        Command::Export { record, out_dir } => {
            for p in export_plotdata(&record, out_dir.as_deref())? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
