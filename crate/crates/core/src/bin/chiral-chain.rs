use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use chiral_chain::config::{self, ConfigLayer};
use chiral_chain::run::{execute, write_outputs, RunStatus};

/// Steady-state transport in weakly driven chiral atomic chains.
///
/// Settings come from a TOML file (--config), CHIRAL_<KEY> environment
/// variables and flags; flags override the environment, which overrides the
/// file. List values are comma-separated.
#[derive(Parser, Debug)]
#[command(name = "chiral-chain", version)]
struct Cli {
    /// simulate | sweep | fluctuate | validate
    #[arg(value_name = "MODE")]
    command: Option<String>,

    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n_atoms: Option<String>,
    /// Lattice phase k*d
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
    /// Detuning: one value for all atoms or a comma-separated list
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    /// D = (gamma_R - gamma_L) / gamma
    #[arg(long, allow_hyphen_values = true)]
    directionality: Option<String>,
    #[arg(long = "gamma-l")]
    gamma_l: Option<String>,
    /// Rabi frequency [default: 0.01]
    #[arg(long)]
    rabi: Option<String>,
    /// start:stop:count [default: 0:2pi:401]
    #[arg(long)]
    xi_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    directionality_grid: Option<String>,
    #[arg(long)]
    n_grid: Option<String>,
    /// Position disorder as a fraction of the spacing
    #[arg(long)]
    fluctuation: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    t_final: Option<String>,
    #[arg(long)]
    n_steps: Option<String>,
    /// Drive strengths for validate
    #[arg(long)]
    rabi_list: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Print the resolved configuration as TOML and exit
    #[arg(long)]
    print_config: bool,
}

impl Cli {
    fn layer(&self) -> chiral_chain::Result<ConfigLayer> {
        if let (Some(a), Some(b)) = (&self.command, &self.mode) {
            if a != b {
                return Err(chiral_chain::Error::Config(format!(
                    "mode given twice ('{a}' and '{b}')"
                )));
            }
        }
        let mode = self.command.as_ref().or(self.mode.as_ref());
        let pairs = [
            ("mode", mode),
            ("n_atoms", self.n_atoms.as_ref()),
            ("xi", self.xi.as_ref()),
            ("delta", self.delta.as_ref()),
            ("directionality", self.directionality.as_ref()),
            ("gamma_l", self.gamma_l.as_ref()),
            ("rabi", self.rabi.as_ref()),
            ("xi_grid", self.xi_grid.as_ref()),
            ("delta_grid", self.delta_grid.as_ref()),
            ("directionality_grid", self.directionality_grid.as_ref()),
            ("n_grid", self.n_grid.as_ref()),
            ("fluctuation", self.fluctuation.as_ref()),
            ("samples", self.samples.as_ref()),
            ("seed", self.seed.as_ref()),
            ("t_final", self.t_final.as_ref()),
            ("n_steps", self.n_steps.as_ref()),
            ("rabi_list", self.rabi_list.as_ref()),
            ("out", self.out.as_ref()),
            ("format", self.format.as_ref()),
            ("threads", self.threads.as_ref()),
        ];
        let mut layer = ConfigLayer::default();
        for (key, value) in pairs {
            if let Some(v) = value {
                layer.set(key, v).map_err(|e| {
                    chiral_chain::Error::Config(format!("--{}: {e}", key.replace('_', "-")))
                })?;
            }
        }
        Ok(layer)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli
        .layer()
        .and_then(|flags| config::load(cli.config.as_deref(), ConfigLayer::from_env()?, flags))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if cli.print_config {
        return match cfg.to_toml_string() {
            Ok(s) => {
                print!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        };
    }

    let outcome = match execute(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = write_outputs(&cfg, &outcome) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let status = outcome.status();
    match status {
        RunStatus::Success => {}
        RunStatus::Partial => eprintln!(
            "warning: {} of {} rows undefined (see flags column)",
            outcome.undefined,
            outcome.table.rows.len()
        ),
        RunStatus::Failed => eprintln!("error: no row produced a result"),
    }
    ExitCode::from(status.exit_code() as u8)
}
