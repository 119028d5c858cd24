//! Dispatch a [`RunConfig`] to the solvers and write the result artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Mode, RunConfig};
use crate::dynamics::{evolve, steady_state, validity_check, Saturation};
use crate::error::{Error, Result};
use crate::lindblad::compare_with_amplitude_model;
use crate::model::{build_geometry, build_interaction_matrix, DriveParams, FluctuationSpec};
use crate::output::{join_flags, Cell, Table, SCHEMA_VERSION};
use crate::transport::{fluctuation_ensemble, sweep, transport_metric, SweepGrid};

pub const SWEEP_COLUMNS: [&str; 7] = ["N", "xi", "delta", "D", "Tp", "total_population", "flags"];
pub const FLUCTUATE_COLUMNS: [&str; 10] = [
    "N",
    "xi",
    "delta",
    "D",
    "fraction",
    "samples",
    "undefined_samples",
    "Tp_mean",
    "Tp_std",
    "flags",
];
pub const VALIDATE_COLUMNS: [&str; 4] =
    ["rabi", "max_rel_discrepancy", "Tp_amplitude", "Tp_lindblad"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    /// Every row is defined.
    Success,
    /// Some rows are undefined.
    Partial,
    /// No row produced a result.
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success | RunStatus::Partial => 0,
            RunStatus::Failed => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: Table,
    pub undefined: usize,
    /// Mode-specific summary placed in the metadata sidecar.
    pub summary: Value,
}

impl RunOutcome {
    pub fn status(&self) -> RunStatus {
        if self.undefined == 0 {
            RunStatus::Success
        } else if self.undefined >= self.table.rows.len() {
            RunStatus::Failed
        } else {
            RunStatus::Partial
        }
    }
}

/// Compute the result table, honouring the configured worker count.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.mode {
        Mode::Simulate => run_simulate(cfg),
        Mode::Sweep => run_sweep(cfg),
        Mode::Fluctuate => run_fluctuate(cfg),
        Mode::Validate => run_validate(cfg),
    }
}

fn grid(cfg: &RunConfig) -> Result<SweepGrid> {
    SweepGrid::new(
        cfg.xi_grid.values(),
        cfg.delta_axis(),
        cfg.directionality_axis(),
        cfg.n_axis(),
    )
}

fn point_cells(n: usize, xi: f64, delta: f64, d: f64) -> Vec<Cell> {
    vec![
        Cell::Int(n as u64),
        Cell::num(xi),
        Cell::num(delta),
        Cell::num(d),
    ]
}

fn undefined_flag(e: &Error) -> String {
    format!("undefined:{}", e.tag())
}

fn run_sweep(cfg: &RunConfig) -> Result<RunOutcome> {
    let rows = sweep(&grid(cfg)?, cfg.rabi)?;
    let mut table = Table::new(SWEEP_COLUMNS);
    let mut undefined = 0;
    for row in &rows {
        let p = row.point;
        let mut cells = point_cells(p.n_atoms, p.xi, p.delta, p.directionality);
        match &row.outcome {
            Ok(r) => cells.extend([
                Cell::num(r.tp),
                Cell::num(r.total_population()),
                Cell::text(join_flags(&r.flags)),
            ]),
            Err(e) => {
                undefined += 1;
                cells.extend([Cell::Missing, Cell::Missing, Cell::text(undefined_flag(e))]);
            }
        }
        table.push(cells);
    }
    Ok(RunOutcome {
        table,
        undefined,
        summary: json!({ "points": rows.len() }),
    })
}

/// Every grid point uses the same disorder seeds, so differences between
/// points are not masked by independent sampling noise.
fn run_fluctuate(cfg: &RunConfig) -> Result<RunOutcome> {
    let spec = cfg.fluctuation_spec()?;
    let points = grid(cfg)?.points();
    let stats: Vec<_> = points
        .par_iter()
        .map(|p| fluctuation_ensemble(p, &spec, cfg.samples, cfg.rabi))
        .collect();

    let mut table = Table::new(FLUCTUATE_COLUMNS);
    let mut undefined = 0;
    for (p, s) in points.iter().zip(&stats) {
        let mut cells = point_cells(p.n_atoms, p.xi, p.delta, p.directionality);
        cells.extend([Cell::num(spec.fraction), Cell::Int(cfg.samples as u64)]);
        match s {
            Ok(s) => {
                let flags = if s.undefined > 0 {
                    "partial_samples"
                } else {
                    ""
                };
                cells.extend([
                    Cell::Int(s.undefined as u64),
                    Cell::num(s.mean),
                    Cell::num(s.std),
                    Cell::text(flags),
                ]);
            }
            Err(e) => {
                undefined += 1;
                cells.extend([
                    Cell::Int(cfg.samples as u64),
                    Cell::Missing,
                    Cell::Missing,
                    Cell::text(undefined_flag(e)),
                ]);
            }
        }
        table.push(cells);
    }
    Ok(RunOutcome {
        table,
        undefined,
        summary: json!({ "points": points.len(), "fraction": spec.fraction }),
    })
}

fn run_simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let n = cfg.n_atoms.expect("validated");
    let xi = cfg.xi.expect("validated");
    let fluct = if cfg.fluctuation > 0.0 {
        Some(FluctuationSpec::new(cfg.fluctuation, cfg.seed)?)
    } else {
        None
    };
    let geom = build_geometry(n, xi, fluct.as_ref())?;
    let drive = DriveParams::new(cfg.rabi, cfg.delta.resolve(n)?);
    let coupling = cfg.coupling.coupling()?;
    let v = build_interaction_matrix(&geom, &drive, &coupling)?;

    let trace = evolve(&v, cfg.rabi, cfg.t_final, cfg.n_steps)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("P_{i}")));
    header.extend(["total_population".to_string(), "flags".to_string()]);
    let mut table = Table::new(header);
    for state in &trace {
        let pops = state.populations();
        let rep = validity_check(&state.amplitudes);
        let mut cells = vec![Cell::num(state.time)];
        cells.extend(pops.iter().map(|&p| Cell::num(p)));
        cells.push(Cell::num(rep.total_population));
        cells.push(Cell::text(match rep.level {
            Saturation::Ok => "",
            Saturation::Warn => "strained_warn",
            Saturation::Error => "strained_error",
        }));
        table.push(cells);
    }

    let steady = match steady_state(&v, cfg.rabi) {
        Ok(sol) => {
            let pops = sol.populations();
            json!({
                "populations": pops,
                "Tp": transport_metric(&pops).ok(),
                "total_population": sol.validity().total_population,
                "relaxation_rate": sol.relaxation_rate,
                "smallest_singular_value": sol.smallest_singular_value,
                "residual": sol.residual,
                "flags": sol.flags(),
            })
        }
        Err(e) => json!({ "error": e.tag(), "message": e.to_string() }),
    };
    Ok(RunOutcome {
        table,
        undefined: 0,
        summary: json!({ "positions": geom.positions(), "steady_state": steady }),
    })
}

fn run_validate(cfg: &RunConfig) -> Result<RunOutcome> {
    let n = cfg.n_atoms.expect("validated");
    let geom = build_geometry(n, cfg.xi.expect("validated"), None)?;
    let report = compare_with_amplitude_model(
        &geom,
        &cfg.delta.resolve(n)?,
        &cfg.coupling.coupling()?,
        &cfg.rabi_list,
    )?;
    let mut table = Table::new(VALIDATE_COLUMNS);
    for r in &report.rows {
        table.push(vec![
            Cell::num(r.rabi),
            Cell::num(r.max_rel_discrepancy),
            Cell::opt(r.tp_amplitude),
            Cell::opt(r.tp_lindblad),
        ]);
    }
    Ok(RunOutcome {
        table,
        undefined: 0,
        summary: json!({ "exponent": report.exponent, "expected_exponent": 2.0 }),
    })
}

/// `<out>.meta.json`
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn metadata(cfg: &RunConfig, outcome: &RunOutcome) -> Value {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "schema_version": SCHEMA_VERSION,
        "library_version": env!("CARGO_PKG_VERSION"),
        "mode": cfg.mode.to_string(),
        "config": cfg.echo(),
        "seed": cfg.seed,
        "rows": outcome.table.rows.len(),
        "undefined_rows": outcome.undefined,
        "warning": outcome.undefined > 0,
        "columns": outcome.table.header,
        "summary": outcome.summary,
        "timestamp_unix": timestamp,
    })
}

/// Write the table to `cfg.out` (stdout when unset) and, for file output,
/// the metadata sidecar next to it.
pub fn write_outputs(cfg: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    match &cfg.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(File::create(path)?);
            outcome.table.write(cfg.format, &mut w)?;
            w.flush()?;
            let mut meta = BufWriter::new(File::create(sidecar_path(path))?);
            serde_json::to_writer_pretty(&mut meta, &metadata(cfg, outcome))?;
            meta.write_all(b"\n")?;
            meta.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            outcome.table.write(cfg.format, stdout.lock())?;
        }
    }
    Ok(())
}

/// Execute and write; returns the run status.
pub fn run(cfg: &RunConfig) -> Result<RunStatus> {
    let outcome = execute(cfg)?;
    write_outputs(cfg, &outcome)?;
    Ok(outcome.status())
}
