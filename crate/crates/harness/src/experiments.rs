//! Scripted runs: plain solves, iteration tables, parameter sweeps and the
//! rotating condensate. Each writes its files into `cfg.output`.

use std::path::Path;
use std::time::Instant;

use osm_core::gpe::{energy_and_mu_rotating, gpe_run, mass, reconstruct_valid_zone, ValidZone};
use osm_core::schwarz::{ConvergenceHistory, SchwarzSolver, SimulationState};
use serde::Serialize;
use serde_json::json;

use crate::config::{AlgorithmName, Mode, RunConfig, Transmission};
use crate::error::Result;
use crate::io;

/// What a plain run produced.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub iterations: Vec<usize>,
    pub mass_initial: f64,
    pub mass_final: f64,
    pub max_relative_mass_drift: f64,
    pub wall_time_s: f64,
}

fn write_meta(dir: &Path, experiment: &str, cfg: &RunConfig, results: serde_json::Value) -> Result<()> {
    let grid = cfg.grid()?;
    io::write_json(
        &dir.join("meta.json"),
        &json!({
            "experiment": experiment,
            "config": cfg,
            "seed": cfg.seed,
            "grid": { "nx": grid.nx, "ny": grid.ny },
            "versions": {
                "osm-harness": env!("CARGO_PKG_VERSION"),
                "osm-core": osm_core::VERSION,
            },
            "results": results,
        }),
    )
}

fn due(cfg: &RunConfig, step: usize, last: usize) -> bool {
    step == last || (cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0)
}

/// Runs `cfg` to `T` and writes `history.csv`, `snap_t<step>.csv` (plus
/// `density_t<step>.csv` on the valid zone in GPE mode) and `meta.json`.
pub fn solve(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    let grid = cfg.grid()?;
    let u0 = cfg.initial_field()?;
    let steps = cfg.steps();
    let start = Instant::now();
    io::write_snapshot(&dir.join("snap_t0.csv"), &grid, &u0)?;
    let m0 = mass(&grid, &u0)?;
    let mut drift: f64 = 0.0;
    let mut m_last = m0;
    let decomposition = osm_core::schwarz::decompose(&grid, cfg.n_sub)?;
    let mut energy_rows = Vec::new();
    let gpe = cfg.gpe_config();
    let zone_grid = match cfg.mode {
        Mode::Gpe => Some(ValidZone::of(&grid).grid(cfg.zone_spacing)?),
        Mode::Nls => None,
    };
    let mut observe = |st: &SimulationState, _: &[f64]| -> osm_core::Result<()> {
        let u = decomposition.glue(&st.fields)?;
        let m = mass(&grid, &u)?;
        drift = drift.max((m - m0).abs() / m0.max(f64::MIN_POSITIVE));
        m_last = m;
        if let Some(zg) = &zone_grid {
            let (e, mu) = energy_and_mu_rotating(&grid, &u, &gpe, st.time)?;
            energy_rows.push(vec![st.step.to_string(), st.time.to_string(), m.to_string(), e.to_string(), mu.to_string()]);
            if due(cfg, st.step, steps) {
                let lab = reconstruct_valid_zone(&u, &grid, st.time, gpe.omega, zg)?;
                write_or_report(io::write_density(&dir.join(format!("density_t{}.csv", st.step)), zg, &lab))?;
            }
        }
        if due(cfg, st.step, steps) {
            write_or_report(io::write_snapshot(&dir.join(format!("snap_t{}.csv", st.step)), &grid, &u))?;
        }
        Ok(())
    };
    let history = match cfg.mode {
        Mode::Nls => {
            let solver = SchwarzSolver::new(cfg.nls_problem()?, cfg.n_sub, cfg.schwarz_config())?;
            let mut state = solver.initial_state(&u0)?;
            let h = solver.run_simulation(&mut state, steps, &mut observe)?;
            if let Some(g) = &state.interface {
                io::write_interface(&dir.join("interface.csv"), g)?;
            }
            h
        }
        Mode::Gpe => gpe_run(&gpe, &cfg.gpe_setup()?, &u0, &mut observe)?.1,
    };
    io::write_history(&dir.join("history.csv"), &history)?;
    if cfg.mode == Mode::Gpe {
        io::write_table(
            &dir.join("energy.csv"),
            "energy",
            &["step", "time", "mass", "energy", "mu"],
            &energy_rows,
        )?;
    }
    let summary = RunSummary {
        steps,
        iterations: history.iterations(),
        mass_initial: m0,
        mass_final: m_last,
        max_relative_mass_drift: drift,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_meta(&dir, "solve", cfg, serde_json::to_value(&summary)?)?;
    Ok(summary)
}

/// Harness IO errors raised inside a solver callback are carried as
/// configuration errors of the core error type.
fn write_or_report(r: Result<()>) -> osm_core::Result<()> {
    r.map_err(|e| osm_core::OsmError::Config(e.to_string()))
}

/// First-step iteration count and wall time of one NLS configuration.
#[derive(Debug, Clone, Serialize)]
pub struct FirstStep {
    pub iterations: usize,
    pub wall_time_s: f64,
    pub history: Vec<f64>,
}

pub fn first_step(cfg: &RunConfig) -> Result<FirstStep> {
    let start = Instant::now();
    let solver = SchwarzSolver::new(cfg.nls_problem()?, cfg.n_sub, cfg.schwarz_config())?;
    let mut state = solver.initial_state(&cfg.initial_field()?)?;
    let history = solver.advance(&mut state)?;
    Ok(FirstStep {
        iterations: history.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
        history,
    })
}

fn both_algorithms(cfg: &RunConfig, tag: &str) -> Result<[FirstStep; 2]> {
    let run = |alg: AlgorithmName| -> Result<FirstStep> {
        let c = RunConfig { algorithm: alg, ..cfg.clone() };
        let r = first_step(&c)?;
        let name = match alg {
            AlgorithmName::Classical => "classical",
            AlgorithmName::Preconditioned => "preconditioned",
        };
        let h = ConvergenceHistory { steps: vec![r.history.clone()] };
        io::write_history(&cfg.output.join(format!("history_{tag}_{name}.csv")), &h)?;
        Ok(r)
    };
    Ok([run(AlgorithmName::Classical)?, run(AlgorithmName::Preconditioned)?])
}

/// Row of an iteration table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRow {
    /// `N`, `p` or `m` depending on the experiment.
    pub parameter: f64,
    pub classical: usize,
    pub preconditioned: usize,
    pub classical_time_s: f64,
    pub preconditioned_time_s: f64,
}

fn write_counts(cfg: &RunConfig, name: &str, column: &str, rows: &[CountRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.parameter.to_string(),
                r.classical.to_string(),
                r.preconditioned.to_string(),
                format!("{:.3}", r.classical_time_s),
                format!("{:.3}", r.preconditioned_time_s),
            ]
        })
        .collect();
    io::write_table(
        &cfg.output.join("table.csv"),
        name,
        &[column, "classical", "preconditioned", "classical_time_s", "preconditioned_time_s"],
        &body,
    )?;
    write_meta(&cfg.output, name, cfg, serde_json::to_value(rows)?)
}

fn count_row(parameter: f64, [c, p]: [FirstStep; 2]) -> CountRow {
    CountRow {
        parameter,
        classical: c.iterations,
        preconditioned: p.iterations,
        classical_time_s: c.wall_time_s,
        preconditioned_time_s: p.wall_time_s,
    }
}

/// First-step iteration counts of both algorithms for every `N` in
/// `cfg.n_list`.
pub fn iteration_table(cfg: &RunConfig) -> Result<Vec<CountRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let c = RunConfig { n_sub: n, ..cfg.clone() };
        rows.push(count_row(n as f64, both_algorithms(&c, &format!("N{n}"))?));
    }
    write_counts(cfg, "table1", "n_sub", &rows)?;
    Ok(rows)
}

/// Counts against the Robin parameter `p` for every entry of `cfg.p_list`.
pub fn p_sweep(cfg: &RunConfig) -> Result<Vec<CountRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &p in &cfg.p_list {
        let c = RunConfig { transmission: Transmission::Robin { p }, ..cfg.clone() };
        rows.push(count_row(p, both_algorithms(&c, &format!("p{p}"))?));
    }
    write_counts(cfg, "psweep", "p", &rows)?;
    Ok(rows)
}

/// Counts against the Padé order `m` for every entry of `cfg.m_list`.
pub fn m_sweep(cfg: &RunConfig) -> Result<Vec<CountRow>> {
    cfg.validate()?;
    let (theta, sum_from_one) = match cfg.transmission {
        Transmission::Pade { theta, sum_from_one, .. } => (theta, sum_from_one),
        Transmission::Robin { .. } => (std::f64::consts::FRAC_PI_4, false),
    };
    let mut rows = Vec::new();
    for &m in &cfg.m_list {
        let c = RunConfig {
            transmission: Transmission::Pade { m, theta, sum_from_one },
            ..cfg.clone()
        };
        rows.push(count_row(m as f64, both_algorithms(&c, &format!("m{m}"))?));
    }
    write_counts(cfg, "msweep", "m", &rows)?;
    Ok(rows)
}

/// Rotating condensate: a GPE run with density snapshots on the valid zone
/// and the energy series.
pub fn bec(cfg: &RunConfig) -> Result<RunSummary> {
    let c = RunConfig { mode: Mode::Gpe, ..cfg.clone() };
    solve(&c)
}
