//! Executes a resolved configuration and writes its artifacts.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use savif::experiments::{
    example2_state, h1_error, run_spatial_sweep, run_temporal_sweep, step_count, Domain, ManufacturedSetup,
    ManufacturedSolution, SourceKind, SweepResult,
};
use savif::io::Checkpoint;
use savif::stepper::StepDiagnostics;
use savif::{init_state, Params, State};
use serde_json::{json, Value};

use crate::config::{ExperimentKind, InitialData, RunConfig, SourceConfig};

pub const MANIFEST: &str = "manifest.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const CHECKPOINT: &str = "checkpoint.csv";
pub const FAILED_STATE: &str = "failed_state.csv";
pub const ENERGY: &str = "energy.csv";
pub const SWEEP: &str = "sweep.csv";

/// A failed run: the cause plus where to find the last good state.
pub struct RunError {
    pub source: anyhow::Error,
    pub snapshot: Option<PathBuf>,
}

impl<E: Into<anyhow::Error>> From<E> for RunError {
    fn from(e: E) -> Self {
        Self {
            source: e.into(),
            snapshot: None,
        }
    }
}

impl RunError {
    /// Index of the step that failed, when the solver reported one.
    pub fn step(&self) -> Option<usize> {
        self.source
            .chain()
            .find_map(|e| match e.downcast_ref::<savif::Error>() {
                Some(savif::Error::AtStep { step, .. }) => Some(*step),
                _ => None,
            })
    }
}

pub fn execute(cfg: &RunConfig, out: &Path, resume: bool) -> Result<Value, RunError> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cfg.experiment.kind {
        ExperimentKind::Simulate | ExperimentKind::Energy => trajectory(cfg, out, resume),
        ExperimentKind::TemporalSweep | ExperimentKind::SpatialSweep => {
            if resume {
                return Err(anyhow!("--resume applies to simulate and energy runs only").into());
            }
            sweep(cfg, out)
        }
    }
}

pub fn write_manifest(out: &Path, cfg: &RunConfig, outcome: &Result<Value, RunError>) -> Result<()> {
    let mut doc = json!({
        "tool": "savif",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.kind.to_string(),
        "config": cfg,
    });
    match outcome {
        Ok(results) => {
            doc["status"] = json!("ok");
            doc["results"] = results.clone();
        }
        Err(e) => {
            doc["status"] = json!("error");
            doc["error"] = json!({
                "message": format!("{:#}", e.source),
                "step": e.step(),
                "snapshot": e.snapshot.as_ref().map(|p| p.display().to_string()),
            });
        }
    }
    fs::create_dir_all(out)?;
    let text = serde_json::to_string_pretty(&doc)?;
    fs::write(out.join(MANIFEST), text + "\n")?;
    Ok(())
}

fn domain(cfg: &RunConfig) -> Domain<f64> {
    let d = cfg.problem.domain;
    Domain {
        x_lower: d.x_lower,
        y_lower: d.y_lower,
        x_extent: d.x_extent,
        y_extent: d.y_extent,
    }
}

fn problem(cfg: &RunConfig) -> Result<(Params, State, ManufacturedSolution<f64>)> {
    let p = &cfg.problem;
    let grid = domain(cfg).grid(p.n)?;
    let sol = ManufacturedSolution::new(p.alpha, p.beta);
    let params = Params::new(&grid, p.alpha, p.beta, p.c0)?;
    let params = match p.source {
        SourceConfig::None => params,
        SourceConfig::Manufactured => params.with_source(Arc::new(sol)),
        SourceConfig::ManufacturedGrid => params.with_source(Arc::new(sol.grid_source(&grid))),
    };
    let state = match p.initial {
        InitialData::Example1 => init_state(&params, |x, y| sol.u0(x, y), |x, y| sol.u1(x, y))?,
        InitialData::Example2 => example2_state(&params)?,
    };
    Ok((params, state, sol))
}

fn write_diagnostics(path: &Path, rows: &[StepDiagnostics<f64>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "n,t,E,r,linf_u,predictor_iterations")?;
    for d in rows {
        let it = d.predictor_iterations.map(|i| i.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{it}",
            d.n, d.t, d.energy, d.r, d.linf_u
        )?;
    }
    w.flush()?;
    Ok(())
}

fn read_diagnostics(path: &Path) -> Result<Vec<StepDiagnostics<f64>>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate().skip(1) {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            bail!("{}:{}: expected 6 columns", path.display(), i + 1);
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse()
                .with_context(|| format!("{}:{}: bad number `{}`", path.display(), i + 1, f[k]))
        };
        rows.push(StepDiagnostics {
            n: f[0]
                .parse()
                .with_context(|| format!("{}:{}: bad step", path.display(), i + 1))?,
            t: num(1)?,
            energy: num(2)?,
            r: num(3)?,
            linf_u: num(4)?,
            predictor_iterations: if f[5].is_empty() { None } else { Some(f[5].parse()?) },
        });
    }
    Ok(rows)
}

fn trajectory(cfg: &RunConfig, out: &Path, resume: bool) -> Result<Value, RunError> {
    let (params, initial, sol) = problem(cfg)?;
    let tau = cfg.time.tau;
    let total = step_count(tau, cfg.time.t_final)?;
    let mut stepper = cfg.scheme.name.build(&params, tau, cfg.scheme.predictor.options())?;
    let ckpt_path = out.join(CHECKPOINT);
    let diag_path = out.join(DIAGNOSTICS);

    let (mut state, start, mut rows) = if resume {
        let c =
            Checkpoint::load(&ckpt_path, params.grid()).with_context(|| format!("loading {}", ckpt_path.display()))?;
        if c.step > total {
            return Err(anyhow!("checkpoint is at step {} but the run has only {total} steps", c.step).into());
        }
        let rows: Vec<_> = read_diagnostics(&diag_path)?
            .into_iter()
            .filter(|d| d.n <= c.step)
            .collect();
        if rows.len() != c.step + 1 || rows.iter().enumerate().any(|(i, d)| d.n != i) {
            return Err(anyhow!("{} does not cover steps 0..={}", diag_path.display(), c.step).into());
        }
        stepper.restore_history(c.history);
        (c.state, c.step, rows)
    } else {
        let d0 = StepDiagnostics::of(0, &initial, &params, None)?;
        (initial, 0, vec![d0])
    };

    let every = cfg.io.checkpoint_every;
    for n in start + 1..=total {
        match stepper.step(&state, &params) {
            Ok(next) => state = next,
            Err(e) => {
                let snap = out.join(FAILED_STATE);
                let saved = Checkpoint {
                    step: n - 1,
                    state: state.clone(),
                    history: stepper.history().cloned(),
                }
                .save(&snap);
                write_diagnostics(&diag_path, &rows)?;
                return Err(RunError {
                    source: anyhow::Error::new(savif::Error::AtStep {
                        step: n,
                        source: Box::new(e),
                    }),
                    snapshot: saved.ok().map(|_| snap),
                });
            }
        }
        rows.push(StepDiagnostics::of(n, &state, &params, stepper.predictor_iterations())?);
        if every > 0 && n % every == 0 && n < total {
            Checkpoint {
                step: n,
                state: state.clone(),
                history: stepper.history().cloned(),
            }
            .save(&ckpt_path)?;
            write_diagnostics(&diag_path, &rows)?;
        }
    }
    Checkpoint {
        step: total,
        state: state.clone(),
        history: stepper.history().cloned(),
    }
    .save(&ckpt_path)?;
    write_diagnostics(&diag_path, &rows)?;

    let e0 = rows[0].energy;
    let re = |d: &StepDiagnostics<f64>| ((d.energy - e0) / e0).abs();
    let max_re = rows.iter().map(re).fold(0.0, f64::max);
    let last = rows.last().expect("at least the initial row");
    let mut results = json!({
        "steps": total,
        "resumed_from": if resume { Some(start) } else { None },
        "t_final": last.t,
        "initial_energy": e0,
        "final_energy": last.energy,
        "max_re": max_re,
        "min_denominator": stepper.min_denominator(),
    });
    if cfg.experiment.kind == ExperimentKind::Energy {
        let mut w = BufWriter::new(File::create(out.join(ENERGY))?);
        writeln!(w, "n,t,E,RE")?;
        for d in &rows {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e}", d.n, d.t, d.energy, re(d))?;
        }
        w.flush()?;
    }
    if cfg.problem.source != SourceConfig::None && cfg.problem.initial == InitialData::Example1 {
        let exact = sol.exact_state(params.grid(), tau * total as f64, cfg.problem.c0)?;
        let err = h1_error(&state, &exact, cfg.problem.c0)?;
        results["h1_error"] = json!(err.h1_err);
        results["l2_error_v"] = json!(err.l2_err_v);
        results["r_error"] = json!(err.r_err);
    }
    Ok(results)
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<Value, RunError> {
    let p = &cfg.problem;
    let e = &cfg.experiment;
    let temporal = e.kind == ExperimentKind::TemporalSweep;
    let setup = ManufacturedSetup {
        alpha: p.alpha,
        beta: p.beta,
        c0: p.c0,
        domain: domain(cfg),
        source: if temporal && e.grid_source {
            SourceKind::GridConsistent
        } else {
            SourceKind::Continuous
        },
        predictor: cfg.scheme.predictor.options(),
    };
    let scheme = cfg.scheme.name;
    let res: SweepResult = if temporal {
        run_temporal_sweep(scheme, &setup, p.n, &e.taus, cfg.time.t_final)?
    } else {
        run_spatial_sweep(scheme, &setup, cfg.time.tau, &e.ns, cfg.time.t_final)?
    };
    let mut w = BufWriter::new(File::create(out.join(SWEEP))?);
    res.write_csv(&mut w)?;
    w.flush()?;
    let rows: Vec<Value> = res
        .rows
        .iter()
        .map(|r| {
            json!({
                (if temporal { "tau" } else { "N" }): r.param,
                "h1_err": r.h1_err,
                "l2_err_v": r.l2_err_v,
                "r_err": r.r_err,
                "energy_drift": r.energy_drift,
                "seconds": r.seconds,
                "at_floor": r.at_floor(),
            })
        })
        .collect();
    Ok(json!({
        "scheme": scheme.name(),
        "order": scheme.order(),
        "source": if setup.source == SourceKind::GridConsistent { "manufactured_grid" } else { "manufactured" },
        "slope": res.slope(),
        "reduction_factors": res.reduction_factors(),
        "min_denominator": res.min_denominator(),
        "rows": rows,
    }))
}
