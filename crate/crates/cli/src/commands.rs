//! One function per command; each writes its artifacts under the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use signshape::grid::FieldDescriptor;
use signshape::io::{write_field, write_mask};
use signshape::obstacle::{active_set, complementarity_residual, default_floor, solve_obstacle_with, ObstacleOptions};
use signshape::poisson::{default_max_iter, solve_relaxed_with};
use signshape::radial::{optimal_ball_with_volume, CriticalRadius};
use signshape::stochastic::{averaged_cost, barycenter, reduction_gap, sample_ensemble};
use signshape::verify::Preset;
use signshape::{
    containment_check, cost, optimality_residual, optimize_domain, schwarz_rearrange, solve_dirichlet,
    talenti_coefficient, talenti_gap, CapacitaryPotential, DomainMask, Ensemble, Error, RadialProfile, ScalarField,
};

use crate::config::{EnsembleConfig, RunConfig};
use crate::{CliError, Command};

pub struct Context {
    pub out: PathBuf,
    pub config_hash: String,
    pub preset: Option<Preset>,
}

pub fn config_hash(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_summary(&self, command: Command, mut body: Map<String, Value>) -> Result<(), CliError> {
        body.insert("command".into(), json!(format!("{command:?}").to_lowercase()));
        body.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        body.insert("config_hash".into(), json!(self.config_hash));
        let mut w = BufWriter::new(File::create(self.path("summary.json"))?);
        serde_json::to_writer_pretty(&mut w, &body).map_err(|e| CliError::Core(e.into()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("summary bodies are objects"),
    }
}

/// Non-finite numbers are spelled out, since JSON has no literal for them.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn grid_json(c: &RunConfig) -> Value {
    json!({"d": c.grid.d, "side": c.grid.side, "n": c.grid.n})
}

pub fn dispatch(command: Command, config: Option<&RunConfig>, ctx: &Context) -> Result<(), CliError> {
    if command == Command::Verify {
        return verify(ctx);
    }
    let c = config.expect("non-verify commands require a config");
    log::info!("{command:?} on a {}^{} grid, writing to {}", c.grid.n, c.grid.d, ctx.out.display());
    let body = match command {
        Command::Dirichlet => dirichlet(c, ctx)?,
        Command::Obstacle => obstacle(c, ctx)?,
        Command::Optimize => optimize(c, ctx)?,
        Command::Radial => radial(c)?,
        Command::Rearrange => rearrange(c, ctx)?,
        Command::Stochastic => stochastic(c, ctx)?,
        Command::Verify => unreachable!(),
    };
    let mut body = obj(body);
    body.insert("grid".into(), grid_json(c));
    ctx.write_summary(command, body)
}

fn max_iter(c: &RunConfig, grid: &signshape::GridSpec) -> usize {
    c.solver.max_iter.unwrap_or_else(|| default_max_iter(grid))
}

fn dirichlet(c: &RunConfig, ctx: &Context) -> Result<Value, CliError> {
    let grid = c.grid()?;
    let tol = c.tol()?;
    let f = c.f(&grid)?;
    let mu = match &c.mu {
        Some(desc) => {
            let density = signshape::sample_field(desc, &grid).map_err(|e| CliError::Config(format!("mu: {e}")))?;
            CapacitaryPotential::from_density(&density).map_err(|e| CliError::Config(format!("mu: {e}")))?
        }
        None => CapacitaryPotential::from_mask(&c.mask(&grid)?),
    };
    let (u, report) = solve_relaxed_with(&mu, &f, tol, max_iter(c, &grid))?;
    if !report.converged {
        return Err(Error::NotConverged(format!(
            "state solve: residual {:e} after {} iterations",
            report.residual, report.iterations
        ))
        .into());
    }
    write_field(&u, ctx.path("u.csv"))?;
    let domain = mu.finiteness_set();
    write_mask(&domain, ctx.path("mask.csv"))?;
    let cost = match &c.g {
        Some(_) => num(u.inner(&c.g(&grid)?)),
        None => Value::Null,
    };
    Ok(json!({
        "iterations": report.iterations,
        "residual": num(report.residual),
        "converged": report.converged,
        "volume": domain.volume(),
        "cost": cost,
        "u_max": u.max(),
    }))
}

fn obstacle(c: &RunConfig, ctx: &Context) -> Result<Value, CliError> {
    let grid = c.grid()?;
    let tol = c.tol()?;
    let f = c.f(&grid)?;
    let g = c.g(&grid)?;
    if let Some(k) = f.values().iter().position(|&x| x < 0.0) {
        return Err(Error::Precondition(format!(
            "the positivity set is the optimal domain only for f >= 0; f = {} at cell {k}",
            f.get(k)
        ))
        .into());
    }
    let opts = ObstacleOptions {
        tol,
        omega: c.solver.omega,
        max_sweeps: c.solver.max_iter,
    };
    if !(opts.omega > 0.0 && opts.omega < 2.0) {
        return Err(CliError::Config(format!("solver.omega: must lie in (0, 2), got {}", opts.omega)));
    }
    let (v, report) = solve_obstacle_with(&g, None, &opts)?;
    if !report.converged {
        return Err(Error::NotConverged(format!(
            "obstacle solve: residual {:e} after {} sweeps",
            report.residual, report.sweeps
        ))
        .into());
    }
    let floor = c.optimizer.floor.unwrap_or_else(|| default_floor(&g, tol));
    let active = active_set(&v, floor).map_err(|e| CliError::Config(format!("optimizer.floor: {e}")))?;
    let (r1, r2, r3) = complementarity_residual(&v, &g)?;
    write_field(&v, ctx.path("u.csv"))?;
    write_mask(&active, ctx.path("mask.csv"))?;
    Ok(json!({
        "sweeps": report.sweeps,
        "residual": num(report.residual),
        "converged": report.converged,
        "floor": floor,
        "active_volume": active.volume(),
        "active_cells": active.count(),
        "complementarity": {"negativity": r1, "dual_negativity": r2, "product": r3},
    }))
}

fn optimize(c: &RunConfig, ctx: &Context) -> Result<Value, CliError> {
    let grid = c.grid()?;
    let tol = c.tol()?;
    let f = c.f(&grid)?;
    let g = c.g(&grid)?;
    let opts = c.optimizer_options()?;
    let result = optimize_domain(&f, &g, c.vol_bound, &opts)?;
    let (spread, zero_residual) = optimality_residual(&result, &f, &g, tol)?;
    let contained = containment_check(&result.mask, &f, &g, c.vol_bound);
    let (u, _) = solve_dirichlet(&result.mask, &f, tol)?;
    write_field(&u, ctx.path("u.csv"))?;
    write_mask(&result.mask, ctx.path("mask.csv"))?;
    result.write_history_csv(BufWriter::new(File::create(ctx.path("history.csv"))?))?;
    Ok(json!({
        "cost": result.cost_value,
        "volume": result.volume,
        "vol_bound": result.vol_bound,
        "cells": result.mask.count(),
        "saturated": result.saturated,
        "stationarity": result.stationarity,
        "boundary_spread": spread,
        "boundary_zero_residual": zero_residual,
        "containment": contained,
        "steps": result.history.len(),
        "seed": c.optimizer.seed,
    }))
}

fn radial_profile(desc: &FieldDescriptor<f64>) -> Result<RadialProfile, CliError> {
    match desc {
        FieldDescriptor::Constant { c } => Ok(RadialProfile::constant(*c)),
        FieldDescriptor::IndicatorBall {
            radius,
            inside_value,
            outside_value,
            ..
        } => Ok(RadialProfile::indicator(*radius, *inside_value, *outside_value)),
        FieldDescriptor::RadialTable { samples, .. } => {
            RadialProfile::table(samples.clone()).map_err(|e| CliError::Config(format!("g: {e}")))
        }
        _ => Err(CliError::Config(
            "g: radial needs a constant, indicator_ball or radial_table descriptor".into(),
        )),
    }
}

fn radial(c: &RunConfig) -> Result<Value, CliError> {
    let profile = radial_profile(c.g_descriptor()?)?;
    if !(c.vol_bound > 0.0) {
        return Err(CliError::Config(format!("vol_bound: must be positive, got {}", c.vol_bound)));
    }
    let ball = optimal_ball_with_volume(&profile, c.grid.d, c.vol_bound)?;
    let rg = match ball.critical_radius {
        CriticalRadius::Finite(r) => json!(r),
        CriticalRadius::Infinite { .. } => json!("inf"),
    };
    Ok(json!({
        "R_g": rg,
        "R_opt": ball.radius,
        "volume": ball.volume,
        "cost": ball.cost,
        "saturated": ball.saturated,
        "d": c.grid.d,
    }))
}

fn rearrange(c: &RunConfig, ctx: &Context) -> Result<Value, CliError> {
    let grid = c.grid()?;
    let tol = c.tol()?;
    let mask = c.mask(&grid)?;
    if mask.is_empty() {
        return Err(Error::Precondition("rearrange needs a non-empty mask".into()).into());
    }
    let bins = c.rearrange.bins;
    let one = ScalarField::constant(grid, 1.0);
    let (u, _) = solve_dirichlet(&mask, &one, tol)?;
    let star = schwarz_rearrange(&u, bins).map_err(|e| CliError::Config(format!("rearrange.bins: {e}")))?;
    let gap = talenti_gap(&mask, tol, bins)?;
    let coefficient = talenti_coefficient(&mask, tol, bins)?;
    write_field(&u, ctx.path("u.csv"))?;
    write_mask(&mask, ctx.path("mask.csv"))?;
    let mut w = csv::Writer::from_path(ctx.path("profile.csv")).map_err(|e| CliError::Core(e.into()))?;
    w.write_record(["t", "radius"]).map_err(|e| CliError::Core(e.into()))?;
    for (t, r) in star.levels.iter().zip(&star.radii) {
        w.write_record([format!("{t:.16e}"), format!("{r:.16e}")])
            .map_err(|e| CliError::Core(e.into()))?;
    }
    w.flush()?;
    coefficient.write_csv(BufWriter::new(File::create(ctx.path("talenti.csv"))?))?;
    Ok(json!({
        "bins": bins,
        "u_max": star.max_value(),
        "support_radius": star.support_radius(),
        "talenti_gap": gap,
        "talenti_gap_over_h": gap / grid.h(),
        "min_coefficient": num(coefficient.min_a()),
        "coefficient_levels": coefficient.levels.len(),
    }))
}

fn stochastic(c: &RunConfig, ctx: &Context) -> Result<Value, CliError> {
    let grid = c.grid()?;
    let tol = c.tol()?;
    let g = c.g(&grid)?;
    let mask: DomainMask = c.mask(&grid)?;
    let ensemble: Ensemble = match &c.ensemble {
        Some(EnsembleConfig::Manifest(entries)) => Ensemble::from_manifest(grid, entries),
        Some(EnsembleConfig::Sampler(s)) => sample_ensemble(s, &grid),
        None => return Err(CliError::Config("ensemble: missing field `ensemble`".into())),
    }
    .map_err(|e| CliError::Config(format!("ensemble: {e}")))?;
    let bary = barycenter(&ensemble);
    let averaged = averaged_cost(&ensemble, &mask, &g, tol)?;
    let reduced = cost(&mask, &bary, &g, tol)?;
    let gap = reduction_gap(&ensemble, &mask, &g, tol)?;
    let (u, _) = solve_dirichlet(&mask, &bary, tol)?;
    write_field(&u, ctx.path("u.csv"))?;
    write_mask(&mask, ctx.path("mask.csv"))?;
    Ok(json!({
        "members": ensemble.len(),
        "averaged_cost": averaged,
        "barycenter_cost": reduced,
        "reduction_gap": gap,
        "gap_bound": 10.0 * tol * ensemble.mean_norm() * g.l2_norm(),
    }))
}

fn verify(ctx: &Context) -> Result<(), CliError> {
    let preset = ctx.preset.unwrap_or(Preset::Small);
    log::info!("verify at n = {}", preset.n());
    let report = signshape::verify::run(preset)?;
    let body = obj(serde_json::to_value(&report).map_err(|e| CliError::Core(e.into()))?);
    ctx.write_summary(Command::Verify, body)?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
    }
}
