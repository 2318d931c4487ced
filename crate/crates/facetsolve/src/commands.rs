//! The `solve`, `verify`, `sweep` and `report` subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use facetsolve_core::diagnostics::{
    compute_k, de_giorgi_monitor, default_levels, diagnostics_report, lipschitz_ratio, moser_monitor,
    truncation_state, MoserSchedule,
};
use facetsolve_core::energy::{weak_residual, Problem};
use facetsolve_core::grid::{gradient, vector_sup_norm, Grid};
use facetsolve_core::integrand::sample::{run_battery, SampleRanges};
use facetsolve_core::integrand::{Epsilon, StructuralConstants};
use facetsolve_core::solver::{
    continuation_solve, continuation_solve_from, minimality_check, oracle_1d_full, stability_check,
    Solution,
};
use facetsolve_core::{Report, Value};
use log::{error, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{dedup_axis, ExperimentConfig, LoadedConfig};
use crate::csv_io::{fmt_f64, write_cell_fields, write_node_field, write_table};

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass = 0,
    ConfigError = 1,
    NonConvergence = 2,
    VerificationFailure = 3,
}

impl Outcome {
    pub fn code(self) -> u8 {
        self as u8
    }

    fn worst(self, other: Outcome) -> Outcome {
        if other.code() > self.code() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Verify,
    Sweep,
    Report,
}

/// Loads the configuration, applies overrides and runs `cmd`. Errors are
/// logged; the return value is the exit status.
pub fn run(cmd: Command, config: &Path, out: Option<&Path>, seed: Option<u64>) -> Outcome {
    let mut loaded = match ExperimentConfig::load(config) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return Outcome::ConfigError;
        }
    };
    if let Some(s) = seed {
        loaded.config.seed = s;
        loaded.hash = loaded.config.hash();
    }
    let out_dir = match out
        .map(Path::to_path_buf)
        .or_else(|| loaded.config.output_dir.as_ref().map(|d| loaded.base.join(d)))
    {
        Some(d) => d,
        None => {
            error!("no output directory: pass --out or set output_dir");
            return Outcome::ConfigError;
        }
    };
    match run_loaded(cmd, &loaded, &out_dir) {
        Ok(o) => o,
        Err(e) => {
            error!("{e:#}");
            match e.downcast_ref::<facetsolve_core::Error>() {
                Some(facetsolve_core::Error::InvalidParameter(_)) => Outcome::ConfigError,
                _ => Outcome::NonConvergence,
            }
        }
    }
}

/// Runs `cmd` on an already parsed configuration, writing into `out`.
pub fn run_loaded(cmd: Command, loaded: &LoadedConfig, out: &Path) -> anyhow::Result<Outcome> {
    let ctx = Run {
        cfg: loaded.config.clone(),
        base: loaded.base.clone(),
        hash: loaded.hash.clone(),
        out: out.to_path_buf(),
    };
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    match cmd {
        Command::Solve => solve(&ctx),
        Command::Verify => verify(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::Report => report(&ctx),
    }
}

struct Run {
    cfg: ExperimentConfig,
    base: PathBuf,
    hash: String,
    out: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn problem(&self, n: usize, amplitude: f64) -> anyhow::Result<Problem> {
        let grid = Grid::unit(self.cfg.dim, n)?;
        let f = self.cfg.source.build(grid, &self.base)?.map(|v| amplitude * v);
        let b = self.cfg.boundary.build(grid, &self.base)?;
        Ok(Problem::new(f, b, self.cfg.params()?, None)?)
    }

    fn write_text(&self, name: &str, body: &str) -> anyhow::Result<()> {
        let text = format!("# config_hash={}\n{body}", self.hash);
        std::fs::write(self.path(name), text).with_context(|| format!("cannot write {name}"))
    }
}

fn boundary_ends(prob: &Problem) -> (f64, f64) {
    let v = prob.boundary().values();
    (v[0], v[v.len() - 1])
}

/// `max |∇u − ∇u_oracle|` for 1D problems.
fn oracle_error(prob: &Problem, sol: &Solution) -> anyhow::Result<Option<f64>> {
    if prob.grid().dim() != 1 {
        return Ok(None);
    }
    let (a, b) = boundary_ends(prob);
    let o = oracle_1d_full(prob.params().p, prob.params().beta, prob.source(), a, b)?;
    let g = sol.gradient();
    let og = gradient(&o.solution.u)?;
    let err = g
        .values()
        .iter()
        .zip(og.values())
        .fold(0.0f64, |m, (x, y)| m.max((*x - *y).norm()));
    Ok(Some(err))
}

fn summary(prob: &Problem, sol: &Solution) -> anyhow::Result<Report> {
    let mut r = Report::new();
    r.num("eps_final", sol.eps_final)
        .int("iterations", sol.iterations as i64)
        .num("residual", sol.residual())
        .num("energy", sol.energy())
        .num("residual_floor", sol.residual_floor)
        .num("weak_residual", weak_residual(prob, &sol.u, &sol.z)?)
        .num("sup_z", vector_sup_norm(&sol.z, None)?);
    if let Some(e) = oracle_error(prob, sol)? {
        r.num("oracle_grad_error", e);
    }
    r.flag("converged", sol.converged);
    Ok(r)
}

fn write_solution(ctx: &Run, prob: &Problem, sol: &Solution) -> anyhow::Result<Report> {
    write_node_field(&ctx.path("u.csv"), &ctx.hash, "u", &sol.u)?;
    write_cell_fields(&ctx.path("cells.csv"), &ctx.hash, &sol.u, &sol.z)?;
    let rows: Vec<Vec<String>> = sol
        .levels
        .iter()
        .map(|l| {
            vec![
                fmt_f64(l.eps),
                l.iterations.to_string(),
                fmt_f64(l.residual),
                fmt_f64(l.energy),
                fmt_f64(l.warm_start_energy),
                l.cauchy_increment.map(fmt_f64).unwrap_or_default(),
                l.converged.to_string(),
            ]
        })
        .collect();
    write_table(
        &ctx.path("levels.csv"),
        &ctx.hash,
        &["eps", "iterations", "residual", "energy", "warm_start_energy", "cauchy_increment", "converged"],
        &rows,
    )?;
    let s = summary(prob, sol)?;
    ctx.write_text("summary.txt", &s.to_string())?;
    Ok(s)
}

fn solve_problem(ctx: &Run, prob: &Problem) -> anyhow::Result<Solution> {
    let t = Instant::now();
    let sol = continuation_solve(prob, &ctx.cfg.schedule()?, &ctx.cfg.solver.options())?;
    info!(
        "solved n={} eps={:e}: {} iterations, residual {:e}, converged={} ({:.2?})",
        prob.grid().cells_per_axis(),
        sol.eps_final,
        sol.iterations,
        sol.residual(),
        sol.converged,
        t.elapsed()
    );
    Ok(sol)
}

fn convergence(sol: &Solution) -> Outcome {
    if sol.converged {
        Outcome::Pass
    } else {
        warn!("solver did not converge; the last iterate was written");
        Outcome::NonConvergence
    }
}

fn solve(ctx: &Run) -> anyhow::Result<Outcome> {
    let prob = ctx.problem(ctx.cfg.n, 1.0)?;
    let sol = solve_problem(ctx, &prob)?;
    write_solution(ctx, &prob, &sol)?;
    if ctx.cfg.diagnostics.enabled {
        let d = &ctx.cfg.diagnostics;
        let region = ctx.cfg.region(prob.grid())?;
        let r = diagnostics_report(&prob, &sol, &region, d.chi, d.moser_steps, d.levels)?;
        ctx.write_text("diagnostics.txt", &r.to_string())?;
    }
    Ok(convergence(&sol))
}

fn report(ctx: &Run) -> anyhow::Result<Outcome> {
    let prob = ctx.problem(ctx.cfg.n, 1.0)?;
    let sol = solve_problem(ctx, &prob)?;
    write_solution(ctx, &prob, &sol)?;
    let d = &ctx.cfg.diagnostics;
    let params = prob.params();
    let region = ctx.cfg.region(prob.grid())?;
    let r = diagnostics_report(&prob, &sol, &region, d.chi, d.moser_steps, d.levels)?;
    ctx.write_text("diagnostics.txt", &r.to_string())?;

    let k = compute_k(prob.source(), params.p, params.q, &region)?;
    let state = truncation_state(&sol, prob.source(), k, params.p)?;
    let schedule = MoserSchedule::new(params.p, d.chi, d.theta, region.radius, d.moser_steps)?;
    let moser = moser_monitor(&state, &schedule, &region)?;
    let rows: Vec<Vec<String>> = moser
        .rows
        .iter()
        .map(|m| {
            vec![
                m.step.to_string(),
                fmt_f64(m.gamma),
                fmt_f64(m.radius),
                fmt_f64(m.norm),
                fmt_f64(m.sup),
                fmt_f64(m.bound),
                fmt_f64(m.amplification),
            ]
        })
        .collect();
    write_table(
        &ctx.path("moser.csv"),
        &ctx.hash,
        &["step", "gamma", "radius", "norm", "sup", "bound", "amplification"],
        &rows,
    )?;
    let levels = default_levels(&state, &region, d.levels)?;
    let radii: Vec<f64> = [1.0, 0.75, 0.5].iter().map(|s| s * region.radius).collect();
    let dg = de_giorgi_monitor(&state, &region, &levels, &radii)?;
    let rows: Vec<Vec<String>> = dg
        .rows
        .iter()
        .map(|l| vec![fmt_f64(l.level), fmt_f64(l.radius), fmt_f64(l.measure), fmt_f64(l.v_sq_integral)])
        .collect();
    write_table(&ctx.path("degiorgi.csv"), &ctx.hash, &["level", "radius", "measure", "v_sq_integral"], &rows)?;

    let mut out = convergence(&sol);
    if !r.passed() {
        error!("diagnostics failed: {}", r.failures().join(", "));
        out = out.worst(Outcome::VerificationFailure);
    }
    Ok(out)
}

/// Solves at every ε of `eps` (largest first), warm-starting each from the
/// previous one. Returns the solutions in the order of `eps`.
fn eps_path(ctx: &Run, prob: &Problem, eps: &[f64]) -> anyhow::Result<Vec<Solution>> {
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&a, &b| eps[b].total_cmp(&eps[a]));
    let opts = ctx.cfg.solver.options();
    let mut u = prob.initial_guess();
    let mut prev_eps = f64::INFINITY;
    let mut out: Vec<Option<Solution>> = vec![None; eps.len()];
    for i in order {
        let e = eps[i];
        let sched = if prev_eps.is_finite() {
            facetsolve_core::solver::ContinuationSchedule::new(prev_eps, e, ctx.cfg.eps.rho)?
        } else {
            ctx.cfg.schedule_to(e)?
        };
        let s = continuation_solve_from(prob, &u, &sched, &opts)?;
        u = s.u.clone();
        prev_eps = e;
        out[i] = Some(s);
    }
    Ok(out.into_iter().map(|s| s.expect("every index visited")).collect())
}

fn verify(ctx: &Run) -> anyhow::Result<Outcome> {
    let cfg = &ctx.cfg;
    let v = &cfg.verify;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut r = Report::new();
    let params = cfg.params()?;

    let consts = StructuralConstants::calibrate(&params);
    for (i, &e) in v.battery_eps.iter().enumerate() {
        let out = run_battery(&mut rng, &params, Epsilon::new(e)?, &consts, v.samples, SampleRanges::default());
        info!("battery eps={e:e}: {} violations", out.violations());
        r.num(&format!("battery_{i}.eps"), e)
            .int(&format!("battery_{i}.violations"), out.violations() as i64)
            .flag(&format!("battery_{i}.pass"), out.violations() == 0);
    }

    let prob = ctx.problem(cfg.n, 1.0)?;
    let mut sol = solve_problem(ctx, &prob)?;
    if let Some(s) = v.inject_z_scale {
        warn!("test hook: scaling Z by {s}");
        for z in sol.z.values_mut() {
            *z = *z * s;
        }
    }
    let sup_z = vector_sup_norm(&sol.z, None)?;
    r.num("z.sup", sup_z).flag("z.bound", sup_z <= 1.0);
    let grad = sol.gradient();
    let mut misaligned = 0i64;
    for (z, du) in sol.z.values().iter().zip(grad.values()) {
        let n = du.norm();
        if n > 10.0 * sol.eps_final && (*z - *du * (1.0 / n)).norm() > 0.01 {
            misaligned += 1;
        }
    }
    r.int("z.misaligned_cells", misaligned).flag("z.alignment", misaligned == 0);
    match weak_residual(&prob, &sol.u, &sol.z) {
        Ok(w) => r.num("weak_residual", w),
        Err(e) => r.text("weak_residual", &e.to_string()),
    };

    let region = cfg.region(prob.grid())?;
    let d = &cfg.diagnostics;
    r.merge("diag", &diagnostics_report(&prob, &sol, &region, d.chi, d.moser_steps, d.levels)?);

    let m = minimality_check(&prob, &sol.u, &v.perturbation_magnitudes, v.perturbations, 1e-10, &mut rng)?;
    r.merge("minimality", &m);

    for (i, &factor) in v.stability_factors.iter().enumerate() {
        let other = prob.with_source(prob.source().map(|x| factor * x))?;
        let s2 = solve_problem(ctx, &other)?;
        let st = stability_check(&prob, &other, &sol, &s2)?;
        r.num(&format!("stability_{i}.factor"), factor);
        r.merge(&format!("stability_{i}"), &st);
    }

    let (eps, _) = dedup_axis(&cfg.sweep.eps);
    let (amps, _) = dedup_axis(&cfg.sweep.amplitude);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let largest = eps.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0);
    let smallest = eps.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|x| x.0).unwrap_or(0);
    for (ai, &amp) in amps.iter().enumerate() {
        let p = ctx.problem(cfg.n, amp)?;
        let sols = eps_path(ctx, &p, &eps)?;
        let ratios: Vec<f64> = sols
            .iter()
            .map(|s| lipschitz_ratio(s, p.source(), &region, p.params()).map(|x| x.get_num("ratio").unwrap_or(f64::NAN)))
            .collect::<Result<_, _>>()?;
        for &x in &ratios {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let (first, last) = (ratios[largest], ratios[smallest]);
        let ok = ratios.iter().all(|x| x.is_finite()) && last <= v.lipschitz_growth * first.max(f64::MIN_POSITIVE);
        r.num(&format!("lipschitz_{ai}.amplitude"), amp)
            .num(&format!("lipschitz_{ai}.ratio_max_eps"), first)
            .num(&format!("lipschitz_{ai}.ratio_min_eps"), last)
            .flag(&format!("lipschitz_{ai}.bounded"), ok);
    }
    r.num("lipschitz.ratio_min", lo).num("lipschitz.ratio_max", hi);
    if lo > 0.0 {
        r.num("lipschitz.band", hi / lo);
    }

    let failures: Vec<String> = r.failures().iter().map(|s| s.to_string()).collect();
    r.text("failed", &failures.join(","));
    ctx.write_text("verify.txt", &r.to_string())?;
    let mut out = convergence(&sol);
    if !failures.is_empty() {
        error!("verification failed: {}", failures.join(", "));
        out = out.worst(Outcome::VerificationFailure);
    }
    Ok(out)
}

/// One row of the sweep table.
#[derive(Debug, Clone)]
struct SweepRow {
    n: usize,
    eps: f64,
    amplitude: f64,
    result: Result<(Solution, Report), String>,
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "n",
    "eps",
    "amplitude",
    "converged",
    "iterations",
    "residual",
    "energy",
    "weak_residual",
    "lipschitz_ratio",
    "wulff_violations",
    "fk_norm",
    "oracle_grad_error",
    "error",
];

fn sweep_run(ctx: &Run, n: usize, eps: f64, amplitude: f64) -> anyhow::Result<(Solution, Report)> {
    let prob = ctx.problem(n, amplitude)?;
    let sol = continuation_solve(&prob, &ctx.cfg.schedule_to(eps)?, &ctx.cfg.solver.options())?;
    let region = ctx.cfg.region(prob.grid())?;
    let d = &ctx.cfg.diagnostics;
    let mut r = summary(&prob, &sol)?;
    r.merge("diag", &diagnostics_report(&prob, &sol, &region, d.chi, d.moser_steps, d.levels)?);
    Ok((sol, r))
}

fn sweep(ctx: &Run) -> anyhow::Result<Outcome> {
    let cfg = &ctx.cfg;
    let axis_n = if cfg.sweep.n.is_empty() { vec![cfg.n] } else { cfg.sweep.n.clone() };
    let (ns, dn) = dedup_axis(&axis_n);
    let (eps, de) = dedup_axis(&cfg.sweep.eps);
    let (amps, da) = dedup_axis(&cfg.sweep.amplitude);
    for (name, dropped) in [("n", dn.iter().map(|x| *x as f64).collect::<Vec<_>>()), ("eps", de), ("amplitude", da)] {
        if !dropped.is_empty() {
            warn!("sweep axis {name}: dropped duplicate values {dropped:?}");
        }
    }
    let mut jobs = Vec::new();
    for &n in &ns {
        for &a in &amps {
            for &e in &eps {
                jobs.push((n, e, a));
            }
        }
    }
    info!("sweep: {} runs", jobs.len());
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(n, e, a)| SweepRow {
            n,
            eps: e,
            amplitude: a,
            result: sweep_run(ctx, n, e, a).map_err(|err| format!("{err:#}")),
        })
        .collect();

    let mut table = Vec::with_capacity(rows.len());
    let mut failed = 0usize;
    for row in &rows {
        let mut cells = vec![row.n.to_string(), fmt_f64(row.eps), fmt_f64(row.amplitude)];
        match &row.result {
            Ok((sol, r)) => {
                let num = |k: &str| match r.get(k) {
                    Some(Value::Num(x)) => fmt_f64(*x),
                    Some(v) => v.to_string(),
                    None => String::new(),
                };
                cells.push(sol.converged.to_string());
                cells.push(sol.iterations.to_string());
                cells.push(num("residual"));
                cells.push(num("energy"));
                cells.push(num("weak_residual"));
                cells.push(num("diag.lipschitz.ratio"));
                cells.push(num("diag.wulff.violations"));
                cells.push(num("diag.fk.fk_norm"));
                cells.push(num("oracle_grad_error"));
                cells.push(String::new());
            }
            Err(msg) => {
                failed += 1;
                cells.extend(std::iter::repeat(String::new()).take(9));
                cells.push(msg.replace(['\n', ','], " "));
            }
        }
        table.push(cells);
    }
    write_table(&ctx.path("sweep.csv"), &ctx.hash, &SWEEP_COLUMNS, &table)?;
    let mut s = Report::new();
    s.int("runs", rows.len() as i64).int("failed", failed as i64);
    ctx.write_text("summary.txt", &s.to_string())?;
    if failed > 0 {
        error!("{failed} sweep runs failed");
        return Ok(Outcome::NonConvergence);
    }
    Ok(Outcome::Pass)
}
