//! Acceptance criteria, one printed PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). The exit status is zero even
//! when a criterion fails, so known failures stay visible without breaking
//! the test suite; set `FACETSOLVE_ACCEPTANCE_STRICT=1` to turn any failure
//! into a non-zero exit.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use facetsolve_core::diagnostics::{diagnostics_report, lipschitz_ratio, wulff_constant};
use facetsolve_core::energy::{limit_flux, weak_residual, Problem};
use facetsolve_core::grid::{gradient, vector_lp_norm, BallRegion, Grid, ScalarField, VectorField};
use facetsolve_core::integrand::sample::{run_battery, sample_point, SampleRanges};
use facetsolve_core::integrand::{
    e_eps, ep_eps, grad_e_eps, grad_ep_eps, grad_psi_eps, hess_e_eps, hess_ep_eps, hess_psi_eps,
    psi_eps, Epsilon, ModelParams, Point, StructuralConstants, Sym2,
};
use facetsolve_core::solver::{
    continuation_solve, continuation_solve_from, minimality_check, oracle_1d, oracle_1d_full,
    stability_check, ContinuationSchedule, SolveOptions, Solution,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn facet_problem(dim: usize, n: usize, p: f64, beta: f64, f: ScalarField) -> Problem {
    let g = Grid::unit(dim, n).unwrap();
    Problem::new(f, ScalarField::zeros(g), ModelParams::canonical(p, beta, f64::INFINITY).unwrap(), None).unwrap()
}

fn constant_1d(n: usize, p: f64, beta: f64, f: f64) -> Problem {
    let g = Grid::unit(1, n).unwrap();
    facet_problem(1, n, p, beta, ScalarField::constant(g, f))
}

fn sup_diff(a: &VectorField, b: &VectorField) -> f64 {
    a.values().iter().zip(b.values()).fold(0.0f64, |m, (x, y)| m.max((*x - *y).norm()))
}

/// Solutions at each ε of a decreasing list, each warm-started from the
/// previous one.
fn eps_chain(prob: &Problem, eps: &[f64]) -> Vec<Solution> {
    let opts = SolveOptions::default();
    let mut u = prob.initial_guess();
    let mut out = Vec::new();
    for &e in eps {
        let s = continuation_solve_from(prob, &u, &ContinuationSchedule::single(e).unwrap(), &opts).unwrap();
        u = s.u.clone();
        out.push(s);
    }
    out
}

fn criterion_1() -> Outcome {
    const SAMPLES: usize = 100_000;
    let mut cells = Vec::new();
    for p in [1.2, 1.5, 2.0, 3.0, 4.0] {
        for beta in [0.0, 0.1, 1.0] {
            for eps in [1e-6, 1e-3, 1.0] {
                cells.push((p, beta, eps));
            }
        }
    }
    let results: Vec<(usize, usize)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(p, beta, eps))| {
            let params = ModelParams::canonical(p, beta, f64::INFINITY).unwrap();
            let consts = StructuralConstants::calibrate(&params);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let out = run_battery(&mut rng, &params, Epsilon::new(eps).unwrap(), &consts, SAMPLES, SampleRanges::default());
            (out.violations(), out.samples)
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.0).sum();
    Outcome {
        pass: violations == 0,
        detail: format!("{} cells x {SAMPLES} samples, violations={violations}", cells.len()),
    }
}

fn fd_gradient<F: Fn(Point) -> f64>(f: F, z: Point, h: f64) -> Point {
    let mut g = Point::zero(2);
    for i in 0..2 {
        let e = Point::unit(2, i) * h;
        g.set(i, (f(z + e) - f(z - e)) / (2.0 * h));
    }
    g
}

fn fd_hessian<G: Fn(Point) -> Point>(g: G, z: Point, h: f64) -> Sym2 {
    let cols: Vec<Point> = (0..2)
        .map(|i| {
            let e = Point::unit(2, i) * h;
            (g(z + e) - g(z - e)) * (1.0 / (2.0 * h))
        })
        .collect();
    Sym2::from_entries(2, cols[0].get(0), 0.5 * (cols[0].get(1) + cols[1].get(0)), cols[1].get(1))
}

fn frobenius(a: Sym2) -> f64 {
    let (x, y, w) = (a.entry(0, 0), a.entry(0, 1), a.entry(1, 1));
    (x * x + 2.0 * y * y + w * w).sqrt()
}

fn criterion_2() -> Outcome {
    const POINTS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..POINTS {
        let p = [1.2, 1.5, 2.0, 3.0, 4.0][rng.gen_range(0..5)];
        let beta = [0.1, 1.0][rng.gen_range(0..2)];
        let eps = Epsilon::new((rng.gen_range((1e-3f64).ln()..=0.0)).exp()).unwrap();
        let z = sample_point(&mut rng, 2, 1e-2, 1e2);
        let s = (eps.get().powi(2) + z.norm_sq()).sqrt();
        let h = 1e-5 * s;
        let params = ModelParams::canonical(p, beta, f64::INFINITY).unwrap();
        let rel = |a: Point, b: Point| (a - b).norm() / a.norm();
        let rel_h = |a: Sym2, b: Sym2| frobenius(a - b) / frobenius(a);

        worst_g = worst_g
            .max(rel(grad_psi_eps(eps, z), fd_gradient(|w| psi_eps(eps, w), z, h)))
            .max(rel(grad_ep_eps(p, eps, z), fd_gradient(|w| ep_eps(p, eps, w), z, h)))
            .max(rel(grad_e_eps(&params, eps, z), fd_gradient(|w| e_eps(&params, eps, w), z, h)));
        worst_h = worst_h
            .max(rel_h(hess_psi_eps(eps, z), fd_hessian(|w| grad_psi_eps(eps, w), z, h)))
            .max(rel_h(hess_ep_eps(p, eps, z), fd_hessian(|w| grad_ep_eps(p, eps, w), z, h)))
            .max(rel_h(hess_e_eps(&params, eps, z), fd_hessian(|w| grad_e_eps(&params, eps, w), z, h)));
    }
    Outcome {
        pass: worst_g <= 1e-6 && worst_h <= 1e-4,
        detail: format!("{POINTS} points x 3 integrands, worst gradient rel err={worst_g:.2e} (<=1e-6), worst Hessian rel err={worst_h:.2e} (<=1e-4)"),
    }
}

/// First and last cell of the facet mask.
fn facet_bounds(mask: &[bool]) -> Option<(usize, usize)> {
    let first = mask.iter().position(|m| *m)?;
    let last = mask.iter().rposition(|m| *m)?;
    Some((first, last))
}

fn criterion_3() -> Outcome {
    const N: usize = 4096;
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let prob = constant_1d(N, p, 0.1, 1.0);
        let sched = ContinuationSchedule::new(1e-1, 1e-4, 0.1).unwrap();
        let s = continuation_solve(&prob, &sched, &SolveOptions::default()).unwrap();
        let oracle = oracle_1d_full(p, 0.1, prob.source(), 0.0, 0.0).unwrap();

        let flux = limit_flux(&prob, &s.u, &s.z).unwrap();
        let mask: Vec<bool> = flux.values().iter().map(|v| v.norm() <= 0.1).collect();
        let g = prob.grid();
        let exact: Vec<bool> = (0..g.num_cells())
            .map(|c| (g.cell_center(c).get(0) - 0.5).abs() <= 0.1)
            .collect();
        let edge_err = match (facet_bounds(&mask), facet_bounds(&exact), facet_bounds(&oracle.facet_cells(0.1))) {
            (Some(a), Some(b), Some(o)) => {
                let d = |x: usize, y: usize| x.abs_diff(y);
                d(a.0, b.0).max(d(a.1, b.1)).max(d(o.0, b.0)).max(d(o.1, b.1))
            }
            _ => usize::MAX,
        };
        let grad_err = sup_diff(&s.gradient(), &gradient(&oracle.solution.u).unwrap());
        let res = weak_residual(&prob, &s.u, &s.z).unwrap();
        let ok = s.converged && edge_err <= 2 && grad_err <= 1e-2 && res <= 1e-6;
        pass &= ok;
        parts.push(format!(
            "p={p}: edge_err={edge_err} cells, grad_err={grad_err:.2e}, weak_residual={res:.2e}{}",
            if ok { "" } else { " [fail]" }
        ));
    }
    Outcome {
        pass,
        detail: format!("{} (limits: 2 cells, 1e-2, 1e-6)", parts.join("; ")),
    }
}

fn criterion_4() -> Outcome {
    const N: usize = 4096;
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let prob = constant_1d(N, p, 0.1, 1.0);
        let og = gradient(&oracle_1d(p, 0.1, prob.source(), 0.0, 0.0).unwrap().u).unwrap();
        let errs: Vec<f64> = eps_chain(&prob, &eps)
            .iter()
            .map(|s| vector_lp_norm(&s.gradient().sub(&og).unwrap(), p, None).unwrap())
            .collect();
        let mut bumps = 0;
        let mut slack_ok = true;
        for w in errs.windows(2) {
            if w[1] > w[0] {
                bumps += 1;
                slack_ok &= w[1] <= 1.1 * w[0];
            }
        }
        let last = *errs.last().unwrap();
        let ok = bumps <= 1 && slack_ok && last <= 1e-2;
        pass &= ok;
        let list: Vec<String> = errs.iter().map(|e| format!("{e:.1e}")).collect();
        parts.push(format!("p={p}: [{}]{}", list.join(", "), if ok { "" } else { " [fail]" }));
    }
    Outcome {
        pass,
        detail: format!("L^p gradient error per eps level: {} (final <= 1e-2)", parts.join("; ")),
    }
}

fn criterion_5() -> Outcome {
    const N: usize = 128;
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let jobs: Vec<(f64, f64)> = [2.0, 3.0]
        .iter()
        .flat_map(|&p| [1.0, 10.0, 100.0].map(move |a| (p, a)))
        .collect();
    let ratios: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(p, amp)| {
            let g = Grid::unit(2, N).unwrap();
            let prob = facet_problem(2, N, p, 0.1, ScalarField::constant(g, amp));
            let region = BallRegion::centered(&g);
            eps_chain(&prob, &eps)
                .iter()
                .map(|s| {
                    lipschitz_ratio(s, prob.source(), &region, prob.params())
                        .unwrap()
                        .get_num("ratio")
                        .unwrap()
                })
                .collect()
        })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [2.0, 3.0] {
        let all: Vec<f64> = jobs
            .iter()
            .zip(&ratios)
            .filter(|(j, _)| j.0 == p)
            .flat_map(|(_, r)| r.iter().copied())
            .collect();
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().copied().fold(0.0, f64::max);
        let band = hi / lo;
        let ok = all.iter().all(|x| x.is_finite()) && band <= 10.0;
        pass &= ok;
        parts.push(format!("p={p}: ratios in [{lo:.2e}, {hi:.2e}], band={band:.1}x{}", if ok { "" } else { " [fail]" }));
    }
    Outcome {
        pass,
        detail: format!("beta=0.1, N={N}, 4 eps x 3 amplitudes: {} (band <= 10x)", parts.join("; ")),
    }
}

fn criterion_6() -> Outcome {
    let fs = [1.0, 1.1, 1.5];
    let ns = [256, 512, 1024];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let ratios: Vec<f64> = ns
            .iter()
            .map(|&n| {
                let p1 = constant_1d(n, 3.0, 0.1, fs[i]);
                let p2 = constant_1d(n, 3.0, 0.1, fs[j]);
                let s1 = oracle_1d(3.0, 0.1, p1.source(), 0.0, 0.0).unwrap();
                let s2 = oracle_1d(3.0, 0.1, p2.source(), 0.0, 0.0).unwrap();
                stability_check(&p1, &p2, &s1, &s2).unwrap().get_num("ratio").unwrap()
            })
            .collect();
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let spread = hi / lo - 1.0;
        let ok = lo > 0.0 && spread <= 0.25;
        pass &= ok;
        parts.push(format!("f=({},{}): ratio {lo:.4}..{hi:.4}, spread={:.2}%", fs[i], fs[j], 100.0 * spread));
    }
    Outcome {
        pass,
        detail: format!("p=3, N in {{256,512,1024}}: {} (spread <= 25%)", parts.join("; ")),
    }
}

fn criterion_7() -> Outcome {
    let mut problems: Vec<(String, Problem)> = [1.5, 2.0, 3.0]
        .iter()
        .map(|&p| (format!("1D p={p}"), constant_1d(512, p, 0.1, 1.0)))
        .collect();
    let g = Grid::unit(2, 32).unwrap();
    let sine = ScalarField::from_fn(g, |x| 20.0 * (PI * x.get(0)).sin() * (PI * x.get(1)).sin()).unwrap();
    problems.push(("2D p=3".into(), facet_problem(2, 32, 3.0, 0.1, sine)));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::INFINITY;
    let mut converged = true;
    let mut parts = Vec::new();
    for (name, prob) in &problems {
        let sched = ContinuationSchedule::new(1e-1, 1e-5, 0.1).unwrap();
        let s = continuation_solve(prob, &sched, &SolveOptions::default()).unwrap();
        converged &= s.converged;
        let r = minimality_check(prob, &s.u, &[1e-3, 1e-1], 100, 1e-10, &mut rng).unwrap();
        let m = r.get_num("worst_margin").unwrap();
        worst = worst.min(m);
        parts.push(format!("{name}: {m:.2e}"));
    }
    Outcome {
        pass: converged && worst >= -1e-10,
        detail: format!("100 perturbations x 2 magnitudes, worst margin per problem: {} (>= -1e-10)", parts.join(", ")),
    }
}

fn criterion_8() -> Outcome {
    let k1 = wulff_constant(1.0).unwrap();
    let k2 = wulff_constant(2f64.sqrt()).unwrap();
    let closed = (k1 - 2.61803).abs() <= 1e-5 && (k2 - 3.73205).abs() <= 1e-5;

    let mut cases: Vec<(String, Problem)> = [1.5, 2.0, 3.0]
        .iter()
        .map(|&p| (format!("1D p={p}"), constant_1d(1024, p, 0.1, 1.0)))
        .collect();
    for p in [1.5, 2.0, 3.0] {
        let g = Grid::unit(2, 64).unwrap();
        let f = ScalarField::from_fn(g, |x| 20.0 * (PI * x.get(0)).sin() * (PI * x.get(1)).sin()).unwrap();
        cases.push((format!("2D p={p}"), facet_problem(2, 64, p, 0.1, f)));
    }
    let mut failures = Vec::new();
    let mut fk_max = 0.0f64;
    for (name, prob) in &cases {
        let sched = ContinuationSchedule::new(1e-1, 1e-4, 0.1).unwrap();
        let s = continuation_solve(prob, &sched, &SolveOptions::default()).unwrap();
        let region = BallRegion::centered(prob.grid());
        let r = diagnostics_report(prob, &s, &region, 2.0, 8, 6).unwrap();
        fk_max = fk_max.max(r.get_num("fk.fk_norm").unwrap());
        for key in ["wulff.pass", "fk.pass", "degiorgi.chebyshev", "moser.dominated_by_sup"] {
            if r.get_flag(key) != Some(true) {
                failures.push(format!("{name}:{key}"));
            }
        }
    }
    Outcome {
        pass: closed && failures.is_empty(),
        detail: format!(
            "K(1)={k1:.6}, K(sqrt2)={k2:.6}; {} solutions: wulff, fk (max norm {fk_max:.3}), Chebyshev, Moser failures: [{}]",
            cases.len(),
            failures.join(", ")
        ),
    }
}

fn criterion_9() -> Outcome {
    let err = |n: usize| {
        let g = Grid::unit(2, n).unwrap();
        let f = ScalarField::from_fn(g, |x| 2.0 * PI * PI * (PI * x.get(0)).sin() * (PI * x.get(1)).sin()).unwrap();
        let prob = facet_problem(2, n, 2.0, 0.0, f);
        let s = continuation_solve(&prob, &ContinuationSchedule::single(1.0).unwrap(), &SolveOptions::default()).unwrap();
        let exact = ScalarField::from_fn(g, |x| (PI * x.get(0)).sin() * (PI * x.get(1)).sin()).unwrap();
        s.u.axpy(-1.0, &exact).unwrap().max_abs()
    };
    let e: Vec<f64> = [32, 64, 128].iter().map(|&n| err(n)).collect();
    let orders: Vec<f64> = e.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Outcome {
        pass: orders.iter().all(|o| *o >= 1.9),
        detail: format!(
            "Linf errors {:.2e}, {:.2e}, {:.2e}; observed orders {:.3}, {:.3} (>= 1.9)",
            e[0], e[1], e[2], orders[0], orders[1]
        ),
    }
}

fn main() {
    type Criterion = (usize, &'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 9] = [
        (1, "integrand inequality battery", criterion_1, Some(Duration::from_secs(60))),
        (2, "derivative consistency", criterion_2, Some(Duration::from_secs(10))),
        (3, "1D facet oracle equivalence", criterion_3, Some(Duration::from_secs(120))),
        (4, "continuation convergence monitor", criterion_4, None),
        (5, "Lipschitz ratio uniformity", criterion_5, Some(Duration::from_secs(600))),
        (6, "stability ratio across grids", criterion_6, None),
        (7, "minimality of the limit", criterion_7, None),
        (8, "diagnostics identities", criterion_8, None),
        (9, "manufactured Poisson order", criterion_9, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, run, limit) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let out = run();
        let elapsed = t.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = out.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(", limit {} s", l.as_secs()));
        println!(
            "criterion {id} [{}] {name}: {} ({:.1} s{budget})",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("FACETSOLVE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
