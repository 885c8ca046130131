//! Subcommand implementations.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use erlq::{audit, bounds, eval, model, run_rpg, run_sbrpg, solve_are, RiccatiSolution, RunHistory};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{self, MetaClock};
use crate::svg::{Chart, Series};
use crate::Command;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn dispatch(cmd: Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = cfg.output.dir.clone();
    output::ensure_dir(&dir)?;
    let clock = MetaClock::start(cmd.name());
    match cmd {
        Command::Solve => solve(cfg, &dir)?,
        Command::Eval => evaluate(cfg, &dir)?,
        Command::Rpg => rpg(cfg, &dir)?,
        Command::Sbrpg | Command::PaperExp => sbrpg(cfg, &dir)?,
        Command::Gradcheck => gradcheck(cfg, &dir)?,
        Command::Bounds => bounds_report(cfg, &dir)?,
    }
    let seed = cfg.seed.unwrap_or(crate::config::DEFAULT_SEED);
    output::write_json(&dir.join("meta.json"), &clock.finish(cfg, seed))
}

fn solution(cfg: &ExperimentConfig) -> Result<(erlq::SystemParams, RiccatiSolution), CliError> {
    let p = cfg.system_params()?;
    let sol = solve_are(&p, cfg.solver.are_tol, cfg.solver.max_iter)?;
    Ok((p, sol))
}

#[derive(Debug, Serialize)]
struct RiccatiReport {
    p_star: f64,
    q_star: f64,
    k_star: Vec<f64>,
    sigma_star: Vec<Vec<f64>>,
    f_star: f64,
    s_star: f64,
    iterations: usize,
    residual: f64,
    grad_k_norm: f64,
    grad_sigma_norm: f64,
}

fn solve(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let (p, sol) = solution(cfg)?;
    let gk = eval::grad_k(&p, &sol.k_star, &sol.sigma_star)?;
    let gs = eval::grad_sigma(&p, &sol.k_star, &sol.sigma_star)?;
    let rep = RiccatiReport {
        p_star: sol.p_star,
        q_star: sol.q_star,
        k_star: vec(&sol.k_star),
        sigma_star: rows(&sol.sigma_star),
        f_star: sol.f_star,
        s_star: sol.s_star,
        iterations: sol.iterations,
        residual: sol.residual,
        grad_k_norm: gk.norm(),
        grad_sigma_norm: gs.norm(),
    };
    println!("P* = {}", output::fmt_f64(rep.p_star));
    println!("q* = {}", output::fmt_f64(rep.q_star));
    println!("K* = {:?}", rep.k_star);
    println!("Sigma* = {:?}", rep.sigma_star);
    println!("f* = {}", output::fmt_f64(rep.f_star));
    println!("residual = {:.3e} after {} iterations", rep.residual, rep.iterations);
    output::write_json(&dir.join("riccati.json"), &rep)
}

#[derive(Debug, Serialize)]
struct EvalJson {
    k: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    gamma_v_k: f64,
    v_k: f64,
    p_k: f64,
    q: f64,
    f: f64,
    s: f64,
    e_k: Vec<f64>,
    grad_k: Vec<f64>,
    grad_sigma: Vec<Vec<f64>>,
}

fn evaluate(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let p = cfg.system_params()?;
    let pol = cfg.policy()?;
    let r = erlq::evaluate(&p, &pol)?;
    let out = EvalJson {
        k: vec(&pol.k),
        sigma: rows(&pol.sigma),
        gamma_v_k: p.gamma * model::v_k(&p, &pol.k),
        v_k: r.v_k,
        p_k: r.p_k,
        q: r.q,
        f: r.f,
        s: r.s,
        e_k: vec(&r.e_k),
        grad_k: vec(&r.grad_k),
        grad_sigma: rows(&r.grad_sigma),
    };
    println!("f = {}", output::fmt_f64(out.f));
    println!("S = {}", output::fmt_f64(out.s));
    println!("|grad_K f| = {:.6e}, |grad_Sigma f|_F = {:.6e}", r.grad_k.norm(), r.grad_sigma.norm());
    output::write_json(&dir.join("eval.json"), &out)
}

fn iter_series(h: &RunHistory, every: usize, get: impl Fn(&erlq::RunRecord) -> Option<f64>) -> Vec<(f64, f64)> {
    output::thin(h, every)
        .into_iter()
        .filter_map(|r| get(r).map(|y| (r.iter as f64, y)))
        .collect()
}

fn write_chart(cfg: &ExperimentConfig, path: &Path, chart: Chart) -> Result<(), CliError> {
    if cfg.output.svg {
        output::write_bytes(path, chart.render().as_bytes())?;
    }
    Ok(())
}

fn write_csv(cfg: &ExperimentConfig, path: &Path, h: &RunHistory) -> Result<(), CliError> {
    if cfg.output.csv {
        output::write_history(path, &output::thin(h, cfg.output.record_every))?;
    }
    Ok(())
}

fn rpg(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let p = cfg.system_params()?;
    let start = cfg.policy()?;
    let h = run_rpg(&p, &start, &cfg.rpg_config())?;
    write_csv(cfg, &dir.join("rpg.csv"), &h)?;
    let every = cfg.output.record_every;
    write_chart(
        cfg,
        &dir.join("rpg_gap.svg"),
        Chart {
            title: "Exact policy gradient: optimality gap".into(),
            x_label: "iteration".into(),
            y_label: "f - f*".into(),
            log_y: true,
            series: vec![Series::new("gap", iter_series(&h, every, |r| r.gap))],
        },
    )?;
    let last = h.last().expect("history has the initial record");
    println!(
        "iterations = {} (bound {}), converged = {}",
        h.iterations,
        h.theoretical_iterations
            .map(|n| format!("{n:.1}"))
            .unwrap_or_else(|| "n/a".into()),
        h.converged
    );
    println!("final gap = {}", last.gap.map(output::fmt_f64).unwrap_or_default());
    Ok(())
}

fn sbrpg(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let (p, sol) = solution(cfg)?;
    let start = cfg.policy()?;
    let seed = cfg.seed.unwrap_or(crate::config::DEFAULT_SEED);
    let h = run_sbrpg(&p, &start, &cfg.sbrpg_config(seed), Some(&sol))?;
    write_csv(cfg, &dir.join("sbrpg.csv"), &h)?;
    let every = cfg.output.record_every;
    let f_star: Vec<(f64, f64)> = [0.0, h.iterations as f64].iter().map(|&x| (x, sol.f_star)).collect();
    let charts = [
        (
            "sbrpg_cost.svg",
            Chart {
                title: "Sample-based policy gradient: cost".into(),
                x_label: "iteration".into(),
                y_label: "cost".into(),
                log_y: false,
                series: vec![
                    Series::new("f (exact)", iter_series(&h, every, |r| r.f)),
                    Series::new("f (rollouts)", iter_series(&h, every, |r| r.f_estimate)).dashed(),
                    Series::new("f*", f_star).dashed(),
                ],
            },
        ),
        (
            "sbrpg_relative_gap.svg",
            Chart {
                title: "Relative error of the cost".into(),
                x_label: "iteration".into(),
                y_label: "|f - f*| / f*".into(),
                log_y: true,
                series: vec![Series::new("relative gap", iter_series(&h, every, |r| r.relative_gap.map(f64::abs)))],
            },
        ),
        (
            "sbrpg_k_err.svg",
            Chart {
                title: "Squared error of K".into(),
                x_label: "iteration".into(),
                y_label: "|K - K*|^2".into(),
                log_y: true,
                series: vec![Series::new("K error", iter_series(&h, every, |r| r.k_err_sq))],
            },
        ),
        (
            "sbrpg_sigma_err.svg",
            Chart {
                title: "Squared error of Sigma".into(),
                x_label: "iteration".into(),
                y_label: "|Sigma - Sigma*|_F^2".into(),
                log_y: true,
                series: vec![Series::new("Sigma error", iter_series(&h, every, |r| r.sigma_err_sq))],
            },
        ),
    ];
    for (name, chart) in charts {
        write_chart(cfg, &dir.join(name), chart)?;
    }
    let (first, last) = (h.first().expect("initial record"), h.last().expect("initial record"));
    let show = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into());
    println!("iterations = {}", h.iterations);
    println!("final relative gap = {}", show(last.relative_gap));
    println!("|K - K*|^2: {} -> {}", show(first.k_err_sq), show(last.k_err_sq));
    println!("|Sigma - Sigma*|^2: {} -> {}", show(first.sigma_err_sq), show(last.sigma_err_sq));
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradcheckSummary {
    policies: usize,
    h: f64,
    seed: u64,
    max_rel_err_k: f64,
    max_rel_err_sigma: f64,
}

fn gradcheck(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let p = cfg.system_params()?;
    let seed = cfg.seed.unwrap_or(crate::config::DEFAULT_SEED);
    let pols = audit::random_policies(&p, cfg.gradcheck.policies, seed);
    let rows = audit::gradcheck(&p, &pols, cfg.gradcheck.h)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io {
        path: dir.join("gradcheck.csv").display().to_string(),
        source: std::io::Error::other(e),
    };
    w.write_record([
        "index",
        "grad_k_norm",
        "grad_sigma_norm",
        "abs_err_k",
        "abs_err_sigma",
        "rel_err_k",
        "rel_err_sigma",
    ])
    .map_err(csv_err)?;
    for r in &rows {
        let f = output::fmt_f64;
        w.write_record([
            r.index.to_string(),
            f(r.grad_k_norm),
            f(r.grad_sigma_norm),
            f(r.abs_err_k),
            f(r.abs_err_sigma),
            f(r.rel_err_k),
            f(r.rel_err_sigma),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| csv_err(e.into_error().into()))?;
    output::write_bytes(&dir.join("gradcheck.csv"), &bytes)?;
    let summary = GradcheckSummary {
        policies: rows.len(),
        h: cfg.gradcheck.h,
        seed,
        max_rel_err_k: rows.iter().map(|r| r.rel_err_k).fold(0.0, f64::max),
        max_rel_err_sigma: rows.iter().map(|r| r.rel_err_sigma).fold(0.0, f64::max),
    };
    println!("max relative error: K {:.3e}, Sigma {:.3e}", summary.max_rel_err_k, summary.max_rel_err_sigma);
    output::write_json(&dir.join("gradcheck.json"), &summary)
}

#[derive(Debug, Serialize)]
struct BoundsJson {
    epsilon: f64,
    kappa: f64,
    slack: bool,
    k: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    report: bounds::BoundReport,
}

fn bounds_report(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let (p, sol) = solution(cfg)?;
    let start = cfg.policy()?;
    let rep = bounds::sbrpg_schedule(&p, &start, &sol, cfg.bounds.epsilon, cfg.bounds.kappa, &cfg.bound_options())?;
    let show = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into());
    println!("phi = {}", show(rep.phi));
    println!("N_RPG = {}, N_SB = {}", show(rep.n_rpg), show(rep.n_sb));
    println!("M_K = {}, M_Sigma = {}, M_S = {}", show(rep.m_k), show(rep.m_sigma), show(rep.m_s));
    output::write_json(
        &dir.join("bounds.json"),
        &BoundsJson {
            epsilon: cfg.bounds.epsilon,
            kappa: cfg.bounds.kappa,
            slack: cfg.bounds.slack,
            k: vec(&start.k),
            sigma: rows(&start.sigma),
            report: rep,
        },
    )
}
