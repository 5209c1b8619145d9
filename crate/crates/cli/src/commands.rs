//! The experiment subcommands: orchestration, CSV emission, and SVG plots.
//!
//! Every command is a deterministic function of (config, seed): cell
//! seeds are derived from the global seed, aggregation is a pure fold,
//! and files are written once after all computation finishes.

use std::path::{Path, PathBuf};

use replearn::bounds::{bound_report, BoundInputs};
use replearn::evaluate::{
    gap_probability_mc, learning_surface_cells, perfect_trunk, representation_errors,
    transfer_curves, true_error_tasks, FrozenTrunk, SurfaceCell,
};
use replearn::optimizer::train_composite;
use replearn::seed::derive_seed;
use replearn::CompositeSpec;

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::model::ModelFile;
use crate::svg;

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| CliError::io(path, e))
}

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Runs the learning-surface experiment and emits `surface.csv` plus a
/// heatmap of the mean true error over the (n, m) grid.
pub fn cmd_surface(config: &Config, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let cells = run_surface(config)?;
    let mut csv = String::from("n,m,trial,train_loss,true_error,converged\n");
    for cell in &cells {
        let p = &cell.point;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p.n,
            p.m,
            p.trial,
            p.train_loss,
            p.true_error,
            fmt_bool(p.converged)
        ));
    }
    write_text(&out.join("surface.csv"), &csv)?;

    // Mean true error per grid cell, trials averaged, NaN cells skipped.
    let s = &config.surface;
    let mut grid = vec![vec![f64::NAN; s.n_values.len()]; s.m_values.len()];
    for (mi, &m) in s.m_values.iter().enumerate() {
        for (ni, &n) in s.n_values.iter().enumerate() {
            let vals: Vec<f64> = cells
                .iter()
                .filter(|c| c.point.n == n && c.point.m == m && !c.point.true_error.is_nan())
                .map(|c| c.point.true_error)
                .collect();
            if !vals.is_empty() {
                grid[mi][ni] = vals.iter().sum::<f64>() / vals.len() as f64;
            }
        }
    }
    let svg = svg::heatmap(
        "Mean true error over the (n, m) grid",
        "n (tasks)",
        "m (examples per task)",
        &s.n_values,
        &s.m_values,
        &grid,
        0.25,
    );
    write_text(&out.join("surface.svg"), &svg)?;
    println!("surface: {} cells -> {}", cells.len(), out.join("surface.csv").display());
    Ok(())
}

fn run_surface(config: &Config) -> Result<Vec<SurfaceCell>> {
    let env = config.environment()?;
    let trunk = config.trunk_spec()?;
    let head = config.head_spec()?;
    let cfg = config.train_config();
    let s = &config.surface;
    Ok(learning_surface_cells(&env, &trunk, &head, &s.n_values, &s.m_values, s.trials, &cfg)?)
}

/// Extracts trunks from successful surface cells, scores their
/// representation errors, and emits `rep_error.csv` plus error curves
/// over n. With `inject_perfect`, the analytic reference trunk is added
/// as a row with `n_source = 0`.
pub fn cmd_reperror(config: &Config, out: &Path, inject_perfect: bool) -> Result<()> {
    ensure_out_dir(out)?;
    let env = config.environment()?;
    let head = config.head_spec()?;
    let trunk_spec = config.trunk_spec()?;
    let cfg = config.train_config();
    let cells = run_surface(config)?;

    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    if inject_perfect {
        let reference = perfect_trunk(&env)?;
        let rep = representation_errors(&reference, &head, &env, &cfg.with_seed(derive_seed(cfg.seed, &[9])))?;
        rows.push((0, 0, rep.mean, rep.sup));
    }
    let mut successful = 0usize;
    for (cell_index, cell) in cells.iter().enumerate() {
        let Some(params) = &cell.params else { continue };
        if !(cell.point.true_error < config.surface.success_threshold) {
            continue;
        }
        successful += 1;
        let frozen = FrozenTrunk { spec: trunk_spec.clone(), params: params.trunk.clone() };
        let rep_cfg = cfg.with_seed(derive_seed(cfg.seed, &[8, cell_index as u64]));
        let rep = representation_errors(&frozen, &head, &env, &rep_cfg)?;
        rows.push((cell.point.n, cell_index, rep.mean, rep.sup));
    }
    if successful == 0 {
        eprintln!(
            "warning: no cell reached true error below {}; rep_error.csv carries no measured rows",
            config.surface.success_threshold
        );
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut csv = String::from("n_source,sample_id,mean_rep_error,sup_rep_error\n");
    for (n, id, mean, sup) in &rows {
        csv.push_str(&format!("{n},{id},{mean},{sup}\n"));
    }
    write_text(&out.join("rep_error.csv"), &csv)?;

    // Curves over n: mean of the mean errors, max of the sup errors.
    let mut ns: Vec<usize> = rows.iter().map(|r| r.0).collect();
    ns.sort_unstable();
    ns.dedup();
    let mean_curve: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.0 == n).map(|r| r.2).collect();
            (n as f64, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let sup_curve: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            (n as f64, rows.iter().filter(|r| r.0 == n).map(|r| r.3).fold(0.0f64, f64::max))
        })
        .collect();
    let svg = svg::line_chart(
        "Representation error vs number of source tasks",
        "n of the source (n, m)-sample",
        "representation error",
        &[
            svg::Series { label: "mean", color: "#1f77b4", points: mean_curve },
            svg::Series { label: "sup", color: "#d62728", points: sup_curve },
        ],
    );
    write_text(&out.join("rep_error.svg"), &svg)?;
    println!("reperror: {} rows -> {}", rows.len(), out.join("rep_error.csv").display());
    Ok(())
}

/// Runs the transfer comparison against the analytic perfect trunk and
/// emits `transfer.csv` plus the two learning curves.
pub fn cmd_transfer(config: &Config, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let env = config.environment()?;
    let frozen = perfect_trunk(&env)?;
    let full_trunk = config.trunk_spec()?;
    let head = config.head_spec()?;
    if frozen.spec.output_dim() != head.input_dim() {
        return Err(CliError::Validation(format!(
            "transfer needs architecture.repr_dim = {} (the perfect trunk's output dimension)",
            frozen.spec.output_dim()
        )));
    }
    let cfg = config.train_config();
    let curves = transfer_curves(
        &env,
        &frozen,
        &full_trunk,
        &head,
        &config.transfer.m_values,
        config.transfer.repetitions,
        &cfg,
    )?;
    let mut csv = String::from("curve,m,mean_true_error,stderr\n");
    for p in &curves.with_representation {
        csv.push_str(&format!("Gof,{},{},{}\n", p.m, p.mean_true_error, p.stderr));
    }
    for p in &curves.without_representation {
        csv.push_str(&format!("GoF,{},{},{}\n", p.m, p.mean_true_error, p.stderr));
    }
    write_text(&out.join("transfer.csv"), &csv)?;
    let svg = svg::line_chart(
        "Learning with (Gof) vs without (GoF) a representation",
        "m (training examples)",
        "mean true error",
        &[
            svg::Series {
                label: "Gof",
                color: "#1f77b4",
                points: curves
                    .with_representation
                    .iter()
                    .map(|p| (p.m as f64, p.mean_true_error))
                    .collect(),
            },
            svg::Series {
                label: "GoF",
                color: "#d62728",
                points: curves
                    .without_representation
                    .iter()
                    .map(|p| (p.m as f64, p.mean_true_error))
                    .collect(),
            },
        ],
    );
    write_text(&out.join("transfer.svg"), &svg)?;
    println!("transfer: {} set sizes -> {}", config.transfer.m_values.len(), out.join("transfer.csv").display());
    Ok(())
}

/// Sweeps the sample-complexity bounds over n and emits `bounds.csv`.
pub fn cmd_bounds(config: &Config, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let b = &config.bounds;
    let w_f = match b.w_f {
        Some(w) => w,
        None => config.trunk_spec()?.param_count(),
    };
    let w_g = match b.w_g {
        Some(w) => w,
        None => config.head_spec()?.param_count(),
    };
    let mut csv =
        String::from("n,m_bound_thm1,n_bound_thm2,m_bound_thm2,a_term,b_term,eps1,eps2,vacuous_flag\n");
    for n in b.n_min..=b.n_max {
        let inputs = BoundInputs {
            loss_bound: b.loss_bound,
            alpha: b.alpha,
            nu: b.nu,
            delta: b.delta,
            w_f,
            w_g,
            k: b.k,
            k_prime: b.k_prime,
            n,
        };
        let r = bound_report(&inputs)?;
        csv.push_str(&format!(
            "{n},{},{},{},{},{},{},{},{}\n",
            r.m_bound_thm1,
            r.n_bound_thm2,
            r.m_bound_thm2,
            r.a_term,
            r.b_term,
            r.eps1,
            r.eps2,
            fmt_bool(r.vacuous)
        ));
    }
    write_text(&out.join("bounds.csv"), &csv)?;
    println!(
        "bounds: n in [{}, {}] (W_F = {w_f}, W_G = {w_g}) -> {}",
        b.n_min,
        b.n_max,
        out.join("bounds.csv").display()
    );
    Ok(())
}

/// Monte-Carlo estimates of the generalisation-gap probability at each
/// configured m, written to `gap.csv`.
pub fn cmd_gap(config: &Config, out: &Path) -> Result<()> {
    ensure_out_dir(out)?;
    let env = config.environment()?;
    let trunk = config.trunk_spec()?;
    let head = config.head_spec()?;
    let cfg = config.train_config();
    let g = &config.gap;
    let mut csv = String::from("n,m,alpha,nu,trials,p_hat,ci_halfwidth\n");
    for &m in &g.m_values {
        let est = gap_probability_mc(&env, &trunk, &head, g.n, m, g.alpha, g.nu, g.trials, &cfg)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            g.n, m, g.alpha, g.nu, g.trials, est.p_hat, est.ci_halfwidth
        ));
    }
    write_text(&out.join("gap.csv"), &csv)?;
    println!("gap: {} estimates -> {}", g.m_values.len(), out.join("gap.csv").display());
    Ok(())
}

/// Trains one composite on a freshly drawn (n, m)-sample and writes a
/// versioned model file.
pub fn cmd_train(config: &Config, out: &Path) -> Result<PathBuf> {
    ensure_out_dir(out)?;
    let env = config.environment()?;
    let spec = CompositeSpec::new(config.trunk_spec()?, config.head_spec()?, config.train.n)?;
    let sample_seed = derive_seed(config.seed, &[10]);
    let sample = env.sample_nm(config.train.n, config.train.m, sample_seed)?;
    let cfg = config.train_config().with_seed(derive_seed(config.seed, &[11]));
    let result = train_composite(&spec, &sample.to_matrix(), &cfg)?;
    let report = true_error_tasks(
        &spec,
        &result.params,
        &env,
        sample.task_ids(),
        config.surface.success_threshold,
    )?;
    let model = ModelFile {
        config_hash: config.hash(),
        seed: config.seed,
        task_ids: sample.task_ids().to_vec(),
        spec,
        params: result.params,
    };
    let path = out.join("model.txt");
    model.save(&path)?;
    println!(
        "train: n={} m={} loss={:.6e} true_error={:.6} converged={} (restart {}, {} iters)",
        config.train.n,
        config.train.m,
        result.final_loss,
        report.mean_true_error,
        result.converged,
        result.restart_index_of_best,
        result.iterations
    );
    println!("model written to {}", path.display());
    Ok(path)
}

/// Loads a model file and reports its exact per-task true errors.
pub fn cmd_eval(config: &Config, model_path: &Path) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let env = config.environment()?;
    let report = true_error_tasks(
        &model.spec,
        &model.params,
        &env,
        &model.task_ids,
        config.surface.success_threshold,
    )?;
    println!("model {} (config {}, seed {})", model_path.display(), model.config_hash, model.seed);
    for (i, (tid, err)) in model.task_ids.iter().zip(&report.per_task_true_error).enumerate() {
        println!("task[{i}] id={tid} true_error={err:.6}");
    }
    println!(
        "mean_true_error={:.6} success={}",
        report.mean_true_error,
        fmt_bool(report.success)
    );
    Ok(())
}
