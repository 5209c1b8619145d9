//! Nonlinear conjugate-gradient minimization with exact line search.
//!
//! "Exact" line search is realized as bracketing by doubling followed by
//! golden-section refinement of the bracket; for the smooth bounded
//! losses here that recovers the one-dimensional minimum to the
//! configured tolerance. Directions are Polak-Ribiere with the usual
//! non-negativity clamp, restarting to steepest descent every `dim`
//! iterations and whenever the computed direction fails to descend.
//!
//! Training entry points run several independently seeded restarts and
//! keep the best final loss; restart `i` uses seed `cfg.seed + i`, so a
//! single restart can be replayed in isolation.

use rayon::prelude::*;

use crate::composite::{CompositeParams, CompositeSpec, CompositeWorkspace, Example, SampleMatrix};
use crate::nnet::{MlpSpec, ParamVector, Workspace};
use crate::{Error, Result};

/// Optimizer settings shared by all training entry points.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Hard cap on conjugate-gradient iterations per restart.
    pub max_iters: usize,
    /// Stop when the gradient infinity norm falls below this.
    pub grad_tol: f64,
    /// Stop when the loss falls below this.
    pub loss_tol: f64,
    /// Number of independently seeded restarts; the best result wins.
    pub restarts: usize,
    /// Width at which golden-section refinement of a bracket stops.
    pub line_search_tol: f64,
    /// Cap on bracketing steps (doublings, and halvings when the initial
    /// step overshoots).
    pub line_search_max_expand: usize,
    /// Base seed; restart `i` initializes from `seed + i`.
    pub seed: u64,
    /// Half-width of the uniform initialization interval.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iters: 1000,
            grad_tol: 1e-6,
            loss_tol: 1e-4,
            restarts: 32,
            line_search_tol: 1e-8,
            line_search_max_expand: 50,
            seed: 0,
            init_scale: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be at least 1".into()));
        }
        for (name, v) in [
            ("grad_tol", self.grad_tol),
            ("loss_tol", self.loss_tol),
            ("line_search_tol", self.line_search_tol),
            ("init_scale", self.init_scale),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Copy with a different base seed.
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.clone() }
    }
}

/// Result of one training run (or one conjugate-gradient descent).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult<P> {
    pub params: P,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Which restart produced `params` (0 when only one ran).
    pub restart_index_of_best: usize,
}

/// Outcome of a one-dimensional minimization along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    /// Selected step; 0 when no decrease was found.
    pub t: f64,
    /// Function value at `t`.
    pub phi_t: f64,
    /// False when no step with `phi(t) < phi(0)` was found.
    pub progressed: bool,
    /// True when any probe returned NaN or negative infinity.
    pub saw_non_finite: bool,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimizes `phi` over `t >= 0`: brackets a local minimum by doubling
/// from `t_init` (halving first if the initial step overshoots), then
/// shrinks the bracket by golden section to width `tol` and returns its
/// midpoint. The returned point never increases `phi` relative to `t=0`.
pub fn line_search(
    mut phi: impl FnMut(f64) -> f64,
    t_init: f64,
    tol: f64,
    max_expand: usize,
) -> LineSearchOutcome {
    let saw_non_finite = std::cell::Cell::new(false);
    let mut phi = |t: f64| {
        let f = phi(t);
        if f.is_nan() || f == f64::NEG_INFINITY {
            saw_non_finite.set(true);
        }
        f
    };
    let phi0 = phi(0.0);
    let mut best_t = 0.0;
    let mut best_f = phi0;
    let track = |t: f64, f: f64, best_t: &mut f64, best_f: &mut f64| {
        if f < *best_f {
            *best_f = f;
            *best_t = t;
        }
    };

    // Find any step that decreases phi, halving on overshoot.
    let mut b = t_init.max(f64::MIN_POSITIVE);
    let mut fb = phi(b);
    track(b, fb, &mut best_t, &mut best_f);
    let mut tries = 0;
    while fb >= phi0 {
        tries += 1;
        if tries > max_expand {
            return LineSearchOutcome { t: 0.0, phi_t: phi0, progressed: false, saw_non_finite: saw_non_finite.get() };
        }
        b *= 0.5;
        fb = phi(b);
        track(b, fb, &mut best_t, &mut best_f);
    }

    // Double until the function turns upward: [a, c] then brackets a
    // minimum with interior point b below both ends.
    let mut a = 0.0;
    let mut c = 2.0 * b;
    let mut fc = phi(c);
    track(c, fc, &mut best_t, &mut best_f);
    let mut expansions = 0;
    while fc < fb {
        expansions += 1;
        if expansions > max_expand {
            // Still descending at the horizon; take the best point seen.
            return LineSearchOutcome { t: best_t, phi_t: best_f, progressed: true, saw_non_finite: saw_non_finite.get() };
        }
        a = b;
        b = c;
        fb = fc;
        c = 2.0 * c;
        fc = phi(c);
        track(c, fc, &mut best_t, &mut best_f);
    }

    // Golden-section shrink of [a, c] to width tol.
    let mut x1 = c - GOLDEN * (c - a);
    let mut x2 = a + GOLDEN * (c - a);
    let mut f1 = phi(x1);
    track(x1, f1, &mut best_t, &mut best_f);
    let mut f2 = phi(x2);
    track(x2, f2, &mut best_t, &mut best_f);
    let mut guard = 0;
    while c - a > tol && guard < 10_000 {
        guard += 1;
        if f1 < f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - GOLDEN * (c - a);
            f1 = phi(x1);
            track(x1, f1, &mut best_t, &mut best_f);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (c - a);
            f2 = phi(x2);
            track(x2, f2, &mut best_t, &mut best_f);
        }
    }
    let mid = 0.5 * (a + c);
    let fmid = phi(mid);
    track(mid, fmid, &mut best_t, &mut best_f);
    if fmid <= phi0 && fmid <= best_f {
        LineSearchOutcome { t: mid, phi_t: fmid, progressed: true, saw_non_finite: saw_non_finite.get() }
    } else {
        // Fall back to the best evaluated point so the step never
        // increases the loss.
        LineSearchOutcome { t: best_t, phi_t: best_f, progressed: best_t > 0.0, saw_non_finite: saw_non_finite.get() }
    }
}

#[inline]
fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Polak-Ribiere conjugate gradient over a flat parameter vector.
///
/// `grad` must write the exact gradient of `loss` into its second
/// argument. The produced loss sequence is monotone non-increasing; the
/// run stops on `grad_tol`, `loss_tol`, `max_iters`, or when even a
/// steepest-descent step cannot reduce the loss at the line-search
/// resolution (reported as converged).
pub fn conjugate_gradient(
    mut loss: impl FnMut(&[f64]) -> f64,
    mut grad: impl FnMut(&[f64], &mut [f64]),
    init: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainResult<Vec<f64>>> {
    cfg.validate()?;
    let dim = init.len();
    let mut x = init.to_vec();
    let mut g = vec![0.0; dim];
    let mut g_prev = vec![0.0; dim];
    let mut d = vec![0.0; dim];
    let mut xt = vec![0.0; dim];

    let mut f = loss(&x);
    if !f.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    grad(&x, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { iteration: 0 });
    }

    let mut iterations = 0;
    let mut converged = inf_norm(&g) < cfg.grad_tol || f < cfg.loss_tol;
    if !converged {
        for (di, gi) in d.iter_mut().zip(&g) {
            *di = -gi;
        }
        let mut steepest = true;
        let mut prev_step = 1.0;
        for iter in 1..=cfg.max_iters {
            // Guard against non-descent directions from stale curvature.
            if !steepest && dot(&g, &d) >= 0.0 {
                for (di, gi) in d.iter_mut().zip(&g) {
                    *di = -gi;
                }
                steepest = true;
            }
            let outcome = {
                let mut phi = |t: f64| {
                    for i in 0..dim {
                        xt[i] = x[i] + t * d[i];
                    }
                    loss(&xt)
                };
                line_search(&mut phi, prev_step, cfg.line_search_tol, cfg.line_search_max_expand)
            };
            let outcome = if outcome.progressed || steepest {
                outcome
            } else {
                // Retry once along the raw gradient with a fresh unit step.
                for (di, gi) in d.iter_mut().zip(&g) {
                    *di = -gi;
                }
                let mut phi = |t: f64| {
                    for i in 0..dim {
                        xt[i] = x[i] + t * d[i];
                    }
                    loss(&xt)
                };
                line_search(&mut phi, 1.0, cfg.line_search_tol, cfg.line_search_max_expand)
            };
            if outcome.saw_non_finite {
                return Err(Error::NonFinite { iteration: iter });
            }
            if !outcome.progressed {
                // Even steepest descent cannot improve: treat as converged
                // at the line-search resolution.
                converged = true;
                break;
            }
            for i in 0..dim {
                x[i] += outcome.t * d[i];
            }
            f = outcome.phi_t;
            if !f.is_finite() {
                return Err(Error::NonFinite { iteration: iter });
            }
            iterations = iter;
            std::mem::swap(&mut g_prev, &mut g);
            grad(&x, &mut g);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { iteration: iter });
            }
            if inf_norm(&g) < cfg.grad_tol || f < cfg.loss_tol {
                converged = true;
                break;
            }
            // Polak-Ribiere with non-negativity clamp and periodic restart.
            let denom = dot(&g_prev, &g_prev);
            let beta = if iter % dim == 0 || denom == 0.0 {
                0.0
            } else {
                let num = dot(&g, &g) - dot(&g, &g_prev);
                (num / denom).max(0.0)
            };
            steepest = beta == 0.0;
            for i in 0..dim {
                d[i] = -g[i] + beta * d[i];
            }
            // Warm-start the next search from this step, kept within a
            // range the halving/doubling budget can always recover from.
            prev_step = outcome.t.clamp(1e-12, 1e6);
        }
    }

    // Report the loss of the returned parameters exactly.
    let final_loss = loss(&x);
    Ok(TrainResult {
        params: x,
        final_loss,
        iterations,
        converged,
        restart_index_of_best: 0,
    })
}

/// Minimizes the composite empirical loss over trunk and head parameters
/// jointly, starting from `cfg.restarts` seeded initializations; returns
/// the run with the smallest final loss (smallest restart index on ties).
pub fn train_composite(
    spec: &CompositeSpec,
    sample: &SampleMatrix,
    cfg: &TrainConfig,
) -> Result<TrainResult<CompositeParams>> {
    cfg.validate()?;
    if sample.n() != spec.n_heads() {
        return Err(Error::ShapeMismatch(format!(
            "sample has {} rows but composite has {} heads",
            sample.n(),
            spec.n_heads()
        )));
    }
    let runs: Vec<TrainResult<Vec<f64>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let init = spec.init_params(seed, cfg.init_scale)?.flatten();
            let mut loss_ws = CompositeWorkspace::for_spec(spec);
            let mut grad_ws = CompositeWorkspace::for_spec(spec);
            conjugate_gradient(
                |p| spec.loss_flat(p, sample, &mut loss_ws),
                |p, out| spec.grad_flat(p, sample, out, &mut grad_ws),
                &init,
                cfg,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let best = select_best(runs);
    Ok(TrainResult {
        params: spec.params_from_flat(&best.params),
        final_loss: best.final_loss,
        iterations: best.iterations,
        converged: best.converged,
        restart_index_of_best: best.restart_index_of_best,
    })
}

/// Trains a head on top of a frozen trunk: the trunk is applied once to
/// every input and conjugate gradient then runs over head weights only.
/// This is the empirical realization of the per-task infimum over heads.
pub fn train_head_frozen_trunk(
    trunk_spec: &MlpSpec,
    trunk_params: &ParamVector,
    head_spec: &MlpSpec,
    row: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainResult<ParamVector>> {
    cfg.validate()?;
    if trunk_params.len() != trunk_spec.param_count() {
        return Err(Error::ShapeMismatch(format!(
            "trunk params have {} values, spec needs {}",
            trunk_params.len(),
            trunk_spec.param_count()
        )));
    }
    if trunk_spec.output_dim() != head_spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "trunk output dimension {} does not match head input dimension {}",
            trunk_spec.output_dim(),
            head_spec.input_dim()
        )));
    }
    if row.is_empty() {
        return Err(Error::InvalidParameter("cannot train on an empty row".into()));
    }
    let mut ws = Workspace::for_spec(trunk_spec);
    let data: Vec<Example> = row
        .iter()
        .map(|ex| {
            trunk_spec.forward_into(trunk_params.as_slice(), &ex.input, &mut ws);
            Example::new(ws.output().to_vec(), ex.target)
        })
        .collect();
    let best = train_mlp(head_spec, &data, cfg)?;
    Ok(TrainResult {
        params: ParamVector::from_raw(best.params),
        final_loss: best.final_loss,
        iterations: best.iterations,
        converged: best.converged,
        restart_index_of_best: best.restart_index_of_best,
    })
}

/// Multi-restart mean-squared-error training of a single scalar-output
/// network.
pub(crate) fn train_mlp(
    spec: &MlpSpec,
    data: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainResult<Vec<f64>>> {
    let m = data.len() as f64;
    let runs: Vec<TrainResult<Vec<f64>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            let init = spec.init_params(seed, cfg.init_scale)?;
            let mut loss_ws = Workspace::for_spec(spec);
            let mut grad_ws = Workspace::for_spec(spec);
            let loss = |p: &[f64]| {
                let mut sum = 0.0;
                for ex in data {
                    spec.forward_into(p, &ex.input, &mut loss_ws);
                    let r = loss_ws.output()[0] - ex.target;
                    sum += r * r;
                }
                sum / m
            };
            let grad = |p: &[f64], out: &mut [f64]| {
                out.fill(0.0);
                for ex in data {
                    spec.forward_into(p, &ex.input, &mut grad_ws);
                    let upstream = [2.0 * (grad_ws.output()[0] - ex.target)];
                    spec.backward_acc(p, &mut grad_ws, &upstream, out, None);
                }
                for g in out.iter_mut() {
                    *g /= m;
                }
            };
            conjugate_gradient(loss, grad, init.as_slice(), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select_best(runs))
}

// Ties resolve to the smallest restart index so the winner is stable.
fn select_best(runs: Vec<TrainResult<Vec<f64>>>) -> TrainResult<Vec<f64>> {
    let mut best_idx = 0;
    for (i, run) in runs.iter().enumerate().skip(1) {
        if run.final_loss < runs[best_idx].final_loss {
            best_idx = i;
        }
    }
    let mut best = runs.into_iter().nth(best_idx).expect("at least one restart");
    best.restart_index_of_best = best_idx;
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::Activation;

    #[test]
    fn line_search_finds_quadratic_minimum() {
        let out = line_search(|t| (t - 2.0) * (t - 2.0), 1.0, 1e-8, 50);
        assert!(out.progressed);
        assert!((out.t - 2.0).abs() <= 1e-6, "t = {}", out.t);
    }

    #[test]
    fn line_search_reports_no_progress_on_increasing_function() {
        let out = line_search(|t| 3.0 + t, 1.0, 1e-8, 50);
        assert_eq!(out.t, 0.0);
        assert!(!out.progressed);
    }

    #[test]
    fn line_search_matches_grid_oracle_on_quartic() {
        // The quartic is flat enough near its minimum that tolerances
        // below ~1e-4 drown in floating-point granularity of phi.
        let phi = |t: f64| (t - 0.7).powi(4) + 0.1;
        let tol = 1e-3;
        let out = line_search(phi, 1.0, tol, 50);
        // Oracle: dense grid at step tol/10.
        let mut best_t = 0.0;
        let mut best_f = f64::INFINITY;
        let mut t = 0.0;
        while t <= 2.0 {
            if phi(t) < best_f {
                best_f = phi(t);
                best_t = t;
            }
            t += tol / 10.0;
        }
        assert!((out.t - 0.7).abs() <= tol, "t = {}", out.t);
        assert!((out.t - best_t).abs() <= tol, "{} vs {}", out.t, best_t);
        assert!(out.phi_t <= phi(0.0));
    }

    #[test]
    fn line_search_overshoot_recovers_by_halving() {
        // Minimum at 0.01; the initial unit step lands on the far rise.
        let phi = |t: f64| (t - 0.01) * (t - 0.01);
        let out = line_search(phi, 1.0, 1e-9, 60);
        assert!(out.progressed);
        assert!((out.t - 0.01).abs() < 1e-6);
    }

    /// Direct normal-equation solve via Gaussian elimination, used as the
    /// oracle for the quadratic conjugate-gradient test.
    fn solve_linear(a: &[[f64; 6]; 6], b: &[f64; 6]) -> [f64; 6] {
        let mut m = [[0.0f64; 7]; 6];
        for i in 0..6 {
            for j in 0..6 {
                m[i][j] = a[i][j];
            }
            m[i][6] = b[i];
        }
        for col in 0..6 {
            let pivot = (col..6).max_by(|&r, &s| m[r][col].abs().partial_cmp(&m[s][col].abs()).unwrap()).unwrap();
            m.swap(col, pivot);
            let p = m[col][col];
            for j in col..7 {
                m[col][j] /= p;
            }
            for r in 0..6 {
                if r != col {
                    let factor = m[r][col];
                    for j in col..7 {
                        m[r][j] -= factor * m[col][j];
                    }
                }
            }
        }
        let mut x = [0.0; 6];
        for i in 0..6 {
            x[i] = m[i][6];
        }
        x
    }

    #[test]
    fn conjugate_gradient_solves_convex_quadratic() {
        // Well-conditioned symmetric positive definite system.
        let a = [
            [4.0, 1.0, 0.0, 0.0, 0.5, 0.0],
            [1.0, 5.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 6.0, 1.0, 0.0, 0.5],
            [0.0, 0.0, 1.0, 4.0, 1.0, 0.0],
            [0.5, 0.0, 0.0, 1.0, 5.0, 1.0],
            [0.0, 0.0, 0.5, 0.0, 1.0, 6.0],
        ];
        let b = [1.0, -2.0, 0.5, 3.0, -1.0, 2.0];
        let loss = |x: &[f64]| {
            let mut total = 0.0;
            for i in 0..6 {
                let mut r = -b[i];
                for j in 0..6 {
                    r += a[i][j] * x[j];
                }
                total += r * r;
            }
            total
        };
        let grad = |x: &[f64], out: &mut [f64]| {
            let mut res = [0.0f64; 6];
            for i in 0..6 {
                res[i] = -b[i];
                for j in 0..6 {
                    res[i] += a[i][j] * x[j];
                }
            }
            for j in 0..6 {
                out[j] = 0.0;
                for i in 0..6 {
                    out[j] += 2.0 * a[i][j] * res[i];
                }
            }
        };
        let cfg = TrainConfig {
            max_iters: 600,
            grad_tol: 1e-9,
            loss_tol: 1e-30,
            restarts: 1,
            line_search_tol: 1e-13,
            line_search_max_expand: 60,
            seed: 0,
            init_scale: 0.5,
        };
        let res = conjugate_gradient(loss, grad, &[0.0; 6], &cfg).unwrap();
        let mut g = vec![0.0; 6];
        grad(&res.params, &mut g);
        assert!(inf_norm(&g) < 1e-8, "gradient norm {}", inf_norm(&g));
        let exact = solve_linear(&a, &b);
        for (x, e) in res.params.iter().zip(exact.iter()) {
            assert!((x - e).abs() < 1e-6, "{x} vs {e}");
        }
    }

    #[test]
    fn stationary_init_returns_immediately() {
        let loss = |x: &[f64]| x[0] * x[0];
        let grad = |x: &[f64], out: &mut [f64]| out[0] = 2.0 * x[0];
        let cfg = TrainConfig { restarts: 1, ..TrainConfig::default() };
        let res = conjugate_gradient(loss, grad, &[0.0], &cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.final_loss, 0.0);
    }

    #[test]
    fn rosenbrock_reaches_global_minimum() {
        let loss = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
        };
        let grad = |x: &[f64], out: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            out[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            out[1] = 200.0 * (b - a * a);
        };
        let cfg = TrainConfig {
            max_iters: 10_000,
            grad_tol: 1e-10,
            loss_tol: 1e-12,
            restarts: 1,
            line_search_tol: 1e-10,
            line_search_max_expand: 60,
            seed: 0,
            init_scale: 0.5,
        };
        let res = conjugate_gradient(loss, grad, &[-1.2, 1.0], &cfg).unwrap();
        assert!(res.final_loss < 1e-6, "loss {}", res.final_loss);
        assert!((res.params[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn loss_sequence_is_monotone_non_increasing() {
        // Deterministic trajectories mean the run capped at k iterations
        // exposes the k-th accepted loss; the sequence must never rise.
        let env = crate::environment::Environment::new(5, 2).unwrap();
        let spec = tiny_env_spec(2);
        let sample = env.sample_nm(2, 6, 3).unwrap().to_matrix();
        let mut prev = f64::INFINITY;
        for k in 1..=24 {
            let cfg = TrainConfig {
                restarts: 1,
                max_iters: k,
                loss_tol: 1e-300,
                grad_tol: 1e-300,
                ..TrainConfig::default()
            };
            let res = train_composite(&spec, &sample, &cfg).unwrap();
            assert!(res.final_loss <= prev, "loss rose at iteration {k}");
            prev = res.final_loss;
        }
    }

    #[test]
    fn non_finite_loss_is_reported_with_iteration() {
        let loss = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] - 1.0) * (x[0] - 1.0) };
        let grad = |x: &[f64], out: &mut [f64]| out[0] = 2.0 * (x[0] - 1.0);
        let cfg = TrainConfig { restarts: 1, ..TrainConfig::default() };
        match conjugate_gradient(loss, grad, &[0.0], &cfg) {
            Err(Error::NonFinite { .. }) => {}
            other => panic!("expected non-finite abort, got {other:?}"),
        }
    }

    fn tiny_env_spec(n_heads: usize) -> CompositeSpec {
        let trunk = MlpSpec::from_widths(&[5, 4, 2], Activation::Sigmoid).unwrap();
        let head = MlpSpec::from_widths(&[2, 3, 1], Activation::Sigmoid).unwrap();
        CompositeSpec::new(trunk, head, n_heads).unwrap()
    }

    #[test]
    fn train_composite_fits_all_zero_labels() {
        let env = crate::environment::Environment::new(5, 2).unwrap();
        let spec = tiny_env_spec(1);
        let rows = vec![env
            .inputs()
            .iter()
            .map(|x| Example::new(x.to_input_vec(), 0.0))
            .collect::<Vec<_>>()];
        let sample = SampleMatrix::new(rows).unwrap();
        let cfg = TrainConfig {
            restarts: 4,
            max_iters: 400,
            loss_tol: 1e-5,
            ..TrainConfig::default()
        };
        let res = train_composite(&spec, &sample, &cfg).unwrap();
        assert!(res.final_loss < 1e-4, "loss {}", res.final_loss);
    }

    #[test]
    fn train_composite_is_deterministic_and_reports_exact_loss() {
        let env = crate::environment::Environment::new(5, 2).unwrap();
        let spec = tiny_env_spec(2);
        let sample = env.sample_nm(2, 6, 5).unwrap().to_matrix();
        let cfg = TrainConfig { restarts: 3, max_iters: 60, ..TrainConfig::default() };
        let a = train_composite(&spec, &sample, &cfg).unwrap();
        let b = train_composite(&spec, &sample, &cfg).unwrap();
        assert_eq!(a, b);
        let recomputed = spec.empirical_loss(&a.params, &sample).unwrap();
        assert!((recomputed - a.final_loss).abs() < 1e-10);
    }

    #[test]
    fn best_of_restarts_matches_individual_replays() {
        let env = crate::environment::Environment::new(5, 2).unwrap();
        let spec = tiny_env_spec(1);
        let sample = env.sample_nm(1, 8, 11).unwrap().to_matrix();
        let cfg = TrainConfig { restarts: 4, max_iters: 50, loss_tol: 1e-12, ..TrainConfig::default() };
        let joint = train_composite(&spec, &sample, &cfg).unwrap();
        let mut losses = Vec::new();
        for r in 0..4 {
            let one = TrainConfig { restarts: 1, seed: cfg.seed + r, ..cfg.clone() };
            losses.push(train_composite(&spec, &sample, &one).unwrap().final_loss);
        }
        let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(joint.final_loss, min);
        assert!(losses.iter().all(|&l| joint.final_loss <= l));
        assert_eq!(losses[joint.restart_index_of_best], joint.final_loss);
    }

    #[test]
    fn frozen_identity_trunk_reduces_to_single_network_training() {
        // Trunk = 2x2 identity; the head must fit the row on its own.
        let trunk = MlpSpec::new(vec![
            crate::nnet::LayerSpec::new(2, 2, Activation::Identity).unwrap()
        ])
        .unwrap();
        let trunk_params = ParamVector::new(vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let head = MlpSpec::from_widths(&[2, 4, 1], Activation::Sigmoid).unwrap();
        // XOR-ish separable targets in [0,1].
        let row = vec![
            Example::new(vec![0.0, 0.0], 0.0),
            Example::new(vec![0.0, 1.0], 1.0),
            Example::new(vec![1.0, 0.0], 1.0),
            Example::new(vec![1.0, 1.0], 0.0),
        ];
        let cfg = TrainConfig {
            restarts: 8,
            max_iters: 600,
            loss_tol: 1e-5,
            ..TrainConfig::default()
        };
        let res = train_head_frozen_trunk(&trunk, &trunk_params, &head, &row, &cfg).unwrap();
        assert!(res.final_loss < 1e-3, "loss {}", res.final_loss);
    }
}
