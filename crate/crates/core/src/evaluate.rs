//! Exact evaluation over the finite environment, plus the experiment
//! harnesses built on it.
//!
//! Because the environment has finitely many valid inputs, true error is
//! an exact enumeration, not an estimate: a composite is scored against
//! every input of every task it was trained on. On top of that sit the
//! representation-error measures (how well can the best head do on each
//! task given a frozen trunk), the learning surface over (n, m), the
//! transfer comparison between learning with a frozen representation and
//! learning from scratch, and a Monte-Carlo estimate of the probability
//! of a large empirical/true loss deviation.
//!
//! Every harness derives one seed per cell from the base seed, so cells
//! are independent, reproducible, and safe to run concurrently.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::d_nu;
use crate::composite::{CompositeParams, CompositeSpec, Example, SampleMatrix};
use crate::environment::Environment;
use crate::nnet::{Activation, LayerSpec, MlpSpec, ParamVector, Workspace};
use crate::optimizer::{train_composite, train_head_frozen_trunk, TrainConfig};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// True-error level below which a cell counts as perfect generalisation.
pub const SUCCESS_THRESHOLD: f64 = 0.01;

/// Exact per-task and mean true error of a trained composite.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_task_true_error: Vec<f64>,
    pub mean_true_error: f64,
    /// Whether the mean lies below the success threshold it was scored at.
    pub success: bool,
}

/// Computes the exact true error of each head against its generating
/// task by enumerating every valid input; no sampling is involved.
pub fn true_error_tasks(
    spec: &CompositeSpec,
    params: &CompositeParams,
    env: &Environment,
    task_ids: &[usize],
    success_threshold: f64,
) -> Result<EvalReport> {
    if task_ids.len() != spec.n_heads() {
        return Err(Error::ShapeMismatch(format!(
            "{} task ids for {} heads",
            task_ids.len(),
            spec.n_heads()
        )));
    }
    if spec.trunk().input_dim() != env.retina_size() {
        return Err(Error::ShapeMismatch(format!(
            "trunk expects {} inputs, environment has {} pixels",
            spec.trunk().input_dim(),
            env.retina_size()
        )));
    }
    // One trunk pass per input, shared across all heads.
    let mut trunk_ws = Workspace::for_spec(spec.trunk());
    let reps: Vec<Vec<f64>> = env
        .inputs()
        .iter()
        .map(|x| {
            spec.trunk().forward_into(params.trunk.as_slice(), &x.to_input_vec(), &mut trunk_ws);
            trunk_ws.output().to_vec()
        })
        .collect();
    let mut head_ws = Workspace::for_spec(spec.head());
    let mut per_task = Vec::with_capacity(task_ids.len());
    for (head, &tid) in params.heads.iter().zip(task_ids) {
        let task = env.task(tid)?;
        let mut sum = 0.0;
        for (x, v) in env.inputs().iter().zip(&reps) {
            spec.head().forward_into(head.as_slice(), v, &mut head_ws);
            let label = f64::from(task.label_for_class(env.object_class(x)?)?);
            let r = head_ws.output()[0] - label;
            sum += r * r;
        }
        per_task.push(sum / env.inputs().len() as f64);
    }
    let mean = per_task.iter().sum::<f64>() / per_task.len() as f64;
    Ok(EvalReport { per_task_true_error: per_task, mean_true_error: mean, success: mean < success_threshold })
}

/// A representation network held fixed while heads are trained on it.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenTrunk {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

/// Builds a trunk that is analytically perfect for the environment: it
/// maps each object class to a distinct grid corner of the 2-d
/// representation space (pairwise distance at least 1), using one steep
/// sigmoid threshold unit per class boundary and an identity output
/// layer. Heads then only have to separate a handful of points.
pub fn perfect_trunk(env: &Environment) -> Result<FrozenTrunk> {
    let r = env.retina_size();
    let classes = env.max_run();
    if classes < 2 {
        return Err(Error::InvalidParameter(
            "a perfect trunk needs at least two object classes".into(),
        ));
    }
    let hidden = classes - 1;
    let spec = MlpSpec::new(vec![
        LayerSpec::new(r, hidden, Activation::Sigmoid)?,
        LayerSpec::new(hidden, 2, Activation::Identity)?,
    ])?;
    // Unit j (1-based) approximates the threshold [run length >= j+1]:
    // every pixel contributes beta, the bias centers the step at j+0.5.
    let beta = 60.0;
    let mut params = Vec::with_capacity(spec.param_count());
    for _j in 1..=hidden {
        params.extend(std::iter::repeat(beta).take(r));
    }
    for j in 1..=hidden {
        params.push(-beta * (j as f64 + 0.5));
    }
    // First output: alternating sum of the thresholds = low bit of
    // (class - 1); second output: every second threshold = high bits.
    for j in 1..=hidden {
        params.push(if j % 2 == 1 { 1.0 } else { -1.0 });
    }
    for j in 1..=hidden {
        params.push(if j % 2 == 0 { 1.0 } else { 0.0 });
    }
    params.extend([0.0, 0.0]);
    debug_assert_eq!(params.len(), spec.param_count());
    Ok(FrozenTrunk { spec, params: ParamVector::new(params)? })
}

/// A trunk that maps every input to the same point of the representation
/// space; the best any head can then do is predict a constant per task.
pub fn constant_trunk(env: &Environment, repr_dim: usize) -> Result<FrozenTrunk> {
    let spec = MlpSpec::new(vec![LayerSpec::new(env.retina_size(), repr_dim, Activation::Sigmoid)?])?;
    let params = ParamVector::new(vec![0.0; spec.param_count()])?;
    Ok(FrozenTrunk { spec, params })
}

/// Representation quality of a frozen trunk over the whole environment.
#[derive(Clone, Debug, PartialEq)]
pub struct RepErrorReport {
    /// Best-found head loss per task (mean squared error over all inputs).
    pub per_task_loss: Vec<f64>,
    /// Mean over tasks; the restart-estimated true representation error.
    pub mean: f64,
    /// Largest squared residual of any best-found head on any input.
    pub sup: f64,
}

/// Estimates the representation error of a frozen trunk: for every task
/// in the environment, a head is trained on the task's full truth table
/// from `cfg.restarts` random initializations, and the best result
/// stands in for the infimum over heads. The mean over tasks is the
/// restart-estimated true representation loss; the sup is the worst
/// squared residual over all tasks and inputs.
pub fn representation_errors(
    trunk: &FrozenTrunk,
    head_spec: &MlpSpec,
    env: &Environment,
    cfg: &TrainConfig,
) -> Result<RepErrorReport> {
    cfg.validate()?;
    if env.tasks().is_empty() {
        return Err(Error::InvalidParameter("environment has no tasks".into()));
    }
    let results: Vec<(f64, f64)> = (0..env.tasks().len())
        .into_par_iter()
        .map(|tid| -> Result<(f64, f64)> {
            let row: Vec<Example> = env
                .truth_table_row(tid)?
                .into_iter()
                .map(|(x, y)| Example::new(x.to_input_vec(), f64::from(y)))
                .collect();
            let task_cfg = cfg.with_seed(derive_seed(cfg.seed, &[7, tid as u64]));
            let best = train_head_frozen_trunk(&trunk.spec, &trunk.params, head_spec, &row, &task_cfg)?;
            // Residuals of the winning head over every input.
            let mut trunk_ws = Workspace::for_spec(&trunk.spec);
            let mut head_ws = Workspace::for_spec(head_spec);
            let mut sup = 0.0f64;
            for ex in &row {
                trunk.spec.forward_into(trunk.params.as_slice(), &ex.input, &mut trunk_ws);
                head_spec.forward_into(best.params.as_slice(), trunk_ws.output(), &mut head_ws);
                let r = head_ws.output()[0] - ex.target;
                sup = sup.max(r * r);
            }
            Ok((best.final_loss, sup))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_task_loss: Vec<f64> = results.iter().map(|(l, _)| *l).collect();
    let mean = per_task_loss.iter().sum::<f64>() / per_task_loss.len() as f64;
    let sup = results.iter().fold(0.0f64, |acc, (_, s)| acc.max(*s));
    Ok(RepErrorReport { per_task_loss, mean, sup })
}

/// Mean representation error (see [`representation_errors`]).
pub fn representation_true_error(
    trunk: &FrozenTrunk,
    head_spec: &MlpSpec,
    env: &Environment,
    cfg: &TrainConfig,
) -> Result<f64> {
    Ok(representation_errors(trunk, head_spec, env, cfg)?.mean)
}

/// Worst-case representation error (see [`representation_errors`]).
pub fn representation_sup_error(
    trunk: &FrozenTrunk,
    head_spec: &MlpSpec,
    env: &Environment,
    cfg: &TrainConfig,
) -> Result<f64> {
    Ok(representation_errors(trunk, head_spec, env, cfg)?.sup)
}

/// One trained grid cell of the learning surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfacePoint {
    pub n: usize,
    pub m: usize,
    pub trial: usize,
    /// Final empirical loss on the training sample (NaN if training aborted).
    pub train_loss: f64,
    /// Exact mean true error over the trained tasks (NaN if training aborted).
    pub true_error: f64,
    pub converged: bool,
}

/// A surface point together with the trained parameters and the sample's
/// task assignment, for follow-up analyses such as representation
/// extraction.
#[derive(Clone, Debug)]
pub struct SurfaceCell {
    pub point: SurfacePoint,
    pub task_ids: Vec<usize>,
    pub params: Option<CompositeParams>,
}

/// Trains one composite per `(n, m, trial)` grid cell and records its
/// training loss and exact true error. Cells are independent given their
/// derived seeds and run concurrently; a training abort (non-finite
/// loss) is recorded as an unconverged cell rather than dropped.
pub fn learning_surface_cells(
    env: &Environment,
    trunk: &MlpSpec,
    head: &MlpSpec,
    n_values: &[usize],
    m_values: &[usize],
    trials: usize,
    cfg: &TrainConfig,
) -> Result<Vec<SurfaceCell>> {
    cfg.validate()?;
    if n_values.is_empty() || m_values.is_empty() || trials == 0 {
        return Err(Error::InvalidParameter("surface grids and trials must be non-empty".into()));
    }
    let mut grid = Vec::with_capacity(n_values.len() * m_values.len() * trials);
    for &n in n_values {
        for &m in m_values {
            for trial in 0..trials {
                grid.push((n, m, trial));
            }
        }
    }
    grid.into_par_iter()
        .map(|(n, m, trial)| -> Result<SurfaceCell> {
            let spec = CompositeSpec::new(trunk.clone(), head.clone(), n)?;
            let sample_seed = derive_seed(cfg.seed, &[0, n as u64, m as u64, trial as u64]);
            let train_seed = derive_seed(cfg.seed, &[1, n as u64, m as u64, trial as u64]);
            let sample = env.sample_nm(n, m, sample_seed)?;
            let cell_cfg = cfg.with_seed(train_seed);
            match train_composite(&spec, &sample.to_matrix(), &cell_cfg) {
                Ok(result) => {
                    let report =
                        true_error_tasks(&spec, &result.params, env, sample.task_ids(), SUCCESS_THRESHOLD)?;
                    Ok(SurfaceCell {
                        point: SurfacePoint {
                            n,
                            m,
                            trial,
                            train_loss: result.final_loss,
                            true_error: report.mean_true_error,
                            converged: result.converged,
                        },
                        task_ids: sample.task_ids().to_vec(),
                        params: Some(result.params),
                    })
                }
                Err(Error::NonFinite { .. }) => Ok(SurfaceCell {
                    point: SurfacePoint {
                        n,
                        m,
                        trial,
                        train_loss: f64::NAN,
                        true_error: f64::NAN,
                        converged: false,
                    },
                    task_ids: sample.task_ids().to_vec(),
                    params: None,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// As [`learning_surface_cells`], returning only the recorded points.
pub fn learning_surface(
    env: &Environment,
    trunk: &MlpSpec,
    head: &MlpSpec,
    n_values: &[usize],
    m_values: &[usize],
    trials: usize,
    cfg: &TrainConfig,
) -> Result<Vec<SurfacePoint>> {
    Ok(learning_surface_cells(env, trunk, head, n_values, m_values, trials, cfg)?
        .into_iter()
        .map(|c| c.point)
        .collect())
}

/// Mean true error and its standard error at one training-set size.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferPoint {
    pub m: usize,
    pub mean_true_error: f64,
    pub stderr: f64,
}

/// The two learning curves of the transfer experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferCurves {
    /// Learning with the frozen representation (head only).
    pub with_representation: Vec<TransferPoint>,
    /// Learning the full composite from scratch.
    pub without_representation: Vec<TransferPoint>,
}

/// Compares learning every environment task with a frozen trunk against
/// learning the full composite from scratch. For each task, each
/// training-set size `m`, and each of `repetitions` seeded repetitions,
/// `m` distinct inputs are drawn, both learners are trained from a single
/// random initialization, and their exact true errors are recorded; the
/// curves aggregate over tasks and repetitions.
pub fn transfer_curves(
    env: &Environment,
    frozen: &FrozenTrunk,
    full_trunk: &MlpSpec,
    head: &MlpSpec,
    m_values: &[usize],
    repetitions: usize,
    cfg: &TrainConfig,
) -> Result<TransferCurves> {
    cfg.validate()?;
    if m_values.is_empty() || repetitions == 0 {
        return Err(Error::InvalidParameter("transfer grids and repetitions must be non-empty".into()));
    }
    let max_m = env.inputs().len();
    if let Some(&m) = m_values.iter().find(|&&m| m == 0 || m > max_m) {
        return Err(Error::InvalidParameter(format!(
            "transfer set size {m} outside [1, {max_m}] (sets are drawn without replacement)"
        )));
    }
    if frozen.spec.output_dim() != head.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "frozen trunk produces {} dims, head expects {}",
            frozen.spec.output_dim(),
            head.input_dim()
        )));
    }
    let n_tasks = env.tasks().len();
    let mut runs = Vec::with_capacity(m_values.len() * n_tasks * repetitions);
    for (mi, &m) in m_values.iter().enumerate() {
        for task in 0..n_tasks {
            for rep in 0..repetitions {
                runs.push((mi, m, task, rep));
            }
        }
    }
    let results: Vec<(usize, f64, f64)> = runs
        .into_par_iter()
        .map(|(mi, m, task, rep)| -> Result<(usize, f64, f64)> {
            let draw_seed = derive_seed(cfg.seed, &[2, m as u64, task as u64, rep as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
            let mut indices: Vec<usize> = (0..env.inputs().len()).collect();
            let (picked, _) = indices.partial_shuffle(&mut rng, m);
            let truth = env.task(task)?;
            let row: Vec<Example> = picked
                .iter()
                .map(|&i| {
                    let x = &env.inputs()[i];
                    Ok(Example::new(x.to_input_vec(), f64::from(env.label(truth, x)?)))
                })
                .collect::<Result<Vec<_>>>()?;

            // (a) head only, frozen representation
            let head_cfg = TrainConfig {
                restarts: 1,
                seed: derive_seed(cfg.seed, &[3, m as u64, task as u64, rep as u64]),
                ..cfg.clone()
            };
            let head_run = train_head_frozen_trunk(&frozen.spec, &frozen.params, head, &row, &head_cfg)?;
            let gof = exact_error_frozen(env, frozen, head, head_run.params.as_slice(), task)?;

            // (b) full composite, single task
            let spec = CompositeSpec::new(full_trunk.clone(), head.clone(), 1)?;
            let full_cfg = TrainConfig {
                restarts: 1,
                seed: derive_seed(cfg.seed, &[4, m as u64, task as u64, rep as u64]),
                ..cfg.clone()
            };
            let sample = SampleMatrix::new(vec![row])?;
            let full_run = train_composite(&spec, &sample, &full_cfg)?;
            let report = true_error_tasks(&spec, &full_run.params, env, &[task], SUCCESS_THRESHOLD)?;
            Ok((mi, gof, report.mean_true_error))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut with_repr = Vec::with_capacity(m_values.len());
    let mut without_repr = Vec::with_capacity(m_values.len());
    for (mi, &m) in m_values.iter().enumerate() {
        let gof: Vec<f64> = results.iter().filter(|(i, _, _)| *i == mi).map(|(_, g, _)| *g).collect();
        let full: Vec<f64> = results.iter().filter(|(i, _, _)| *i == mi).map(|(_, _, f)| *f).collect();
        with_repr.push(summarize(m, &gof));
        without_repr.push(summarize(m, &full));
    }
    Ok(TransferCurves { with_representation: with_repr, without_representation: without_repr })
}

fn summarize(m: usize, values: &[f64]) -> TransferPoint {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    TransferPoint { m, mean_true_error: mean, stderr: (var / count).sqrt() }
}

/// Exact true error of a trained head over a frozen trunk on one task.
fn exact_error_frozen(
    env: &Environment,
    trunk: &FrozenTrunk,
    head_spec: &MlpSpec,
    head_params: &[f64],
    task: usize,
) -> Result<f64> {
    let truth = env.task(task)?;
    let mut trunk_ws = Workspace::for_spec(&trunk.spec);
    let mut head_ws = Workspace::for_spec(head_spec);
    let mut sum = 0.0;
    for x in env.inputs() {
        trunk.spec.forward_into(trunk.params.as_slice(), &x.to_input_vec(), &mut trunk_ws);
        head_spec.forward_into(head_params, trunk_ws.output(), &mut head_ws);
        let r = head_ws.output()[0] - f64::from(env.label(truth, x)?);
        sum += r * r;
    }
    Ok(sum / env.inputs().len() as f64)
}

/// Monte-Carlo estimate of a generalisation-gap probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapEstimate {
    /// Fraction of trials whose deviation exceeded alpha.
    pub p_hat: f64,
    /// 95% binomial confidence half-width.
    pub ci_halfwidth: f64,
    pub trials: usize,
    pub exceed_count: usize,
}

/// Estimates the probability that the `d_nu` deviation between the
/// empirical loss of a trained composite and its exact true loss exceeds
/// `alpha`, over independently sampled and trained (n,m)-samples. Since
/// `d_nu` is always below 1, any `alpha >= 1` yields probability zero
/// without running trials.
#[allow(clippy::too_many_arguments)]
pub fn gap_probability_mc(
    env: &Environment,
    trunk: &MlpSpec,
    head: &MlpSpec,
    n: usize,
    m: usize,
    alpha: f64,
    nu: f64,
    trials: usize,
    cfg: &TrainConfig,
) -> Result<GapEstimate> {
    cfg.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    if alpha >= 1.0 {
        return Ok(GapEstimate { p_hat: 0.0, ci_halfwidth: 0.0, trials, exceed_count: 0 });
    }
    let exceed_count = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<usize> {
            let spec = CompositeSpec::new(trunk.clone(), head.clone(), n)?;
            let sample_seed = derive_seed(cfg.seed, &[5, n as u64, m as u64, trial as u64]);
            let train_seed = derive_seed(cfg.seed, &[6, n as u64, m as u64, trial as u64]);
            let sample = env.sample_nm(n, m, sample_seed)?;
            let run = train_composite(&spec, &sample.to_matrix(), &cfg.with_seed(train_seed))?;
            let report = true_error_tasks(&spec, &run.params, env, sample.task_ids(), SUCCESS_THRESHOLD)?;
            let dev = d_nu(run.final_loss, report.mean_true_error, nu)?;
            Ok(usize::from(dev > alpha))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p_hat = exceed_count as f64 / trials as f64;
    let ci_halfwidth = 1.96 * (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    Ok(GapEstimate { p_hat, ci_halfwidth, trials, exceed_count })
}
