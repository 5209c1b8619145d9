//! The shared-trunk, multi-head hypothesis and its training loss.
//!
//! A composite network applies one trunk `f: X -> V` to every input and a
//! per-task head `g_i: V -> [0,1]` on top. The empirical loss is the
//! average over tasks of each task's mean-squared error, so a head weight
//! sees `1/n` times its ordinary single-task gradient while a trunk
//! weight sees the average of the per-task gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nnet::{MlpSpec, ParamVector, Workspace};
use crate::{Error, Result};

/// One training example with the input already encoded as reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: f64,
}

impl Example {
    pub fn new(input: Vec<f64>, target: f64) -> Self {
        Example { input, target }
    }
}

/// An n-by-m matrix of training examples, one row per task.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    rows: Vec<Vec<Example>>,
}

impl SampleMatrix {
    /// Builds a matrix, requiring at least one row and equal row lengths.
    pub fn new(rows: Vec<Vec<Example>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ShapeMismatch("sample needs at least one row".into()));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::ShapeMismatch("sample rows must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::ShapeMismatch("sample rows have unequal lengths".into()));
        }
        Ok(SampleMatrix { rows })
    }

    /// Number of tasks (rows).
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Examples per task (columns).
    pub fn m(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[Example] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<Example>] {
        &self.rows
    }
}

/// Architecture of the composite: trunk topology, head topology, and the
/// number of heads sharing the trunk.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeSpec {
    trunk: MlpSpec,
    head: MlpSpec,
    n_heads: usize,
}

impl CompositeSpec {
    pub fn new(trunk: MlpSpec, head: MlpSpec, n_heads: usize) -> Result<Self> {
        if trunk.output_dim() != head.input_dim() {
            return Err(Error::InvalidSpec(format!(
                "trunk output dimension {} does not match head input dimension {}",
                trunk.output_dim(),
                head.input_dim()
            )));
        }
        if head.output_dim() != 1 {
            return Err(Error::InvalidSpec(format!(
                "head must produce a single output, got {}",
                head.output_dim()
            )));
        }
        if n_heads == 0 {
            return Err(Error::InvalidSpec("composite needs at least one head".into()));
        }
        Ok(CompositeSpec { trunk, head, n_heads })
    }

    pub fn trunk(&self) -> &MlpSpec {
        &self.trunk
    }

    pub fn head(&self) -> &MlpSpec {
        &self.head
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    /// Dimension of the shared representation space V.
    pub fn repr_dim(&self) -> usize {
        self.trunk.output_dim()
    }

    /// Total parameters across the trunk and all heads.
    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.n_heads * self.head.param_count()
    }

    fn head_range(&self, task: usize) -> std::ops::Range<usize> {
        let t = self.trunk.param_count();
        let h = self.head.param_count();
        t + task * h..t + (task + 1) * h
    }

    fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.n_heads {
            return Err(Error::TaskIndex { index: task, len: self.n_heads });
        }
        Ok(())
    }

    fn check_rows(&self, sample: &SampleMatrix) -> Result<()> {
        if sample.n() != self.n_heads {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} rows but composite has {} heads",
                sample.n(),
                self.n_heads
            )));
        }
        Ok(())
    }

    /// Seeded uniform initialization of the full joint parameter vector.
    pub fn init_params(&self, seed: u64, scale: f64) -> Result<CompositeParams> {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> =
            (0..self.param_count()).map(|_| rng.random_range(-scale..=scale)).collect();
        Ok(self.params_from_flat(&flat))
    }

    /// Evaluates `g_task(f(x))`.
    pub fn predict(&self, params: &CompositeParams, task: usize, x: &[f64]) -> Result<f64> {
        self.check_task(task)?;
        self.check_params(params)?;
        if x.len() != self.trunk.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} components, trunk expects {}",
                x.len(),
                self.trunk.input_dim()
            )));
        }
        let mut ws = CompositeWorkspace::for_spec(self);
        Ok(self.predict_in(&params.flatten(), task, x, &mut ws))
    }

    /// Average over tasks of the per-task mean-squared error.
    pub fn empirical_loss(&self, params: &CompositeParams, sample: &SampleMatrix) -> Result<f64> {
        self.check_rows(sample)?;
        self.check_params(params)?;
        let flat = params.flatten();
        let mut ws = CompositeWorkspace::for_spec(self);
        Ok(self.loss_flat(&flat, sample, &mut ws))
    }

    /// Mean-squared error of head `task` on one row of examples.
    pub fn per_task_loss(
        &self,
        params: &CompositeParams,
        task: usize,
        row: &[Example],
    ) -> Result<f64> {
        self.check_task(task)?;
        self.check_params(params)?;
        if row.is_empty() {
            return Err(Error::InvalidParameter("per-task loss of an empty row".into()));
        }
        let flat = params.flatten();
        let mut ws = CompositeWorkspace::for_spec(self);
        Ok(self.row_loss(&flat, task, row, &mut ws))
    }

    /// Exact gradient of [`CompositeSpec::empirical_loss`] with respect to
    /// every trunk and head parameter.
    pub fn gradient(&self, params: &CompositeParams, sample: &SampleMatrix) -> Result<CompositeParams> {
        self.check_rows(sample)?;
        self.check_params(params)?;
        let flat = params.flatten();
        let mut grad = vec![0.0; flat.len()];
        let mut ws = CompositeWorkspace::for_spec(self);
        self.grad_flat(&flat, sample, &mut grad, &mut ws);
        Ok(self.params_from_flat(&grad))
    }

    fn check_params(&self, params: &CompositeParams) -> Result<()> {
        if params.trunk.len() != self.trunk.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "trunk params have {} values, spec needs {}",
                params.trunk.len(),
                self.trunk.param_count()
            )));
        }
        if params.heads.len() != self.n_heads {
            return Err(Error::ShapeMismatch(format!(
                "got {} head parameter vectors for {} heads",
                params.heads.len(),
                self.n_heads
            )));
        }
        for h in &params.heads {
            if h.len() != self.head.param_count() {
                return Err(Error::ShapeMismatch(format!(
                    "head params have {} values, spec needs {}",
                    h.len(),
                    self.head.param_count()
                )));
            }
        }
        Ok(())
    }

    /// Rebuilds structured parameters from the flat joint layout
    /// (trunk first, then each head in task order).
    pub fn params_from_flat(&self, flat: &[f64]) -> CompositeParams {
        let t = self.trunk.param_count();
        let trunk = ParamVector::from_raw(flat[..t].to_vec());
        let heads = (0..self.n_heads)
            .map(|i| ParamVector::from_raw(flat[self.head_range(i)].to_vec()))
            .collect();
        CompositeParams { trunk, heads }
    }

    pub(crate) fn predict_in(
        &self,
        flat: &[f64],
        task: usize,
        x: &[f64],
        ws: &mut CompositeWorkspace,
    ) -> f64 {
        let t = self.trunk.param_count();
        self.trunk.forward_into(&flat[..t], x, &mut ws.trunk);
        // The representation is copied out so the head pass can borrow its
        // own buffers mutably.
        ws.repr.clear();
        ws.repr.extend_from_slice(ws.trunk.output());
        self.head.forward_into(&flat[self.head_range(task)], &ws.repr, &mut ws.head);
        ws.head.output()[0]
    }

    pub(crate) fn row_loss(
        &self,
        flat: &[f64],
        task: usize,
        row: &[Example],
        ws: &mut CompositeWorkspace,
    ) -> f64 {
        let mut sum = 0.0;
        for ex in row {
            let r = self.predict_in(flat, task, &ex.input, ws) - ex.target;
            sum += r * r;
        }
        sum / row.len() as f64
    }

    /// Loss over a flat parameter vector; the summation order (rows, then
    /// row average, then task average) is fixed so repeated evaluation is
    /// bit-identical.
    pub(crate) fn loss_flat(
        &self,
        flat: &[f64],
        sample: &SampleMatrix,
        ws: &mut CompositeWorkspace,
    ) -> f64 {
        let mut total = 0.0;
        for (task, row) in sample.rows().iter().enumerate() {
            total += self.row_loss(flat, task, row, ws);
        }
        total / sample.n() as f64
    }

    /// Gradient over a flat parameter vector, accumulated into `grad`
    /// (overwritten). Head gradients receive the ordinary per-task
    /// backpropagation gradient scaled by `1/n`; the trunk accumulates the
    /// average over tasks.
    pub(crate) fn grad_flat(
        &self,
        flat: &[f64],
        sample: &SampleMatrix,
        grad: &mut [f64],
        ws: &mut CompositeWorkspace,
    ) {
        grad.fill(0.0);
        let t = self.trunk.param_count();
        let n = sample.n();
        let m = sample.m();
        // The trunk part is accumulated per row and summed across rows
        // afterwards, so identical rows contribute identically.
        ws.trunk_row_grad.resize(t, 0.0);
        for (task, row) in sample.rows().iter().enumerate() {
            let hr = self.head_range(task);
            ws.trunk_row_grad.fill(0.0);
            for ex in row {
                let out = self.predict_in(flat, task, &ex.input, ws);
                let upstream = [2.0 * (out - ex.target)];
                // Head backward, capturing the gradient w.r.t. the
                // representation for the trunk pass.
                {
                    let (gh, vg) = (&mut grad[hr.clone()], &mut ws.repr_grad);
                    self.head.backward_acc(&flat[hr.clone()], &mut ws.head, &upstream, gh, Some(vg));
                }
                self.trunk.backward_acc(
                    &flat[..t],
                    &mut ws.trunk,
                    &ws.repr_grad,
                    &mut ws.trunk_row_grad,
                    None,
                );
            }
            for (g, r) in grad[..t].iter_mut().zip(&ws.trunk_row_grad) {
                *g += r;
            }
        }
        let scale = 1.0 / (n as f64 * m as f64);
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Trunk parameters plus one parameter vector per head.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeParams {
    pub trunk: ParamVector,
    pub heads: Vec<ParamVector>,
}

impl CompositeParams {
    pub fn new(trunk: ParamVector, heads: Vec<ParamVector>) -> Self {
        CompositeParams { trunk, heads }
    }

    /// Joint flat layout: trunk first, then each head in task order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(
            self.trunk.len() + self.heads.iter().map(ParamVector::len).sum::<usize>(),
        );
        flat.extend_from_slice(self.trunk.as_slice());
        for h in &self.heads {
            flat.extend_from_slice(h.as_slice());
        }
        flat
    }
}

/// Scratch buffers reused across forward/backward passes.
pub(crate) struct CompositeWorkspace {
    trunk: Workspace,
    head: Workspace,
    repr: Vec<f64>,
    repr_grad: Vec<f64>,
    trunk_row_grad: Vec<f64>,
}

impl CompositeWorkspace {
    pub(crate) fn for_spec(spec: &CompositeSpec) -> Self {
        CompositeWorkspace {
            trunk: Workspace::for_spec(&spec.trunk),
            head: Workspace::for_spec(&spec.head),
            repr: Vec::with_capacity(spec.repr_dim()),
            repr_grad: vec![0.0; spec.repr_dim()],
            trunk_row_grad: vec![0.0; spec.trunk.param_count()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Activation, LayerSpec};
    use proptest::prelude::*;

    fn boolean_spec(n_heads: usize) -> CompositeSpec {
        let trunk = MlpSpec::from_widths(&[10, 8, 8, 2], Activation::Sigmoid).unwrap();
        let head = MlpSpec::from_widths(&[2, 4, 1], Activation::Sigmoid).unwrap();
        CompositeSpec::new(trunk, head, n_heads).unwrap()
    }

    fn random_sample(spec: &CompositeSpec, m: usize, seed: u64) -> SampleMatrix {
        let dim = spec.trunk().input_dim();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let rows = (0..spec.n_heads())
            .map(|_| {
                (0..m)
                    .map(|_| {
                        let input =
                            (0..dim).map(|_| if rng.random_range(0.0..1.0) < 0.4 { 1.0 } else { 0.0 }).collect();
                        let target = if rng.random_range(0.0..1.0) < 0.5 { 1.0 } else { 0.0 };
                        Example::new(input, target)
                    })
                    .collect()
            })
            .collect();
        SampleMatrix::new(rows).unwrap()
    }

    #[test]
    fn zero_composite_predicts_half() {
        let spec = boolean_spec(2);
        let flat = vec![0.0; spec.param_count()];
        let params = spec.params_from_flat(&flat);
        let x = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(spec.predict(&params, 0, &x).unwrap(), 0.5);
        assert_eq!(spec.predict(&params, 1, &x).unwrap(), 0.5);
    }

    #[test]
    fn identity_trunk_composes_to_head_alone() {
        // Trunk is the 2x2 identity map; the composite must equal the head.
        let trunk = MlpSpec::new(vec![LayerSpec::new(2, 2, Activation::Identity).unwrap()]).unwrap();
        let head = MlpSpec::from_widths(&[2, 3, 1], Activation::Sigmoid).unwrap();
        let spec = CompositeSpec::new(trunk, head.clone(), 1).unwrap();
        let head_params = head.init_params(5, 0.7).unwrap();
        let mut flat = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        flat.extend_from_slice(head_params.as_slice());
        let params = spec.params_from_flat(&flat);
        let x = [0.3, -0.8];
        let direct = head.forward(&head_params, &x).unwrap();
        let got = spec.predict(&params, 0, &x).unwrap();
        assert!((got - direct.last().unwrap()[0]).abs() < 1e-15);
    }

    #[test]
    fn predict_matches_two_forward_calls() {
        let spec = boolean_spec(3);
        let params = spec.init_params(11, 0.6).unwrap();
        let x = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for task in 0..3 {
            let v = spec.trunk().forward(&params.trunk, &x).unwrap();
            let v = v.last().unwrap();
            let out = spec.head().forward(&params.heads[task], v).unwrap();
            let oracle = out.last().unwrap()[0];
            let got = spec.predict(&params, task, &x).unwrap();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn task_index_out_of_range_is_an_error() {
        let spec = boolean_spec(2);
        let params = spec.init_params(1, 0.5).unwrap();
        let x = [0.0; 10];
        assert!(matches!(
            spec.predict(&params, 2, &x),
            Err(Error::TaskIndex { index: 2, len: 2 })
        ));
    }

    #[test]
    fn loss_zero_iff_perfect_and_quarter_for_constant_half() {
        let spec = boolean_spec(2);
        let flat = vec![0.0; spec.param_count()];
        let params = spec.params_from_flat(&flat);
        let sample = random_sample(&spec, 6, 3);
        // constant 0.5 output against 0/1 labels
        assert_eq!(spec.empirical_loss(&params, &sample).unwrap(), 0.25);
        // perfect: targets equal to predictions
        let rows = sample
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|ex| {
                        let y = spec.predict(&params, i, &ex.input).unwrap();
                        Example::new(ex.input.clone(), y)
                    })
                    .collect()
            })
            .collect();
        let perfect = SampleMatrix::new(rows).unwrap();
        assert_eq!(spec.empirical_loss(&params, &perfect).unwrap(), 0.0);
    }

    #[test]
    fn loss_matches_bruteforce_double_loop() {
        let spec = boolean_spec(3);
        let params = spec.init_params(21, 0.8).unwrap();
        let sample = random_sample(&spec, 5, 9);
        let mut total = 0.0;
        for i in 0..3 {
            let mut row_sum = 0.0;
            for ex in sample.row(i) {
                let p = spec.predict(&params, i, &ex.input).unwrap();
                row_sum += (p - ex.target) * (p - ex.target);
            }
            total += row_sum / 5.0;
        }
        let oracle = total / 3.0;
        let got = spec.empirical_loss(&params, &sample).unwrap();
        assert!((got - oracle).abs() < 1e-12);
    }

    #[test]
    fn per_task_loss_decomposition_is_exact() {
        let spec = boolean_spec(4);
        let params = spec.init_params(31, 0.9).unwrap();
        let sample = random_sample(&spec, 7, 13);
        let mean: f64 = (0..4)
            .map(|i| spec.per_task_loss(&params, i, sample.row(i)).unwrap())
            .sum::<f64>()
            / 4.0;
        assert_eq!(spec.empirical_loss(&params, &sample).unwrap(), mean);
    }

    #[test]
    fn per_task_loss_equals_empirical_for_single_head() {
        let spec = boolean_spec(1);
        let params = spec.init_params(17, 0.4).unwrap();
        let sample = random_sample(&spec, 6, 29);
        let a = spec.per_task_loss(&params, 0, sample.row(0)).unwrap();
        let b = spec.empirical_loss(&params, &sample).unwrap();
        assert_eq!(a, b);
        assert!(spec.per_task_loss(&params, 0, &[]).is_err());
    }

    fn fd_gradient(spec: &CompositeSpec, flat: &[f64], sample: &SampleMatrix) -> Vec<f64> {
        let h = 1e-5;
        let mut ws = CompositeWorkspace::for_spec(spec);
        let mut work = flat.to_vec();
        let mut grad = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let orig = work[i];
            work[i] = orig + h;
            let up = spec.loss_flat(&work, sample, &mut ws);
            work[i] = orig - h;
            let down = spec.loss_flat(&work, sample, &mut ws);
            work[i] = orig;
            grad.push((up - down) / (2.0 * h));
        }
        grad
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for case in 0..6u64 {
            let spec = if case % 2 == 0 { boolean_spec(2) } else { boolean_spec(3) };
            let params = spec.init_params(40 + case, 0.7).unwrap();
            let sample = random_sample(&spec, 4, 70 + case);
            let flat = params.flatten();
            let grad = spec.gradient(&params, &sample).unwrap().flatten();
            let fd = fd_gradient(&spec, &flat, &sample);
            for (g, f) in grad.iter().zip(fd.iter()) {
                let abs = (g - f).abs();
                let rel = abs / g.abs().max(f.abs()).max(f64::MIN_POSITIVE);
                assert!(rel <= 1e-5 || abs <= 1e-8, "{g} vs {f}");
            }
        }
    }

    #[test]
    fn duplicated_tasks_halve_head_gradients_exactly() {
        let spec1 = boolean_spec(1);
        let params1 = spec1.init_params(55, 0.6).unwrap();
        let sample1 = random_sample(&spec1, 5, 56);

        let spec2 = boolean_spec(2);
        let params2 = CompositeParams::new(
            params1.trunk.clone(),
            vec![params1.heads[0].clone(), params1.heads[0].clone()],
        );
        let sample2 =
            SampleMatrix::new(vec![sample1.row(0).to_vec(), sample1.row(0).to_vec()]).unwrap();

        let g1 = spec1.gradient(&params1, &sample1).unwrap();
        let g2 = spec2.gradient(&params2, &sample2).unwrap();
        for (a, b) in g1.heads[0].as_slice().iter().zip(g2.heads[0].as_slice()) {
            assert_eq!(*b, *a * 0.5);
        }
        // n identical rows with identical heads: trunk gradient equals the
        // n=1 trunk gradient.
        for (a, b) in g1.trunk.as_slice().iter().zip(g2.trunk.as_slice()) {
            assert_eq!(a, b);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn permuting_heads_and_rows_together_preserves_loss(seed in 0u64..500) {
            let spec = boolean_spec(3);
            let params = spec.init_params(seed, 0.8).unwrap();
            let sample = random_sample(&spec, 4, seed ^ 0xabcd);
            let base = spec.empirical_loss(&params, &sample).unwrap();
            let perm = [2usize, 0, 1];
            let permuted_params = CompositeParams::new(
                params.trunk.clone(),
                perm.iter().map(|&i| params.heads[i].clone()).collect(),
            );
            let permuted_sample = SampleMatrix::new(
                perm.iter().map(|&i| sample.row(i).to_vec()).collect(),
            ).unwrap();
            let permuted = spec.empirical_loss(&permuted_params, &permuted_sample).unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
        }

        #[test]
        fn loss_bounded_by_one_for_unit_targets(seed in 0u64..500) {
            let spec = boolean_spec(2);
            let params = spec.init_params(seed, 2.0).unwrap();
            let sample = random_sample(&spec, 3, seed);
            let loss = spec.empirical_loss(&params, &sample).unwrap();
            prop_assert!((0.0..=1.0).contains(&loss));
        }
    }
}
