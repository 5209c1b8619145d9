//! Minimal dense feed-forward network engine.
//!
//! A network is described by an [`MlpSpec`] (layer topology plus per-layer
//! activation) and parameterized by a flat [`ParamVector`]. The flat layout
//! is what lets the optimizer treat a whole composite network as a single
//! point in R^d: per layer, the weight matrix comes first in row-major
//! order (`w[out][in]`), followed by the biases, layers in order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Elementwise nonlinearity applied after each affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            // Split on the sign so exp never overflows.
            Activation::Sigmoid => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of the activation value `a`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `outputs = activation(W · inputs + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidSpec(format!(
                "layer dimensions must be positive, got {inputs}x{outputs}"
            )));
        }
        Ok(LayerSpec { inputs, outputs, activation })
    }

    /// Weights plus biases of this layer.
    pub fn param_count(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }
}

/// Layer topology of one feed-forward network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    layers: Vec<LayerSpec>,
}

impl MlpSpec {
    /// Builds a spec, checking that consecutive layers chain.
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::InvalidSpec(format!(
                    "layer outputs {} do not match next layer inputs {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(MlpSpec { layers })
    }

    /// Convenience: `widths = [in, h1, .., out]`, same activation everywhere.
    pub fn from_widths(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidSpec("need at least input and output widths".into()));
        }
        let layers = widths
            .windows(2)
            .map(|w| LayerSpec::new(w[0], w[1], activation))
            .collect::<Result<Vec<_>>>()?;
        MlpSpec::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// Total number of parameters: sum over layers of `(inputs+1)*outputs`.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Forward pass returning every layer's activations; entry 0 is the
    /// input itself and the last entry is the network output.
    pub fn forward(&self, params: &ParamVector, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_shapes(params, x)?;
        let mut ws = Workspace::for_spec(self);
        self.forward_into(params.as_slice(), x, &mut ws);
        Ok(ws.acts)
    }

    /// Gradient of `upstream · output` with respect to the parameters and
    /// the input, via reverse-mode backpropagation.
    pub fn backward(
        &self,
        params: &ParamVector,
        x: &[f64],
        upstream: &[f64],
    ) -> Result<(ParamVector, Vec<f64>)> {
        self.check_shapes(params, x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch(format!(
                "upstream has {} components, output has {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut ws = Workspace::for_spec(self);
        self.forward_into(params.as_slice(), x, &mut ws);
        let mut grad = vec![0.0; self.param_count()];
        let mut input_grad = vec![0.0; self.input_dim()];
        self.backward_acc(params.as_slice(), &mut ws, upstream, &mut grad, Some(&mut input_grad));
        Ok((ParamVector::from_raw(grad), input_grad))
    }

    /// Seeded i.i.d. uniform initialization on `[-scale, scale]`.
    pub fn init_params(&self, seed: u64, scale: f64) -> Result<ParamVector> {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..self.param_count())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Ok(ParamVector::from_raw(values))
    }

    fn check_shapes(&self, params: &ParamVector, x: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "parameter vector has {} values, spec needs {}",
                params.len(),
                self.param_count()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} components, spec expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Allocation-free forward pass into a prepared workspace.
    pub(crate) fn forward_into(&self, params: &[f64], x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let mut offset = 0;
        for (l, layer) in self.layers.iter().enumerate() {
            let (weights, biases) = layer_params(params, layer, offset);
            // Split so the previous activation and the one being written
            // can be borrowed at the same time.
            let (prev_slice, rest) = ws.acts.split_at_mut(l + 1);
            let prev = &prev_slice[l];
            let out = &mut rest[0];
            for o in 0..layer.outputs {
                let row = &weights[o * layer.inputs..(o + 1) * layer.inputs];
                let mut z = biases[o];
                for (w, a) in row.iter().zip(prev.iter()) {
                    z += w * a;
                }
                out[o] = layer.activation.apply(z);
            }
            offset += layer.param_count();
        }
    }

    /// Accumulates the gradient of `upstream · output` into `grad_acc`
    /// (which must be pre-sized and is added to, not overwritten), using
    /// the activations left in `ws` by [`MlpSpec::forward_into`]. When
    /// `input_grad` is given it is overwritten with d(upstream·out)/dx.
    pub(crate) fn backward_acc(
        &self,
        params: &[f64],
        ws: &mut Workspace,
        upstream: &[f64],
        grad_acc: &mut [f64],
        mut input_grad: Option<&mut [f64]>,
    ) {
        let last = self.layers.len() - 1;
        // delta = dE/dz for the current layer
        {
            let out_act = &ws.acts[last + 1];
            let delta = &mut ws.deltas[last];
            for o in 0..self.layers[last].outputs {
                delta[o] = upstream[o] * self.layers[last].activation.derivative_from_output(out_act[o]);
            }
        }
        let mut offset_end = self.param_count();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let offset = offset_end - layer.param_count();
            let (weights, _) = layer_params(params, layer, offset);
            let grad_layer = &mut grad_acc[offset..offset_end];
            let (gw, gb) = grad_layer.split_at_mut(layer.inputs * layer.outputs);

            let (deltas_prev, deltas_cur) = ws.deltas.split_at_mut(l);
            let delta = &deltas_cur[0];
            let prev = &ws.acts[l];
            for o in 0..layer.outputs {
                let d = delta[o];
                let grow = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, a) in grow.iter_mut().zip(prev.iter()) {
                    *g += d * a;
                }
                gb[o] += d;
            }
            if l > 0 {
                // dE/da_prev, then through the previous activation.
                let dprev = &mut deltas_prev[l - 1];
                for i in 0..layer.inputs {
                    let mut s = 0.0;
                    for o in 0..layer.outputs {
                        s += weights[o * layer.inputs + i] * delta[o];
                    }
                    dprev[i] = s * self.layers[l - 1].activation.derivative_from_output(prev[i]);
                }
            } else if let Some(ig) = input_grad.take() {
                for i in 0..layer.inputs {
                    let mut s = 0.0;
                    for o in 0..layer.outputs {
                        s += weights[o * layer.inputs + i] * delta[o];
                    }
                    ig[i] = s;
                }
            }
            offset_end = offset;
        }
    }
}

#[inline]
fn layer_params<'a>(params: &'a [f64], layer: &LayerSpec, offset: usize) -> (&'a [f64], &'a [f64]) {
    let w_end = offset + layer.inputs * layer.outputs;
    (&params[offset..w_end], &params[w_end..w_end + layer.outputs])
}

/// Flat parameter storage for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// Builds a parameter vector, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite parameter value {v}")));
        }
        Ok(ParamVector { values })
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        ParamVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Reusable activation and delta buffers for one network topology.
#[derive(Clone, Debug)]
pub(crate) struct Workspace {
    /// `acts[0]` is the input; `acts[l+1]` the output of layer `l`.
    pub(crate) acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn for_spec(spec: &MlpSpec) -> Self {
        let mut acts = Vec::with_capacity(spec.layers.len() + 1);
        acts.push(vec![0.0; spec.input_dim()]);
        let mut deltas = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            acts.push(vec![0.0; layer.outputs]);
            deltas.push(vec![0.0; layer.outputs]);
        }
        Workspace { acts, deltas }
    }

    pub(crate) fn output(&self) -> &[f64] {
        &self.acts[self.acts.len() - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(widths: &[usize], act: Activation) -> MlpSpec {
        MlpSpec::from_widths(widths, act).unwrap()
    }

    #[test]
    fn param_count_matches_formula() {
        assert_eq!(spec(&[10, 12, 2], Activation::Sigmoid).param_count(), 158);
        assert_eq!(spec(&[3, 1], Activation::Identity).param_count(), 4);
        assert_eq!(spec(&[10, 8, 8, 2], Activation::Sigmoid).param_count(), 178);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let layers = vec![
            LayerSpec::new(4, 3, Activation::Sigmoid).unwrap(),
            LayerSpec::new(2, 1, Activation::Sigmoid).unwrap(),
        ];
        assert!(matches!(MlpSpec::new(layers), Err(Error::InvalidSpec(_))));
        assert!(LayerSpec::new(0, 3, Activation::Sigmoid).is_err());
    }

    #[test]
    fn zero_params_sigmoid_gives_half_everywhere() {
        let s = spec(&[4, 3, 2], Activation::Sigmoid);
        let params = ParamVector::new(vec![0.0; s.param_count()]).unwrap();
        let acts = s.forward(&params, &[0.3, -1.0, 2.0, 0.0]).unwrap();
        for layer in &acts[1..] {
            for &a in layer {
                assert_eq!(a, 0.5);
            }
        }
    }

    #[test]
    fn single_identity_layer_is_affine() {
        let s = spec(&[2, 1], Activation::Identity);
        let params = ParamVector::new(vec![1.0, 2.0, 0.5]).unwrap();
        let acts = s.forward(&params, &[3.0, -1.0]).unwrap();
        assert_eq!(acts[1], vec![1.5]);
    }

    /// Straight-line re-implementation of the matrix recurrence, used as
    /// an oracle for the buffered forward pass.
    fn naive_forward(s: &MlpSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        for layer in s.layers() {
            let mut next = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let mut z = params[off + layer.inputs * layer.outputs + o];
                for i in 0..layer.inputs {
                    z += params[off + o * layer.inputs + i] * a[i];
                }
                next.push(layer.activation.apply(z));
            }
            off += layer.param_count();
            a = next;
        }
        a
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let s = spec(&[10, 8, 2], Activation::Sigmoid);
        let params = s.init_params(7, 0.5).unwrap();
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let out = s.forward(&params, &x).unwrap();
        let expect = naive_forward(&s, params.as_slice(), &x);
        for (a, b) in out[out.len() - 1].iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let s = spec(&[3, 4, 2], Activation::Tanh);
        let params = s.init_params(3, 0.5).unwrap();
        let (grad, input_grad) = s.backward(&params, &[0.1, -0.2, 0.4], &[0.0, 0.0]).unwrap();
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
        assert!(input_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn identity_layer_gradient_is_outer_product() {
        let s = spec(&[2, 2], Activation::Identity);
        let params = ParamVector::new(vec![0.3, -0.7, 1.1, 0.2, 0.05, -0.4]).unwrap();
        let x = [3.0, -1.0];
        let upstream = [2.0, -0.5];
        let (grad, input_grad) = s.backward(&params, &x, &upstream).unwrap();
        // w[o][i] gradient = upstream[o] * x[i], bias gradient = upstream[o]
        let expect = [
            upstream[0] * x[0],
            upstream[0] * x[1],
            upstream[1] * x[0],
            upstream[1] * x[1],
            upstream[0],
            upstream[1],
        ];
        for (g, e) in grad.as_slice().iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-15);
        }
        // input gradient = W^T upstream
        assert!((input_grad[0] - (0.3 * 2.0 + 1.1 * -0.5)).abs() < 1e-15);
        assert!((input_grad[1] - (-0.7 * 2.0 + 0.2 * -0.5)).abs() < 1e-15);
    }

    /// Central finite differences of `upstream · forward(params)`.
    fn fd_gradient(s: &MlpSpec, params: &ParamVector, x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        let mut grad = Vec::with_capacity(params.len());
        let dot = |p: &[f64]| -> f64 {
            let out = naive_forward(s, p, x);
            out.iter().zip(upstream.iter()).map(|(a, u)| a * u).sum()
        };
        let mut work = params.as_slice().to_vec();
        for i in 0..work.len() {
            let orig = work[i];
            work[i] = orig + h;
            let up = dot(&work);
            work[i] = orig - h;
            let down = dot(&work);
            work[i] = orig;
            grad.push((up - down) / (2.0 * h));
        }
        grad
    }

    #[test]
    fn backward_matches_finite_differences() {
        let shapes: [&[usize]; 3] = [&[3, 1], &[4, 5, 2], &[6, 4, 4, 3]];
        let acts = [Activation::Sigmoid, Activation::Tanh, Activation::Identity];
        let mut case = 0u64;
        for widths in shapes {
            for act in acts {
                for rep in 0..3 {
                    case += 1;
                    let s = spec(widths, act);
                    let params = s.init_params(100 + case, 0.8).unwrap();
                    let x: Vec<f64> = s
                        .init_params(200 + case, 1.0)
                        .unwrap()
                        .as_slice()[..s.input_dim()]
                        .to_vec();
                    let upstream: Vec<f64> = (0..s.output_dim())
                        .map(|k| 0.3 + 0.25 * (k as f64) - 0.1 * (rep as f64))
                        .collect();
                    let (grad, _) = s.backward(&params, &x, &upstream).unwrap();
                    let fd = fd_gradient(&s, &params, &x, &upstream);
                    for (g, f) in grad.as_slice().iter().zip(fd.iter()) {
                        let abs = (g - f).abs();
                        let rel = abs / g.abs().max(f.abs()).max(f64::MIN_POSITIVE);
                        assert!(rel <= 1e-5 || abs <= 1e-8, "{g} vs {f}");
                    }
                }
            }
        }
    }

    #[test]
    fn init_params_is_deterministic_and_bounded() {
        let s = spec(&[5, 4, 1], Activation::Sigmoid);
        let a = s.init_params(42, 0.5).unwrap();
        let b = s.init_params(42, 0.5).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert!(a.as_slice().iter().all(|v| (-0.5..=0.5).contains(v)));
        let c = s.init_params(43, 0.5).unwrap();
        assert!(a.as_slice().iter().zip(c.as_slice()).any(|(x, y)| x != y));
        assert!(s.init_params(1, 0.0).is_err());
    }

    #[test]
    fn shape_errors_reported() {
        let s = spec(&[3, 2], Activation::Sigmoid);
        let params = ParamVector::new(vec![0.0; 7]).unwrap();
        assert!(matches!(s.forward(&params, &[0.0; 3]), Err(Error::ShapeMismatch(_))));
        let params = s.init_params(1, 0.1).unwrap();
        assert!(matches!(s.forward(&params, &[0.0; 4]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            s.backward(&params, &[0.0; 3], &[0.0; 3]),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(ParamVector::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        // Beyond |z| ~ 36.5 the sum 1 + exp(-z) rounds to 1.0 and the
        // sigmoid saturates to the boundary in f64.
        #[test]
        fn sigmoid_stays_strictly_inside_unit_interval(z in -36.0f64..36.0) {
            let a = Activation::Sigmoid.apply(z);
            prop_assert!(a > 0.0 && a < 1.0);
        }

        #[test]
        fn tanh_stays_strictly_inside(z in -18.0f64..18.0) {
            let a = Activation::Tanh.apply(z);
            prop_assert!(a > -1.0 && a < 1.0);
        }
    }
}
