//! Dense multilayer perceptrons over flat parameter vectors.
//!
//! Every network in the toolkit (learners, memory, policy, value, baseline
//! models) is an [`MlpSpec`] paired with a [`ParamVector`]. Parameters of a
//! layer mapping `n_in -> n_out` are stored as `n_in * n_out` weights followed
//! by `n_out` biases. Weights are input-major: the weight connecting input `i`
//! to output `o` lives at offset `i * n_out + o` within the layer block.
//!
//! Hidden layers apply the spec's activation; the output layer is linear.

mod optim;

pub use optim::{clip_global_norm, optimizer_step, OptState, OptimizerKind};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default encoder shape: `input_dim -> [64, 64] -> 32`, relu.
    pub fn encoder(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64, 64],
            output_dim: 32,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::contract(format!(
                "all layer widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        Layout(
            dims.windows(2)
                .map(|w| LayerShape {
                    inputs: w[0],
                    outputs: w[1],
                })
                .collect(),
        )
    }

    pub fn num_params(&self) -> usize {
        self.layout().num_params()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
}

impl LayerShape {
    pub fn num_params(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout(pub Vec<LayerShape>);

impl Layout {
    pub fn layers(&self) -> &[LayerShape] {
        &self.0
    }

    pub fn num_params(&self) -> usize {
        self.0.iter().map(LayerShape::num_params).sum()
    }

    /// Offset of the first parameter of `layer`.
    pub fn offset(&self, layer: usize) -> usize {
        self.0[..layer].iter().map(LayerShape::num_params).sum()
    }
}

/// Flat parameter storage tagged with its layer layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    layout: Layout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.num_params();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        ensure_len("parameter values", layout.num_params(), values.len())?;
        Ok(Self { layout, values })
    }

    /// Uniform fan-in initialization: weights and biases of a layer with
    /// `n_in` inputs are drawn from `U(-1/sqrt(n_in), 1/sqrt(n_in))`.
    pub fn init_uniform(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(spec, &mut rng)
    }

    pub fn init_with<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let layout = spec.layout();
        let mut values = Vec::with_capacity(layout.num_params());
        for layer in layout.layers() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for _ in 0..layer.num_params() {
                values.push(rng.gen_range(-bound..=bound));
            }
        }
        Self { layout, values }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn weight(&self, layer: usize, input: usize, output: usize) -> f64 {
        let shape = self.layout.0[layer];
        self.values[self.layout.offset(layer) + input * shape.outputs + output]
    }

    pub fn set_weight(&mut self, layer: usize, input: usize, output: usize, value: f64) {
        let shape = self.layout.0[layer];
        let idx = self.layout.offset(layer) + input * shape.outputs + output;
        self.values[idx] = value;
    }

    pub fn bias(&self, layer: usize, output: usize) -> f64 {
        let shape = self.layout.0[layer];
        self.values[self.layout.offset(layer) + shape.inputs * shape.outputs + output]
    }

    pub fn set_bias(&mut self, layer: usize, output: usize, value: f64) {
        let shape = self.layout.0[layer];
        let idx = self.layout.offset(layer) + shape.inputs * shape.outputs + output;
        self.values[idx] = value;
    }

    /// Multiply every parameter of one layer by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: f64) {
        let start = self.layout.offset(layer);
        let end = start + self.layout.0[layer].num_params();
        self.values[start..end].iter_mut().for_each(|v| *v *= factor);
    }

    pub fn ensure_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::contract("parameter layouts differ"));
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Order-sensitive 64-bit FNV-1a digest over the raw bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Post-activation values of every layer for one input, kept for backprop.
/// `layers[0]` is the input itself and the last entry is the network output.
#[derive(Debug, Clone)]
pub struct Trace {
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("trace is never empty")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.layers.pop().expect("trace is never empty")
    }
}

fn check_inputs(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<()> {
    ensure_len("network input", spec.input_dim, x.len())?;
    if *params.layout() != spec.layout() {
        return Err(Error::contract("parameters do not match the network spec"));
    }
    Ok(())
}

fn dense_forward(shape: LayerShape, block: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let (w, b) = block.split_at(shape.inputs * shape.outputs);
    out.clear();
    out.extend_from_slice(b);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * shape.outputs..(i + 1) * shape.outputs];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
}

pub fn forward_trace(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<Trace> {
    check_inputs(spec, params, x)?;
    let layout = params.layout();
    let n_layers = layout.0.len();
    let mut layers = Vec::with_capacity(n_layers + 1);
    layers.push(x.to_vec());
    let mut offset = 0;
    for (l, &shape) in layout.layers().iter().enumerate() {
        let block = &params.values[offset..offset + shape.num_params()];
        offset += shape.num_params();
        let mut out = Vec::with_capacity(shape.outputs);
        dense_forward(shape, block, &layers[l], &mut out);
        if l + 1 < n_layers {
            out.iter_mut().for_each(|v| *v = spec.activation.apply(*v));
        }
        layers.push(out);
    }
    Ok(Trace { layers })
}

pub fn forward(spec: &MlpSpec, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_trace(spec, params, x)?.into_output())
}

/// Add `d(upstream . output) / d(params)` for one traced input into `grad`.
///
/// Returns the gradient with respect to the network input when
/// `want_input_grad` is set.
pub fn accumulate_gradient(
    spec: &MlpSpec,
    params: &ParamVector,
    trace: &Trace,
    upstream: &[f64],
    grad: &mut ParamVector,
    want_input_grad: bool,
) -> Result<Option<Vec<f64>>> {
    ensure_len("upstream gradient", spec.output_dim, upstream.len())?;
    params.ensure_same_layout(grad)?;
    let layout = params.layout();
    let n_layers = layout.0.len();
    let mut delta = upstream.to_vec();
    let mut input_grad = None;
    for l in (0..n_layers).rev() {
        let shape = layout.0[l];
        let offset = layout.offset(l);
        let n_w = shape.inputs * shape.outputs;
        let x = &trace.layers[l];
        {
            let g = &mut grad.values[offset..offset + shape.num_params()];
            let (gw, gb) = g.split_at_mut(n_w);
            for (b, d) in gb.iter_mut().zip(&delta) {
                *b += d;
            }
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut gw[i * shape.outputs..(i + 1) * shape.outputs];
                for (gv, d) in row.iter_mut().zip(&delta) {
                    *gv += xi * d;
                }
            }
        }
        if l == 0 && !want_input_grad {
            break;
        }
        let w = &params.values[offset..offset + n_w];
        let mut prev: Vec<f64> = (0..shape.inputs)
            .map(|i| {
                w[i * shape.outputs..(i + 1) * shape.outputs]
                    .iter()
                    .zip(&delta)
                    .map(|(wv, d)| wv * d)
                    .sum()
            })
            .collect();
        if l == 0 {
            input_grad = Some(prev);
            break;
        }
        for (p, &y) in prev.iter_mut().zip(x) {
            *p *= spec.activation.derivative_from_output(y);
        }
        delta = prev;
    }
    Ok(input_grad)
}

/// Gradient of `upstream . forward(x)` with respect to the parameters.
pub fn backward(
    spec: &MlpSpec,
    params: &ParamVector,
    x: &[f64],
    upstream: &[f64],
) -> Result<ParamVector> {
    let trace = forward_trace(spec, params, x)?;
    let mut grad = ParamVector::zeros(params.layout().clone());
    accumulate_gradient(spec, params, &trace, upstream, &mut grad, false)?;
    Ok(grad)
}

/// Element-wise `alpha * target + (1 - alpha) * mean(sources)`.
pub fn ema_blend(target: &ParamVector, sources: &[&ParamVector], alpha: f64) -> Result<ParamVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("decay rate {alpha} outside [0, 1]")));
    }
    let Some((first, rest)) = sources.split_first() else {
        return Err(Error::contract("ema_blend needs at least one source"));
    };
    for s in sources {
        target.ensure_same_layout(s)?;
    }
    let n = sources.len() as f64;
    let mut out = target.clone();
    for (k, w) in out.values.iter_mut().enumerate() {
        let sum = rest.iter().fold(first.values[k], |acc, s| acc + s.values[k]);
        let mean = sum / n;
        *w = alpha * *w + (1.0 - alpha) * mean;
    }
    Ok(out)
}

/// A spec together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Mlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = ParamVector::init_uniform(&spec, seed);
        Ok(Self { spec, params })
    }

    pub fn with_params(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if *params.layout() != spec.layout() {
            return Err(Error::contract("parameters do not match the network spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward(&self.spec, &self.params, x)
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        forward_trace(&self.spec, &self.params, x)
    }

    pub fn zero_grad(&self) -> ParamVector {
        ParamVector::zeros(self.params.layout().clone())
    }

    pub fn accumulate(
        &self,
        trace: &Trace,
        upstream: &[f64],
        grad: &mut ParamVector,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        accumulate_gradient(&self.spec, &self.params, trace, upstream, grad, want_input_grad)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_len("latent vectors", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn linear(inputs: usize, outputs: usize) -> MlpSpec {
        MlpSpec::new(inputs, vec![], outputs, Activation::Relu).unwrap()
    }

    // Plain nested-loop forward pass reading parameters through the public accessors.
    fn oracle_forward(spec: &MlpSpec, p: &ParamVector, x: &[f64]) -> Vec<f64> {
        let layers = spec.layout();
        let mut a = x.to_vec();
        for (l, shape) in layers.layers().iter().enumerate() {
            let mut z = vec![0.0; shape.outputs];
            for o in 0..shape.outputs {
                let mut acc = p.bias(l, o);
                for i in 0..shape.inputs {
                    acc += p.weight(l, i, o) * a[i];
                }
                z[o] = acc;
            }
            if l + 1 < layers.layers().len() {
                for v in &mut z {
                    *v = match spec.activation {
                        Activation::Relu => {
                            if *v > 0.0 {
                                *v
                            } else {
                                0.0
                            }
                        }
                        Activation::Tanh => v.tanh(),
                    };
                }
            }
            a = z;
        }
        a
    }

    fn random_case(seed: u64) -> (MlpSpec, ParamVector, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(0..=3);
        let hidden = (0..depth).map(|_| rng.gen_range(1..=16)).collect();
        let act = if rng.gen_bool(0.5) {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let spec = MlpSpec::new(rng.gen_range(1..=16), hidden, rng.gen_range(1..=16), act).unwrap();
        let params = ParamVector::init_with(&spec, &mut rng);
        let x = (0..spec.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (spec, params, x)
    }

    #[test]
    fn layout_counts_weights_and_biases() {
        let spec = MlpSpec::new(3, vec![4, 5], 2, Activation::Relu).unwrap();
        assert_eq!(spec.num_params(), (3 * 4 + 4) + (4 * 5 + 5) + (5 * 2 + 2));
        assert_eq!(spec.layout().offset(2), 16 + 25);
    }

    #[test]
    fn zero_params_output_bias() {
        let spec = MlpSpec::new(4, vec![8], 3, Activation::Tanh).unwrap();
        let p = ParamVector::zeros(spec.layout());
        assert_eq!(forward(&spec, &p, &[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn identity_layer() {
        let spec = linear(2, 2);
        let mut p = ParamVector::zeros(spec.layout());
        p.set_weight(0, 0, 0, 1.0);
        p.set_weight(0, 1, 1, 1.0);
        assert_eq!(forward(&spec, &p, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_matches_scalar_loop_oracle() {
        for seed in 0..50 {
            let (spec, p, x) = random_case(seed);
            let got = forward(&spec, &p, &x).unwrap();
            let want = oracle_forward(&spec, &p, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "seed {seed}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn forward_rejects_bad_dims() {
        let spec = linear(3, 2);
        let p = ParamVector::zeros(spec.layout());
        assert!(matches!(forward(&spec, &p, &[1.0]), Err(Error::Shape { .. })));
        let other = ParamVector::zeros(linear(2, 2).layout());
        assert!(forward(&spec, &other, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let (spec, p, x) = random_case(7);
        let g = backward(&spec, &p, &x, &vec![0.0; spec.output_dim]).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_gradient_is_outer_product() {
        let spec = linear(3, 2);
        let p = ParamVector::init_uniform(&spec, 3);
        let x = [0.5, -1.0, 2.0];
        let u = [3.0, -0.25];
        let g = backward(&spec, &p, &x, &u).unwrap();
        for i in 0..3 {
            for o in 0..2 {
                assert_eq!(g.weight(0, i, o), u[o] * x[i]);
            }
        }
        assert_eq!(g.bias(0, 0), 3.0);
        assert_eq!(g.bias(0, 1), -0.25);
    }

    #[test]
    fn backward_rejects_bad_upstream() {
        let spec = linear(3, 2);
        let p = ParamVector::zeros(spec.layout());
        assert!(backward(&spec, &p, &[0.0; 3], &[1.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 100..120 {
            let (spec, p, x) = random_case(seed);
            let u: Vec<f64> = (0..spec.output_dim).map(|k| 0.3 + 0.1 * k as f64).collect();
            let g = backward(&spec, &p, &x, &u).unwrap();
            let loss = |q: &ParamVector| -> f64 {
                forward(&spec, q, &x).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum()
            };
            let h = 1e-5;
            for k in 0..p.len() {
                let mut plus = p.clone();
                plus.values_mut()[k] += h;
                let mut minus = p.clone();
                minus.values_mut()[k] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = g.values()[k];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / denom < 1e-4, "seed {seed} k {k}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let (spec, p, x) = random_case(42);
        let u: Vec<f64> = (0..spec.output_dim).map(|k| 1.0 - 0.2 * k as f64).collect();
        let trace = forward_trace(&spec, &p, &x).unwrap();
        let mut g = ParamVector::zeros(p.layout().clone());
        let dx = accumulate_gradient(&spec, &p, &trace, &u, &mut g, true)
            .unwrap()
            .unwrap();
        let f = |x: &[f64]| -> f64 {
            forward(&spec, &p, x).unwrap().iter().zip(&u).map(|(a, b)| a * b).sum()
        };
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += 1e-6;
            let mut xm = x.clone();
            xm[i] -= 1e-6;
            assert_relative_eq!(dx[i], (f(&xp) - f(&xm)) / 2e-6, epsilon = 1e-6);
        }
    }

    #[test]
    fn ema_endpoints() {
        let spec = linear(2, 2);
        let w = ParamVector::init_uniform(&spec, 1);
        let a = ParamVector::init_uniform(&spec, 2);
        let b = ParamVector::init_uniform(&spec, 3);
        assert_eq!(ema_blend(&w, &[&a, &b], 1.0).unwrap(), w);
        let mean = ema_blend(&w, &[&a, &b], 0.0).unwrap();
        for k in 0..w.len() {
            assert_eq!(mean.values()[k], (a.values()[k] + b.values()[k]) / 2.0);
        }
    }

    #[test]
    fn ema_default_decay_example() {
        let spec = linear(1, 1);
        let w = ParamVector::zeros(spec.layout());
        let mut t = ParamVector::zeros(spec.layout());
        t.fill(1.0);
        let out = ema_blend(&w, &[&t, &t], 0.99).unwrap();
        for v in out.values() {
            assert_relative_eq!(*v, 0.01, epsilon = 1e-15);
        }
    }

    #[test]
    fn ema_rejects_bad_alpha_and_empty_sources() {
        let spec = linear(1, 1);
        let w = ParamVector::zeros(spec.layout());
        assert!(ema_blend(&w, &[&w], 1.5).is_err());
        assert!(ema_blend(&w, &[&w], -0.1).is_err());
        assert!(ema_blend(&w, &[], 0.5).is_err());
        let other = ParamVector::zeros(linear(2, 1).layout());
        assert!(ema_blend(&w, &[&other], 0.5).is_err());
    }

    proptest! {
        #[test]
        fn forward_is_deterministic(seed in any::<u64>()) {
            let (spec, p, x) = random_case(seed);
            let a = forward(&spec, &p, &x).unwrap();
            let b = forward(&spec, &p, &x).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
            prop_assert!(a.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn ema_is_convex(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
            let spec = MlpSpec::new(3, vec![4], 2, Activation::Relu).unwrap();
            let w = ParamVector::init_uniform(&spec, seed);
            let a = ParamVector::init_uniform(&spec, seed.wrapping_add(1));
            let b = ParamVector::init_uniform(&spec, seed.wrapping_add(2));
            let out = ema_blend(&w, &[&a, &b], alpha).unwrap();
            for k in 0..w.len() {
                let mean = (a.values()[k] + b.values()[k]) / 2.0;
                let lo = w.values()[k].min(mean) - 1e-15;
                let hi = w.values()[k].max(mean) + 1e-15;
                prop_assert!(out.values()[k] >= lo && out.values()[k] <= hi);
            }
        }
    }
}
