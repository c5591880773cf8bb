//! Small fully connected networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector (per layer: row-major weights, then
//! biases) so optimizers, target blending and checkpoints treat a network as
//! a plain parameter array.
//!
//! A network may take a side input that is concatenated onto the input of a
//! later layer. The critic uses this to see the action only from its second
//! hidden layer on. The side input is passed as the tail of the input vector.

mod adam;
mod checkpoint;

pub use adam::{AdamState, Direction};
pub use checkpoint::CheckpointError;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("expected input of length {expected}, got {got}")]
    InputDim { expected: usize, got: usize },
    #[error("expected output gradient of length {expected}, got {got}")]
    OutputDim { expected: usize, got: usize },
    #[error("invalid network shape: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `a` (and input `z` for ReLU).
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - a * a,
            Activation::Linear => T::one(),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Linear => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Linear),
            _ => None,
        }
    }
}

/// Extra input concatenated onto the input of layer `layer` (1-based hidden layer index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideInput {
    pub layer: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Widths from input to output, e.g. `[7, 64, 64, 1]`.
    pub layer_dims: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub side_input: Option<SideInput>,
}

impl MlpSpec {
    pub fn new(layer_dims: Vec<usize>, output: Activation) -> Self {
        Self { layer_dims, hidden: Activation::Relu, output, side_input: None }
    }

    pub fn with_side_input(mut self, layer: usize, width: usize) -> Self {
        self.side_input = Some(SideInput { layer, width });
        self
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.layer_dims.len() < 2 {
            return Err(NnError::Shape("need at least an input and an output width".into()));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(NnError::Shape("layer widths must be positive".into()));
        }
        if let Some(side) = self.side_input {
            if side.layer == 0 || side.layer >= self.layer_dims.len() - 1 || side.width == 0 {
                return Err(NnError::Shape(format!(
                    "side input must target a layer in 1..{} with positive width",
                    self.layer_dims.len() - 1
                )));
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn side_width_at(&self, layer: usize) -> usize {
        match self.side_input {
            Some(side) if side.layer == layer => side.width,
            _ => 0,
        }
    }

    /// Fan-in of dense layer `l`, including any side input.
    pub fn layer_fan_in(&self, l: usize) -> usize {
        self.layer_dims[l] + self.side_width_at(l)
    }

    pub fn input_len(&self) -> usize {
        self.layer_dims[0] + self.side_input.map_or(0, |s| s.width)
    }

    pub fn output_len(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        (0..self.num_layers()).map(|l| (self.layer_fan_in(l) + 1) * self.layer_dims[l + 1]).sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerLayout {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    biases: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    spec: MlpSpec,
    params: Vec<T>,
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    /// Input to each dense layer (after side-input concatenation).
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn output(&self) -> &[T] {
        self.post.last().expect("tape has at least one layer")
    }

    /// Pre-activation values of every hidden unit.
    pub fn hidden_preactivations(&self) -> impl Iterator<Item = T> + '_ {
        let n = self.pre.len();
        self.pre[..n - 1].iter().flatten().copied()
    }
}

/// Parameter and input gradients mirroring an `Mlp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(spec.param_count());
        for l in 0..spec.num_layers() {
            let fan_in = spec.layer_fan_in(l);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * spec.layer_dims[l + 1] {
                params.push(T::lit(rng.random_range(-bound..=bound)));
            }
            params.extend(std::iter::repeat(T::zero()).take(spec.layer_dims[l + 1]));
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<T>) -> Result<Self, NnError> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(NnError::Shape(format!("expected {} parameters, got {}", spec.param_count(), params.len())));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.spec.output_len()
    }

    fn layouts(&self) -> impl Iterator<Item = LayerLayout> + '_ {
        let mut offset = 0;
        (0..self.spec.num_layers()).map(move |l| {
            let fan_in = self.spec.layer_fan_in(l);
            let fan_out = self.spec.layer_dims[l + 1];
            let layout = LayerLayout { fan_in, fan_out, weights: offset, biases: offset + fan_in * fan_out };
            offset += (fan_in + 1) * fan_out;
            layout
        })
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.spec.num_layers() {
            self.spec.output
        } else {
            self.spec.hidden
        }
    }

    fn check_input(&self, input: &[T]) -> Result<(), NnError> {
        if input.len() != self.input_len() {
            return Err(NnError::InputDim { expected: self.input_len(), got: input.len() });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NnError> {
        Ok(self.forward_tape(input)?.post.pop().expect("at least one layer"))
    }

    pub fn forward_tape(&self, input: &[T]) -> Result<Tape<T>, NnError> {
        self.check_input(input)?;
        let main = self.spec.layer_dims[0];
        let side = &input[main..];
        let n = self.spec.num_layers();
        let mut tape = Tape { inputs: Vec::with_capacity(n), pre: Vec::with_capacity(n), post: Vec::with_capacity(n) };

        let mut x: Vec<T> = input[..main].to_vec();
        for (l, lay) in self.layouts().enumerate() {
            if self.spec.side_width_at(l) > 0 {
                x.extend_from_slice(side);
            }
            let act = self.activation(l);
            let w = &self.params[lay.weights..lay.biases];
            let b = &self.params[lay.biases..lay.biases + lay.fan_out];
            let mut z = Vec::with_capacity(lay.fan_out);
            for (row, &bias) in w.chunks_exact(lay.fan_in).zip(b) {
                let mut acc = bias;
                for (wi, xi) in row.iter().zip(&x) {
                    acc += *wi * *xi;
                }
                z.push(acc);
            }
            let a: Vec<T> = z.iter().map(|&zi| act.apply(zi)).collect();
            tape.inputs.push(std::mem::replace(&mut x, a.clone()));
            tape.pre.push(z);
            tape.post.push(a);
        }
        Ok(tape)
    }

    /// Reverse pass for one sample. Parameter gradients are added into
    /// `param_grads` when given; the input gradient is returned.
    pub fn backward_accumulate(
        &self,
        tape: &Tape<T>,
        output_grad: &[T],
        mut param_grads: Option<&mut [T]>,
    ) -> Result<Vec<T>, NnError> {
        if output_grad.len() != self.output_len() {
            return Err(NnError::OutputDim { expected: self.output_len(), got: output_grad.len() });
        }
        let layouts: Vec<LayerLayout> = self.layouts().collect();
        let main = self.spec.layer_dims[0];
        let side_width = self.spec.side_input.map_or(0, |s| s.width);
        let mut side_grad = vec![T::zero(); side_width];

        let mut upstream: Vec<T> = output_grad.to_vec();
        for l in (0..layouts.len()).rev() {
            let lay = layouts[l];
            let act = self.activation(l);
            let delta: Vec<T> = upstream
                .iter()
                .zip(tape.pre[l].iter().zip(&tape.post[l]))
                .map(|(&g, (&z, &a))| g * act.derivative(z, a))
                .collect();
            let x = &tape.inputs[l];

            if let Some(grads) = param_grads.as_deref_mut() {
                for (j, &dj) in delta.iter().enumerate() {
                    if dj == T::zero() {
                        continue;
                    }
                    let row = &mut grads[lay.weights + j * lay.fan_in..lay.weights + (j + 1) * lay.fan_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += dj * xi;
                    }
                    grads[lay.biases + j] += dj;
                }
            }

            let w = &self.params[lay.weights..lay.biases];
            let mut down = vec![T::zero(); lay.fan_in];
            for (row, &dj) in w.chunks_exact(lay.fan_in).zip(&delta) {
                if dj == T::zero() {
                    continue;
                }
                for (d, &wi) in down.iter_mut().zip(row) {
                    *d += wi * dj;
                }
            }
            let own = self.spec.layer_dims[l];
            if lay.fan_in > own {
                for (sg, &d) in side_grad.iter_mut().zip(&down[own..]) {
                    *sg += d;
                }
                down.truncate(own);
            }
            upstream = down;
        }

        let mut input_grad = upstream;
        debug_assert_eq!(input_grad.len(), main);
        input_grad.extend(side_grad);
        Ok(input_grad)
    }

    /// Exact gradients of `output_grad · f(input)` with respect to every
    /// parameter and every input component.
    pub fn backward(&self, input: &[T], output_grad: &[T]) -> Result<Gradients<T>, NnError> {
        let tape = self.forward_tape(input)?;
        let mut params = vec![T::zero(); self.param_count()];
        let input_grad = self.backward_accumulate(&tape, output_grad, Some(&mut params))?;
        Ok(Gradients { params, input: input_grad })
    }

    /// `self ← tau * online + (1 - tau) * self`, elementwise.
    pub fn blend_toward(&mut self, online: &Mlp<T>, tau: T) {
        assert_eq!(self.spec, online.spec, "target and online networks must share a shape");
        let keep = T::one() - tau;
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = tau * o + keep * *t;
        }
    }

    /// Order-sensitive digest of the parameter bits, for change detection.
    pub fn checksum(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for p in &self.params {
            h.update(&p.to_f64_lossy().to_le_bytes());
        }
        h.finalize()
    }
}
