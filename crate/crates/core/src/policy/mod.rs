//! Stochastic policy network over a discrete action set.
//!
//! A small fully connected trunk feeds two heads: a policy head whose softmax
//! gives the action-selection probabilities, and a scalar value head used by
//! the PPO trainer. Parameters are stored row-major, `(out, in)`.

mod snapshot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

pub use snapshot::{restore, snapshot, SNAPSHOT_FORMAT_VERSION};

/// Ordered, index-stable set of discrete actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    labels: Vec<String>,
}

impl ActionSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Config(format!(
                "action space needs at least 2 actions, got {}",
                labels.len()
            )));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(Error::Config(format!("duplicate action label `{label}`")));
            }
        }
        Ok(Self { labels })
    }

    pub fn from_labels(labels: &[&str]) -> Result<Self> {
        Self::new(labels.iter().map(|s| s.to_string()).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Entropy of the uniform distribution over the actions, in nats.
    pub fn max_entropy(&self) -> f64 {
        (self.size() as f64).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `gain * N(0, 1) / sqrt(fan_in)`.
    ScaledNormal,
    /// `gain * U(-1, 1) / sqrt(fan_in)`.
    FanInUniform,
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scaled_normal" => Ok(InitKind::ScaledNormal),
            "fan_in_uniform" => Ok(InitKind::FanInUniform),
            other => Err(Error::Config(format!("unknown init scheme `{other}`"))),
        }
    }
}

/// Weight initialization family with separate hidden and output-layer gains.
///
/// A large `output_gain` spreads the initial logits apart and so yields a
/// near-deterministic, low-entropy initial policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitScheme {
    pub kind: InitKind,
    pub hidden_gain: f64,
    pub output_gain: f64,
}

/// Standard gain for tanh trunks.
pub const TANH_GAIN: f64 = 5.0 / 3.0;

impl Default for InitScheme {
    fn default() -> Self {
        Self {
            kind: InitKind::ScaledNormal,
            hidden_gain: TANH_GAIN,
            output_gain: 1.0,
        }
    }
}

impl InitScheme {
    pub fn scaled_normal(hidden_gain: f64, output_gain: f64) -> Self {
        Self {
            kind: InitKind::ScaledNormal,
            hidden_gain,
            output_gain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |g: f64| g.is_finite() && g > 0.0;
        if !ok(self.hidden_gain) || !ok(self.output_gain) {
            return Err(Error::Config(format!(
                "init gains must be finite and positive (hidden_gain={}, output_gain={})",
                self.hidden_gain, self.output_gain
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut Rng, gain: f64, fan_in: usize) -> f64 {
        let scale = gain / (fan_in as f64).sqrt();
        match self.kind {
            InitKind::ScaledNormal => scale * rng.standard_normal(),
            InitKind::FanInUniform => scale * (2.0 * rng.uniform() - 1.0),
        }
    }
}

/// Fully connected layer, `weights` is `rows x cols` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(
            |(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi),
        ));
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Parameter collection of the network; gradients share the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub hidden: Vec<Dense>,
    pub policy: Dense,
    pub value: Dense,
}

impl Parameters {
    pub fn zeros_like(other: &Parameters) -> Self {
        Self {
            hidden: other
                .hidden
                .iter()
                .map(|l| Dense::zeros(l.rows, l.cols))
                .collect(),
            policy: Dense::zeros(other.policy.rows, other.policy.cols),
            value: Dense::zeros(other.value.rows, other.value.cols),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden
            .iter()
            .chain(std::iter::once(&self.policy))
            .chain(std::iter::once(&self.value))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.policy))
            .chain(std::iter::once(&mut self.value))
    }

    pub fn len(&self) -> usize {
        self.layers().map(Dense::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattens layer by layer (hidden..., policy, value), weights before bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for layer in self.layers() {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Inverse of [`Parameters::to_flat`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape {
                expected: self.len(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for layer in self.layers_mut() {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, alpha: f64) {
        for layer in self.layers_mut() {
            layer.weights.iter_mut().chain(&mut layer.bias).for_each(|v| *v *= alpha);
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Parameters) {
        for (dst, src) in self.layers_mut().zip(other.layers()) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d += alpha * s;
            }
            for (d, s) in dst.bias.iter_mut().zip(&src.bias) {
                *d += alpha * s;
            }
        }
    }
}

/// Parameterized stochastic policy `pi(a | s)` with a value head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    input_width: usize,
    layer_widths: Vec<usize>,
    activation: Activation,
    action_space: ActionSpace,
    scheme: InitScheme,
    seed: u64,
    params: Parameters,
}

/// Builds a model deterministically from `(scheme, seed, widths, activation)`.
///
/// Trunk and policy-head weights are drawn row-major from one seeded stream
/// in layer order. Biases and the value head start at zero.
pub fn init_model(
    scheme: InitScheme,
    seed: u64,
    input_width: usize,
    layer_widths: &[usize],
    activation: Activation,
    action_space: ActionSpace,
) -> Result<PolicyModel> {
    scheme.validate()?;
    if input_width == 0 {
        return Err(Error::Config("input width must be at least 1".into()));
    }
    if layer_widths.is_empty() {
        return Err(Error::Config("layer_widths must be non-empty".into()));
    }
    if let Some(pos) = layer_widths.iter().position(|&w| w == 0) {
        return Err(Error::Config(format!("layer width {pos} is zero")));
    }

    let mut rng = Rng::from_seed(seed);
    let mut fan_in = input_width;
    let mut hidden = Vec::with_capacity(layer_widths.len());
    for &width in layer_widths {
        let mut layer = Dense::zeros(width, fan_in);
        for w in layer.weights.iter_mut() {
            *w = scheme.draw(&mut rng, scheme.hidden_gain, fan_in);
        }
        hidden.push(layer);
        fan_in = width;
    }
    let mut policy = Dense::zeros(action_space.size(), fan_in);
    for w in policy.weights.iter_mut() {
        *w = scheme.draw(&mut rng, scheme.output_gain, fan_in);
    }
    let value = Dense::zeros(1, fan_in);

    let params = Parameters {
        hidden,
        policy,
        value,
    };
    if !params.all_finite() {
        return Err(Error::Numeric("initialization produced non-finite weights".into()));
    }
    Ok(PolicyModel {
        input_width,
        layer_widths: layer_widths.to_vec(),
        activation,
        action_space,
        scheme,
        seed,
        params,
    })
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Activations; `acts[0]` is the observation.
    acts: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: f64,
}

impl PolicyModel {
    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn init_scheme(&self) -> InitScheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameters(&self) -> &Parameters {
        &self.params
    }

    /// Replaces the parameters; shapes must match and values must be finite.
    pub fn set_parameters(&mut self, params: Parameters) -> Result<()> {
        if params.len() != self.params.len()
            || params.layers().zip(self.params.layers()).any(|(a, b)| {
                a.rows != b.rows || a.cols != b.cols
            })
        {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if !params.all_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        self.params = params;
        Ok(())
    }

    fn check_observation(&self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.input_width {
            return Err(Error::Shape {
                expected: self.input_width,
                got: observation.len(),
            });
        }
        Ok(())
    }

    fn trunk(&self, observation: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.params.hidden.len());
        let mut acts = Vec::with_capacity(self.params.hidden.len() + 1);
        acts.push(observation.to_vec());
        for layer in &self.params.hidden {
            let mut z = Vec::new();
            layer.forward_into(acts.last().expect("input present"), &mut z);
            let a = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    pub fn forward_logits(&self, observation: &[f64]) -> Result<Vec<f64>> {
        self.check_observation(observation)?;
        let (_, acts) = self.trunk(observation);
        let mut logits = Vec::new();
        self.params
            .policy
            .forward_into(acts.last().expect("trunk output"), &mut logits);
        Ok(logits)
    }

    pub fn action_probabilities(&self, observation: &[f64]) -> Result<Vec<f64>> {
        softmax(&self.forward_logits(observation)?)
    }

    /// Full forward pass: logits, probabilities, log-probabilities and value.
    pub fn evaluate(&self, observation: &[f64]) -> Result<Trace> {
        self.check_observation(observation)?;
        let (pre, acts) = self.trunk(observation);
        let top = acts.last().expect("trunk output");
        let mut logits = Vec::new();
        self.params.policy.forward_into(top, &mut logits);
        let mut value = Vec::new();
        self.params.value.forward_into(top, &mut value);
        let log_probs = log_softmax(&logits)?;
        let probs = softmax(&logits)?;
        let value = value[0];
        if !value.is_finite() {
            return Err(Error::Numeric("non-finite value estimate".into()));
        }
        Ok(Trace {
            pre,
            acts,
            logits,
            log_probs,
            probs,
            value,
        })
    }

    /// Backpropagates upstream gradients on the logits and value output
    /// through the network, returning the parameter-shaped gradient.
    pub fn backward(&self, trace: &Trace, d_logits: &[f64], d_value: f64) -> Result<Parameters> {
        let mut grad = Parameters::zeros_like(&self.params);
        self.accumulate_backward(trace, d_logits, d_value, &mut grad)?;
        Ok(grad)
    }

    /// As [`PolicyModel::backward`], adding into an existing gradient buffer.
    pub fn accumulate_backward(
        &self,
        trace: &Trace,
        d_logits: &[f64],
        d_value: f64,
        grad: &mut Parameters,
    ) -> Result<()> {
        if d_logits.len() != self.action_space.size() {
            return Err(Error::Shape {
                expected: self.action_space.size(),
                got: d_logits.len(),
            });
        }
        let top = trace.acts.last().expect("trunk output");
        let policy = &self.params.policy;
        let width = policy.cols;

        let mut d_act = vec![0.0; width];
        for (k, &dz) in d_logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let row = &policy.weights[k * width..(k + 1) * width];
            let grow = &mut grad.policy.weights[k * width..(k + 1) * width];
            for i in 0..width {
                grow[i] += dz * top[i];
                d_act[i] += dz * row[i];
            }
            grad.policy.bias[k] += dz;
        }
        if d_value != 0.0 {
            for i in 0..width {
                grad.value.weights[i] += d_value * top[i];
                d_act[i] += d_value * self.params.value.weights[i];
            }
            grad.value.bias[0] += d_value;
        }

        for l in (0..self.params.hidden.len()).rev() {
            let layer = &self.params.hidden[l];
            let input = &trace.acts[l];
            let out = &trace.acts[l + 1];
            let dz: Vec<f64> = d_act
                .iter()
                .zip(&trace.pre[l])
                .zip(out)
                .map(|((da, &z), &a)| da * self.activation.derivative(z, a))
                .collect();
            let mut d_in = vec![0.0; layer.cols];
            let g = &mut grad.hidden[l];
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                let grow = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for c in 0..layer.cols {
                    grow[c] += d * input[c];
                    if l > 0 {
                        d_in[c] += d * row[c];
                    }
                }
                g.bias[r] += d;
            }
            d_act = d_in;
        }
        if !grad.all_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        Ok(())
    }

    /// Gradient of `log pi(action | observation)` with respect to every
    /// parameter. The value head receives a zero gradient.
    pub fn policy_gradient(&self, observation: &[f64], action: usize) -> Result<Parameters> {
        let n = self.action_space.size();
        if action >= n {
            return Err(Error::Config(format!("action {action} out of range for {n} actions")));
        }
        let trace = self.evaluate(observation)?;
        let d_logits: Vec<f64> = trace
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| if k == action { 1.0 - p } else { -p })
            .collect();
        self.backward(&trace, &d_logits, 0.0)
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = finite_max(logits)?;
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `z - logsumexp(z)`, computed without taking the log of a probability.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = finite_max(logits)?;
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|&z| z - lse).collect())
}

fn finite_max(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::Numeric("empty logit vector".into()));
    }
    if let Some(bad) = logits.iter().find(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {bad}")));
    }
    Ok(logits.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Inverse-CDF sampling in label order from a single uniform draw.
pub fn sample_action(probs: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // Rounding left the total just under `u`; fall back to the last
    // action that has any mass.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}
