//! Parametric score functions `h(x)`.
//!
//! Two architectures are supported: an affine map and a fully connected
//! network with tanh hidden activations and a single linear output. Scores are
//! raw reals; any squashing is left to the loss or consumer.
//!
//! Parameters live in one flat vector. Each layer stores its weight matrix
//! row-major (`out × in`) followed by its bias vector, so a linear scorer on
//! `d` inputs is `[w_0, …, w_{d-1}, b]`.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{seeded, Stream};
use crate::{Error, Result};

/// Network shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Linear { d: usize },
    Mlp { d: usize, hidden: Vec<usize> },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Linear { d } | Architecture::Mlp { d, .. } => *d,
        }
    }

    /// Layer widths from input to the scalar output.
    pub fn widths(&self) -> Vec<usize> {
        match self {
            Architecture::Linear { d } => vec![*d, 1],
            Architecture::Mlp { d, hidden } => {
                let mut w = Vec::with_capacity(hidden.len() + 2);
                w.push(*d);
                w.extend_from_slice(hidden);
                w.push(1);
                w
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        if let Architecture::Mlp { hidden, .. } = self {
            if hidden.is_empty() {
                return Err(Error::Config("MLP needs at least one hidden layer".into()));
            }
            if let Some(k) = hidden.iter().position(|&h| h == 0) {
                return Err(Error::Config(format!("hidden layer {k} has size 0")));
            }
        }
        Ok(())
    }
}

/// A score function with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    arch: Architecture,
    params: Vec<f64>,
}

/// Gradient of `Σ_i upstream_i · h(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub d_params: Vec<f64>,
    /// Row-major `n × d`, present when requested.
    pub d_inputs: Option<Vec<f64>>,
}

impl ScorerModel {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded(seed, Stream::Init);
        let mut params = Vec::with_capacity(arch.n_params());
        for w in arch.widths().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..=bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::Dimension {
                expected: arch.n_params(),
                got: params.len(),
            });
        }
        if let Some(k) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {k}")));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Overwrites all parameters; rejects wrong length or non-finite values.
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if let Some(k) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {k}")));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// `params -= lr · grad`. Fails (leaving the model untouched) if any
    /// updated value would be non-finite.
    pub fn descend(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let updated: Vec<f64> = self
            .params
            .iter()
            .zip(grad)
            .map(|(p, g)| p - lr * g)
            .collect();
        self.set_params(&updated)
    }

    fn check_features(&self, features: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if !features.len().is_multiple_of(d) {
            return Err(Error::Dimension {
                expected: d,
                got: features.len() % d,
            });
        }
        Ok(features.len() / d)
    }

    /// Scores for a row-major `n × d` feature block.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        let n = self.check_features(features)?;
        let d = self.input_dim();
        let scores: Vec<f64> = (0..n)
            .map(|i| self.score_one(&features[i * d..(i + 1) * d]))
            .collect();
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("score of sample {i}")));
        }
        Ok(scores)
    }

    /// Scores for a dataset-shaped feature matrix whose column count is given
    /// explicitly, so a width mismatch is reported instead of silently
    /// reinterpreting the buffer.
    pub fn forward_checked(&self, features: &[f64], cols: usize) -> Result<Vec<f64>> {
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: cols,
            });
        }
        self.forward(features)
    }

    fn score_one(&self, x: &[f64]) -> f64 {
        let widths = self.arch.widths();
        let mut act = x.to_vec();
        let mut offset = 0;
        let last = widths.len() - 2;
        for (layer, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let (weights, rest) = self.params[offset..].split_at(fan_in * fan_out);
            let bias = &rest[..fan_out];
            let mut next: Vec<f64> = (0..fan_out)
                .map(|o| dot(&weights[o * fan_in..(o + 1) * fan_in], &act) + bias[o])
                .collect();
            if layer != last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            act = next;
            offset += fan_in * fan_out + fan_out;
        }
        act[0]
    }

    /// Exact gradient of `Σ_i upstream_i · h(x_i)` with respect to the
    /// parameters, and optionally the inputs.
    pub fn backward(
        &self,
        features: &[f64],
        upstream: &[f64],
        with_inputs: bool,
    ) -> Result<GradientBundle> {
        let n = self.check_features(features)?;
        if upstream.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: upstream.len(),
            });
        }
        let d = self.input_dim();
        let widths = self.arch.widths();
        let n_layers = widths.len() - 1;
        let offsets: Vec<usize> = widths
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(o)
            })
            .collect();

        let mut d_params = vec![0.0; self.params.len()];
        let mut d_inputs = with_inputs.then(|| vec![0.0; n * d]);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);

        for (i, &g) in upstream.iter().enumerate() {
            if g == 0.0 && !with_inputs {
                continue;
            }
            // forward pass keeping post-activation values of every layer
            acts.clear();
            acts.push(features[i * d..(i + 1) * d].to_vec());
            for (layer, w) in widths.windows(2).enumerate() {
                let (fan_in, fan_out) = (w[0], w[1]);
                let base = offsets[layer];
                let weights = &self.params[base..base + fan_in * fan_out];
                let bias = &self.params[base + fan_in * fan_out..base + fan_in * fan_out + fan_out];
                let input = &acts[layer];
                let mut out: Vec<f64> = (0..fan_out)
                    .map(|o| dot(&weights[o * fan_in..(o + 1) * fan_in], input) + bias[o])
                    .collect();
                if layer + 1 != n_layers {
                    out.iter_mut().for_each(|v| *v = v.tanh());
                }
                acts.push(out);
            }

            // delta holds ∂/∂(pre-activation) of the current layer
            let mut delta = vec![g];
            for layer in (0..n_layers).rev() {
                let (fan_in, fan_out) = (widths[layer], widths[layer + 1]);
                let base = offsets[layer];
                let input = &acts[layer];
                for o in 0..fan_out {
                    let row = base + o * fan_in;
                    for k in 0..fan_in {
                        d_params[row + k] += delta[o] * input[k];
                    }
                    d_params[base + fan_in * fan_out + o] += delta[o];
                }
                let weights = &self.params[base..base + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    for k in 0..fan_in {
                        prev[k] += weights[o * fan_in + k] * delta[o];
                    }
                }
                if layer > 0 {
                    // input to this layer came out of a tanh
                    for (p, a) in prev.iter_mut().zip(input) {
                        *p *= 1.0 - a * a;
                    }
                } else if let Some(di) = d_inputs.as_mut() {
                    di[i * d..(i + 1) * d].copy_from_slice(&prev);
                }
                delta = prev;
            }
        }
        if let Some(k) = d_params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {k}")));
        }
        Ok(GradientBundle { d_params, d_inputs })
    }

    /// Writes the text checkpoint format (see [`ScorerModel::to_checkpoint_string`]).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text)
    }

    /// Checkpoint text:
    ///
    /// ```text
    /// imbtrust-scorer v1
    /// arch mlp
    /// d 3
    /// hidden 5,4
    /// params 30
    /// <one value per line, 17 significant digits>
    /// ```
    ///
    /// Linear checkpoints write `arch linear` and `hidden -`.
    pub fn to_checkpoint_string(&self) -> String {
        let (kind, hidden) = match &self.arch {
            Architecture::Linear { .. } => ("linear", "-".to_string()),
            Architecture::Mlp { hidden, .. } => (
                "mlp",
                hidden
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}");
        let _ = writeln!(out, "arch {kind}");
        let _ = writeln!(out, "d {}", self.input_dim());
        let _ = writeln!(out, "hidden {hidden}");
        let _ = writeln!(out, "params {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{p:.16e}");
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key} …`, found {line:?}")))
        };
        let version = header(CHECKPOINT_MAGIC)?;
        if version != format!("v{CHECKPOINT_VERSION}") {
            return Err(bad(format!("unsupported checkpoint version {version:?}")));
        }
        let kind = header("arch")?;
        let d: usize = header("d")?
            .parse()
            .map_err(|_| bad("`d` is not a count".into()))?;
        let hidden_text = header("hidden")?;
        let n: usize = header("params")?
            .parse()
            .map_err(|_| bad("`params` is not a count".into()))?;
        let arch = match kind.as_str() {
            "linear" => {
                if hidden_text != "-" {
                    return Err(bad("linear checkpoint must have `hidden -`".into()));
                }
                Architecture::Linear { d }
            }
            "mlp" => {
                let hidden = hidden_text
                    .split(',')
                    .map(|h| h.trim().parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad(format!("bad hidden sizes {hidden_text:?}")))?;
                Architecture::Mlp { d, hidden }
            }
            other => return Err(bad(format!("unknown architecture {other:?}"))),
        };
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("parameter {k}: {l:?} is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if params.len() != n {
            return Err(bad(format!(
                "header announces {n} parameters, file holds {}",
                params.len()
            )));
        }
        Self::from_params(arch, params).map_err(|e| bad(e.to_string()))
    }
}

const CHECKPOINT_MAGIC: &str = "imbtrust-scorer";
const CHECKPOINT_VERSION: u32 = 1;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference gradient check.
///
/// Returns `max_k |analytic_k − fd_k| / max(1e-8, |fd_k|)` where `fd_k` is
/// `(f(x + h e_k) − f(x − h e_k)) / 2h`. Any non-finite evaluation is an error.
pub fn finite_diff_check<F>(point: &[f64], analytic: &[f64], step: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if point.len() != analytic.len() {
        return Err(Error::Dimension {
            expected: point.len(),
            got: analytic.len(),
        });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("step must be positive, got {step}")));
    }
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + step;
        let up = f(&x)?;
        x[k] = orig - step;
        let down = f(&x)?;
        x[k] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss while perturbing coordinate {k}"
            )));
        }
        let fd = (up - down) / (2.0 * step);
        let rel = (analytic[k] - fd).abs() / fd.abs().max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Runs [`finite_diff_check`] on a model's parameters for a loss on scores.
///
/// `loss` maps `(scores, labels)` to `(value, ∂value/∂scores)`; the analytic
/// parameter gradient is obtained through [`ScorerModel::backward`].
pub fn check_model_gradient<L>(
    model: &ScorerModel,
    features: &[f64],
    labels: &[u8],
    step: f64,
    loss: L,
) -> Result<f64>
where
    L: Fn(&[f64], &[u8]) -> Result<(f64, Vec<f64>)>,
{
    let scores = model.forward(features)?;
    let (value, d_scores) = loss(&scores, labels)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss at the base point".into()));
    }
    let grad = model.backward(features, &d_scores, false)?;
    let mut probe = model.clone();
    finite_diff_check(model.params(), &grad.d_params, step, |p| {
        probe.params.copy_from_slice(p);
        let s = probe.forward(features)?;
        Ok(loss(&s, labels)?.0)
    })
}
