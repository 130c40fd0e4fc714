//! Fully connected network `f(x, t)` with a time embedding appended to the
//! input. Parameters live in one flat vector; the layout is a sequence of
//! `(weights row-major [fan_out x fan_in], bias [fan_out])` blocks.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::score::{ScoreFn, TrainableScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let th = z.tanh();
                1.0 - th * th
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TimeEmbed {
    AppendScalar,
    Sinusoidal { frequencies: usize },
}

impl TimeEmbed {
    pub fn width(self) -> usize {
        match self {
            TimeEmbed::AppendScalar => 1,
            TimeEmbed::Sinusoidal { frequencies } => 2 * frequencies,
        }
    }

    /// Appends the embedding of `t` to `out`. Sinusoidal frequencies are
    /// `pi * 2^(j/2)` for `j = 0..k`.
    fn embed_into(self, t: f64, out: &mut Vec<f64>) {
        match self {
            TimeEmbed::AppendScalar => out.push(t),
            TimeEmbed::Sinusoidal { frequencies } => {
                let start = out.len();
                out.resize(start + 2 * frequencies, 0.0);
                for j in 0..frequencies {
                    let w = std::f64::consts::PI * (0.5 * j as f64).exp2();
                    let (s, c) = (w * t).sin_cos();
                    out[start + j] = s;
                    out[start + frequencies + j] = c;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetArch {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_embed: TimeEmbed,
}

impl NetArch {
    /// 3 x 64 SiLU with an 8-frequency sinusoidal time embedding.
    pub fn toy(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            hidden: vec![64, 64, 64],
            activation: Activation::Silu,
            time_embed: TimeEmbed::Sinusoidal { frequencies: 8 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Input(format!("degenerate architecture {self:?}")));
        }
        if let TimeEmbed::Sinusoidal { frequencies: 0 } = self.time_embed {
            return Err(Error::Input("sinusoidal embedding needs a frequency".into()));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim + self.time_embed.width()];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    offset: usize,
}

impl Layer {
    fn bias_offset(&self) -> usize {
        self.offset + self.fan_in * self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: NetArch,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`], consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the embedded input; `acts[l]` the output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
    num_params: usize,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl Mlp {
    fn layout(arch: &NetArch) -> Vec<Layer> {
        let mut offset = 0;
        arch.widths()
            .windows(2)
            .map(|p| {
                let l = Layer {
                    fan_in: p[0],
                    fan_out: p[1],
                    offset,
                };
                offset += p[1] * (p[0] + 1);
                l
            })
            .collect()
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialisation.
    pub fn init(arch: NetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layers = Self::layout(&arch);
        let mut params = vec![0.0; arch.num_params()];
        let mut rng = rng::rng(seed);
        for l in &layers {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            let end = l.bias_offset() + l.fan_out;
            for p in &mut params[l.offset..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            arch,
            layers,
            params,
        })
    }

    pub fn from_params(arch: NetArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::Contract(format!(
                "architecture needs {} parameters, got {}",
                arch.num_params(),
                params.len()
            )));
        }
        let layers = Self::layout(&arch);
        Ok(Self {
            arch,
            layers,
            params,
        })
    }

    pub fn zeros(arch: NetArch) -> Result<Self> {
        let n = arch.num_params();
        Self::from_params(arch, vec![0.0; n])
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    fn embed(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        check_dim(self.arch.input_dim, x.len())?;
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite network input".into()));
        }
        let mut v = Vec::with_capacity(x.len() + self.arch.time_embed.width());
        v.extend_from_slice(x);
        self.arch.time_embed.embed_into(t, &mut v);
        Ok(v)
    }

    fn affine(&self, l: &Layer, input: &[f64]) -> Vec<f64> {
        let w = &self.params[l.offset..l.bias_offset()];
        let b = &self.params[l.bias_offset()..l.bias_offset() + l.fan_out];
        w.chunks_exact(l.fan_in)
            .zip(b)
            .map(|(row, bj)| bj + row.iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut h = self.embed(x, t)?;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = self.affine(l, &h);
            if i < last {
                for v in &mut z {
                    *v = self.arch.activation.apply(*v);
                }
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &[f64], t: f64) -> Result<ForwardCache> {
        let input = self.embed(x, t)?;
        let last = self.layers.len() - 1;
        let mut acts = vec![input];
        let mut pre = Vec::with_capacity(last);
        let mut output = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let z = self.affine(l, acts.last().expect("input present"));
            if i < last {
                let a = z.iter().map(|v| self.arch.activation.apply(*v)).collect();
                pre.push(z);
                acts.push(a);
            } else {
                output = z;
            }
        }
        Ok(ForwardCache {
            acts,
            pre,
            output,
            num_params: self.params.len(),
        })
    }

    fn check_cache(&self, cache: &ForwardCache, out_grad: &[f64]) -> Result<()> {
        let ok = cache.num_params == self.params.len()
            && cache.acts.len() == self.layers.len()
            && cache
                .acts
                .iter()
                .zip(&self.layers)
                .all(|(a, l)| a.len() == l.fan_in);
        if !ok {
            return Err(Error::Contract(
                "forward cache does not belong to this network".into(),
            ));
        }
        if out_grad.len() != self.arch.output_dim {
            return Err(Error::Contract(format!(
                "output gradient has length {}, network output is {}",
                out_grad.len(),
                self.arch.output_dim
            )));
        }
        Ok(())
    }

    /// Reverse pass. Adds the parameter gradient into `param_grad` when given
    /// and returns the gradient with respect to the embedded input.
    fn backward(
        &self,
        cache: &ForwardCache,
        out_grad: &[f64],
        mut param_grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut delta = out_grad.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let input = &cache.acts[i];
            if let Some(g) = param_grad.as_deref_mut() {
                let (gw, gb) = g[l.offset..l.bias_offset() + l.fan_out]
                    .split_at_mut(l.fan_in * l.fan_out);
                for ((row, gbj), dj) in gw.chunks_exact_mut(l.fan_in).zip(gb).zip(&delta) {
                    *gbj += dj;
                    for (gk, ak) in row.iter_mut().zip(input) {
                        *gk += dj * ak;
                    }
                }
            }
            let w = &self.params[l.offset..l.bias_offset()];
            let mut prev = vec![0.0; l.fan_in];
            for (row, dj) in w.chunks_exact(l.fan_in).zip(&delta) {
                for (p, wk) in prev.iter_mut().zip(row) {
                    *p += dj * wk;
                }
            }
            if i > 0 {
                for (p, z) in prev.iter_mut().zip(&cache.pre[i - 1]) {
                    *p *= self.arch.activation.derivative(*z);
                }
            }
            delta = prev;
        }
        delta
    }

    /// Exact `d(out_grad . f)/d(params)` for the cached forward call.
    pub fn param_gradient(&self, cache: &ForwardCache, out_grad: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_param_gradient(cache, out_grad, &mut g)?;
        Ok(g)
    }

    pub fn accumulate_param_gradient(
        &self,
        cache: &ForwardCache,
        out_grad: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_cache(cache, out_grad)?;
        if grad.len() != self.params.len() {
            return Err(Error::Contract("gradient buffer has the wrong length".into()));
        }
        self.backward(cache, out_grad, Some(grad));
        Ok(())
    }

    /// `out_grad^T J_x` without forming the Jacobian.
    pub fn input_vjp(&self, cache: &ForwardCache, out_grad: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache, out_grad)?;
        let mut g = self.backward(cache, out_grad, None);
        g.truncate(self.arch.input_dim);
        Ok(g)
    }

    /// Jacobian `[output_dim x input_dim]` of the output with respect to `x`
    /// (the time input is excluded).
    pub fn input_gradient(&self, x: &[f64], t: f64) -> Result<Array2<f64>> {
        let cache = self.forward_cached(x, t)?;
        let mut jac = Array2::zeros((self.arch.output_dim, self.arch.input_dim));
        let mut e = vec![0.0; self.arch.output_dim];
        for k in 0..self.arch.output_dim {
            e.fill(0.0);
            e[k] = 1.0;
            let row = self.input_vjp(&cache, &e)?;
            jac.row_mut(k).assign(&ndarray::ArrayView1::from(&row));
        }
        Ok(jac)
    }
}

impl ScoreFn for Mlp {
    fn dim(&self) -> usize {
        self.arch.output_dim
    }

    fn score(&self, x: &[f64], t: f64) -> Vec<f64> {
        self.forward(x, t)
            .unwrap_or_else(|_| vec![f64::NAN; self.arch.output_dim])
    }
}

impl TrainableScore for Mlp {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn score_and_backprop(
        &self,
        x: &[f64],
        t: f64,
        cotangent: &mut dyn FnMut(&[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let cache = match self.forward_cached(x, t) {
            Ok(c) => c,
            Err(_) => return vec![f64::NAN; self.arch.output_dim],
        };
        let ct = cotangent(&cache.output);
        self.backward(&cache, &ct, Some(grad));
        cache.output
    }
}
