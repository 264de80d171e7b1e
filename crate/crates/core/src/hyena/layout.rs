use super::config::{HyenaConfig, Variant};
use super::init::{random_config, HyenaOptions};
use super::op::{hyena_backward, hyena_forward_saved, HyenaSaved};
use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::tensor::SeqTensor;

/// A repeated pattern of operator variants with one config per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSpec {
    pub pattern: Vec<Variant>,
    pub depth: usize,
    pub configs: Vec<HyenaConfig>,
}

impl LayoutSpec {
    /// Draws every layer's config from `opts`.
    pub fn random(pattern: Vec<Variant>, depth: usize, opts: &HyenaOptions, r: &mut SimRng) -> Result<Self> {
        let configs = (0..depth)
            .flat_map(|_| pattern.iter().copied())
            .map(|v| random_config(v, opts, r))
            .collect::<Result<_>>()?;
        Ok(Self { pattern, depth, configs })
    }

    pub fn n_layers(&self) -> usize {
        self.pattern.len() * self.depth
    }
}

/// Layers applied in order, optionally as `x + layer(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    layers: Vec<HyenaConfig>,
    residual: bool,
}

pub fn build_layout(spec: &LayoutSpec) -> Result<Stack> {
    if spec.pattern.is_empty() || spec.depth == 0 {
        return Err(Error::Config("layout needs a nonempty pattern and depth >= 1".into()));
    }
    if spec.configs.len() != spec.n_layers() {
        return Err(Error::Config(format!(
            "layout expects {} layer configs, got {}",
            spec.n_layers(),
            spec.configs.len()
        )));
    }
    for (i, cfg) in spec.configs.iter().enumerate() {
        let want = spec.pattern[i % spec.pattern.len()];
        if cfg.variant != want {
            return Err(Error::Config(format!(
                "layer {i} is {} but the pattern calls for {want}",
                cfg.variant
            )));
        }
    }
    Stack::new(spec.configs.clone(), false)
}

impl Stack {
    pub fn new(layers: Vec<HyenaConfig>, residual: bool) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Config("empty stack".into()))?;
        for cfg in &layers {
            cfg.validate()?;
            if cfg.width != first.width {
                return Err(Error::ChannelMismatch {
                    expected: first.width,
                    got: cfg.width,
                });
            }
        }
        Ok(Self { layers, residual })
    }

    pub fn with_residual(mut self, residual: bool) -> Self {
        self.residual = residual;
        self
    }

    pub fn residual(&self) -> bool {
        self.residual
    }

    pub fn layers(&self) -> &[HyenaConfig] {
        &self.layers
    }

    pub fn width(&self) -> usize {
        self.layers[0].width
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(HyenaConfig::params).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(HyenaConfig::n_params).sum()
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.n_params(), "stack parameter count");
        let mut off = 0;
        let layers = self
            .layers
            .iter()
            .map(|cfg| {
                let n = cfg.n_params();
                let out = cfg.with_params(&params[off..off + n]);
                off += n;
                out
            })
            .collect();
        Self {
            layers,
            residual: self.residual,
        }
    }

    pub fn project(&mut self) {
        self.layers.iter_mut().for_each(HyenaConfig::project);
    }
}

pub fn layout_forward(x: &SeqTensor<f64>, stack: &Stack) -> Result<SeqTensor<f64>> {
    stack_forward_saved(x, stack).map(|(y, _)| y)
}

#[derive(Debug, Clone)]
pub struct StackSaved {
    layers: Vec<HyenaSaved>,
    residual: bool,
}

pub fn stack_forward_saved(x: &SeqTensor<f64>, stack: &Stack) -> Result<(SeqTensor<f64>, StackSaved)> {
    let mut h = x.clone();
    let mut saved = Vec::with_capacity(stack.layers.len());
    for cfg in &stack.layers {
        let (out, s) = hyena_forward_saved(&h, cfg)?;
        h = if stack.residual { h.add(&out)? } else { out };
        saved.push(s);
    }
    Ok((
        h,
        StackSaved {
            layers: saved,
            residual: stack.residual,
        },
    ))
}

/// Returns `(dx, dparams)` with parameters in [`Stack::params`] order.
pub fn stack_backward(saved: &StackSaved, dy: &SeqTensor<f64>) -> Result<(SeqTensor<f64>, Vec<f64>)> {
    let mut g = dy.clone();
    let mut per_layer = Vec::with_capacity(saved.layers.len());
    for s in saved.layers.iter().rev() {
        let grads = hyena_backward(s, &g)?;
        g = if saved.residual { g.add(&grads.dx)? } else { grads.dx.clone() };
        per_layer.push(grads.params());
    }
    per_layer.reverse();
    Ok((g, per_layer.concat()))
}
