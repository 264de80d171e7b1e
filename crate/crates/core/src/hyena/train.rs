use super::config::{Backend, Variant};
use super::init::HyenaOptions;
use super::layout::{stack_backward, stack_forward_saved, LayoutSpec, Stack};
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::rng;
use crate::tensor::SeqTensor;

/// Settings of the shift-prediction smoke run.
#[derive(Debug, Clone, PartialEq)]
pub struct SmokeOptions {
    pub steps: usize,
    pub seed: u64,
    pub lr: f64,
    pub width: usize,
    pub len: usize,
    pub batch: usize,
    /// Constant added to every input sample.
    pub offset: f64,
    pub noise: f64,
    pub proj_gain: f64,
}

impl Default for SmokeOptions {
    fn default() -> Self {
        Self {
            steps: 200,
            seed: 0,
            lr: 0.05,
            width: 8,
            len: 32,
            batch: 4,
            offset: 1.0,
            noise: 0.5,
            proj_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss before each step, then the final loss.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().expect("at least one loss")
    }

    pub fn ratio(&self) -> f64 {
        self.last() / self.initial()
    }
}

/// The task: predict the input delayed by one step.
pub fn shift_task(opts: &SmokeOptions) -> Vec<(SeqTensor<f64>, SeqTensor<f64>)> {
    let mut r = rng::fork(opts.seed, 1);
    (0..opts.batch)
        .map(|_| {
            let noise = rng::uniform_tensor::<f64>(&mut r, opts.width, opts.len);
            let x = noise.map(|v| opts.offset + opts.noise * v);
            let target = SeqTensor::from_fn(opts.width, opts.len, |c, t| if t == 0 { 0.0 } else { x.get(c, t - 1) });
            (x, target)
        })
        .collect()
}

/// Residual two-layer [SE, LI] stack used by the smoke run.
pub fn smoke_stack(opts: &SmokeOptions) -> Result<Stack> {
    let hopts = HyenaOptions {
        width: opts.width,
        len: opts.len,
        block_size: 8,
        backend: Backend::Blocked,
        proj_gain: opts.proj_gain,
        ..HyenaOptions::default()
    };
    let mut r = rng::fork(opts.seed, 0);
    let spec = LayoutSpec::random(vec![Variant::Se, Variant::Li], 1, &hopts, &mut r)?;
    let mut layers = spec.configs;
    for cfg in &mut layers {
        for g in [&mut cfg.feat_q, &mut cfg.feat_k, &mut cfg.feat_v] {
            let filters = g.filters().iter().map(|f| near_delta(f, &mut r)).collect();
            *g = g.with_filters(filters)?;
        }
    }
    Stack::new(layers, true)
}

fn near_delta(f: &FilterSpec, r: &mut rng::SimRng) -> FilterSpec {
    let mut taps = rng::filter_taps(r, f.len());
    taps.iter_mut().for_each(|t| *t *= 0.1);
    taps[0] += 1.0;
    FilterSpec::explicit(taps)
}

/// Mean squared error over the batch and its gradient w.r.t. the stack parameters.
pub fn loss_and_grad(stack: &Stack, data: &[(SeqTensor<f64>, SeqTensor<f64>)]) -> Result<(f64, Vec<f64>)> {
    let n = (data.len() * data[0].0.data().len()) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; stack.n_params()];
    for (x, target) in data {
        let (y, saved) = stack_forward_saved(x, stack)?;
        let diff = y.zip_map(target, |a, b| a - b);
        loss += diff.dot(&diff) / n;
        let (_, g) = stack_backward(&saved, &diff.scale(2.0 / n))?;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Plain gradient descent on the shift task.
pub fn smoke_train(opts: &SmokeOptions) -> Result<TrainReport> {
    let data = shift_task(opts);
    let mut stack = smoke_stack(opts)?;
    let mut losses = Vec::with_capacity(opts.steps + 1);
    for step in 0..=opts.steps {
        let (loss, grad) = loss_and_grad(&stack, &data)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { step });
        }
        losses.push(loss);
        if step == opts.steps {
            break;
        }
        let params: Vec<f64> = stack.params().iter().zip(&grad).map(|(p, g)| p - opts.lr * g).collect();
        stack = stack.with_params(&params);
        stack.project();
    }
    Ok(TrainReport { losses })
}
