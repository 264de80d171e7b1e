use super::config::{Backend, HyenaConfig};
use crate::blockconv::{block_conv, two_stage_backward, two_stage_eligible, two_stage_forward_saved, TwoStageContext};
use crate::conv::{direct_conv_backward, direct_with_taps};
use crate::error::Result;
use crate::fft::fft_causal_conv;
use crate::tensor::SeqTensor;

/// Forward state kept for [`hyena_backward`].
#[derive(Debug, Clone)]
pub struct HyenaSaved {
    cfg: HyenaConfig,
    x: SeqTensor<f64>,
    /// `xW`, `xU`, `xP` before the featurizer convolutions.
    proj: [SeqTensor<f64>; 3],
    q: SeqTensor<f64>,
    k: SeqTensor<f64>,
    v: SeqTensor<f64>,
    /// `q * conv(k * v)`, the input of the output projection.
    z: SeqTensor<f64>,
    inner: InnerSaved,
    feat_taps: [Vec<Vec<f64>>; 3],
}

#[derive(Debug, Clone)]
enum InnerSaved {
    TwoStage(TwoStageContext<f64>),
    Generic {
        u: SeqTensor<f64>,
        c: SeqTensor<f64>,
        taps: Vec<Vec<f64>>,
    },
}

impl HyenaSaved {
    pub fn config(&self) -> &HyenaConfig {
        &self.cfg
    }
}

/// Gradients of one operator, parameters in [`HyenaConfig::params`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct HyenaGrads {
    pub dx: SeqTensor<f64>,
    pub dw: Vec<f64>,
    pub du: Vec<f64>,
    pub dp: Vec<f64>,
    pub dm: Vec<f64>,
    pub d_feat_q: Vec<f64>,
    pub d_feat_k: Vec<f64>,
    pub d_feat_v: Vec<f64>,
    pub d_inner: Vec<f64>,
}

impl HyenaGrads {
    pub fn params(&self) -> Vec<f64> {
        [
            &self.dw,
            &self.du,
            &self.dp,
            &self.dm,
            &self.d_feat_q,
            &self.d_feat_k,
            &self.d_feat_v,
            &self.d_inner,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }
}

pub fn hyena_forward(x: &SeqTensor<f64>, cfg: &HyenaConfig) -> Result<SeqTensor<f64>> {
    hyena_forward_saved(x, cfg).map(|(y, _)| y)
}

/// Inner convolution `conv(h_G, u)` with the configured backend.
pub fn inner_conv(u: &SeqTensor<f64>, cfg: &HyenaConfig) -> Result<SeqTensor<f64>> {
    match cfg.backend {
        Backend::Direct => crate::conv::direct_causal_conv(u, &cfg.inner),
        Backend::Blocked => block_conv(u, &cfg.inner, cfg.block_size),
        Backend::Fft => fft_causal_conv(u, &cfg.inner),
    }
}

fn uses_two_stage(cfg: &HyenaConfig) -> bool {
    cfg.backend == Backend::Blocked && two_stage_eligible(cfg.inner.max_filter_len(), cfg.block_size)
}

pub fn hyena_forward_saved(x: &SeqTensor<f64>, cfg: &HyenaConfig) -> Result<(SeqTensor<f64>, HyenaSaved)> {
    cfg.validate_input(x)?;
    let feats = [&cfg.feat_q, &cfg.feat_k, &cfg.feat_v];
    let feat_taps = [feats[0].materialize()?, feats[1].materialize()?, feats[2].materialize()?];
    let proj = [cfg.w.apply(x), cfg.u.apply(x), cfg.p.apply(x)];
    let [q, k, v]: [SeqTensor<f64>; 3] = std::array::from_fn(|i| direct_with_taps(&proj[i], &feat_taps[i], feats[i].group_size()));

    let (z, inner) = if uses_two_stage(cfg) {
        let (z, ctx) = two_stage_forward_saved(&v, Some(&q), Some(&k), &cfg.inner, cfg.block_size)?;
        (z, InnerSaved::TwoStage(ctx))
    } else {
        let u = k.hadamard(&v)?;
        let c = inner_conv(&u, cfg)?;
        let z = q.hadamard(&c)?;
        let taps = cfg.inner.materialize()?;
        (z, InnerSaved::Generic { u, c, taps })
    };
    let y = cfg.m.apply(&z);
    let saved = HyenaSaved {
        cfg: cfg.clone(),
        x: x.clone(),
        proj,
        q,
        k,
        v,
        z,
        inner,
        feat_taps,
    };
    Ok((y, saved))
}

/// Exact gradients of `sum(dy * hyena_forward(x))`.
pub fn hyena_backward(saved: &HyenaSaved, dy: &SeqTensor<f64>) -> Result<HyenaGrads> {
    let cfg = &saved.cfg;
    saved.z.ensure_same_shape(dy, "dy vs operator output")?;
    let (dz, dm) = cfg.m.backward(&saved.z, dy);

    let (dq, dk, dv, dh_inner) = match &saved.inner {
        InnerSaved::TwoStage(ctx) => {
            let g = two_stage_backward(ctx, &dz)?;
            (g.dq.expect("gated"), g.dk.expect("gated"), g.dv, g.dh)
        }
        InnerSaved::Generic { u, c, taps } => {
            let dq = dz.hadamard(c)?;
            let dc = dz.hadamard(&saved.q)?;
            let (du, dh) = direct_conv_backward(u, taps, cfg.inner.group_size(), &dc)?;
            (dq, du.hadamard(&saved.v)?, du.hadamard(&saved.k)?, dh)
        }
    };
    let d_inner = cfg.inner.pullback(&dh_inner);

    let feats = [&cfg.feat_q, &cfg.feat_k, &cfg.feat_v];
    let projs = [&cfg.w, &cfg.u, &cfg.p];
    let upstream = [dq, dk, dv];
    let mut dx = SeqTensor::zeros(saved.x.channels(), saved.x.seq_len());
    let mut d_proj = Vec::with_capacity(3);
    let mut d_feat = Vec::with_capacity(3);
    for i in 0..3 {
        let (dpre, dh) = direct_conv_backward(&saved.proj[i], &saved.feat_taps[i], feats[i].group_size(), &upstream[i])?;
        d_feat.push(feats[i].pullback(&dh));
        let (dxi, dpi) = projs[i].backward(&saved.x, &dpre);
        dx = dx.add(&dxi)?;
        d_proj.push(dpi);
    }
    let [d_feat_q, d_feat_k, d_feat_v]: [Vec<f64>; 3] = d_feat.try_into().expect("three featurizers");
    let [dw, du, dp]: [Vec<f64>; 3] = d_proj.try_into().expect("three projections");
    Ok(HyenaGrads {
        dx,
        dw,
        du,
        dp,
        dm,
        d_feat_q,
        d_feat_k,
        d_feat_v,
        d_inner,
    })
}
