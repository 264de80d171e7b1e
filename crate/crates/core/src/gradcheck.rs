//! Central finite differences and the relative-error metric used by the
//! gradient checks.

use crate::blockconv::{two_stage_backward, two_stage_forward_saved};
use crate::cpsim::{a2a_conv, a2a_conv_backward, a2a_conv_saved, gather, shard, Layout, SimGroup};
use crate::error::Result;
use crate::filter::GroupSpec;
use crate::hyena::{
    hyena_backward, hyena_forward, hyena_forward_saved, layout_forward, stack_backward, stack_forward_saved, HyenaConfig, Stack,
};
use crate::tensor::SeqTensor;

/// Step used by every finite-difference check in the crate.
pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` at `x` with step `step`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, with 0 when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Relative error of the analytic gradient of `sum(dy * op(x))` against
/// central differences, over `x` and every operator parameter.
pub fn hyena_grad_error(x: &SeqTensor<f64>, cfg: &HyenaConfig, dy: &SeqTensor<f64>) -> Result<f64> {
    let (_, saved) = hyena_forward_saved(x, cfg)?;
    let g = hyena_backward(&saved, dy)?;
    let mut analytic = g.dx.data().to_vec();
    analytic.extend(g.params());
    let nx = x.data().len();
    let mut point = x.data().to_vec();
    point.extend(cfg.params());
    let numeric = central_diff(
        |p| {
            let xp = SeqTensor::new(x.channels(), x.seq_len(), p[..nx].to_vec()).expect("shape");
            hyena_forward(&xp, &cfg.with_params(&p[nx..])).expect("forward").dot(dy)
        },
        &point,
        FD_STEP,
    );
    Ok(rel_error(&analytic, &numeric))
}

/// As [`hyena_grad_error`] for a layer stack.
pub fn stack_grad_error(x: &SeqTensor<f64>, stack: &Stack, dy: &SeqTensor<f64>) -> Result<f64> {
    let (_, saved) = stack_forward_saved(x, stack)?;
    let (dx, dp) = stack_backward(&saved, dy)?;
    let mut analytic = dx.data().to_vec();
    analytic.extend(dp);
    let nx = x.data().len();
    let mut point = x.data().to_vec();
    point.extend(stack.params());
    let numeric = central_diff(
        |p| {
            let xp = SeqTensor::new(x.channels(), x.seq_len(), p[..nx].to_vec()).expect("shape");
            layout_forward(&xp, &stack.with_params(&p[nx..])).expect("forward").dot(dy)
        },
        &point,
        FD_STEP,
    );
    Ok(rel_error(&analytic, &numeric))
}

/// Gradient check of the gated two-stage convolution over `v`, the gates
/// and the filter parameters of `groups`.
pub fn two_stage_grad_error(
    v: &SeqTensor<f64>,
    q: Option<&SeqTensor<f64>>,
    k: Option<&SeqTensor<f64>>,
    groups: &GroupSpec,
    block_size: usize,
    dy: &SeqTensor<f64>,
) -> Result<f64> {
    let (_, ctx) = two_stage_forward_saved(v, q, k, groups, block_size)?;
    let g = two_stage_backward(&ctx, dy)?;
    let mut analytic = g.dv.data().to_vec();
    if let Some(dq) = &g.dq {
        analytic.extend_from_slice(dq.data());
    }
    if let Some(dk) = &g.dk {
        analytic.extend_from_slice(dk.data());
    }
    analytic.extend(groups.pullback(&g.dh));

    let n = v.data().len();
    let mut point = v.data().to_vec();
    for t in [q, k].into_iter().flatten() {
        point.extend_from_slice(t.data());
    }
    point.extend(groups.params());
    let (d, l) = (v.channels(), v.seq_len());
    let numeric = central_diff(
        |p| {
            let tensor = |i: usize| SeqTensor::new(d, l, p[i * n..(i + 1) * n].to_vec()).expect("shape");
            let mut at = 1;
            let vv = tensor(0);
            let qq = q.map(|_| {
                at += 1;
                tensor(at - 1)
            });
            let kk = k.map(|_| {
                at += 1;
                tensor(at - 1)
            });
            let gg = groups.with_params(&p[at * n..]);
            crate::blockconv::two_stage_forward(&vv, qq.as_ref(), kk.as_ref(), &gg, block_size)
                .expect("forward")
                .dot(dy)
        },
        &point,
        FD_STEP,
    );
    Ok(rel_error(&analytic, &numeric))
}

/// Gradient check of the sharded all-to-all convolution and its backward
/// pass over the input and the filter parameters.
pub fn a2a_grad_error(x: &SeqTensor<f64>, groups: &GroupSpec, n_ranks: usize, layout: Layout, dy: &SeqTensor<f64>) -> Result<f64> {
    let mut grp = SimGroup::new(n_ranks)?;
    let xs = shard(x, n_ranks, layout)?;
    let (_, saved) = a2a_conv_saved(&xs, groups, &mut grp)?;
    let g = a2a_conv_backward(&saved, &shard(dy, n_ranks, layout)?, &mut grp)?;
    let mut analytic = gather(&g.dx).data().to_vec();
    analytic.extend(groups.pullback(&g.dh));
    let nx = x.data().len();
    let mut point = x.data().to_vec();
    point.extend(groups.params());
    let numeric = central_diff(
        |p| {
            let xp = SeqTensor::new(x.channels(), x.seq_len(), p[..nx].to_vec()).expect("shape");
            let mut grp = SimGroup::new(n_ranks).expect("ranks");
            let ys = a2a_conv(
                &shard(&xp, n_ranks, layout).expect("shard"),
                &groups.with_params(&p[nx..]),
                &mut grp,
            )
            .expect("forward");
            gather(&ys).dot(dy)
        },
        &point,
        FD_STEP,
    );
    Ok(rel_error(&analytic, &numeric))
}
