use std::ops::Range;

use super::fabric::{Envelope, SimGroup};
use super::shard::{Layout, ShardedSeq};
use crate::conv::{direct_conv_backward, direct_with_taps};
use crate::error::{Error, Result};
use crate::filter::GroupSpec;
use crate::tensor::SeqTensor;

pub const A2A: &str = "a2a";
pub const A2A_BACKWARD: &str = "a2a-bwd";
pub const A2A_PIPELINED: &str = "a2a-pipe";

pub(crate) fn check_group(xs: &ShardedSeq, groups: &GroupSpec, grp: &SimGroup) -> Result<()> {
    if xs.n_ranks() != grp.n_ranks() {
        return Err(Error::Config(format!(
            "sequence is sharded over {} ranks but the group has {}",
            xs.n_ranks(),
            grp.n_ranks()
        )));
    }
    if xs.channels() != groups.channels() {
        return Err(Error::ChannelMismatch {
            expected: groups.channels(),
            got: xs.channels(),
        });
    }
    Ok(())
}

/// Channel slab owned by each rank after the first exchange.
fn owner_slabs(xs: &ShardedSeq, groups: &GroupSpec, grp: &SimGroup) -> Result<Vec<Range<usize>>> {
    check_group(xs, groups, grp)?;
    let (d, n) = (xs.channels(), grp.n_ranks());
    if d % n != 0 {
        return Err(Error::Divisibility(format!("{d} channels do not split over {n} ranks")));
    }
    let slab = d / n;
    if slab % groups.group_size() != 0 {
        return Err(Error::Divisibility(format!(
            "channel slab of {slab} would split filter groups of size {}",
            groups.group_size()
        )));
    }
    Ok((0..n).map(|s| s * slab..(s + 1) * slab).collect())
}

/// Sequence split to channel split: rank `s` receives channels `ranges[s]`
/// over the full time axis.
fn to_channel_split(
    grp: &mut SimGroup,
    scheme: &'static str,
    xs: &[SeqTensor<f64>],
    layout: Layout,
    ranges: &[Range<usize>],
) -> Vec<SeqTensor<f64>> {
    let n = grp.n_ranks();
    let shard_len = xs[0].seq_len();
    let len = shard_len * n;
    let outbox = xs
        .iter()
        .map(|shard| {
            ranges
                .iter()
                .enumerate()
                .map(|(s, rg)| Envelope {
                    peer: s,
                    data: shard.slice_channels(rg.clone()).into_data(),
                })
                .collect()
        })
        .collect();
    let inbox = grp.all_to_all(scheme, outbox);
    inbox
        .into_iter()
        .enumerate()
        .map(|(s, msgs)| {
            let rows = ranges[s].len();
            let mut slab = SeqTensor::zeros(rows, len);
            for env in msgs {
                let piece = SeqTensor::new(rows, shard_len, env.data).expect("slab shape");
                let mut at = 0;
                for seg in layout.segments(len, n, env.peer) {
                    for c in 0..rows {
                        slab.row_mut(c)[seg.clone()].copy_from_slice(&piece.row(c)[at..at + seg.len()]);
                    }
                    at += seg.len();
                }
            }
            slab
        })
        .collect()
}

/// Inverse of [`to_channel_split`]: writes each rank's slab back into the
/// channel rows `ranges[s]` of every sequence shard in `out`.
fn to_sequence_split(
    grp: &mut SimGroup,
    scheme: &'static str,
    slabs: &[SeqTensor<f64>],
    layout: Layout,
    ranges: &[Range<usize>],
    out: &mut [SeqTensor<f64>],
) {
    let n = grp.n_ranks();
    let len = slabs[0].seq_len();
    let outbox = slabs
        .iter()
        .map(|slab| {
            (0..n)
                .map(|r| {
                    let parts: Vec<_> = layout.segments(len, n, r).into_iter().map(|seg| slab.slice_time(seg)).collect();
                    Envelope {
                        peer: r,
                        data: SeqTensor::concat_time(&parts).expect("same rows").into_data(),
                    }
                })
                .collect()
        })
        .collect();
    let inbox = grp.all_to_all(scheme, outbox);
    for (r, msgs) in inbox.into_iter().enumerate() {
        let shard_len = out[r].seq_len();
        for env in msgs {
            let rg = ranges[env.peer].clone();
            let piece = SeqTensor::new(rg.len(), shard_len, env.data).expect("piece shape");
            for (i, c) in rg.enumerate() {
                out[r].row_mut(c).copy_from_slice(piece.row(i));
            }
        }
    }
}

fn local_taps(groups: &GroupSpec, ranges: &[Range<usize>]) -> Result<Vec<Vec<Vec<f64>>>> {
    ranges.iter().map(|rg| groups.slice(rg.start, rg.end)?.materialize()).collect()
}

/// State kept by [`a2a_conv_saved`] for [`a2a_conv_backward`].
#[derive(Debug, Clone)]
pub struct A2aSaved {
    slabs: Vec<SeqTensor<f64>>,
    taps: Vec<Vec<Vec<f64>>>,
    group_size: usize,
    ranges: Vec<Range<usize>>,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2aGrads {
    pub dx: ShardedSeq,
    /// Tap gradients for every group, in global group order.
    pub dh: Vec<Vec<f64>>,
}

pub fn a2a_conv(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup) -> Result<ShardedSeq> {
    a2a_conv_saved(xs, groups, grp).map(|(y, _)| y)
}

/// All-to-all convolution: trade the sequence split for a channel split,
/// convolve full-length slabs with rank-local filters, trade back.
pub fn a2a_conv_saved(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup) -> Result<(ShardedSeq, A2aSaved)> {
    let ranges = owner_slabs(xs, groups, grp)?;
    let taps = local_taps(groups, &ranges)?;
    grp.set_filter_storage(taps.iter().map(|t| t.iter().map(Vec::len).sum()).collect());
    let layout = xs.layout();
    let slabs = to_channel_split(grp, A2A, xs.shards(), layout, &ranges);
    let gs = groups.group_size();
    let ys = grp.run(|s| direct_with_taps(&slabs[s], &taps[s], gs));
    let mut out: Vec<_> = xs.shards().iter().map(|s| SeqTensor::zeros(s.channels(), s.seq_len())).collect();
    to_sequence_split(grp, A2A, &ys, layout, &ranges, &mut out);
    let saved = A2aSaved {
        slabs,
        taps,
        group_size: gs,
        ranges,
        layout,
    };
    Ok((ShardedSeq::from_shards(out, layout)?, saved))
}

/// Backward of [`a2a_conv`]: two more all-to-all rounds around the local
/// convolution adjoint.
pub fn a2a_conv_backward(saved: &A2aSaved, dys: &ShardedSeq, grp: &mut SimGroup) -> Result<A2aGrads> {
    let n = grp.n_ranks();
    if dys.n_ranks() != n || dys.layout() != saved.layout {
        return Err(Error::Config(
            "upstream gradient is sharded differently from the forward input".into(),
        ));
    }
    if dys.seq_len() != saved.slabs[0].seq_len() || dys.channels() != saved.ranges[n - 1].end {
        return Err(Error::Shape("upstream gradient shape differs from the forward output".into()));
    }
    let dslabs = to_channel_split(grp, A2A_BACKWARD, dys.shards(), saved.layout, &saved.ranges);
    let local = grp.run(|s| direct_conv_backward(&saved.slabs[s], &saved.taps[s], saved.group_size, &dslabs[s]));
    let mut dx_slabs = Vec::with_capacity(n);
    let mut dh = Vec::new();
    for res in local {
        let (dx, g) = res?;
        dx_slabs.push(dx);
        dh.extend(g);
    }
    let mut out: Vec<_> = dys.shards().iter().map(|s| SeqTensor::zeros(s.channels(), s.seq_len())).collect();
    to_sequence_split(grp, A2A_BACKWARD, &dx_slabs, saved.layout, &saved.ranges, &mut out);
    Ok(A2aGrads {
        dx: ShardedSeq::from_shards(out, saved.layout)?,
        dh,
    })
}

/// [`a2a_conv`] split into `n_pipe` channel segments, each its own pair of
/// all-to-all rounds. Segment `p` carries sub-slab `p` of every owner slab.
pub fn a2a_conv_pipelined(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup, n_pipe: usize) -> Result<ShardedSeq> {
    let owners = owner_slabs(xs, groups, grp)?;
    let slab = owners[0].len();
    if n_pipe == 0 || slab % n_pipe != 0 {
        return Err(Error::Divisibility(format!(
            "channel slab of {slab} does not split into {n_pipe} pipeline segments"
        )));
    }
    let owner_taps = local_taps(groups, &owners)?;
    grp.set_filter_storage(owner_taps.iter().map(|t| t.iter().map(Vec::len).sum()).collect());
    let per_channel = groups.to_depthwise();
    let seg = slab / n_pipe;
    let layout = xs.layout();
    let mut out: Vec<_> = xs.shards().iter().map(|s| SeqTensor::zeros(s.channels(), s.seq_len())).collect();
    for p in 0..n_pipe {
        let ranges: Vec<_> = owners.iter().map(|o| o.start + p * seg..o.start + (p + 1) * seg).collect();
        let taps = local_taps(&per_channel, &ranges)?;
        let slabs = to_channel_split(grp, A2A_PIPELINED, xs.shards(), layout, &ranges);
        let ys = grp.run(|s| direct_with_taps(&slabs[s], &taps[s], 1));
        to_sequence_split(grp, A2A_PIPELINED, &ys, layout, &ranges, &mut out);
    }
    ShardedSeq::from_shards(out, layout)
}
