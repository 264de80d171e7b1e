use super::a2a::check_group;
use super::fabric::{Envelope, SimGroup};
use super::shard::{Layout, ShardedSeq};
use crate::conv::direct_with_taps;
use crate::error::{Error, Result};
use crate::filter::GroupSpec;
use crate::tensor::SeqTensor;

pub const P2P: &str = "p2p";
pub const P2P_OVERLAPPED: &str = "p2p-overlap";

/// Halo width `max(lh) - 1` after checking the p2p preconditions.
fn halo_width(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup) -> Result<usize> {
    check_group(xs, groups, grp)?;
    if xs.layout() != Layout::Sequential {
        return Err(Error::Config("p2p schemes need the sequential layout".into()));
    }
    let halo = groups.max_filter_len() - 1;
    if xs.n_ranks() > 1 && xs.shard_len() < halo {
        return Err(Error::Shape(format!(
            "shard length {} is shorter than the halo of {halo} steps",
            xs.shard_len()
        )));
    }
    let taps: usize = groups.filters().iter().map(|f| f.len()).sum();
    grp.set_filter_storage(vec![taps; grp.n_ranks()]);
    Ok(halo)
}

/// Each rank `r < N - 1` sends its last `halo` steps to `r + 1`.
fn send_halos(grp: &mut SimGroup, scheme: &'static str, xs: &ShardedSeq, halo: usize) -> Vec<Option<SeqTensor<f64>>> {
    let n = grp.n_ranks();
    if halo == 0 {
        return vec![None; n];
    }
    let s = xs.shard_len();
    let outbox = (0..n)
        .map(|r| {
            if r + 1 < n {
                vec![Envelope {
                    peer: r + 1,
                    data: xs.shard(r).slice_time(s - halo..s).into_data(),
                }]
            } else {
                Vec::new()
            }
        })
        .collect();
    let d = xs.channels();
    grp.exchange(scheme, outbox)
        .into_iter()
        .map(|mut msgs| msgs.pop().map(|e| SeqTensor::new(d, halo, e.data).expect("halo shape")))
        .collect()
}

/// Halo-exchange convolution: prepend the predecessor's last `lh - 1`
/// steps, convolve locally, drop the prefix.
pub fn p2p_conv(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup) -> Result<ShardedSeq> {
    let halo = halo_width(xs, groups, grp)?;
    let taps = groups.materialize()?;
    let gs = groups.group_size();
    let halos = send_halos(grp, P2P, xs, halo);
    let s = xs.shard_len();
    let ys = grp.run(|r| match &halos[r] {
        Some(h) => {
            let ext = SeqTensor::concat_time(&[h.clone(), xs.shard(r).clone()]).expect("same channels");
            direct_with_taps(&ext, &taps, gs).slice_time(halo..halo + s)
        }
        None => direct_with_taps(xs.shard(r), &taps, gs),
    });
    ShardedSeq::from_shards(ys, Layout::Sequential)
}

/// Contribution of a predecessor halo to the first `halo` outputs of a
/// shard: positions `halo .. 2 halo` of `conv(halo || zeros(halo))`.
pub fn overlap_correction(halo: &SeqTensor<f64>, taps: &[Vec<f64>], group_size: usize) -> SeqTensor<f64> {
    let w = halo.seq_len();
    let padded = SeqTensor::concat_time(&[halo.clone(), SeqTensor::zeros(halo.channels(), w)]).expect("same channels");
    direct_with_taps(&padded, taps, group_size).slice_time(w..2 * w)
}

// phase 0 runs the local pass, the halo arrives in phase 1
const ARRIVAL: usize = 1;
const CORRECT: usize = 2;

/// A received halo that may only be read after its arrival phase.
pub(crate) struct HaloSlot {
    data: Option<SeqTensor<f64>>,
    arrived_at: usize,
}

impl HaloSlot {
    pub(crate) fn read(&self, phase: usize) -> Option<&SeqTensor<f64>> {
        assert!(
            phase >= self.arrived_at,
            "halo read in phase {phase} before its arrival in phase {}",
            self.arrived_at
        );
        self.data.as_ref()
    }
}

/// Per-rank view of the overlapped schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTrace {
    /// Zero-padded local convolution computed before any halo arrived.
    pub local: Vec<SeqTensor<f64>>,
    /// Correction added to the first `lh - 1` outputs, absent on rank 0.
    pub corrections: Vec<Option<SeqTensor<f64>>>,
}

/// [`p2p_conv`] with the local convolution started before the halo
/// exchange and a correction term added once the halo arrives.
pub fn p2p_conv_overlapped(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup) -> Result<ShardedSeq> {
    p2p_conv_overlapped_traced(xs, groups, grp).map(|(y, _)| y)
}

pub fn p2p_conv_overlapped_traced(xs: &ShardedSeq, groups: &GroupSpec, grp: &mut SimGroup) -> Result<(ShardedSeq, OverlapTrace)> {
    let halo = halo_width(xs, groups, grp)?;
    let taps = groups.materialize()?;
    let gs = groups.group_size();
    let mut slots: Vec<HaloSlot> = (0..grp.n_ranks())
        .map(|_| HaloSlot {
            data: None,
            arrived_at: ARRIVAL,
        })
        .collect();

    let local = grp.run(|r| direct_with_taps(xs.shard(r), &taps, gs));
    for (slot, h) in slots.iter_mut().zip(send_halos(grp, P2P_OVERLAPPED, xs, halo)) {
        slot.data = h;
    }
    let corrections = grp.run(|r| slots[r].read(CORRECT).map(|h| overlap_correction(h, &taps, gs)));

    let ys = local
        .iter()
        .zip(&corrections)
        .map(|(y, corr)| {
            let mut y = y.clone();
            if let Some(corr) = corr {
                for c in 0..y.channels() {
                    for (o, &v) in y.row_mut(c)[..halo].iter_mut().zip(corr.row(c)) {
                        *o += v;
                    }
                }
            }
            y
        })
        .collect();
    Ok((
        ShardedSeq::from_shards(ys, Layout::Sequential)?,
        OverlapTrace { local, corrections },
    ))
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub(crate) fn pending_slot() -> HaloSlot {
        HaloSlot {
            data: Some(SeqTensor::zeros(1, 1)),
            arrived_at: ARRIVAL,
        }
    }
}
