use num_complex::Complex;

use super::fabric::{Envelope, SimGroup};
use super::shard::{gather, shard, Layout, ShardedSeq};
use crate::conv::check_channels;
use crate::error::{Error, Result};
use crate::fft::{bit_reverse_index, fft, ifft, is_pow2, next_pow2, twiddle, Cplx};
use crate::filter::GroupSpec;
use crate::tensor::SeqTensor;

pub const P2P_FFT: &str = "p2p-fft";

/// Rank counts the distributed transform accepts.
pub const FFT_RANKS: [usize; 4] = [1, 2, 4, 8];

/// Per-rank channel buffers of complex samples.
type RankState = Vec<Vec<Cplx>>;

/// Rank-resident spectra between the forward and inverse transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct FftTrace {
    /// `x_spectra[rank][channel][q]` holds global bin [`spectrum_bin`]`(N, rank, q)`.
    pub x_spectra: Vec<RankState>,
    pub h_spectra: Vec<RankState>,
}

/// Global frequency bin held at local index `q` on `rank`: `q N + bitrev(rank)`.
pub fn spectrum_bin(n_ranks: usize, rank: usize, q: usize) -> usize {
    q * n_ranks + bit_reverse_index(rank, n_ranks.trailing_zeros())
}

fn encode(state: &RankState) -> Vec<f64> {
    state.iter().flatten().flat_map(|c| [c.re, c.im]).collect()
}

fn decode(data: &[f64], channels: usize) -> RankState {
    let per = data.len() / (2 * channels);
    (0..channels)
        .map(|c| {
            data[2 * c * per..2 * (c + 1) * per]
                .chunks_exact(2)
                .map(|p| Complex::new(p[0], p[1]))
                .collect()
        })
        .collect()
}

/// Swaps whole buffers between partners `r` and `r ^ dist`.
fn swap_partners(grp: &mut SimGroup, state: &[RankState], dist: usize) -> Vec<RankState> {
    let outbox = state
        .iter()
        .enumerate()
        .map(|(r, s)| {
            vec![Envelope {
                peer: r ^ dist,
                data: encode(s),
            }]
        })
        .collect();
    let channels = state[0].len();
    grp.exchange(P2P_FFT, outbox)
        .into_iter()
        .map(|mut msgs| decode(&msgs.pop().expect("one partner message").data, channels))
        .collect()
}

fn note_residency(grp: &mut SimGroup, state: &[RankState]) {
    for (r, s) in state.iter().enumerate() {
        let samples = s.iter().map(Vec::len).max().unwrap_or(0);
        grp.note_resident(r, samples);
    }
}

/// `log2 N` distributed DiF stages followed by a local FFT; afterwards
/// rank `r` holds bins `q N + bitrev(r)` in natural local order `q`.
fn forward(grp: &mut SimGroup, mut state: Vec<RankState>) -> Vec<RankState> {
    let n = grp.n_ranks();
    let s = state[0][0].len();
    let total = n * s;
    let (mut dist, mut span) = (n / 2, total);
    while dist >= 1 {
        let other = swap_partners(grp, &state, dist);
        state = grp.run(|r| {
            let lower = r & dist == 0;
            let base = (r % dist) * s;
            state[r]
                .iter()
                .zip(&other[r])
                .map(|(own, peer)| {
                    (0..s)
                        .map(|m| {
                            if lower {
                                own[m] + peer[m]
                            } else {
                                (peer[m] - own[m]) * twiddle::<f64>(base + m, span)
                            }
                        })
                        .collect()
                })
                .collect()
        });
        note_residency(grp, &state);
        dist /= 2;
        span /= 2;
    }
    grp.run(|r| state[r].iter().map(|ch| fft(ch).expect("power-of-two shard")).collect())
}

/// Inverse of [`forward`]: local inverse FFT, then the distributed stages
/// in reverse order with conjugate twiddles and a factor 1/2 each.
fn inverse(grp: &mut SimGroup, state: Vec<RankState>) -> Vec<RankState> {
    let n = grp.n_ranks();
    let mut state: Vec<RankState> = grp.run(|r| state[r].iter().map(|ch| ifft(ch).expect("power-of-two shard")).collect());
    note_residency(grp, &state);
    let s = state[0][0].len();
    let (mut dist, mut span) = (1, 2 * s);
    while dist < n {
        let other = swap_partners(grp, &state, dist);
        state = grp.run(|r| {
            let lower = r & dist == 0;
            let base = (r % dist) * s;
            state[r]
                .iter()
                .zip(&other[r])
                .map(|(own, peer)| {
                    (0..s)
                        .map(|m| {
                            let (a, b) = if lower { (own[m], peer[m]) } else { (peer[m], own[m]) };
                            let t = twiddle::<f64>(base + m, span).conj() * b;
                            if lower {
                                (a + t) * 0.5
                            } else {
                                (a - t) * 0.5
                            }
                        })
                        .collect()
                })
                .collect()
        });
        note_residency(grp, &state);
        dist *= 2;
        span *= 2;
    }
    state
}

fn check_fft(xs: &ShardedSeq, hs: &ShardedSeq, grp: &SimGroup) -> Result<()> {
    let n = grp.n_ranks();
    if !FFT_RANKS.contains(&n) {
        return Err(Error::UnsupportedRanks { ranks: n, scheme: P2P_FFT });
    }
    if xs.n_ranks() != n || hs.n_ranks() != n {
        return Err(Error::Config(format!("operands must be sharded over the group's {n} ranks")));
    }
    if xs.layout() != Layout::Sequential || hs.layout() != Layout::Sequential {
        return Err(Error::Config("p2p-fft needs the sequential layout".into()));
    }
    if xs.channels() != hs.channels() || xs.seq_len() != hs.seq_len() {
        return Err(Error::Shape("filter must be sharded identically to the input".into()));
    }
    if !is_pow2(xs.shard_len()) {
        return Err(Error::NotPowerOfTwo(xs.shard_len()));
    }
    Ok(())
}

fn to_complex_state(xs: &ShardedSeq) -> Vec<RankState> {
    xs.shards().iter().map(|s| s.rows().map(crate::fft::to_complex).collect()).collect()
}

/// Circular convolution of each channel of `xs` with the matching channel
/// of `hs` through a distributed FFT.
pub fn p2p_fft_conv(xs: &ShardedSeq, hs: &ShardedSeq, grp: &mut SimGroup) -> Result<ShardedSeq> {
    p2p_fft_conv_traced(xs, hs, grp).map(|(y, _)| y)
}

pub fn p2p_fft_conv_traced(xs: &ShardedSeq, hs: &ShardedSeq, grp: &mut SimGroup) -> Result<(ShardedSeq, FftTrace)> {
    check_fft(xs, hs, grp)?;
    grp.set_filter_storage(vec![hs.channels() * hs.shard_len(); grp.n_ranks()]);
    let x_start = to_complex_state(xs);
    note_residency(grp, &x_start);
    let xf = forward(grp, x_start);
    let hf = forward(grp, to_complex_state(hs));
    let prod: Vec<RankState> = grp.run(|r| {
        xf[r]
            .iter()
            .zip(&hf[r])
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q).collect())
            .collect()
    });
    let y = inverse(grp, prod);
    let shards = y
        .iter()
        .map(|st| {
            let rows: Vec<Vec<f64>> = st.iter().map(|ch| ch.iter().map(|c| c.re).collect()).collect();
            SeqTensor::from_rows(&rows).expect("finite output")
        })
        .collect();
    let trace = FftTrace {
        x_spectra: xf,
        h_spectra: hf,
    };
    Ok((ShardedSeq::from_shards(shards, Layout::Sequential)?, trace))
}

/// Causal linear convolution through [`p2p_fft_conv`]: input and taps are
/// zero-padded to `2 next_pow2(l)` (at least `N`), sharded, convolved
/// circularly and truncated back to `l`.
pub fn p2p_fft_causal_wrapper(x: &SeqTensor<f64>, groups: &GroupSpec, grp: &mut SimGroup) -> Result<SeqTensor<f64>> {
    check_channels(x, groups)?;
    let taps = groups.materialize()?;
    let len = x.seq_len();
    let n = (2 * next_pow2(len)).max(grp.n_ranks());
    let xp = SeqTensor::from_fn(x.channels(), n, |c, t| if t < len { x.get(c, t) } else { 0.0 });
    let hp = SeqTensor::from_fn(x.channels(), n, |c, t| {
        let h = &taps[groups.group_of(c)];
        if t < len && t < h.len() {
            h[t]
        } else {
            0.0
        }
    });
    let ranks = grp.n_ranks();
    let y = p2p_fft_conv(
        &shard(&xp, ranks, Layout::Sequential)?,
        &shard(&hp, ranks, Layout::Sequential)?,
        grp,
    )?;
    Ok(gather(&y).slice_time(0..len))
}
