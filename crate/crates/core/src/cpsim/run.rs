use std::fmt;
use std::str::FromStr;

use super::a2a::{a2a_conv, a2a_conv_pipelined};
use super::fabric::{ExecMode, SimGroup};
use super::fft::p2p_fft_causal_wrapper;
use super::p2p::{p2p_conv, p2p_conv_overlapped};
use super::shard::{gather, shard, Layout};
use crate::conv::direct_causal_conv;
use crate::error::{Error, Result};
use crate::filter::GroupSpec;
use crate::tensor::SeqTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    A2a,
    A2aPipelined,
    P2p,
    P2pOverlapped,
    P2pFft,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::A2a,
        Scheme::A2aPipelined,
        Scheme::P2p,
        Scheme::P2pOverlapped,
        Scheme::P2pFft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::A2a => "a2a",
            Scheme::A2aPipelined => "a2a-pipe",
            Scheme::P2p => "p2p",
            Scheme::P2pOverlapped => "p2p-overlap",
            Scheme::P2pFft => "p2p-fft",
        }
    }

    pub fn supports(self, layout: Layout) -> bool {
        matches!(self, Scheme::A2a | Scheme::A2aPipelined) || layout == Layout::Sequential
    }

    /// Stated accuracy bar against the direct oracle.
    pub fn tolerance(self) -> f64 {
        if self == Scheme::P2pFft {
            1e-8
        } else {
            1e-12
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL.into_iter().find(|sc| sc.name() == s.trim()).ok_or_else(|| {
            Error::Config(format!(
                "unknown scheme `{s}` (expected a2a, a2a-pipe, p2p, p2p-overlap or p2p-fft)"
            ))
        })
    }
}

#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub output: SeqTensor<f64>,
    pub max_abs_err: f64,
    pub group: SimGroup,
}

impl SchemeRun {
    pub fn messages(&self) -> usize {
        self.group.messages(None)
    }

    pub fn elements(&self) -> u64 {
        self.group.total_elements()
    }
}

/// Shards `x`, runs `scheme` on a fresh group and compares the gathered
/// result with the unsharded direct convolution.
pub fn run_scheme(
    scheme: Scheme,
    x: &SeqTensor<f64>,
    groups: &GroupSpec,
    n_ranks: usize,
    layout: Layout,
    n_pipe: usize,
    mode: ExecMode,
) -> Result<SchemeRun> {
    if scheme == Scheme::P2pFft && !super::fft::FFT_RANKS.contains(&n_ranks) {
        return Err(Error::UnsupportedRanks {
            ranks: n_ranks,
            scheme: super::fft::P2P_FFT,
        });
    }
    let mut grp = SimGroup::new(n_ranks)?.with_mode(mode);
    if !scheme.supports(layout) {
        return Err(Error::Config(format!("{scheme} needs the sequential layout")));
    }
    let output = match scheme {
        Scheme::P2pFft => p2p_fft_causal_wrapper(x, groups, &mut grp)?,
        _ => {
            let xs = shard(x, n_ranks, layout)?;
            let ys = match scheme {
                Scheme::A2a => a2a_conv(&xs, groups, &mut grp)?,
                Scheme::A2aPipelined => a2a_conv_pipelined(&xs, groups, &mut grp, n_pipe)?,
                Scheme::P2p => p2p_conv(&xs, groups, &mut grp)?,
                Scheme::P2pOverlapped => p2p_conv_overlapped(&xs, groups, &mut grp)?,
                Scheme::P2pFft => unreachable!(),
            };
            gather(&ys)
        }
    };
    let oracle = direct_causal_conv(x, groups)?;
    Ok(SchemeRun {
        max_abs_err: output.max_abs_diff(&oracle),
        output,
        group: grp,
    })
}
