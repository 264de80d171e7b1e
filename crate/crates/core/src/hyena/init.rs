use rand::Rng;

use super::config::{Backend, HyenaConfig, Projection, Variant, DEFAULT_FEATURIZER_LEN, DEFAULT_MR_LEN, DEFAULT_SE_LEN};
use crate::error::{Error, Result};
use crate::filter::{decay_sweep, FilterSpec, GroupSpec};
use crate::rng::{self, SimRng};

/// Shape and initialization knobs for randomly drawn operators.
#[derive(Debug, Clone, PartialEq)]
pub struct HyenaOptions {
    pub width: usize,
    /// Sequence length; sets the LI filter length.
    pub len: usize,
    pub block_size: usize,
    pub featurizer_len: usize,
    pub featurizer_group_size: usize,
    pub se_len: usize,
    pub mr_len: usize,
    pub li_order: usize,
    pub group_size: usize,
    pub backend: Backend,
    /// Rank of factored projections; dense when `None`.
    pub low_rank: Option<usize>,
    pub decay_base: f64,
    /// Multiplies the `1/sqrt(d)` projection scale.
    pub proj_gain: f64,
}

impl Default for HyenaOptions {
    fn default() -> Self {
        Self {
            width: 8,
            len: 64,
            block_size: 16,
            featurizer_len: DEFAULT_FEATURIZER_LEN,
            featurizer_group_size: 1,
            se_len: DEFAULT_SE_LEN,
            mr_len: DEFAULT_MR_LEN,
            li_order: 4,
            group_size: 1,
            backend: Backend::Blocked,
            low_rank: None,
            decay_base: std::f64::consts::E,
            proj_gain: 1.0,
        }
    }
}

fn projection(opts: &HyenaOptions, r: &mut SimRng) -> Projection {
    let d = opts.width;
    let std = opts.proj_gain / (d as f64).sqrt();
    match opts.low_rank {
        None => Projection::Dense(rng::normal_matrix(r, d, d, std)),
        Some(rank) => Projection::LowRank {
            left: rng::normal_matrix(r, d, rank, std),
            right: rng::normal_matrix(r, rank, d, 1.0 / (rank as f64).sqrt()),
        },
    }
}

fn groups_of(d: usize, group_size: usize, mut make: impl FnMut(usize) -> FilterSpec) -> Result<GroupSpec> {
    if group_size == 0 || !d.is_multiple_of(group_size) {
        return Err(Error::Divisibility(format!("group size {group_size} does not divide width {d}")));
    }
    GroupSpec::new(d, group_size, (0..d / group_size).map(&mut make).collect())
}

/// Inner filters for `variant`, one per group.
pub fn random_inner(variant: Variant, opts: &HyenaOptions, r: &mut SimRng) -> Result<GroupSpec> {
    let n_groups = opts.width / opts.group_size.max(1);
    let rates = decay_sweep(n_groups);
    groups_of(opts.width, opts.group_size, |g| match variant {
        Variant::Se => FilterSpec::explicit(rng::filter_taps(r, opts.se_len)),
        Variant::Mr => FilterSpec::Regularized {
            taps: rng::filter_taps(r, opts.mr_len),
            decay_rate: rates[g],
            base: opts.decay_base,
        },
        Variant::Li => {
            let n = opts.li_order;
            let poles: Vec<f64> = (0..n).map(|_| r.random_range(0.5..0.95)).collect();
            let residues = poles
                .iter()
                .map(|p| r.random_range(-1.0..1.0) * (1.0 - p) / n as f64 * 4.0)
                .collect();
            FilterSpec::ImplicitExpSum {
                residues,
                poles,
                len: opts.len,
            }
        }
    })
}

pub fn random_config(variant: Variant, opts: &HyenaOptions, r: &mut SimRng) -> Result<HyenaConfig> {
    let feat = |r: &mut SimRng| {
        groups_of(opts.width, opts.featurizer_group_size, |_| {
            FilterSpec::explicit(rng::filter_taps(r, opts.featurizer_len))
        })
    };
    let cfg = HyenaConfig {
        width: opts.width,
        w: projection(opts, r),
        u: projection(opts, r),
        p: projection(opts, r),
        m: projection(opts, r),
        feat_q: feat(r)?,
        feat_k: feat(r)?,
        feat_v: feat(r)?,
        inner: random_inner(variant, opts, r)?,
        variant,
        block_size: opts.block_size,
        backend: opts.backend,
    };
    cfg.validate()?;
    Ok(cfg)
}
