//! Filter parametrizations and channel grouping.
//!
//! Every filter is materialized eagerly to explicit taps `h_0 .. h_{lh-1}`
//! before any convolution runs. Taps use 0-based time, so an implicit
//! exponential-sum filter has `h_0 = sum_n R_n`.

use crate::error::{Error, Result};
use crate::real::{cast_slice, Real};

/// Lower and upper end of the default per-group decay sweep.
pub const DECAY_SWEEP: (f64, f64) = (0.01, 2.0);

#[derive(Debug, Clone, PartialEq)]
pub enum FilterSpec {
    /// Taps used as-is.
    Explicit { taps: Vec<f64> },
    /// `h_t = taps_t * base^(-decay_rate * t)`.
    Regularized { taps: Vec<f64>, decay_rate: f64, base: f64 },
    /// `h_t = sum_n residues_n * poles_n^t` for `t < len`.
    ImplicitExpSum { residues: Vec<f64>, poles: Vec<f64>, len: usize },
}

impl FilterSpec {
    pub fn explicit(taps: Vec<f64>) -> Self {
        FilterSpec::Explicit { taps }
    }

    pub fn delta(len: usize) -> Self {
        let mut taps = vec![0.0; len.max(1)];
        taps[0] = 1.0;
        FilterSpec::Explicit { taps }
    }

    /// Number of taps the filter materializes to.
    pub fn len(&self) -> usize {
        match self {
            FilterSpec::Explicit { taps } | FilterSpec::Regularized { taps, .. } => taps.len(),
            FilterSpec::ImplicitExpSum { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidFilter(msg));
        if self.is_empty() {
            return bad("filter length must be at least 1".into());
        }
        match self {
            FilterSpec::Explicit { taps } => {
                if taps.iter().any(|v| !v.is_finite()) {
                    return bad("explicit taps must be finite".into());
                }
            }
            FilterSpec::Regularized { taps, decay_rate, base } => {
                if taps.iter().any(|v| !v.is_finite()) {
                    return bad("regularized taps must be finite".into());
                }
                if !decay_rate.is_finite() || *decay_rate < 0.0 {
                    return bad(format!("decay rate must be >= 0, got {decay_rate}"));
                }
                if !base.is_finite() || *base <= 1.0 {
                    return bad(format!("decay base must be > 1, got {base}"));
                }
            }
            FilterSpec::ImplicitExpSum { residues, poles, .. } => {
                if residues.is_empty() || residues.len() != poles.len() {
                    return bad(format!(
                        "need matching non-empty residues/poles, got {} and {}",
                        residues.len(),
                        poles.len()
                    ));
                }
                if residues.iter().any(|v| !v.is_finite()) {
                    return bad("residues must be finite".into());
                }
                if let Some(p) = poles.iter().find(|p| p.is_nan() || p.abs() > 1.0) {
                    return bad(format!("pole {p} is outside the unit interval"));
                }
            }
        }
        Ok(())
    }

    /// Explicit taps `h_0 .. h_{len-1}`.
    pub fn materialize(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let taps = match self {
            FilterSpec::Explicit { taps } => taps.clone(),
            FilterSpec::Regularized { taps, decay_rate, base } => taps
                .iter()
                .enumerate()
                .map(|(t, &v)| v * base.powf(-decay_rate * t as f64))
                .collect(),
            FilterSpec::ImplicitExpSum { residues, poles, len } => {
                let mut out = vec![0.0; *len];
                for (&r, &p) in residues.iter().zip(poles) {
                    let mut pow = 1.0;
                    for h in out.iter_mut() {
                        *h += r * pow;
                        pow *= p;
                    }
                }
                out
            }
        };
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFilter("materialized taps are not finite".into()));
        }
        Ok(taps)
    }

    /// Trainable parameters, flattened: the taps for explicit filters, the
    /// raw taps for regularized filters, residues then poles for implicit ones.
    pub fn params(&self) -> Vec<f64> {
        match self {
            FilterSpec::Explicit { taps } | FilterSpec::Regularized { taps, .. } => taps.clone(),
            FilterSpec::ImplicitExpSum { residues, poles, .. } => residues.iter().chain(poles).copied().collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            FilterSpec::Explicit { taps } | FilterSpec::Regularized { taps, .. } => taps.len(),
            FilterSpec::ImplicitExpSum { residues, .. } => 2 * residues.len(),
        }
    }

    /// Same filter with parameters replaced by `params` (layout of [`params`](Self::params)).
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.n_params(), "parameter count");
        match self {
            FilterSpec::Explicit { .. } => FilterSpec::Explicit { taps: params.to_vec() },
            FilterSpec::Regularized { decay_rate, base, .. } => FilterSpec::Regularized {
                taps: params.to_vec(),
                decay_rate: *decay_rate,
                base: *base,
            },
            FilterSpec::ImplicitExpSum { residues, len, .. } => {
                let n = residues.len();
                FilterSpec::ImplicitExpSum {
                    residues: params[..n].to_vec(),
                    poles: params[n..].to_vec(),
                    len: *len,
                }
            }
        }
    }

    /// Pulls a gradient w.r.t. the materialized taps back onto [`params`](Self::params).
    pub fn pullback(&self, dtaps: &[f64]) -> Vec<f64> {
        assert_eq!(dtaps.len(), self.len(), "tap gradient length");
        match self {
            FilterSpec::Explicit { .. } => dtaps.to_vec(),
            FilterSpec::Regularized { decay_rate, base, .. } => dtaps
                .iter()
                .enumerate()
                .map(|(t, &g)| g * base.powf(-decay_rate * t as f64))
                .collect(),
            FilterSpec::ImplicitExpSum { residues, poles, .. } => {
                let mut d_res = Vec::with_capacity(residues.len());
                let mut d_pole = Vec::with_capacity(poles.len());
                for (&r, &p) in residues.iter().zip(poles) {
                    // d h_t / d R = p^t, d h_t / d p = R t p^(t-1)
                    let mut pow = 1.0;
                    let mut pow_prev = 0.0;
                    let (mut gr, mut gp) = (0.0, 0.0);
                    for (t, &g) in dtaps.iter().enumerate() {
                        gr += g * pow;
                        gp += g * r * t as f64 * pow_prev;
                        pow_prev = pow;
                        pow *= p;
                    }
                    d_res.push(gr);
                    d_pole.push(gp);
                }
                d_res.extend(d_pole);
                d_res
            }
        }
    }

    /// Keeps parameters inside the valid region after an update step:
    /// poles are clamped to `[-1, 1]`.
    pub fn project(&mut self) {
        if let FilterSpec::ImplicitExpSum { poles, .. } = self {
            for p in poles.iter_mut() {
                *p = p.clamp(-1.0, 1.0);
            }
        }
    }
}

/// Decay rates linearly spaced over [`DECAY_SWEEP`], one per group.
pub fn decay_sweep(n_groups: usize) -> Vec<f64> {
    let (lo, hi) = DECAY_SWEEP;
    match n_groups {
        0 => vec![],
        1 => vec![lo],
        n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Assignment of one filter to each contiguous group of `group_size` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    channels: usize,
    group_size: usize,
    filters: Vec<FilterSpec>,
}

impl GroupSpec {
    pub fn new(channels: usize, group_size: usize, filters: Vec<FilterSpec>) -> Result<Self> {
        if channels == 0 || group_size == 0 {
            return Err(Error::Shape("channels and group size must be positive".into()));
        }
        if !channels.is_multiple_of(group_size) {
            return Err(Error::Divisibility(format!(
                "group size {group_size} does not divide {channels} channels"
            )));
        }
        let n_groups = channels / group_size;
        if filters.len() != n_groups {
            return Err(Error::Shape(format!(
                "{n_groups} groups need {n_groups} filters, got {}",
                filters.len()
            )));
        }
        for f in &filters {
            f.validate()?;
        }
        Ok(Self {
            channels,
            group_size,
            filters,
        })
    }

    /// One filter per channel.
    pub fn depthwise(filters: Vec<FilterSpec>) -> Result<Self> {
        Self::new(filters.len(), 1, filters)
    }

    /// A single filter shared by all `channels`.
    pub fn shared(channels: usize, filter: FilterSpec) -> Result<Self> {
        Self::new(channels, channels, vec![filter])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn n_groups(&self) -> usize {
        self.filters.len()
    }

    pub fn filters(&self) -> &[FilterSpec] {
        &self.filters
    }

    pub fn group_of(&self, channel: usize) -> usize {
        channel / self.group_size
    }

    pub fn filter_for(&self, channel: usize) -> &FilterSpec {
        &self.filters[self.group_of(channel)]
    }

    /// Longest filter across groups.
    pub fn max_filter_len(&self) -> usize {
        self.filters.iter().map(FilterSpec::len).max().unwrap_or(0)
    }

    pub fn materialize(&self) -> Result<Vec<Vec<f64>>> {
        self.filters.iter().map(FilterSpec::materialize).collect()
    }

    pub fn materialize_as<T: Real>(&self) -> Result<Vec<Vec<T>>> {
        Ok(self.materialize()?.iter().map(|h| cast_slice(h)).collect())
    }

    /// The same filters expanded to one group per channel.
    pub fn to_depthwise(&self) -> GroupSpec {
        let filters = (0..self.channels).map(|c| self.filter_for(c).clone()).collect();
        GroupSpec {
            channels: self.channels,
            group_size: 1,
            filters,
        }
    }

    /// Groups covering channels `range`, which must start and end on group
    /// boundaries.
    pub fn slice(&self, start: usize, end: usize) -> Result<GroupSpec> {
        if !start.is_multiple_of(self.group_size) || !end.is_multiple_of(self.group_size) || end > self.channels {
            return Err(Error::Divisibility(format!(
                "channel range {start}..{end} splits a group of size {}",
                self.group_size
            )));
        }
        GroupSpec::new(
            end - start,
            self.group_size,
            self.filters[start / self.group_size..end / self.group_size].to_vec(),
        )
    }

    pub fn with_filters(&self, filters: Vec<FilterSpec>) -> Result<GroupSpec> {
        GroupSpec::new(self.channels, self.group_size, filters)
    }

    pub fn n_params(&self) -> usize {
        self.filters.iter().map(FilterSpec::n_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.filters.iter().flat_map(FilterSpec::params).collect()
    }

    pub fn with_params(&self, params: &[f64]) -> GroupSpec {
        assert_eq!(params.len(), self.n_params());
        let mut off = 0;
        let filters = self
            .filters
            .iter()
            .map(|f| {
                let n = f.n_params();
                let out = f.with_params(&params[off..off + n]);
                off += n;
                out
            })
            .collect();
        GroupSpec {
            channels: self.channels,
            group_size: self.group_size,
            filters,
        }
    }

    /// Pulls per-group tap gradients back onto the flattened parameters.
    pub fn pullback(&self, dtaps: &[Vec<f64>]) -> Vec<f64> {
        assert_eq!(dtaps.len(), self.filters.len());
        self.filters.iter().zip(dtaps).flat_map(|(f, g)| f.pullback(g)).collect()
    }

    pub fn project(&mut self) {
        self.filters.iter_mut().for_each(FilterSpec::project);
    }
}
