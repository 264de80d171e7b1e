use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filter::{FilterSpec, GroupSpec};
use crate::tensor::{Matrix, SeqTensor};

/// Longest explicit inner filter accepted for the short-explicit variant.
pub const SE_MAX_LEN: usize = 13;
pub const DEFAULT_FEATURIZER_LEN: usize = 7;
pub const DEFAULT_SE_LEN: usize = 7;
pub const DEFAULT_MR_LEN: usize = 128;

/// Inner-filter parametrization of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Short explicit taps.
    Se,
    /// Medium-length taps with exponential decay.
    Mr,
    /// Sequence-length implicit exponential sum.
    Li,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Se => "SE",
            Variant::Mr => "MR",
            Variant::Li => "LI",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SE" => Ok(Variant::Se),
            "MR" => Ok(Variant::Mr),
            "LI" => Ok(Variant::Li),
            other => Err(Error::Config(format!("unknown variant `{other}` (expected SE, MR or LI)"))),
        }
    }
}

/// Algorithm used for the inner convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Direct,
    /// Two-stage when the filter fits, the K-block path otherwise.
    Blocked,
    Fft,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Direct => "direct",
            Backend::Blocked => "blocked",
            Backend::Fft => "fft",
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "direct" => Ok(Backend::Direct),
            "blocked" => Ok(Backend::Blocked),
            "fft" => Ok(Backend::Fft),
            other => Err(Error::Config(format!(
                "unknown backend `{other}` (expected direct, blocked or fft)"
            ))),
        }
    }
}

/// Channel-mixing matrix applied as `x_t W`, either dense or as a
/// rank-`r` product `left * right`.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Dense(Matrix<f64>),
    LowRank { left: Matrix<f64>, right: Matrix<f64> },
}

impl Projection {
    pub fn identity(d: usize) -> Self {
        Projection::Dense(Matrix::identity(d))
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Projection::Dense(m) => m.rows(),
            Projection::LowRank { left, .. } => left.rows(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Projection::Dense(m) => m.cols(),
            Projection::LowRank { right, .. } => right.cols(),
        }
    }

    fn validate(&self, d: usize, what: &str) -> Result<()> {
        if let Projection::LowRank { left, right } = self {
            if left.cols() != right.rows() {
                return Err(Error::Shape(format!(
                    "{what}: low-rank factors {}x{} and {}x{} do not chain",
                    left.rows(),
                    left.cols(),
                    right.rows(),
                    right.cols()
                )));
            }
        }
        if self.in_dim() != d || self.out_dim() != d {
            return Err(Error::Shape(format!(
                "{what}: expected {d}x{d}, got {}x{}",
                self.in_dim(),
                self.out_dim()
            )));
        }
        Ok(())
    }

    /// The full `d x d` matrix.
    pub fn dense(&self) -> Matrix<f64> {
        match self {
            Projection::Dense(m) => m.clone(),
            Projection::LowRank { left, right } => left.matmul(right).expect("validated shapes"),
        }
    }

    pub fn apply(&self, x: &SeqTensor<f64>) -> SeqTensor<f64> {
        match self {
            Projection::Dense(m) => mix(m, x),
            Projection::LowRank { left, right } => mix(right, &mix(left, x)),
        }
    }

    /// Returns `(dx, dparams)` for upstream `dout`, params in [`params`](Self::params) order.
    pub fn backward(&self, x: &SeqTensor<f64>, dout: &SeqTensor<f64>) -> (SeqTensor<f64>, Vec<f64>) {
        match self {
            Projection::Dense(m) => mix_backward(m, x, dout),
            Projection::LowRank { left, right } => {
                let z = mix(left, x);
                let (dz, mut dright) = mix_backward(right, &z, dout);
                let (dx, dleft) = mix_backward(left, x, &dz);
                let mut g = dleft;
                g.append(&mut dright);
                (dx, g)
            }
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Projection::Dense(m) => m.data().to_vec(),
            Projection::LowRank { left, right } => left.data().iter().chain(right.data()).copied().collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Projection::Dense(m) => m.data().len(),
            Projection::LowRank { left, right } => left.data().len() + right.data().len(),
        }
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        assert_eq!(p.len(), self.n_params(), "projection parameter count");
        let remake = |m: &Matrix<f64>, vals: &[f64]| Matrix::from_vec(m.rows(), m.cols(), vals.to_vec()).expect("same shape");
        match self {
            Projection::Dense(m) => Projection::Dense(remake(m, p)),
            Projection::LowRank { left, right } => {
                let n = left.data().len();
                Projection::LowRank {
                    left: remake(left, &p[..n]),
                    right: remake(right, &p[n..]),
                }
            }
        }
    }
}

/// `out[a][t] = sum_b m[b][a] x[b][t]`.
pub(crate) fn mix(m: &Matrix<f64>, x: &SeqTensor<f64>) -> SeqTensor<f64> {
    let mut out = SeqTensor::zeros(m.cols(), x.seq_len());
    for b in 0..m.rows() {
        let xb = x.row(b);
        for a in 0..m.cols() {
            let w = m[(b, a)];
            if w == 0.0 {
                continue;
            }
            for (o, &v) in out.row_mut(a).iter_mut().zip(xb) {
                *o += w * v;
            }
        }
    }
    out
}

fn mix_backward(m: &Matrix<f64>, x: &SeqTensor<f64>, dout: &SeqTensor<f64>) -> (SeqTensor<f64>, Vec<f64>) {
    let mut dx = SeqTensor::zeros(m.rows(), x.seq_len());
    let mut dm = vec![0.0; m.rows() * m.cols()];
    for b in 0..m.rows() {
        let xb = x.row(b);
        for a in 0..m.cols() {
            let g = dout.row(a);
            dm[b * m.cols() + a] = xb.iter().zip(g).map(|(p, q)| p * q).sum();
            let w = m[(b, a)];
            for (o, &v) in dx.row_mut(b).iter_mut().zip(g) {
                *o += w * v;
            }
        }
    }
    (dx, dm)
}

/// One operator instance `y = (q * conv(h_G, k * v)) M` with
/// `q = conv(h_T, xW)`, `k = conv(h_H, xU)`, `v = conv(h_K, xP)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyenaConfig {
    pub width: usize,
    pub w: Projection,
    pub u: Projection,
    pub p: Projection,
    pub m: Projection,
    pub feat_q: GroupSpec,
    pub feat_k: GroupSpec,
    pub feat_v: GroupSpec,
    pub inner: GroupSpec,
    pub variant: Variant,
    pub block_size: usize,
    pub backend: Backend,
}

impl HyenaConfig {
    /// Identity projections and featurizers around `inner`.
    pub fn identity(inner: GroupSpec, variant: Variant) -> Result<Self> {
        let d = inner.channels();
        let delta = GroupSpec::shared(d, FilterSpec::delta(1))?;
        let cfg = HyenaConfig {
            width: d,
            w: Projection::identity(d),
            u: Projection::identity(d),
            p: Projection::identity(d),
            m: Projection::identity(d),
            feat_q: delta.clone(),
            feat_k: delta.clone(),
            feat_v: delta,
            inner,
            variant,
            block_size: DEFAULT_SE_LEN + 1,
            backend: Backend::Blocked,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks widths, block size and the per-variant inner-filter family.
    pub fn validate(&self) -> Result<()> {
        let d = self.width;
        if d == 0 {
            return Err(Error::Shape("width must be positive".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        for (proj, name) in [(&self.w, "W"), (&self.u, "U"), (&self.p, "P"), (&self.m, "M")] {
            proj.validate(d, name)?;
        }
        for g in [&self.feat_q, &self.feat_k, &self.feat_v, &self.inner] {
            if g.channels() != d {
                return Err(Error::ChannelMismatch {
                    expected: d,
                    got: g.channels(),
                });
            }
        }
        for f in self.inner.filters() {
            let ok = match (self.variant, f) {
                (Variant::Se, FilterSpec::Explicit { taps }) => taps.len() <= SE_MAX_LEN,
                (Variant::Mr, FilterSpec::Regularized { .. }) => true,
                (Variant::Li, FilterSpec::ImplicitExpSum { .. }) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "{} variant does not accept inner filter {}",
                    self.variant,
                    describe(f)
                )));
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the input-dependent checks.
    pub fn validate_input(&self, x: &SeqTensor<f64>) -> Result<()> {
        self.validate()?;
        if x.channels() != self.width {
            return Err(Error::ChannelMismatch {
                expected: self.width,
                got: x.channels(),
            });
        }
        if self.variant == Variant::Li {
            if let Some(f) = self.inner.filters().iter().find(|f| f.len() != x.seq_len()) {
                return Err(Error::Config(format!(
                    "LI inner filter length {} differs from sequence length {}",
                    f.len(),
                    x.seq_len()
                )));
            }
        }
        Ok(())
    }

    fn blocks(&self) -> [&Projection; 4] {
        [&self.w, &self.u, &self.p, &self.m]
    }

    fn groups(&self) -> [&GroupSpec; 4] {
        [&self.feat_q, &self.feat_k, &self.feat_v, &self.inner]
    }

    /// Flattened parameters: W, U, P, M, then the q/k/v featurizers and the inner filter.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for p in self.blocks() {
            out.extend(p.params());
        }
        for g in self.groups() {
            out.extend(g.params());
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|p| p.n_params()).sum::<usize>() + self.groups().iter().map(|g| g.n_params()).sum::<usize>()
    }

    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.n_params(), "operator parameter count");
        let mut off = 0;
        let mut take = |n: usize| {
            let s = &params[off..off + n];
            off += n;
            s
        };
        let w = self.w.with_params(take(self.w.n_params()));
        let u = self.u.with_params(take(self.u.n_params()));
        let p = self.p.with_params(take(self.p.n_params()));
        let m = self.m.with_params(take(self.m.n_params()));
        let feat_q = self.feat_q.with_params(take(self.feat_q.n_params()));
        let feat_k = self.feat_k.with_params(take(self.feat_k.n_params()));
        let feat_v = self.feat_v.with_params(take(self.feat_v.n_params()));
        let inner = self.inner.with_params(take(self.inner.n_params()));
        HyenaConfig {
            w,
            u,
            p,
            m,
            feat_q,
            feat_k,
            feat_v,
            inner,
            ..self.clone()
        }
    }

    /// Restores parameter constraints after an update.
    pub fn project(&mut self) {
        for g in [&mut self.feat_q, &mut self.feat_k, &mut self.feat_v, &mut self.inner] {
            g.project();
        }
    }
}

fn describe(f: &FilterSpec) -> String {
    match f {
        FilterSpec::Explicit { taps } => format!("explicit({} taps)", taps.len()),
        FilterSpec::Regularized { taps, .. } => format!("regularized({} taps)", taps.len()),
        FilterSpec::ImplicitExpSum { poles, len, .. } => {
            format!("implicit({} poles, {len} taps)", poles.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn variant_and_backend_parse() {
        assert_eq!("se".parse::<Variant>().unwrap(), Variant::Se);
        assert_eq!("LI".parse::<Variant>().unwrap(), Variant::Li);
        assert!("XX".parse::<Variant>().is_err());
        assert_eq!("fft".parse::<Backend>().unwrap(), Backend::Fft);
        assert!("gpu".parse::<Backend>().is_err());
    }

    #[test]
    fn low_rank_matches_dense_product() {
        let mut r = rng::seeded(40);
        let left = rng::normal_matrix(&mut r, 6, 2, 1.0);
        let right = rng::normal_matrix(&mut r, 2, 6, 1.0);
        let lr = Projection::LowRank { left, right };
        let dense = Projection::Dense(lr.dense());
        let x = rng::uniform_tensor::<f64>(&mut r, 6, 9);
        assert!(lr.apply(&x).max_abs_diff(&dense.apply(&x)) < 1e-12);
    }

    #[test]
    fn se_rejects_long_or_wrong_family() {
        let long = GroupSpec::shared(2, FilterSpec::explicit(vec![0.1; SE_MAX_LEN + 1])).unwrap();
        assert!(HyenaConfig::identity(long, Variant::Se).is_err());
        let ok = GroupSpec::shared(2, FilterSpec::explicit(vec![0.1; SE_MAX_LEN])).unwrap();
        assert!(HyenaConfig::identity(ok.clone(), Variant::Se).is_ok());
        assert!(HyenaConfig::identity(ok, Variant::Li).is_err());
    }

    #[test]
    fn params_round_trip() {
        let g = GroupSpec::shared(3, FilterSpec::explicit(vec![1.0, -0.5])).unwrap();
        let cfg = HyenaConfig::identity(g, Variant::Se).unwrap();
        let p = cfg.params();
        assert_eq!(p.len(), cfg.n_params());
        assert_eq!(cfg.with_params(&p), cfg);
    }
}
