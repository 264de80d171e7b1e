use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use convmix::blockconv::{block_conv, chunk_parallel_forward, two_stage_flops, two_stage_forward};
use convmix::cpsim::{run_scheme, ExecMode};
use convmix::fft::fft_causal_conv;
use convmix::rng::{self, SimRng};
use convmix::{direct_causal_conv, DType, FilterSpec, GroupSpec, Real, SeqTensor};

use crate::settings::Settings;
use crate::CliError;

pub const CSV_HEADER: &str = "op,scheme,d,l,lh,lb,ranks,wall_ns,flops,max_abs_err,elements_moved";

pub const WARMUPS: usize = 2;

/// Operations `bench` can time.
pub const OPS: [&str; 6] = ["direct", "block_conv", "two_stage", "chunk_parallel", "fft_conv", "cpsim"];

/// One CSV row; `None` fields are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub op: String,
    pub scheme: Option<String>,
    pub d: usize,
    pub l: usize,
    pub lh: usize,
    pub lb: Option<usize>,
    pub ranks: Option<usize>,
    pub wall_ns: Option<u64>,
    pub flops: Option<u64>,
    pub max_abs_err: Option<f64>,
    pub elements_moved: Option<u64>,
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

impl fmt::Display for BenchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.op,
            opt(&self.scheme),
            self.d,
            self.l,
            self.lh,
            opt(&self.lb),
            opt(&self.ranks),
            opt(&self.wall_ns),
            opt(&self.flops),
            self.max_abs_err.map(|e| format!("{e:.3e}")).unwrap_or_default(),
            opt(&self.elements_moved),
        )
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Median wall time of `reps` runs after [`WARMUPS`] discarded ones.
pub fn median_ns<R>(reps: usize, mut f: impl FnMut() -> R) -> u64 {
    for _ in 0..WARMUPS {
        black_box(f());
    }
    let mut times: Vec<u64> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            black_box(f());
            start.elapsed().as_nanos() as u64
        })
        .collect();
    times.sort_unstable();
    times[times.len() / 2].max(1)
}

pub fn random_groups(r: &mut SimRng, d: usize, group_size: usize, lh: usize) -> convmix::Result<GroupSpec> {
    if group_size == 0 || !d.is_multiple_of(group_size) {
        return Err(convmix::Error::Divisibility(format!(
            "group size {group_size} does not divide width {d}"
        )));
    }
    let filters = (0..d / group_size).map(|_| FilterSpec::explicit(rng::filter_taps(r, lh))).collect();
    GroupSpec::new(d, group_size, filters)
}

fn widen<T: Real>(x: &SeqTensor<T>) -> SeqTensor<f64> {
    SeqTensor::from_fn(x.channels(), x.seq_len(), |c, t| x.get(c, t).as_f64())
}

fn conv_record<T: Real>(s: &Settings, len: usize) -> Result<BenchRecord, CliError> {
    let mut r = rng::fork(s.seed, len as u64);
    let (d, lh, lb) = (s.width, s.filter_len, s.block_size);
    let groups = random_groups(&mut r, d, s.group_size, lh)?;
    let x = rng::uniform_tensor::<T>(&mut r, d, len);
    let shared = GroupSpec::shared(d, groups.filters()[0].clone())?;
    let h0: Vec<T> = groups.filters()[0].materialize()?.into_iter().map(T::lit).collect();

    // chunk_parallel applies the first filter to every channel
    let oracle_groups = if s.op == "chunk_parallel" { &shared } else { &groups };
    let run = |op: &str| -> convmix::Result<SeqTensor<T>> {
        match op {
            "direct" => direct_causal_conv(&x, &groups),
            "block_conv" => block_conv(&x, &groups, lb),
            "two_stage" => two_stage_forward(&x, None, None, &groups, lb),
            "chunk_parallel" => chunk_parallel_forward(&x, &h0, lb),
            "fft_conv" => fft_causal_conv(&x, &groups),
            other => unreachable!("conv op {other}"),
        }
    };
    let y = run(&s.op)?;
    let wall = median_ns(s.reps, || run(&s.op).expect("validated by the first run"));
    let max_abs_err = if s.op == "direct" {
        None
    } else {
        let oracle = direct_causal_conv(&widen(&x), oracle_groups)?;
        Some(widen(&y).max_abs_diff(&oracle))
    };
    let blocked = matches!(s.op.as_str(), "block_conv" | "two_stage" | "chunk_parallel");
    Ok(BenchRecord {
        op: s.op.clone(),
        scheme: None,
        d,
        l: len,
        lh,
        lb: blocked.then_some(lb),
        ranks: None,
        wall_ns: Some(wall),
        flops: matches!(s.op.as_str(), "two_stage" | "chunk_parallel").then(|| two_stage_flops(len as u64, lb as u64, d as u64)),
        max_abs_err,
        elements_moved: None,
    })
}

fn cpsim_record(s: &Settings, len: usize) -> Result<BenchRecord, CliError> {
    if s.dtype != DType::F64 {
        return Err(CliError::Usage("the cpsim benchmark runs in f64 only".into()));
    }
    let mut r = rng::fork(s.seed, len as u64);
    let groups = random_groups(&mut r, s.width, s.group_size, s.filter_len)?;
    let x = rng::uniform_tensor::<f64>(&mut r, s.width, len);
    let go = || run_scheme(s.scheme, &x, &groups, s.ranks, s.layout, s.pipe, ExecMode::Sequential);
    let run = go()?;
    let wall = median_ns(s.reps, || go().expect("validated by the first run"));
    Ok(BenchRecord {
        op: "cpsim".into(),
        scheme: Some(s.scheme.name().into()),
        d: s.width,
        l: len,
        lh: s.filter_len,
        lb: None,
        ranks: Some(s.ranks),
        wall_ns: Some(wall),
        flops: None,
        max_abs_err: Some(run.max_abs_err),
        elements_moved: Some(run.elements()),
    })
}

/// One record per length of the sweep.
pub fn cmd_bench(s: &Settings) -> Result<Vec<BenchRecord>, CliError> {
    if !OPS.contains(&s.op.as_str()) {
        return Err(CliError::Usage(format!(
            "unknown op `{}` (expected one of {})",
            s.op,
            OPS.join(", ")
        )));
    }
    s.len
        .values()
        .into_iter()
        .map(|len| match (s.op.as_str(), s.dtype) {
            ("cpsim", _) => cpsim_record(s, len),
            (_, DType::F32) => conv_record::<f32>(s, len),
            (_, DType::F64) => conv_record::<f64>(s, len),
        })
        .collect()
}
