use std::fmt;

use convmix::blockconv::{
    block_conv, build_factors, chunk_parallel_forward, two_stage_eligible, two_stage_flops, two_stage_forward, two_stage_forward_counted,
};
use convmix::conv::causal_conv;
use convmix::cpsim::{
    a2a_conv, a2a_conv_backward, a2a_conv_pipelined, a2a_conv_saved, gather, p2p_fft_conv_traced, run_scheme, shard, spectrum_bin,
    ExecMode, Layout, Scheme, SimGroup, A2A, A2A_BACKWARD, A2A_PIPELINED, FFT_RANKS,
};
use convmix::fft::{
    bit_reversal, circular_conv_oracle, dft_oracle, dif_fft_in_place, dif_split, dit_merge, fft, fft_conv, ifft, to_complex,
};
use convmix::gradcheck::{a2a_grad_error, hyena_grad_error, stack_grad_error, two_stage_grad_error};
use convmix::hyena::{
    build_layout, hyena_forward, layout_forward, random_config, smoke_train, Backend, HyenaConfig, HyenaOptions, LayoutSpec, SmokeOptions,
    Stack, Variant,
};
use convmix::rng::{self, SimRng};
use convmix::{direct_causal_conv, full_toeplitz, Error, FilterSpec, GroupSpec, Matrix, SeqTensor};

use crate::bench::random_groups;
use crate::settings::Settings;

pub const BLOCKED_TOL: f64 = 1e-12;
pub const FFT_TOL: f64 = 1e-8;
pub const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass(String),
    Fail(String),
    /// Not applicable to the configured dimensions.
    Skip(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub verdict: Verdict,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tag, detail) = match &self.verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => ("FAIL", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        write!(f, "{tag} {:<34} {detail}", self.name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub results: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> usize {
        self.count(|v| matches!(v, Verdict::Pass(_)))
    }

    pub fn failed(&self) -> usize {
        self.count(|v| matches!(v, Verdict::Fail(_)))
    }

    pub fn skipped(&self) -> usize {
        self.count(|v| matches!(v, Verdict::Skip(_)))
    }

    fn count(&self, f: impl Fn(&Verdict) -> bool) -> usize {
        self.results.iter().filter(|r| f(&r.verdict)).count()
    }

    pub fn ok(&self) -> bool {
        self.failed() == 0
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.results
            .iter()
            .filter(|r| matches!(r.verdict, Verdict::Fail(_)))
            .map(|r| r.name)
            .collect()
    }
}

type CheckFn = fn(&Settings, &mut SimRng) -> convmix::Result<Verdict>;

fn bound(metric: &str, value: f64, tol: f64) -> Verdict {
    let detail = if tol == 0.0 {
        format!("{metric} = {value:.3e} (exact)")
    } else {
        format!("{metric} = {value:.3e} (tol {tol:.0e})")
    };
    if value <= tol {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn exact<T: PartialEq + fmt::Debug>(what: &str, got: T, want: T) -> Verdict {
    if got == want {
        Verdict::Pass(format!("{what} = {got:?}"))
    } else {
        Verdict::Fail(format!("{what} = {got:?}, expected {want:?}"))
    }
}

fn all(verdicts: Vec<Verdict>) -> Verdict {
    let mut details = Vec::new();
    for v in verdicts {
        match v {
            Verdict::Pass(d) => details.push(d),
            other => return other,
        }
    }
    Verdict::Pass(details.join("; "))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn single(x: Vec<f64>) -> SeqTensor<f64> {
    SeqTensor::from_rows(&[x]).expect("finite row")
}

fn shared(d: usize, h: Vec<f64>) -> GroupSpec {
    GroupSpec::shared(d, FilterSpec::explicit(h)).expect("valid filter")
}

fn implicit(r: &mut SimRng, order: usize, len: usize) -> FilterSpec {
    FilterSpec::ImplicitExpSum {
        residues: rng::uniform_vec(r, order, -0.5, 0.5),
        poles: rng::uniform_vec(r, order, 0.5, 0.9),
        len,
    }
}

fn configured_len(s: &Settings) -> usize {
    s.len.start
}

fn toy(width: usize, len: usize) -> HyenaOptions {
    HyenaOptions {
        width,
        len,
        block_size: 8,
        mr_len: 20,
        ..HyenaOptions::default()
    }
}

// conv

fn conv_example(_: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    Ok(exact(
        "y",
        causal_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0]),
        vec![1.0, 3.0, 5.0, 7.0],
    ))
}

fn conv_delta(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 3, 40);
    let y = direct_causal_conv(&x, &GroupSpec::shared(3, FilterSpec::delta(5))?)?;
    Ok(bound("max err", y.max_abs_diff(&x), 0.0))
}

fn conv_linearity(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let g = random_groups(r, 4, 2, 9)?;
    let (x1, x2) = (rng::uniform_tensor::<f64>(r, 4, 64), rng::uniform_tensor::<f64>(r, 4, 64));
    let lhs = direct_causal_conv(&x1.scale(0.7).add(&x2.scale(-1.3))?, &g)?;
    let rhs = direct_causal_conv(&x1, &g)?
        .scale(0.7)
        .add(&direct_causal_conv(&x2, &g)?.scale(-1.3))?;
    Ok(bound("max err", lhs.max_abs_diff(&rhs), BLOCKED_TOL))
}

fn conv_causality(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let g = random_groups(r, 2, 1, 6)?;
    let x = rng::uniform_tensor::<f64>(r, 2, 48);
    let mut bumped = x.clone();
    bumped.set(1, 20, x.get(1, 20) + 1.0);
    let (y0, y1) = (direct_causal_conv(&x, &g)?, direct_causal_conv(&bumped, &g)?);
    let early = y0.slice_time(0..20).max_abs_diff(&y1.slice_time(0..20));
    let late = y0.slice_time(20..48).max_abs_diff(&y1.slice_time(20..48));
    Ok(if early == 0.0 && late > 0.0 {
        Verdict::Pass(format!("change before t' = 0, after = {late:.3e}"))
    } else {
        Verdict::Fail(format!("change before t' = {early:.3e}, after = {late:.3e}"))
    })
}

fn conv_grouping(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let g = random_groups(r, 8, 4, 7)?;
    let x = rng::uniform_tensor::<f64>(r, 8, 50);
    let a = direct_causal_conv(&x, &g)?;
    let b = direct_causal_conv(&x, &g.to_depthwise())?;
    Ok(bound("max err", a.max_abs_diff(&b), 0.0))
}

fn toeplitz_vs_conv(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let h = rng::filter_taps(r, 9);
    let x = rng::uniform_vec(r, 30, -1.0, 1.0);
    let t = full_toeplitz(&h, 30)?;
    let y = direct_causal_conv(&single(x.clone()), &shared(1, h))?;
    Ok(bound("max err", max_diff(&t.mul_vec(&x), y.row(0)), BLOCKED_TOL))
}

fn toeplitz_identity(_: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    Ok(bound("max err", full_toeplitz(&[1.0], 3)?.max_abs_diff(&Matrix::identity(3)), 0.0))
}

// blockconv

fn factors_worked_example(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let h = rng::uniform_vec(r, 4, -1.0, 1.0);
    let f = build_factors(&h, 3)?;
    let z = 0.0;
    let h0 = Matrix::from_rows(&[[h[0], z, z], [h[1], h[0], z], [h[2], h[1], h[0]]])?;
    let h1 = Matrix::from_rows(&[[h[3], h[2], h[1]], [z, h[3], h[2]], [z, z, h[3]]])?;
    let t = Matrix::from_fn(6, 6, |i, j| if i >= j && i - j < 4 { h[i - j] } else { 0.0 });
    Ok(all(vec![
        exact("factors", f.blocks().len(), 2),
        bound("H0 err", f.block(0).max_abs_diff(&h0), 0.0),
        bound("H1 err", f.block(1).max_abs_diff(&h1), 0.0),
        bound("T err", f.assemble(6).max_abs_diff(&t), 0.0),
    ]))
}

fn factors_reassembly(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let mut worst = 0.0f64;
    for (lh, lb) in [(1, 4), (5, 4), (6, 4), (17, 4), (9, 3)] {
        let h = rng::filter_taps(r, lh);
        worst = worst.max(build_factors(&h, lb)?.assemble(5 * lb).max_abs_diff(&full_toeplitz(&h, 5 * lb)?));
    }
    Ok(bound("max err", worst, 0.0))
}

fn block_conv_configured(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let len = configured_len(s);
    let g = random_groups(r, s.width, s.group_size, s.filter_len)?;
    let x = rng::uniform_tensor::<f64>(r, s.width, len);
    let err = block_conv(&x, &g, s.block_size)?.max_abs_diff(&direct_causal_conv(&x, &g)?);
    Ok(bound("max err", err, BLOCKED_TOL))
}

fn block_conv_sweep(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let mut worst = 0.0f64;
    let mut n = 0;
    for (d, gs) in [(1, 1), (4, 1), (4, 4), (16, 4)] {
        for (len, lh, lb) in [(32, 1, 8), (33, 9, 8), (100, 40, 16), (256, 256, 32), (64, 3, 1)] {
            let g = random_groups(r, d, gs, lh)?;
            let x = rng::uniform_tensor::<f64>(r, d, len);
            worst = worst.max(block_conv(&x, &g, lb)?.max_abs_diff(&direct_causal_conv(&x, &g)?));
            n += 1;
        }
    }
    Ok(bound(&format!("max err over {n} configs"), worst, BLOCKED_TOL))
}

fn two_stage_configured(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let len = configured_len(s);
    let g = random_groups(r, s.width, s.group_size, s.filter_len)?;
    let x = rng::uniform_tensor::<f64>(r, s.width, len);
    let res = two_stage_forward(&x, None, None, &g, s.block_size);
    Ok(match (two_stage_eligible(s.filter_len, s.block_size), res) {
        (true, Ok(y)) => bound("max err", y.max_abs_diff(&direct_causal_conv(&x, &g)?), BLOCKED_TOL),
        (false, Err(Error::TwoStageIneligible { .. })) => {
            let err = block_conv(&x, &g, s.block_size)?.max_abs_diff(&direct_causal_conv(&x, &g)?);
            match bound("block_conv err", err, BLOCKED_TOL) {
                Verdict::Pass(d) => Verdict::Pass(format!(
                    "expected rejection of lh = {} > lb + 1 = {}; {d}",
                    s.filter_len,
                    s.block_size + 1
                )),
                fail => fail,
            }
        }
        (eligible, Ok(_)) => Verdict::Fail(format!("accepted lh = {} with eligibility {eligible}", s.filter_len)),
        (_, Err(e)) => Verdict::Fail(e.to_string()),
    })
}

fn two_stage_boundary(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let lb = 8;
    let x = rng::uniform_tensor::<f64>(r, 2, 64);
    let ok = shared(2, rng::filter_taps(r, lb + 1));
    let bad = shared(2, rng::filter_taps(r, lb + 2));
    let accepted = two_stage_forward(&x, None, None, &ok, lb)?.max_abs_diff(&direct_causal_conv(&x, &ok)?);
    let rejected = matches!(two_stage_forward(&x, None, None, &bad, lb), Err(Error::TwoStageIneligible { .. }));
    let k2 = block_conv(&x, &bad, lb)?.max_abs_diff(&direct_causal_conv(&x, &bad)?);
    Ok(all(vec![
        bound("lb + 1 err", accepted, BLOCKED_TOL),
        exact("lb + 2 rejected", rejected, true),
        bound("K = 2 block_conv err", k2, BLOCKED_TOL),
    ]))
}

fn two_stage_gated(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let g = random_groups(r, 4, 2, 5)?;
    let (v, q, k) = (
        rng::uniform_tensor::<f64>(r, 4, 45),
        rng::uniform_tensor::<f64>(r, 4, 45),
        rng::uniform_tensor::<f64>(r, 4, 45),
    );
    let y = two_stage_forward(&v, Some(&q), Some(&k), &g, 8)?;
    let want = q.hadamard(&direct_causal_conv(&k.hadamard(&v)?, &g)?)?;
    Ok(bound("max err", y.max_abs_diff(&want), BLOCKED_TOL))
}

fn chunk_parallel(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let h = rng::filter_taps(r, 13);
    let v = rng::uniform_tensor::<f64>(r, 3, 100);
    let a = chunk_parallel_forward(&v, &h, 12)?;
    let b = two_stage_forward(&v, None, None, &shared(3, h), 12)?;
    Ok(bound("max err", a.max_abs_diff(&b), BLOCKED_TOL))
}

fn flops_formula(_: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    Ok(all(vec![
        exact("flops(1024, 128, 64)", two_stage_flops(1024, 128, 64), 16_777_216),
        exact("flops(16, 16, 1)", two_stage_flops(16, 16, 1), 2 * 16 * 16),
        exact("doubling d", two_stage_flops(1024, 128, 128), 2 * 16_777_216),
    ]))
}

fn flops_counter(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let mut out = Vec::new();
    for (len, lb, d) in [(256, 32, 4), (100, 16, 3)] {
        let v = rng::uniform_tensor::<f64>(r, d, len);
        let (_, count) = two_stage_forward_counted(&v, &shared(d, rng::filter_taps(r, 7)), lb)?;
        out.push(exact(
            &format!("multiplies({len}, {lb}, {d})"),
            count,
            two_stage_flops(len as u64, lb as u64, d as u64),
        ));
    }
    Ok(all(out))
}

fn two_stage_grad(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let mut worst = 0.0f64;
    for gated in [false, true] {
        let g = random_groups(r, 4, 2, 6)?;
        let [v, q, k, dy] = [0; 4].map(|_| rng::uniform_tensor::<f64>(r, 4, 20));
        let (q, k) = if gated { (Some(&q), Some(&k)) } else { (None, None) };
        worst = worst.max(two_stage_grad_error(&v, q, k, &g, 8, &dy)?);
    }
    Ok(bound("rel err", worst, GRAD_TOL))
}

fn two_stage_grad_implicit(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let g = GroupSpec::new(4, 2, vec![implicit(r, 3, 5), implicit(r, 2, 5)])?;
    let [v, q, dy] = [0; 3].map(|_| rng::uniform_tensor::<f64>(r, 4, 18));
    Ok(bound("rel err", two_stage_grad_error(&v, Some(&q), None, &g, 4, &dy)?, GRAD_TOL))
}

// fft

fn fft_delta(_: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    let mut x = vec![0.0; 8];
    x[0] = 1.0;
    let spectrum = fft(&to_complex(&x))?;
    let err = spectrum.iter().map(|c| (c - 1.0).norm()).fold(0.0, f64::max);
    Ok(bound("max err vs ones", err, 1e-15))
}

fn fft_bit_reversed(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = to_complex(&rng::uniform_vec(r, 64, -1.0, 1.0));
    let mut y = x.clone();
    dif_fft_in_place(&mut y)?;
    let natural = bit_reversal(&y)?;
    let err = natural.iter().zip(dft_oracle(&x)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(bound("max err", err, 1e-10))
}

fn fft_round_trip(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = to_complex(&rng::uniform_vec(r, 1 << 16, -1.0, 1.0));
    let back = ifft(&fft(&x)?)?;
    let err = x.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok(bound("max err at l = 65536", err, BLOCKED_TOL))
}

fn fft_parseval(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = to_complex(&rng::uniform_vec(r, 1024, -1.0, 1.0));
    let e_t: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    let e_f: f64 = fft(&x)?.iter().map(|c| c.norm_sqr()).sum::<f64>() / 1024.0;
    Ok(bound("rel err", (e_t - e_f).abs() / e_t, 1e-10))
}

fn fft_split_merge(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = to_complex(&rng::uniform_vec(r, 32, -1.0, 1.0));
    let (a, b) = dif_split(&x)?;
    let (fa, fb) = (fft(&a)?, fft(&b)?);
    let spectrum = dft_oracle(&x);
    let even = fa.iter().enumerate().map(|(k, v)| (v - spectrum[2 * k]).norm()).fold(0.0, f64::max);
    let odd = fb.iter().enumerate().map(|(k, v)| (v - spectrum[2 * k + 1]).norm()).fold(0.0, f64::max);
    let merged = dit_merge(&a, &b)?;
    let back = merged.iter().zip(&x).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    Ok(all(vec![
        bound("even-bin err", even, 1e-10),
        bound("odd-bin err", odd, 1e-10),
        bound("merge err", back, BLOCKED_TOL),
    ]))
}

fn fft_conv_example(_: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    let y = fft_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0])?;
    Ok(bound("max err vs [1,3,5,7]", max_diff(&y, &[1.0, 3.0, 5.0, 7.0]), 1e-12))
}

fn fft_conv_long(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_vec(r, 1024, -1.0, 1.0);
    let h = rng::filter_taps(r, 1024);
    let want = direct_causal_conv(&single(x.clone()), &shared(1, h.clone()))?;
    Ok(bound("max err", max_diff(&fft_conv(&x, &h)?, want.row(0)), FFT_TOL))
}

fn fft_conv_configured(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let len = configured_len(s);
    let g = random_groups(r, s.width, s.group_size, s.filter_len.min(len))?;
    let x = rng::uniform_tensor::<f64>(r, s.width, len);
    let err = convmix::fft::fft_causal_conv(&x, &g)?.max_abs_diff(&direct_causal_conv(&x, &g)?);
    Ok(bound("max err", err, FFT_TOL))
}

fn circular_oracle(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let (a, b) = (0.3, -1.1);
    let hand = max_diff(&circular_conv_oracle(&[1.0, 1.0], &[a, b])?, &[a + b, a + b]);
    let x = rng::uniform_vec(r, 8, -1.0, 1.0);
    let h = rng::uniform_vec(r, 8, -1.0, 1.0);
    let (xf, hf) = (fft(&to_complex(&x))?, fft(&to_complex(&h))?);
    let prod: Vec<_> = xf.iter().zip(&hf).map(|(p, q)| p * q).collect();
    let via: Vec<f64> = ifft(&prod)?.iter().map(|c| c.re).collect();
    Ok(all(vec![
        bound("hand example err", hand, 1e-15),
        bound("pointwise product err", max_diff(&via, &circular_conv_oracle(&x, &h)?), 1e-12),
    ]))
}

// hyena

fn hyena_identity(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 4, 16);
    let cfg = HyenaConfig::identity(GroupSpec::shared(4, FilterSpec::delta(3))?, Variant::Se)?;
    let err = hyena_forward(&x, &cfg)?.max_abs_diff(&x.map(|v| v * v * v));
    Ok(bound("max err vs x^3", err, 1e-15))
}

fn hyena_backends(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let mut worst = 0.0f64;
    for variant in [Variant::Se, Variant::Mr, Variant::Li] {
        let cfg = random_config(variant, &toy(4, 48), r)?;
        let x = rng::uniform_tensor::<f64>(r, 4, 48);
        let base = hyena_forward(
            &x,
            &HyenaConfig {
                backend: Backend::Direct,
                ..cfg.clone()
            },
        )?;
        for backend in [Backend::Blocked, Backend::Fft] {
            worst = worst.max(hyena_forward(&x, &HyenaConfig { backend, ..cfg.clone() })?.max_abs_diff(&base));
        }
    }
    Ok(bound("max err", worst, 1e-10))
}

fn hyena_grad(variant: Variant, group_size: usize, r: &mut SimRng) -> convmix::Result<Verdict> {
    let o = HyenaOptions { group_size, ..toy(4, 16) };
    let cfg = random_config(variant, &o, r)?;
    let x = rng::uniform_tensor::<f64>(r, 4, 16);
    let dy = rng::uniform_tensor::<f64>(r, 4, 16);
    Ok(bound("rel err", hyena_grad_error(&x, &cfg, &dy)?, GRAD_TOL))
}

fn hyena_grad_se(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    hyena_grad(Variant::Se, 1, r)
}

fn hyena_grad_mr(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    hyena_grad(Variant::Mr, 2, r)
}

fn hyena_grad_li(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    hyena_grad(Variant::Li, 4, r)
}

fn hyena_layout(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let spec = LayoutSpec::random(vec![Variant::Se, Variant::Mr, Variant::Li], 2, &toy(4, 24), r)?;
    let stack = build_layout(&spec)?;
    let x = rng::uniform_tensor::<f64>(r, 4, 24);
    let y = layout_forward(&x, &stack)?;
    Ok(all(vec![
        exact("layers", stack.layers().len(), 6),
        exact("shape", (y.channels(), y.seq_len()), (4, 24)),
    ]))
}

fn hyena_composition(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let spec = LayoutSpec::random(vec![Variant::Se, Variant::Li], 1, &toy(4, 20), r)?;
    let stack = build_layout(&spec)?;
    let x = rng::uniform_tensor::<f64>(r, 4, 20);
    let seq = hyena_forward(&hyena_forward(&x, &spec.configs[0])?, &spec.configs[1])?;
    Ok(bound("max err", layout_forward(&x, &stack)?.max_abs_diff(&seq), 0.0))
}

fn hyena_causality(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let spec = LayoutSpec::random(vec![Variant::Se, Variant::Mr, Variant::Li], 1, &toy(4, 32), r)?;
    let stack = build_layout(&spec)?;
    let x = rng::uniform_tensor::<f64>(r, 4, 32);
    let mut bumped = x.clone();
    bumped.set(2, 17, x.get(2, 17) + 0.5);
    let (y0, y1) = (layout_forward(&x, &stack)?, layout_forward(&bumped, &stack)?);
    let early = y0.slice_time(0..17).max_abs_diff(&y1.slice_time(0..17));
    Ok(bound("change before t'", early, 0.0))
}

fn hyena_replicated(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let cfg = random_config(Variant::Se, &toy(4, 24), r)?;
    let h = cfg.inner.filters()[0].clone();
    let x = rng::uniform_tensor::<f64>(r, 4, 24);
    let mut worst = 0.0f64;
    let base = hyena_forward(
        &x,
        &HyenaConfig {
            inner: GroupSpec::new(4, 1, vec![h.clone(); 4])?,
            ..cfg.clone()
        },
    )?;
    for gs in [2, 4] {
        let inner = GroupSpec::new(4, gs, vec![h.clone(); 4 / gs])?;
        worst = worst.max(hyena_forward(&x, &HyenaConfig { inner, ..cfg.clone() })?.max_abs_diff(&base));
    }
    Ok(bound("max err", worst, 0.0))
}

fn stack_grad(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let spec = LayoutSpec::random(vec![Variant::Se, Variant::Li], 1, &toy(4, 16), r)?;
    let stack = Stack::new(spec.configs, true)?;
    let x = rng::uniform_tensor::<f64>(r, 4, 16);
    let dy = rng::uniform_tensor::<f64>(r, 4, 16);
    Ok(bound("rel err", stack_grad_error(&x, &stack, &dy)?, GRAD_TOL))
}

fn smoke_degenerate(_: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    let steps0 = smoke_train(&SmokeOptions {
        steps: 0,
        ..SmokeOptions::default()
    })?
    .ratio();
    let lr0 = smoke_train(&SmokeOptions {
        steps: 5,
        lr: 0.0,
        ..SmokeOptions::default()
    })?
    .ratio();
    Ok(all(vec![exact("ratio at 0 steps", steps0, 1.0), exact("ratio at lr 0", lr0, 1.0)]))
}

fn smoke_training(s: &Settings, _: &mut SimRng) -> convmix::Result<Verdict> {
    let rep = smoke_train(&SmokeOptions {
        seed: s.seed,
        ..SmokeOptions::default()
    })?;
    let finite = rep.losses.iter().all(|l| l.is_finite());
    Ok(if finite && rep.ratio() <= 0.5 {
        Verdict::Pass(format!("final / initial = {:.3} (bar 0.5)", rep.ratio()))
    } else {
        Verdict::Fail(format!("final / initial = {:.3} (bar 0.5), finite = {finite}", rep.ratio()))
    })
}

// cpsim

fn scheme_configured(scheme: Scheme, s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    if !scheme.supports(s.layout) {
        return Ok(Verdict::Skip(format!("{scheme} needs the seq layout")));
    }
    if scheme == Scheme::P2pFft && !FFT_RANKS.contains(&s.ranks) {
        return Ok(Verdict::Skip(format!("{scheme} supports ranks {FFT_RANKS:?}")));
    }
    let len = configured_len(s);
    let g = random_groups(r, s.width, s.group_size, s.filter_len)?;
    let x = rng::uniform_tensor::<f64>(r, s.width, len);
    let run = run_scheme(scheme, &x, &g, s.ranks, s.layout, s.pipe, ExecMode::Sequential)?;
    Ok(bound("max err", run.max_abs_err, scheme.tolerance()))
}

fn cp_a2a(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    scheme_configured(Scheme::A2a, s, r)
}

fn cp_a2a_pipe(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    scheme_configured(Scheme::A2aPipelined, s, r)
}

fn cp_p2p(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    scheme_configured(Scheme::P2p, s, r)
}

fn cp_p2p_overlap(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    scheme_configured(Scheme::P2pOverlapped, s, r)
}

fn cp_p2p_fft(s: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    scheme_configured(Scheme::P2pFft, s, r)
}

fn cp_p2p_volume(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let (n, d, l, lh) = (4u64, 8, 64, 7);
    let g = random_groups(r, d, 1, lh)?;
    let x = rng::uniform_tensor::<f64>(r, d, l);
    let run = run_scheme(Scheme::P2p, &x, &g, n as usize, Layout::Sequential, 1, ExecMode::Sequential)?;
    Ok(all(vec![
        exact("messages", run.messages(), 3),
        exact("elements", run.elements(), (n - 1) * (lh as u64 - 1) * d as u64),
    ]))
}

fn cp_a2a_volume(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let (n, d, l) = (4, 16, 256);
    let g = random_groups(r, d, 4, 7)?;
    let x = rng::uniform_tensor::<f64>(r, d, l);
    let want = (2 * d * l * (n - 1) / n) as u64;
    let xs = shard(&x, n, Layout::Zigzag)?;
    let mut out = Vec::new();
    let mut grp = SimGroup::new(n)?;
    a2a_conv(&xs, &g, &mut grp)?;
    out.push(exact("a2a elements", grp.counter(A2A), want));
    for pipe in [2, 4] {
        let mut grp = SimGroup::new(n)?;
        a2a_conv_pipelined(&xs, &g, &mut grp, pipe)?;
        out.push(exact(&format!("pipe {pipe} elements"), grp.counter(A2A_PIPELINED), want));
    }
    Ok(all(out))
}

fn cp_a2a_backward(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let (n, d, l) = (4, 8, 32);
    let g = random_groups(r, d, 2, 5)?;
    let x = rng::uniform_tensor::<f64>(r, d, l);
    let dy = rng::uniform_tensor::<f64>(r, d, l);
    let mut grp = SimGroup::new(n)?;
    let (_, saved) = a2a_conv_saved(&shard(&x, n, Layout::Sequential)?, &g, &mut grp)?;
    a2a_conv_backward(&saved, &shard(&dy, n, Layout::Sequential)?, &mut grp)?;
    let total = grp.counter(A2A) + grp.counter(A2A_BACKWARD);
    Ok(all(vec![
        exact("fwd + bwd elements", total, (4 * d * l * (n - 1) / n) as u64),
        bound("rel err", a2a_grad_error(&x, &g, n, Layout::Zigzag, &dy)?, GRAD_TOL),
    ]))
}

fn cp_fft_bins(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 1, 16);
    let h = rng::uniform_tensor::<f64>(r, 1, 16);
    let mut grp = SimGroup::new(2)?;
    let xs = shard(&x, 2, Layout::Sequential)?;
    let (y, trace) = p2p_fft_conv_traced(&xs, &shard(&h, 2, Layout::Sequential)?, &mut grp)?;
    let spectrum = dft_oracle(&to_complex(x.row(0)));
    let mut worst = 0.0f64;
    for rank in 0..2 {
        for (q, v) in trace.x_spectra[rank][0].iter().enumerate() {
            worst = worst.max((v - spectrum[spectrum_bin(2, rank, q)]).norm());
        }
    }
    let circ = circular_conv_oracle(x.row(0), h.row(0))?;
    Ok(all(vec![
        bound("even/odd bin err", worst, 1e-10),
        bound("circular conv err", max_diff(gather(&y).row(0), &circ), FFT_TOL),
        exact("output layout", y.layout(), xs.layout()),
    ]))
}

fn cp_fft_locality(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 2, 64);
    let h = rng::uniform_tensor::<f64>(r, 2, 64);
    let mut grp = SimGroup::new(8)?;
    p2p_fft_conv_traced(&shard(&x, 8, Layout::Sequential)?, &shard(&h, 8, Layout::Sequential)?, &mut grp)?;
    let peak = grp.resident_peak().iter().copied().max().unwrap_or(0);
    Ok(exact("peak resident <= shard", peak <= 8, true))
}

fn cp_zigzag(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 8, 128);
    let g = random_groups(r, 8, 2, 9)?;
    let round_trip = gather(&shard(&x, 4, Layout::Zigzag)?).max_abs_diff(&x);
    let mut a = SimGroup::new(4)?;
    let mut b = SimGroup::new(4)?;
    let zig = gather(&a2a_conv(&shard(&x, 4, Layout::Zigzag)?, &g, &mut a)?);
    let seq = gather(&a2a_conv(&shard(&x, 4, Layout::Sequential)?, &g, &mut b)?);
    Ok(all(vec![
        bound("round trip err", round_trip, 0.0),
        bound("zigzag vs seq err", zig.max_abs_diff(&seq), 0.0),
    ]))
}

fn cp_determinism(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 8, 64);
    let g = random_groups(r, 8, 1, 7)?;
    let mut same = true;
    for scheme in Scheme::ALL {
        let a = run_scheme(scheme, &x, &g, 4, Layout::Sequential, 2, ExecMode::Sequential)?;
        let b = run_scheme(scheme, &x, &g, 4, Layout::Sequential, 2, ExecMode::Threaded)?;
        same &= a.output == b.output && a.group.export_log() == b.group.export_log();
    }
    Ok(exact("threaded == sequential", same, true))
}

fn cp_single_rank(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 4, 32);
    let g = random_groups(r, 4, 1, 5)?;
    let mut msgs = 0;
    for scheme in Scheme::ALL {
        msgs += run_scheme(scheme, &x, &g, 1, Layout::Sequential, 1, ExecMode::Sequential)?.messages();
    }
    Ok(exact("messages at 1 rank", msgs, 0))
}

fn cp_reject_ranks(_: &Settings, r: &mut SimRng) -> convmix::Result<Verdict> {
    let x = rng::uniform_tensor::<f64>(r, 4, 48);
    let g = random_groups(r, 4, 1, 3)?;
    let three = run_scheme(Scheme::P2pFft, &x, &g, 3, Layout::Sequential, 1, ExecMode::Sequential);
    let sixteen = run_scheme(Scheme::P2pFft, &x, &g, 16, Layout::Sequential, 1, ExecMode::Sequential);
    Ok(all(vec![
        exact("3 ranks rejected", matches!(three, Err(Error::UnsupportedRanks { .. })), true),
        exact("16 ranks rejected", matches!(sixteen, Err(Error::UnsupportedRanks { .. })), true),
    ]))
}

pub const CHECKS: &[(&str, CheckFn)] = &[
    ("conv.example", conv_example),
    ("conv.delta_identity", conv_delta),
    ("conv.linearity", conv_linearity),
    ("conv.causality", conv_causality),
    ("conv.replicated_groups", conv_grouping),
    ("toeplitz.matches_conv", toeplitz_vs_conv),
    ("toeplitz.unit_filter", toeplitz_identity),
    ("factors.worked_example", factors_worked_example),
    ("factors.reassembly", factors_reassembly),
    ("block_conv.configured", block_conv_configured),
    ("block_conv.sweep", block_conv_sweep),
    ("two_stage.configured", two_stage_configured),
    ("two_stage.eligibility_boundary", two_stage_boundary),
    ("two_stage.gated", two_stage_gated),
    ("chunk_parallel.matches_two_stage", chunk_parallel),
    ("flops.formula", flops_formula),
    ("flops.counter", flops_counter),
    ("two_stage.backward", two_stage_grad),
    ("two_stage.backward_implicit", two_stage_grad_implicit),
    ("fft.delta", fft_delta),
    ("fft.dif_bit_reversed", fft_bit_reversed),
    ("fft.round_trip", fft_round_trip),
    ("fft.parseval", fft_parseval),
    ("fft.split_merge", fft_split_merge),
    ("fft_conv.example", fft_conv_example),
    ("fft_conv.long_filter", fft_conv_long),
    ("fft_conv.configured", fft_conv_configured),
    ("fft.circular_oracle", circular_oracle),
    ("hyena.identity_collapse", hyena_identity),
    ("hyena.backend_equivalence", hyena_backends),
    ("hyena.backward_se", hyena_grad_se),
    ("hyena.backward_mr_grouped", hyena_grad_mr),
    ("hyena.backward_li", hyena_grad_li),
    ("hyena.layout_shape", hyena_layout),
    ("hyena.layout_composition", hyena_composition),
    ("hyena.causality", hyena_causality),
    ("hyena.replicated_groups", hyena_replicated),
    ("hyena.stack_backward", stack_grad),
    ("smoke.degenerate", smoke_degenerate),
    ("smoke.training", smoke_training),
    ("cpsim.a2a", cp_a2a),
    ("cpsim.a2a_pipe", cp_a2a_pipe),
    ("cpsim.p2p", cp_p2p),
    ("cpsim.p2p_overlap", cp_p2p_overlap),
    ("cpsim.p2p_fft", cp_p2p_fft),
    ("cpsim.p2p_volume", cp_p2p_volume),
    ("cpsim.a2a_volume", cp_a2a_volume),
    ("cpsim.a2a_backward", cp_a2a_backward),
    ("cpsim.fft_bin_ownership", cp_fft_bins),
    ("cpsim.fft_locality", cp_fft_locality),
    ("cpsim.zigzag", cp_zigzag),
    ("cpsim.determinism", cp_determinism),
    ("cpsim.single_rank", cp_single_rank),
    ("cpsim.rank_rejection", cp_reject_ranks),
];

/// Runs every check with its own generator forked from the seed; a library
/// error inside a check counts as that check failing.
pub fn cmd_verify(s: &Settings) -> VerifyReport {
    let results = CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let mut r = rng::fork(s.seed, i as u64);
            let verdict = check(s, &mut r).unwrap_or_else(|e| Verdict::Fail(format!("error: {e}")));
            CheckResult { name, verdict }
        })
        .collect();
    VerifyReport { results }
}
