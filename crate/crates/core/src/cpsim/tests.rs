use super::*;
use crate::conv::direct_causal_conv;
use crate::error::Error;
use crate::fft::{circular_conv_oracle, dft_oracle, fft_conv, to_complex};
use crate::filter::{FilterSpec, GroupSpec};
use crate::gradcheck::a2a_grad_error;
use crate::rng;
use crate::tensor::SeqTensor;

fn grouped(r: &mut rng::SimRng, d: usize, group_size: usize, lh: usize) -> GroupSpec {
    let filters = (0..d / group_size).map(|_| FilterSpec::explicit(rng::filter_taps(r, lh))).collect();
    GroupSpec::new(d, group_size, filters).unwrap()
}

#[test]
fn a2a_single_rank_is_local() {
    let mut r = rng::seeded(80);
    let x = rng::uniform_tensor::<f64>(&mut r, 4, 32);
    let g = grouped(&mut r, 4, 2, 5);
    let mut grp = SimGroup::new(1).unwrap();
    let y = a2a_conv(&shard(&x, 1, Layout::Sequential).unwrap(), &g, &mut grp).unwrap();
    assert_eq!(gather(&y), direct_causal_conv(&x, &g).unwrap());
    assert_eq!(grp.messages(None), 0);
}

#[test]
fn a2a_matches_oracle_and_counts() {
    let mut r = rng::seeded(81);
    let (d, l) = (16, 256);
    let x = rng::uniform_tensor::<f64>(&mut r, d, l);
    let g = grouped(&mut r, d, 4, 7);
    let oracle = direct_causal_conv(&x, &g).unwrap();
    for layout in [Layout::Sequential, Layout::Zigzag] {
        let mut grp = SimGroup::new(4).unwrap();
        let y = a2a_conv(&shard(&x, 4, layout).unwrap(), &g, &mut grp).unwrap();
        assert!(gather(&y).max_abs_diff(&oracle) <= 1e-12);
        assert_eq!(grp.rounds(A2A), 2);
        assert_eq!(grp.counter(A2A), (2 * d * l * 3 / 4) as u64);
        assert_eq!(grp.filter_storage(), &[7, 7, 7, 7]);
    }
}

#[test]
fn a2a_rejects_split_groups() {
    let mut r = rng::seeded(82);
    let x = rng::uniform_tensor::<f64>(&mut r, 8, 32);
    let g = grouped(&mut r, 8, 4, 3);
    let mut grp = SimGroup::new(4).unwrap();
    assert!(matches!(
        a2a_conv(&shard(&x, 4, Layout::Sequential).unwrap(), &g, &mut grp),
        Err(Error::Divisibility(_))
    ));
    let x = rng::uniform_tensor::<f64>(&mut r, 6, 32);
    let g = grouped(&mut r, 6, 1, 3);
    assert!(a2a_conv(&shard(&x, 4, Layout::Sequential).unwrap(), &g, &mut grp).is_err());
}

#[test]
fn a2a_backward_rounds_and_zero_upstream() {
    let mut r = rng::seeded(83);
    let x = rng::uniform_tensor::<f64>(&mut r, 8, 32);
    let g = grouped(&mut r, 8, 2, 4);
    let mut grp = SimGroup::new(4).unwrap();
    let xs = shard(&x, 4, Layout::Sequential).unwrap();
    let (_, saved) = a2a_conv_saved(&xs, &g, &mut grp).unwrap();
    let zero = shard(&SeqTensor::zeros(8, 32), 4, Layout::Sequential).unwrap();
    let grads = a2a_conv_backward(&saved, &zero, &mut grp).unwrap();
    assert_eq!(gather(&grads.dx).max_abs(), 0.0);
    assert!(grads.dh.iter().flatten().all(|&v| v == 0.0));
    assert_eq!(grp.rounds(A2A_BACKWARD), 2);
    assert_eq!(grp.rounds(A2A) + grp.rounds(A2A_BACKWARD), 4);
    assert_eq!(grp.total_elements(), (4 * 8 * 32 * 3 / 4) as u64);
}

#[test]
fn a2a_backward_matches_finite_differences() {
    let mut r = rng::seeded(84);
    for (n, layout, d, gs) in [(2, Layout::Sequential, 4, 1), (4, Layout::Zigzag, 8, 2)] {
        let x = rng::uniform_tensor::<f64>(&mut r, d, 16);
        let dy = rng::uniform_tensor::<f64>(&mut r, d, 16);
        let g = grouped(&mut r, d, gs, 5);
        let err = a2a_grad_error(&x, &g, n, layout, &dy).unwrap();
        assert!(err <= 1e-6, "{err}");
    }
}

#[test]
fn pipelining_preserves_values_and_volume() {
    let mut r = rng::seeded(85);
    let x = rng::uniform_tensor::<f64>(&mut r, 16, 64);
    let g = grouped(&mut r, 16, 2, 9);
    let xs = shard(&x, 2, Layout::Zigzag).unwrap();
    let mut base = SimGroup::new(2).unwrap();
    let y0 = a2a_conv(&xs, &g, &mut base).unwrap();
    for n_pipe in [1, 2, 4, 8] {
        let mut grp = SimGroup::new(2).unwrap();
        let y = a2a_conv_pipelined(&xs, &g, &mut grp, n_pipe).unwrap();
        assert!(y.max_abs_diff(&y0) <= 1e-12);
        assert_eq!(grp.rounds(A2A_PIPELINED), 2 * n_pipe);
        assert_eq!(grp.counter(A2A_PIPELINED), base.counter(A2A));
        if n_pipe == 1 {
            let shape = |g: &SimGroup| g.log().iter().map(|m| (m.step, m.src, m.dst, m.elements)).collect::<Vec<_>>();
            assert_eq!(shape(&grp), shape(&base));
        }
    }
    let mut grp = SimGroup::new(2).unwrap();
    assert!(a2a_conv_pipelined(&xs, &g, &mut grp, 3).is_err());
}

#[test]
fn p2p_halo_messages() {
    let mut r = rng::seeded(86);
    let (d, l) = (8, 64);
    let x = rng::uniform_tensor::<f64>(&mut r, d, l);
    let g = grouped(&mut r, d, 1, 7);
    let xs = shard(&x, 4, Layout::Sequential).unwrap();
    let mut grp = SimGroup::new(4).unwrap();
    let y = p2p_conv(&xs, &g, &mut grp).unwrap();
    assert!(gather(&y).max_abs_diff(&direct_causal_conv(&x, &g).unwrap()) <= 1e-12);
    assert_eq!(grp.messages(Some(P2P)), 3);
    assert!(grp.log().iter().all(|m| m.elements == 48));
    assert_eq!(grp.filter_storage(), &[7 * d; 4]);

    let mut other = SimGroup::new(4).unwrap();
    let ya = a2a_conv(&xs, &g, &mut other).unwrap();
    assert!(y.max_abs_diff(&ya) <= 1e-12);

    let delta = GroupSpec::shared(d, FilterSpec::delta(1)).unwrap();
    let mut grp = SimGroup::new(4).unwrap();
    p2p_conv(&xs, &delta, &mut grp).unwrap();
    assert_eq!(grp.messages(None), 0);
}

#[test]
fn p2p_preconditions() {
    let mut r = rng::seeded(87);
    let x = rng::uniform_tensor::<f64>(&mut r, 2, 32);
    let g = grouped(&mut r, 2, 1, 10);
    let mut grp = SimGroup::new(4).unwrap();
    assert!(matches!(
        p2p_conv(&shard(&x, 4, Layout::Sequential).unwrap(), &g, &mut grp),
        Err(Error::Shape(_))
    ));
    let g = grouped(&mut r, 2, 1, 3);
    assert!(p2p_conv(&shard(&x, 4, Layout::Zigzag).unwrap(), &g, &mut grp).is_err());
}

#[test]
fn overlapped_equals_plain() {
    let mut r = rng::seeded(88);
    let x = rng::uniform_tensor::<f64>(&mut r, 4, 64);
    let g = grouped(&mut r, 4, 2, 9);
    let xs = shard(&x, 8, Layout::Sequential).unwrap();
    let mut a = SimGroup::new(8).unwrap();
    let mut b = SimGroup::new(8).unwrap();
    let plain = p2p_conv(&xs, &g, &mut a).unwrap();
    let (over, trace) = p2p_conv_overlapped_traced(&xs, &g, &mut b).unwrap();
    assert!(plain.max_abs_diff(&over) <= 1e-12);
    assert_eq!(a.counter(P2P), b.counter(P2P_OVERLAPPED));
    assert_eq!(over.shard(0), &trace.local[0]);
    assert!(trace.corrections[0].is_none());
    assert!(trace.corrections[1..].iter().all(Option::is_some));
}

#[test]
fn correction_by_hand() {
    // d = 1, lh = 3: halo [a, b] before shard [c, e]
    let (a, b) = (0.5, -2.0);
    let h = vec![vec![1.0, 0.25, 3.0]];
    let halo = SeqTensor::from_rows(&[vec![a, b]]).unwrap();
    let corr = overlap_correction(&halo, &h, 1);
    // y_0 gets h1 b + h2 a, y_1 gets h2 b
    assert_eq!(corr.row(0), &[0.25 * b + 3.0 * a, 3.0 * b]);

    let x = SeqTensor::from_rows(&[vec![a, b, 1.5, 4.0]]).unwrap();
    let g = GroupSpec::shared(1, FilterSpec::explicit(h[0].clone())).unwrap();
    let mut grp = SimGroup::new(2).unwrap();
    let (y, trace) = p2p_conv_overlapped_traced(&shard(&x, 2, Layout::Sequential).unwrap(), &g, &mut grp).unwrap();
    assert_eq!(trace.corrections[1].as_ref().unwrap(), &corr);
    assert!(gather(&y).max_abs_diff(&direct_causal_conv(&x, &g).unwrap()) < 1e-15);
}

#[test]
#[should_panic(expected = "before its arrival")]
fn halo_read_before_arrival_panics() {
    let slot = super::p2p::tests_support::pending_slot();
    slot.read(0);
}

#[test]
fn fft_delta_returns_filter() {
    let mut r = rng::seeded(89);
    let mut x = SeqTensor::zeros(2, 16);
    x.set(0, 0, 1.0);
    x.set(1, 0, 1.0);
    let h = rng::uniform_tensor::<f64>(&mut r, 2, 16);
    let mut grp = SimGroup::new(2).unwrap();
    let y = p2p_fft_conv(
        &shard(&x, 2, Layout::Sequential).unwrap(),
        &shard(&h, 2, Layout::Sequential).unwrap(),
        &mut grp,
    )
    .unwrap();
    assert!(gather(&y).max_abs_diff(&h) <= 1e-12);
}

#[test]
fn fft_bins_are_bit_reversed_over_ranks() {
    let mut r = rng::seeded(90);
    for n in [2, 4, 8] {
        let l = 16 * n / 2;
        let x = rng::uniform_tensor::<f64>(&mut r, 1, l);
        let h = rng::uniform_tensor::<f64>(&mut r, 1, l);
        let mut grp = SimGroup::new(n).unwrap();
        let (y, trace) = p2p_fft_conv_traced(
            &shard(&x, n, Layout::Sequential).unwrap(),
            &shard(&h, n, Layout::Sequential).unwrap(),
            &mut grp,
        )
        .unwrap();
        let spec = dft_oracle(&to_complex(x.row(0)));
        for rank in 0..n {
            for (q, v) in trace.x_spectra[rank][0].iter().enumerate() {
                assert!((v - spec[spectrum_bin(n, rank, q)]).norm() <= 1e-10);
            }
        }
        let circ = circular_conv_oracle(x.row(0), h.row(0)).unwrap();
        let err = gather(&y).row(0).iter().zip(&circ).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8);
        assert!(grp.resident_peak().iter().all(|&p| p == l / n));
        assert!(grp.log().iter().all(|m| m.elements == 2 * (l / n) as u64));
    }
    // two ranks: even bins on rank 0, odd on rank 1
    assert_eq!(spectrum_bin(2, 0, 3), 6);
    assert_eq!(spectrum_bin(2, 1, 3), 7);
}

#[test]
fn fft_rank_and_length_checks() {
    let x = SeqTensor::<f64>::zeros(1, 48);
    let mut grp = SimGroup::new(16).unwrap();
    let xs = shard(&SeqTensor::zeros(1, 64), 16, Layout::Sequential).unwrap();
    assert!(matches!(
        p2p_fft_conv(&xs, &xs, &mut grp),
        Err(Error::UnsupportedRanks { ranks: 16, .. })
    ));
    let mut grp = SimGroup::new(4).unwrap();
    let xs = shard(&x, 4, Layout::Sequential).unwrap();
    assert!(matches!(p2p_fft_conv(&xs, &xs, &mut grp), Err(Error::NotPowerOfTwo(12))));
    assert!(SimGroup::new(3).is_err());
}

#[test]
fn causal_wrapper_matches_direct_and_fft() {
    let mut r = rng::seeded(91);
    let x = rng::uniform_tensor::<f64>(&mut r, 1, 512);
    let h = rng::filter_taps(&mut r, 512);
    let g = GroupSpec::shared(1, FilterSpec::explicit(h.clone())).unwrap();
    let mut grp = SimGroup::new(4).unwrap();
    let y = p2p_fft_causal_wrapper(&x, &g, &mut grp).unwrap();
    assert!(y.max_abs_diff(&direct_causal_conv(&x, &g).unwrap()) <= 1e-8);
    let f = fft_conv(x.row(0), &h).unwrap();
    let err = y.row(0).iter().zip(&f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-10);

    let d = GroupSpec::shared(1, FilterSpec::delta(1)).unwrap();
    let mut grp = SimGroup::new(8).unwrap();
    assert!(p2p_fft_causal_wrapper(&x, &d, &mut grp).unwrap().max_abs_diff(&x) <= 1e-12);
}

#[test]
fn threaded_mode_is_bit_identical() {
    let mut r = rng::seeded(92);
    let x = rng::uniform_tensor::<f64>(&mut r, 8, 128);
    let g = grouped(&mut r, 8, 2, 7);
    for scheme in Scheme::ALL {
        let a = run_scheme(scheme, &x, &g, 4, Layout::Sequential, 2, ExecMode::Sequential).unwrap();
        let b = run_scheme(scheme, &x, &g, 4, Layout::Sequential, 2, ExecMode::Threaded).unwrap();
        assert_eq!(a.output, b.output, "{scheme}");
        assert_eq!(a.group.export_log(), b.group.export_log(), "{scheme}");
        assert!(a.max_abs_err <= scheme.tolerance(), "{scheme}: {}", a.max_abs_err);
    }
}

#[test]
fn log_export_format() {
    let mut r = rng::seeded(93);
    let x = rng::uniform_tensor::<f64>(&mut r, 2, 16);
    let g = grouped(&mut r, 2, 1, 3);
    let run = run_scheme(Scheme::P2p, &x, &g, 2, Layout::Sequential, 1, ExecMode::Sequential).unwrap();
    assert_eq!(run.group.export_log(), "step,scheme,src,dst,elements\n0,p2p,0,1,4\n");
    let run = run_scheme(Scheme::A2a, &x, &g, 2, Layout::Sequential, 1, ExecMode::Sequential).unwrap();
    assert!(run.group.export_log().lines().nth(1).unwrap().starts_with("0,a2a,0,ALL,"));
}

#[test]
fn scheme_names_parse() {
    for s in Scheme::ALL {
        assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
    }
    assert!("ring".parse::<Scheme>().is_err());
}
