use std::fs;

use convmix_cli::{run, CSV_HEADER, EXIT_FAILED, EXIT_OK, EXIT_USAGE};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn cli(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(std::iter::once("convmix").chain(args.iter().copied()), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn temp_path(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("convmix-cli-{}-{name}", std::process::id()))
}

fn assert_single_line_error(o: &Output) {
    assert_eq!(o.stderr.lines().count(), 1, "stderr: {:?}", o.stderr);
    assert!(o.stdout.is_empty() || o.code == EXIT_FAILED);
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn verify_default_passes() {
    let o = cli(&["verify"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stdout);
    let checks = o.stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count();
    assert!(checks >= 40, "{checks} checks");
    assert!(!o.stdout.contains("FAIL "));
}

#[test]
fn verify_reports_expected_rejection() {
    let cfg = temp_path("ineligible.cfg");
    fs::write(&cfg, "# lh = lb + 2\nblock-size = 8\nfilter-len = 10\nlen = 256\n").unwrap();
    let o = cli(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_OK);
    let line = o.stdout.lines().find(|l| l.contains("two_stage.configured")).unwrap();
    assert!(line.starts_with("PASS") && line.contains("expected rejection"), "{line}");
}

#[test]
fn corrupted_config_is_a_usage_error() {
    let cfg = temp_path("corrupt.cfg");
    fs::write(&cfg, "width = 8\nthis is not a pair\n").unwrap();
    let o = cli(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_USAGE);
    assert_single_line_error(&o);
    assert!(o.stderr.contains("line 2"));

    let o = cli(&["verify", "--config", "/nonexistent/convmix.cfg"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert_single_line_error(&o);
}

#[test]
fn cpsim_p2p_example() {
    let log = temp_path("p2p.log");
    let o = cli(&[
        "cpsim",
        "--scheme",
        "p2p",
        "--ranks",
        "4",
        "--len",
        "64",
        "--filter-len",
        "7",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("messages 3"));
    // d = 8 by default, so each halo carries 6 * 8 = 48 elements
    assert!(o.stdout.contains("elements 144"));
    let text = fs::read_to_string(&log).unwrap();
    assert_eq!(text, "step,scheme,src,dst,elements\n0,p2p,0,1,48\n0,p2p,1,2,48\n0,p2p,2,3,48\n");
    let err: f64 = o
        .stdout
        .lines()
        .find_map(|l| l.strip_prefix("max_abs_err "))
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(err <= 1e-12);
}

#[test]
fn cpsim_single_rank_is_silent() {
    for scheme in ["a2a", "a2a-pipe", "p2p", "p2p-overlap", "p2p-fft"] {
        let o = cli(&["cpsim", "--scheme", scheme, "--ranks", "1", "--len", "64"]);
        assert_eq!(o.code, EXIT_OK, "{scheme}: {}", o.stderr);
        assert!(o.stdout.contains("messages 0"), "{scheme}");
    }
}

#[test]
fn cpsim_rejects_bad_ranks() {
    let o = cli(&["cpsim", "--scheme", "p2p-fft", "--ranks", "3", "--len", "48"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert_single_line_error(&o);
    let o = cli(&["cpsim", "--scheme", "ring"]);
    assert_eq!(o.code, EXIT_USAGE);
    assert_single_line_error(&o);
}

#[test]
fn bench_sweep_rows_and_flops() {
    let o = cli(&["bench", "--op", "two_stage", "--len", "1024..16384", "--filter-len", "7"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    assert_eq!(o.stdout.lines().next().unwrap(), CSV_HEADER);
    let rows = rows(&o.stdout);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == 11 && r[7].parse::<u64>().unwrap() > 0));

    let o = cli(&[
        "bench",
        "--op",
        "two_stage",
        "--len",
        "1024",
        "--block-size",
        "128",
        "--width",
        "64",
    ]);
    assert_eq!(rows_of(&o)[0][8], "16777216");
    let o = cli(&["flops", "--len", "1024", "--block-size", "128", "--width", "64"]);
    assert_eq!(rows_of(&o)[0][8], "16777216");
}

fn rows_of(o: &Output) -> Vec<Vec<String>> {
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    rows(&o.stdout)
}

#[test]
fn bench_csv_is_stable_apart_from_wall_time() {
    let strip = |o: &Output| -> Vec<Vec<String>> {
        rows_of(o)
            .into_iter()
            .map(|mut r| {
                r[7].clear();
                r
            })
            .collect()
    };
    for dtype in ["f32", "f64"] {
        for op in ["block_conv", "two_stage", "chunk_parallel", "fft_conv", "direct"] {
            let args = [
                "bench",
                "--op",
                op,
                "--len",
                "64..256",
                "--filter-len",
                "9",
                "--block-size",
                "8",
                "--dtype",
                dtype,
                "--seed",
                "7",
            ];
            assert_eq!(strip(&cli(&args)), strip(&cli(&args)), "{op} {dtype}");
        }
    }
    let args = ["bench", "--op", "cpsim", "--scheme", "a2a-pipe", "--len", "128", "--seed", "3"];
    let a = strip(&cli(&args));
    assert_eq!(a, strip(&cli(&args)));
    assert_eq!(a[0][10], (2 * 8 * 128 * 3 / 4).to_string());
}

#[test]
fn bench_writes_csv_file() {
    let path = temp_path("bench.csv");
    let o = cli(&["bench", "--op", "block_conv", "--len", "128", "--csv", path.to_str().unwrap()]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn fft_beats_direct_at_long_filters() {
    let time = |op: &str| -> u64 {
        let o = cli(&["bench", "--op", op, "--len", "8192", "--filter-len", "8192", "--width", "1"]);
        rows_of(&o)[0][7].parse().unwrap()
    };
    let (fft, direct) = (time("fft_conv"), time("direct"));
    assert!(fft < direct, "fft {fft} ns, direct {direct} ns");
}

#[test]
fn bench_usage_errors() {
    for args in [
        &["bench", "--op", "nope"][..],
        &["bench", "--op", "two_stage", "--block-size", "4", "--filter-len", "9"],
        &["bench", "--op", "cpsim", "--dtype", "f32"],
        &["bench", "--width", "6", "--group-size", "4"],
        &["bench", "--reps", "3"],
        &["bench", "--len", "abc"],
        &["bench", "--bogus"],
    ] {
        let o = cli(args);
        assert_eq!(o.code, EXIT_USAGE, "{args:?}");
        assert_single_line_error(&o);
    }
}

#[test]
fn smoke_train_default_and_degenerate() {
    let o = cli(&["smoke-train"]);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let ratio: f64 = o.stdout.lines().last().unwrap().strip_prefix("ratio ").unwrap().parse().unwrap();
    assert!(ratio <= 0.5);
    assert_eq!(o.stdout.lines().count(), 1 + 201 + 1);

    for args in [&["smoke-train", "--steps", "0"][..], &["smoke-train", "--lr", "0", "--steps", "3"]] {
        let o = cli(args);
        assert_eq!(o.code, EXIT_FAILED);
        assert!(o.stdout.ends_with("ratio 1.0000\n"));
        assert_single_line_error(&o);
    }
}

#[test]
fn smoke_train_divergence_exits_nonzero() {
    let o = cli(&["smoke-train", "--lr", "1000", "--steps", "50"]);
    assert_eq!(o.code, EXIT_FAILED);
    assert_single_line_error(&o);
    assert!(o.stderr.contains("non-finite"), "{}", o.stderr);
}

#[test]
fn help_exits_zero() {
    let o = cli(&["--help"]);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("verify"));
}
