//! End-to-end runs of the `replica-mac` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use replica_mac_cli::commands::{EXTRAPOLATE_HEADER, REGION_HEADER, SWEEP_HEADER};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_replica-mac"));
    c.env("REPLICA_MAC_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows of a CSV written by the binary, with the trailer checked.
fn data_rows(path: &Path, header: &[&str]) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], header.join(","), "header of {}", path.display());
    let trailer = lines.pop().unwrap();
    let rows: Vec<Vec<String>> = lines[1..].iter().map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(trailer, format!("# complete rows={}", rows.len()));
    rows
}

const QPSK_PAIR: &str = r#"
rx_antennas = 2

[[users]]
antennas = 2
snr_db = 10.0
constellation = "qpsk"

[[interferers]]
antennas = 2
snr_db = 10.0
constellation = "qpsk"
"#;

const SYMMETRIC_USERS: &str = r#"
rx_antennas = 3

[[users]]
antennas = 3
snr_db = 0.0

[[users]]
antennas = 3
snr_db = 0.0
"#;

#[test]
fn csv_headers_are_stable() {
    assert_eq!(
        SWEEP_HEADER.join(","),
        "snr_db,mode,sum_rate_nats_per_antenna,sum_rate_bits_per_antenna,std_error_bits,converged,iterations"
    );
    assert_eq!(
        REGION_HEADER.join(","),
        "sample,angle_rad,w1,w2,r1_nats,r2_nats,r1_bits,r2_bits,support_bits,c1_bits,c2_bits,c12_bits"
    );
    assert_eq!(
        EXTRAPOLATE_HEADER.join(","),
        "size,inv_size,mi_nats_per_antenna,mi_bits_per_antenna,std_error_bits,realizations"
    );
}

#[test]
fn sweep_rows_carry_consistent_units() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", QPSK_PAIR);
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep", "--scenario", s(&sc), "--out", s(&out), "--grid", "0:10:5", "--mode", "both", "--realizations", "20",
        "--noise-samples", "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out, &SWEEP_HEADER);
    assert_eq!(rows.len(), 6);
    for (i, r) in rows.iter().enumerate() {
        let nats: f64 = r[2].parse().unwrap();
        let b: f64 = r[3].parse().unwrap();
        assert!((b - nats / std::f64::consts::LN_2).abs() <= 1e-15 * b.abs().max(1.0));
        // replica first, then Monte Carlo, per grid point
        let mc = i % 2 == 1;
        assert_eq!(r[1], if mc { "mc" } else { "replica" });
        assert_eq!(r[4].is_empty(), !mc);
        assert_eq!(r[5].is_empty(), mc);
    }
}

#[test]
fn single_point_grid_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", QPSK_PAIR);
    let out = dir.path().join("one.csv");
    let o = run(&["sweep", "--scenario", s(&sc), "--out", s(&out), "--grid", "10"]);
    assert!(o.status.success());
    let rows = data_rows(&out, &SWEEP_HEADER);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "10.0");
}

#[test]
fn sumrate_matches_library_and_vanishes_at_zero_snr() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "s.toml", QPSK_PAIR);
    let out = dir.path().join("r.csv");
    let o = run(&["sumrate", "--scenario", s(&sc), "--out", s(&out)]);
    assert!(o.status.success());
    let row = &data_rows(
        &out,
        &["sum_rate_nats_per_antenna", "sum_rate_bits_per_antenna", "h_s", "h_i", "converged", "iterations", "residual"],
    )[0];
    let spec = replica_mac::scenario::load_scenario(&sc).unwrap();
    let lib = replica_mac::replica::sum_rate(&spec.scenario, &Default::default()).unwrap();
    assert_eq!(row[0].parse::<f64>().unwrap(), lib.sum_rate);
    assert!(String::from_utf8_lossy(&o.stdout).contains("eps_users"));

    let silent = write(dir.path(), "z.toml", &QPSK_PAIR.replace("10.0", "-300.0"));
    let o = run(&["sumrate", "--scenario", s(&silent)]);
    let text = String::from_utf8_lossy(&o.stdout).to_string();
    let line = text.lines().find(|l| l.starts_with("sum_rate_nats_per_antenna")).unwrap();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!(v.abs() < 1e-12, "{v}");
}

#[test]
fn malformed_files_exit_with_parse_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &QPSK_PAIR.replacen("\"qpsk\"", "\"qpsq\"", 1));
    let o = run(&["sumrate", "--scenario", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("users[0].constellation"), "{err}");

    let broken = write(dir.path(), "broken.toml", "rx_antennas = 2\n[[users]]\nantennas = \"two\"\nsnr_db = 0.0\n");
    let o = run(&["sumrate", "--scenario", s(&broken)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    assert_eq!(run(&["sumrate", "--scenario", "/nonexistent/x.toml"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--bogus"]).status.code(), Some(2));
}

#[test]
fn oversized_enumeration_hits_capacity_guard() {
    let dir = tempfile::tempdir().unwrap();
    let text = QPSK_PAIR.replace("antennas = 2", "antennas = 6").replace("\"qpsk\"", "\"qam16\"");
    let sc = write(dir.path(), "big.toml", &text);
    let out = dir.path().join("mc.csv");
    let o = run(&["sweep", "--scenario", s(&sc), "--out", s(&out), "--grid", "0", "--mode", "mc", "--realizations", "2"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().last().unwrap().starts_with("# incomplete rows=0 error="));
}

#[test]
fn symmetric_region_swaps_under_user_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(dir.path(), "u.toml", SYMMETRIC_USERS);
    let out = dir.path().join("region.csv");
    let o = run(&["rate-region", "--scenario", s(&sc), "--out", s(&out), "--samples", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out, &REGION_HEADER);
    let f = |r: &Vec<String>, i: usize| r[i].parse::<f64>().unwrap();
    let n = rows.len();
    // angles t and π/2 - t mirror each other, except on the diagonal tie
    for j in 0..n / 2 {
        let (a, b) = (&rows[j], &rows[n - 1 - j]);
        assert!((f(a, 4) - f(b, 5)).abs() < 1e-12 && (f(a, 5) - f(b, 4)).abs() < 1e-12);
        assert!((f(a, 8) - f(b, 8)).abs() < 1e-12);
    }
    assert_eq!(rows[0][9], rows[0][10]);

    let qpsk = write(dir.path(), "q.toml", &SYMMETRIC_USERS.replace("snr_db = 0.0", "snr_db = 0.0\nconstellation = \"qpsk\""));
    let o = run(&["rate-region", "--scenario", s(&qpsk), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn optimizing_an_uncorrelated_gaussian_user_keeps_identity() {
    let dir = tempfile::tempdir().unwrap();
    let text = "rx_antennas = 2\n[[users]]\nantennas = 2\nsnr_db = 0.0\nprecoder = \"optimize\"\n";
    let sc = write(dir.path(), "o.toml", text);
    let out = dir.path().join("opt");
    let o = run(&["optimize", "--scenario", s(&sc), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = replica_mac::precoder::read_precoder(&out.join("user_0.txt")).unwrap();
    let dev = replica_mac::linalg::frobenius(&(&g * g.adjoint() - replica_mac::linalg::identity(2)));
    assert!(dev < 1e-6, "{dev}");
    let log = data_rows(
        &out.join("objective_log.csv"),
        &["outer_iteration", "sum_rate_nats_per_antenna", "sum_rate_bits_per_antenna"],
    );
    let rates: Vec<f64> = log.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn extrapolation_reports_limit_and_replica_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = "rx_antennas = 4\n[[users]]\nantennas = 4\nsnr_db = 10.0\n[[interferers]]\nantennas = 4\nsnr_db = 10.0\n";
    let sc = write(dir.path(), "e.toml", text);
    let out = dir.path().join("ext.csv");
    let o = run(&["extrapolate", "--scenario", s(&sc), "--out", s(&out), "--sizes", "2,3,4,5", "--realizations", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out, &EXTRAPOLATE_HEADER);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[4][0], "limit");
    assert_eq!(rows[5][0], "replica");
    let limit: f64 = rows[4][2].parse().unwrap();
    let replica: f64 = rows[5][2].parse().unwrap();
    assert!((limit - replica).abs() < 0.1, "{limit} vs {replica}");
}
