use std::fs;
use std::path::Path;

use otfs_core::harness::{frame_seed, noise_variance, parse_ber_csv, run_ber_sweep, run_scenario, write_outputs, SimConfig, SweepContext, BER_HEADER};
use otfs_core::OtfsError;

const BASE: &str = r#"
master_seed = 5

[frame]
m = 16
n = 8
qam = 4

[channel]
profile = "eva"
fc_hz = 5.9e9
ts_s = 370.3e-9
velocity_kmh = 500.0

[sweep]
snr_db = [0.0, 20.0]
frames_per_point = 6
batch = 4

[[method]]
kind = "tte_sic"

[[method]]
kind = "tte_sic"
name = "tte_b1"
bandwidth = 1
sic_iterations = 3

[[method]]
kind = "mmse"
"#;

fn config(edit: impl Fn(String) -> String) -> SimConfig {
    SimConfig::from_toml(&edit(BASE.to_string())).unwrap()
}

#[test]
fn noiseless_frames_decode_without_errors() {
    let cfg = config(|s| s.replace("snr_db = [0.0, 20.0]", "snr_db = [inf]"));
    assert_eq!(noise_variance(f64::INFINITY), 0.0);
    let result = run_ber_sweep(&cfg, Path::new(".")).unwrap();
    assert_eq!(result.records.len(), 3);
    for r in &result.records {
        assert_eq!(r.bit_errors, 0, "{}", r.method);
        assert_eq!(r.frames, 6);
    }
}

#[test]
fn methods_see_identical_frames() {
    let cfg = config(|s| s);
    let scenario = cfg.resolve(Path::new(".")).unwrap();
    let ctx = SweepContext::new(&scenario, cfg.master_seed).unwrap();
    let seed = frame_seed(cfg.master_seed, 0, 3);
    let (info_all, _) = ctx.run_frame(seed, 0.5, &[0, 1, 2]).unwrap();
    let (info_one, det) = ctx.run_frame(seed, 0.5, &[2]).unwrap();
    assert_eq!(info_all, info_one);
    assert_eq!(det.len(), 1);
}

#[test]
fn more_noise_more_errors() {
    let cfg = config(|s| s);
    let result = run_ber_sweep(&cfg, Path::new(".")).unwrap();
    for method in ["tte_sic", "tte_b1", "mmse"] {
        let rows: Vec<_> = result.records.iter().filter(|r| r.method == method).collect();
        assert!(rows[0].bit_errors > rows[1].bit_errors, "{method}: {:?}", rows);
    }
}

#[test]
fn early_stop_on_error_target() {
    let cfg = config(|s| {
        s.replace("frames_per_point = 6", "frames_per_point = 40\ntarget_bit_errors = 30")
            .replace("[0.0, 20.0]", "[-5.0]")
    });
    let result = run_ber_sweep(&cfg, Path::new(".")).unwrap();
    for r in &result.records {
        assert!(r.bit_errors >= 30);
        assert!(r.frames < 40, "{} used {} frames", r.method, r.frames);
    }
}

#[test]
fn infeasible_cyclic_prefix_rejected() {
    let cfg = config(|s| s.replace("qam = 4", "qam = 4\ncp = 3"));
    match cfg.resolve(Path::new(".")) {
        Err(OtfsError::Config(msg)) => assert!(msg.contains("cyclic prefix"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_rejected() {
    assert!(SimConfig::from_toml(&BASE.replace("batch = 4", "batch = 4\nbacth = 4")).is_err());
    assert!(SimConfig::from_toml(&BASE.replace("kind = \"mmse\"", "kind = \"mmse\"\nbandwith = 2")).is_err());
}

#[test]
fn custom_profile_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("two_tap.txt"), "# delay_ns power_db\n0 0\n740.6, -3\n").unwrap();
    let cfg_path = dir.path().join("sim.toml");
    fs::write(&cfg_path, BASE.replace("profile = \"eva\"", "profile = \"two_tap.txt\"")).unwrap();
    let (cfg, base) = SimConfig::load(&cfg_path).unwrap();
    let scenario = cfg.resolve(&base).unwrap();
    assert_eq!(scenario.profile.taps.len(), 2);
    assert_eq!(scenario.geometry.m_cp, 2);
}

#[test]
fn output_files() {
    let cfg = config(|s| s);
    let scenario = cfg.resolve(Path::new(".")).unwrap();
    let result = run_scenario(&cfg, &scenario).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested").join("run");
    let written = write_outputs(&out, &result, &cfg, &scenario).unwrap();
    assert_eq!(written.len(), 3);

    let csv = fs::read_to_string(out.join("ber.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), BER_HEADER);
    assert_eq!(parse_ber_csv(&csv).unwrap(), result.records);
    assert!(csv.lines().any(|l| l.starts_with("mmse,0.0,,,")));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ber.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["master_seed"], 5);
    assert_eq!(meta["auto_bandwidth"], 1);
    assert!(meta["ebn0_minus_snr_db"].as_f64().unwrap() > 0.0);

    let diag = fs::read_to_string(out.join("iterations.csv")).unwrap();
    // 2 SNR points x (2 + 3 + 1) iterations
    assert_eq!(diag.lines().count(), 1 + 12);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = config(|s| s);
    assert_eq!(SimConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
}
