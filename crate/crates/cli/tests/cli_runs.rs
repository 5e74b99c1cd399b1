use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn otoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otoc")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

const MINIMAL: &str = r#"{
    "name": "minimal",
    "scheme": "zz",
    "n": 2,
    "detunings_mhz": [1.0, 1.0],
    "drives_mhz": [0.5, 0.5],
    "couplings_mhz": [0.42],
    "time_grid": {"t_max_us": 1.2, "n_points": 7}
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn minimal_config_writes_documented_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = otoc(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("minimal.csv")).unwrap();
    assert!(csv.starts_with("t_us,avg_otoc,pf_mean,tele_fid_conditional,noise_param,"));
    assert_eq!(csv.lines().count(), 8);
    assert!(column(&csv, "noise_param").iter().all(|v| (v - 1.0).abs() < 1e-9));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let exp = &manifest["experiments"][0];
    assert_eq!(exp["config"]["couplings_mhz"][0], 0.42);
    assert_eq!(exp["series"][0]["file"], "minimal.csv");
    assert!(manifest["version"].is_string());
}

#[test]
fn unknown_key_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("\"n\": 2", "\"n\": 2, \"coupling_typo\": 3"));
    let o = otoc(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coupling_typo"), "{}", stderr(&o));
}

#[test]
fn unphysical_coherence_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace(
        "\"n\": 2",
        r#""n": 2, "coherence": {"t1_us": [10, 10, 10, 10, 10], "t2_us": [5, 5, 25, 5, 5]}"#,
    );
    let o = otoc(&["run", &write_config(dir.path(), &text)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("exceeds 2·T1"), "{}", stderr(&o));
}

#[test]
fn numerical_failure_exits_with_invariant_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace(
        "\"n\": 2",
        r#""n": 2, "coherence": {"t1_us": [0.01, 0.01, 0.01, 0.01, 0.01], "t2_us": [0.01, 0.01, 0.01, 0.01, 0.01]},
           "integrator": {"dt_us": 0.2}"#,
    );
    let o = otoc(&["run", &write_config(dir.path(), &text), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("invariant"), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("\"n\": 2", r#""n": 2, "shots": 2000, "master_seed": 17, "epr": [{"fidelity": 0.93}, {"fidelity": 0.92}]"#);
    let cfg = write_config(dir.path(), &text);
    let run = |sub: &str, workers: &str| {
        let out = dir.path().join(sub);
        let o = otoc(&["run", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out.join("minimal.csv")).unwrap()
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "3"));
    assert!(String::from_utf8(a).unwrap().lines().next().unwrap().ends_with("se_noise_param"));
}

#[test]
fn fig2_noiseless_commuting_chain_stays_at_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let o = otoc(&["preset", "fig2", "--noiseless", "--points", "13", "--workers", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig2_7q_nodrive.csv")).unwrap();
    assert!(column(&csv, "tele_fid_conditional").iter().all(|f| (f - 0.5).abs() < 1e-9));
    let oscillating = fs::read_to_string(dir.path().join("fig2_5q_drive.csv")).unwrap();
    assert!(column(&oscillating, "tele_fid_conditional").iter().any(|f| (f - 0.5).abs() > 0.05));
}

#[test]
fn fig1_7q_noiseless_starts_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = otoc(&["preset", "fig1_7q", "--noiseless", "--points", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig1_7q.csv")).unwrap();
    assert_eq!(column(&csv, "avg_otoc")[0], 1.0);
}

#[test]
fn fig3_writes_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = otoc(&["preset", "fig3", "--workers", "4", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rates = fs::read_to_string(dir.path().join("fig3_7q_rates.csv")).unwrap();
    assert!(rates.starts_with("d_omega_mhz,d_j_mhz,decay_rate_per_us\n"));
    let r = column(&rates, "decay_rate_per_us");
    assert_eq!(r.len(), 6);
    assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
    assert!(dir.path().join("fig3_5q_m5.csv").exists());
}

#[test]
fn preset_reference_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"preset": "fig4", "n_points": 4, "output": "results"}"#);
    let o = otoc(&["run", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spatial = fs::read_to_string(dir.path().join("results/fig4_drive_spatial.csv")).unwrap();
    assert_eq!(spatial.lines().next().unwrap(), "t_us,bell_pair_otoc,inner_pair_otoc");
}

#[test]
fn unknown_preset_is_rejected() {
    let o = otoc(&["preset", "fig9"]);
    assert!(!o.status.success());
}

#[test]
fn oracle_matches_closed_form() {
    let o = otoc(&["oracle", "--scheme", "zz", "--n", "2", "--j", "0.42", "--t", "0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let expect = (3.0 + (4.0 * std::f64::consts::TAU * 0.42 * 0.3).cos()) / 4.0;
    assert!((v["avg_otoc"].as_f64().unwrap() - expect).abs() < 1e-12);
}

#[test]
fn calib_subcommands() {
    let o = otoc(&[
        "calib", "coupler", "--g1", "63", "--g2", "63", "--gd", "5.17", "--delta1", "-3500", "--delta2", "-3500",
        "--sigma1", "12000", "--sigma2", "12000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["j_mhz"].as_f64().unwrap() - 3.705).abs() < 1e-3);

    let o = otoc(&["calib", "bare-freq", "--w00", "4.4240", "--w10", "4.4248", "--w01", "4.4240"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["j12_mhz"].as_f64().unwrap() - 0.2).abs() < 1e-9);
    assert!((v["omega_ghz"].as_f64().unwrap() - 4.4244).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let rb = |p: f64, name: &str| {
        let rows: String = (0..20).map(|k| {
            let m = 1 + 10 * k;
            format!("{m},{}\n", 0.5 * p.powi(m) + 0.5)
        }).collect();
        let path = dir.path().join(name);
        fs::write(&path, format!("m,fidelity\n{rows}")).unwrap();
        path.to_str().unwrap().to_string()
    };
    let (reference, gate) = (rb(0.996, "ref.csv"), rb(0.99, "gate.csv"));
    let o = otoc(&["calib", "rb", &reference, "--interleaved", &gate]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let r = v["gate_infidelity"].as_f64().unwrap();
    assert!((r - (1.0 - 0.99 / 0.996) / 2.0).abs() < 1e-8, "{r}");

    let phases: String = (0..41)
        .map(|k| {
            let t = 0.05 * k as f64;
            let phi = 7.0 * t + 0.2;
            format!("{t},{}\n", phi.sin().atan2(phi.cos()))
        })
        .collect();
    let path = dir.path().join("phase.csv");
    fs::write(&path, format!("t_us,phi_rad\n{phases}")).unwrap();
    let o = otoc(&["calib", "phase", path.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["k_rad_per_us"].as_f64().unwrap() - 7.0).abs() < 1e-9);

    let o = otoc(&["calib", "coupler", "--g1", "1", "--g2", "1", "--gd", "0", "--delta1", "0", "--delta2", "1", "--sigma1", "1", "--sigma2", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
