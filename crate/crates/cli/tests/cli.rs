use fadecap::coherence::effective_coherence_time_alt;
use fadecap::{db_to_linear, ub_coherent, ChannelSpec, EctOptions, TapProfile, TemporalCorrelation};
use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn fadecap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fadecap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn json_col(doc: &Value, name: &str) -> Vec<f64> {
    doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r[name].as_f64().unwrap())
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn ect_csv_and_json_reproduce_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--snr-start", "-30", "--snr-stop", "30", "--snr-points", "7"];
    let out = fadecap(&[&["ect", "--out", "e.csv"], &grid[..]].concat(), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = fadecap(
        &[&["ect", "--format", "json", "--out", "e.json"], &grid[..]].concat(),
        dir.path(),
    );
    assert!(out.status.success());

    let (header, rows) = read_csv(&dir.path().join("e.csv"));
    assert_eq!(header, ["snr_db", "tc", "converged", "k_used", "error"]);
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("e.json")).unwrap()).unwrap();
    let corr = TemporalCorrelation::Ar1 { gamma: 0.9672 };
    let opts = EctOptions::with_k_max(1 << 16);
    let snr = col(&header, &rows, "snr_db");
    assert_eq!(snr, vec![-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0]);
    let expected: Vec<f64> = snr
        .iter()
        .map(|&d| {
            effective_coherence_time_alt(&corr, 30, db_to_linear(d), &opts)
                .unwrap()
                .value
        })
        .collect();
    assert_eq!(col(&header, &rows, "tc"), expected);
    assert_eq!(json_col(&doc, "tc"), expected);
    assert_eq!(json_col(&doc, "snr_db"), snr);
    let raw = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert!(!raw.contains('\r'));
}

#[test]
fn low_snr_plateau_and_memoryless_channel() {
    let dir = tempfile::tempdir().unwrap();
    let out = fadecap(
        &[
            "ect",
            "--snr-start",
            "-90",
            "--snr-stop",
            "-80",
            "--snr-points",
            "2",
            "--out",
            "a.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let (h, r) = read_csv(&dir.path().join("a.csv"));
    for tc in col(&h, &r, "tc") {
        // N(1 + γ²)/(1 - γ²) = 900.4 for γ = 0.9672, N = 30
        assert!((tc / 900.4 - 1.0).abs() < 1e-3, "{tc}");
    }

    let cfg = write(
        dir.path(),
        "iid.toml",
        "[channel]\nn_bins = 30\n[channel.taps]\npowers = [0.5, 0.5]\n[channel.corr]\nkind = \"ar1\"\ngamma = 0.0\n",
    );
    let out = fadecap(
        &[
            "ect",
            "--config",
            &cfg,
            "--snr-start=-40",
            "--snr-stop=40",
            "--out",
            "b.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, r) = read_csv(&dir.path().join("b.csv"));
    let tc = col(&h, &r, "tc");
    assert_eq!(tc.len(), 36);
    assert!(tc.iter().all(|&t| t == 30.0));
}

#[test]
fn clarke_sweep_is_nonincreasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[channel]\nn_bins = 16\n[channel.taps]\npowers = [1.0]\n[channel.corr]\nkind = \"clarke\"\nnormalized_doppler = 0.02\n[snr_grid]\nstart_db = -30.0\nstop_db = 50.0\npoints = 17\n",
    );
    let out = fadecap(
        &["ect", "--config", &cfg, "--format", "json", "--out", "c.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("c.json")).unwrap()).unwrap();
    let tc = json_col(&doc, "tc");
    assert!(tc.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{tc:?}");
    assert_eq!(doc["params"]["channel"]["corr"]["kind"], "clarke");
}

#[test]
fn strict_mode_fails_on_unconverged_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "k.toml", "[ect]\nk_max = 4\n[channel]\nn_bins = 30\n[channel.taps]\npowers = [1.0]\n[channel.corr]\nkind = \"ar1\"\ngamma = 0.999\n");
    let args = [
        "ect",
        "--config",
        &cfg,
        "--snr-start=-40",
        "--snr-stop=-30",
        "--snr-points=2",
        "--out",
        "s.csv",
    ];

    let out = fadecap(&args, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let (h, r) = read_csv(&dir.path().join("s.csv"));
    let ci = h.iter().position(|c| c == "converged").unwrap();
    let ei = h.iter().position(|c| c == "error").unwrap();
    assert!(r.iter().all(|row| row[ci] == "false" && !row[ei].is_empty()));
    std::fs::remove_file(dir.path().join("s.csv")).unwrap();

    let out = fadecap(&[&args[..], &["--strict"]].concat(), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let record: Value = serde_json::from_str(stderr.lines().next().unwrap()).unwrap();
    assert_eq!(record["status"], "error");
    assert_eq!(record["failures"].as_array().unwrap().len(), 2);
    assert!(!dir.path().join("s.csv").exists());
}

#[test]
fn invalid_configuration_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fadecap(&["ect", "--snr-points", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = fadecap(&["ect", "--snr-start", "5", "--snr-stop", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = fadecap(&["bounds", "--constraint", "peak", "--alpha", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = fadecap(&["ect", "--plot", "svg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_round_trip_and_units() {
    let dir = tempfile::tempdir().unwrap();
    let grid = ["--snr-start", "-20", "--snr-stop", "10", "--snr-points", "2"];
    for (fmt, name, extra) in [
        ("csv", "n.csv", None),
        ("json", "n.json", None),
        ("csv", "b.csv", Some("--bits")),
    ] {
        let mut args = vec!["bounds", "--format", fmt, "--out", name, "--plot", "svg"];
        args.extend(grid);
        args.extend(extra);
        let out = fadecap(&args, dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (h, r) = read_csv(&dir.path().join("n.csv"));
    assert_eq!(
        &h[..8],
        [
            "snr_db",
            "ub_coh",
            "ub_low",
            "lb_qpsk_nw",
            "lb_qpsk_wd",
            "lb_tg_wd",
            "lb",
            "ub"
        ]
    );
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("n.json")).unwrap()).unwrap();
    for name in [
        "ub_coh",
        "ub_low",
        "lb_qpsk_nw",
        "lb_qpsk_wd",
        "lb_tg_wd",
        "lb",
        "ub",
        "argmax_beta",
    ] {
        assert_eq!(col(&h, &r, name), json_col(&doc, name), "{name}");
    }
    let spec = ChannelSpec::new(30, TapProfile::equal(5), TemporalCorrelation::Ar1 { gamma: 0.9672 }).unwrap();
    let snr = col(&h, &r, "snr_db");
    for (d, u) in snr.iter().zip(col(&h, &r, "ub_coh")) {
        assert_eq!(u, ub_coherent(&spec, db_to_linear(*d)).unwrap());
    }
    for (lb, ub) in col(&h, &r, "lb").iter().zip(col(&h, &r, "ub")) {
        assert!(*lb > 0.0 && lb <= &ub);
    }
    let (hb, rb) = read_csv(&dir.path().join("b.csv"));
    for (nats, bits) in col(&h, &r, "ub").iter().zip(col(&hb, &rb, "ub")) {
        assert!((bits - nats / std::f64::consts::LN_2).abs() <= 1e-15 * bits);
    }
    let svg = std::fs::read_to_string(dir.path().join("n.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("n.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["constraint"]["alpha"], 10.0);
}

#[test]
fn simulate_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "mc.toml",
        "[mc]\nn_symbols = 120\nn_trials = 4\nwindow = 40\n[channel]\nn_bins = 4\n[channel.taps]\npowers = [0.5, 0.5]\n[channel.corr]\nkind = \"ar1\"\ngamma = 0.9\n",
    );
    let run = |seed: &str, out: &str| {
        let o = fadecap(
            &[
                "simulate",
                "--config",
                &cfg,
                "--seed",
                seed,
                "--snr-start=-10",
                "--snr-stop=10",
                "--snr-points=3",
                "--out",
                out,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let a = run("11", "a.csv");
    let b = run("11", "b.csv");
    let c = run("12", "c.csv");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (h, r) = read_csv(&dir.path().join("a.csv"));
    assert_eq!(h, ["snr_db", "mc_rate", "mc_stderr", "approx_rate", "error"]);
    for (mc, approx) in col(&h, &r, "mc_rate").iter().zip(col(&h, &r, "approx_rate")) {
        assert!(*mc > 0.0 && (mc / approx - 1.0).abs() < 0.05);
    }
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["mc"]["seed"], 11);
}

#[test]
fn figure2_preset_echoes_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let out = fadecap(
        &[
            "figure",
            "figure2",
            "--no-mc",
            "--snr-start=-40",
            "--snr-stop=-30",
            "--snr-points=2",
            "--out",
            "f2",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let f2 = dir.path().join("f2");
    let meta: Value = serde_json::from_slice(&std::fs::read(f2.join("bounds.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["n_bins"], 30);
    assert_eq!(meta["n_taps"], 5);
    assert_eq!(meta["tap_powers"], serde_json::json!([0.2, 0.2, 0.2, 0.2, 0.2]));
    assert_eq!(meta["gammas"], serde_json::json!([0.9672]));
    assert_eq!(meta["constraint"]["alpha"], 10.0);
    let summary: Value = serde_json::from_slice(&std::fs::read(f2.join("summary.json")).unwrap()).unwrap();
    let cross = summary["crossing"]["snr_db"].as_f64().unwrap();
    assert!((-40.0..=-30.0).contains(&cross));
    assert!(f2.join("figure2.svg").exists());

    let out = fadecap(&["figure", "figure2", "--alpha", "3"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
