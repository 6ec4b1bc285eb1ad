use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;
use twinbeam::model::{DetectedIntensityMoments, DetectorModel, Histogram2D};
use twinbeam::moments::{invert_at, inversion_family, mode_parameters};
use twinbeam::photostat::{default_cutoffs, joint_photon_distribution, photocount_distribution, response_table};
use twinbeam_cli::io::format_histogram;

fn twinbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinbeam")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = twinbeam(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn paper_params() -> Value {
    json!({
        "m_pairs": 179.0, "b_pairs": 0.055,
        "m_noise_s": 8e-6, "b_noise_s": 320.0,
        "m_noise_i": 8e-3, "b_noise_i": 12.0
    })
}

fn detector(eta: f64) -> Value {
    json!({ "efficiency": eta, "pixels": 10000, "dark_rate": 1e-5 })
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn sim_config(dir: &Path, params: Value, frames: u64, seed: u64) -> PathBuf {
    write_json(
        dir,
        "sim.json",
        &json!({
            "params": params,
            "detector_s": detector(0.243),
            "detector_i": detector(0.235),
            "frames": frames,
            "seed": seed
        }),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn detector_flags() -> Vec<&'static str> {
    vec![
        "--eta-s", "0.243", "--eta-i", "0.235", "--pixels-s", "10000", "--pixels-i", "10000", "--dark-s", "1e-5",
        "--dark-i", "1e-5",
    ]
}

#[test]
fn simulate_then_reconstruct_recovers_paper_state() {
    let tmp = TempDir::new().unwrap();
    let cfg = sim_config(tmp.path(), paper_params(), 1_000_000, 0);
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let rec = tmp.path().join("rec");
    let (hist, dark) = (sim.join("histogram.csv"), sim.join("dark.csv"));
    let mut args = vec![
        "reconstruct",
        "--histogram",
        s(&hist),
        "--dark",
        s(&dark),
        "--out",
        s(&rec),
        "--scan-points",
        "60",
    ];
    args.extend(detector_flags());
    ok(&args);

    let result = read_json(&rec.join("result.json"));
    let m_p = result["params"]["m_pairs"].as_f64().unwrap();
    assert!((m_p - 179.0).abs() < 17.9, "M_p = {m_p}");

    // Scan file: header plus every evaluated point, sorted.
    let scan = fs::read_to_string(rec.join("scan.csv")).unwrap();
    let rows: Vec<(f64, f64)> = scan
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    let recorded = result["scan"].as_array().unwrap().len();
    assert_eq!(rows.len(), recorded);
    assert!(rows.len() > 60 + 2);
    assert!(rows.windows(2).all(|w| w[0].0 <= w[1].0));

    let diag = read_json(&rec.join("diagnostics.json"));
    assert!(diag["nonclassicality"]["nonclassical"].as_bool().unwrap());
    assert!(diag["threshold"]["s_th"].as_f64().unwrap() < 1.0);
    let p_sum: Vec<f64> = serde_json::from_value(diag["p_sum"].clone()).unwrap();
    assert!((p_sum.iter().sum::<f64>() - 1.0).abs() < 1e-6);

    // The result document feeds straight into diagnose.
    let again: Value = serde_json::from_str(&ok(&["diagnose", "--params", s(&rec.join("result.json"))])).unwrap();
    assert_eq!(again, diag);
}

#[test]
fn simulation_is_byte_identical_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = sim_config(tmp.path(), paper_params(), 20_000, 5);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["histogram.csv", "dark.csv", "simulation.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]);
    assert_ne!(fs::read(a.join("histogram.csv")).unwrap(), fs::read(c.join("histogram.csv")).unwrap());
    let text = fs::read_to_string(c.join("histogram.csv")).unwrap();
    assert!(text.starts_with("# frames: 20000\n# seed: 6\n"));
}

#[test]
fn empty_field_gives_dark_count_law() {
    let tmp = TempDir::new().unwrap();
    let vacuum = json!({
        "m_pairs": 0.0, "b_pairs": 0.0, "m_noise_s": 0.0, "b_noise_s": 0.0, "m_noise_i": 0.0, "b_noise_i": 0.0
    });
    let frames = 50_000u64;
    let cfg = sim_config(tmp.path(), vacuum, frames, 1);
    let out = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    // Only dark counts: Binomial(10^4, 10^-5) per arm.
    let text = fs::read_to_string(out.join("histogram.csv")).unwrap();
    let h = twinbeam_cli::io::parse_histogram(Path::new("h"), &text).unwrap();
    let m = twinbeam::moments::photocount_moments(&h).unwrap();
    let (mean, var) = (0.1, 10_000.0 * 1e-5 * (1.0 - 1e-5));
    let se = (var / frames as f64).sqrt();
    assert!((m.mean_s - mean).abs() < 5.0 * se, "{}", m.mean_s);
    assert!((m.mean_i - mean).abs() < 5.0 * se, "{}", m.mean_i);
}

#[test]
fn moments_of_simulated_files_match_field_values() {
    let tmp = TempDir::new().unwrap();
    // The paper state sits so close to the feasibility border that sampling
    // noise alone can make it infeasible; use clearly noisy arms here.
    let params = json!({
        "m_pairs": 40.0, "b_pairs": 0.2, "m_noise_s": 2.0, "b_noise_s": 1.0, "m_noise_i": 1.5, "b_noise_i": 1.5
    });
    let cfg = sim_config(tmp.path(), params, 200_000, 9);
    let out = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let report: Value = serde_json::from_str(&ok(&[
        "moments",
        "--histogram",
        s(&out.join("histogram.csv")),
        "--dark",
        s(&out.join("dark.csv")),
        "--eta-s",
        "0.243",
        "--eta-i",
        "0.235",
    ]))
    .unwrap();
    // <W_s> = eta_s (M_p B_p + M_s B_s), standard error about 0.004.
    let mean_s = 0.243 * (40.0 * 0.2 + 2.0 * 1.0);
    let mean_i = 0.235 * (40.0 * 0.2 + 1.5 * 1.5);
    let got_s = report["detected"]["mean_s"].as_f64().unwrap();
    let got_i = report["detected"]["mean_i"].as_f64().unwrap();
    assert!((got_s - mean_s).abs() < 0.02, "{got_s} vs {mean_s}");
    assert!((got_i - mean_i).abs() < 0.02, "{got_i} vs {mean_i}");
    assert!(report["margin"].as_f64().unwrap() > 0.0);

    let csv = ok(&[
        "moments",
        "--histogram",
        s(&out.join("histogram.csv")),
        "--eta-s",
        "0.243",
        "--eta-i",
        "0.235",
        "--format",
        "csv",
    ]);
    assert!(csv.starts_with("key,value\n"));
    assert!(csv.contains("\ndetected.cov,"));
}

#[test]
fn reconstruction_at_the_border_is_flagged() {
    let published = DetectedIntensityMoments {
        mean_s: 2.411,
        mean_i: 2.353,
        var_s: 0.079,
        var_i: 0.095,
        cov: 0.598,
    };
    let family = inversion_family(&published, 0.243, 0.235).unwrap();
    let (lo, hi) = family.feasible_range();
    let params = mode_parameters(&invert_at(&family, hi - 1e-6 * (hi - lo)).unwrap()).unwrap();
    let d_s = DetectorModel::new(0.243, 10_000_000, 0.0).unwrap();
    let d_i = DetectorModel::new(0.235, 10_000_000, 0.0).unwrap();
    let cut = default_cutoffs(&params);
    let p = joint_photon_distribution(&params, cut).unwrap();
    let pc = photocount_distribution(&p, &response_table(&d_s, 40, cut.0).unwrap(), &response_table(&d_i, 40, cut.1).unwrap())
        .unwrap();
    let h = Histogram2D::new(pc.probs() / pc.total(), 1.0).unwrap();

    let tmp = TempDir::new().unwrap();
    let hist = tmp.path().join("model.csv");
    fs::write(&hist, format_histogram(&h, &[])).unwrap();
    let rec = tmp.path().join("rec");
    ok(&[
        "reconstruct",
        "--histogram",
        s(&hist),
        "--eta-s",
        "0.243",
        "--eta-i",
        "0.235",
        "--pixels-s",
        "10000000",
        "--pixels-i",
        "10000000",
        "--out",
        s(&rec),
        "--format",
        "csv",
    ]);
    let text = fs::read_to_string(rec.join("result.csv")).unwrap();
    assert!(text.contains("\nat_boundary,true\n"), "{text}");
}

fn grid_values(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.contains("\n# ws: ") && text.contains("\n# wi: "));
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn qdii_grids_follow_the_ordering() {
    let tmp = TempDir::new().unwrap();
    let params = write_json(tmp.path(), "params.json", &paper_params());
    let s1 = tmp.path().join("s1");
    ok(&["qdii", "--params", s(&params), "--ordering", "1", "--out", s(&s1), "--paired-grid"]);
    let min1 = grid_values(&s1.join("qdii.csv")).into_iter().flatten().fold(f64::INFINITY, f64::min);
    assert!(min1 < 0.0, "{min1}");
    assert!(s1.join("paired.csv").exists());

    let s0 = tmp.path().join("s0");
    ok(&["qdii", "--params", s(&params), "--ordering", "0", "--grid-cells", "150", "--out", s(&s0)]);
    let min0 = grid_values(&s0.join("qdii.csv")).into_iter().flatten().fold(f64::INFINITY, f64::min);
    assert!(min0 >= -1e-9, "{min0}");
}

#[test]
fn qdii_without_pairs_is_separable() {
    let tmp = TempDir::new().unwrap();
    let params = write_json(
        tmp.path(),
        "params.json",
        &json!({
            "m_pairs": 0.0, "b_pairs": 0.0, "m_noise_s": 3.0, "b_noise_s": 1.5, "m_noise_i": 2.0, "b_noise_i": 2.0
        }),
    );
    let out = tmp.path().join("g");
    ok(&["qdii", "--params", s(&params), "--ordering", "0.5", "--grid-cells", "60", "--out", s(&out)]);
    let v = grid_values(&out.join("qdii.csv"));
    let scale = v.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    // Rank one: v[a][b] v[c][d] = v[a][d] v[c][b].
    for (a, c) in [(5, 20), (10, 40), (3, 55)] {
        for (b, d) in [(7, 30), (15, 50)] {
            let lhs = v[a][b] * v[c][d];
            let rhs = v[a][d] * v[c][b];
            assert!((lhs - rhs).abs() <= 1e-12 * scale * scale, "({a},{b},{c},{d})");
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = twinbeam(&["moments", "--histogram", s(&empty), "--eta-s", "0.2", "--eta-i", "0.2"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "# frames: 2\n1,oops\n").unwrap();
    let out = twinbeam(&["moments", "--histogram", s(&bad), "--eta-s", "0.2", "--eta-i", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2, column 2"));

    // Perfectly anti-correlated counts have negative covariance.
    let anti = tmp.path().join("anti.csv");
    fs::write(&anti, "# frames: 2\n0,1\n1,0\n").unwrap();
    let out = twinbeam(&["moments", "--histogram", s(&anti), "--eta-s", "0.2", "--eta-i", "0.2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("margin"));

    let params = write_json(tmp.path(), "params.json", &paper_params());
    let boundary = (1.0 + 2.0 * (0.055 - (0.055f64 * 1.055).sqrt())).to_string();
    let out = twinbeam(&["qdii", "--params", s(&params), "--ordering", &boundary, "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = twinbeam(&["reconstruct", "--histogram", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}
