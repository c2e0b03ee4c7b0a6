//! Behavioral tests for the `slidefocus` binary: exit codes, artifact
//! shapes, and the config/--set/flag precedence chain.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn slidefocus(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slidefocus"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn expect_ok(out: &Path, args: &[&str]) -> Output {
    let output = slidefocus(out, args);
    assert!(
        output.status.success(),
        "slidefocus {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let output = slidefocus(tmp.path(), &["phantom", "--no-such-flag"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let output = slidefocus(tmp.path(), &[]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn scan_without_calibration_fails_with_hint() {
    let tmp = TempDir::new().unwrap();
    let output = slidefocus(tmp.path(), &["scan", "--rows", "2", "--cols", "2"]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("calibrate"),
        "stderr should point at the calibrate step, got: {stderr}"
    );
}

#[test]
fn phantom_writes_both_channels() {
    let tmp = TempDir::new().unwrap();
    expect_ok(
        tmp.path(),
        &["phantom", "--width", "96", "--height", "96", "--name", "sample"],
    );
    for name in ["sample_R.png", "sample_G.png"] {
        let bytes = fs::read(tmp.path().join(name)).unwrap();
        assert_eq!(&bytes[..4], b"\x89PNG", "{name} is not a PNG");
    }
}

#[test]
fn calibrate_then_scan_produces_consistent_artifacts() {
    let tmp = TempDir::new().unwrap();
    expect_ok(
        tmp.path(),
        &[
            "calibrate",
            "--z-min=-2",
            "--z-max",
            "2",
            "--steps",
            "5",
            "--width",
            "128",
            "--height",
            "128",
            "--method",
            "xcorr",
        ],
    );
    let curve = json(&tmp.path().join("calibration.json"));
    let slope = curve["slope_px_per_um"].as_f64().unwrap();
    assert!(
        (slope - 3.82).abs() < 0.2,
        "calibration slope {slope} px/um is far from the optical model"
    );
    let points = fs::read_to_string(tmp.path().join("calibration_points.csv")).unwrap();
    assert_eq!(points.lines().count(), 6, "header plus five sweep rows");

    expect_ok(
        tmp.path(),
        &[
            "scan",
            "--rows",
            "2",
            "--cols",
            "3",
            "--set",
            "scan.tile_width=128",
            "--set",
            "scan.tile_height=128",
        ],
    );
    let report = json(&tmp.path().join("scan_report.json"));
    assert_eq!(report["rows"], 2);
    assert_eq!(report["cols"], 3);
    assert_eq!(report["records"].as_array().unwrap().len(), 6);
    let tiles = fs::read_to_string(tmp.path().join("scan_tiles.csv")).unwrap();
    assert_eq!(tiles.lines().count(), 7);
    assert!(
        tiles.lines().next().unwrap().starts_with("tile_id,row,col,true_z_um"),
        "unexpected tile CSV header"
    );
    let map = fs::read_to_string(tmp.path().join("focus_map.csv")).unwrap();
    assert_eq!(map.lines().count(), 2, "one line per grid row");
    assert_eq!(map.lines().next().unwrap().split(',').count(), 3);
    assert!(tmp.path().join("focus_map.png").exists());
}

#[test]
fn shift_of_identical_images_is_zero() {
    let tmp = TempDir::new().unwrap();
    expect_ok(
        tmp.path(),
        &["phantom", "--width", "128", "--height", "128", "--name", "p"],
    );
    let r = tmp.path().join("p_R.png");
    let r = r.to_str().unwrap();
    for method in ["xcorr", "mutual_info"] {
        expect_ok(
            tmp.path(),
            &["shift", "--red", r, "--green", r, "--method", method],
        );
        let est = json(&tmp.path().join("shift.json"));
        let shift = est["shift_y"].as_f64().unwrap();
        assert!(
            shift.abs() < 1e-9,
            "{method} shift of a plane against itself came out {shift}"
        );
    }
}

#[test]
fn config_file_set_and_flag_precedence() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("settings.toml");
    fs::write(
        &config,
        "[scan]\nrows = 2\ncols = 2\ntile_width = 128\ntile_height = 128\nstart_z_error_um = 0.5\nmethod = \"xcorr\"\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    expect_ok(
        tmp.path(),
        &[
            "calibrate",
            "--width",
            "128",
            "--height",
            "128",
            "--steps",
            "5",
            "--config",
            cfg,
        ],
    );
    // File sets rows=2; --set raises it to 3; the flag must win with 4.
    // cols comes from --set alone, start_z_error_um from the file alone.
    expect_ok(
        tmp.path(),
        &[
            "scan",
            "--config",
            cfg,
            "--set",
            "scan.rows=3",
            "--set",
            "scan.cols=3",
            "--rows",
            "4",
        ],
    );
    let report = json(&tmp.path().join("scan_report.json"));
    assert_eq!(report["rows"], 4);
    assert_eq!(report["cols"], 3);
    assert_eq!(report["method"], "xcorr");
    let start_err = report["records"][0]["err_um"].as_f64().unwrap();
    assert!(
        (start_err - 0.5).abs() < 1e-12,
        "start tile error should equal the configured 0.5, got {start_err}"
    );
}

#[test]
fn bench_csv_has_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    expect_ok(
        tmp.path(),
        &["bench", "--tiles", "2", "--width", "96", "--height", "96"],
    );
    let csv = fs::read_to_string(tmp.path().join("bench.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "method,subsample_ratio,tile_id,shift_px,defocus_um,error_um,elapsed_s"
    );
    assert_eq!(lines.len(), 9, "header plus 2 methods x 4 ratios");
    assert!(tmp.path().join("bench_table.txt").exists());
}

#[test]
fn render_zstack_writes_planes_and_index() {
    let tmp = TempDir::new().unwrap();
    expect_ok(
        tmp.path(),
        &[
            "render", "--mode", "zstack", "--steps", "5", "--half-range", "2.0", "--width",
            "96", "--height", "96",
        ],
    );
    let index = json(&tmp.path().join("zstack.json"));
    let z = index["z_positions_um"].as_array().unwrap();
    assert_eq!(z.len(), 5);
    assert_eq!(z[0].as_f64().unwrap(), -2.0);
    assert_eq!(z[4].as_f64().unwrap(), 2.0);
    for k in 0..5 {
        assert!(tmp.path().join(format!("zstack_{k:02}.png")).exists());
    }
}

#[test]
fn layers_accepts_stored_frames() {
    let tmp = TempDir::new().unwrap();
    expect_ok(
        tmp.path(),
        &[
            "render", "--style", "two_layer", "--width", "192", "--height", "192", "--defocus",
            "0.0",
        ],
    );
    let r = tmp.path().join("frame_R.png");
    let g = tmp.path().join("frame_G.png");
    expect_ok(
        tmp.path(),
        &[
            "layers",
            "--red",
            r.to_str().unwrap(),
            "--green",
            g.to_str().unwrap(),
        ],
    );
    let peaks = json(&tmp.path().join("peaks.json"));
    assert!(peaks.as_array().is_some());
    let profile = fs::read_to_string(tmp.path().join("profile.csv")).unwrap();
    // default window is height/4 = 48: one row per lag in [-48, 48] plus header
    assert_eq!(profile.lines().count(), 98);
}
