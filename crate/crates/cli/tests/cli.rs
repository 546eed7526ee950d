//! End-to-end subcommand tests against small generated fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lidar-normals"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn lidar-normals")
}

fn assert_code(output: &Output, expected: i32) {
    let code = output.status.code().unwrap_or(-1);
    assert_eq!(
        code,
        expected,
        "exit {code}, expected {expected}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

const SCENE: &str = r#"
name = "cli-demo"

[trajectory]
position = [0.0, 0.0, 2.0]
velocity = [0.5, 0.0, 0.0]

[[primitives]]
kind = "plane"
point = [0.0, 0.0, 0.0]
normal = [0.0, 0.0, 1.0]

[[primitives]]
kind = "box"
min = [3.0, -2.0, 0.0]
max = [5.0, 2.0, 2.5]
"#;

/// Small noise-free sensor: 4 beams x 120 azimuth steps.
const SENSOR: &str = r#"
beams = 4
points_per_second = 4800
rotation_hz = 10.0
drop_ratio = 0.0
noise_std_m = 0.0
"#;

struct Fixture {
    #[allow(dead_code)]
    dir: TempDir,
    scene: PathBuf,
    sensor: PathBuf,
    out: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let scene = dir.path().join("scene.toml");
    let sensor = dir.path().join("sensor.toml");
    std::fs::write(&scene, SCENE).unwrap();
    std::fs::write(&sensor, SENSOR).unwrap();
    let out = dir.path().join("seq");
    Fixture {
        scene,
        sensor,
        out,
        dir,
    }
}

fn generate(fx: &Fixture, frames: u32, seed: u64) -> Output {
    run(&[
        "generate",
        "--scene",
        fx.scene.to_str().unwrap(),
        "--sensor",
        fx.sensor.to_str().unwrap(),
        "--frames",
        &frames.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        fx.out.to_str().unwrap(),
    ])
}

fn manifest_path(fx: &Fixture) -> String {
    fx.out.join("sequence.toml").to_str().unwrap().to_string()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn generate_writes_frames_and_manifest() {
    let fx = fixture();
    let output = generate(&fx, 2, 7);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("frame 0:"), "stdout: {stdout}");
    assert!(stdout.contains("frame 1:"), "stdout: {stdout}");
    assert!(fx.out.join("frame_000000.lsnf").exists());
    assert!(fx.out.join("frame_000001.lsnf").exists());
    assert!(fx.out.join("sequence.toml").exists());
}

#[test]
fn generate_is_deterministic_per_seed() {
    // Noise and dropout on, so the seed actually shapes the output.
    let noisy = |fx: &Fixture| {
        std::fs::write(
            &fx.sensor,
            SENSOR
                .replace("drop_ratio = 0.0", "drop_ratio = 0.2")
                .replace("noise_std_m = 0.0", "noise_std_m = 0.02"),
        )
        .unwrap();
    };
    let fx_a = fixture();
    noisy(&fx_a);
    assert_code(&generate(&fx_a, 2, 42), 0);
    let fx_b = fixture();
    noisy(&fx_b);
    assert_code(&generate(&fx_b, 2, 42), 0);
    assert_eq!(dir_bytes(&fx_a.out), dir_bytes(&fx_b.out));

    let fx_c = fixture();
    noisy(&fx_c);
    assert_code(&generate(&fx_c, 2, 43), 0);
    assert_ne!(dir_bytes(&fx_a.out), dir_bytes(&fx_c.out));
}

#[test]
fn generate_zero_frames_is_usage_error() {
    let fx = fixture();
    let output = generate(&fx, 0, 1);
    assert_code(&output, 1);
}

#[test]
fn generate_missing_scene_is_data_error() {
    let fx = fixture();
    let output = run(&[
        "generate",
        "--scene",
        "/nonexistent/scene.toml",
        "--frames",
        "1",
        "--out",
        fx.out.to_str().unwrap(),
    ]);
    assert_code(&output, 2);
}

#[test]
fn estimate_both_methods_and_unknown_method() {
    let fx = fixture();
    assert_code(&generate(&fx, 1, 3), 0);
    let manifest = manifest_path(&fx);

    for method in ["pca", "jet"] {
        let out_dir = fx.dir.path().join(format!("est-{method}"));
        let output = run(&[
            "estimate",
            "--in",
            &manifest,
            "--method",
            method,
            "--k",
            "16",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_code(&output, 0);
        assert!(out_dir.join("normals_000000.lsnf").exists());
    }

    let output = run(&[
        "estimate",
        "--in",
        &manifest,
        "--method",
        "ransac",
        "--out",
        fx.dir.path().join("nope").to_str().unwrap(),
    ]);
    assert_code(&output, 1);
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let fx = fixture();
    assert_code(&generate(&fx, 1, 5), 0);

    // Use the ground truth itself as the prediction.
    let seq = lidar_normals::io::read_sequence(fx.out.join("sequence.toml")).unwrap();
    let pred_dir = fx.dir.path().join("pred");
    std::fs::create_dir_all(&pred_dir).unwrap();
    for frame in &seq.frames {
        let field = frame.gt_field().unwrap();
        lidar_normals::io::write_normal_field(
            &field,
            &frame.pose,
            frame.timestamp,
            pred_dir.join(format!("normals_{:06}.lsnf", frame.frame_id)),
        )
        .unwrap();
    }

    let report = fx.dir.path().join("report.txt");
    let output = run(&[
        "eval",
        "--pred",
        pred_dir.to_str().unwrap(),
        "--gt",
        &manifest_path(&fx),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("mean_deg = 0.000000"), "report:\n{text}");
    assert!(text.contains("acc_30.00_deg = 1.000000"), "report:\n{text}");
}

#[test]
fn eval_report_is_stable_across_runs() {
    let fx = fixture();
    assert_code(&generate(&fx, 1, 6), 0);
    let est_dir = fx.dir.path().join("est");
    assert_code(
        &run(&[
            "estimate",
            "--in",
            &manifest_path(&fx),
            "--method",
            "pca",
            "--k",
            "12",
            "--out",
            est_dir.to_str().unwrap(),
        ]),
        0,
    );
    let report_a = fx.dir.path().join("a.txt");
    let report_b = fx.dir.path().join("b.txt");
    for report in [&report_a, &report_b] {
        assert_code(
            &run(&[
                "eval",
                "--pred",
                est_dir.to_str().unwrap(),
                "--gt",
                &manifest_path(&fx),
                "--out",
                report.to_str().unwrap(),
            ]),
            0,
        );
    }
    assert_eq!(
        std::fs::read_to_string(report_a).unwrap(),
        std::fs::read_to_string(report_b).unwrap()
    );
}

#[test]
fn refine_gamma_zero_reproduces_init() {
    let fx = fixture();
    assert_code(&generate(&fx, 2, 9), 0);
    let est_dir = fx.dir.path().join("est");
    assert_code(
        &run(&[
            "estimate",
            "--in",
            &manifest_path(&fx),
            "--method",
            "pca",
            "--k",
            "12",
            "--out",
            est_dir.to_str().unwrap(),
        ]),
        0,
    );
    let ref_dir = fx.dir.path().join("refined");
    let output = run(&[
        "refine",
        "--in",
        &manifest_path(&fx),
        "--init",
        est_dir.to_str().unwrap(),
        "--gamma",
        "0",
        "--out",
        ref_dir.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    assert_eq!(dir_bytes(&est_dir), dir_bytes(&ref_dir));
}

#[test]
fn refine_trace_is_monotone_and_negative_gamma_rejected() {
    let fx = fixture();
    assert_code(&generate(&fx, 2, 11), 0);
    let est_dir = fx.dir.path().join("est");
    assert_code(
        &run(&[
            "estimate",
            "--in",
            &manifest_path(&fx),
            "--method",
            "pca",
            "--k",
            "12",
            "--out",
            est_dir.to_str().unwrap(),
        ]),
        0,
    );

    let ref_dir = fx.dir.path().join("refined");
    let output = run(&[
        "refine",
        "--in",
        &manifest_path(&fx),
        "--init",
        est_dir.to_str().unwrap(),
        "--iters",
        "10",
        "--out",
        ref_dir.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let values: Vec<f64> = stdout
        .lines()
        .filter_map(|line| line.rsplit_once("objective ").map(|(_, v)| v))
        .map(|v| v.trim().parse().unwrap())
        .collect();
    assert!(values.len() >= 2, "no trace in stdout:\n{stdout}");
    for pair in values.windows(2) {
        assert!(pair[1] <= pair[0], "objective increased: {pair:?}");
    }

    let output = run(&[
        "refine",
        "--in",
        &manifest_path(&fx),
        "--init",
        est_dir.to_str().unwrap(),
        "--gamma",
        "-0.5",
        "--out",
        ref_dir.to_str().unwrap(),
    ]);
    assert_code(&output, 1);
}

#[test]
fn analyze_writes_density_csv() {
    let fx = fixture();
    assert_code(&generate(&fx, 1, 13), 0);
    let csv = fx.dir.path().join("density.csv");
    let output = run(&[
        "analyze",
        "--in",
        &manifest_path(&fx),
        "--kappa",
        "50",
        "--grid-res",
        "32",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_code(&output, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# vmf kernel density, kappa = 50"));
    assert_eq!(text.lines().count(), 2 + 32 * 64);
}

#[test]
fn bench_reports_nonnegative_times() {
    let fx = fixture();
    assert_code(&generate(&fx, 1, 15), 0);
    let output = run(&[
        "bench",
        "--in",
        &manifest_path(&fx),
        "--k",
        "12",
        "--iters",
        "3",
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mean: estimate"), "stdout: {stdout}");
}

fn bench_mean_seconds(stdout: &str) -> (f64, f64) {
    let line = stdout
        .lines()
        .find(|l| l.starts_with("mean:"))
        .expect("mean line");
    let mut numbers = line
        .split_whitespace()
        .filter_map(|tok| tok.trim_end_matches(',').parse::<f64>().ok());
    (numbers.next().unwrap(), numbers.next().unwrap())
}

#[test]
fn bench_timings_are_stable_across_runs() {
    // A frame large enough (~12k points) that per-run timing noise stays
    // well inside the 3x window.
    let fx = fixture();
    std::fs::write(
        &fx.sensor,
        "beams = 16\npoints_per_second = 200000\nrotation_hz = 10.0\ndrop_ratio = 0.0\nnoise_std_m = 0.02\n",
    )
    .unwrap();
    assert_code(&generate(&fx, 1, 17), 0);

    let mut means = Vec::new();
    for _ in 0..2 {
        let output = run(&[
            "bench",
            "--in",
            &manifest_path(&fx),
            "--k",
            "16",
            "--iters",
            "5",
        ]);
        assert_code(&output, 0);
        let (est, refine) = bench_mean_seconds(&String::from_utf8_lossy(&output.stdout));
        assert!(est >= 0.0 && refine >= 0.0);
        means.push((est, refine));
    }
    let ratio = |a: f64, b: f64| (a / b).max(b / a);
    assert!(
        ratio(means[0].0, means[1].0) < 3.0,
        "estimate timing unstable: {means:?}"
    );
    assert!(
        ratio(means[0].1, means[1].1) < 3.0,
        "refine timing unstable: {means:?}"
    );
}

#[test]
fn estimate_is_deterministic_and_thread_count_independent() {
    let fx = fixture();
    assert_code(&generate(&fx, 1, 19), 0);
    let manifest = manifest_path(&fx);

    let mut dirs = Vec::new();
    for (label, threads) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out_dir = fx.dir.path().join(format!("est-{label}"));
        let output = run(&[
            "estimate",
            "--in",
            &manifest,
            "--method",
            "pca",
            "--k",
            "16",
            "--threads",
            threads,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_code(&output, 0);
        dirs.push(out_dir);
    }
    let base = dir_bytes(&dirs[0]);
    assert_eq!(base, dir_bytes(&dirs[1]), "same-thread runs differ");
    assert_eq!(base, dir_bytes(&dirs[2]), "thread count changed output");
}

#[test]
fn missing_manifest_is_data_error() {
    let output = run(&[
        "eval",
        "--pred",
        "/tmp",
        "--gt",
        "/nonexistent/seq.toml",
        "--out",
        "/tmp/report.txt",
    ]);
    assert_code(&output, 2);
}

#[test]
fn thread_env_var_is_honored() {
    let fx = fixture();
    let output = bin()
        .args([
            "generate",
            "--scene",
            fx.scene.to_str().unwrap(),
            "--sensor",
            fx.sensor.to_str().unwrap(),
            "--frames",
            "1",
            "--out",
            fx.out.to_str().unwrap(),
        ])
        .env("LIDAR_NORMALS_THREADS", "1")
        .output()
        .unwrap();
    assert_code(&output, 0);

    let output = bin()
        .args(["bench", "--in", "x.toml"])
        .env("LIDAR_NORMALS_THREADS", "zebra")
        .output()
        .unwrap();
    assert_code(&output, 1);
}
