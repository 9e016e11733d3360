//! End-to-end tests of the `vcw` binary plus round-trips of the binary file
//! formats.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

use vcw_cli::formats::{
    read_checkpoint, read_embedding, write_checkpoint, write_embedding, write_pooled,
};
use vcw_core::decoder::{DecoderWeights, ModelConfig};
use vcw_core::pooling::{progressive_pool, FrameGrid, PoolingPlan, VideoEmbedding};

fn vcw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vcw"))
        .args(args)
        .current_dir(dir)
        .env_remove("VCW_CONFIG_DIR")
        .output()
        .expect("spawn vcw")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "vcw failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn sample_video(n: usize, g: usize, d: usize) -> VideoEmbedding {
    let frames = (0..n)
        .map(|f| {
            let data = (0..g * g * d)
                .map(|i| (f * 1000 + i) as f64 * 0.125)
                .collect();
            FrameGrid::new(g, d, data).unwrap()
        })
        .collect();
    VideoEmbedding::new(frames).unwrap()
}

#[test]
fn embedding_round_trip_is_lossless() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("video.vcwe");
    // values chosen to be exactly representable in f32
    let video = sample_video(3, 9, 2);
    write_embedding(&path, &video).unwrap();
    let back = read_embedding(&path).unwrap();
    assert_eq!(back, video);
}

#[test]
fn pooled_uniform_file_reads_back() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("pooled.vcwe");
    let video = sample_video(4, 8, 2);
    // stride 2 on an even grid: uniform output sides, stored as version 1
    let pooled = progressive_pool(&video, &PoolingPlan::uniform(2).unwrap()).unwrap();
    write_pooled(&path, &pooled).unwrap();
    let back = read_embedding(&path).unwrap();
    assert_eq!(back.num_frames(), 4);
    assert_eq!(back.grid_size, 4);
    for (rt, orig) in back.frames.iter().zip(&pooled.frames) {
        for (&a, &b) in rt.data.iter().zip(&orig.grid.data) {
            assert_eq!(a, b as f32 as f64);
        }
    }
}

#[test]
fn ragged_pooled_file_is_version_2_and_rejected_as_input() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ragged.vcwe");
    let video = sample_video(4, 27, 1);
    let pooled = progressive_pool(&video, &PoolingPlan::grouped(4, 2, 8).unwrap()).unwrap();
    write_pooled(&path, &pooled).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"VCWE");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
    // dense readers must refuse the ragged layout rather than misparse it
    assert!(read_embedding(&path).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("model.vcwc");
    let config = ModelConfig {
        vocab_size: 32,
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        mlp_ratio: 2,
        train_context: 32,
    };
    let weights = DecoderWeights::init(config, 7).unwrap();
    write_checkpoint(&path, &weights).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back.config, config);
    assert_eq!(back.params, weights.params);
}

#[test]
fn rope_report_matches_ramp_branches() {
    let dir = TempDir::new().unwrap();
    let out = vcw(dir.path(), &["rope", "--scale", "8", "-o", "rope.csv"]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("rope.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "dim,theta,wavelength,r,gamma,theta_scaled");
    assert_eq!(lines.len(), 1 + 64);
    // dim 0 completes ~998 rotations in the window: untouched
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[4], "1");
    assert_eq!(first[5], "1");
    // dim 63 rotates ~0.115 times: fully interpolated theta / 8
    let last: Vec<&str> = lines[64].split(',').collect();
    let theta: f64 = last[1].parse().unwrap();
    let scaled: f64 = last[5].parse().unwrap();
    assert_eq!(last[4], "0");
    assert_eq!(scaled, theta / 8.0);
    assert!(dir.path().join("rope.csv.manifest.json").exists());
}

#[test]
fn pool_grouped_default_prints_reference_token_count() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("video.vcwe");
    write_embedding(&input, &sample_video(256, 27, 2)).unwrap();
    let out = vcw(dir.path(), &["pool", "-i", "video.vcwe"]);
    assert_ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "15616");
    let layout = std::fs::read_to_string(dir.path().join("layout.csv")).unwrap();
    assert_eq!(layout.lines().count(), 1 + 256);
    assert_eq!(layout.lines().nth(1).unwrap(), "0,0,1,14,0");
    assert_eq!(layout.lines().nth(2).unwrap(), "1,0,0,4,196");
}

#[test]
fn pool_uniform_stride_two_prints_baseline_token_count() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("video.vcwe");
    write_embedding(&input, &sample_video(256, 27, 2)).unwrap();
    let out = vcw(
        dir.path(),
        &["pool", "-i", "video.vcwe", "--uniform", "--stride", "2"],
    );
    assert_ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "50176");
}

#[test]
fn validation_errors_exit_2_without_touching_outputs() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("video.vcwe");
    write_embedding(&input, &sample_video(2, 9, 1)).unwrap();

    // --uniform without --stride
    let out = vcw(dir.path(), &["pool", "-i", "video.vcwe", "--uniform"]);
    assert_eq!(exit_code(&out), 2);
    // sh > sl
    let out = vcw(
        dir.path(),
        &["pool", "-i", "video.vcwe", "--sh", "8", "--sl", "2"],
    );
    assert_eq!(exit_code(&out), 2);
    // flags are validated before the input is opened
    let out = vcw(
        dir.path(),
        &["pool", "-i", "missing.vcwe", "--sh", "8", "--sl", "2"],
    );
    assert_eq!(exit_code(&out), 2);
    assert!(!dir.path().join("pooled.vcwe").exists());
    assert!(!dir.path().join("layout.csv").exists());

    let out = vcw(dir.path(), &["rope", "--scale", "0.5"]);
    assert_eq!(exit_code(&out), 2);
    let out = vcw(dir.path(), &["plan", "--frames", "0"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn format_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("bad.vcwe"), b"NOPE\x01\x00\x00\x00junk").unwrap();
    let out = vcw(dir.path(), &["pool", "-i", "bad.vcwe"]);
    assert_eq!(exit_code(&out), 3);

    // truncated payload
    let input = dir.path().join("short.vcwe");
    write_embedding(&input, &sample_video(2, 9, 1)).unwrap();
    let bytes = std::fs::read(&input).unwrap();
    std::fs::write(&input, &bytes[..bytes.len() - 8]).unwrap();
    let out = vcw(dir.path(), &["pool", "-i", "short.vcwe"]);
    assert_eq!(exit_code(&out), 3);

    std::fs::write(dir.path().join("bad.vcwc"), b"VCWX\x01\x00\x00\x00").unwrap();
    let out = vcw(dir.path(), &["niah", "-c", "bad.vcwc"]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn plan_report_reproduces_memory_table() {
    let dir = TempDir::new().unwrap();
    let out = vcw(dir.path(), &["plan"]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "config,tokens,predicted_gb,kv_cache_gb,reduction_vs_baseline"
    );
    assert_eq!(lines.len(), 1 + 9);
    // baseline row: uniform stride 2, no reduction against itself
    let base: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(base[0], "(2;2);0");
    assert_eq!(base[1], "50176");
    assert_eq!(base[4], "0");
    // the flagship config keeps ~31% of the tokens and saves ~45% memory
    let flagship = lines
        .iter()
        .find(|l| l.starts_with("(2;8);4,"))
        .expect("flagship row");
    let cols: Vec<&str> = flagship.split(',').collect();
    assert_eq!(cols[1], "15616");
    let red: f64 = cols[4].parse().unwrap();
    assert!((red - 0.45).abs() < 0.02, "reduction {red}");
}

#[test]
fn plan_uses_config_dir_calibration_when_present() {
    let dir = TempDir::new().unwrap();
    let cfg = TempDir::new().unwrap();
    // single-point calibration: a constant model
    std::fs::write(
        cfg.path().join("calibration.csv"),
        "sh,sl,k,memory_gb\n2,2,0,50\n4,4,0,30\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vcw"))
        .args(["plan"])
        .current_dir(dir.path())
        .env("VCW_CONFIG_DIR", cfg.path())
        .output()
        .unwrap();
    assert_ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("plan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
    let manifest = std::fs::read_to_string(dir.path().join("plan.csv.manifest.json")).unwrap();
    assert!(manifest.contains("calibration.csv"));
}

#[test]
fn train_is_deterministic_and_feeds_niah_and_ppl() {
    let dir = TempDir::new().unwrap();
    let tiny = [
        "train",
        "--vocab",
        "64",
        "--d-model",
        "32",
        "--layers",
        "1",
        "--heads",
        "2",
        "--train-context",
        "64",
        "--steps",
        "3",
        "--seed",
        "11",
    ];
    let mut first = tiny.to_vec();
    first.extend(["-o", "a.vcwc"]);
    assert_ok(&vcw(dir.path(), &first));
    let mut second = tiny.to_vec();
    second.extend(["-o", "b.vcwc"]);
    assert_ok(&vcw(dir.path(), &second));
    assert_eq!(
        std::fs::read(dir.path().join("a.vcwc")).unwrap(),
        std::fs::read(dir.path().join("b.vcwc")).unwrap()
    );

    let out = vcw(
        dir.path(),
        &[
            "niah",
            "-c",
            "a.vcwc",
            "--lengths",
            "32,64",
            "--depths",
            "0.5",
            "--episodes",
            "3",
        ],
    );
    assert_ok(&out);
    let grid = std::fs::read_to_string(dir.path().join("niah_grid.csv")).unwrap();
    assert_eq!(grid.lines().next().unwrap(), "length,depth,accuracy");
    assert_eq!(grid.lines().count(), 1 + 2);

    let out = vcw(
        dir.path(),
        &[
            "ppl", "-c", "a.vcwc", "--length", "128", "--window", "64", "--stride", "32",
            "--bucket", "64",
        ],
    );
    assert_ok(&out);
    let ppl = std::fs::read_to_string(dir.path().join("ppl.csv")).unwrap();
    assert_eq!(ppl.lines().next().unwrap(), "bucket_start,bucket_end,ppl");
    let overall: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!(overall.is_finite() && overall > 1.0);
}

#[test]
fn rerun_reproduces_outputs_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("video.vcwe");
    write_embedding(&input, &sample_video(8, 27, 2)).unwrap();

    assert_ok(&vcw(dir.path(), &["pool", "-i", "video.vcwe"]));
    let pooled = std::fs::read(dir.path().join("pooled.vcwe")).unwrap();
    let layout = std::fs::read(dir.path().join("layout.csv")).unwrap();

    std::fs::remove_file(dir.path().join("pooled.vcwe")).unwrap();
    std::fs::remove_file(dir.path().join("layout.csv")).unwrap();
    assert_ok(&vcw(dir.path(), &["rerun", "pooled.vcwe.manifest.json"]));
    assert_eq!(
        std::fs::read(dir.path().join("pooled.vcwe")).unwrap(),
        pooled
    );
    assert_eq!(
        std::fs::read(dir.path().join("layout.csv")).unwrap(),
        layout
    );

    // a changed input is refused
    write_embedding(&input, &sample_video(8, 27, 1)).unwrap();
    let out = vcw(dir.path(), &["rerun", "pooled.vcwe.manifest.json"]);
    assert_eq!(exit_code(&out), 2);
}
