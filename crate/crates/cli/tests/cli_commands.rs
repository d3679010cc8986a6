use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rfdeg_cli::commands::{DESK_CONFIG, EVAL_CSV, FGDM_CKPT, MANIFEST, RFDM_CKPT, SUMMARY};
use rfdeg_cli::{Manifest, RunConfig};
use rfdeg_core::fgdm::FgdmCheckpoint;
use rfdeg_core::imgio::{load_image, save_image, ImageF};
use rfdeg_core::rfdm::RfdmCheckpoint;

fn rfdeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfdeg")).args(args).output().expect("spawn rfdeg")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Generates the desk corpus and writes a copy of its config with short
/// training schedules.
fn corpus_with_config(root: &Path, fgdm_steps: usize, rfdm_steps: usize) -> PathBuf {
    let out = rfdeg(&["gen-corpus", "--out", s(root), "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut cfg = RunConfig::load(&root.join(DESK_CONFIG)).unwrap();
    cfg.aenet.base_channels = 4;
    cfg.vnet.base_channels = 4;
    cfg.vnet.embed_dim = 8;
    cfg.fgdm_train.steps = fgdm_steps;
    cfg.fgdm_train.batch = 2;
    cfg.fgdm_train.patch = 16;
    cfg.rfdm_train.steps = rfdm_steps;
    cfg.rfdm_train.batch = 2;
    cfg.rfdm_train.patch = 16;
    cfg.flow_steps = 2;
    let path = root.join("short.cfg");
    fs::write(&path, cfg.to_text()).unwrap();
    path
}

#[test]
fn version_prints() {
    let out = rfdeg(&["version"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("rfdeg "));
}

#[test]
fn config_errors_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\n# comment\nlearning_rate = 0.1\n").unwrap();
    let out = rfdeg(&["--config", s(&cfg), "train"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let out = rfdeg(&["--config", s(&dir.path().join("missing.cfg")), "train"]);
    assert_eq!(code(&out), 2);

    let out = rfdeg(&["study", "--study", "nonsense"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "lr_dir = nowhere\n").unwrap();
    let out = rfdeg(&["--config", s(&cfg), "train"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    fs::create_dir(dir.path().join("empty")).unwrap();
    fs::write(&cfg, "lr_dir = empty\n").unwrap();
    let out = rfdeg(&["--config", s(&cfg), "train"]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("no PNG images"));
}

#[test]
fn zero_step_training_and_pipeline_arms() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = corpus_with_config(root, 0, 0);
    let run = root.join("run0");

    let out = rfdeg(&["--config", s(&cfg), "--out", s(&run), "train"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = fs::read_to_string(run.join(SUMMARY)).unwrap();
    assert!(summary.contains("fgdm: zero training steps"));
    assert!(summary.contains("rfdm: zero training steps"));
    assert_eq!(fs::read_to_string(run.join("fgdm_loss.csv")).unwrap(), "step,loss\n");
    let fgdm = FgdmCheckpoint::load(run.join(FGDM_CKPT)).unwrap();
    let amps = vec![vec![0.7; 64]];
    assert_eq!(fgdm.net.enhance(&amps, 8, 8).unwrap(), amps);
    assert_eq!(RfdmCheckpoint::load(run.join(RFDM_CKPT)).unwrap().steps, 0);

    // Baseline arm: plain bilinear pairs.
    let base = root.join("base");
    let out = rfdeg(&["--config", s(&cfg), "--out", s(&base), "synthesize", "--ckpt-dir", s(&run), "--skip-fgdm", "--skip-rfdm"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = Manifest::load(&base.join(MANIFEST)).unwrap();
    assert_eq!(m.rows.len(), 16);
    assert!(m.rows.iter().all(|r| r.fgdm_ckpt == "none" && r.rfdm_ckpt == "none"));
    for r in &m.rows {
        let hr = load_image(&r.hr_path).unwrap();
        let lr = load_image(base.join(&r.lr_path)).unwrap();
        assert_eq!((lr.height() * 4, lr.width() * 4), (hr.height(), hr.width()));
    }

    // Full arm with identity checkpoints; FGDM-only arm.
    for (name, extra) in [("full", None), ("fgdm_only", Some("--skip-rfdm"))] {
        let arm = root.join(name);
        let mut args = vec!["--config", s(&cfg), "--out", s(&arm), "synthesize", "--ckpt-dir", s(&run)];
        args.extend(extra);
        let out = rfdeg(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let m = Manifest::load(&arm.join(MANIFEST)).unwrap();
        assert!(m.rows[0].fgdm_ckpt.starts_with("fgdm.ckpt@sha256:"));
        assert_eq!(m.rows[0].rfdm_ckpt != "none", extra.is_none());
        for r in &m.rows {
            let lr = load_image(arm.join(&r.lr_path)).unwrap();
            assert!(lr.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    // Evaluating the baseline against itself gives the metric caps.
    let out = rfdeg(&["evaluate", "--manifest", s(&base.join(MANIFEST)), "--reference", s(&base.join("lr"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(base.join(EVAL_CSV)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,psnr,ssim");
    assert_eq!(lines.len(), 1 + 16 + 1);
    assert!(lines[1..].iter().all(|l| l.ends_with(",99.0000,1.000000")), "{csv}");
    assert!(lines[17].starts_with("mean,"));

    // The DT-LR study's first row is the raw-pair metric.
    let study_out = root.join("study");
    let out = rfdeg(&["--config", s(&cfg), "--out", s(&study_out), "study", "--study", "dtlr"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = fs::read_to_string(study_out.join("study_dtlr.csv")).unwrap();
    assert!(csv.starts_with("iters,psnr,ssim\n0,"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn training_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = corpus_with_config(root, 3, 3);
    let (a, b) = (root.join("a"), root.join("b"));
    for run in [&a, &b] {
        let out = rfdeg(&["--config", s(&cfg), "--out", s(run), "train"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let out = rfdeg(&["--config", s(&cfg), "--out", s(run), "synthesize", "--ckpt-dir", s(run)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    for f in [FGDM_CKPT, RFDM_CKPT, "fgdm_loss.csv", "rfdm_loss.csv", MANIFEST, "lr/hr_000.png", "lr/hr_015.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let out = rfdeg(&["--config", s(&cfg), "--seed", "4", "--out", s(&root.join("c")), "train"]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(a.join(FGDM_CKPT)).unwrap(), fs::read(root.join("c").join(FGDM_CKPT)).unwrap());
}

#[test]
fn synthesize_skips_indivisible_images_and_needs_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let hr = root.join("hr");
    fs::create_dir(&hr).unwrap();
    save_image(&ImageF::filled(32, 32, 3, 0.5), hr.join("a.png")).unwrap();
    save_image(&ImageF::filled(30, 32, 3, 0.5), hr.join("b.png")).unwrap();
    let out_dir = root.join("out");

    let out = rfdeg(&["--out", s(&out_dir), "synthesize", "--hr-dir", s(&hr), "--skip-fgdm", "--skip-rfdm"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("warning: skipping"));
    let m = Manifest::load(&out_dir.join(MANIFEST)).unwrap();
    assert_eq!(m.rows.len(), 1);
    assert_eq!(m.skipped.len(), 1);
    assert!(m.skipped[0].0.ends_with("b.png"));

    let out = rfdeg(&["--out", s(&out_dir), "synthesize", "--hr-dir", s(&hr), "--ckpt-dir", s(root)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn evaluate_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let manifest = root.join(MANIFEST);
    fs::write(&manifest, format!("{}\n", rfdeg_cli::manifest::HEADER)).unwrap();
    let out = rfdeg(&["evaluate", "--manifest", s(&manifest), "--reference", s(root)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(root.join(EVAL_CSV)).unwrap(), "name,psnr,ssim\n");

    fs::write(
        &manifest,
        format!("{}\nhr/x.png,lr/x.png,1,none,none\n", rfdeg_cli::manifest::HEADER),
    )
    .unwrap();
    let out = rfdeg(&["evaluate", "--manifest", s(&manifest), "--reference", s(root)]);
    assert_eq!(code(&out), 3);
}
