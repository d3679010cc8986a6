//! The subcommands, as library functions returning their results so tests can
//! drive them without spawning processes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rfdeg_autograd::derive_seed;
use rfdeg_core::corpus::{self, bilinear_lr, CorpusSpec};
use rfdeg_core::fgdm::{fgdm_apply, fgdm_train, FgdmCheckpoint};
use rfdeg_core::imgio::{byte_to_unit, list_images, load_dir, load_image, save_image, unit_to_byte, ImageF};
use rfdeg_core::metrics::{report, MetricReport};
use rfdeg_core::nn::LossLog;
use rfdeg_core::resample::{degradation_convergence_study, FilterKind, StudyRow};
use rfdeg_core::rfdm::{rfdm_apply, rfdm_train, RfdmCheckpoint, RfdmTrainConfig};
use rfdeg_core::{Error, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::manifest::{Manifest, ManifestRow};

pub const FGDM_CKPT: &str = "fgdm.ckpt";
pub const RFDM_CKPT: &str = "rfdm.ckpt";
pub const MANIFEST: &str = "manifest.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const SUMMARY: &str = "summary.txt";
pub const DESK_CONFIG: &str = "desk.cfg";

/// Per-image noise seeds of the synthesis stage derive from this tag.
const SYNTH_TAG: u64 = 0x5359_4e54;
/// Loss window for the start/end comparison in the run summary.
const LOSS_WINDOW: usize = 200;

pub const LAMBDA_SWEEP: [f64; 4] = [0.0, 0.05, 0.1, 0.2];
pub const K_SWEEP: [usize; 5] = [1, 5, 10, 20, 40];

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `file@sha256:<16 hex>` identifier of a checkpoint file.
pub fn checkpoint_id(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("{}@sha256:{hex}", file_name(path)))
}

/// Image as it would be after an 8-bit save and reload.
pub fn quantized(img: &ImageF) -> ImageF {
    img.map(|v| byte_to_unit(unit_to_byte(v)))
}

/// Writes the desk corpus under `root` plus a run config pointing at it.
/// Returns the config path.
pub fn gen_corpus(root: &Path, seed: u64) -> Result<PathBuf> {
    let spec = CorpusSpec {
        seed,
        ..CorpusSpec::default()
    };
    let paths = corpus::generate(root, &spec)?;
    let rel = |p: PathBuf| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or(p);
    let cfg = RunConfig {
        hr_dir: rel(paths.hr()),
        lr_dir: rel(paths.lr()),
        heldout_hr_dir: rel(paths.heldout_hr()),
        heldout_lr_dir: rel(paths.heldout_lr()),
        out_dir: "run".into(),
        seed,
        ..RunConfig::desk()
    };
    let path = root.join(DESK_CONFIG);
    let text = format!(
        "# Desk-scale run over the generated corpus. Paths are relative to this file.\n{}",
        cfg.to_text()
    );
    write_file(&path, text)?;
    Ok(path)
}

fn load_images(dir: &Path, what: &str) -> Result<Vec<ImageF>> {
    let images: Vec<ImageF> = load_dir(dir)?.into_iter().map(|(_, img)| img).collect();
    if images.is_empty() {
        return Err(Error::Data(format!("{what} directory {} has no PNG images", dir.display())));
    }
    Ok(images)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub fgdm_log: LossLog,
    pub rfdm_log: LossLog,
    pub fgdm_seconds: f64,
    pub rfdm_seconds: f64,
}

fn loss_line(name: &str, log: &LossLog, seconds: f64) -> String {
    if log.losses.is_empty() {
        return format!("{name}: zero training steps, identity checkpoint\n");
    }
    format!(
        "{name}: {} steps in {seconds:.1} s, mean loss first {LOSS_WINDOW} {:.6}, last {LOSS_WINDOW} {:.6}\n",
        log.losses.len(),
        log.head_mean(LOSS_WINDOW).unwrap_or(f64::NAN),
        log.tail_mean(LOSS_WINDOW).unwrap_or(f64::NAN),
    )
}

/// Trains FGDM, then RFDM on top of the frozen FGDM, and writes both
/// checkpoints, their loss CSVs and a run summary into the output directory.
pub fn train(cfg: &RunConfig) -> Result<TrainReport> {
    let lr = load_images(&cfg.lr_dir, "LR")?;
    create_dir(&cfg.out_dir)?;

    eprintln!("fgdm: training {} steps on {} LR images", cfg.fgdm_train.steps, lr.len());
    let t0 = Instant::now();
    let fgdm = fgdm_train(&lr, &cfg.dtlr, cfg.aenet, &cfg.fgdm_train, cfg.seed)?;
    let fgdm_seconds = t0.elapsed().as_secs_f64();
    fgdm.checkpoint.save(cfg.out_dir.join(FGDM_CKPT))?;
    write_file(&cfg.out_dir.join("fgdm_loss.csv"), fgdm.log.to_csv())?;

    eprintln!("rfdm: training {} steps", cfg.rfdm_train.steps);
    let t1 = Instant::now();
    let rfdm = rfdm_train(&lr, &fgdm.checkpoint, cfg.vnet, &cfg.rfdm_train, cfg.seed)?;
    let rfdm_seconds = t1.elapsed().as_secs_f64();
    rfdm.checkpoint.save(cfg.out_dir.join(RFDM_CKPT))?;
    write_file(&cfg.out_dir.join("rfdm_loss.csv"), rfdm.log.to_csv())?;

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut summary = format!("rfdeg {}\nfinished_unix = {started}\n", env!("CARGO_PKG_VERSION"));
    summary.push_str(&loss_line("fgdm", &fgdm.log, fgdm_seconds));
    summary.push_str(&loss_line("rfdm", &rfdm.log, rfdm_seconds));
    summary.push_str("\n# config\n");
    summary.push_str(&cfg.to_text());
    write_file(&cfg.out_dir.join(SUMMARY), summary)?;

    Ok(TrainReport {
        fgdm_log: fgdm.log,
        rfdm_log: rfdm.log,
        fgdm_seconds,
        rfdm_seconds,
    })
}

/// The synthesis chain with optional stages.
pub struct Pipeline {
    pub scale: usize,
    pub fgdm: Option<FgdmCheckpoint>,
    pub rfdm: Option<RfdmCheckpoint>,
    pub lambda: f64,
    pub flow_steps: usize,
}

impl Pipeline {
    /// Loads the checkpoints of the stages that are not skipped.
    pub fn load(cfg: &RunConfig, ckpt_dir: &Path, skip_fgdm: bool, skip_rfdm: bool) -> Result<Self> {
        let fgdm = (!skip_fgdm).then(|| FgdmCheckpoint::load(ckpt_dir.join(FGDM_CKPT))).transpose()?;
        let rfdm = (!skip_rfdm).then(|| RfdmCheckpoint::load(ckpt_dir.join(RFDM_CKPT))).transpose()?;
        let lambda = rfdm.as_ref().map_or(cfg.rfdm_train.lambda, |r| r.lambda);
        Ok(Self {
            scale: cfg.scale,
            fgdm,
            rfdm,
            lambda,
            flow_steps: cfg.flow_steps,
        })
    }

    /// Why `hr` cannot go through the enabled stages, if it cannot.
    pub fn reject_reason(&self, hr: &ImageF) -> Option<String> {
        let (h, w) = (hr.height(), hr.width());
        if h % self.scale != 0 || w % self.scale != 0 {
            return Some(format!("dims {h}x{w} not divisible by {}", self.scale));
        }
        let (lh, lw) = (h / self.scale, w / self.scale);
        let mut need = 1;
        if let Some(f) = &self.fgdm {
            need = f.dtlr.scale;
        }
        if self.rfdm.is_some() {
            need = need * 4 / gcd(need, 4);
        }
        if lh % need != 0 || lw % need != 0 {
            return Some(format!("LR dims {lh}x{lw} not divisible by {need}"));
        }
        None
    }

    /// Bilinear LR, then FGDM, then RFDM; clamped to `[0, 1]`.
    pub fn run(&self, hr: &ImageF, seed: u64) -> Result<ImageF> {
        let mut x = bilinear_lr(hr, self.scale)?;
        if let Some(f) = &self.fgdm {
            x = fgdm_apply(&x, f, &f.dtlr)?;
        }
        if let Some(r) = &self.rfdm {
            x = rfdm_apply(&x, r, self.lambda, self.flow_steps, seed)?;
        }
        Ok(x.clamped())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn image_seed(base: u64, index: usize) -> u64 {
    derive_seed(derive_seed(base, SYNTH_TAG), index as u64)
}

/// Synthesizes one LR image per HR image of `hr_dir` into `out_dir/lr/` and
/// writes `out_dir/manifest.csv`.
pub fn synthesize(cfg: &RunConfig, hr_dir: &Path, ckpt_dir: &Path, skip_fgdm: bool, skip_rfdm: bool) -> Result<Manifest> {
    let pipeline = Pipeline::load(cfg, ckpt_dir, skip_fgdm, skip_rfdm)?;
    let fgdm_id = if skip_fgdm { "none".to_string() } else { checkpoint_id(&ckpt_dir.join(FGDM_CKPT))? };
    let rfdm_id = if skip_rfdm { "none".to_string() } else { checkpoint_id(&ckpt_dir.join(RFDM_CKPT))? };
    let lr_dir = cfg.out_dir.join("lr");
    create_dir(&lr_dir)?;
    let mut manifest = Manifest::default();
    for (i, hr_path) in list_images(hr_dir)?.into_iter().enumerate() {
        let hr = load_image(&hr_path)?;
        if let Some(reason) = pipeline.reject_reason(&hr) {
            eprintln!("warning: skipping {}: {reason}", hr_path.display());
            manifest.skipped.push((hr_path.display().to_string(), reason));
            continue;
        }
        let seed = image_seed(cfg.seed, i);
        let lr = pipeline.run(&hr, seed)?;
        let name = file_name(&hr_path);
        save_image(&lr, lr_dir.join(&name))?;
        manifest.rows.push(ManifestRow {
            hr_path: hr_path.display().to_string(),
            lr_path: format!("lr/{name}"),
            seed,
            fgdm_ckpt: fgdm_id.clone(),
            rfdm_ckpt: rfdm_id.clone(),
        });
    }
    manifest.save(&cfg.out_dir.join(MANIFEST))?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub metrics: MetricReport,
}

pub fn mean_report(rows: &[EvalRow]) -> Option<MetricReport> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some(MetricReport {
        psnr: rows.iter().map(|r| r.metrics.psnr).sum::<f64>() / n,
        ssim: rows.iter().map(|r| r.metrics.ssim).sum::<f64>() / n,
    })
}

/// Scores every manifest LR image against the same-named file in
/// `reference_dir`; writes `out_dir/eval.csv` with a trailing mean row.
pub fn evaluate(manifest_path: &Path, reference_dir: &Path, out_dir: &Path) -> Result<Vec<EvalRow>> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::with_capacity(manifest.rows.len());
    for r in &manifest.rows {
        let lr_path = base.join(&r.lr_path);
        let name = file_name(&lr_path);
        let synthesized = load_image(&lr_path)?;
        let reference = load_image(reference_dir.join(&name))?;
        rows.push(EvalRow {
            name,
            metrics: report(&synthesized, &reference)?,
        });
    }
    let mut csv = String::from("name,psnr,ssim\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{:.4},{:.6}", r.name, r.metrics.psnr, r.metrics.ssim);
    }
    if let Some(m) = mean_report(&rows) {
        let _ = writeln!(csv, "mean,{:.4},{:.6}", m.psnr, m.ssim);
    }
    create_dir(out_dir)?;
    write_file(&out_dir.join(EVAL_CSV), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Dtlr,
    Lambda,
    K,
    Filter,
}

impl Study {
    pub fn csv_name(self) -> &'static str {
        match self {
            Study::Dtlr => "study_dtlr.csv",
            Study::Lambda => "study_lambda.csv",
            Study::K => "study_K.csv",
            Study::Filter => "study_filter.csv",
        }
    }
}

/// Held-out HR images with their aligned real LR (matched by file name).
pub fn heldout_pairs(cfg: &RunConfig) -> Result<Vec<(ImageF, ImageF)>> {
    let files = list_images(&cfg.heldout_hr_dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no held-out HR images in {}", cfg.heldout_hr_dir.display())));
    }
    files
        .iter()
        .map(|p| Ok((load_image(p)?, load_image(cfg.heldout_lr_dir.join(file_name(p)))?)))
        .collect()
}

/// Mean PSNR of the pipeline output (8-bit quantized, as `synthesize` would
/// save it) against the aligned real LR.
pub fn heldout_psnr(pipeline: &Pipeline, pairs: &[(ImageF, ImageF)], seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for (i, (hr, real)) in pairs.iter().enumerate() {
        let lr = quantized(&pipeline.run(hr, image_seed(seed, i))?);
        total += report(&lr, real)?.psnr;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub enum StudyResult {
    Dtlr(Vec<StudyRow>),
    Filter(Vec<(FilterKind, Vec<StudyRow>)>),
    Lambda(Vec<(f64, f64)>),
    K(Vec<(usize, f64)>),
}

fn dtlr_inputs(cfg: &RunConfig, pairs: &[(ImageF, ImageF)]) -> Result<(Vec<ImageF>, Vec<ImageF>)> {
    let mut real = Vec::with_capacity(pairs.len());
    let mut bi = Vec::with_capacity(pairs.len());
    for (hr, lr) in pairs {
        real.push(lr.clone());
        bi.push(bilinear_lr(hr, cfg.scale)?);
    }
    Ok((real, bi))
}

/// Runs one study over the held-out pairs and writes its CSV into the output
/// directory.
pub fn study(cfg: &RunConfig, which: Study, ckpt_dir: &Path) -> Result<StudyResult> {
    let pairs = heldout_pairs(cfg)?;
    let mut csv = String::new();
    let result = match which {
        Study::Dtlr => {
            let (real, bi) = dtlr_inputs(cfg, &pairs)?;
            let rows = degradation_convergence_study(&real, &bi, cfg.study_max_iters, cfg.dtlr.scale, cfg.dtlr.filter)?;
            csv.push_str("iters,psnr,ssim\n");
            for r in &rows {
                let _ = writeln!(csv, "{},{:.4},{:.4}", r.iters, r.psnr, r.ssim);
            }
            StudyResult::Dtlr(rows)
        }
        Study::Filter => {
            let (real, bi) = dtlr_inputs(cfg, &pairs)?;
            let tables = FilterKind::ALL
                .iter()
                .map(|&f| Ok((f, degradation_convergence_study(&real, &bi, cfg.study_max_iters, cfg.dtlr.scale, f)?)))
                .collect::<Result<Vec<_>>>()?;
            csv.push_str("iters");
            for (f, _) in &tables {
                let _ = write!(csv, ",{f}_psnr,{f}_ssim");
            }
            csv.push('\n');
            for i in 0..=cfg.study_max_iters {
                let _ = write!(csv, "{i}");
                for (_, rows) in &tables {
                    let _ = write!(csv, ",{:.4},{:.4}", rows[i].psnr, rows[i].ssim);
                }
                csv.push('\n');
            }
            StudyResult::Filter(tables)
        }
        Study::K => {
            let mut pipeline = Pipeline::load(cfg, ckpt_dir, false, false)?;
            csv.push_str("K,psnr\n");
            let mut rows = Vec::new();
            for k in K_SWEEP {
                pipeline.flow_steps = k;
                let p = heldout_psnr(&pipeline, &pairs, cfg.seed)?;
                eprintln!("K = {k}: {p:.4} dB");
                let _ = writeln!(csv, "{k},{p:.4}");
                rows.push((k, p));
            }
            StudyResult::K(rows)
        }
        Study::Lambda => {
            let lr = load_images(&cfg.lr_dir, "LR")?;
            let fgdm = FgdmCheckpoint::load(ckpt_dir.join(FGDM_CKPT))?;
            csv.push_str("lambda,psnr\n");
            let mut rows = Vec::new();
            for lambda in LAMBDA_SWEEP {
                let train = RfdmTrainConfig {
                    steps: cfg.lambda_study_steps,
                    lambda,
                    ..cfg.rfdm_train
                };
                let rfdm = rfdm_train(&lr, &fgdm, cfg.vnet, &train, cfg.seed)?.checkpoint;
                let pipeline = Pipeline {
                    scale: cfg.scale,
                    fgdm: Some(fgdm.clone()),
                    rfdm: Some(rfdm),
                    lambda,
                    flow_steps: cfg.flow_steps,
                };
                let p = heldout_psnr(&pipeline, &pairs, cfg.seed)?;
                eprintln!("lambda = {lambda}: {p:.4} dB");
                let _ = writeln!(csv, "{lambda},{p:.4}");
                rows.push((lambda, p));
            }
            StudyResult::Lambda(rows)
        }
    };
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join(which.csv_name()), csv)?;
    Ok(result)
}
