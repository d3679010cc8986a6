//! Pair manifest: one CSV row per synthesized LR image.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rfdeg_core::{Error, Result};

pub const HEADER: &str = "hr_path,lr_path,seed,fgdm_ckpt,rfdm_ckpt";
const SKIPPED: &str = "# skipped,";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub hr_path: String,
    /// Relative to the manifest's directory.
    pub lr_path: String,
    /// Noise seed of the flow stage.
    pub seed: u64,
    /// `file@sha256:prefix`, or `none` when the stage was skipped.
    pub fgdm_ckpt: String,
    pub rfdm_ckpt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// `(hr_path, reason)` for inputs that were not synthesized.
    pub skipped: Vec<(String, String)>,
}

fn check_field(field: &str) -> Result<&str> {
    if field.contains([',', '\n', '\r']) {
        return Err(Error::Data(format!("manifest field `{field}` contains a separator")));
    }
    Ok(field)
}

impl Manifest {
    pub fn to_csv(&self) -> Result<String> {
        let mut s = format!("{HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                check_field(&r.hr_path)?,
                check_field(&r.lr_path)?,
                r.seed,
                check_field(&r.fgdm_ckpt)?,
                check_field(&r.rfdm_ckpt)?
            );
        }
        for (path, reason) in &self.skipped {
            let _ = writeln!(s, "{SKIPPED}{},{}", check_field(path)?, reason.replace([',', '\n'], ";"));
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HEADER) {
            return Err(Error::Data(format!("manifest must start with `{HEADER}`")));
        }
        let mut m = Manifest::default();
        for (i, line) in lines.enumerate() {
            if let Some(rest) = line.strip_prefix(SKIPPED) {
                let (path, reason) = rest.split_once(',').unwrap_or((rest, ""));
                m.skipped.push((path.to_string(), reason.to_string()));
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Data(format!("manifest row {}: malformed `{line}`", i + 2));
            if f.len() != 5 {
                return Err(bad());
            }
            m.rows.push(ManifestRow {
                hr_path: f[0].to_string(),
                lr_path: f[1].to_string(),
                seed: f[2].parse().map_err(|_| bad())?,
                fgdm_ckpt: f[3].to_string(),
                rfdm_ckpt: f[4].to_string(),
            });
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}
