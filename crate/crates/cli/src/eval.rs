//! PSNR/SSIM over directories of restored and ground-truth images matched by
//! file name.

use std::path::Path;

use easrn_core::metrics::{psnr, ssim};
use serde::{Serialize, Serializer};

use crate::error::{CliError, Result};
use crate::imageio::{list_images, read_image};

/// JSON has no infinity; identical pairs report PSNR as the string `"inf"`.
fn finite_or_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairScore {
    pub name: String,
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairFailure {
    pub name: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub count: usize,
    #[serde(serialize_with = "finite_or_inf")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub pairs: Vec<PairScore>,
    /// Predictions with no ground truth of the same name.
    pub unmatched: Vec<String>,
    pub failures: Vec<PairFailure>,
}

fn score(pred: &Path, gt: &Path) -> Result<(f64, f64)> {
    let a = read_image(pred)?.image;
    let b = read_image(gt)?.image;
    Ok((psnr(&a, &b)?, ssim(&a, &b)?))
}

pub fn evaluate_pairs(pred_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    let mut failures = Vec::new();
    for pred in list_images(pred_dir)? {
        let name = pred.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let gt = gt_dir.join(&name);
        if !gt.is_file() {
            unmatched.push(name);
            continue;
        }
        match score(&pred, &gt) {
            Ok((p, s)) => pairs.push(PairScore { name, psnr: p, ssim: s }),
            Err(e) => failures.push(PairFailure { name, error: e.to_string() }),
        }
    }
    if pairs.is_empty() && failures.is_empty() {
        return Err(CliError::EmptySet(format!(
            "no files in {} have a counterpart in {}",
            pred_dir.display(),
            gt_dir.display()
        )));
    }
    let n = pairs.len().max(1) as f64;
    Ok(EvalReport {
        count: pairs.len(),
        mean_psnr: pairs.iter().map(|p| p.psnr).sum::<f64>() / n,
        mean_ssim: pairs.iter().map(|p| p.ssim).sum::<f64>() / n,
        pairs,
        unmatched,
        failures,
    })
}

pub fn report_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report fields are serializable")
}
