//! Reconstruction quality and acquisition statistics.

use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::model::PhotonCube;
use crate::Image;

fn same_dims(x: &Image, xhat: &Image) -> Result<()> {
    if x.dim() != xhat.dim() {
        return Err(Error::DimensionMismatch(format!(
            "reference {:?} vs estimate {:?}",
            x.dim(),
            xhat.dim()
        )));
    }
    Ok(())
}

fn sre_of<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, xh) in pairs {
        num += x * x;
        den += (x - xh) * (x - xh);
    }
    if !(num > 0.0) {
        return Err(invalid("SRE needs a nonzero reference"));
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (num / den).log10())
}

/// Signal-to-reconstruction error `10 log10(|x|^2 / |x - xhat|^2)` in dB;
/// `+inf` on a perfect match.
pub fn sre(x: &Image, xhat: &Image) -> Result<f64> {
    same_dims(x, xhat)?;
    sre_of(x.iter().zip(xhat.iter()))
}

/// [`sre`] over the pixels where `mask` is set.
pub fn sre_masked(x: &Image, xhat: &Image, mask: &Array2<bool>) -> Result<f64> {
    same_dims(x, xhat)?;
    if mask.dim() != x.dim() {
        return Err(Error::DimensionMismatch("mask".into()));
    }
    sre_of(x.iter().zip(xhat.iter()).zip(mask.iter()).filter(|(_, &k)| k).map(|(p, _)| p))
}

fn nbias_of<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)>) -> Result<f64> {
    let (mut sx, mut se, mut n) = (0.0, 0.0, 0usize);
    for (x, xh) in pairs {
        sx += x;
        se += x - xh;
        n += 1;
    }
    if n == 0 || sx == 0.0 {
        return Err(invalid("N-Bias needs a reference with nonzero mean"));
    }
    Ok((se / n as f64).abs() / (sx / n as f64).abs())
}

/// Normalized bias `|mean(x - xhat)| / |mean(x)|`.
pub fn nbias(x: &Image, xhat: &Image) -> Result<f64> {
    same_dims(x, xhat)?;
    nbias_of(x.iter().zip(xhat.iter()))
}

/// Signal-to-background ratio `r c1 / b`.
pub fn sbr(r: f64, c1: f64, b: f64) -> Result<f64> {
    if b == 0.0 {
        return Err(invalid("SBR needs a nonzero background"));
    }
    Ok(r * c1 / b)
}

/// Signal-to-noise ratio `r c1 / sqrt(r c1 + b)`.
pub fn snr(r: f64, c1: f64, b: f64) -> Result<f64> {
    let total = r * c1 + b;
    if !(total > 0.0) {
        return Err(invalid("SNR needs r c1 + b > 0"));
    }
    Ok(r * c1 / total.sqrt())
}

/// Attenuation lengths `alpha d` (per-meter attenuation times meters).
pub fn al(alpha_per_m: f64, d_m: f64) -> f64 {
    alpha_per_m * d_m
}

/// Percentage of pixels with at least one photon.
pub fn pct_nonempty(cube: &PhotonCube) -> f64 {
    let totals = cube.totals();
    let n = totals.iter().filter(|&&v| v > 0).count();
    100.0 * n as f64 / totals.len() as f64
}

/// One row of an evaluation table.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub sre_depth: f64,
    pub sre_refl: f64,
    pub nbias_depth: f64,
    pub nbias_refl: f64,
    pub sbr: f64,
    pub snr: f64,
    pub al: f64,
    pub pct_nonempty: f64,
}

pub const REPORT_HEADER: &str =
    "label,sre_depth_db,sre_refl_db,nbias_depth,nbias_refl,sbr,snr,al,pct_nonempty";

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

impl EvalReport {
    pub fn csv_row(&self) -> String {
        [
            self.sre_depth,
            self.sre_refl,
            self.nbias_depth,
            self.nbias_refl,
            self.sbr,
            self.snr,
            self.al,
            self.pct_nonempty,
        ]
        .iter()
        .fold(self.label.clone(), |mut s, &v| {
            let _ = write!(s, ",{}", fmt_num(v));
            s
        })
    }
}

/// Writes `REPORT_HEADER` and one line per report.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Acquisition constants a report needs besides the images.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalContext {
    pub c1: f64,
    /// Background level, counts per bin.
    pub background: f64,
    pub alpha_per_m: f64,
    /// Target range used for the attenuation length, meters.
    pub distance_m: f64,
    pub pct_nonempty: f64,
}

/// Ground-truth images against which estimates are scored.
#[derive(Clone, Copy, Debug)]
pub struct Truth<'a> {
    pub depth: &'a Image,
    pub refl: &'a Image,
}

fn report_on(
    label: String,
    truth: Truth<'_>,
    depth: &Image,
    refl: &Image,
    ctx: &EvalContext,
    select: &dyn Fn((usize, usize)) -> bool,
) -> Result<EvalReport> {
    let pick = |x: &Image, y: &Image| -> Vec<(f64, f64)> {
        x.indexed_iter().filter(|(idx, _)| select(*idx)).map(|(idx, &v)| (v, y[idx])).collect()
    };
    let d = pick(truth.depth, depth);
    let r = pick(truth.refl, refl);
    let mean_r = r.iter().map(|p| p.0).sum::<f64>() / r.len().max(1) as f64;
    Ok(EvalReport {
        label,
        sre_depth: sre_of(d.iter().map(|(a, b)| (a, b)))?,
        sre_refl: sre_of(r.iter().map(|(a, b)| (a, b)))?,
        nbias_depth: nbias_of(d.iter().map(|(a, b)| (a, b)))?,
        nbias_refl: nbias_of(r.iter().map(|(a, b)| (a, b)))?,
        sbr: sbr(mean_r, ctx.c1, ctx.background)?,
        snr: snr(mean_r, ctx.c1, ctx.background)?,
        al: al(ctx.alpha_per_m, ctx.distance_m),
        pct_nonempty: ctx.pct_nonempty,
    })
}

/// Scores an estimate over the whole grid.
pub fn evaluate(label: &str, truth: Truth<'_>, depth: &Image, refl: &Image, ctx: &EvalContext) -> Result<EvalReport> {
    for x in [depth, refl, truth.refl] {
        same_dims(truth.depth, x)?;
    }
    report_on(label.to_string(), truth, depth, refl, ctx, &|_| true)
}

/// Distinct reflectivity values of `refl`, ascending.
pub fn reflectivity_levels(refl: &Image) -> Vec<f64> {
    let mut levels: Vec<f64> = refl.iter().copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

/// One report per distinct ground-truth reflectivity, ascending; SBR and SNR
/// are those of the level.
pub fn evaluate_by_level(truth: Truth<'_>, depth: &Image, refl: &Image, ctx: &EvalContext) -> Result<Vec<EvalReport>> {
    for x in [depth, refl, truth.refl] {
        same_dims(truth.depth, x)?;
    }
    reflectivity_levels(truth.refl)
        .into_iter()
        .enumerate()
        .map(|(k, level)| {
            report_on(format!("level{k}"), truth, depth, refl, ctx, &|idx| truth.refl[idx] == level)
        })
        .collect()
}
