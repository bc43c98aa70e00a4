//! Ground-truth scenes and the built-in synthetic presets.

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::model::bin_depth_m;
use crate::Image;

/// Histogram geometry shared by a scene and the cube it produces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Acquisition {
    pub bins: usize,
    pub bin_width_ps: f64,
    pub refractive_index: f64,
}

impl Acquisition {
    pub fn new(bins: usize, bin_width_ps: f64, refractive_index: f64) -> Self {
        Acquisition {
            bins,
            bin_width_ps,
            refractive_index,
        }
    }

    pub fn bin_depth_m(&self) -> f64 {
        bin_depth_m(self.bin_width_ps, self.refractive_index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruthScene {
    /// Target position, bins.
    pub depth: Image,
    pub refl: Image,
    /// Background level, counts per bin.
    pub background: Image,
    /// Attenuation per bin.
    pub alpha: f64,
    pub acquisition: Acquisition,
}

impl GroundTruthScene {
    pub fn uniform(
        dim: (usize, usize),
        depth: f64,
        refl: f64,
        background: f64,
        alpha: f64,
        acquisition: Acquisition,
    ) -> Self {
        GroundTruthScene {
            depth: Array2::from_elem(dim, depth),
            refl: Array2::from_elem(dim, refl),
            background: Array2::from_elem(dim, background),
            alpha,
            acquisition,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.depth.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.depth.dim();
        if dim.0 == 0 || dim.1 == 0 {
            return Err(invalid("scene must have at least one pixel"));
        }
        if self.refl.dim() != dim || self.background.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "depth {:?}, reflectivity {:?}, background {:?}",
                dim,
                self.refl.dim(),
                self.background.dim()
            )));
        }
        if self.acquisition.bins == 0 {
            return Err(invalid("scene needs at least one bin"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if self.depth.iter().any(|t| !t.is_finite()) {
            return Err(invalid("depth must be finite"));
        }
        if self.refl.iter().chain(self.background.iter()).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("reflectivity and background must be nonnegative"));
        }
        Ok(())
    }
}

/// Number of depth and of reflectivity levels in the staircase preset.
pub const STAIRCASE_LEVELS: usize = 10;

/// Reflectivity of level `k`: log-spaced so that `r * 1000 / 1` spans
/// signal-to-background ratios 1 to 1000 for the preset's `c1` and `b`.
pub fn staircase_reflectivity(k: usize) -> f64 {
    10f64.powf(-3.0 + 3.0 * k as f64 / (STAIRCASE_LEVELS - 1) as f64)
}

/// Depth of level `k` in meters: 12 cm to 48 cm in 4 cm steps.
pub fn staircase_depth_m(k: usize) -> f64 {
    0.12 + 0.04 * k as f64
}

/// Staircase scene: ten depth stripes along columns crossed with ten
/// reflectivity bands along rows, `b = 1`, `alpha = 0`, 2000 bins of 2 ps in
/// air. Band `k` of rows holds reflectivity [`staircase_reflectivity`]`(k)`.
pub fn staircase_scene(nr: usize, nc: usize) -> Result<GroundTruthScene> {
    if nr < STAIRCASE_LEVELS || nc < STAIRCASE_LEVELS {
        return Err(invalid(format!(
            "staircase scene needs at least {STAIRCASE_LEVELS}x{STAIRCASE_LEVELS} pixels"
        )));
    }
    let acquisition = Acquisition::new(2000, 2.0, 1.0);
    let bin_m = acquisition.bin_depth_m();
    let depth = Array2::from_shape_fn((nr, nc), |(_, j)| {
        staircase_depth_m(j * STAIRCASE_LEVELS / nc) / bin_m
    });
    let refl = Array2::from_shape_fn((nr, nc), |(i, _)| {
        staircase_reflectivity(i * STAIRCASE_LEVELS / nr)
    });
    Ok(GroundTruthScene {
        depth,
        refl,
        background: Array2::from_elem((nr, nc), 1.0),
        alpha: 0.0,
        acquisition,
    })
}

/// Reflectivity band index of every pixel of a staircase scene.
pub fn staircase_band(nr: usize, i: usize) -> usize {
    i * STAIRCASE_LEVELS / nr
}
