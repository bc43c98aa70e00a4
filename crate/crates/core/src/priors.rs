//! Spatial priors: the total-variation MRF on depth and the gamma MRF on
//! reflectivity.
//!
//! The gamma MRF couples every reflectivity pixel `r[i,j]` to four auxiliary
//! variables on a dual lattice of size `(Nr + 1) x (Nc + 1)`:
//! `w[i,j], w[i+1,j], w[i,j+1], w[i+1,j+1]`. Conversely dual site `w[i,j]`
//! touches the in-bounds pixels among `r[i-1,j-1], r[i-1,j], r[i,j-1], r[i,j]`,
//! so interior dual sites have degree 4 and border sites 2 (corners 1).
//!
//! The joint prior used throughout is
//!
//! ```text
//! f(r, w | zeta) ∝ prod_w w^-(deg(w) zeta + 1) * prod_r r^(4 zeta - 1) * prod_E exp(-zeta r / w)
//! ```
//!
//! which keeps both conditionals conjugate at the borders:
//! `r | w ~ G(4 zeta, 1 / (4 zeta rho2))` and
//! `w | r ~ IG(deg zeta, deg zeta rho1)`, with `rho1`, `rho2` the in-bounds
//! neighbor means. In the interior `deg = 4`.

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::Image;

pub const ETA_MAX: f64 = 20.0;
pub const ZETA_MAX: f64 = 20.0;
/// Smallest admissible gamma-MRF coupling; `zeta > 1/4` keeps the
/// reflectivity mode positive on empty pixels.
pub const ZETA_MIN: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvPrior {
    pub eta: f64,
}

impl TvPrior {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=ETA_MAX).contains(&eta) {
            return Err(invalid(format!("eta must be in [0, {ETA_MAX}], got {eta}")));
        }
        Ok(TvPrior { eta })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaMrfPrior {
    pub zeta: f64,
}

impl GammaMrfPrior {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta > ZETA_MIN && zeta <= ZETA_MAX) {
            return Err(invalid(format!(
                "zeta must be in ({ZETA_MIN}, {ZETA_MAX}], got {zeta}"
            )));
        }
        Ok(GammaMrfPrior { zeta })
    }
}

/// Unordered 4-neighbor pairs of an `nr x nc` grid as flat index pairs:
/// all horizontal pairs (row by row), then all vertical pairs.
pub fn tv_edges(nr: usize, nc: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::with_capacity(nr * nc.saturating_sub(1) + nr.saturating_sub(1) * nc);
    for i in 0..nr {
        for j in 0..nc.saturating_sub(1) {
            e.push((i * nc + j, i * nc + j + 1));
        }
    }
    for i in 0..nr.saturating_sub(1) {
        for j in 0..nc {
            e.push((i * nc + j, (i + 1) * nc + j));
        }
    }
    e
}

/// Total variation: sum of `|t_a - t_b|` over unordered 4-neighbor pairs,
/// each pair counted once.
pub fn tv(t: &Image) -> f64 {
    let (nr, nc) = t.dim();
    let mut s = 0.0;
    for i in 0..nr {
        for j in 0..nc {
            if j + 1 < nc {
                s += (t[(i, j)] - t[(i, j + 1)]).abs();
            }
            if i + 1 < nr {
                s += (t[(i, j)] - t[(i + 1, j)]).abs();
            }
        }
    }
    s
}

/// TV terms involving pixel `(i, j)` if it took the value `value`.
#[inline]
pub fn local_tv(t: &Image, (i, j): (usize, usize), value: f64) -> f64 {
    let (nr, nc) = t.dim();
    let mut s = 0.0;
    if i > 0 {
        s += (value - t[(i - 1, j)]).abs();
    }
    if i + 1 < nr {
        s += (value - t[(i + 1, j)]).abs();
    }
    if j > 0 {
        s += (value - t[(i, j - 1)]).abs();
    }
    if j + 1 < nc {
        s += (value - t[(i, j + 1)]).abs();
    }
    s
}

/// Primal pixels adjacent to dual site `(i, j)` for an `nr x nc` image.
#[inline]
pub fn dual_neighbors(
    (nr, nc): (usize, usize),
    (i, j): (usize, usize),
) -> impl Iterator<Item = (usize, usize)> {
    [(0usize, 0usize), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .filter_map(move |(di, dj)| {
            let (pi, pj) = (i.checked_sub(di)?, j.checked_sub(dj)?);
            (pi < nr && pj < nc).then_some((pi, pj))
        })
}

/// Number of primal pixels adjacent to dual site `(i, j)`.
pub fn dual_degree(dim: (usize, usize), site: (usize, usize)) -> usize {
    dual_neighbors(dim, site).count()
}

/// Dual sites adjacent to pixel `(i, j)` that exist in a `w` of shape `wdim`.
#[inline]
pub fn primal_neighbors(
    wdim: (usize, usize),
    (i, j): (usize, usize),
) -> impl Iterator<Item = (usize, usize)> {
    [(0usize, 0usize), (1, 0), (0, 1), (1, 1)]
        .into_iter()
        .map(move |(di, dj)| (i + di, j + dj))
        .filter(move |&(a, b)| a < wdim.0 && b < wdim.1)
}

/// Shape of the dual lattice for an `nr x nc` image.
pub fn dual_shape((nr, nc): (usize, usize)) -> (usize, usize) {
    (nr + 1, nc + 1)
}

/// Mean of the in-bounds reflectivities around dual site `(i, j)`.
pub fn rho1(r: &Image, site: (usize, usize)) -> f64 {
    offset_mean(dual_neighbors(r.dim(), site).map(|p| r[p]))
}

/// Mean of `1 / w` over the in-bounds dual sites around pixel `(i, j)`.
pub fn rho2(w: &Image, site: (usize, usize)) -> f64 {
    offset_mean(primal_neighbors(w.dim(), site).map(|q| 1.0 / w[q]))
}

// Mean taken relative to the first value, so constant inputs come back exactly.
#[inline]
fn offset_mean(mut values: impl Iterator<Item = f64>) -> f64 {
    let Some(first) = values.next() else {
        return f64::NAN;
    };
    let mut s = 0.0;
    let mut n = 1usize;
    for v in values {
        s += v - first;
        n += 1;
    }
    first + s / n as f64
}

/// `rho1` at every site of the dual lattice.
pub fn rho1_image(r: &Image) -> Image {
    Array2::from_shape_fn(dual_shape(r.dim()), |site| rho1(r, site))
}

/// `rho2` at every pixel of an `nr x nc` image.
pub fn rho2_image(w: &Image, dim: (usize, usize)) -> Image {
    Array2::from_shape_fn(dim, |site| rho2(w, site))
}

/// Degree of every dual site.
pub fn dual_degrees(dim: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(dual_shape(dim), |site| dual_degree(dim, site) as f64)
}

/// `sum_E r / w` over all pixel / dual-site edges.
pub fn edge_ratio_sum(r: &Image, w: &Image) -> f64 {
    let mut s = 0.0;
    for ((i, j), &rv) in r.indexed_iter() {
        for q in primal_neighbors(w.dim(), (i, j)) {
            s += rv / w[q];
        }
    }
    s
}

/// Derivative of the unnormalized log gamma-MRF prior w.r.t. `zeta`:
/// `-sum_w deg(w) log w + 4 sum_r log r - sum_E r / w`.
///
/// On interior dual sites the weight is the constant 4.
pub fn gmrf_potential(r: &Image, w: &Image) -> f64 {
    let deg = dual_degrees(r.dim());
    let log_w: f64 = w.iter().zip(deg.iter()).map(|(w, d)| d * w.ln()).sum();
    let log_r: f64 = r.iter().map(|r| r.ln()).sum();
    -log_w + 4.0 * log_r - edge_ratio_sum(r, w)
}

/// Negative log gamma-MRF prior up to its normalizing constant:
/// `sum_w (deg zeta + 1) log w - (4 zeta - 1) sum_r log r + zeta sum_E r / w`.
pub fn gmrf_neg_log_prior(r: &Image, w: &Image, zeta: f64) -> f64 {
    let log_w: f64 = w.iter().map(|w| w.ln()).sum();
    let log_r: f64 = r.iter().map(|r| r.ln()).sum();
    -zeta * gmrf_potential(r, w) + log_w + log_r
}
