//! Coordinate-descent MAP estimation of `(t, r, w)`.
//!
//! Each outer iteration minimizes the negative log-posterior exactly along
//! one block at a time: depth by ADMM, then reflectivity and auxiliary
//! variables in closed form. The cost is therefore non-increasing.

use ndarray::Array2;

use crate::admm::{solve_depth, AdmmConfig};
use crate::error::{invalid, Error, Result};
use crate::model::{ImpulseModel, PrelimEstimates, SceneImages};
use crate::par;
use crate::priors::{
    dual_degree, dual_neighbors, dual_shape, gmrf_neg_log_prior, rho2, tv, GammaMrfPrior, TvPrior,
};
use crate::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdaConfig {
    pub eta: f64,
    pub zeta: f64,
    /// Relative cost change that ends the outer loop.
    pub delta: f64,
    pub n_max: usize,
    pub admm: AdmmConfig,
}

impl CdaConfig {
    pub fn new(eta: f64, zeta: f64) -> Self {
        CdaConfig {
            eta,
            zeta,
            delta: 1e-2,
            n_max: 500,
            admm: AdmmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        TvPrior::new(self.eta)?;
        GammaMrfPrior::new(self.zeta)?;
        if !(self.delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {}", self.delta)));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max must be at least 1"));
        }
        self.admm.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// `|F(n) - F(n-1)| <= delta |F(n-1)|`.
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct CdaTrace {
    /// `F` at the start point followed by one value per outer iteration.
    pub costs: Vec<f64>,
    pub iterations: usize,
    /// ADMM iterations spent in each outer iteration.
    pub admm_iterations: Vec<usize>,
    pub termination: Termination,
}

/// Reflectivity conditional `r^(shape - 1) exp(-rate r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReflectivityConditional {
    /// `4 zeta + c2 k r_ml0`.
    pub shape: f64,
    /// `4 zeta rho2 + c2 k exp(-alpha t)`.
    pub rate: f64,
}

impl ReflectivityConditional {
    pub fn new(zeta: f64, rho2: f64, c2: f64, k: f64, r_ml0: f64, alpha: f64, t: f64) -> Self {
        ReflectivityConditional {
            shape: 4.0 * zeta + c2 * k * r_ml0,
            rate: 4.0 * zeta * rho2 + c2 * k * (-alpha * t).exp(),
        }
    }

    pub fn mode(&self) -> f64 {
        (self.shape - 1.0) / self.rate
    }

    /// Negative log of the conditional up to a constant.
    pub fn cost(&self, r: f64) -> f64 {
        -(self.shape - 1.0) * r.ln() + self.rate * r
    }
}

/// Auxiliary conditional `w^-(shape + 1) exp(-scale / w)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxConditional {
    /// `deg zeta`.
    pub shape: f64,
    /// `zeta * sum of the adjacent reflectivities`.
    pub scale: f64,
}

impl AuxConditional {
    pub fn new(zeta: f64, degree: usize, neighbor_sum: f64) -> Self {
        AuxConditional {
            shape: degree as f64 * zeta,
            scale: zeta * neighbor_sum,
        }
    }

    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }

    pub fn cost(&self, w: f64) -> f64 {
        (self.shape + 1.0) * w.ln() + self.scale / w
    }
}

fn check_shapes(images: &SceneImages, prelim: &PrelimEstimates) -> Result<()> {
    if images.dim() != prelim.dim() {
        return Err(Error::DimensionMismatch(format!(
            "images {:?} vs preliminary estimates {:?}",
            images.dim(),
            prelim.dim()
        )));
    }
    images.validate()
}

/// Negative log-posterior `F(t, r, w)` with constants dropped.
pub fn neg_log_posterior(
    images: &SceneImages,
    prelim: &PrelimEstimates,
    irf: &ImpulseModel,
    eta: f64,
    zeta: f64,
) -> Result<f64> {
    check_shapes(images, prelim)?;
    let (c2, alpha, sigma2) = (irf.c2, irf.alpha, irf.sigma2);
    let mut data = 0.0;
    for ((idx, &k), &t_ml0) in prelim.mask.indexed_iter().zip(prelim.t.iter()) {
        if !k {
            continue;
        }
        let (t, r, r_ml0) = (images.t[idx], images.r[idx], prelim.r[idx]);
        let d = t - t_ml0;
        data += -c2 * r_ml0 * r.ln()
            + alpha * c2 * r_ml0 * t
            + d * d * c2 * r_ml0 / (2.0 * sigma2)
            + c2 * r * (-alpha * t).exp();
    }
    Ok(data + eta * tv(&images.t) + gmrf_neg_log_prior(&images.r, &images.w, zeta))
}

/// Exact minimizer of `F` over `r` with `t`, `w` fixed.
pub fn update_reflectivity(
    prelim: &PrelimEstimates,
    t: &Image,
    w: &Image,
    irf: &ImpulseModel,
    zeta: f64,
) -> Image {
    let (nr, nc) = prelim.dim();
    let v = par::map_indices(nr * nc, |p| {
        let idx = (p / nc, p % nc);
        ReflectivityConditional::new(
            zeta,
            rho2(w, idx),
            irf.c2,
            prelim.k(idx),
            prelim.r[idx],
            irf.alpha,
            t[idx],
        )
        .mode()
    });
    Array2::from_shape_vec((nr, nc), v).expect("shape")
}

/// Conditional of dual site `site` given `r`.
pub fn aux_conditional(r: &Image, site: (usize, usize), zeta: f64) -> AuxConditional {
    let dim = r.dim();
    let sum: f64 = dual_neighbors(dim, site).map(|p| r[p]).sum();
    AuxConditional::new(zeta, dual_degree(dim, site), sum)
}

/// Exact minimizer of `F` over `w` with `r` fixed.
pub fn update_aux(r: &Image, zeta: f64) -> Image {
    let (wr, wc) = dual_shape(r.dim());
    let v = par::map_indices(wr * wc, |q| aux_conditional(r, (q / wc, q % wc), zeta).mode());
    Array2::from_shape_vec((wr, wc), v).expect("shape")
}

/// Runs the coordinate descent from `init` until the relative change of `F`
/// falls to `cfg.delta` or `cfg.n_max` outer iterations have run.
pub fn run_cda(
    prelim: &PrelimEstimates,
    irf: &ImpulseModel,
    cfg: &CdaConfig,
    init: &SceneImages,
) -> Result<(SceneImages, CdaTrace)> {
    cfg.validate()?;
    check_shapes(init, prelim)?;
    let prior = TvPrior::new(cfg.eta)?;
    let mut cur = init.clone();
    let mut cost = neg_log_posterior(&cur, prelim, irf, cfg.eta, cfg.zeta)?;
    if !cost.is_finite() {
        return Err(Error::NonFinite {
            iteration: 0,
            what: "CDA cost".into(),
        });
    }
    let mut trace = CdaTrace {
        costs: vec![cost],
        iterations: 0,
        admm_iterations: Vec::new(),
        termination: Termination::MaxIterations,
    };
    for n in 1..=cfg.n_max {
        let depth = solve_depth(prelim, &cur.r, irf, prior, &cfg.admm, &cur.t)?;
        cur.t = depth.t;
        cur.r = update_reflectivity(prelim, &cur.t, &cur.w, irf, cfg.zeta);
        cur.w = update_aux(&cur.r, cfg.zeta);
        let next = neg_log_posterior(&cur, prelim, irf, cfg.eta, cfg.zeta)?;
        if !next.is_finite() {
            return Err(Error::NonFinite {
                iteration: n,
                what: "CDA cost".into(),
            });
        }
        trace.costs.push(next);
        trace.admm_iterations.push(depth.iterations);
        trace.iterations = n;
        let done = (next - cost).abs() <= cfg.delta * cost.abs();
        cost = next;
        if done {
            trace.termination = Termination::Converged;
            break;
        }
    }
    Ok((cur, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::rho1_image;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn irf_with_c2(c2: f64, alpha: f64) -> ImpulseModel {
        let mut irf = ImpulseModel::new(1.0, 4.0, alpha).unwrap();
        irf.c2 = c2;
        irf
    }

    #[test]
    fn reflectivity_update_examples() {
        let c = ReflectivityConditional::new(0.5, 1.0, 10.0, 1.0, 1.0, 0.0, 7.0);
        assert_eq!(c.rate, 12.0);
        assert_relative_eq!(c.mode(), 11.0 / 12.0);
        let c = ReflectivityConditional::new(1.0, 1.0, 10.0, 0.0, 0.0, 0.0, 7.0);
        assert_eq!(c.mode(), 0.75);
        // large zeta on an empty pixel tends to 1 / rho2
        let c = ReflectivityConditional::new(1e9, 0.25, 10.0, 0.0, 0.0, 0.0, 7.0);
        assert_relative_eq!(c.mode(), 4.0, max_relative = 1e-8);

        // image form: w == 1 gives rho2 == 1
        let prelim = PrelimEstimates::from_images(array![[3.0]], array![[1.0]]).unwrap();
        let irf = irf_with_c2(10.0, 0.0);
        let r = update_reflectivity(&prelim, &array![[3.0]], &Array2::ones((2, 2)), &irf, 0.5);
        assert_relative_eq!(r[(0, 0)], 11.0 / 12.0);
    }

    #[test]
    fn aux_update_examples() {
        assert_relative_eq!(AuxConditional::new(1.0, 4, 4.0).mode(), 0.8);
        assert_relative_eq!(AuxConditional::new(0.3, 4, 10.0).mode(), 1.2 * 2.5 / 2.2);
        assert_relative_eq!(AuxConditional::new(1e9, 4, 4.0 * 3.0).mode(), 3.0, max_relative = 1e-8);
        let w = update_aux(&Array2::ones((3, 3)), 1.0);
        assert_eq!(w.dim(), (4, 4));
        assert_relative_eq!(w[(1, 1)], 0.8);
        // two-neighbor border site: 2 zeta rho1 / (2 zeta + 1)
        assert_relative_eq!(w[(0, 1)], 2.0 / 3.0);
        assert_relative_eq!(w[(0, 0)], 0.5);
    }

    #[test]
    fn closed_forms_minimize_their_conditionals() {
        let c = ReflectivityConditional::new(0.7, 1.3, 25.0, 1.0, 0.4, 0.01, 30.0);
        let m = c.mode();
        assert!(c.cost(m + 1e-4) > c.cost(m) && c.cost(m - 1e-4) > c.cost(m));
        let a = AuxConditional::new(0.7, 2, 3.1);
        let m = a.mode();
        assert!(a.cost(m + 1e-4) > a.cost(m) && a.cost(m - 1e-4) > a.cost(m));
    }

    fn two_by_two() -> (PrelimEstimates, SceneImages, ImpulseModel) {
        let prelim =
            PrelimEstimates::from_images(array![[10.0, 12.0], [0.0, 11.0]], array![[0.5, 0.2], [0.0, 1.5]])
                .unwrap();
        let images = SceneImages {
            t: array![[10.5, 11.0], [9.0, 12.5]],
            r: array![[0.4, 0.3], [0.7, 1.2]],
            w: Array2::from_shape_fn((3, 3), |(i, j)| 0.5 + 0.1 * (i * 3 + j) as f64),
        };
        (prelim, images, ImpulseModel::new(3.0, 2.0, 0.02).unwrap())
    }

    #[test]
    fn cost_matches_direct_evaluation() {
        let (prelim, im, irf) = two_by_two();
        let (eta, zeta) = (0.7, 1.3);
        let f = neg_log_posterior(&im, &prelim, &irf, eta, zeta).unwrap();

        let (c2, a, s2) = (irf.c2, irf.alpha, irf.sigma2);
        let mut expected = 0.0;
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let (t, r, tm, rm) = (im.t[(i, j)], im.r[(i, j)], prelim.t[(i, j)], prelim.r[(i, j)]);
            expected += -c2 * rm * r.ln() + a * c2 * rm * t + (t - tm).powi(2) * c2 * rm / (2.0 * s2)
                + c2 * r * (-a * t).exp();
        }
        let t = &im.t;
        let tv = (t[(0, 0)] - t[(0, 1)]).abs()
            + (t[(1, 0)] - t[(1, 1)]).abs()
            + (t[(0, 0)] - t[(1, 0)]).abs()
            + (t[(0, 1)] - t[(1, 1)]).abs();
        expected += eta * tv;
        // dual degrees of a 3x3 lattice over a 2x2 image
        let deg = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];
        for (i, row) in deg.iter().enumerate() {
            for (j, d) in row.iter().enumerate() {
                expected += (d * zeta + 1.0) * im.w[(i, j)].ln();
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let r = im.r[(i, j)];
                expected -= (4.0 * zeta - 1.0) * r.ln();
                for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    expected += zeta * r / im.w[(i + di, j + dj)];
                }
            }
        }
        assert_relative_eq!(f, expected, max_relative = 1e-13);
    }

    #[test]
    fn doubling_aux_changes_cost_by_the_prior_terms() {
        let (prelim, im, irf) = two_by_two();
        let zeta = 0.9;
        let f1 = neg_log_posterior(&im, &prelim, &irf, 0.0, zeta).unwrap();
        let mut doubled = im.clone();
        doubled.w.mapv_inplace(|w| 2.0 * w);
        let f2 = neg_log_posterior(&doubled, &prelim, &irf, 0.0, zeta).unwrap();
        let total_weight: f64 = (4.0 * 4.0) * zeta + 9.0;
        let ratio_sum = crate::priors::edge_ratio_sum(&im.r, &im.w);
        assert_relative_eq!(f2 - f1, total_weight * 2f64.ln() - zeta * ratio_sum / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn empty_scene_cost_is_prior_only() {
        let prelim = PrelimEstimates::from_images(Array2::zeros((2, 2)), Array2::zeros((2, 2))).unwrap();
        let (_, im, irf) = two_by_two();
        let f = neg_log_posterior(&im, &prelim, &irf, 0.0, 2.0).unwrap();
        assert_relative_eq!(f, gmrf_neg_log_prior(&im.r, &im.w, 2.0), max_relative = 1e-14);
    }

    #[test]
    fn invalid_images_are_rejected() {
        let (prelim, mut im, irf) = two_by_two();
        im.r[(0, 0)] = 0.0;
        assert!(neg_log_posterior(&im, &prelim, &irf, 1.0, 1.0).is_err());
        let (prelim, mut im, irf) = two_by_two();
        im.t[(1, 0)] = -1.0;
        assert!(neg_log_posterior(&im, &prelim, &irf, 1.0, 1.0).is_err());
        assert!(run_cda(&prelim, &irf, &CdaConfig::new(1.0, 0.25), &SceneImages::from_prelim(&prelim)).is_err());
    }

    fn constant_problem(n: usize) -> (PrelimEstimates, ImpulseModel) {
        let prelim =
            PrelimEstimates::from_images(Array2::from_elem((n, n), 40.0), Array2::from_elem((n, n), 0.8)).unwrap();
        (prelim, ImpulseModel::new(50.0, 9.0, 0.005).unwrap())
    }

    #[test]
    fn constant_scene_stays_constant_in_depth_and_symmetric_in_reflectivity() {
        let (prelim, irf) = constant_problem(5);
        let init = SceneImages::from_prelim(&prelim);
        let (out, trace) = run_cda(&prelim, &irf, &CdaConfig::new(1.0, 2.0), &init).unwrap();
        let t0 = out.t[(0, 0)];
        assert!(out.t.iter().all(|&t| ((t - t0) / t0).abs() < 1e-6));
        // the gamma MRF only sees the lattice border: r is mirror-symmetric
        for ((i, j), &r) in out.r.indexed_iter() {
            assert_relative_eq!(r, out.r[(4 - i, j)], max_relative = 1e-12);
            assert_relative_eq!(r, out.r[(i, 4 - j)], max_relative = 1e-12);
            assert_relative_eq!(r, out.r[(j, i)], max_relative = 1e-12);
        }
        assert!(trace.termination == Termination::Converged);
    }

    #[test]
    fn cost_trace_is_monotone() {
        let prelim = PrelimEstimates::from_images(
            array![[30.0, 31.0, 45.0], [29.0, 0.0, 44.0], [30.0, 33.0, 46.0]],
            array![[0.3, 0.5, 0.2], [0.4, 0.0, 0.3], [0.6, 0.1, 0.4]],
        )
        .unwrap();
        let irf = ImpulseModel::new(20.0, 4.0, 0.01).unwrap();
        let cfg = CdaConfig {
            delta: 1e-12,
            n_max: 40,
            ..CdaConfig::new(0.5, 1.5)
        };
        let (out, trace) = run_cda(&prelim, &irf, &cfg, &SceneImages::from_prelim(&prelim)).unwrap();
        for w in trace.costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        assert!(out.t.iter().all(|&t| t >= 0.0));
        assert!(out.r.iter().chain(out.w.iter()).all(|&v| v > 0.0));
    }

    #[test]
    fn restart_from_a_fixed_point_stops_immediately() {
        let (prelim, irf) = constant_problem(3);
        let tight = CdaConfig {
            delta: 1e-15,
            n_max: 200,
            admm: AdmmConfig {
                primal_tol: 1e-11,
                max_iters: 5000,
                ..AdmmConfig::default()
            },
            ..CdaConfig::new(0.5, 3.0)
        };
        let (fixed, _) = run_cda(&prelim, &irf, &tight, &SceneImages::from_prelim(&prelim)).unwrap();
        let (again, trace) = run_cda(&prelim, &irf, &CdaConfig::new(0.5, 3.0), &fixed).unwrap();
        assert_eq!(trace.iterations, 1);
        for (a, b) in again.t.iter().chain(again.r.iter()).zip(fixed.t.iter().chain(fixed.r.iter())) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn default_start_uses_rho1() {
        let (prelim, _) = constant_problem(2);
        let init = SceneImages::from_prelim(&prelim);
        assert_eq!(init.w, rho1_image(&init.r));
    }
}
