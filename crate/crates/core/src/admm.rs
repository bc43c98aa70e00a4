//! Depth sub-problem: minimize
//!
//! ```text
//! C(t) = sum_{Omega} [ a (t - t_ml0 + alpha sigma^2)^2 / 2 + c2 r e^{-alpha t} ]
//!        + eta TV(t) + i_{R+}(t),            a = c2 r_ml0 / sigma^2
//! ```
//!
//! with the split `g1(K t) + g2(D t) + g3(t)`: `K` selects the non-empty
//! pixels, `D` is the edge-difference operator of the 4-neighbor grid and
//! `g3` the nonnegative-orthant indicator. Every iteration solves
//! `M t = K'xi1 + D'xi2 + xi3` with `M = I + K'K + D'D`, then applies the
//! three proximal maps and the scaled dual updates.

use crate::error::{invalid, Error, Result};
use crate::model::{ImpulseModel, PrelimEstimates};
use crate::par;
use crate::priors::{tv, tv_edges, TvPrior};
use crate::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    /// Augmented-Lagrangian weight.
    pub mu: f64,
    pub max_iters: usize,
    /// Stop once every split residual `|H_j t - u_j|` and every split
    /// variable change is below this (sup norm).
    pub primal_tol: f64,
    /// Newton iterations per `g1` proximal step.
    pub newton_iters: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            mu: 1.0,
            max_iters: 500,
            primal_tol: 1e-6,
            newton_iters: 20,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.primal_tol > 0.0) {
            return Err(invalid("primal_tol must be positive"));
        }
        if self.max_iters == 0 || self.newton_iters == 0 {
            return Err(invalid("iteration limits must be positive"));
        }
        Ok(())
    }
}

/// Likelihood term of one non-empty pixel, `a/2 (m - center)^2 + b e^{-alpha m}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelTerm {
    /// `c2 r_ml0 / sigma^2`.
    pub a: f64,
    /// `t_ml0 - alpha sigma^2`.
    pub center: f64,
    /// `c2 r`.
    pub b: f64,
    pub alpha: f64,
}

impl PixelTerm {
    pub fn new(t_ml0: f64, r_ml0: f64, r: f64, irf: &ImpulseModel) -> Self {
        PixelTerm {
            a: irf.c2 * r_ml0 / irf.sigma2,
            center: t_ml0 - irf.alpha * irf.sigma2,
            b: irf.c2 * r,
            alpha: irf.alpha,
        }
    }

    #[inline]
    pub fn value(&self, m: f64) -> f64 {
        let d = m - self.center;
        0.5 * self.a * d * d + self.b * (-self.alpha * m).exp()
    }

    #[inline]
    pub fn derivative(&self, m: f64) -> f64 {
        self.a * (m - self.center) - self.alpha * self.b * (-self.alpha * m).exp()
    }

    #[inline]
    pub fn second_derivative(&self, m: f64) -> f64 {
        self.a + self.alpha * self.alpha * self.b * (-self.alpha * m).exp()
    }

    /// Derivative of the prox objective `mu/2 (m - v)^2 + value(m)`.
    #[inline]
    pub fn prox_derivative(&self, m: f64, v: f64, mu: f64) -> f64 {
        mu * (m - v) + self.derivative(m)
    }
}

/// `argmin_m mu/2 (m - v)^2 + g1(m)` by safeguarded Newton.
///
/// The objective gradient is increasing and concave in `m`; the root lies in
/// `[m0, m0 + alpha b e^{-alpha m0} / (mu + a)]` where `m0` solves the
/// quadratic part alone. Newton iterates from `m0` stay inside that bracket
/// and steps that would leave it are replaced by bisection.
pub fn prox_g1(v: f64, term: &PixelTerm, mu: f64, max_iters: usize) -> f64 {
    let m0 = (mu * v + term.a * term.center) / (mu + term.a);
    if term.alpha == 0.0 || term.b == 0.0 {
        return m0;
    }
    let mut lo = m0;
    let mut hi = m0 + term.alpha * term.b * (-term.alpha * m0).exp() / (mu + term.a);
    let mut m = m0;
    for _ in 0..max_iters.max(1) * 4 {
        let g = term.prox_derivative(m, v, mu);
        if g.abs() < 1e-10 {
            break;
        }
        if g < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let h = mu + term.second_derivative(m);
        let mut next = m - g / h;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - m).abs() <= 1e-15 * m.abs().max(1.0) {
            m = next;
            break;
        }
        m = next;
    }
    m
}

/// Soft threshold `sign(v) max(|v| - eta/mu, 0)`.
#[inline]
pub fn prox_g2(v: f64, eta: f64, mu: f64) -> f64 {
    let k = eta / mu;
    if v > k {
        v - k
    } else if v < -k {
        v + k
    } else {
        0.0
    }
}

/// Projection onto the nonnegative reals.
#[inline]
pub fn prox_g3(v: f64) -> f64 {
    v.max(0.0)
}

/// The coupled system `M = I + K'K + D'D` of one pixel grid.
#[derive(Clone, Debug)]
pub struct MSystem {
    nr: usize,
    nc: usize,
    observed: Vec<bool>,
    diag: Vec<f64>,
}

/// CG target: relative residual of every `M` solve.
pub const M_SOLVE_TOL: f64 = 1e-10;

impl MSystem {
    pub fn new(mask: &ndarray::Array2<bool>) -> Self {
        let (nr, nc) = mask.dim();
        let observed: Vec<bool> = mask.iter().copied().collect();
        let diag = (0..nr * nc)
            .map(|p| {
                let (i, j) = (p / nc, p % nc);
                let deg = (i > 0) as usize + (i + 1 < nr) as usize + (j > 0) as usize + (j + 1 < nc) as usize;
                1.0 + observed[p] as u8 as f64 + deg as f64
            })
            .collect();
        MSystem {
            nr,
            nc,
            observed,
            diag,
        }
    }

    pub fn len(&self) -> usize {
        self.nr * self.nc
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `M x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (nr, nc) = (self.nr, self.nc);
        (0..nr * nc)
            .map(|p| {
                let (i, j) = (p / nc, p % nc);
                let mut s = self.diag[p] * x[p];
                if i > 0 {
                    s -= x[p - nc];
                }
                if i + 1 < nr {
                    s -= x[p + nc];
                }
                if j > 0 {
                    s -= x[p - 1];
                }
                if j + 1 < nc {
                    s -= x[p + 1];
                }
                s
            })
            .collect()
    }

    /// Solves `M x = rhs` by Jacobi-preconditioned conjugate gradients,
    /// starting from `x` and overwriting it.
    pub fn solve_into(&self, rhs: &[f64], x: &mut [f64]) -> Result<usize> {
        let n = self.len();
        let rhs_norm = dot(rhs, rhs).sqrt();
        if rhs_norm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(0);
        }
        let mx = self.apply(x);
        let mut r: Vec<f64> = rhs.iter().zip(&mx).map(|(b, m)| b - m).collect();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iters = 10 * n + 100;
        for it in 0..max_iters {
            let res = dot(&r, &r).sqrt() / rhs_norm;
            if res < M_SOLVE_TOL {
                return Ok(it);
            }
            let mp = self.apply(&p);
            let pmp = dot(&p, &mp);
            if !(pmp > 0.0) || !pmp.is_finite() {
                return Err(Error::SolverBreakdown {
                    iterations: it,
                    residual: res,
                });
            }
            let step = rz / pmp;
            for k in 0..n {
                x[k] += step * p[k];
                r[k] -= step * mp[k];
            }
            for k in 0..n {
                z[k] = r[k] / self.diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::SolverBreakdown {
            iterations: max_iters,
            residual: dot(&r, &r).sqrt() / rhs_norm,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; rhs.len()];
        self.solve_into(rhs, &mut x)?;
        Ok(x)
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }
}

// Sequential on purpose: summation order must not depend on the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The depth cost `C(t)` with its data precomputed.
#[derive(Clone, Debug)]
pub struct DepthProblem {
    dim: (usize, usize),
    /// `Some` on non-empty pixels.
    terms: Vec<Option<PixelTerm>>,
    pub eta: f64,
}

impl DepthProblem {
    pub fn new(prelim: &PrelimEstimates, r: &Image, irf: &ImpulseModel, eta: f64) -> Result<Self> {
        let dim = prelim.dim();
        if r.dim() != dim || prelim.r.dim() != dim || prelim.mask.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "preliminary estimates {:?} vs reflectivity {:?}",
                dim,
                r.dim()
            )));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid(format!("eta must be nonnegative, got {eta}")));
        }
        let mut terms = Vec::with_capacity(dim.0 * dim.1);
        for ((idx, &k), &rv) in prelim.mask.indexed_iter().zip(r.iter()) {
            if !(rv > 0.0 && rv.is_finite()) {
                return Err(invalid(format!("reflectivity must be positive, got {rv} at {idx:?}")));
            }
            if k {
                let (t_ml0, r_ml0) = (prelim.t[idx], prelim.r[idx]);
                if !(r_ml0 > 0.0 && t_ml0.is_finite()) {
                    return Err(invalid(format!(
                        "non-empty pixel {idx:?} needs r_ml0 > 0 and a finite t_ml0"
                    )));
                }
                terms.push(Some(PixelTerm::new(t_ml0, r_ml0, rv, irf)));
            } else {
                terms.push(None);
            }
        }
        Ok(DepthProblem { dim, terms, eta })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.dim
    }

    pub fn term(&self, idx: (usize, usize)) -> Option<&PixelTerm> {
        self.terms[idx.0 * self.dim.1 + idx.1].as_ref()
    }

    /// `C(t)`; infinite if any depth is negative.
    pub fn cost(&self, t: &Image) -> f64 {
        if t.iter().any(|&v| v < 0.0) {
            return f64::INFINITY;
        }
        self.data_cost(t) + self.eta * tv(t)
    }

    /// Likelihood part of `C(t)` alone.
    pub fn data_cost(&self, t: &Image) -> f64 {
        self.terms
            .iter()
            .zip(t.iter())
            .filter_map(|(term, &v)| term.map(|p| p.value(v)))
            .sum()
    }
}

/// Outcome of one depth solve.
#[derive(Clone, Debug)]
pub struct DepthSolution {
    pub t: Image,
    pub cost: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// The (projected) starting point had a lower cost than the ADMM iterate
    /// and was returned instead.
    pub kept_initial: bool,
}

/// Minimizes `C(t)` starting from `t0`.
///
/// The returned depth is nonnegative and never costs more than the projected
/// starting point. Hitting `max_iters` is not an error: the last iterate is
/// returned with `converged == false` and its residuals.
pub fn solve_depth(
    prelim: &PrelimEstimates,
    r: &Image,
    irf: &ImpulseModel,
    prior: TvPrior,
    cfg: &AdmmConfig,
    t0: &Image,
) -> Result<DepthSolution> {
    cfg.validate()?;
    let problem = DepthProblem::new(prelim, r, irf, prior.eta)?;
    if t0.dim() != problem.dim {
        return Err(Error::DimensionMismatch(format!(
            "initial depth {:?} vs image {:?}",
            t0.dim(),
            problem.dim
        )));
    }
    if t0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial depth must be finite"));
    }
    let t_start = t0.mapv(prox_g3);
    let (nr, nc) = problem.dim;
    let n = nr * nc;
    let mu = cfg.mu;
    let system = MSystem::new(&prelim.mask);
    let edges = tv_edges(nr, nc);
    let observed: Vec<usize> = (0..n).filter(|&p| system.observed[p]).collect();
    let terms: Vec<PixelTerm> = observed
        .iter()
        .map(|&p| problem.terms[p].expect("observed pixel"))
        .collect();

    let mut t: Vec<f64> = t_start.iter().copied().collect();
    let diff = |t: &[f64]| -> Vec<f64> { edges.iter().map(|&(a, b)| t[a] - t[b]).collect() };
    let mut u1: Vec<f64> = observed.iter().map(|&p| t[p]).collect();
    let mut u2 = diff(&t);
    let mut u3 = t.clone();
    let mut d1 = vec![0.0; u1.len()];
    let mut d2 = vec![0.0; u2.len()];
    let mut d3 = vec![0.0; n];

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut rhs = vec![0.0; n];
    while iterations < cfg.max_iters {
        iterations += 1;
        // rhs = K'(u1 + d1) + D'(u2 + d2) + (u3 + d3)
        for p in 0..n {
            rhs[p] = u3[p] + d3[p];
        }
        for (q, &p) in observed.iter().enumerate() {
            rhs[p] += u1[q] + d1[q];
        }
        for (e, &(a, b)) in edges.iter().enumerate() {
            let xi = u2[e] + d2[e];
            rhs[a] += xi;
            rhs[b] -= xi;
        }
        system.solve_into(&rhs, &mut t)?;

        let dt = diff(&t);
        let new_u1 = par::map_slice(&terms, |q, term| {
            prox_g1(t[observed[q]] - d1[q], term, mu, cfg.newton_iters)
        });
        let new_u2: Vec<f64> = dt.iter().zip(&d2).map(|(&v, &d)| prox_g2(v - d, prior.eta, mu)).collect();
        let new_u3: Vec<f64> = t.iter().zip(&d3).map(|(&v, &d)| prox_g3(v - d)).collect();

        primal = 0.0;
        dual = 0.0;
        for (q, &p) in observed.iter().enumerate() {
            let res = t[p] - new_u1[q];
            d1[q] -= res;
            primal = primal.max(res.abs());
            dual = dual.max((new_u1[q] - u1[q]).abs());
        }
        for e in 0..edges.len() {
            let res = dt[e] - new_u2[e];
            d2[e] -= res;
            primal = primal.max(res.abs());
            dual = dual.max((new_u2[e] - u2[e]).abs());
        }
        for p in 0..n {
            let res = t[p] - new_u3[p];
            d3[p] -= res;
            primal = primal.max(res.abs());
            dual = dual.max((new_u3[p] - u3[p]).abs());
        }
        u1 = new_u1;
        u2 = new_u2;
        u3 = new_u3;
        if !(primal.is_finite() && dual.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                what: "ADMM residual".into(),
            });
        }
        if primal < cfg.primal_tol && dual < cfg.primal_tol {
            converged = true;
            break;
        }
    }

    let t_img = Image::from_shape_vec((nr, nc), t.into_iter().map(prox_g3).collect())
        .expect("shape");
    let cost = problem.cost(&t_img);
    let start_cost = problem.cost(&t_start);
    let (t_out, cost, kept_initial) = if start_cost < cost {
        (t_start, start_cost, true)
    } else {
        (t_img, cost, false)
    };
    Ok(DepthSolution {
        t: t_out,
        cost,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
        kept_initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    fn term(a: f64, t_ml0: f64, b: f64, alpha: f64, sigma2: f64) -> PixelTerm {
        PixelTerm {
            a,
            center: t_ml0 - alpha * sigma2,
            b,
            alpha,
        }
    }

    #[test]
    fn prox_g1_quadratic_cases() {
        let p = term(1.0, 2.0, 5.0, 0.0, 1.0);
        assert_eq!(prox_g1(4.0, &p, 1.0, 20), 3.0);
        let p = term(2.5, 7.0, 1.0, 0.0, 1.0);
        let v = -3.0;
        assert_relative_eq!(prox_g1(v, &p, 0.7, 20), (2.5 * 7.0 + 0.7 * v) / (2.5 + 0.7));
    }

    #[test]
    fn prox_g1_matches_bisection() {
        // a = 1, mu = 1, c2 r = 100, t_ml0 = 100, v = 100, alpha = 0.01
        let p = term(1.0, 100.0, 100.0, 0.01, 1.0);
        let m = prox_g1(100.0, &p, 1.0, 20);
        let g = |m: f64| p.prox_derivative(m, 100.0, 1.0);
        let (mut lo, mut hi) = (0.0f64, 200.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((m - 0.5 * (lo + hi)).abs() < 1e-8, "{m} vs {lo}");
        assert!(g(m).abs() < 1e-10);
    }

    #[test]
    fn prox_g2_examples() {
        assert_eq!(prox_g2(2.0, 1.0, 1.0), 1.0);
        assert_eq!(prox_g2(0.5, 1.0, 1.0), 0.0);
        assert_eq!(prox_g2(-3.0, 2.0, 4.0), -2.5);
    }

    #[test]
    fn prox_g3_examples() {
        assert_eq!(prox_g3(-0.5), 0.0);
        assert_eq!(prox_g3(7.0), 7.0);
        let v: Vec<f64> = [-1.0, 0.0, 2.0].iter().map(|&x| prox_g3(x)).collect();
        assert_eq!(v, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn m_system_examples() {
        let sys = MSystem::new(&Array2::from_elem((1, 1), false));
        assert_eq!(sys.solve(&[3.5]).unwrap(), vec![3.5]);

        let sys = MSystem::new(&Array2::from_elem((1, 2), true));
        assert_eq!(sys.apply(&[1.0, 0.0]), vec![3.0, -1.0]);
        assert_eq!(sys.apply(&[0.0, 1.0]), vec![-1.0, 3.0]);
        let x = sys.solve(&[2.0, 2.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(x[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn k_transpose_k_is_the_mask() {
        let mask = array![[true, false], [false, true]];
        let sys = MSystem::new(&mask);
        // M - I - D'D applied to unit vectors recovers diag(k)
        let lap_only = MSystem::new(&Array2::from_elem((2, 2), false));
        for p in 0..4 {
            let mut e = vec![0.0; 4];
            e[p] = 1.0;
            let a = sys.apply(&e);
            let b = lap_only.apply(&e);
            let col: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            for (q, v) in col.iter().enumerate() {
                let expected = if p == q && sys.observed()[p] { 1.0 } else { 0.0 };
                assert_eq!(*v, expected);
            }
        }
    }

    fn one_pixel(t_ml0: f64, r_ml0: f64) -> PrelimEstimates {
        PrelimEstimates::from_images(array![[t_ml0]], array![[r_ml0]]).unwrap()
    }

    #[test]
    fn single_pixel_without_attenuation() {
        let irf = ImpulseModel::new(1.0, 4.0, 0.0).unwrap();
        let prelim = one_pixel(42.0, 3.0);
        let r = array![[1.0]];
        let sol = solve_depth(&prelim, &r, &irf, TvPrior::new(0.0).unwrap(), &AdmmConfig::default(), &array![[5.0]]).unwrap();
        assert!(sol.converged);
        assert!((sol.t[(0, 0)] - 42.0).abs() < 1e-5);
    }

    #[test]
    fn single_pixel_with_attenuation_matches_golden_section() {
        let irf = ImpulseModel::new(20.0, 9.0, 0.02).unwrap();
        let prelim = one_pixel(30.0, 0.4);
        let r = array![[0.8]];
        let cfg = AdmmConfig {
            primal_tol: 1e-10,
            max_iters: 10_000,
            ..AdmmConfig::default()
        };
        let sol = solve_depth(&prelim, &r, &irf, TvPrior::new(0.0).unwrap(), &cfg, &array![[1.0]]).unwrap();
        let p = PixelTerm::new(30.0, 0.4, 0.8, &irf);
        // golden-section search on the scalar cost
        let (mut lo, mut hi) = (0.0f64, 100.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if p.value(x1) < p.value(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((sol.t[(0, 0)] - oracle).abs() < 1e-6, "{} vs {oracle}", sol.t[(0, 0)]);
        // first-order condition
        let a = irf.c2 * 0.4 / irf.sigma2;
        let t = sol.t[(0, 0)];
        let lhs = a * (t - 30.0 + irf.alpha * irf.sigma2);
        let rhs = irf.alpha * irf.c2 * 0.8 * (-irf.alpha * t).exp();
        assert!((lhs - rhs).abs() < 1e-6 * rhs.abs().max(1.0));
    }

    #[test]
    fn returned_depth_is_feasible_and_no_worse_than_start() {
        let irf = ImpulseModel::new(5.0, 2.0, 0.0).unwrap();
        let t = array![[1.0, 3.0, 2.0], [1.5, 1.0, 4.0]];
        let r_ml0 = array![[0.5, 0.0, 1.0], [0.2, 0.8, 0.0]];
        let prelim = PrelimEstimates::from_images(t, r_ml0).unwrap();
        let r = Array2::from_elem((2, 3), 0.7);
        let t0 = array![[-2.0, 9.0, 0.0], [3.0, 3.0, 3.0]];
        let sol = solve_depth(&prelim, &r, &irf, TvPrior::new(0.5).unwrap(), &AdmmConfig::default(), &t0).unwrap();
        assert!(sol.t.iter().all(|&v| v >= 0.0));
        let problem = DepthProblem::new(&prelim, &r, &irf, 0.5).unwrap();
        assert!(problem.cost(&sol.t) <= problem.cost(&t0.mapv(prox_g3)));
        // empty pixels are pulled to their neighbours by TV alone
        assert!(sol.t[(0, 1)] >= 1.0 - 1e-3 && sol.t[(0, 1)] <= 2.0 + 1e-3);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let irf = ImpulseModel::new(5.0, 2.0, 0.0).unwrap();
        let prelim = one_pixel(3.0, 1.0);
        let cfg = AdmmConfig::default();
        let eta = TvPrior::new(1.0).unwrap();
        assert!(solve_depth(&prelim, &array![[0.0]], &irf, eta, &cfg, &array![[1.0]]).is_err());
        assert!(solve_depth(&prelim, &array![[1.0]], &irf, eta, &cfg, &array![[f64::NAN]]).is_err());
        assert!(solve_depth(&prelim, &array![[1.0, 1.0]], &irf, eta, &cfg, &array![[1.0]]).is_err());
        let bad = AdmmConfig { mu: 0.0, ..cfg };
        assert!(solve_depth(&prelim, &array![[1.0]], &irf, eta, &bad, &array![[1.0]]).is_err());
    }

    #[test]
    fn non_convergence_is_reported_not_raised() {
        let irf = ImpulseModel::new(5.0, 2.0, 0.01).unwrap();
        let prelim = PrelimEstimates::from_images(
            array![[1.0, 30.0], [12.0, 4.0]],
            array![[1.0, 0.3, 2.0, 0.1]].into_shape_with_order((2, 2)).unwrap(),
        )
        .unwrap();
        let r = Array2::from_elem((2, 2), 1.0);
        let cfg = AdmmConfig {
            max_iters: 2,
            ..AdmmConfig::default()
        };
        let sol = solve_depth(&prelim, &r, &irf, TvPrior::new(2.0).unwrap(), &cfg, &r).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!(sol.primal_residual.is_finite());
    }
}
