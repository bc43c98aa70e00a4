//! Adaptive Metropolis-within-Gibbs sampling of `(t, r, w)` with
//! stochastic-approximation estimates of the MRF couplings `eta`, `zeta`.
//!
//! One iteration is a checkerboard MH sweep on depth, a Gibbs sweep on
//! reflectivity, then one on the auxiliary field. During burn-in the
//! per-pixel proposal scales and the two hyperparameters adapt; afterwards
//! everything is frozen and the chain is averaged for the MMSE estimates.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::admm::PixelTerm;
use crate::cda::{aux_conditional, neg_log_posterior, ReflectivityConditional};
use crate::error::{invalid, Error, Result};
use crate::model::{ImpulseModel, PrelimEstimates, SceneImages};
use crate::par;
use crate::priors::{dual_shape, gmrf_potential, local_tv, rho2, tv, ETA_MAX, ZETA_MAX, ZETA_MIN};
use crate::rng::{Purpose, StreamKey};
use crate::Image;

/// Lower bound of the `zeta` projection; keeps every reflectivity shape
/// above one.
pub const ZETA_FLOOR: f64 = 0.26;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McmcConfig {
    /// Burn-in iterations (adaptation on, samples discarded).
    pub n_bi: usize,
    /// Total iterations.
    pub n_mc: usize,
    pub eta0: f64,
    pub zeta0: f64,
    pub target_accept: f64,
    pub eta_max: f64,
    pub zeta_max: f64,
    pub seed: u64,
    /// Initial depth proposal standard deviation, bins.
    pub initial_step: f64,
    /// Estimate `eta`, `zeta` during burn-in; otherwise keep `eta0`, `zeta0`.
    pub adapt_hyperparams: bool,
    /// Keep every post-burn-in `(t, r)` sample in the result.
    pub keep_samples: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_bi: 1000,
            n_mc: 3000,
            eta0: 1.0,
            zeta0: 1.0,
            target_accept: 0.5,
            eta_max: ETA_MAX,
            zeta_max: ZETA_MAX,
            seed: 0,
            initial_step: 1.0,
            adapt_hyperparams: true,
            keep_samples: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.n_bi && self.n_bi < self.n_mc) {
            return Err(invalid(format!(
                "need 0 < n_bi < n_mc, got n_bi={} n_mc={}",
                self.n_bi, self.n_mc
            )));
        }
        if !(self.eta_max > 0.0 && self.eta_max <= ETA_MAX) {
            return Err(invalid(format!("eta_max must be in (0, {ETA_MAX}]")));
        }
        if !(self.zeta_max > ZETA_FLOOR && self.zeta_max <= ZETA_MAX) {
            return Err(invalid(format!("zeta_max must be in ({ZETA_FLOOR}, {ZETA_MAX}]")));
        }
        if !(0.0..=self.eta_max).contains(&self.eta0) {
            return Err(invalid(format!("eta0 must be in [0, {}]", self.eta_max)));
        }
        if !(self.zeta0 > ZETA_MIN && self.zeta0 <= self.zeta_max) {
            return Err(invalid(format!("zeta0 must be in ({ZETA_MIN}, {}]", self.zeta_max)));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(invalid("target_accept must be in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(invalid("initial_step must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub t: Image,
    pub r: Image,
    pub w: Image,
    pub eta: f64,
    pub zeta: f64,
    /// Per-pixel proposal standard deviation, bins.
    pub step: Image,
    /// Post-burn-in accepted depth moves per pixel.
    pub accepted: Array2<u64>,
    /// Post-burn-in depth sweeps.
    pub sweeps: u64,
    sum_t: Image,
    sum_r: Image,
    sum_w: Image,
    samples: usize,
}

impl ChainState {
    pub fn new(init: &SceneImages, eta: f64, zeta: f64, step: f64) -> Result<Self> {
        init.validate()?;
        let dim = init.dim();
        Ok(ChainState {
            t: init.t.clone(),
            r: init.r.clone(),
            w: init.w.clone(),
            eta,
            zeta,
            step: Array2::from_elem(dim, step),
            accepted: Array2::zeros(dim),
            sweeps: 0,
            sum_t: Array2::zeros(dim),
            sum_r: Array2::zeros(dim),
            sum_w: Array2::zeros(dual_shape(dim)),
            samples: 0,
        })
    }

    /// Adds the current state to the running sums.
    pub fn accumulate(&mut self) {
        self.sum_t += &self.t;
        self.sum_r += &self.r;
        self.sum_w += &self.w;
        self.samples += 1;
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Mean of the accumulated states.
    pub fn mmse(&self) -> Option<SceneImages> {
        if self.samples == 0 {
            return None;
        }
        let n = self.samples as f64;
        Some(SceneImages {
            t: self.sum_t.mapv(|v| v / n),
            r: self.sum_r.mapv(|v| v / n),
            w: self.sum_w.mapv(|v| v / n),
        })
    }

    /// Post-burn-in acceptance rate per pixel.
    pub fn acceptance(&self) -> Image {
        let n = self.sweeps.max(1) as f64;
        self.accepted.mapv(|a| a as f64 / n)
    }
}

/// MH decision for a depth proposal given the cost increase and a uniform
/// draw in `[0, 1)`.
#[inline]
pub fn mh_accept(proposal: f64, cost_increase: f64, u: f64) -> bool {
    proposal >= 0.0 && u.ln() < -cost_increase
}

fn depth_terms(prelim: &PrelimEstimates, r: &Image, irf: &ImpulseModel) -> Vec<Option<PixelTerm>> {
    prelim
        .mask
        .indexed_iter()
        .map(|(idx, &k)| k.then(|| PixelTerm::new(prelim.t[idx], prelim.r[idx], r[idx], irf)))
        .collect()
}

// Checkerboard MH sweep over `t`. Pixels of one color only interact through
// pixels of the other color, so each half-sweep reads a frozen `t`.
fn checkerboard_sweep(
    t: &mut Image,
    step: &Image,
    terms: Option<&[Option<PixelTerm>]>,
    eta: f64,
    seed: u64,
    purpose: Purpose,
    iteration: usize,
) -> Array2<bool> {
    let (nr, nc) = t.dim();
    let mut accepted = Array2::from_elem((nr, nc), false);
    for color in 0..2 {
        let sites: Vec<usize> = (0..nr * nc).filter(|p| (p / nc + p % nc) % 2 == color).collect();
        let key = StreamKey::new(seed, purpose, (2 * iteration + color) as u64);
        let frozen: &Image = t;
        let moves = par::map_slice(&sites, |_, &p| {
            let idx = (p / nc, p % nc);
            let mut rng = key.stream(p);
            let z: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.random();
            let cur = frozen[idx];
            let prop = cur + step[idx] * z;
            if prop < 0.0 {
                return None;
            }
            let mut delta = eta * (local_tv(frozen, idx, prop) - local_tv(frozen, idx, cur));
            if let Some(Some(term)) = terms.map(|ts| &ts[p]) {
                delta += term.value(prop) - term.value(cur);
            }
            mh_accept(prop, delta, u).then_some(prop)
        });
        for (&p, m) in sites.iter().zip(moves) {
            if let Some(v) = m {
                let idx = (p / nc, p % nc);
                t[idx] = v;
                accepted[idx] = true;
            }
        }
    }
    accepted
}

/// MH update of every depth pixel under the current `r`, `eta`. Returns the
/// per-pixel acceptance of this sweep.
pub fn mh_depth_sweep(
    state: &mut ChainState,
    prelim: &PrelimEstimates,
    irf: &ImpulseModel,
    seed: u64,
    iteration: usize,
) -> Array2<bool> {
    let terms = depth_terms(prelim, &state.r, irf);
    checkerboard_sweep(
        &mut state.t,
        &state.step,
        Some(&terms),
        state.eta,
        seed,
        Purpose::DepthProposal,
        iteration,
    )
}

fn draw_gamma<R: Rng>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters are positive")
        .sample(rng)
}

fn draw_reflectivity(
    r: &mut Image,
    w: &Image,
    zeta: f64,
    data: Option<(&PrelimEstimates, &ImpulseModel, &Image)>,
    key: StreamKey,
) {
    let (nr, nc) = r.dim();
    let v = par::map_indices(nr * nc, |p| {
        let idx = (p / nc, p % nc);
        let cond = match data {
            Some((prelim, irf, t)) => ReflectivityConditional::new(
                zeta,
                rho2(w, idx),
                irf.c2,
                prelim.k(idx),
                prelim.r[idx],
                irf.alpha,
                t[idx],
            ),
            None => ReflectivityConditional::new(zeta, rho2(w, idx), 0.0, 0.0, 0.0, 0.0, 0.0),
        };
        draw_gamma(cond.shape, cond.rate, &mut key.stream(p))
    });
    *r = Array2::from_shape_vec((nr, nc), v).expect("shape");
}

fn draw_aux(w: &mut Image, r: &Image, zeta: f64, key: StreamKey) {
    let (wr, wc) = w.dim();
    let v = par::map_indices(wr * wc, |q| {
        let cond = aux_conditional(r, (q / wc, q % wc), zeta);
        1.0 / draw_gamma(cond.shape, cond.scale, &mut key.stream(q))
    });
    *w = Array2::from_shape_vec((wr, wc), v).expect("shape");
}

/// Gibbs draw `r ~ G(4 zeta + c2 k r_ml0, 1 / beta)` at every pixel.
pub fn gibbs_reflectivity(
    state: &mut ChainState,
    prelim: &PrelimEstimates,
    irf: &ImpulseModel,
    seed: u64,
    iteration: usize,
) {
    let key = StreamKey::new(seed, Purpose::Reflectivity, iteration as u64);
    draw_reflectivity(&mut state.r, &state.w, state.zeta, Some((prelim, irf, &state.t)), key);
}

/// Gibbs draw `w ~ IG(deg zeta, zeta * sum of adjacent r)` at every dual site.
pub fn gibbs_aux(state: &mut ChainState, seed: u64, iteration: usize) {
    let key = StreamKey::new(seed, Purpose::Auxiliary, iteration as u64);
    draw_aux(&mut state.w, &state.r, state.zeta, key);
}

/// One prior-only MH sweep on depth from `t` (the TV-MRF kernel).
pub fn prior_depth_kernel(t: &Image, step: &Image, eta: f64, seed: u64, iteration: usize) -> Image {
    let mut out = t.clone();
    checkerboard_sweep(&mut out, step, None, eta, seed, Purpose::PriorDepth, iteration);
    out
}

/// One prior-only Gibbs sweep on `(r, w)` from `w` (the gamma-MRF kernel).
pub fn prior_reflectivity_kernel(r: &Image, w: &Image, zeta: f64, seed: u64, iteration: usize) -> (Image, Image) {
    let mut r1 = r.clone();
    let mut w1 = w.clone();
    draw_reflectivity(
        &mut r1,
        w,
        zeta,
        None,
        StreamKey::new(seed, Purpose::PriorReflectivity, iteration as u64),
    );
    draw_aux(&mut w1, &r1, zeta, StreamKey::new(seed, Purpose::PriorAuxiliary, iteration as u64));
    (r1, w1)
}

/// Sufficient statistics of one hyperparameter step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperGradient {
    /// `TV` of the current sample and of its prior-kernel image.
    pub tv_current: f64,
    pub tv_prior: f64,
    /// Gamma-MRF potential of the current sample and of its prior-kernel image.
    pub phi_current: f64,
    pub phi_prior: f64,
}

/// Projected stochastic-gradient step at (1-based) iteration `n`, step size
/// `n^-3/4`. Returns the new `(eta, zeta)`.
pub fn adapt_hyperparams(eta: f64, zeta: f64, g: &HyperGradient, n: usize, cfg: &McmcConfig) -> (f64, f64) {
    let rate = (n.max(1) as f64).powf(-0.75);
    let eta = (eta + rate * (g.tv_prior - g.tv_current)).clamp(0.0, cfg.eta_max);
    let zeta = (zeta + rate * (g.phi_current - g.phi_prior)).clamp(ZETA_FLOOR, cfg.zeta_max);
    (eta, zeta)
}

/// Per-iteration diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub eta: f64,
    pub zeta: f64,
    /// Negative log-posterior of the current state.
    pub cost: f64,
    /// Fraction of depth moves accepted in this sweep.
    pub acceptance: f64,
}

pub const TRACE_HEADER: &str = "iteration,eta,zeta,cost,acceptance";

/// Trace as comma-separated text with a header line.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.iteration, r.eta, r.zeta, r.cost, r.acceptance);
    }
    out
}

#[derive(Clone, Debug)]
pub struct McmcResult {
    /// Posterior means over the post-burn-in samples.
    pub mmse: SceneImages,
    pub eta: f64,
    pub zeta: f64,
    /// Post-burn-in acceptance rate per pixel.
    pub acceptance: Image,
    pub trace: Vec<TraceRow>,
    /// Post-burn-in `(t, r)` samples when `keep_samples` is set.
    pub samples: Vec<(Image, Image)>,
}

impl McmcResult {
    pub fn mean_acceptance(&self) -> f64 {
        self.acceptance.mean().unwrap_or(0.0)
    }
}

fn check_finite(state: &ChainState, iteration: usize) -> Result<()> {
    let bad_t = state.t.iter().any(|v| !v.is_finite());
    let bad_rw = state.r.iter().chain(state.w.iter()).any(|v| !(*v > 0.0 && v.is_finite()));
    if bad_t || bad_rw {
        return Err(Error::NonFinite {
            iteration,
            what: if bad_t { "depth sample" } else { "reflectivity or aux sample" }.into(),
        });
    }
    Ok(())
}

/// Runs the sampler from `init` for `cfg.n_mc` iterations.
pub fn run_mcmc(
    prelim: &PrelimEstimates,
    irf: &ImpulseModel,
    cfg: &McmcConfig,
    init: &SceneImages,
) -> Result<McmcResult> {
    cfg.validate()?;
    if init.dim() != prelim.dim() {
        return Err(Error::DimensionMismatch(format!(
            "initial images {:?} vs preliminary estimates {:?}",
            init.dim(),
            prelim.dim()
        )));
    }
    let mut state = ChainState::new(init, cfg.eta0, cfg.zeta0, cfg.initial_step)?;
    let seed = cfg.seed;
    let mut trace = Vec::with_capacity(cfg.n_mc);
    let mut samples = Vec::new();
    let n_pix = (prelim.dim().0 * prelim.dim().1) as f64;
    for n in 1..=cfg.n_mc {
        let accepted = mh_depth_sweep(&mut state, prelim, irf, seed, n);
        gibbs_reflectivity(&mut state, prelim, irf, seed, n);
        gibbs_aux(&mut state, seed, n);
        check_finite(&state, n)?;

        if n <= cfg.n_bi {
            let kappa = (n as f64).powf(-0.6);
            ndarray::Zip::from(&mut state.step).and(&accepted).for_each(|s, &a| {
                let acc = if a { 1.0 } else { 0.0 };
                *s *= (kappa * (acc - cfg.target_accept)).exp();
            });
            if cfg.adapt_hyperparams {
                let t1 = prior_depth_kernel(&state.t, &state.step, state.eta, seed, n);
                let (r1, w1) = prior_reflectivity_kernel(&state.r, &state.w, state.zeta, seed, n);
                let g = HyperGradient {
                    tv_current: tv(&state.t),
                    tv_prior: tv(&t1),
                    phi_current: gmrf_potential(&state.r, &state.w),
                    phi_prior: gmrf_potential(&r1, &w1),
                };
                (state.eta, state.zeta) = adapt_hyperparams(state.eta, state.zeta, &g, n, cfg);
            }
        } else {
            state.sweeps += 1;
            ndarray::Zip::from(&mut state.accepted)
                .and(&accepted)
                .for_each(|c, &a| *c += a as u64);
            state.accumulate();
            if cfg.keep_samples {
                samples.push((state.t.clone(), state.r.clone()));
            }
        }

        let images = SceneImages {
            t: state.t.clone(),
            r: state.r.clone(),
            w: state.w.clone(),
        };
        let cost = neg_log_posterior(&images, prelim, irf, state.eta, state.zeta)?;
        if !cost.is_finite() {
            return Err(Error::NonFinite {
                iteration: n,
                what: "posterior cost".into(),
            });
        }
        trace.push(TraceRow {
            iteration: n,
            eta: state.eta,
            zeta: state.zeta,
            cost,
            acceptance: accepted.iter().filter(|&&a| a).count() as f64 / n_pix,
        });
    }
    Ok(McmcResult {
        mmse: state.mmse().expect("n_mc > n_bi"),
        eta: state.eta,
        zeta: state.zeta,
        acceptance: state.acceptance(),
        trace,
        samples,
    })
}
