//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use lidar_restore::Image;

/// One non-empty pixel of the depth cost, written out from scratch.
#[derive(Clone, Copy, Debug)]
pub struct DepthPixel {
    pub t_ml0: f64,
    pub r_ml0: f64,
    pub r: f64,
}

#[derive(Clone, Debug)]
pub struct DepthInstance {
    pub nr: usize,
    pub nc: usize,
    pub pixels: Vec<DepthPixel>,
    pub c2: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub eta: f64,
}

impl DepthInstance {
    fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for i in 0..self.nr {
            for j in 0..self.nc {
                let p = i * self.nc + j;
                if j + 1 < self.nc {
                    e.push((p, p + 1));
                }
                if i + 1 < self.nr {
                    e.push((p, p + self.nc));
                }
            }
        }
        e
    }

    fn pixel_value(&self, px: &DepthPixel, t: f64) -> f64 {
        let a = self.c2 * px.r_ml0 / self.sigma2;
        let d = t - px.t_ml0 + self.alpha * self.sigma2;
        0.5 * a * d * d + self.c2 * px.r * (-self.alpha * t).exp()
    }

    fn pixel_slope(&self, px: &DepthPixel, t: f64) -> f64 {
        let a = self.c2 * px.r_ml0 / self.sigma2;
        a * (t - px.t_ml0 + self.alpha * self.sigma2) - self.alpha * self.c2 * px.r * (-self.alpha * t).exp()
    }

    pub fn cost(&self, t: &[f64]) -> f64 {
        if t.iter().any(|&v| v < 0.0) {
            return f64::INFINITY;
        }
        let data: f64 = self.pixels.iter().zip(t).map(|(px, &v)| self.pixel_value(px, v)).sum();
        let tv: f64 = self.edges().iter().map(|&(a, b)| (t[a] - t[b]).abs()).sum();
        data + self.eta * tv
    }

    // argmin_{t >= 0} pixel_value(t) + c t, by bisection on the slope.
    fn pixel_argmin(&self, px: &DepthPixel, c: f64) -> f64 {
        let g = |t: f64| self.pixel_slope(px, t) + c;
        if g(0.0) >= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while g(hi) < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Accelerated projected gradient ascent on the TV dual
    /// `max_{|p| <= eta} min_{t >= 0} sum g(t) + p' D t`. Returns the primal
    /// point and the final duality gap, a certificate of its suboptimality.
    pub fn dual_oracle(&self, max_iters: usize, gap_tol: f64) -> (Vec<f64>, f64) {
        let edges = self.edges();
        let n = self.pixels.len();
        let a_min = self
            .pixels
            .iter()
            .map(|px| self.c2 * px.r_ml0 / self.sigma2)
            .fold(f64::INFINITY, f64::min);
        let step = a_min / 8.0;
        let primal = |p: &[f64]| -> Vec<f64> {
            let mut dtp = vec![0.0; n];
            for (e, &(a, b)) in edges.iter().enumerate() {
                dtp[a] += p[e];
                dtp[b] -= p[e];
            }
            self.pixels.iter().zip(&dtp).map(|(px, &c)| self.pixel_argmin(px, c)).collect()
        };
        let gap_of = |p: &[f64], t: &[f64]| -> f64 {
            edges
                .iter()
                .zip(p)
                .map(|(&(a, b), &pe)| {
                    let d = t[a] - t[b];
                    self.eta * d.abs() - pe * d
                })
                .sum()
        };
        let mut p = vec![0.0; edges.len()];
        let mut y = p.clone();
        let mut theta = 1.0f64;
        let mut best = (primal(&p), f64::INFINITY);
        for _ in 0..max_iters {
            let t = primal(&y);
            let next: Vec<f64> = edges
                .iter()
                .zip(&y)
                .map(|(&(a, b), &ye)| (ye + step * (t[a] - t[b])).clamp(-self.eta, self.eta))
                .collect();
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let mom = (theta - 1.0) / theta_next;
            y = next.iter().zip(&p).map(|(n, o)| n + mom * (n - o)).collect();
            p = next;
            theta = theta_next;
            let tp = primal(&p);
            let gap = gap_of(&p, &tp);
            if gap < best.1 {
                best = (tp, gap);
            }
            if best.1 < gap_tol {
                break;
            }
        }
        best
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

/// Normalized density `exp(-cost)` on `[0, upper]`, tabulated by the
/// trapezoid rule on `cells` cells.
pub struct Quadrature {
    h: f64,
    cdf: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl Quadrature {
    pub fn new(cost: impl Fn(f64) -> f64, upper: f64, cells: usize) -> Self {
        let h = upper / cells as f64;
        let grid: Vec<f64> = (0..=cells).map(|k| k as f64 * h).collect();
        let c_min = grid.iter().map(|&x| cost(x)).fold(f64::INFINITY, f64::min);
        let dens: Vec<f64> = grid.iter().map(|&x| (c_min - cost(x)).exp()).collect();
        let mut cdf = vec![0.0; cells + 1];
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..cells {
            cdf[k + 1] = cdf[k] + 0.5 * h * (dens[k] + dens[k + 1]);
            m1 += 0.5 * h * (grid[k] * dens[k] + grid[k + 1] * dens[k + 1]);
            m2 += 0.5 * h * (grid[k] * grid[k] * dens[k] + grid[k + 1] * grid[k + 1] * dens[k + 1]);
        }
        let z = cdf[cells];
        let mean = m1 / z;
        Quadrature {
            h,
            cdf: cdf.iter().map(|c| c / z).collect(),
            mean,
            variance: m2 / z - mean * mean,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let k = (x / self.h) as usize;
        if k + 1 >= self.cdf.len() {
            return 1.0;
        }
        let f = x / self.h - k as f64;
        self.cdf[k] + f * (self.cdf[k + 1] - self.cdf[k])
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Image from a flat row-major vector.
pub fn image(nr: usize, nc: usize, v: Vec<f64>) -> Image {
    Image::from_shape_vec((nr, nc), v).unwrap()
}
