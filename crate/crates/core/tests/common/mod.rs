//! Independent reference implementations used as oracles by the
//! integration and acceptance tests. None of these call into the
//! library's value-function code.

#![allow(dead_code)]

use gauss_quad::GaussLegendre;
use storage_bounds::price::MarkovPriceModel;
use storage_bounds::system::Storage;

/// Linear interpolation by segment scan; +∞ below the grid, −∞ above.
pub fn lerp(grid: &[f64], vals: &[f64], x: f64) -> f64 {
    let lo = grid[0];
    let hi = *grid.last().unwrap();
    let tol = 1e-12 * (hi - lo).abs().max(1.0);
    if x < lo - tol {
        return f64::INFINITY;
    }
    if x > hi + tol {
        return f64::NEG_INFINITY;
    }
    let x = x.clamp(lo, hi);
    for k in 0..grid.len() - 1 {
        if x <= grid[k + 1] {
            let w = (x - grid[k]) / (grid[k + 1] - grid[k]);
            return (1.0 - w) * vals[k] + w * vals[k + 1];
        }
    }
    *vals.last().unwrap()
}

/// Stage marginal in min/max form: charging clamps the marginal between
/// v(e + P̄η) and v(e); discharging, allowed only above the [v(e)/η + M]⁺
/// trigger, raises it toward v(e − P̄/η).
pub fn q_minmax(v: &dyn Fn(f64) -> f64, e: f64, lambda: f64, s: &Storage) -> f64 {
    let (p, eta, m) = (s.p_max, s.efficiency, s.marginal_cost);
    let charge = v(e).min(v(e + p * eta).max(lambda / eta));
    let trigger = (v(e) / eta + m).max(0.0);
    if lambda > trigger {
        charge.max(v(e - p / eta).min((lambda - m) * eta))
    } else {
        charge
    }
}

/// Exhaustive backward enumeration of the marginal value slice at (t, j)
/// on every grid point; recomputes every subtree with no memoization.
pub fn enumerate_slice(model: &MarkovPriceModel, s: &Storage, grid: &[f64], terminal: &[f64], t: usize, j: usize) -> Vec<f64> {
    let t_len = model.grids.len();
    if t == t_len - 1 {
        return terminal.to_vec();
    }
    let mut out = vec![0.0; grid.len()];
    for (jn, w) in model.transitions[t][j].iter().enumerate() {
        let next = enumerate_slice(model, s, grid, terminal, t + 1, jn);
        let lambda = model.grids[t + 1][jn];
        let v = |x: f64| lerp(grid, &next, x);
        for (k, e) in grid.iter().enumerate() {
            out[k] += w * q_minmax(&v, *e, lambda, s);
        }
    }
    out
}

/// Concave piecewise-linear function on [x0, x0 + Σ len].
#[derive(Clone, Debug)]
pub struct Concave {
    pub x0: f64,
    pub y0: f64,
    /// (length, slope), slopes non-increasing.
    pub segs: Vec<(f64, f64)>,
}

impl Concave {
    pub fn constant(lo: f64, hi: f64, y: f64) -> Self {
        Concave { x0: lo, y0: y, segs: vec![(hi - lo, 0.0)] }
    }

    pub fn end(&self) -> f64 {
        self.x0 + self.segs.iter().map(|s| s.0).sum::<f64>()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut xc = self.x0;
        let mut y = self.y0;
        for &(len, slope) in &self.segs {
            let step = (x - xc).clamp(0.0, len);
            y += slope * step;
            xc += len;
            if x <= xc {
                break;
            }
        }
        y
    }

    /// (left slope, right slope) at x; −∞/+∞ past the domain ends.
    pub fn slopes(&self, x: f64, tol: f64) -> (f64, f64) {
        let mut xc = self.x0;
        let mut left = f64::INFINITY;
        for &(len, slope) in &self.segs {
            if len <= 0.0 {
                continue;
            }
            let xe = xc + len;
            if x < xc + tol {
                return (left, slope);
            }
            if x < xe - tol {
                return (slope, slope);
            }
            left = slope;
            xc = xe;
        }
        (left, f64::NEG_INFINITY)
    }

    /// Sup-convolution (f □ g)(z) = sup_{x+y=z} f(x) + g(y).
    pub fn sup_conv(&self, g: &Concave) -> Concave {
        let mut segs: Vec<(f64, f64)> = self.segs.iter().chain(&g.segs).copied().filter(|s| s.0 > 0.0).collect();
        segs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        Concave { x0: self.x0 + g.x0, y0: self.y0 + g.y0, segs }
    }

    pub fn restrict(&self, lo: f64, hi: f64) -> Concave {
        let y0 = self.eval(lo);
        let mut segs = Vec::new();
        let mut xc = self.x0;
        for &(len, slope) in &self.segs {
            let a = xc.max(lo);
            let b = (xc + len).min(hi);
            if b > a {
                segs.push((b - a, slope));
            }
            xc += len;
        }
        Concave { x0: lo, y0, segs }
    }
}

/// Exact value-to-go after each period of a deterministic price path,
/// `out[t]` = V_t on [E̲, Ē] with V_{T−1} ≡ 0.
pub fn deterministic_values(prices: &[f64], s: &Storage) -> Vec<Concave> {
    let (p, eta, m) = (s.p_max, s.efficiency, s.marginal_cost);
    let t_len = prices.len();
    let mut out = vec![Concave::constant(s.e_min, s.e_max, 0.0); t_len];
    for t in (0..t_len - 1).rev() {
        let l = prices[t + 1];
        // reward as a function of y = e_prev − e_next
        let mut segs = vec![(p * eta, l / eta)];
        if l >= 0.0 {
            segs.push((p / eta, (l - m) * eta));
        }
        let h = Concave { x0: -p * eta, y0: -l * p, segs };
        out[t] = out[t + 1].sup_conv(&h).restrict(s.e_min, s.e_max);
    }
    out
}

/// E[q(λ)] for λ ~ N(μ, σ²), by Gauss–Legendre on ±12σ split at the kinks.
pub fn gaussian_expectation(q: &dyn Fn(f64) -> f64, kinks: &[f64], mu: f64, sigma: f64) -> f64 {
    let quad = GaussLegendre::new(48).unwrap();
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    let mut cuts: Vec<f64> = kinks.iter().copied().filter(|c| c.is_finite() && *c > lo && *c < hi).collect();
    cuts.push(lo);
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let norm = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    cuts.windows(2)
        .map(|w| quad.integrate(w[0], w[1], |x| q(x) * norm * (-0.5 * ((x - mu) / sigma).powi(2)).exp()))
        .sum()
}

/// Row-stochastic random matrix with strictly positive rows.
pub fn random_stochastic(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        })
        .collect()
}
