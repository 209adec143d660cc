use super::PriceScenarioSet;
use crate::{Error, Result};

pub const DEFAULT_PRICE_BINS: usize = 20;

/// Discretized order-1 Markov model of real-time prices.
///
/// Period `t` has its own ascending grid of price states. `transitions[t]`
/// maps states of period `t` to states of period `t + 1` and is row
/// stochastic. A period whose samples are all equal collapses to a single
/// state and is flagged in `degenerate`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovPriceModel {
    pub grids: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub marginals: Vec<Vec<f64>>,
    pub degenerate: Vec<bool>,
    /// Per period (lower edge, bin width); width 0 for degenerate periods.
    edges: Vec<(f64, f64)>,
}

impl MarkovPriceModel {
    pub fn horizon(&self) -> usize {
        self.grids.len()
    }

    pub fn states(&self, t: usize) -> usize {
        self.grids[t].len()
    }

    /// Price state that `price` falls into in period `t`.
    pub fn state_of(&self, t: usize, price: f64) -> usize {
        let (lo, w) = self.edges[t];
        let n = self.grids[t].len();
        if w <= 0.0 || n == 1 {
            return 0;
        }
        let k = ((price - lo) / w).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    /// A single-path model for a known price trajectory.
    pub fn deterministic(prices: &[f64]) -> Self {
        let t_len = prices.len();
        MarkovPriceModel {
            grids: prices.iter().map(|p| vec![*p]).collect(),
            transitions: vec![vec![vec![1.0]]; t_len.saturating_sub(1)],
            marginals: vec![vec![1.0]; t_len],
            degenerate: vec![true; t_len],
            edges: prices.iter().map(|p| (*p, 0.0)).collect(),
        }
    }

    /// Builds a model from explicit grids and kernels (used by tests and by
    /// callers with externally estimated dynamics).
    pub fn from_parts(grids: Vec<Vec<f64>>, transitions: Vec<Vec<Vec<f64>>>, initial: Vec<f64>) -> Result<Self> {
        let t_len = grids.len();
        if t_len == 0 || transitions.len() + 1 != t_len || initial.len() != grids[0].len() {
            return Err(Error::Dimension("grids/transitions/initial shapes disagree".into()));
        }
        for (t, g) in grids.iter().enumerate() {
            if g.is_empty() || g.windows(2).any(|w| !(w[0] < w[1])) || g.iter().any(|p| !p.is_finite()) {
                return Err(Error::Invalid(format!("grid {t} must be finite and strictly ascending")));
            }
        }
        let mut marginals = vec![initial];
        for (t, p) in transitions.iter().enumerate() {
            if p.len() != grids[t].len() || p.iter().any(|r| r.len() != grids[t + 1].len()) {
                return Err(Error::Dimension(format!("transition {t} has the wrong shape")));
            }
            let prev = &marginals[t];
            let next = (0..grids[t + 1].len()).map(|k| prev.iter().zip(p).map(|(m, r)| m * r[k]).sum()).collect();
            marginals.push(next);
        }
        let degenerate = grids.iter().map(|g| g.len() == 1).collect();
        let edges = grids
            .iter()
            .map(|g| {
                if g.len() == 1 {
                    (g[0], 0.0)
                } else {
                    let w = (g[g.len() - 1] - g[0]) / (g.len() - 1) as f64;
                    (g[0] - 0.5 * w, w)
                }
            })
            .collect();
        let model = MarkovPriceModel { grids, transitions, marginals, degenerate, edges };
        model.check_stochastic(1e-9)?;
        Ok(model)
    }

    /// Fails if any transition row deviates from summing to one.
    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        for (t, p) in self.transitions.iter().enumerate() {
            for (j, row) in p.iter().enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > tol || row.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                    return Err(Error::NonStochastic(format!("period {t}, state {j}: row sums to {s}")));
                }
            }
        }
        Ok(())
    }

    /// Marginals obtained by pushing the first-period distribution through
    /// the fitted transitions.
    pub fn propagated_marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![self.marginals[0].clone()];
        for (t, p) in self.transitions.iter().enumerate() {
            let prev = &out[t];
            let next = (0..self.states(t + 1)).map(|k| prev.iter().zip(p).map(|(m, r)| m * r[k]).sum()).collect();
            out.push(next);
        }
        out
    }

    /// Mean price of period `t` under the model.
    pub fn mean(&self, t: usize) -> f64 {
        self.grids[t].iter().zip(&self.marginals[t]).map(|(p, m)| p * m).sum()
    }
}

/// Fits equal-width bins per period over the sampled range and counts
/// consecutive-period state pairs. Each state is represented by the mean of
/// the samples falling into its bin (the bin midpoint when empty); rows with
/// no observations fall back to the next period's marginal distribution.
pub fn fit_markov(set: &PriceScenarioSet, n_bins: usize) -> Result<MarkovPriceModel> {
    if n_bins < 2 {
        return Err(Error::Invalid(format!("need at least 2 price bins, got {n_bins}")));
    }
    let count = set.count();
    if count < 10 * n_bins {
        return Err(Error::Invalid(format!("{count} scenarios is fewer than 10 per bin for {n_bins} bins")));
    }
    let t_len = set.horizon();
    if t_len == 0 || set.scenarios.iter().any(|r| r.len() != t_len) {
        return Err(Error::Dimension("scenario rows must all span the horizon".into()));
    }

    let mut grids = Vec::with_capacity(t_len);
    let mut edges = Vec::with_capacity(t_len);
    let mut degenerate = Vec::with_capacity(t_len);
    let mut assign = vec![vec![0usize; t_len]; count];
    let mut marginals = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let (lo, hi) = set
            .scenarios
            .iter()
            .map(|r| r[t])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!("non-finite price in period {t}")));
        }
        let collapsed = hi - lo <= 1e-12 * hi.abs().max(1.0);
        let n = if collapsed { 1 } else { n_bins };
        let width = if collapsed { 0.0 } else { (hi - lo) / n as f64 };
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for (i, r) in set.scenarios.iter().enumerate() {
            let k = if collapsed { 0 } else { (((r[t] - lo) / width).floor() as usize).min(n - 1) };
            assign[i][t] = k;
            sums[k] += r[t];
            counts[k] += 1;
        }
        let grid: Vec<f64> = (0..n)
            .map(|k| if counts[k] > 0 { sums[k] / counts[k] as f64 } else { lo + (k as f64 + 0.5) * width })
            .collect();
        grids.push(grid);
        edges.push((lo, width));
        degenerate.push(collapsed);
        marginals.push(counts.iter().map(|c| *c as f64 / count as f64).collect::<Vec<f64>>());
    }

    let mut transitions = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 0..t_len.saturating_sub(1) {
        let (n0, n1) = (grids[t].len(), grids[t + 1].len());
        let mut counts = vec![vec![0.0f64; n1]; n0];
        for a in &assign {
            counts[a[t]][a[t + 1]] += 1.0;
        }
        let rows = counts
            .into_iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.into_iter().map(|c| c / s).collect()
                } else {
                    marginals[t + 1].clone()
                }
            })
            .collect();
        transitions.push(rows);
    }

    let model = MarkovPriceModel { grids, transitions, marginals, degenerate, edges };
    model.check_stochastic(1e-9)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price::generate_rtp_scenarios;

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn independent_rows_match_next_marginal() {
        let s = generate_rtp_scenarios(&[30.0, 35.0, 40.0], &[5.0, 6.0, 7.0], 10_000, 17).unwrap();
        let m = fit_markov(&s, 5).unwrap();
        for t in 0..2 {
            for (j, row) in m.transitions[t].iter().enumerate() {
                if m.marginals[t][j] * 10_000.0 >= 200.0 {
                    assert!(tv(row, &m.marginals[t + 1]) <= 0.1, "t={t} j={j}");
                }
            }
        }
    }

    #[test]
    fn persistent_paths_give_identity() {
        let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![i as f64 * 0.1; 3]).collect();
        let set = PriceScenarioSet::from_matrix(rows).unwrap();
        let m = fit_markov(&set, 8).unwrap();
        for p in &m.transitions {
            for (j, row) in p.iter().enumerate() {
                assert!((row[j] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_collapses() {
        let s = generate_rtp_scenarios(&[30.0, 50.0], &[0.0, 0.0], 200, 1).unwrap();
        let m = fit_markov(&s, 10).unwrap();
        assert_eq!(m.grids, vec![vec![30.0], vec![50.0]]);
        assert_eq!(m.transitions[0], vec![vec![1.0]]);
        assert!(m.degenerate.iter().all(|d| *d));
    }

    #[test]
    fn marginals_consistent_with_propagation() {
        let s = crate::price::generate_ar1_scenarios(&[30.0; 6], &[8.0; 6], 3000, 4, 0.7).unwrap();
        let m = fit_markov(&s, DEFAULT_PRICE_BINS).unwrap();
        for (a, b) in m.propagated_marginals().iter().zip(&m.marginals) {
            assert!(tv(a, b) <= 0.05);
        }
        for g in &m.grids {
            assert!(g.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn fit_preconditions() {
        let s = generate_rtp_scenarios(&[1.0, 2.0], &[1.0, 1.0], 15, 0).unwrap();
        assert!(fit_markov(&s, 2).is_err());
        assert!(fit_markov(&s, 1).is_err());
    }

    #[test]
    fn state_lookup_clamps() {
        let s = generate_rtp_scenarios(&[30.0, 30.0], &[5.0, 5.0], 500, 2).unwrap();
        let m = fit_markov(&s, 10).unwrap();
        assert_eq!(m.state_of(0, -1e9), 0);
        assert_eq!(m.state_of(0, 1e9), 9);
    }

    proptest::proptest! {
        #[test]
        fn rows_always_stochastic(seed in 0u64..500, bins in 2usize..12, phi in -0.9f64..0.9) {
            let s = crate::price::generate_ar1_scenarios(&[20.0, 25.0, 22.0, 40.0], &[4.0, 0.0, 9.0, 3.0], 10 * bins + 7, seed, phi).unwrap();
            let m = fit_markov(&s, bins).unwrap();
            for p in &m.transitions {
                for row in p {
                    proptest::prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                }
            }
        }
    }
}
