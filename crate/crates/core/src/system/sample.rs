use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NetloadModel;
use crate::{Error, Result};

const MAX_REJECTIONS: usize = 10_000;

impl NetloadModel {
    /// Lower Cholesky factor of the node correlation, identity when absent.
    fn factor(&self) -> Result<DMatrix<f64>> {
        let n = self.nodes();
        match &self.correlation {
            None => Ok(DMatrix::identity(n, n)),
            Some(c) => {
                let m = DMatrix::from_fn(n, n, |i, j| c[i][j]);
                m.cholesky()
                    .map(|ch| ch.l())
                    .ok_or_else(|| Error::Invalid("netload correlation is not positive definite".into()))
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
        let raw = DVector::from_fn(self.nodes(), |_, _| StandardNormal.sample(rng));
        l * raw
    }

    /// One netload realization, `[node][period]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let l = self.factor()?;
        let mut out = self.mu.clone();
        for t in 0..self.periods() {
            let xi = self.draw(&l, rng);
            for (n, row) in out.iter_mut().enumerate() {
                row[t] += self.sigma[n][t] * xi[n];
            }
        }
        Ok(out)
    }

    /// Realization whose deviation stays inside the quantile set used by
    /// the dispatch at level `z`: per period, the summed deviation is at
    /// most `z σ_Σ` and every PTDF-weighted deviation is within `± z σ_l`.
    /// Each period is redrawn until it qualifies.
    pub fn sample_within<R: Rng + ?Sized>(&self, rng: &mut R, z: f64, ptdf: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let l = self.factor()?;
        let mut out = self.mu.clone();
        for t in 0..self.periods() {
            let total_cap = z * self.total_sigma(t);
            let line_cap: Vec<f64> = ptdf.iter().map(|row| z * self.weighted_sigma(t, row)).collect();
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let xi = self.draw(&l, rng);
                let dev: Vec<f64> = (0..self.nodes()).map(|n| self.sigma[n][t] * xi[n]).collect();
                let total: f64 = dev.iter().sum();
                let lines_ok = ptdf.iter().zip(&line_cap).all(|(row, cap)| {
                    let f: f64 = row.iter().zip(&dev).map(|(p, d)| p * d).sum();
                    f.abs() <= *cap
                });
                if total <= total_cap && lines_ok {
                    accepted = Some(dev);
                    break;
                }
            }
            let dev = accepted.ok_or_else(|| Error::Invalid(format!("no draw inside the quantile set at t={t}")))?;
            for (n, row) in out.iter_mut().enumerate() {
                row[t] += dev[n];
            }
        }
        Ok(out)
    }
}
