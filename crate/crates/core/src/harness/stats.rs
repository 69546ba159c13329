//! Ensemble counts and goodness-of-fit statistics.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::hilbert::ProbabilityVector;

/// Configuration counts at a fixed list of recording times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    times: Vec<f64>,
    n_configs: usize,
    counts: Vec<Vec<u64>>,
    n_runs: u64,
}

impl EnsembleStats {
    pub fn new(times: Vec<f64>, n_configs: usize) -> Result<Self> {
        if n_configs == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let counts = vec![vec![0; n_configs]; times.len()];
        Ok(Self {
            times,
            n_configs,
            counts,
            n_runs: 0,
        })
    }

    /// Records one run given its configuration at every recording time.
    pub fn record<I: IntoIterator<Item = usize>>(&mut self, configs: I) -> Result<()> {
        let configs: Vec<usize> = configs.into_iter().collect();
        if configs.len() != self.times.len() {
            return Err(Error::DimensionMismatch {
                expected: self.times.len(),
                found: configs.len(),
            });
        }
        if let Some(&q) = configs.iter().find(|&&q| q >= self.n_configs) {
            return Err(Error::InvalidInput(format!(
                "configuration {q} out of range 0..{}",
                self.n_configs
            )));
        }
        for (k, q) in configs.into_iter().enumerate() {
            self.counts[k][q] += 1;
        }
        self.n_runs += 1;
        Ok(())
    }

    /// Sums two ensembles over the same grid.
    pub fn merge(mut self, other: EnsembleStats) -> Result<Self> {
        if self.times != other.times || self.n_configs != other.n_configs {
            return Err(Error::InvalidInput(
                "cannot merge ensembles over different grids".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.n_runs += other.n_runs;
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_configs(&self) -> usize {
        self.n_configs
    }

    pub fn n_runs(&self) -> u64 {
        self.n_runs
    }

    pub fn counts(&self, k: usize) -> &[u64] {
        &self.counts[k]
    }

    pub fn empirical(&self, k: usize) -> Result<ProbabilityVector> {
        if self.n_runs == 0 {
            return Err(Error::InvalidInput("empty ensemble".into()));
        }
        let n = self.n_runs as f64;
        Ok(ProbabilityVector::from_trusted(
            self.counts[k].iter().map(|&c| c as f64 / n).collect(),
        ))
    }

    /// Binomial standard error of each empirical frequency, using the
    /// empirical frequency itself.
    pub fn standard_errors(&self, k: usize) -> Result<Vec<f64>> {
        let n = self.n_runs as f64;
        Ok(self
            .empirical(k)?
            .weights()
            .iter()
            .map(|p| (p * (1.0 - p) / n).sqrt())
            .collect())
    }

    pub fn compare(&self, k: usize, reference: &ProbabilityVector) -> Result<Comparison> {
        compare_distributions(&self.counts[k], reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub tv_distance: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    /// `(empirical - reference) / sqrt(reference (1 - reference) / N)`; zero
    /// where both agree exactly, infinite where the reference is degenerate
    /// and the counts disagree.
    pub z_scores: Vec<f64>,
    /// Number of zero-probability reference cells merged into one.
    pub pooled_cells: usize,
}

/// Compares counts against a reference distribution.
pub fn compare_distributions(counts: &[u64], reference: &ProbabilityVector) -> Result<Comparison> {
    if counts.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::InvalidInput("no counts to compare".into()));
    }
    let n = total as f64;
    let p = reference.weights();
    let tv = 0.5
        * counts
            .iter()
            .zip(p)
            .map(|(&c, &r)| (c as f64 / n - r).abs())
            .sum::<f64>();
    let z_scores = counts
        .iter()
        .zip(p)
        .map(|(&c, &r)| {
            let diff = c as f64 / n - r;
            let se = (r * (1.0 - r) / n).sqrt();
            if se > 0.0 {
                diff / se
            } else if diff == 0.0 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            }
        })
        .collect();
    let observed: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let expected: Vec<f64> = p.iter().map(|r| r * n).collect();
    let test = chi_square_test(&observed, &expected)?;
    Ok(Comparison {
        tv_distance: tv,
        chi_square: test.chi_square,
        dof: test.dof,
        p_value: test.p_value,
        z_scores,
        pooled_cells: test.pooled_cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pooled_cells: usize,
}

/// Pearson's statistic with fully specified expected counts. Cells with zero
/// expectation are pooled; any count landing there makes the statistic
/// infinite.
pub fn chi_square_test(observed: &[f64], expected: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch {
            expected: expected.len(),
            found: observed.len(),
        });
    }
    let mut chi = 0.0;
    let mut cells = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_cells = 0usize;
    for (&o, &e) in observed.iter().zip(expected) {
        if e > 0.0 {
            chi += (o - e) * (o - e) / e;
            cells += 1;
        } else {
            pooled_obs += o;
            pooled_cells += 1;
        }
    }
    if pooled_obs > 0.0 {
        chi = f64::INFINITY;
    }
    let dof = cells.saturating_sub(1);
    let p_value = if chi.is_infinite() {
        0.0
    } else if dof == 0 {
        1.0
    } else {
        let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        dist.sf(chi)
    };
    Ok(ChiSquareTest {
        chi_square: chi,
        dof,
        p_value,
        pooled_cells,
    })
}

/// Serial independence test on disjoint consecutive pairs
/// `(Q_0, Q_1), (Q_2, Q_3), ...` of each run, with expected pair counts
/// `sum_j p_{2j}(a) p_{2j+1}(b)` from the per-step marginals. Pairs from all
/// runs are pooled.
pub fn lag1_independence<R: AsRef<[usize]>>(
    runs: &[R],
    marginals: &[ProbabilityVector],
) -> Result<ChiSquareTest> {
    let n = marginal_width(marginals)?;
    let mut observed = vec![0.0; n * n];
    let mut expected = vec![0.0; n * n];
    for run in runs {
        let configs = checked_run(run.as_ref(), marginals, n)?;
        for j in 0..configs.len() / 2 {
            let (a, b) = (configs[2 * j], configs[2 * j + 1]);
            observed[a * n + b] += 1.0;
            let (pa, pb) = (marginals[2 * j].weights(), marginals[2 * j + 1].weights());
            for x in 0..n {
                for y in 0..n {
                    expected[x * n + y] += pa[x] * pb[y];
                }
            }
        }
    }
    chi_square_test(&observed, &expected)
}

fn marginal_width(marginals: &[ProbabilityVector]) -> Result<usize> {
    marginals
        .first()
        .map(|m| m.len())
        .ok_or_else(|| Error::InvalidInput("empty run".into()))
}

fn checked_run<'a>(
    configs: &'a [usize],
    marginals: &[ProbabilityVector],
    n: usize,
) -> Result<&'a [usize]> {
    if configs.len() != marginals.len() {
        return Err(Error::DimensionMismatch {
            expected: marginals.len(),
            found: configs.len(),
        });
    }
    if let Some(&q) = configs.iter().find(|&&q| q >= n) {
        return Err(Error::InvalidInput(format!(
            "configuration {q} out of range 0..{n}"
        )));
    }
    Ok(configs)
}

/// Standardized deviation of each configuration's total occupancy, summed
/// over all steps of all runs, from its expectation under the per-step
/// marginals.
pub fn occupancy_z_scores<R: AsRef<[usize]>>(
    runs: &[R],
    marginals: &[ProbabilityVector],
) -> Result<Vec<f64>> {
    let n = marginal_width(marginals)?;
    let mut count = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut var = vec![0.0; n];
    for run in runs {
        for (&q, m) in checked_run(run.as_ref(), marginals, n)?
            .iter()
            .zip(marginals)
        {
            count[q] += 1.0;
            for (x, &p) in m.weights().iter().enumerate() {
                mean[x] += p;
                var[x] += p * (1.0 - p);
            }
        }
    }
    Ok((0..n)
        .map(|x| {
            let diff = count[x] - mean[x];
            if var[x] > 0.0 {
                diff / var[x].sqrt()
            } else if diff.abs() < 1e-9 {
                0.0
            } else {
                diff.signum() * f64::INFINITY
            }
        })
        .collect())
}
