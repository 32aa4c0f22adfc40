//! Monte-Carlo study of sampled ranks against a planted score configuration.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, Discrete};

use crate::error::{Error, Result};
use crate::model::FactorModel;
use crate::rank::{correct_rank, sampled_rank, true_rank};
use crate::model::ItemCatalog;
use crate::rng::{streams, Stream};
use crate::sampling::{sample_negative_items, ReplacementMode};

/// Bins with a smaller expected count are merged into a neighbour.
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub true_rank: usize,
    pub m: usize,
    pub trials: usize,
    pub mode: ReplacementMode,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid(format!("catalog size {} must be at least 2", self.n)));
        }
        if self.true_rank == 0 || self.true_rank > self.n {
            return Err(Error::invalid(format!(
                "true rank {} outside 1..={}",
                self.true_rank, self.n
            )));
        }
        if self.m == 0 || self.trials == 0 {
            return Err(Error::invalid("m and trials must be at least 1"));
        }
        if self.mode == ReplacementMode::Without && self.m > self.n - 1 {
            return Err(Error::invalid(format!(
                "m = {} exceeds the {} other items without replacement",
                self.m,
                self.n - 1
            )));
        }
        Ok(())
    }

    /// Success probability of one draw, `(r - 1) / (n - 1)`.
    pub fn p(&self) -> f64 {
        (self.true_rank - 1) as f64 / (self.n - 1) as f64
    }

    /// Analytic mean of the sampled rank under the binomial law.
    pub fn expected_sampled_mean(&self) -> f64 {
        1.0 + self.m as f64 * self.p()
    }
}

/// One-context, one-dimensional model in which item 0 has the requested
/// full-catalog rank: items `1..r` score above it, the rest below.
pub fn planted_model(n: usize, true_rank: usize) -> Result<FactorModel<f64>> {
    if true_rank == 0 || true_rank > n {
        return Err(Error::invalid(format!("true rank {true_rank} outside 1..={n}")));
    }
    let items = (0..n)
        .map(|i| match i {
            0 => 0.0,
            i if i < true_rank => 1.0,
            _ => -1.0,
        })
        .collect();
    FactorModel::from_factors(1, vec![1.0], items)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Merged bins as inclusive ranges of `r̃ - 1`.
    pub bins: Vec<(usize, usize)>,
}

/// Pearson goodness of fit of `counts[k]` (occurrences of `k` successes)
/// against Binomial(m, p), with `m = counts.len() - 1`. Adjacent bins are
/// merged left to right until each holds an expected count of at least
/// [`MIN_EXPECTED`]; a short remainder joins the last full bin.
pub fn binomial_chi_square(counts: &[u64], p: f64) -> Result<ChiSquareTest> {
    if counts.is_empty() {
        return Err(Error::invalid("no histogram bins"));
    }
    let m = (counts.len() - 1) as u64;
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("empty histogram"));
    }
    let law = Binomial::new(p, m).map_err(|e| Error::invalid(format!("binomial({m}, {p}): {e}")))?;
    let expected: Vec<f64> = (0..=m).map(|k| law.pmf(k) * total as f64).collect();

    let mut merged: Vec<(usize, usize, f64, f64)> = Vec::new();
    let (mut start, mut obs, mut exp) = (0usize, 0.0, 0.0);
    for k in 0..counts.len() {
        obs += counts[k] as f64;
        exp += expected[k];
        if exp >= MIN_EXPECTED {
            merged.push((start, k, obs, exp));
            start = k + 1;
            obs = 0.0;
            exp = 0.0;
        }
    }
    if start < counts.len() {
        match merged.last_mut() {
            Some(last) => {
                last.1 = counts.len() - 1;
                last.2 += obs;
                last.3 += exp;
            }
            None => merged.push((start, counts.len() - 1, obs, exp)),
        }
    }

    let bins = merged.iter().map(|&(a, b, _, _)| (a, b)).collect();
    let df = merged.len() - 1;
    if df == 0 {
        // one bin holds all the mass (p = 0 or p = 1): nothing to test
        return Ok(ChiSquareTest { statistic: 0.0, df, p_value: 1.0, bins });
    }
    let statistic: f64 = merged
        .iter()
        .map(|&(_, _, o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let dist = ChiSquared::new(df as f64).map_err(|e| Error::invalid(format!("chi-square df {df}: {e}")))?;
    let p_value = if statistic.is_finite() { dist.sf(statistic) } else { 0.0 };
    Ok(ChiSquareTest { statistic, df, p_value, bins })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    /// `histogram[k]` counts trials with `r̃ = k + 1`.
    pub histogram: Vec<u64>,
    pub mean_sampled: f64,
    pub se_sampled: f64,
    pub mean_corrected: f64,
    pub se_corrected: f64,
    pub expected_sampled_mean: f64,
    pub chi_square: ChiSquareTest,
}

fn mean_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Draws `m` negatives from the items other than the planted one, computes
/// the sampled and corrected ranks, and repeats `trials` times.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    let SimulationConfig { n, true_rank: r, m, trials, mode, seed } = *config;
    let model = planted_model(n, r)?;
    debug_assert_eq!(true_rank(&model, 0, 0, &ItemCatalog::new(n)?)?, r);
    let mut rng = Stream::derived(seed, streams::SIMULATE);
    let mut histogram = vec![0u64; m + 1];
    let (mut s1, mut s2, mut c1, mut c2) = (0.0, 0.0, 0.0, 0.0);
    let mut sample = Vec::with_capacity(m);
    for _ in 0..trials {
        sample.clear();
        match mode {
            ReplacementMode::With => sample.extend((0..m).map(|_| 1 + rng.below(n - 1))),
            ReplacementMode::Without => {
                sample.extend(sample_negative_items(n - 1, m, mode, &mut rng)?.into_iter().map(|j| j + 1))
            }
        }
        let rs = sampled_rank(&model, 0, 0, &sample)?;
        let rc = correct_rank(rs, m, n)?.estimated_rank;
        histogram[rs - 1] += 1;
        s1 += rs as f64;
        s2 += (rs * rs) as f64;
        c1 += rc;
        c2 += rc * rc;
    }
    let (mean_sampled, se_sampled) = mean_se(s1, s2, trials);
    let (mean_corrected, se_corrected) = mean_se(c1, c2, trials);
    let chi_square = binomial_chi_square(&histogram, config.p())?;
    Ok(SimulationResult {
        config: config.clone(),
        histogram,
        mean_sampled,
        se_sampled,
        mean_corrected,
        se_corrected,
        expected_sampled_mean: config.expected_sampled_mean(),
        chi_square,
    })
}

impl SimulationResult {
    /// `sampled_rank,corrected_rank,count,expected_count`, one row per
    /// possible sampled rank.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let SimulationConfig { n, m, trials, .. } = self.config;
        let law = Binomial::new(self.config.p(), m as u64)
            .map_err(|e| Error::invalid(format!("binomial: {e}")))?;
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::io("simulation csv", e.into());
        w.write_record(["sampled_rank", "corrected_rank", "count", "expected_count"]).map_err(io)?;
        for (k, &count) in self.histogram.iter().enumerate() {
            let rc = correct_rank(k + 1, m, n)?.estimated_rank;
            let expected = law.pmf(k as u64) * trials as f64;
            w.write_record([
                (k + 1).to_string(),
                format!("{rc}"),
                count.to_string(),
                format!("{expected}"),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io("simulation csv", e))?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "trials={} n={} true_rank={} m={} mode={}\n\
             mean_sampled={:.6} se_sampled={:.6} expected_sampled={:.6}\n\
             mean_corrected={:.6} se_corrected={:.6}\n\
             chi_square={:.6} df={} p_value={:.6}",
            self.config.trials,
            self.config.n,
            self.config.true_rank,
            self.config.m,
            self.config.mode.as_str(),
            self.mean_sampled,
            self.se_sampled,
            self.expected_sampled_mean,
            self.mean_corrected,
            self.se_corrected,
            self.chi_square.statistic,
            self.chi_square.df,
            self.chi_square.p_value
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, r: usize, m: usize, trials: usize, mode: ReplacementMode) -> SimulationConfig {
        SimulationConfig { n, true_rank: r, m, trials, mode, seed: 7 }
    }

    #[test]
    fn top_item_always_rank_one() {
        let res = simulate(&cfg(50, 1, 10, 500, ReplacementMode::With)).unwrap();
        assert_eq!(res.histogram[0], 500);
        assert_eq!(res.mean_sampled, 1.0);
        assert_eq!(res.mean_corrected, 1.0);
        assert_eq!(res.chi_square.df, 0);
    }

    #[test]
    fn exhaustive_sample_is_exact() {
        let res = simulate(&cfg(30, 30, 29, 20, ReplacementMode::Without)).unwrap();
        assert_eq!(res.histogram[29], 20);
        assert_eq!(res.mean_sampled, 30.0);
        assert_eq!(res.mean_corrected, 30.0);
    }

    #[test]
    fn invalid_geometry() {
        assert!(simulate(&cfg(10, 0, 3, 5, ReplacementMode::With)).is_err());
        assert!(simulate(&cfg(10, 11, 3, 5, ReplacementMode::With)).is_err());
        assert!(simulate(&cfg(10, 2, 10, 5, ReplacementMode::Without)).is_err());
    }

    #[test]
    fn chi_square_of_exact_expectation_is_zero() {
        // counts proportional to Binomial(2, 0.5) pmf
        let t = binomial_chi_square(&[250, 500, 250], 0.5).unwrap();
        assert_eq!(t.df, 2);
        assert!(t.statistic.abs() < 1e-12);
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_gross_misfit() {
        let t = binomial_chi_square(&[1000, 0, 0], 0.5).unwrap();
        assert!(t.p_value < 1e-10);
    }

    #[test]
    fn csv_has_one_row_per_rank() {
        let res = simulate(&cfg(20, 5, 4, 100, ReplacementMode::With)).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("sampled_rank,corrected_rank,count,expected_count\n1,1,"));
    }
}
