//! Evaluation ratios and aggregated result rows.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Makespan over the area lower bound.
    Rho,
    SigmaMiso,
    SigmaFixPartOnes,
    SigmaFixPartBest,
    SigmaFixPartFull,
    /// Refinement gain in percent.
    PRef,
    /// Reversal-plus-overlap gain over trivial concatenation, percent.
    PRev,
    /// Move/swap concatenation gain over trivial concatenation, percent.
    PMoveSwap,
    /// Stream makespan over the multi-batch lower bound, percent above.
    PMultibatch,
    Moves,
    Swaps,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MetricKind::Rho => "rho",
            MetricKind::SigmaMiso => "sigma_miso",
            MetricKind::SigmaFixPartOnes => "sigma_fixpart_1x",
            MetricKind::SigmaFixPartBest => "sigma_fixpart_best",
            MetricKind::SigmaFixPartFull => "sigma_fixpart_full",
            MetricKind::PRef => "p_ref",
            MetricKind::PRev => "p_rev",
            MetricKind::PMoveSwap => "p_move_swap",
            MetricKind::PMultibatch => "p_multibatch",
            MetricKind::Moves => "moves",
            MetricKind::Swaps => "swaps",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub metric: MetricKind,
    pub config: String,
    pub n: usize,
    pub trials: usize,
    pub mean: f64,
    pub stddev: f64,
}

/// `omega / baseline`.
pub fn rho(omega: f64, baseline: f64) -> Result<f64> {
    if baseline <= 0.0 {
        return Err(Error::EmptyWorkload);
    }
    Ok(omega / baseline)
}

/// `omega_a / omega_far`.
pub fn sigma(omega_a: f64, omega_far: f64) -> Result<f64> {
    if omega_far <= 0.0 {
        return Err(Error::EmptyWorkload);
    }
    Ok(omega_a / omega_far)
}

/// `(omega_before / omega_after - 1) * 100`.
pub fn percent_gain(omega_before: f64, omega_after: f64) -> Result<f64> {
    if omega_after <= 0.0 {
        return Err(Error::EmptyWorkload);
    }
    Ok((omega_before / omega_after - 1.0) * 100.0)
}

pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (values.len() - 1) as f64;
    (mean, var.sqrt())
}

/// Fixed column order keeps result diffs stable.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,config,n,trials,mean,stddev\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6}\n",
            r.metric, r.config, r.n, r.trials, r.mean, r.stddev
        ));
    }
    out
}

pub fn rows_to_json(rows: &[MetricRow]) -> serde_json::Value {
    serde_json::Value::Array(
        rows.iter()
            .map(|r| {
                serde_json::json!({
                    "metric": r.metric.to_string(),
                    "config": r.config,
                    "n": r.n,
                    "trials": r.trials,
                    "mean": r.mean,
                    "stddev": r.stddev,
                })
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ratio_examples() {
        assert_abs_diff_eq!(rho(12.2, 10.0).unwrap(), 1.22, epsilon = 1e-12);
        assert_abs_diff_eq!(sigma(21.0, 10.0).unwrap(), 2.10, epsilon = 1e-12);
        assert_abs_diff_eq!(percent_gain(11.4, 10.0).unwrap(), 14.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_baselines_are_errors() {
        assert!(rho(1.0, 0.0).is_err());
        assert!(sigma(1.0, 0.0).is_err());
        assert!(percent_gain(1.0, 0.0).is_err());
    }

    #[test]
    fn csv_has_fixed_columns() {
        let rows = vec![MetricRow {
            metric: MetricKind::Rho,
            config: "mixed+wide".into(),
            n: 15,
            trials: 3,
            mean: 1.07,
            stddev: 0.01,
        }];
        let csv = rows_to_csv(&rows);
        assert!(csv.starts_with("metric,config,n,trials,mean,stddev\n"));
        assert!(csv.contains("rho,mixed+wide,15,3,"));
    }
}
