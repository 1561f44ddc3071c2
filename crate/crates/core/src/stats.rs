//! Aggregation of repeated measurements into means, sample standard
//! deviations, and 95% confidence intervals.
//!
//! Intervals use Student-t quantiles rather than normal ones: profiling
//! campaigns typically run 3-5 repetitions per configuration, where the
//! normal approximation is far too tight.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::model::{AggregatedMetric, MeasurementRecord, MetricStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 samples, got {got}")]
    InsufficientSamples { got: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
}

/// Aggregates raw samples into a mean, sample standard deviation
/// (n-1 denominator), and a two-sided 95% t-interval.
pub fn aggregate(samples: &[f64]) -> Result<AggregatedMetric, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::InsufficientSamples { got: samples.len() });
    }
    for (index, v) in samples.iter().enumerate() {
        if !v.is_finite() {
            return Err(StatsError::NonFinite { index });
        }
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n as f64 - 1.0)).sqrt();
    let half_width = student_t_quantile(0.975, (n - 1) as f64) * std / (n as f64).sqrt();
    Ok(AggregatedMetric {
        mean,
        std,
        n,
        ci95_low: mean - half_width,
        ci95_high: mean + half_width,
    })
}

/// Groups records by (config_index, node, metric) and aggregates each
/// group. Groups left with a single sample (e.g. after flagged runs)
/// are carried as point estimates without an interval.
pub fn aggregate_records(
    records: &[MeasurementRecord],
) -> BTreeMap<usize, BTreeMap<(String, String), MetricStats>> {
    let mut groups: BTreeMap<(usize, String, String), Vec<f64>> = BTreeMap::new();
    for rec in records {
        groups
            .entry((rec.config_index, rec.node.clone(), rec.metric.clone()))
            .or_default()
            .push(rec.value);
    }
    let mut tables: BTreeMap<usize, BTreeMap<(String, String), MetricStats>> = BTreeMap::new();
    for ((config_index, node, metric), samples) in groups {
        let stats = if samples.len() >= 2 {
            MetricStats::Ci(aggregate(&samples).expect("grouped samples are finite"))
        } else {
            MetricStats::Point {
                mean: samples[0],
                n: 1,
            }
        };
        tables
            .entry(config_index)
            .or_default()
            .insert((node, metric), stats);
    }
    tables
}

/// Two-sided Student-t quantile: returns t such that P(T ≤ t) = p for
/// T ~ t(df). Computed by inverting the regularized incomplete beta
/// function; accurate to better than 1e-9 over the df range used here.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must be in (0,1)");
    assert!(df >= 1.0, "degrees of freedom must be ≥ 1");
    if p < 0.5 {
        return -student_t_quantile(1.0 - p, df);
    }
    if p == 0.5 {
        return 0.0;
    }
    // For t ≥ 0: P(T > t) = I_x(df/2, 1/2) / 2 with x = df/(df + t²),
    // so solve I_x(df/2, 1/2) = 2(1 - p) for x and map back.
    let target = 2.0 * (1.0 - p);
    let x = inverse_reg_beta(target, df / 2.0, 0.5);
    (df * (1.0 - x) / x).sqrt()
}

/// ln Γ(x) via the Lanczos approximation (g = 7, 9 coefficients).
#[allow(clippy::excessive_precision)]
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta I_x(a, b) by the Lentz continued
/// fraction, with the symmetry transform for fast convergence.
fn reg_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let front = ln_front.exp();
    // Inclusive bound: the mirrored call then lands strictly inside the
    // direct branch, so the recursion cannot ping-pong.
    if x <= (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - reg_beta(1.0 - x, b, a)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        // Even step.
        let num = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let num = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Solves I_x(a, b) = target for x by bisection. I_x is monotone in x,
/// so this is robust for every (a, b); the fraction evaluation dominates
/// the cost and the df values here are tiny.
fn inverse_reg_beta(target: f64, a: f64, b: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&target));
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reg_beta(mid, a, b) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid {
            break;
        }
    }
    0.5 * (lo + hi)
}
