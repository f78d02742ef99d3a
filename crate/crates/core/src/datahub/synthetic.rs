//! Seeded dual-label generators with published ground truth.

use rand::distributions::{Distribution, Uniform};
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// `y2 = 1 + sum_j a_j x_j`, `y1 = 0.5 y2 + 1 + sin(x_0)`, with `a_j > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTruth {
    pub coefficients: Vec<f64>,
}

impl RegressionTruth {
    pub fn y2(&self, x: &[f64]) -> f64 {
        1.0 + self
            .coefficients
            .iter()
            .zip(x)
            .map(|(a, v)| a * v)
            .sum::<f64>()
    }

    pub fn y1_given_y2(&self, x: &[f64], y2: f64) -> f64 {
        0.5 * y2 + 1.0 + x[0].sin()
    }

    pub fn y2_given_y1(&self, x: &[f64], y1: f64) -> f64 {
        2.0 * (y1 - 1.0 - x[0].sin())
    }

    pub fn y1(&self, x: &[f64]) -> f64 {
        self.y1_given_y2(x, self.y2(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegression {
    pub samples: Vec<Sample>,
    pub truth: RegressionTruth,
}

/// Latent `t = sum_j b_j x_j + N(0, noise_sd^2)`;
/// `y1 = 1[t > threshold1]`, `y2 = 1[t + 0.5 x_1 > threshold2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTruth {
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
    pub threshold1: f64,
    pub threshold2: f64,
}

impl ClassificationTruth {
    pub fn latent_mean(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClassification {
    pub samples: Vec<Sample>,
    pub truth: ClassificationTruth,
    /// Latent `t` per sample (noise included).
    pub latent: Vec<f64>,
}

fn check_size(n: usize, d: usize) -> Result<()> {
    if n < 1 || d < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs n >= 1 and d >= 2, got n={n}, d={d}"
        )));
    }
    Ok(())
}

fn uniform_features(n: usize, d: usize, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
    let unit = Uniform::new(0.0, 1.0);
    (0..n).map(|_| (0..d).map(|_| unit.sample(rng)).collect()).collect()
}

/// Fully labeled regression data; every label is strictly positive.
pub fn gen_synthetic_regression(n: usize, d: usize, seed: u64) -> Result<SyntheticRegression> {
    check_size(n, d)?;
    let mut rng = seeded(seed);
    let coef = Uniform::new(0.5, 1.5);
    let scale = 2.0 / d as f64;
    let coefficients = (0..d).map(|_| coef.sample(&mut rng) * scale).collect();
    let truth = RegressionTruth { coefficients };
    let samples = uniform_features(n, d, &mut rng)
        .into_iter()
        .map(|x| {
            let y2 = truth.y2(&x);
            let y1 = truth.y1_given_y2(&x, y2);
            Sample::new(x, Some(y1), Some(y2))
        })
        .collect();
    Ok(SyntheticRegression { samples, truth })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Fully labeled binary data with two correlated, roughly balanced labels.
pub fn gen_synthetic_classification(
    n: usize,
    d: usize,
    seed: u64,
) -> Result<SyntheticClassification> {
    check_size(n, d)?;
    let mut rng = seeded(seed);
    let coef = Uniform::new(0.5, 1.5);
    let coefficients: Vec<f64> = (0..d).map(|_| coef.sample(&mut rng)).collect();
    let noise_sd = 0.1;
    let noise = Normal::new(0.0, noise_sd).expect("valid normal");
    let xs = uniform_features(n, d, &mut rng);
    let mut truth = ClassificationTruth {
        coefficients,
        noise_sd,
        threshold1: 0.0,
        threshold2: 0.0,
    };
    let latent: Vec<f64> = xs
        .iter()
        .map(|x| truth.latent_mean(x) + noise.sample(&mut rng))
        .collect();
    let shifted: Vec<f64> = latent.iter().zip(&xs).map(|(t, x)| t + 0.5 * x[1]).collect();
    truth.threshold1 = median(&latent);
    truth.threshold2 = median(&shifted);
    let samples = xs
        .into_iter()
        .zip(latent.iter().zip(&shifted))
        .map(|(x, (t, s))| {
            let y1 = if *t > truth.threshold1 { 1.0 } else { 0.0 };
            let y2 = if *s > truth.threshold2 { 1.0 } else { 0.0 };
            Sample::new(x, Some(y1), Some(y2))
        })
        .collect();
    Ok(SyntheticClassification {
        samples,
        truth,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_labels_follow_the_published_relation() {
        let data = gen_synthetic_regression(500, 4, 3).unwrap();
        for s in &data.samples {
            let (y1, y2) = (s.y1.unwrap(), s.y2.unwrap());
            assert_eq!(y1, 0.5 * y2 + 1.0 + s.x[0].sin());
            assert_eq!(y2, data.truth.y2(&s.x));
            assert!(y1 > 0.0 && y2 > 0.0);
        }
        assert!(data.truth.coefficients.iter().all(|a| *a > 0.0));
    }

    #[test]
    fn generators_are_seed_deterministic() {
        assert_eq!(
            gen_synthetic_regression(50, 3, 9).unwrap(),
            gen_synthetic_regression(50, 3, 9).unwrap()
        );
        assert_eq!(
            gen_synthetic_classification(50, 3, 9).unwrap(),
            gen_synthetic_classification(50, 3, 9).unwrap()
        );
        assert_ne!(
            gen_synthetic_regression(50, 3, 9).unwrap().samples,
            gen_synthetic_regression(50, 3, 10).unwrap().samples
        );
    }

    #[test]
    fn tiny_shapes_are_rejected() {
        assert!(gen_synthetic_regression(0, 3, 1).is_err());
        assert!(gen_synthetic_classification(10, 1, 1).is_err());
    }

    #[test]
    fn classification_labels_are_balanced_and_correlated() {
        let data = gen_synthetic_classification(10_000, 10, 1).unwrap();
        let n = data.samples.len() as f64;
        let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
        for s in &data.samples {
            match (s.y1.unwrap() as u8, s.y2.unwrap() as u8) {
                (1, 1) => n11 += 1.0,
                (1, 0) => n10 += 1.0,
                (0, 1) => n01 += 1.0,
                _ => n00 += 1.0,
            }
        }
        let pos1 = (n11 + n10) / n;
        assert!((pos1 - 0.5).abs() < 0.03, "{pos1}");
        let phi = (n11 * n00 - n10 * n01)
            / ((n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00)).sqrt();
        assert!(phi > 0.3, "phi = {phi}");
    }
}
