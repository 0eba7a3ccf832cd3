use rand::seq::SliceRandom;

use super::{check_training_set, sign, FeatureVector};
use crate::error::Result;
use crate::rng::{substream, Stream};

/// Linear SVM on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    /// Multiplier applied after centering; 1 for constant features.
    pub feature_scale: Vec<f64>,
}

impl SvmModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        let mut s = self.bias;
        for (i, &v) in x.iter().enumerate() {
            s += self.weights[i] * (v - self.feature_mean[i]) * self.feature_scale[i];
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
}

/// Stochastic subgradient descent on `λ/2‖w‖² + mean hinge loss`, with `w`
/// projected onto the ball of radius `1/√λ` after each step. The bias is
/// not regularized.
pub fn train_svm(features: &[FeatureVector], labels: &[u8], cfg: &SvmConfig) -> Result<SvmModel> {
    let dim = check_training_set(features, labels)?;
    if !(cfg.learning_rate > 0.0 && cfg.regularization > 0.0) {
        return Err(crate::Error::InvalidArgument("svm learning rate and regularization must be positive".into()));
    }
    let n = features.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in features {
        mean.iter_mut().zip(&f.values).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; dim];
    for f in features {
        for ((s, m), v) in scale.iter_mut().zip(&mean).zip(&f.values) {
            *s += (v - m) * (v - m) / n;
        }
    }
    scale.iter_mut().for_each(|s| *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 1.0 });
    let xs: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.values.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) * s).collect())
        .collect();

    let radius = 1.0 / cfg.regularization.sqrt();
    let shrink = 1.0 - cfg.learning_rate * cfg.regularization;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut substream(cfg.seed, Stream::Baseline, &[0, epoch as u64]));
        for &i in &order {
            let y = sign(labels[i]);
            let x = &xs[i];
            let m = y * (b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>());
            w.iter_mut().for_each(|v| *v *= shrink);
            if m < 1.0 {
                w.iter_mut().zip(x).for_each(|(v, c)| *v += cfg.learning_rate * y * c);
                b += cfg.learning_rate * y;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
    }
    Ok(SvmModel { weights: w, bias: b, feature_mean: mean, feature_scale: scale })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector { values: v.to_vec(), k: 1, normalized: false }
    }

    fn cfg(seed: u64) -> SvmConfig {
        SvmConfig { epochs: 100, learning_rate: 0.05, regularization: 0.01, seed }
    }

    fn accuracy(m: &SvmModel, xs: &[FeatureVector], ys: &[u8]) -> f64 {
        xs.iter().zip(ys).filter(|(x, &y)| u8::from(m.margin(&x.values) > 0.0) == y).count() as f64 / ys.len() as f64
    }

    #[test]
    fn separates_two_points() {
        let xs = [fv(&[0.0, 1.0]), fv(&[1.0, 0.0])];
        let m = train_svm(&xs, &[0, 1], &cfg(1)).unwrap();
        assert_eq!(accuracy(&m, &xs, &[0, 1]), 1.0);
    }

    #[test]
    fn threshold_separable_single_feature() {
        let xs: Vec<_> = (0..20).map(|i| fv(&[i as f64])).collect();
        let ys: Vec<u8> = (0..20).map(|i| u8::from(i >= 10)).collect();
        let m = train_svm(&xs, &ys, &cfg(2)).unwrap();
        assert_eq!(accuracy(&m, &xs, &ys), 1.0);
    }

    #[test]
    fn identical_features_fall_back_to_majority() {
        let xs = vec![fv(&[0.25, 0.75]); 10];
        let ys = [1, 1, 1, 0, 1, 0, 1, 1, 0, 1];
        let c = cfg(3);
        let m = train_svm(&xs, &ys, &c).unwrap();
        let norm = m.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1.0 / c.regularization.sqrt());
        assert_eq!(accuracy(&m, &xs, &ys), 0.7);
    }

    #[test]
    fn deterministic_and_rejects_one_class() {
        let xs: Vec<_> = (0..30).map(|i| fv(&[(i * 7 % 11) as f64, (i % 3) as f64])).collect();
        let ys: Vec<u8> = (0..30).map(|i| u8::from(i * 7 % 11 > 5)).collect();
        assert_eq!(train_svm(&xs, &ys, &cfg(9)).unwrap(), train_svm(&xs, &ys, &cfg(9)).unwrap());
        assert!(train_svm(&xs, &[1; 30], &cfg(9)).is_err());
    }
}
