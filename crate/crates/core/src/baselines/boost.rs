use super::{check_training_set, sign, FeatureVector};
use crate::error::{Error, Result};

/// Votes `polarity` when `x[feature] > threshold`, `−polarity` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: f64,
    pub alpha: f64,
}

impl Stump {
    pub fn vote(&self, x: &[f64]) -> f64 {
        if x[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }

    pub(super) fn from_row(r: &[f64], dim: usize) -> Result<Self> {
        let feature = r[0] as usize;
        if r[0] < 0.0 || r[0].fract() != 0.0 || feature >= dim || r[2].abs() != 1.0 {
            return Err(Error::Checkpoint(format!("malformed stump {r:?}")));
        }
        Ok(Self { feature, threshold: r[1], polarity: r[2], alpha: r[3] })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaBoostModel {
    pub stumps: Vec<Stump>,
    /// Weighted training error of each round's stump.
    pub round_errors: Vec<f64>,
}

impl AdaBoostModel {
    /// `Σ α·h(x)`.
    pub fn vote(&self, x: &[f64]) -> Result<f64> {
        if let Some(s) = self.stumps.iter().find(|s| s.feature >= x.len()) {
            return Err(Error::Shape(format!("stump uses feature {} of {}", s.feature, x.len())));
        }
        Ok(self.stumps.iter().map(|s| s.alpha * s.vote(x)).sum())
    }

    /// `Π 2√(ε_t(1 − ε_t))`, an upper bound on the training error.
    pub fn training_error_bound(&self) -> f64 {
        self.round_errors.iter().map(|e| 2.0 * (e * (1.0 - e)).sqrt()).product()
    }
}

/// Floor applied to a zero weighted error before taking the log-odds.
const MIN_ERROR: f64 = 1e-10;

pub fn stump_weight(err: f64) -> f64 {
    let e = err.max(MIN_ERROR);
    0.5 * ((1.0 - e) / e).ln()
}

/// Lowest weighted-error stump over every feature and midpoint threshold.
fn best_stump(xs: &[FeatureVector], ys: &[f64], w: &[f64], dim: usize) -> (Stump, f64) {
    let mut best = (Stump { feature: 0, threshold: f64::NEG_INFINITY, polarity: 1.0, alpha: 0.0 }, f64::INFINITY);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let neg_mass: f64 = ys.iter().zip(w).filter(|(&y, _)| y < 0.0).map(|(_, &wi)| wi).sum();
    for f in 0..dim {
        order.sort_by(|&a, &b| xs[a].values[f].total_cmp(&xs[b].values[f]));
        // Error of "predict +1 above the threshold" with the threshold below every value.
        let mut err = neg_mass;
        let lowest = xs[order[0]].values[f];
        let consider = |threshold: f64, err: f64, best: &mut (Stump, f64)| {
            for (polarity, e) in [(1.0, err), (-1.0, 1.0 - err)] {
                if e < best.1 - 1e-15 {
                    *best = (Stump { feature: f, threshold, polarity, alpha: 0.0 }, e);
                }
            }
        };
        consider(lowest - 1.0, err, &mut best);
        let mut j = 0;
        while j < order.len() {
            let v = xs[order[j]].values[f];
            while j < order.len() && xs[order[j]].values[f] == v {
                let i = order[j];
                err += if ys[i] > 0.0 { w[i] } else { -w[i] };
                j += 1;
            }
            if j < order.len() {
                consider(0.5 * (v + xs[order[j]].values[f]), err, &mut best);
            }
        }
    }
    best
}

/// Discrete AdaBoost. Stops early once a stump is perfect or no stump beats
/// chance.
pub fn train_adaboost(features: &[FeatureVector], labels: &[u8], rounds: usize) -> Result<AdaBoostModel> {
    if rounds == 0 {
        return Err(Error::InvalidArgument("adaboost needs at least one round".into()));
    }
    let dim = check_training_set(features, labels)?;
    let n = features.len();
    let ys: Vec<f64> = labels.iter().map(|&l| sign(l)).collect();
    let mut w = vec![1.0 / n as f64; n];
    let mut model = AdaBoostModel { stumps: Vec::new(), round_errors: Vec::new() };
    for round in 0..rounds {
        let (mut stump, err) = best_stump(features, &ys, &w, dim);
        let err = err.clamp(0.0, 1.0);
        if err >= 0.5 {
            break;
        }
        stump.alpha = stump_weight(err);
        model.round_errors.push(err);
        if err <= MIN_ERROR {
            model.stumps.push(stump);
            break;
        }
        for (i, wi) in w.iter_mut().enumerate() {
            *wi *= (-stump.alpha * ys[i] * stump.vote(&features[i].values)).exp();
        }
        model.stumps.push(stump);
        let total: f64 = w.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Training(format!("adaboost weights degenerated in round {round}")));
        }
        w.iter_mut().for_each(|wi| *wi /= total);
        if n > 1 && w.iter().any(|&wi| wi > 1.0 - 1e-9) {
            return Err(Error::Training(format!("adaboost weight collapsed onto one example in round {round}")));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector { values: v.to_vec(), k: 1, normalized: false }
    }

    fn training_error(m: &AdaBoostModel, xs: &[FeatureVector], ys: &[u8]) -> f64 {
        xs.iter()
            .zip(ys)
            .filter(|(x, &y)| u8::from(m.vote(&x.values).unwrap() > 0.0) != y)
            .count() as f64
            / ys.len() as f64
    }

    #[test]
    fn stump_weight_formula() {
        assert!((stump_weight(0.25) - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!((stump_weight(0.25) - 0.5493).abs() < 1e-4);
        assert_eq!(stump_weight(0.5), 0.0);
    }

    #[test]
    fn one_round_on_threshold_data() {
        let xs: Vec<_> = (0..10).map(|i| fv(&[i as f64, 3.0])).collect();
        let ys: Vec<u8> = (0..10).map(|i| u8::from(i < 4)).collect();
        let m = train_adaboost(&xs, &ys, 1).unwrap();
        assert_eq!(training_error(&m, &xs, &ys), 0.0);
        assert_eq!(m.stumps[0].feature, 0);
        assert_eq!(m.stumps[0].threshold, 3.5);
        assert_eq!(m.stumps[0].polarity, -1.0);
        assert!(train_adaboost(&xs, &ys, 0).is_err());
        assert!(train_adaboost(&xs, &[0; 10], 3).is_err());
    }

    #[test]
    fn training_error_bound_holds_on_random_datasets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(6..20);
            let d = rng.gen_range(1..4);
            let xs: Vec<_> = (0..n).map(|_| fv(&(0..d).map(|_| rng.gen_range(0..5) as f64).collect::<Vec<_>>())).collect();
            let mut ys: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            ys[0] = 0;
            ys[1] = 1;
            let m = train_adaboost(&xs, &ys, rng.gen_range(1..15)).unwrap();
            assert!(training_error(&m, &xs, &ys) <= m.training_error_bound() + 1e-12);
        }
    }

    #[test]
    fn error_bound_shrinks_with_rounds_on_separable_data() {
        // Separable by the sum of the two features but by no single stump.
        let xs: Vec<_> = (0..8).flat_map(|a| (0..8).map(move |b| fv(&[a as f64, b as f64]))).collect();
        let ys: Vec<u8> = xs.iter().map(|x| u8::from(x.values[0] + x.values[1] > 7.0)).collect();
        let mut previous = f64::INFINITY;
        for rounds in 1..=40 {
            let m = train_adaboost(&xs, &ys, rounds).unwrap();
            let bound = m.training_error_bound();
            assert!(bound <= previous);
            assert!(training_error(&m, &xs, &ys) <= bound + 1e-12);
            previous = bound;
        }
        assert!(training_error(&train_adaboost(&xs, &ys, 40).unwrap(), &xs, &ys) < 0.2);
    }
}
