//! Full-batch gradient-descent logistic regression and a fixed-weight
//! ensemble.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureLayout, FeatureScaler};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const PROB_FLOOR: f64 = 1e-9;
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.5,
            epochs: 500,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Domain(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Domain(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Weights are `[w_1..w_d, intercept]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub final_loss: f64,
    pub loss_history: Vec<f64>,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn intercept(&self) -> f64 {
        self.weights[self.dim()]
    }

    fn score(&self, x: &[f64]) -> f64 {
        affine(&self.weights, x)
    }
}

fn affine(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    x.iter().zip(&w[..d]).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_rows(x: &[Vec<f64>], y: &[bool], dim: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if let Some(r) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: r.len(),
        });
    }
    Ok(())
}

fn check_both_classes(y: &[bool]) -> Result<()> {
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels(format!(
            "{pos} positives among {} samples",
            y.len()
        )));
    }
    Ok(())
}

/// Sums partial results pairwise in a fixed tree shape so the total does not
/// depend on how rayon scheduled the chunks.
fn tree_sum(mut parts: Vec<(f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some((la, mut ga)) = it.next() {
            if let Some((lb, gb)) = it.next() {
                ga.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
                next.push((la + lb, ga));
            } else {
                next.push((la, ga));
            }
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// Mean log-loss plus `l2 * |w|^2 / 2` (intercept excluded) and its gradient.
pub fn loss_and_gradient(w: &[f64], x: &[Vec<f64>], y: &[bool], l2: f64) -> Result<(f64, Vec<f64>)> {
    if w.is_empty() {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    let dim = w.len() - 1;
    check_rows(x, y, dim)?;
    if x.is_empty() {
        return Err(Error::EmptyDataset("training samples"));
    }
    let parts: Vec<(f64, Vec<f64>)> = x
        .par_chunks(CHUNK)
        .zip(y.par_chunks(CHUNK))
        .map(|(xs, ys)| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; dim + 1];
            for (row, &label) in xs.iter().zip(ys) {
                let z = affine(w, row);
                let t = if label { 1.0 } else { 0.0 };
                loss += softplus(z) - t * z;
                let r = sigmoid(z) - t;
                for (g, v) in grad.iter_mut().zip(row) {
                    *g += r * v;
                }
                grad[dim] += r;
            }
            (loss, grad)
        })
        .collect();
    let (loss_sum, mut grad) = tree_sum(parts);
    let n = x.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    let mut penalty = 0.0;
    for (g, wk) in grad[..dim].iter_mut().zip(&w[..dim]) {
        *g += l2 * wk;
        penalty += wk * wk;
    }
    Ok((loss_sum / n + 0.5 * l2 * penalty, grad))
}

pub fn train_logistic(x: &[Vec<f64>], y: &[bool], params: &TrainParams) -> Result<LogisticModel> {
    params.validate()?;
    let dim = x.first().ok_or(Error::EmptyDataset("training samples"))?.len();
    check_rows(x, y, dim)?;
    check_both_classes(y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut w: Vec<f64> = (0..dim).map(|_| init.sample(&mut rng)).collect();
    w.push(0.0);
    let mut history = Vec::with_capacity(params.epochs + 1);
    for _ in 0..params.epochs {
        let (loss, grad) = loss_and_gradient(&w, x, y, params.l2)?;
        history.push(loss);
        w.iter_mut()
            .zip(&grad)
            .for_each(|(wk, g)| *wk -= params.learning_rate * g);
    }
    let (final_loss, _) = loss_and_gradient(&w, x, y, params.l2)?;
    history.push(final_loss);
    if !final_loss.is_finite() {
        return Err(Error::Domain(format!(
            "training diverged (loss {final_loss}); lower the learning rate"
        )));
    }
    log::debug!("logistic l2={} final loss {final_loss:.6}", params.l2);
    Ok(LogisticModel {
        weights: w,
        l2: params.l2,
        learning_rate: params.learning_rate,
        epochs: params.epochs,
        final_loss,
        loss_history: history,
    })
}

/// `sigmoid(w.x + b)` clipped to `[1e-9, 1 - 1e-9]`.
pub fn predict(model: &LogisticModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: features.len(),
        });
    }
    Ok(sigmoid(model.score(features)).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    alphas: Vec<f64>,
}

impl EnsembleWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Domain("ensemble needs at least one weight".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::Domain(format!("ensemble weight {a} is negative")));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("ensemble weights sum to {total}, not 1")));
        }
        Ok(Self { alphas })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

pub fn ensemble(predictions: &[f64], weights: &EnsembleWeights) -> Result<f64> {
    if predictions.len() != weights.len() {
        return Err(Error::Dimension {
            expected: weights.len(),
            got: predictions.len(),
        });
    }
    let y: f64 = predictions.iter().zip(weights.alphas()).map(|(p, a)| p * a).sum();
    let lo = predictions.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = predictions.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(y.clamp(lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub log_loss: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub samples: usize,
    pub positives: usize,
}

/// Log-loss, accuracy at 0.5 and rank-statistic AUC with average ranks for ties.
pub fn evaluate(predictions: &[f64], labels: &[bool]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    check_both_classes(labels)?;
    let n = labels.len();
    let mut log_loss = 0.0;
    let mut correct = 0usize;
    for (&p, &y) in predictions.iter().zip(labels) {
        let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        log_loss -= if y { p.ln() } else { (1.0 - p).ln() };
        if (p >= 0.5) == y {
            correct += 1;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    let mut ranks = vec![0.0; n];
    let mut k = 0;
    while k < n {
        let mut end = k;
        while end + 1 < n && predictions[order[end + 1]] == predictions[order[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=end] {
            ranks[idx] = avg;
        }
        k = end + 1;
    }
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = n - pos;
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y).map(|(r, _)| r).sum();
    let auc = (rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64);

    Ok(Metrics {
        log_loss: log_loss / n as f64,
        accuracy: correct as f64 / n as f64,
        auc,
        samples: n,
        positives: pos,
    })
}

/// Everything needed to score new edge features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub layout: FeatureLayout,
    pub scaler: FeatureScaler,
    pub seed: u64,
    pub lags: usize,
    pub horizon: usize,
    pub tau: f64,
    pub members: Vec<LogisticModel>,
    pub alphas: EnsembleWeights,
}

impl ModelDocument {
    /// Ensemble probability for a raw feature vector.
    pub fn predict_raw(&self, raw: &[f64]) -> Result<f64> {
        let z = self.scaler.transform(raw)?;
        let preds = self
            .members
            .iter()
            .map(|m| predict(m, &z))
            .collect::<Result<Vec<_>>>()?;
        ensemble(&preds, &self.alphas)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::DataIntegrity(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.members.len() != doc.alphas.len() {
            return Err(Error::DataIntegrity("model members and weights disagree".into()));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y = x
            .iter()
            .map(|r| r[0] + 0.3 * rng.gen_range(-1.0..1.0) > 0.0)
            .collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = random_problem(3, 600, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for l2 in [0.0, 0.1] {
            let w: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, g) = loss_and_gradient(&w, &x, &y, l2).unwrap();
            let h = 1e-6;
            for k in 0..w.len() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += h;
                wm[k] -= h;
                let lp = loss_and_gradient(&wp, &x, &y, l2).unwrap().0;
                let lm = loss_and_gradient(&wm, &x, &y, l2).unwrap().0;
                assert!(((lp - lm) / (2.0 * h) - g[k]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn intercept_only_reaches_prevalence() {
        let x = vec![vec![0.0, 0.0]; 40];
        let y: Vec<bool> = (0..40).map(|k| k % 4 == 0).collect();
        let params = TrainParams {
            l2: 0.0,
            learning_rate: 1.0,
            epochs: 2000,
            seed: 0,
        };
        let m = train_logistic(&x, &y, &params).unwrap();
        assert!((predict(&m, &[0.0, 0.0]).unwrap() - 0.25).abs() < 1e-3);
    }

    #[test]
    fn separable_toy_is_fit() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..10 {
            let t = k as f64 * 0.3;
            x.push(vec![1.0 + t, 0.5 - t]);
            y.push(true);
            x.push(vec![-1.0 - t, 0.2 + t]);
            y.push(false);
        }
        let params = TrainParams {
            l2: 1e-6,
            ..TrainParams::default()
        };
        let m = train_logistic(&x, &y, &params).unwrap();
        let acc = x
            .iter()
            .zip(&y)
            .filter(|(r, &l)| (predict(&m, r).unwrap() >= 0.5) == l)
            .count();
        assert_eq!(acc, 20);
        assert!(m.loss_history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = random_problem(8, 1000, 4);
        let p = TrainParams {
            epochs: 50,
            seed: 9,
            ..TrainParams::default()
        };
        let a = train_logistic(&x, &y, &p).unwrap();
        let b = train_logistic(&x, &y, &p).unwrap();
        assert_eq!(a.weights, b.weights);
        let c = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| train_logistic(&x, &y, &p).unwrap());
        assert_eq!(a.weights, c.weights);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0]; 3];
        assert!(matches!(
            train_logistic(&x, &[true; 3], &TrainParams::default()),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(matches!(
            evaluate(&[0.1, 0.2], &[false, false]),
            Err(Error::DegenerateLabels(_))
        ));
    }

    fn model(weights: Vec<f64>) -> LogisticModel {
        LogisticModel {
            weights,
            l2: 0.0,
            learning_rate: 0.1,
            epochs: 0,
            final_loss: 0.0,
            loss_history: Vec::new(),
        }
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&model(vec![0.0, 0.0, 0.0]), &[3.0, -1.0]).unwrap(), 0.5);
        let p = predict(&model(vec![0.0, 10.0]), &[4.0]).unwrap();
        assert!((p - 0.9999546).abs() < 1e-7);
        assert!(matches!(
            predict(&model(vec![0.0, 0.0]), &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
        let extreme = predict(&model(vec![100.0, 0.0]), &[10.0]).unwrap();
        assert_eq!(extreme, 1.0 - 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + w[3];
            let direct = 1.0 / (1.0 + (-z).exp());
            assert!((predict(&model(w), &x).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_examples() {
        let one = EnsembleWeights::new(vec![1.0]).unwrap();
        assert_eq!(ensemble(&[0.37], &one).unwrap(), 0.37);
        let half = EnsembleWeights::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(ensemble(&[0.2, 0.8], &half).unwrap(), 0.5);
        assert!(ensemble(&[0.2], &half).is_err());
        assert!(EnsembleWeights::new(vec![0.5, 0.6]).is_err());
        assert!(EnsembleWeights::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn auc_examples() {
        let labels = [false, false, true, true, false, true];
        let perfect = [0.1, 0.2, 0.9, 0.8, 0.3, 0.7];
        assert_eq!(evaluate(&perfect, &labels).unwrap().auc, 1.0);
        let flat = evaluate(&[0.5; 6], &[false, false, false, false, true, true]).unwrap();
        assert_eq!(flat.auc, 0.5);
        // p >= 0.5 predicts positive; the minority share is the hit rate
        assert!((flat.accuracy - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let preds: Vec<f64> = (0..100).map(|_| (rng.gen_range(0..20) as f64) / 20.0).collect();
        let labels: Vec<bool> = (0..100).map(|_| rng.gen_bool(0.4)).collect();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (a, &la) in labels.iter().enumerate() {
            for (b, &lb) in labels.iter().enumerate() {
                if la && !lb {
                    pairs += 1.0;
                    if preds[a] > preds[b] {
                        wins += 1.0;
                    } else if preds[a] == preds[b] {
                        wins += 0.5;
                    }
                }
            }
        }
        let auc = evaluate(&preds, &labels).unwrap().auc;
        assert!((auc - wins / pairs).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ensemble_is_convex(preds in proptest::collection::vec(0.0f64..1.0, 1..6), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = preds.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut alphas: Vec<f64> = raw.iter().map(|a| a / total).collect();
            let drift: f64 = 1.0 - alphas.iter().sum::<f64>();
            alphas[0] += drift;
            let w = EnsembleWeights::new(alphas).unwrap();
            let y = ensemble(&preds, &w).unwrap();
            let lo = preds.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = preds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(y >= lo && y <= hi);
        }
    }
}
