use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, Mode, Network};
use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            early_stop_patience: 10,
            seed: 42,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-7,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(NnError::InvalidConfig(format!(
                "learning_rate {} and batch_size {} must be positive",
                self.learning_rate, self.batch_size
            )));
        }
        Ok(())
    }
}

/// Per-epoch learning curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Epochs actually run.
    pub stopped_epoch: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

/// Samples stored as f32, each of shape `sample_shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub sample_shape: Vec<usize>,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl SampleSet {
    pub fn new(sample_shape: Vec<usize>, data: Vec<f32>, labels: Vec<usize>) -> Result<Self, NnError> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || data.len() != per * labels.len() {
            return Err(NnError::DataShapeMismatch(format!(
                "{} values for {} samples of shape {:?}",
                data.len(),
                labels.len(),
                sample_shape
            )));
        }
        Ok(Self {
            sample_shape,
            data,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    /// Gather the listed samples into one batch tensor.
    pub fn batch(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let per = self.sample_len();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend(self.data[i * per..(i + 1) * per].iter().map(|&v| v as f64));
        }
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(&self.sample_shape);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (Tensor::new(shape, data).expect("sizes agree"), labels)
    }

    pub fn subset(&self, idx: &[usize]) -> SampleSet {
        let per = self.sample_len();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        SampleSet {
            sample_shape: self.sample_shape.clone(),
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let zeros: Gradients = net
            .params()
            .iter()
            .map(|p| p.trainable().iter().map(|t| vec![0.0; t.len()]).collect())
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.t);
        for (layer, params) in net.params_mut().iter_mut().enumerate() {
            for (slot, w) in params.trainable_mut().into_iter().enumerate() {
                let g = &grads[layer][slot];
                let m = &mut self.m[layer][slot];
                let v = &mut self.v[layer][slot];
                for j in 0..w.len() {
                    m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
                    v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    w[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
                }
            }
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

const EVAL_BATCH: usize = 64;

/// Class probabilities for every sample, inference mode.
pub fn predict_proba(net: &Network, set: &SampleSet) -> Result<Vec<Vec<f64>>, NnError> {
    if set.sample_shape != net.input_shape() {
        return Err(NnError::ShapeMismatch(format!(
            "samples of shape {:?} for a model expecting {:?}",
            set.sample_shape,
            net.input_shape()
        )));
    }
    let k = net.output_len();
    let all: Vec<usize> = (0..set.len()).collect();
    let mut rows = Vec::with_capacity(set.len());
    for chunk in all.chunks(EVAL_BATCH) {
        let (x, _) = set.batch(chunk);
        let out = net.forward(&x)?;
        rows.extend(out.data().chunks(k).map(|r| r.to_vec()));
    }
    Ok(rows)
}

/// Most probable class per sample.
pub fn predict(net: &Network, set: &SampleSet) -> Result<Vec<usize>, NnError> {
    Ok(predict_proba(net, set)?.iter().map(|r| argmax(r)).collect())
}

fn evaluate(net: &Network, set: &SampleSet) -> Result<(f64, f64), NnError> {
    let probs = predict_proba(net, set)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (p, &l) in probs.iter().zip(&set.labels) {
        loss += super::tensor::cross_entropy(p, l);
        if argmax(p) == l {
            correct += 1;
        }
    }
    let n = set.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam with early stopping on validation loss.
///
/// Training stops once `early_stop_patience` consecutive epochs (at least one)
/// fail to improve the best validation loss; the best weights are restored.
/// With an empty validation set the running training loss is monitored.
pub fn train(net: &mut Network, train_set: &SampleSet, val_set: &SampleSet, cfg: &TrainConfig) -> Result<History, NnError> {
    train_with(net, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    net: &mut Network,
    train_set: &SampleSet,
    val_set: &SampleSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&History),
) -> Result<History, NnError> {
    cfg.validate()?;
    for set in [train_set, val_set] {
        if set.sample_shape != net.input_shape() {
            return Err(NnError::DataShapeMismatch(format!(
                "samples of shape {:?} for a model expecting {:?}",
                set.sample_shape,
                net.input_shape()
            )));
        }
        if let Some(&l) = set.labels.iter().find(|&&l| l >= net.output_len()) {
            return Err(NnError::DataShapeMismatch(format!("label {l} outside 0..{}", net.output_len())));
        }
    }
    if train_set.is_empty() {
        return Err(NnError::DataShapeMismatch("empty training set".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, Network, usize)> = None;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train_set.batch(chunk);
            let (probs, tape) = net.forward_recorded(&x, Mode::Train, &mut rng)?;
            let (grads, _) = net.backward(&tape, &probs, &labels)?;
            net.apply_bn_stats(&tape);
            adam.step(net, &grads, cfg);
            let k = probs.shape()[1];
            for (p, &l) in probs.data().chunks(k).zip(&labels) {
                loss_sum += super::tensor::cross_entropy(p, l);
                if argmax(p) == l {
                    correct += 1;
                }
            }
        }
        let n = train_set.len() as f64;
        let (train_loss, train_acc) = (loss_sum / n, correct as f64 / n);
        let (val_loss, val_acc) = if val_set.is_empty() {
            (train_loss, train_acc)
        } else {
            evaluate(net, val_set)?
        };
        history.train_loss.push(train_loss);
        history.train_accuracy.push(train_acc);
        history.val_loss.push(val_loss);
        history.val_accuracy.push(val_acc);
        history.stopped_epoch = epoch;
        log::info!("epoch {epoch}: loss {train_loss:.4} acc {train_acc:.4} val_loss {val_loss:.4} val_acc {val_acc:.4}");
        on_epoch(&history);
        if !net.params().iter().all(|p| p.named().iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))) {
            return Err(NnError::NonFinite(format!("weights diverged at epoch {epoch}")));
        }

        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, net.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience.max(1) {
                break;
            }
        }
    }

    if let Some((_, weights, epoch)) = best {
        *net = weights;
        history.best_epoch = epoch;
    }
    Ok(history)
}

/// Training accuracy of `net` on `set` in inference mode.
pub fn accuracy_on(net: &Network, set: &SampleSet) -> Result<f64, NnError> {
    Ok(evaluate(net, set)?.1)
}
