//! L2-regularized logistic regression trained by mini-batch gradient
//! descent. Parameters are a flat vector `[w_0, .., w_{d-1}, b]`; that
//! vector is what federated training exchanges.

use serde::{Deserialize, Serialize};

use super::encoding::{EncodedData, EncodingOptions, FeatureEncoding, Matrix};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};
use crate::tabular::{Dataset, SplitSet};

/// Logits are clamped to this magnitude before the sigmoid.
pub const LOGIT_CLAMP: f64 = 30.0;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    #[serde(default)]
    pub encoding: EncodingOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 64,
            epochs: 5,
            l2_penalty: 1e-4,
            optimizer: Optimizer::Sgd,
            seed: 0,
            encoding: EncodingOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.epochs == 0 || self.l2_penalty < 0.0 {
            return Err(Error::Precondition(
                "learning_rate, batch_size and epochs must be positive; l2_penalty >= 0".into(),
            ));
        }
        if let Optimizer::Momentum { beta } = self.optimizer {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Precondition(format!("momentum beta {beta} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub encoding: FeatureEncoding,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn from_params(encoding: FeatureEncoding, params: &[f64]) -> Result<Self> {
        if params.len() != encoding.dim() + 1 {
            return Err(Error::Precondition(format!(
                "{} parameters for {} encoded features",
                params.len(),
                encoding.dim()
            )));
        }
        let (w, b) = params.split_at(params.len() - 1);
        Ok(LinearModel {
            encoding,
            weights: w.to_vec(),
            bias: b[0],
        })
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.bias);
        p
    }

    pub fn logits(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let data = self.encoding.encode(dataset)?;
        let params = self.params();
        Ok((0..data.len()).map(|i| logit(&params, data.x.row(i))).collect())
    }

    pub fn predict_proba(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        Ok(self.logits(dataset)?.into_iter().map(sigmoid).collect())
    }

    /// Gradient of the batch loss (mean cross-entropy plus
    /// `l2/2 * |w|^2`) at this model's parameters.
    pub fn gradient(&self, batch: &Dataset, l2: f64) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(Error::Precondition("gradient of an empty batch".into()));
        }
        let data = self.encoding.encode(batch)?;
        let rows: Vec<usize> = (0..data.len()).collect();
        let mut g = vec![0.0; self.weights.len() + 1];
        ce_gradient(&self.params(), &data, &rows, l2, &mut g);
        Ok(g)
    }

    pub fn loss(&self, batch: &Dataset, l2: f64) -> Result<f64> {
        let data = self.encoding.encode(batch)?;
        let rows: Vec<usize> = (0..data.len()).collect();
        Ok(ce_loss(&self.params(), &data, &rows, l2))
    }
}

#[inline]
pub fn logit(params: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut z = params[d];
    for (w, xi) in params[..d].iter().zip(x) {
        z += w * xi;
    }
    z
}

/// Mean cross-entropy over `rows` plus `l2/2 * |w|^2` (bias unpenalized).
pub fn ce_loss(params: &[f64], data: &EncodedData, rows: &[usize], l2: f64) -> f64 {
    let d = data.x.cols;
    let mut total = 0.0;
    for &r in rows {
        let z = logit(params, data.x.row(r));
        total += softplus(z) - f64::from(data.y[r]) * z;
    }
    let reg: f64 = params[..d].iter().map(|w| w * w).sum::<f64>() * 0.5 * l2;
    total / rows.len() as f64 + reg
}

/// Writes the gradient of [`ce_loss`] into `grad` (overwritten).
pub fn ce_gradient(params: &[f64], data: &EncodedData, rows: &[usize], l2: f64, grad: &mut [f64]) {
    let d = data.x.cols;
    grad.fill(0.0);
    for &r in rows {
        let x = data.x.row(r);
        let err = sigmoid(logit(params, x)) - f64::from(data.y[r]);
        for (g, xi) in grad[..d].iter_mut().zip(x) {
            *g += err * xi;
        }
        grad[d] += err;
    }
    let m = rows.len() as f64;
    for (g, w) in grad[..d].iter_mut().zip(&params[..d]) {
        *g = *g / m + l2 * w;
    }
    grad[d] /= m;
}

/// Seeded initial parameters, `N(0, 0.01^2)` per coordinate.
pub fn init_params(dim: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let mut rng = rng::seeded(seed);
    let normal = Normal::new(0.0, 0.01).expect("valid normal");
    (0..=dim).map(|_| normal.sample(&mut rng)).collect()
}

/// Seed of the initial parameters for a training run seeded with `seed`.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(seed, "init")
}

/// Shuffle seed for client `client_ordinal` in round `round`. Standalone
/// training uses round 0, client 0: it is the one-client, one-round case of
/// the federated schedule.
pub fn local_seed(seed: u64, round: usize, client_ordinal: usize) -> u64 {
    derive_seed(seed, &format!("local/{round}/{client_ordinal}"))
}

/// Writes the full gradient for a batch of rows into the last argument.
pub type GradFn<'a> = dyn FnMut(&[f64], &[usize], &mut [f64]) + 'a;

/// Mini-batch descent for `config.epochs` epochs starting from `params`.
/// `grad_fn(params, batch_rows, grad)` must write the full batch gradient.
pub fn descend(params: &mut [f64], n_rows: usize, config: &TrainConfig, shuffle_seed: u64, grad_fn: &mut GradFn<'_>) {
    if n_rows == 0 {
        return;
    }
    let mut rng = rng::seeded(shuffle_seed);
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut grad = vec![0.0; params.len()];
    let mut velocity = vec![0.0; params.len()];
    for _ in 0..config.epochs {
        rng::shuffle(&mut order, &mut rng);
        for batch in order.chunks(config.batch_size) {
            grad_fn(params, batch, &mut grad);
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
                Optimizer::Momentum { beta } => {
                    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                        *v = beta * *v + g;
                        *p -= config.learning_rate * *v;
                    }
                }
            }
        }
    }
}

/// Plain cross-entropy local update; the building block of both standalone
/// and federated training.
pub fn local_update(params: &mut [f64], data: &EncodedData, config: &TrainConfig, shuffle_seed: u64) {
    let l2 = config.l2_penalty;
    descend(params, data.len(), config, shuffle_seed, &mut |p, rows, g| {
        ce_gradient(p, data, rows, l2, g)
    });
}

/// Trained model with its final losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub model: LinearModel,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

pub(crate) fn require_both_classes(d: &Dataset) -> Result<()> {
    if d.is_empty() {
        return Err(Error::Training("training split is empty".into()));
    }
    let pos = d.labels().iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == d.len() {
        return Err(Error::Training(
            "training split holds a single label class (degenerate fit)".into(),
        ));
    }
    Ok(())
}

pub fn train_logistic(split: &SplitSet, config: &TrainConfig) -> Result<LogisticFit> {
    config.validate()?;
    require_both_classes(&split.train)?;
    let encoding = FeatureEncoding::fit(split.schema(), &[&split.train], &config.encoding)?;
    let data = encoding.encode(&split.train)?;
    let mut params = init_params(encoding.dim(), init_seed(config.seed));
    local_update(&mut params, &data, config, local_seed(config.seed, 0, 0));
    let all: Vec<usize> = (0..data.len()).collect();
    let train_loss = ce_loss(&params, &data, &all, config.l2_penalty);
    let model = LinearModel::from_params(encoding, &params)?;
    let validation_loss = if split.validation.is_empty() {
        None
    } else {
        Some(model.loss(&split.validation, config.l2_penalty)?)
    };
    Ok(LogisticFit {
        model,
        train_loss,
        validation_loss,
    })
}

/// Full-batch encoded matrix helper for callers holding raw rows.
pub fn encoded(x: Vec<Vec<f64>>, y: Vec<u8>) -> EncodedData {
    let rows = x.len();
    let cols = x.first().map_or(0, Vec::len);
    EncodedData {
        x: Matrix {
            rows,
            cols,
            data: x.into_iter().flatten().collect(),
        },
        y,
    }
}
