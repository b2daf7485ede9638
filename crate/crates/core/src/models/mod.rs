//! Local models: logistic regression (the federated model) and a small
//! gradient-boosted tree ensemble used as the second, nonlinear opinion in
//! the bias-labelling rule.

mod encoding;
mod gbdt;
mod logistic;
pub mod search;

use serde::{Deserialize, Serialize};

pub use encoding::{EncodedData, EncodedFeature, EncodingOptions, FeatureEncoding, Matrix};
pub use gbdt::{train_gbdt, Node, Tree, TreeConfig, TreeEnsemble};
pub use logistic::{
    ce_gradient, ce_loss, descend, encoded, init_params, init_seed, local_seed, local_update, logit, sigmoid,
    train_logistic, LinearModel, LogisticFit, Optimizer, TrainConfig, LOGIT_CLAMP,
};

use crate::error::{Error, Result};
use crate::tabular::{Dataset, SplitSet};

/// Probabilities and hard labels (`1` iff `p >= 0.5`).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let labels = probabilities.iter().map(|&p| u8::from(p >= 0.5)).collect();
        Prediction { probabilities, labels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Logistic(LinearModel),
    Trees(TreeEnsemble),
}

impl Model {
    pub fn predict_proba(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        match self {
            Model::Logistic(m) => m.predict_proba(dataset),
            Model::Trees(m) => m.predict_proba(dataset),
        }
    }
}

pub fn predict(model: &Model, dataset: &Dataset) -> Result<Prediction> {
    model.predict_proba(dataset).map(Prediction::from_probabilities)
}

/// Fraction of positions where `preds` equals `labels`.
pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Precondition("accuracy of an empty set".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// A model family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum TrainerSpec {
    Logistic(TrainConfig),
    Gbdt(TreeConfig),
}

impl TrainerSpec {
    pub fn id(&self) -> &'static str {
        match self {
            TrainerSpec::Logistic(_) => "logistic",
            TrainerSpec::Gbdt(_) => "gbdt",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainerSpec::Logistic(c) => c.validate(),
            TrainerSpec::Gbdt(c) => c.validate(),
        }
    }

    pub fn fit(&self, split: &SplitSet) -> Result<Model> {
        match self {
            TrainerSpec::Logistic(c) => train_logistic(split, c).map(|f| Model::Logistic(f.model)),
            TrainerSpec::Gbdt(c) => train_gbdt(split, c).map(Model::Trees),
        }
    }
}
