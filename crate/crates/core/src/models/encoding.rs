use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{ColumnData, ColumnKind, Dataset, Schema};

/// Which columns become model inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingOptions {
    /// Use sensitive attributes as features (default true).
    #[serde(default = "yes")]
    pub include_sensitive: bool,
    /// Columns never used as features (e.g. the `ST` key).
    #[serde(default)]
    pub exclude: Vec<String>,
}

fn yes() -> bool {
    true
}

impl Default for EncodingOptions {
    fn default() -> Self {
        EncodingOptions {
            include_sensitive: true,
            exclude: vec!["ST".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodedFeature {
    Numeric { column: String, mean: f64, std: f64 },
    OneHot { column: String, values: Vec<i64> },
}

impl EncodedFeature {
    fn width(&self) -> usize {
        match self {
            EncodedFeature::Numeric { .. } => 1,
            EncodedFeature::OneHot { values, .. } => values.len(),
        }
    }

    fn column(&self) -> &str {
        match self {
            EncodedFeature::Numeric { column, .. } | EncodedFeature::OneHot { column, .. } => column,
        }
    }
}

/// One-hot blocks for categoricals (schema order, then value order) and
/// standardized numerics. Stored with every trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub features: Vec<EncodedFeature>,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Encoded features with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedData {
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl EncodedData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

impl FeatureEncoding {
    /// Fits standardization statistics over the concatenation of `parts`
    /// (population standard deviation; constant columns get std 1).
    pub fn fit(schema: &Schema, parts: &[&Dataset], options: &EncodingOptions) -> Result<Self> {
        let mut features = Vec::new();
        for (idx, col) in schema.columns.iter().enumerate() {
            if options.exclude.contains(&col.name) || (!options.include_sensitive && schema.is_sensitive(&col.name)) {
                continue;
            }
            match col.kind {
                ColumnKind::Categorical => features.push(EncodedFeature::OneHot {
                    column: col.name.clone(),
                    values: col.values(),
                }),
                ColumnKind::Numeric => {
                    let (mut n, mut sum) = (0usize, 0.0);
                    for part in parts {
                        if let ColumnData::Numeric(v) = &part.columns()[idx] {
                            n += v.len();
                            sum += v.iter().sum::<f64>();
                        }
                    }
                    let mean = if n > 0 { sum / n as f64 } else { 0.0 };
                    let mut ss = 0.0;
                    for part in parts {
                        if let ColumnData::Numeric(v) = &part.columns()[idx] {
                            ss += v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
                        }
                    }
                    let std = if n > 0 { (ss / n as f64).sqrt() } else { 0.0 };
                    features.push(EncodedFeature::Numeric {
                        column: col.name.clone(),
                        mean,
                        std: if std > 1e-12 { std } else { 1.0 },
                    });
                }
            }
        }
        Ok(FeatureEncoding { features })
    }

    pub fn dim(&self) -> usize {
        self.features.iter().map(EncodedFeature::width).sum()
    }

    /// Names of the encoded dimensions, e.g. `AGEP`, `SEX=2`.
    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for f in &self.features {
            match f {
                EncodedFeature::Numeric { column, .. } => out.push(column.clone()),
                EncodedFeature::OneHot { column, values } => out.extend(values.iter().map(|v| format!("{column}={v}"))),
            }
        }
        out
    }

    /// Fails when a required column is missing, has another kind, or has a
    /// different set of allowed values than the encoding was fit on.
    pub fn encode(&self, dataset: &Dataset) -> Result<EncodedData> {
        let schema = dataset.schema();
        let mut sources = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let col = schema
                .column(f.column())
                .ok_or_else(|| Error::Schema(format!("model expects column {}", f.column())))?;
            match f {
                EncodedFeature::Numeric { .. } if col.kind != ColumnKind::Numeric => {
                    return Err(Error::Schema(format!("column {} should be numeric", col.name)))
                }
                EncodedFeature::OneHot { values, .. }
                    if col.kind != ColumnKind::Categorical || col.values() != *values =>
                {
                    return Err(Error::Schema(format!(
                        "column {} does not match the model's categorical encoding",
                        col.name
                    )))
                }
                _ => {}
            }
            sources.push(dataset.column(f.column()).expect("checked above"));
        }
        let dim = self.dim();
        let mut x = Matrix::zeros(dataset.len(), dim);
        for r in 0..dataset.len() {
            let row = &mut x.data[r * dim..(r + 1) * dim];
            let mut offset = 0;
            for (f, src) in self.features.iter().zip(&sources) {
                match f {
                    EncodedFeature::Numeric { mean, std, .. } => {
                        row[offset] = (src.value_f64(r) - mean) / std;
                    }
                    EncodedFeature::OneHot { values, column } => {
                        let ColumnData::Categorical(codes) = src else {
                            unreachable!("kind checked")
                        };
                        let pos = values.binary_search(&codes[r]).map_err(|_| {
                            Error::Schema(format!("row {r}: {column} code {} not in encoding", codes[r]))
                        })?;
                        row[offset + pos] = 1.0;
                    }
                }
                offset += f.width();
            }
        }
        Ok(EncodedData {
            x,
            y: dataset.labels().to_vec(),
        })
    }
}
