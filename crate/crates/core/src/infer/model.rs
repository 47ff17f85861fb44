use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::quantize::DenseLayer;

/// Version written into model files and dataset headers.
pub const FORMAT_VERSION: u64 = 1;

/// A stack of dense layers: ReLU after every hidden layer, linear logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u64,
    pub layers: Vec<DenseLayer<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reference_accuracy: BTreeMap<String, f64>,
}

fn parse_err(path: &Path, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        field: field.into(),
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn number_list(v: &Value, path: &Path, field: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err(path, field, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .filter(|f| f.is_finite())
                .ok_or_else(|| parse_err(path, format!("{field}[{i}]"), "expected a finite number"))
        })
        .collect()
}

impl Model {
    pub fn new(layers: Vec<DenseLayer<f64>>) -> Result<Self> {
        let m = Model {
            format_version: FORMAT_VERSION,
            layers,
            reference_accuracy: BTreeMap::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json_str(&read(path)?, path)
    }

    /// Parses a model document; errors name the offending field path.
    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let root: Value =
            serde_json::from_str(text).map_err(|e| parse_err(path, "$", e.to_string()))?;
        let version = root
            .get("format_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err(path, "format_version", "missing or not an integer"))?;
        if version != FORMAT_VERSION {
            return Err(parse_err(
                path,
                "format_version",
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let layers_v = root
            .get("layers")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(path, "layers", "missing or not an array"))?;
        let mut layers = Vec::with_capacity(layers_v.len());
        for (li, lv) in layers_v.iter().enumerate() {
            let field = |name: &str| format!("layers[{li}].{name}");
            let weights_v = lv
                .get("weights")
                .and_then(Value::as_array)
                .ok_or_else(|| parse_err(path, field("weights"), "missing or not an array"))?;
            let weights = weights_v
                .iter()
                .enumerate()
                .map(|(r, row)| number_list(row, path, &format!("layers[{li}].weights[{r}]")))
                .collect::<Result<Vec<_>>>()?;
            let bias = number_list(
                lv.get("bias")
                    .ok_or_else(|| parse_err(path, field("bias"), "missing"))?,
                path,
                &field("bias"),
            )?;
            let relu = lv
                .get("relu")
                .and_then(Value::as_bool)
                .ok_or_else(|| parse_err(path, field("relu"), "missing or not a boolean"))?;
            layers.push(DenseLayer { weights, bias, relu });
        }
        let reference_accuracy = match root.get("reference_accuracy") {
            None => BTreeMap::new(),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| parse_err(path, "reference_accuracy", e.to_string()))?,
        };
        let model = Model {
            format_version: version,
            layers,
            reference_accuracy,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("model has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()
                .map_err(|e| Error::Validation(format!("layer {i}: {e}")))?;
            let last = i + 1 == self.layers.len();
            if !last && !l.relu {
                return Err(Error::Validation(format!(
                    "hidden layer {i} must apply ReLU so the next layer sees non-negative inputs"
                )));
            }
            if last && l.relu {
                return Err(Error::Validation("the output layer must be linear".into()));
            }
            if i > 0 && self.layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Validation(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.in_dim(),
                    i - 1,
                    self.layers[i - 1].out_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("validated").out_dim()
    }

    /// Plain double-precision forward pass.
    pub fn forward_float(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.affine(&h);
            if l.relu {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        h
    }
}

/// Labelled samples with features in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub source: Option<PathBuf>,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            samples,
            labels,
            source: None,
        })
    }

    /// Reads the CSV format: a `# format_version=N` first line, then rows of
    /// `label,feature,...`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read(path)?;
        let mut ds = Self::from_csv_str(&text, path)?;
        ds.source = Some(path.to_path_buf());
        Ok(ds)
    }

    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let version = first
            .trim()
            .strip_prefix("# format_version=")
            .ok_or_else(|| parse_err(path, "line 1", "expected a '# format_version=N' header"))?;
        if version.trim().parse::<u64>().ok() != Some(FORMAT_VERSION) {
            return Err(parse_err(
                path,
                "format_version",
                format!("unsupported version '{version}', expected {FORMAT_VERSION}"),
            ));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let (mut samples, mut labels) = (Vec::new(), Vec::new());
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(path, format!("row {row}"), e.to_string()))?;
            let mut fields = rec.iter();
            let label = fields
                .next()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| parse_err(path, format!("row {row}, column 0"), "label must be a non-negative integer"))?;
            let feats = fields
                .enumerate()
                .map(|(c, s)| {
                    s.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(path, format!("row {row}, column {}", c + 1), "not a number"))
                })
                .collect::<Result<Vec<f64>>>()?;
            samples.push(feats);
            labels.push(label);
        }
        Dataset::new(samples, labels)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks the dataset against a model's input size and class count.
    pub fn validate_for(&self, model: &Model) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Validation("dataset is empty".into()));
        }
        for (i, (s, &l)) in self.samples.iter().zip(&self.labels).enumerate() {
            if s.len() != model.input_dim() {
                return Err(Error::Validation(format!(
                    "sample {i} has {} features, the model expects {}",
                    s.len(),
                    model.input_dim()
                )));
            }
            if l >= model.n_classes() {
                return Err(Error::Validation(format!(
                    "sample {i} has label {l}, but the model has {} classes",
                    model.n_classes()
                )));
            }
            if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!(
                    "sample {i} has feature {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source: self.source.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{"format_version":1,"layers":[
        {"weights":[[1,0],[0,1]],"bias":[0,0],"relu":true},
        {"weights":[[1,-1],[-1,1]],"bias":[0.5,0],"relu":false}]}"#;

    #[test]
    fn loads_minimal_model() {
        let m = Model::from_json_str(TINY, Path::new("tiny.json")).unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.forward_float(&[1.0, 0.25]), vec![1.25, -0.75]);
        let back = Model::from_json_str(&m.to_json(), Path::new("x")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn missing_weights_names_the_layer() {
        let text = TINY.replacen(r#""weights":[[1,-1],[-1,1]],"#, "", 1);
        let err = Model::from_json_str(&text, Path::new("m.json")).unwrap_err();
        assert!(err.to_string().contains("layers[1].weights"), "{err}");
    }

    #[test]
    fn structural_checks() {
        let no_relu = TINY.replacen("true", "false", 1);
        assert!(Model::from_json_str(&no_relu, Path::new("m")).is_err());
        let bad_dims = TINY.replacen("[[1,-1],[-1,1]]", "[[1,-1,0],[-1,1,0]]", 1);
        assert!(Model::from_json_str(&bad_dims, Path::new("m")).is_err());
        let bad_version = TINY.replacen("\"format_version\":1", "\"format_version\":9", 1);
        assert!(Model::from_json_str(&bad_version, Path::new("m")).is_err());
    }

    #[test]
    fn dataset_parse_and_validate() {
        let m = Model::from_json_str(TINY, Path::new("m")).unwrap();
        let ds = Dataset::from_csv_str("# format_version=1\n0,0.5,1.0\n1,0,0\n", Path::new("d")).unwrap();
        assert_eq!(ds.len(), 2);
        ds.validate_for(&m).unwrap();
        let bad = Dataset::from_csv_str("# format_version=1\n2,0.5,1.0\n", Path::new("d")).unwrap();
        assert!(matches!(bad.validate_for(&m), Err(Error::Validation(_))));
        assert!(Dataset::from_csv_str("0,0.5,1.0\n", Path::new("d")).is_err());
        assert!(Dataset::from_csv_str("# format_version=1\nx,0.5\n", Path::new("d")).is_err());
        let empty = Dataset::from_csv_str("# format_version=1\n", Path::new("d")).unwrap();
        assert!(empty.validate_for(&m).is_err());
    }
}
