//! The IN/OUT shadow protocol.
//!
//! Mask file: `"MMSK" | version u32 = 1 | N u64 | M u64 | N*M bytes (0/1, row-major)`.
//! Prediction file: `"PMAT" | version u32 = 1 | N u64 | M u64 | C u64 | N*M*C f64 row-major`.

use std::path::Path;

use rand::seq::index;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::codec::{self, Reader, Writer};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Architecture, Classifier, TrainConfig};
use crate::rng::{mix, rng_from_seed};

const MASK_MAGIC: &[u8; 4] = b"MMSK";
const PRED_MAGIC: &[u8; 4] = b"PMAT";
const VERSION: u32 = 1;

/// `entries[i * M + j]` is true when shadow model `i` trained on example `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipMask {
    entries: Vec<bool>,
    num_models: usize,
    num_examples: usize,
}

impl MembershipMask {
    /// Validates dimensions and per-example balance (exactly `N/2` IN per column).
    pub fn from_entries(num_models: usize, num_examples: usize, entries: Vec<bool>) -> Result<Self> {
        check_mask_dims(num_models, num_examples)?;
        if entries.len() != num_models * num_examples {
            return Err(Error::Shape(format!(
                "{} mask entries for {num_models} x {num_examples}",
                entries.len()
            )));
        }
        let mask = MembershipMask {
            entries,
            num_models,
            num_examples,
        };
        if let Some(j) = (0..num_examples).find(|&j| mask.column_count(j) != num_models / 2) {
            return Err(Error::invalid(
                "membership mask",
                format!("example {j} is IN for {} of {num_models} models", mask.column_count(j)),
            ));
        }
        Ok(mask)
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_examples(&self) -> usize {
        self.num_examples
    }

    pub fn is_in(&self, model: usize, example: usize) -> bool {
        self.entries[model * self.num_examples + example]
    }

    pub fn entries(&self) -> &[bool] {
        &self.entries
    }

    /// Examples in model `i`'s training set, ascending.
    pub fn training_ids(&self, model: usize) -> Vec<usize> {
        (0..self.num_examples).filter(|&j| self.is_in(model, j)).collect()
    }

    pub fn column_count(&self, example: usize) -> usize {
        (0..self.num_models).filter(|&i| self.is_in(i, example)).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MASK_MAGIC, VERSION);
        w.u64(self.num_models as u64);
        w.u64(self.num_examples as u64);
        let bytes: Vec<u8> = self.entries.iter().map(|&b| u8::from(b)).collect();
        w.bytes(&bytes);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "mask");
        r.header(MASK_MAGIC, VERSION)?;
        let n_at = r.offset();
        let n = r.dim()?;
        let m = r.dim()?;
        if let Err(e) = check_mask_dims(n, m) {
            return Err(r.error_at(n_at, e.to_string()));
        }
        let len = codec::checked_len(&r, &[n, m])?;
        let body_at = r.offset();
        let raw = r.bytes(len)?;
        let mut entries = Vec::with_capacity(len);
        for (k, &b) in raw.iter().enumerate() {
            match b {
                0 => entries.push(false),
                1 => entries.push(true),
                _ => return Err(r.error_at(body_at + k as u64, format!("mask byte {b} is not 0/1"))),
            }
        }
        r.finish()?;
        MembershipMask::from_entries(n, m, entries).map_err(|e| r.error_at(body_at, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

fn check_mask_dims(n: usize, m: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::invalid(
            "number of models",
            format!("{n}: must be even and at least 2 so each example is IN for exactly half"),
        ));
    }
    if m == 0 {
        return Err(Error::invalid("number of examples", "must be at least 1"));
    }
    Ok(())
}

/// For each example independently, mark a seeded uniform choice of `N/2` models as IN.
///
/// One ChaCha stream (seeded by `seed`) is consumed column by column, so the
/// mask is a pure function of `(N, M, seed)`.
pub fn build_mask(num_models: usize, num_examples: usize, seed: u64) -> Result<MembershipMask> {
    check_mask_dims(num_models, num_examples)?;
    let mut rng = rng_from_seed(seed);
    let mut entries = vec![false; num_models * num_examples];
    for j in 0..num_examples {
        for i in index::sample(&mut rng, num_models, num_models / 2) {
            entries[i * num_examples + j] = true;
        }
    }
    MembershipMask::from_entries(num_models, num_examples, entries)
}

/// Shadow ensemble settings. `train.seed` is ignored: model `i` trains with `mix(master_seed, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub num_models: usize,
    pub arch: Architecture,
    pub train: TrainConfig,
    pub master_seed: u64,
}

impl EnsembleConfig {
    pub fn model_seed(&self, index: usize) -> u64 {
        mix(self.master_seed, index as u64)
    }
}

/// Train model `i` on exactly the examples with `mask[i][j] == true`.
///
/// Models are trained in parallel when the `parallel` feature is on; each task
/// owns its output slot so the result does not depend on scheduling.
pub fn train_ensemble(ds: &Dataset, mask: &MembershipMask, cfg: &EnsembleConfig) -> Result<Vec<Classifier>> {
    if mask.num_models() != cfg.num_models || mask.num_examples() != ds.len() {
        return Err(Error::Shape(format!(
            "mask is {} x {}, expected {} models x {} examples",
            mask.num_models(),
            mask.num_examples(),
            cfg.num_models,
            ds.len()
        )));
    }
    cfg.train.validate()?;
    let train_one = |i: usize| -> Result<Classifier> {
        let train_cfg = TrainConfig {
            seed: cfg.model_seed(i),
            ..cfg.train.clone()
        };
        model::train_on(ds, &mask.training_ids(i), &cfg.arch, &train_cfg).map_err(|e| Error::Model {
            index: i,
            source: Box::new(e),
        })
    };
    #[cfg(feature = "parallel")]
    let models = (0..cfg.num_models).into_par_iter().map(train_one).collect();
    #[cfg(not(feature = "parallel"))]
    let models = (0..cfg.num_models).map(train_one).collect();
    models
}

/// Softmax outputs of every model on every example: `probs[(i * M + j) * C + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    probs: Vec<f64>,
    num_models: usize,
    num_examples: usize,
    num_classes: usize,
}

impl PredictionMatrix {
    /// Validates that every `(i, j)` slice is a probability vector (entries in [0, 1], sum 1 within 1e-9).
    pub fn new(num_models: usize, num_examples: usize, num_classes: usize, probs: Vec<f64>) -> Result<Self> {
        if num_models == 0 || num_examples == 0 || num_classes == 0 {
            return Err(Error::invalid("prediction matrix", "dimensions must be positive"));
        }
        let expected = num_models
            .checked_mul(num_examples)
            .and_then(|v| v.checked_mul(num_classes));
        if expected != Some(probs.len()) {
            return Err(Error::Shape(format!(
                "{} values for {num_models} x {num_examples} x {num_classes}",
                probs.len()
            )));
        }
        if let Some(k) = probs.chunks_exact(num_classes).position(|p| !is_distribution(p)) {
            return Err(Error::invalid(
                "prediction matrix",
                format!(
                    "slice (model {}, example {}) is not a probability vector",
                    k / num_examples,
                    k % num_examples
                ),
            ));
        }
        Ok(PredictionMatrix {
            probs,
            num_models,
            num_examples,
            num_classes,
        })
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_examples(&self) -> usize {
        self.num_examples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, model: usize, example: usize) -> &[f64] {
        let at = (model * self.num_examples + example) * self.num_classes;
        &self.probs[at..at + self.num_classes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(PRED_MAGIC, VERSION);
        w.u64(self.num_models as u64);
        w.u64(self.num_examples as u64);
        w.u64(self.num_classes as u64);
        w.f64s(&self.probs);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "prediction");
        r.header(PRED_MAGIC, VERSION)?;
        let dims_at = r.offset();
        let n = r.dim()?;
        let m = r.dim()?;
        let c = r.dim()?;
        if n == 0 || m == 0 || c == 0 {
            return Err(r.error_at(dims_at, "zero dimension"));
        }
        let len = codec::checked_len(&r, &[n, m, c])?;
        let body_at = r.offset();
        let probs = r.f64s(len)?;
        if let Some(k) = probs.chunks_exact(c).position(|p| !is_distribution(p)) {
            return Err(r.error_at(
                body_at + (k * c * 8) as u64,
                "slice is not a probability vector",
            ));
        }
        r.finish()?;
        PredictionMatrix::new(n, m, c, probs)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|v| (0.0..=1.0).contains(v)) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

/// Evaluate every model on every example.
pub fn predict_matrix(models: &[Classifier], ds: &Dataset) -> Result<PredictionMatrix> {
    if models.is_empty() {
        return Err(Error::invalid("prediction", "no models"));
    }
    for (i, m) in models.iter().enumerate() {
        let a = m.architecture();
        if a.input_dim != ds.dim() || a.num_classes != ds.num_classes() {
            return Err(Error::Shape(format!(
                "model {i} expects {} features / {} classes, dataset has {} / {}",
                a.input_dim,
                a.num_classes,
                ds.dim(),
                ds.num_classes()
            )));
        }
    }
    let (m, c) = (ds.len(), ds.num_classes());
    let mut probs = vec![0.0; models.len() * m * c];
    let fill = |(i, block): (usize, &mut [f64])| -> Result<()> {
        for (j, out) in block.chunks_exact_mut(c).enumerate() {
            out.copy_from_slice(&models[i].forward(ds.row(j))?);
        }
        Ok(())
    };
    #[cfg(feature = "parallel")]
    probs.par_chunks_mut(m * c).enumerate().try_for_each(fill)?;
    #[cfg(not(feature = "parallel"))]
    probs.chunks_mut(m * c).enumerate().try_for_each(fill)?;
    PredictionMatrix::new(models.len(), m, c, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};
    use crate::model::Activation;

    #[test]
    fn two_models_split_every_column() {
        let mask = build_mask(2, 37, 5).unwrap();
        for j in 0..37 {
            assert!(mask.is_in(0, j) ^ mask.is_in(1, j));
        }
    }

    #[test]
    fn sixteen_models_balanced_and_reproducible() {
        let a = build_mask(16, 1000, 3).unwrap();
        assert!((0..1000).all(|j| a.column_count(j) == 8));
        assert_eq!(a, build_mask(16, 1000, 3).unwrap());
        assert_ne!(a, build_mask(16, 1000, 4).unwrap());
    }

    #[test]
    fn odd_or_tiny_model_counts_rejected() {
        assert!(matches!(build_mask(3, 10, 0), Err(Error::Invalid { .. })));
        assert!(build_mask(0, 10, 0).is_err());
        assert!(build_mask(4, 0, 0).is_err());
    }

    #[test]
    fn unbalanced_mask_rejected() {
        let e = vec![true, false, true, false];
        assert!(MembershipMask::from_entries(2, 2, e).is_err());
    }

    #[test]
    fn mask_file_checks() {
        let mask = build_mask(4, 6, 1).unwrap();
        let bytes = mask.to_bytes();
        assert_eq!(MembershipMask::from_bytes(&bytes).unwrap(), mask);
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] = 2;
        assert!(matches!(
            MembershipMask::from_bytes(&bad),
            Err(Error::Format { offset, .. }) if offset == last as u64
        ));
        assert!(MembershipMask::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    fn tiny() -> Dataset {
        generate_synthetic(&SynthSpec {
            num_classes: 2,
            dim: 3,
            per_class_count: 2,
            cluster_spread: 1.0,
            class_center_scale: 2.0,
            seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn two_model_training_sets_are_complementary() {
        let ds = tiny();
        let mask = build_mask(2, 4, 9).unwrap();
        let a = mask.training_ids(0);
        let b = mask.training_ids(1);
        assert_eq!(a.len() + b.len(), 4);
        assert!(a.iter().all(|j| !b.contains(j)));

        let cfg = EnsembleConfig {
            num_models: 2,
            arch: Architecture::new(3, vec![4], 2, Activation::Relu).unwrap(),
            train: TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            },
            master_seed: 8,
        };
        let m1 = train_ensemble(&ds, &mask, &cfg).unwrap();
        let m2 = train_ensemble(&ds, &mask, &cfg).unwrap();
        assert_eq!(m1.len(), 2);
        for (x, y) in m1.iter().zip(&m2) {
            assert_eq!(x.to_bytes(), y.to_bytes());
        }
        // model i equals a direct train_on with the derived seed
        let direct = model::train_on(
            &ds,
            &a,
            &cfg.arch,
            &TrainConfig {
                seed: cfg.model_seed(0),
                ..cfg.train.clone()
            },
        )
        .unwrap();
        assert_eq!(direct, m1[0]);
    }

    #[test]
    fn ensemble_rejects_mismatched_mask() {
        let ds = tiny();
        let mask = build_mask(2, 5, 9).unwrap();
        let cfg = EnsembleConfig {
            num_models: 2,
            arch: Architecture::new(3, vec![], 2, Activation::Relu).unwrap(),
            train: TrainConfig::default(),
            master_seed: 0,
        };
        assert!(matches!(train_ensemble(&ds, &mask, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_model_predicts_uniform() {
        let ds = generate_synthetic(&SynthSpec {
            num_classes: 2,
            dim: 2,
            per_class_count: 1,
            cluster_spread: 1.0,
            class_center_scale: 1.0,
            seed: 2,
        })
        .unwrap();
        let ds = Dataset::new(
            [ds.features(), &[0.3, 0.4]].concat(),
            vec![0, 1, 0],
            2,
            2,
        )
        .unwrap();
        let zero = Classifier::zeros(&Architecture::new(2, vec![], 2, Activation::Relu).unwrap()).unwrap();
        let pm = predict_matrix(&[zero], &ds).unwrap();
        for j in 0..3 {
            assert_eq!(pm.get(0, j), &[0.5, 0.5]);
        }
    }

    #[test]
    fn prediction_matrix_rejects_non_distributions() {
        assert!(PredictionMatrix::new(1, 1, 2, vec![0.5, 0.6]).is_err());
        assert!(PredictionMatrix::new(1, 1, 2, vec![-0.1, 1.1]).is_err());
        assert!(PredictionMatrix::new(1, 1, 2, vec![f64::NAN, 1.0]).is_err());
        let pm = PredictionMatrix::new(1, 2, 2, vec![0.5, 0.5, 0.25, 0.75]).unwrap();
        let mut bytes = pm.to_bytes();
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&0.9f64.to_le_bytes());
        match PredictionMatrix::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, (n - 16) as u64),
            other => panic!("{other:?}"),
        }
    }
}
