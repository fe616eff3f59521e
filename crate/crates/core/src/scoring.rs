//! Per-(model, example) confidence statistics.
//!
//! Score file: `"SCOR" | version u32 = 1 | variant u8 | N u64 | M u64 | N*M f64`.

use std::fmt;
use std::path::Path;

use crate::codec::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::shadows::PredictionMatrix;
use crate::LOG_EPS;

const MAGIC: &[u8; 4] = b"SCOR";
const VERSION: u32 = 1;

/// Upper clamp for `p_y` in the logit baseline, so `1 - p_y` never reaches zero.
pub const LOGIT_UPPER: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScoreVariant {
    /// `ln(p_y / (1 - p_y))`.
    BaselineLogitLoss,
    /// `p_y`.
    Confidence,
    /// `ln(p_y + 1e-45)`.
    LogConfidence,
    /// `max_c p_c`, needs no label.
    Argmax,
    /// `ln(max_c p_c + 1e-45)`, needs no label.
    LogArgmax,
}

impl ScoreVariant {
    /// Column order of the results grid.
    pub const ALL: [ScoreVariant; 5] = [
        ScoreVariant::BaselineLogitLoss,
        ScoreVariant::Confidence,
        ScoreVariant::LogConfidence,
        ScoreVariant::Argmax,
        ScoreVariant::LogArgmax,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            ScoreVariant::BaselineLogitLoss => "baseline",
            ScoreVariant::Confidence => "conf",
            ScoreVariant::LogConfidence => "logconf",
            ScoreVariant::Argmax => "argmax",
            ScoreVariant::LogArgmax => "logargmax",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScoreVariant::BaselineLogitLoss => "Loss value (baseline)",
            ScoreVariant::Confidence => "Confidence",
            ScoreVariant::LogConfidence => "log(Confidence)",
            ScoreVariant::Argmax => "Argmax",
            ScoreVariant::LogArgmax => "log(Argmax)",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| {
                Error::invalid(
                    "score variant",
                    format!("`{name}` (expected baseline, conf, logconf, argmax or logargmax)"),
                )
            })
    }

    pub fn needs_labels(self) -> bool {
        matches!(
            self,
            ScoreVariant::BaselineLogitLoss | ScoreVariant::Confidence | ScoreVariant::LogConfidence
        )
    }

    /// Apply the transform to one probability vector. `y` is ignored by the argmax variants.
    pub fn score(self, probs: &[f64], y: usize) -> f64 {
        match self {
            ScoreVariant::BaselineLogitLoss => score_baseline(probs, y),
            ScoreVariant::Confidence => score_confidence(probs, y),
            ScoreVariant::LogConfidence => score_log_confidence(probs, y),
            ScoreVariant::Argmax => score_argmax(probs),
            ScoreVariant::LogArgmax => score_log_argmax(probs),
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Logit-scaled true-class probability, with `p_y` clamped to `[1e-45, 1 - 1e-12]`.
pub fn score_baseline(probs: &[f64], y: usize) -> f64 {
    let p = probs[y].clamp(LOG_EPS, LOGIT_UPPER);
    p.ln() - (-p).ln_1p()
}

pub fn score_confidence(probs: &[f64], y: usize) -> f64 {
    probs[y]
}

pub fn score_log_confidence(probs: &[f64], y: usize) -> f64 {
    (score_confidence(probs, y) + LOG_EPS).ln()
}

pub fn score_argmax(probs: &[f64]) -> f64 {
    probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn score_log_argmax(probs: &[f64]) -> f64 {
    (score_argmax(probs) + LOG_EPS).ln()
}

/// `scores[i * M + j]` for model `i`, example `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    scores: Vec<f64>,
    num_models: usize,
    num_examples: usize,
    variant: ScoreVariant,
}

impl ScoreMatrix {
    pub fn new(num_models: usize, num_examples: usize, variant: ScoreVariant, scores: Vec<f64>) -> Result<Self> {
        if num_models == 0 || num_examples == 0 {
            return Err(Error::invalid("score matrix", "dimensions must be positive"));
        }
        if num_models.checked_mul(num_examples) != Some(scores.len()) {
            return Err(Error::Shape(format!(
                "{} scores for {num_models} x {num_examples}",
                scores.len()
            )));
        }
        if let Some(k) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "score matrix",
                format!("non-finite score at model {}, example {}", k / num_examples, k % num_examples),
            ));
        }
        Ok(ScoreMatrix {
            scores,
            num_models,
            num_examples,
            variant,
        })
    }

    pub fn num_models(&self) -> usize {
        self.num_models
    }

    pub fn num_examples(&self) -> usize {
        self.num_examples
    }

    pub fn variant(&self) -> ScoreVariant {
        self.variant
    }

    pub fn get(&self, model: usize, example: usize) -> f64 {
        self.scores[model * self.num_examples + example]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.scores
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC, VERSION);
        w.u8(self.variant.code());
        w.u64(self.num_models as u64);
        w.u64(self.num_examples as u64);
        w.f64s(&self.scores);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "score");
        r.header(MAGIC, VERSION)?;
        let v_at = r.offset();
        let variant = ScoreVariant::from_code(r.u8()?).ok_or_else(|| r.error_at(v_at, "unknown score variant"))?;
        let dims_at = r.offset();
        let n = r.dim()?;
        let m = r.dim()?;
        if n == 0 || m == 0 {
            return Err(r.error_at(dims_at, "zero dimension"));
        }
        let len = codec::checked_len(&r, &[n, m])?;
        let body_at = r.offset();
        let scores = r.f64s(len)?;
        if let Some(k) = scores.iter().position(|v| !v.is_finite()) {
            return Err(r.error_at(body_at + 8 * k as u64, "non-finite score"));
        }
        r.finish()?;
        ScoreMatrix::new(n, m, variant, scores)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

/// Apply one transform to every cell of a prediction matrix.
///
/// `labels` must be present (one per example, each `< C`) for the label-dependent variants.
pub fn score_matrix(pm: &PredictionMatrix, labels: Option<&[u32]>, variant: ScoreVariant) -> Result<ScoreMatrix> {
    let (n, m, c) = (pm.num_models(), pm.num_examples(), pm.num_classes());
    let labels = match (labels, variant.needs_labels()) {
        (None, true) => {
            return Err(Error::invalid(
                "score configuration",
                format!("variant `{variant}` needs true labels (pass a dataset)"),
            ))
        }
        (Some(l), _) => {
            if l.len() != m {
                return Err(Error::Shape(format!("{} labels for {m} examples", l.len())));
            }
            if let Some(j) = l.iter().position(|&y| y as usize >= c) {
                return Err(Error::invalid("label", format!("example {j}: {} >= {c} classes", l[j])));
            }
            Some(l)
        }
        (None, false) => None,
    };
    let mut scores = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            let y = labels.map_or(0, |l| l[j] as usize);
            scores.push(variant.score(pm.get(i, j), y));
        }
    }
    ScoreMatrix::new(n, m, variant, scores)
}
