//! Per-example Gaussian fits and the five attack variants.
//!
//! Every attack is evaluated leave-one-model-out: each shadow model `t` in turn
//! plays the target, and its score at example `j` is judged against Gaussians
//! fitted on the *other* models' scores at `j`. The pooled result has one
//! entry per `(t, j)` cell, stored at index `t * M + j`, with truth `mask[t][j]`.
//!
//! Attack result file:
//! `"ATTK" | version u32 = 1 | attack u8 | score u8 | L u64 | L f64 scores | L truth bytes`.

use std::fmt;
use std::path::Path;

use crate::codec::{self, Reader, Writer};
use crate::error::{Error, Result};
use crate::normal::{log_pdf, normal_cdf};
use crate::scoring::{ScoreMatrix, ScoreVariant};
use crate::shadows::MembershipMask;

const MAGIC: &[u8; 4] = b"ATTK";
const VERSION: u32 = 1;

pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianParams {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Mean and unbiased variance, floored at [`VARIANCE_FLOOR`]. A single sample gets the floor.
pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianParams> {
    if samples.is_empty() {
        return Err(Error::invalid("gaussian fit", "no samples"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("gaussian fit", "non-finite sample"));
    }
    let n = samples.len() as f64;
    // Shifted by the first sample: exact for constant inputs, less cancellation otherwise.
    let shift = samples[0];
    let mean = shift + samples.iter().map(|v| v - shift).sum::<f64>() / n;
    let variance = if samples.len() < 2 {
        VARIANCE_FLOOR
    } else {
        let ss: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).max(VARIANCE_FLOOR)
    };
    Ok(GaussianParams { mean, variance })
}

/// `ln N(conf; q_in) - ln N(conf; q_out)`.
pub fn online_score(conf: f64, q_in: &GaussianParams, q_out: &GaussianParams) -> f64 {
    log_pdf(conf, q_in.mean, q_in.variance) - log_pdf(conf, q_out.mean, q_out.variance)
}

/// Mass of the OUT Gaussian below `conf`; higher means more member-like.
pub fn offline_score(conf: f64, q_out: &GaussianParams) -> f64 {
    normal_cdf((conf - q_out.mean) / q_out.std_dev())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackVariant {
    Online,
    OnlineFixedVariance,
    Offline,
    OfflineFixedVariance,
    GlobalThreshold,
}

impl AttackVariant {
    /// Row order of the results grid.
    pub const ALL: [AttackVariant; 5] = [
        AttackVariant::Online,
        AttackVariant::OnlineFixedVariance,
        AttackVariant::Offline,
        AttackVariant::OfflineFixedVariance,
        AttackVariant::GlobalThreshold,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AttackVariant::Online => "online",
            AttackVariant::OnlineFixedVariance => "online-fv",
            AttackVariant::Offline => "offline",
            AttackVariant::OfflineFixedVariance => "offline-fv",
            AttackVariant::GlobalThreshold => "global",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AttackVariant::Online => "Online",
            AttackVariant::OnlineFixedVariance => "Online, FV",
            AttackVariant::Offline => "Offline",
            AttackVariant::OfflineFixedVariance => "Offline, FV",
            AttackVariant::GlobalThreshold => "Global threshold",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name).ok_or_else(|| {
            Error::invalid(
                "attack variant",
                format!("`{name}` (expected online, online-fv, offline, offline-fv or global)"),
            )
        })
    }

    fn uses_in(self) -> bool {
        matches!(self, AttackVariant::Online | AttackVariant::OnlineFixedVariance)
    }

    fn uses_out(self) -> bool {
        self != AttackVariant::GlobalThreshold
    }

    fn fixed_variance(self) -> bool {
        matches!(self, AttackVariant::OnlineFixedVariance | AttackVariant::OfflineFixedVariance)
    }
}

impl fmt::Display for AttackVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pooled attack scores (higher = more likely member) with ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub scores: Vec<f64>,
    pub membership_truth: Vec<bool>,
    pub variant: AttackVariant,
    pub score_variant: ScoreVariant,
}

impl AttackResult {
    pub fn new(
        scores: Vec<f64>,
        membership_truth: Vec<bool>,
        variant: AttackVariant,
        score_variant: ScoreVariant,
    ) -> Result<Self> {
        if scores.len() != membership_truth.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} truth labels",
                scores.len(),
                membership_truth.len()
            )));
        }
        if let Some(k) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("attack result", format!("non-finite score at cell {k}")));
        }
        Ok(AttackResult {
            scores,
            membership_truth,
            variant,
            score_variant,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(MAGIC, VERSION);
        w.u8(self.variant.code());
        w.u8(self.score_variant.code());
        w.u64(self.scores.len() as u64);
        w.f64s(&self.scores);
        let truth: Vec<u8> = self.membership_truth.iter().map(|&b| u8::from(b)).collect();
        w.bytes(&truth);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "attack result");
        r.header(MAGIC, VERSION)?;
        let at = r.offset();
        let variant = AttackVariant::from_code(r.u8()?).ok_or_else(|| r.error_at(at, "unknown attack variant"))?;
        let at = r.offset();
        let score_variant =
            ScoreVariant::from_code(r.u8()?).ok_or_else(|| r.error_at(at, "unknown score variant"))?;
        let len = r.dim()?;
        r.require(len, 9)?;
        let body_at = r.offset();
        let scores = r.f64s(len)?;
        if let Some(k) = scores.iter().position(|v| !v.is_finite()) {
            return Err(r.error_at(body_at + 8 * k as u64, "non-finite score"));
        }
        let truth_at = r.offset();
        let raw = r.bytes(len)?;
        let mut truth = Vec::with_capacity(len);
        for (k, &b) in raw.iter().enumerate() {
            match b {
                0 | 1 => truth.push(b == 1),
                _ => return Err(r.error_at(truth_at + k as u64, format!("truth byte {b} is not 0/1"))),
            }
        }
        r.finish()?;
        AttackResult::new(scores, truth, variant, score_variant)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        codec::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&codec::read_file(path)?)
    }
}

/// Leave-one-out IN/OUT samples of example `j` with model `t` excluded.
fn split_samples(scores: &ScoreMatrix, mask: &MembershipMask, t: usize, j: usize, ins: &mut Vec<f64>, outs: &mut Vec<f64>) {
    ins.clear();
    outs.clear();
    for i in (0..scores.num_models()).filter(|&i| i != t) {
        if mask.is_in(i, j) {
            ins.push(scores.get(i, j));
        } else {
            outs.push(scores.get(i, j));
        }
    }
}

/// Pooled (IN, OUT) variances for target model `t`: the mean over examples of the
/// leave-`t`-out unbiased variances, using only examples with at least two samples
/// on that side. Falls back to the floor when no example qualifies.
fn pooled_variances(scores: &ScoreMatrix, mask: &MembershipMask, t: usize) -> Result<(f64, f64)> {
    let (mut ins, mut outs) = (Vec::new(), Vec::new());
    let (mut sum_in, mut n_in, mut sum_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for j in 0..scores.num_examples() {
        split_samples(scores, mask, t, j, &mut ins, &mut outs);
        if ins.len() >= 2 {
            sum_in += fit_gaussian(&ins)?.variance;
            n_in += 1;
        }
        if outs.len() >= 2 {
            sum_out += fit_gaussian(&outs)?.variance;
            n_out += 1;
        }
    }
    let pool = |sum: f64, n: usize| {
        if n == 0 {
            VARIANCE_FLOOR
        } else {
            (sum / n as f64).max(VARIANCE_FLOOR)
        }
    };
    Ok((pool(sum_in, n_in), pool(sum_out, n_out)))
}

/// Run one attack variant over every `(target model, example)` cell.
pub fn run_attack(scores: &ScoreMatrix, mask: &MembershipMask, variant: AttackVariant) -> Result<AttackResult> {
    let (n, m) = (scores.num_models(), scores.num_examples());
    if mask.num_models() != n || mask.num_examples() != m {
        return Err(Error::Shape(format!(
            "scores are {n} x {m}, mask is {} x {}",
            mask.num_models(),
            mask.num_examples()
        )));
    }
    // Excluding the target leaves (count - 1) samples on the target's own side.
    for j in 0..m {
        let ins = mask.column_count(j);
        let outs = n - ins;
        if variant.uses_in() && (ins < 2 || outs < 2) {
            return Err(Error::invalid(
                "attack input",
                format!(
                    "example {j}: {variant} needs at least 2 IN and 2 OUT shadow scores \
                     (has {ins} IN, {outs} OUT) so that every held-out target keeps one of each"
                ),
            ));
        }
        if variant.uses_out() && outs < 2 {
            return Err(Error::invalid(
                "attack input",
                format!("example {j}: {variant} needs at least 2 OUT shadow scores (has {outs})"),
            ));
        }
    }

    let mut out_scores = Vec::with_capacity(n * m);
    let mut truth = Vec::with_capacity(n * m);
    let (mut ins, mut outs) = (Vec::new(), Vec::new());
    for t in 0..n {
        let pooled = if variant.fixed_variance() {
            Some(pooled_variances(scores, mask, t)?)
        } else {
            None
        };
        for j in 0..m {
            let s = scores.get(t, j);
            let value = match variant {
                AttackVariant::GlobalThreshold => s,
                _ => {
                    split_samples(scores, mask, t, j, &mut ins, &mut outs);
                    let mut q_out = fit_gaussian(&outs)?;
                    if let Some((_, var_out)) = pooled {
                        q_out.variance = var_out;
                    }
                    if variant.uses_in() {
                        let mut q_in = fit_gaussian(&ins)?;
                        if let Some((var_in, _)) = pooled {
                            q_in.variance = var_in;
                        }
                        online_score(s, &q_in, &q_out)
                    } else {
                        offline_score(s, &q_out)
                    }
                }
            };
            out_scores.push(value);
            truth.push(mask.is_in(t, j));
        }
    }
    AttackResult::new(out_scores, truth, variant, scores.variant())
}
