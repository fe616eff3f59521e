//! Browser bindings. Every entry point takes plain numbers and returns a JSON string,
//! or throws a string describing the validation error.

use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

use mia_core::evaluation::{evaluate_grid, render_svg, roc_curve, DEFAULT_FPR_LEVELS};
use mia_core::model::{Activation, Architecture, TrainConfig};
use mia_core::rng::{mix, rng_from_seed, streams};
use mia_core::{
    auc, build_mask, generate_synthetic, predict_matrix, run_attack, score_matrix, train_ensemble, AttackResult,
    AttackVariant, EnsembleConfig, Error, ScoreMatrix, ScoreVariant, SynthSpec,
};

const MAX_ROC_POINTS: usize = 200;

#[derive(Serialize)]
struct Curve {
    attack: &'static str,
    label: &'static str,
    auc: f64,
    /// `[fpr, tpr]` pairs.
    roc: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct World {
    truth_auc: f64,
    curves: Vec<Curve>,
}

#[derive(Serialize)]
struct ScoreCurve {
    score: &'static str,
    label: &'static str,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Transforms {
    p: Vec<f64>,
    curves: Vec<ScoreCurve>,
}

#[derive(Serialize)]
struct Cell {
    attack: &'static str,
    score: &'static str,
    auc: f64,
    tpr: Vec<f64>,
    balanced_accuracy: f64,
}

#[derive(Serialize)]
struct Grid {
    train_accuracy: f64,
    cells: Vec<Cell>,
    svg: String,
}

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn thin(points: &[(f64, f64)]) -> Vec<[f64; 2]> {
    let step = points.len().div_ceil(MAX_ROC_POINTS).max(1);
    let mut out: Vec<[f64; 2]> = points.iter().step_by(step).map(|&(x, y)| [x, y]).collect();
    if let Some(&(x, y)) = points.last() {
        if out.last() != Some(&[x, y]) {
            out.push([x, y]);
        }
    }
    out
}

fn curve(result: &AttackResult) -> Result<Curve, Error> {
    let roc = roc_curve(result)?;
    Ok(Curve {
        attack: result.variant.name(),
        label: result.variant.label(),
        auc: auc(&roc),
        roc: thin(&roc.points),
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

/// Draw IN scores from N(mu_in, sd_in^2) and OUT scores from N(mu_out, sd_out^2)
/// over a random balanced mask, then run all five attacks on them.
pub fn gaussian_world_json(
    mu_in: f64,
    sd_in: f64,
    mu_out: f64,
    sd_out: f64,
    num_models: usize,
    num_examples: usize,
    seed: u64,
) -> Result<String, Error> {
    let bad = |what| Error::Invalid {
        what,
        reason: "must be positive and finite".into(),
    };
    if !(sd_in > 0.0 && sd_out > 0.0 && mu_in.is_finite() && mu_out.is_finite()) {
        return Err(bad("gaussian parameters"));
    }
    let n_in = Normal::new(mu_in, sd_in).map_err(|_| bad("sd_in"))?;
    let n_out = Normal::new(mu_out, sd_out).map_err(|_| bad("sd_out"))?;
    if num_models.saturating_mul(num_examples) > 200_000 {
        return Err(Error::Invalid {
            what: "world size",
            reason: "at most 200000 cells".into(),
        });
    }
    let mask = build_mask(num_models, num_examples, mix(seed, streams::MASK))?;
    let mut rng = rng_from_seed(seed);
    let scores = mask
        .entries()
        .iter()
        .map(|&is_in| if is_in { n_in.sample(&mut rng) } else { n_out.sample(&mut rng) })
        .collect();
    let sm = ScoreMatrix::new(num_models, num_examples, ScoreVariant::LogConfidence, scores)?;
    let curves = AttackVariant::ALL
        .into_iter()
        .map(|a| curve(&run_attack(&sm, &mask, a)?))
        .collect::<Result<Vec<_>, _>>()?;
    // P(X_in > X_out) for two independent normals.
    let truth_auc = mia_core::normal::normal_cdf((mu_in - mu_out) / (sd_in * sd_in + sd_out * sd_out).sqrt());
    Ok(to_json(&World { truth_auc, curves }))
}

/// Each score as a function of the true-class probability `p`, with the remaining
/// mass spread evenly over the other `num_classes - 1` classes.
pub fn score_transforms_json(num_classes: usize, points: usize) -> Result<String, Error> {
    if !(2..=1000).contains(&num_classes) || !(2..=2001).contains(&points) {
        return Err(Error::Invalid {
            what: "transform grid",
            reason: "need 2..=1000 classes and 2..=2001 points".into(),
        });
    }
    let p: Vec<f64> = (0..points).map(|k| k as f64 / (points - 1) as f64).collect();
    let curves = ScoreVariant::ALL
        .into_iter()
        .map(|v| ScoreCurve {
            score: v.name(),
            label: v.label(),
            values: p
                .iter()
                .map(|&py| {
                    let mut probs = vec![(1.0 - py) / (num_classes - 1) as f64; num_classes];
                    probs[0] = py;
                    v.score(&probs, 0)
                })
                .collect(),
        })
        .collect();
    Ok(to_json(&Transforms { p, curves }))
}

/// Full synthetic experiment in memory: data, shadows, 5 scores x 5 attacks, report SVG.
pub fn mini_pipeline_json(
    seed: u64,
    num_models: usize,
    epochs: usize,
    per_class: usize,
    center_scale: f64,
) -> Result<String, Error> {
    if num_models > 16 || epochs > 300 || per_class > 40 {
        return Err(Error::Invalid {
            what: "demo size",
            reason: "at most 16 models, 300 epochs and 40 examples per class".into(),
        });
    }
    let ds = generate_synthetic(&SynthSpec {
        num_classes: 5,
        dim: 8,
        per_class_count: per_class,
        cluster_spread: 1.0,
        class_center_scale: center_scale,
        seed: mix(seed, streams::DATASET),
    })?;
    let mask = build_mask(num_models, ds.len(), mix(seed, streams::MASK))?;
    let cfg = EnsembleConfig {
        num_models,
        arch: Architecture::new(ds.dim(), vec![32], ds.num_classes(), Activation::Relu)?,
        train: TrainConfig {
            epochs,
            ..TrainConfig::default()
        },
        master_seed: mix(seed, streams::ENSEMBLE),
    };
    let models = train_ensemble(&ds, &mask, &cfg)?;
    let train_accuracy = models.iter().map(|m| m.accuracy(&ds)).sum::<Result<f64, _>>()? / num_models as f64;
    let pm = predict_matrix(&models, &ds)?;
    let mut results = Vec::new();
    for s in ScoreVariant::ALL {
        let sm = score_matrix(&pm, Some(ds.labels()), s)?;
        for a in AttackVariant::ALL {
            results.push(run_attack(&sm, &mask, a)?);
        }
    }
    let rows = evaluate_grid(&results, &DEFAULT_FPR_LEVELS)?;
    let cells = rows
        .iter()
        .map(|r| Cell {
            attack: r.attack.name(),
            score: r.score.name(),
            auc: r.metrics.auc,
            tpr: r.metrics.tpr_at_fpr.iter().map(|&(_, t)| t).collect(),
            balanced_accuracy: r.metrics.balanced_accuracy,
        })
        .collect();
    Ok(to_json(&Grid {
        train_accuracy,
        cells,
        svg: render_svg(&rows),
    }))
}

#[wasm_bindgen]
pub fn gaussian_world(
    mu_in: f64,
    sd_in: f64,
    mu_out: f64,
    sd_out: f64,
    num_models: usize,
    num_examples: usize,
    seed: u32,
) -> Result<String, JsValue> {
    gaussian_world_json(mu_in, sd_in, mu_out, sd_out, num_models, num_examples, seed as u64).map_err(js_err)
}

#[wasm_bindgen]
pub fn score_transforms(num_classes: usize, points: usize) -> Result<String, JsValue> {
    score_transforms_json(num_classes, points).map_err(js_err)
}

#[wasm_bindgen]
pub fn mini_pipeline(
    seed: u32,
    num_models: usize,
    epochs: usize,
    per_class: usize,
    center_scale: f64,
) -> Result<String, JsValue> {
    mini_pipeline_json(seed as u64, num_models, epochs, per_class, center_scale).map_err(js_err)
}
