use mia_demo::{gaussian_world_json, mini_pipeline_json, score_transforms_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn gaussian_world_tracks_the_separation() {
    let v = parse(gaussian_world_json(1.0, 1.0, 0.0, 1.0, 16, 200, 3).unwrap());
    let truth = v["truth_auc"].as_f64().unwrap();
    assert!((truth - 0.7602).abs() < 1e-3);
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 5);
    for c in curves {
        let roc = c["roc"].as_array().unwrap();
        assert!(roc.len() <= 202);
        assert_eq!(roc[0], serde_json::json!([0.0, 0.0]));
        assert_eq!(roc.last().unwrap(), &serde_json::json!([1.0, 1.0]));
    }
    let global = curves.iter().find(|c| c["attack"] == "global").unwrap();
    assert!((global["auc"].as_f64().unwrap() - truth).abs() < 0.03);

    let same = parse(gaussian_world_json(0.0, 1.0, 0.0, 1.0, 16, 200, 3).unwrap());
    for c in same["curves"].as_array().unwrap() {
        assert!((c["auc"].as_f64().unwrap() - 0.5).abs() < 0.05, "{c}");
    }
}

#[test]
fn gaussian_world_rejects_bad_input() {
    assert!(gaussian_world_json(0.0, 0.0, 0.0, 1.0, 16, 10, 0).is_err());
    assert!(gaussian_world_json(0.0, 1.0, 0.0, 1.0, 3, 10, 0).is_err());
    assert!(gaussian_world_json(0.0, 1.0, 0.0, 1.0, 2, 10, 0).is_err());
}

#[test]
fn transforms_are_monotone_in_p() {
    let v = parse(score_transforms_json(10, 51).unwrap());
    assert_eq!(v["p"].as_array().unwrap().len(), 51);
    for c in v["curves"].as_array().unwrap() {
        let ys: Vec<f64> = c["values"].as_array().unwrap().iter().map(|y| y.as_f64().unwrap()).collect();
        assert!(ys.iter().all(|y| y.is_finite()));
        if !c["score"].as_str().unwrap().contains("argmax") {
            assert!(ys.windows(2).all(|w| w[0] < w[1]), "{}", c["score"]);
        }
    }
    assert!(score_transforms_json(1, 51).is_err());
}

#[test]
fn mini_pipeline_reports_the_grid() {
    let v = parse(mini_pipeline_json(1, 4, 30, 8, 3.0).unwrap());
    assert_eq!(v["cells"].as_array().unwrap().len(), 25);
    assert!(v["svg"].as_str().unwrap().starts_with("<svg"));
    assert!(v["train_accuracy"].as_f64().unwrap() > 0.5);
    assert_eq!(mini_pipeline_json(1, 4, 30, 8, 3.0).unwrap(), mini_pipeline_json(1, 4, 30, 8, 3.0).unwrap());
    assert!(mini_pipeline_json(1, 32, 30, 8, 3.0).is_err());
}
