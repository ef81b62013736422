use offeval_harness::{presets, ExperimentConfig};
use serde_json::{json, Value};

fn schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Property names of an object schema, descending into `oneOf` branches.
fn object_keys(schema: &Value) -> Option<Vec<String>> {
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        let mut keys: Vec<String> = props.keys().cloned().collect();
        keys.sort();
        return Some(keys);
    }
    schema.get("oneOf")?.as_array()?.iter().find_map(object_keys)
}

fn child<'a>(schema: &'a Value, key: &str) -> Option<&'a Value> {
    schema.get("properties").and_then(|p| p.get(key)).or_else(|| {
        schema.get("oneOf")?.as_array()?.iter().find_map(|s| s.get("properties").and_then(|p| p.get(key)))
    })
}

#[test]
fn schema_keys_match_the_config_struct() {
    let schema = schema();
    let value = ExperimentConfig::default().to_value();
    for key in ["env", "predictor", "policy", "ratio"] {
        let mut want: Vec<String> = value[key].as_object().unwrap().keys().cloned().collect();
        want.sort();
        assert_eq!(object_keys(child(&schema, key).unwrap()), Some(want), "block {key}");
    }
    let mut top: Vec<String> = value.as_object().unwrap().keys().cloned().collect();
    top.sort();
    assert_eq!(object_keys(&schema), Some(top));
}

#[test]
fn defaults_and_presets_validate() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let mut configs = vec![ExperimentConfig::default().to_value()];
    for preset in [presets::winners_curse(), presets::near_tie(), presets::softmax_policy()] {
        configs.push(presets::config(preset, json!({})).unwrap().to_value());
    }
    configs.push(json!({}));
    configs.push(json!({"behavior": {"kind": "random", "seed": 3}, "ratio": null, "variants": ["PI-+"]}));
    for cfg in &configs {
        let errors: Vec<String> = validator.iter_errors(cfg).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    for bad in [
        json!({"n_gird": [64]}),
        json!({"env": {"kk": 3}}),
        json!({"variants": ["PI-"]}),
        json!({"predictor": {"lambda": 1.0}}),
        json!({"repeats": 0}),
        json!({"behavior": {"kind": "random"}}),
    ] {
        assert!(!validator.is_valid(&bad), "{bad}");
        assert!(ExperimentConfig::from_value(offeval_harness::config::merge(ExperimentConfig::default().to_value(), bad)).is_err());
    }
}
