mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use serde_json::Value;
use splitwise::profile::{canonicalize_json, compression_ratios, compressive_set, natural_bottlenecks};
use splitwise::{Error, ModelProfile};

proptest! {
    #[test]
    fn compressive_set_matches_oracle(ratios in prop::collection::vec(prop_oneof![0.01f64..3.0, (1u32..40).prop_map(|k| f64::from(k) / 20.0)], 0..60)) {
        prop_assert_eq!(compressive_set(&ratios), brute_compressive(&ratios));
    }

    #[test]
    fn compressive_is_subset_of_natural_with_decreasing_ratios(ratios in prop::collection::vec(0.01f64..3.0, 1..60)) {
        let natural = natural_bottlenecks(&ratios);
        let compressive = compressive_set(&ratios);
        prop_assert!(compressive.iter().all(|j| natural.contains(j)));
        for w in compressive.windows(2) {
            prop_assert!(ratios[w[1] - 1] < ratios[w[0] - 1]);
        }
    }

    #[test]
    fn ratios_invariant_under_common_scaling(seed in any::<u64>(), k in 1u64..50) {
        let p = random_profile(&mut seeded(seed), 30, &[1]);
        let layers = p.layers().iter().cloned().map(|mut l| {
            l.output_bytes_per_sample *= k;
            l
        }).collect();
        let scaled = ModelProfile::new("scaled", p.input_bytes_per_sample() * k, layers).unwrap();
        prop_assert_eq!(compression_ratios(&scaled), compression_ratios(&p));
        prop_assert_eq!(compression_ratios(&p), brute_ratios(&p));
    }

    #[test]
    fn canonical_form_ignores_key_order_and_whitespace(seed in any::<u64>(), shuffle in any::<u64>()) {
        let p = random_profile(&mut seeded(seed), 12, &[1, 2, 8]);
        let canonical = p.to_canonical_json();
        let value: Value = serde_json::from_str(&canonical).unwrap();
        let messy = render_shuffled(&value, shuffle);
        prop_assert_eq!(canonicalize_json(&messy).unwrap(), canonical.clone());
        let reparsed = ModelProfile::from_json_str(&messy).unwrap();
        prop_assert_eq!(&reparsed, &p);
        prop_assert_eq!(reparsed.canonical_hash(), p.canonical_hash());
    }
}

/// Serializes with a pseudo-random key order and sprinkled whitespace.
fn render_shuffled(v: &Value, mut state: u64) -> String {
    fn next(state: &mut u64) -> u64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        *state >> 33
    }
    fn go(v: &Value, state: &mut u64, out: &mut String) {
        let pad = ["", " ", "\n  ", "\t"][(next(state) % 4) as usize];
        out.push_str(pad);
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                for i in (1..keys.len()).rev() {
                    keys.swap(i, (next(state) % (i as u64 + 1)) as usize);
                }
                out.push('{');
                for (n, k) in keys.iter().enumerate() {
                    if n > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&serde_json::to_string(k).unwrap());
                    out.push_str(" : ");
                    go(&map[*k], state, out);
                }
                out.push_str(pad);
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (n, item) in items.iter().enumerate() {
                    if n > 0 {
                        out.push(',');
                    }
                    go(item, state, out);
                }
                out.push(']');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    go(v, &mut state, &mut out);
    out
}

#[test]
fn missing_batch_names_layer_and_field() {
    let text = r#"{"name":"m","input_bytes_per_sample":10,"layers":[
        {"name":"a","output_bytes_per_sample":5,"device_ms":{"1":1.0,"2":2.0},"server_ms":{"1":1.0,"2":2.0}},
        {"name":"b","output_bytes_per_sample":5,"device_ms":{"1":1.0},"server_ms":{"1":1.0,"2":2.0}}]}"#;
    let err = ModelProfile::from_json_str(text).unwrap_err();
    assert!(
        matches!(&err, Error::Profile { layer: Some(l), .. } if l == "b"),
        "{err}"
    );
    assert!(err.to_string().contains("device_ms"), "{err}");
}

#[test]
fn meta_object_is_ignored_for_hashing() {
    let plain = splitwise::profile::fixtures::TOY3_JSON;
    let mut v: Value = serde_json::from_str(plain).unwrap();
    v["meta"] = serde_json::json!({"framework": "keras", "device": {"cpu": "cortex-a72"}});
    let with_meta = ModelProfile::from_json_str(&v.to_string()).unwrap();
    assert_eq!(
        with_meta.canonical_hash(),
        ModelProfile::from_json_str(plain).unwrap().canonical_hash()
    );
}

#[test]
fn durations_round_trip_exactly() {
    let mut layers = Vec::new();
    let odd = [0.1, 1.0 / 3.0, 123.456789012345, 1e-7, 2.5e3];
    for (i, &d) in odd.iter().enumerate() {
        layers.push(splitwise::profile::LayerRecord {
            name: format!("l{i}"),
            output_bytes_per_sample: 7,
            device_ms: BTreeMap::from([(1, d)]),
            server_ms: BTreeMap::from([(1, d / 7.0)]),
        });
    }
    let p = ModelProfile::new("odd", 11, layers).unwrap();
    assert_eq!(ModelProfile::from_json_str(&p.to_canonical_json()).unwrap(), p);
}
