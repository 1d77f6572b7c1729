//! The JSON fixtures are generated artifacts; these tests pin them to the
//! code that produces them. Run the ignored regenerator after changing the
//! stock device or the fitting pipeline:
//!   cargo test -p wattlens-core --test fixture_files -- --ignored

mod common;

use common::fixture_path;
use wattlens_core::device::{default_device, device_to_json, load_device};
use wattlens_core::machine::{InputKey, Reg};
use wattlens_core::model::{load_model, model_to_json};
use wattlens_core::probabilistic::InputDistribution;
use wattlens_core::profiler::{fit_model, ProfileConfig};
use wattlens_core::simulator::SimInputs;

pub const DEVICE_SEED: u64 = 42;

fn absdiff_distribution_json() -> String {
    let mut points = Vec::new();
    for a in 0..16u32 {
        for b in 0..16u32 {
            let mut inputs = SimInputs::default();
            inputs.set(InputKey::Reg(Reg(0)), a);
            inputs.set(InputKey::Reg(Reg(1)), b);
            points.push(inputs);
        }
    }
    let dist = InputDistribution::uniform(points);
    let entries: Vec<serde_json::Value> = dist
        .points
        .iter()
        .map(|(inputs, p)| {
            let mut assign = serde_json::Map::new();
            for (r, v) in &inputs.regs {
                assign.insert(r.to_string(), serde_json::json!(v));
            }
            serde_json::json!({"assign": assign, "p": p})
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&serde_json::json!({ "inputs": entries })).unwrap();
    s.push('\n');
    s
}

#[test]
#[ignore = "writes the committed fixture files"]
fn regenerate_fixture_files() {
    let device = default_device(DEVICE_SEED);
    std::fs::write(fixture_path("device.json"), device_to_json(&device)).unwrap();
    let noiseless = device.clone().with_zero_data_coeffs();
    std::fs::write(
        fixture_path("device_noiseless.json"),
        device_to_json(&noiseless),
    )
    .unwrap();
    let model = fit_model(&mut device.clone(), &ProfileConfig::default()).unwrap();
    std::fs::write(fixture_path("model.json"), model_to_json(&model)).unwrap();
    std::fs::write(
        fixture_path("dist_absdiff.json"),
        absdiff_distribution_json(),
    )
    .unwrap();
}

#[test]
fn device_fixture_matches_the_stock_device() {
    let on_disk = load_device(fixture_path("device.json")).unwrap();
    assert_eq!(on_disk, default_device(DEVICE_SEED));
    let noiseless = load_device(fixture_path("device_noiseless.json")).unwrap();
    assert_eq!(
        noiseless,
        default_device(DEVICE_SEED).with_zero_data_coeffs()
    );
}

#[test]
fn model_fixture_matches_a_fresh_fit() {
    let on_disk = load_model(fixture_path("model.json")).unwrap();
    let fitted = fit_model(&mut default_device(DEVICE_SEED), &ProfileConfig::default()).unwrap();
    assert_eq!(model_to_json(&on_disk), model_to_json(&fitted));
}

#[test]
fn distribution_fixture_matches_the_generator() {
    let on_disk = std::fs::read_to_string(fixture_path("dist_absdiff.json")).unwrap();
    assert_eq!(on_disk, absdiff_distribution_json());
}
