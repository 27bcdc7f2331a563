//! Profiles bundled with the crate.

use super::ModelProfile;

/// Three layers with outputs of 120, 20 and 10 bytes against a 100-byte input.
pub const TOY3_JSON: &str = include_str!("../../fixtures/toy3.json");

/// `toy3` with 10^4 times larger payloads and 4x longer layer times, sized so
/// that sleeps and transfers dominate loopback overhead.
pub const TOY3_SCALED_JSON: &str = include_str!("../../fixtures/toy3_scaled.json");

/// VGG-16 at block granularity on a 224x224x3 float32 input.
pub const VGG16_BLOCKS_JSON: &str = include_str!("../../fixtures/vgg16_blocks.json");

pub fn toy3() -> ModelProfile {
    ModelProfile::from_json_str(TOY3_JSON).expect("bundled toy3 profile is valid")
}

pub fn toy3_scaled() -> ModelProfile {
    ModelProfile::from_json_str(TOY3_SCALED_JSON).expect("bundled toy3_scaled profile is valid")
}

pub fn vgg16_blocks() -> ModelProfile {
    ModelProfile::from_json_str(VGG16_BLOCKS_JSON).expect("bundled vgg16 profile is valid")
}
