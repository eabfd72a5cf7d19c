//! Single-LED visible-light positioning: rolling-shutter rendering of a
//! modulated square panel, corner features, tree-ensemble position
//! regression and LED identification.

pub mod codec;
pub mod geometry;
pub mod harness;
pub mod learn;
pub mod render;
pub mod vision;

pub use codec::{LedDatabase, LedId, LedRecord};
pub use learn::{ModelKind, PositionModel, TrainingSet};
pub use geometry::{Attitude, CameraIntrinsics, CornerSet, LedPanel, PixelPoint, Pose, Vec3};
pub use render::{Frame, Waveform};
pub use vision::FeatureVector;

/// Independent seed for sub-stream `stream` of a master seed (SplitMix64
/// finaliser), so parallel work does not depend on scheduling order.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::derive_seed;
    use std::collections::HashSet;

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: HashSet<u64> = (0..4).flat_map(|m| (0..1000).map(move |s| derive_seed(m, s))).collect();
        assert_eq!(seeds.len(), 4000);
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
