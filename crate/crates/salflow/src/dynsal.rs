//! Dynamic saliency maps derived from flow magnitude.
//!
//! The dynamic saliency of a pixel is the Euclidean norm of its flow vector.
//! Raw magnitudes are the canonical output — score normalization is part of
//! the metrics, not of the map — while a per-frame unit-range variant exists
//! solely for raster export and visual inspection.

use rayon::prelude::*;

use crate::flow::FlowField;
use crate::frame::SaliencyMap;

/// One raw-magnitude saliency map per flow transition.
#[derive(Debug, Clone)]
pub struct DynamicSaliencySequence {
    maps: Vec<SaliencyMap>,
}

impl DynamicSaliencySequence {
    /// Raw magnitude maps, one per transition, in time order.
    pub fn maps(&self) -> &[SaliencyMap] {
        &self.maps
    }

    /// Map for transition `k`.
    pub fn map(&self, k: usize) -> &SaliencyMap {
        &self.maps[k]
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Per-frame unit-range variants for export. Each frame is normalized
    /// independently, so magnitudes are not comparable across frames in this
    /// view; use the raw maps for scoring.
    pub fn unit_range_maps(&self) -> Vec<SaliencyMap> {
        self.maps
            .iter()
            .map(|m| m.clone().into_unit_range())
            .collect()
    }

    pub fn into_maps(self) -> Vec<SaliencyMap> {
        self.maps
    }
}

/// Pointwise flow magnitude, `sqrt(u² + v²)`, per transition.
pub fn magnitude(flow: &FlowField) -> DynamicSaliencySequence {
    let maps = flow
        .frames()
        .par_iter()
        .map(|frame| SaliencyMap::raw(frame.magnitude()))
        .collect();
    DynamicSaliencySequence { maps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowFrame;
    use crate::grid::Plane;
    use proptest::prelude::*;

    fn field_from(u: Plane, v: Plane) -> FlowField {
        FlowField::new(vec![FlowFrame::new(u, v).unwrap()]).unwrap()
    }

    fn pseudo_random_plane(w: usize, h: usize, seed: u64, lo: f64, hi: f64) -> Plane {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        Plane::from_fn(w, h, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            lo + (hi - lo) * ((state >> 11) as f64 / (1u64 << 53) as f64)
        })
    }

    #[test]
    fn zero_flow_yields_zero_map() {
        let field = field_from(Plane::new(6, 4), Plane::new(6, 4));
        let dyn_sal = magnitude(&field);
        assert_eq!(dyn_sal.len(), 1);
        assert!(dyn_sal.map(0).plane().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_three_four_flow_yields_five() {
        let field = field_from(Plane::constant(5, 3, 3.0), Plane::constant(5, 3, -4.0));
        let dyn_sal = magnitude(&field);
        for &v in dyn_sal.map(0).plane().data() {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_loop() {
        let u = pseudo_random_plane(9, 7, 3, -2.0, 2.0);
        let v = pseudo_random_plane(9, 7, 4, -2.0, 2.0);
        let dyn_sal = magnitude(&field_from(u.clone(), v.clone()));
        for y in 0..7 {
            for x in 0..9 {
                let want = (u.at(x, y) * u.at(x, y) + v.at(x, y) * v.at(x, y)).sqrt();
                assert!((dyn_sal.map(0).plane().at(x, y) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_range_variant_spans_zero_to_one() {
        let u = pseudo_random_plane(8, 8, 11, -3.0, 3.0);
        let v = pseudo_random_plane(8, 8, 12, -3.0, 3.0);
        let dyn_sal = magnitude(&field_from(u, v));
        let viz = dyn_sal.unit_range_maps();
        let (lo, hi) = viz[0].plane().min_max();
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-12);
        // The raw maps are untouched by the export variant.
        assert!(dyn_sal.map(0).plane().data().iter().any(|&m| m > 1.0));
    }

    proptest! {
        #[test]
        fn magnitude_is_rotation_invariant(seed in 0u64..200, angle in 0.0f64..std::f64::consts::TAU) {
            let u = pseudo_random_plane(6, 5, seed, -2.0, 2.0);
            let v = pseudo_random_plane(6, 5, seed + 1000, -2.0, 2.0);
            let (sin, cos) = angle.sin_cos();
            let ru = u.zip_map(&v, |a, b| a * cos - b * sin);
            let rv = u.zip_map(&v, |a, b| a * sin + b * cos);
            let plain = magnitude(&field_from(u, v));
            let rotated = magnitude(&field_from(ru, rv));
            for (a, b) in plain.map(0).plane().data().iter().zip(rotated.map(0).plane().data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn magnitude_is_nonnegative(seed in 0u64..200) {
            let u = pseudo_random_plane(6, 5, seed, -5.0, 5.0);
            let v = pseudo_random_plane(6, 5, seed + 1, -5.0, 5.0);
            let dyn_sal = magnitude(&field_from(u, v));
            prop_assert!(dyn_sal.map(0).plane().data().iter().all(|&m| m >= 0.0));
        }
    }
}
