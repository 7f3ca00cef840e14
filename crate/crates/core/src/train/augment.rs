//! Rotation and horizontal-flip augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster;

/// Nine rotation angles evenly spaced over [-45°, +45°].
pub const ANGLES: [f64; 9] = [-45.0, -33.75, -22.5, -11.25, 0.0, 11.25, 22.5, 33.75, 45.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub angle_index: usize,
    pub flip: bool,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        angle_index: 4,
        flip: false,
    };

    pub fn angle(self) -> f64 {
        ANGLES[self.angle_index]
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Self {
            angle_index: rng.gen_range(0..ANGLES.len()),
            flip: rng.gen_bool(0.5),
        }
    }

    /// All 18 rotation / flip combinations.
    pub fn all() -> impl Iterator<Item = Augmentation> {
        (0..ANGLES.len()).flat_map(|angle_index| {
            [false, true].map(|flip| Augmentation { angle_index, flip })
        })
    }
}

/// Applies `aug` to a channel-major `[channels, size, size]` image.
pub fn augment_with(image: &[f64], channels: usize, size: usize, aug: Augmentation) -> Vec<f64> {
    let plane = size * size;
    assert_eq!(image.len(), channels * plane, "image is not [channels, size, size]");
    let mut out = Vec::with_capacity(image.len());
    for c in image.chunks(plane) {
        let rotated = if aug.angle() == 0.0 {
            c.to_vec()
        } else {
            raster::rotate(c, size, size, aug.angle())
        };
        if aug.flip {
            out.extend(raster::flip_horizontal(&rotated, size, size));
        } else {
            out.extend(rotated);
        }
    }
    out
}

/// Random augmentation fully determined by `seed`.
pub fn augment(image: &[f64], channels: usize, size: usize, seed: u64) -> Vec<f64> {
    let aug = Augmentation::random(&mut ChaCha8Rng::seed_from_u64(seed));
    augment_with(image, channels, size, aug)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn img() -> Vec<f64> {
        (0..3 * 64).map(|i| (i as f64 * 0.31).cos().abs()).collect()
    }

    #[test]
    fn identity_and_involution() {
        let x = img();
        assert_eq!(augment_with(&x, 3, 8, Augmentation::IDENTITY), x);
        let flip = Augmentation {
            angle_index: 4,
            flip: true,
        };
        let once = augment_with(&x, 3, 8, flip);
        assert_ne!(once, x);
        assert_eq!(augment_with(&once, 3, 8, flip), x);
    }

    #[test]
    fn angles_are_evenly_spaced() {
        for w in ANGLES.windows(2) {
            assert_eq!(w[1] - w[0], 11.25);
        }
        let seen: BTreeSet<usize> = (0..500)
            .map(|s| Augmentation::random(&mut ChaCha8Rng::seed_from_u64(s)).angle_index)
            .collect();
        assert_eq!(seen.len(), 9);
        assert_eq!(Augmentation::all().count(), 18);
    }

    #[test]
    fn deterministic_given_seed() {
        let x = img();
        assert_eq!(augment(&x, 3, 8, 17), augment(&x, 3, 8, 17));
    }
}
