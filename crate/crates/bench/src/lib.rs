//! Fixtures shared by the benchmarks.

use flame_core::synth::{ObjectSpec, Shape};
use flame_core::{ClassSet, LabelMap, SceneSpec, IGNORE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random ground truth (about 5% ignore) and prediction of the given size.
pub fn random_pair(width: u32, height: u32, num_classes: usize, seed: u64) -> (LabelMap, LabelMap) {
    let cs = ClassSet::new(num_classes).expect("valid class count");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (width * height) as usize;
    let k = num_classes as u8;
    let gt = (0..len)
        .map(|_| {
            if rng.random_bool(0.05) {
                IGNORE
            } else {
                rng.random_range(0..k)
            }
        })
        .collect();
    let pred = (0..len).map(|_| rng.random_range(0..k)).collect();
    (
        LabelMap::new(width, height, gt, &cs).expect("valid gt"),
        LabelMap::new(width, height, pred, &cs).expect("valid pred"),
    )
}

/// Scene of `objects` rectangles with seeded placement and small velocities.
pub fn scene(width: u32, height: u32, num_frames: u32, objects: usize, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = (0..objects)
        .map(|i| ObjectSpec {
            class_id: (i % 7 + 1) as u8,
            shape: Shape::Rectangle {
                w: rng.random_range(8..=width / 4),
                h: rng.random_range(8..=height / 4),
            },
            initial_position: None,
            velocity: (rng.random_range(-4..=4), rng.random_range(-4..=4)),
        })
        .collect();
    SceneSpec {
        width,
        height,
        num_frames,
        num_classes: 8,
        objects,
        seed,
    }
}
