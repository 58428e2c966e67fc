//! Seeded fixtures shared by the benchmarks.

use promptlab_core::prompt::MetaCategory;
use promptlab_core::{CaptionRecord, MetadataEntry, Sentence, Tag};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tags(n: usize) -> Vec<Tag> {
    (0..n)
        .map(|i| Tag::new(&format!("tag {i}")).unwrap())
        .collect()
}

pub fn sentences(n: usize) -> Vec<Sentence> {
    (0..n)
        .map(|i| {
            Sentence::new(&format!("Sentence number {i} describes the scene."), i + 1).unwrap()
        })
        .collect()
}

pub fn records(n: usize, seed: u64) -> Vec<CaptionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let meta = vec![
                MetadataEntry::new(MetaCategory::from_key("artist"), "someone").unwrap(),
                MetadataEntry::new(MetaCategory::from_key("rating"), "general").unwrap(),
            ];
            CaptionRecord::new(
                &format!("r{i}"),
                tags(rng.random_range(4..80)),
                sentences(rng.random_range(2..20)),
                meta,
            )
            .unwrap()
        })
        .collect()
}

/// `n` random vectors of dimension `d` in `[-1, 1)`.
pub fn vectors(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}
