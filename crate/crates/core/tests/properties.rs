//! Property suites checked against independent oracles.

use std::collections::BTreeMap;

use proptest::prelude::*;

use promptlab_core::forge::{build_nl_pair, build_tag_pair};
use promptlab_core::metrics::{frechet_distance, vendi_score, EmbeddingSet};
use promptlab_core::preference::{
    binomial_test, compute_elo, elo_difference, mcnemar_test, PairTally,
};
use promptlab_core::prompt::{
    classify_length, parse_prompt, serialize_prompt, split_sentences, MetaCategory, MetadataEntry,
    Sentence, StructuredPrompt, Tag,
};

const WORDS: &[&str] = &[
    "red", "hair", "sky", "blue", "smile", "garden", "night", "cat", "tall", "river", "glow",
    "stone", "dress", "rain", "city", "lamp",
];

fn tag_strategy() -> impl Strategy<Value = Tag> {
    prop::collection::vec(prop::sample::select(WORDS), 1..3)
        .prop_map(|w| Tag::new(&w.join(" ")).unwrap())
}

fn sentence_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 2..6).prop_map(|w| {
        let mut s = w.join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        s
    })
}

fn sentences(texts: &[String]) -> Vec<Sentence> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Sentence::new(t, i + 1).unwrap())
        .collect()
}

proptest! {
    #[test]
    fn prompt_serialization_round_trips(
        tags in prop::collection::vec(tag_strategy(), 0..12),
        nl in prop::collection::vec(sentence_strategy(), 0..5),
        artist in prop::option::of(prop::sample::select(WORDS)),
    ) {
        let meta: Vec<MetadataEntry> = artist
            .into_iter()
            .map(|a| MetadataEntry::new(MetaCategory::Artist, a).unwrap())
            .collect();
        let p = StructuredPrompt::new(meta, tags, sentences(&nl));
        let text = serialize_prompt(&p);
        prop_assert_eq!(parse_prompt(&text), p.clone());
        prop_assert_eq!(serialize_prompt(&parse_prompt(&text)), text);
    }

    #[test]
    fn length_classes_are_monotone(t in 0usize..100, s in 0usize..30, dt in 0usize..10, ds in 0usize..5) {
        let small = classify_length(t.saturating_sub(dt), s.saturating_sub(ds));
        let big = classify_length(t, s);
        prop_assert!(small.class <= big.class);
        prop_assert!(!small.overflow || big.overflow);
    }

    #[test]
    fn tag_pairs_are_prefixes(
        tags in prop::collection::btree_set(tag_strategy(), 1..40),
        frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let tags: Vec<Tag> = tags.into_iter().collect();
        let m = 1 + ((tags.len() - 1) as f64 * frac) as usize;
        let pair = build_tag_pair(&tags, m, seed).unwrap();
        prop_assert!(pair.complete.as_bytes().starts_with(pair.simple.as_bytes()));
        prop_assert_eq!(pair.simple.split(", ").count(), m);
        let mut got: Vec<&str> = pair.complete.split(", ").collect();
        got.sort_unstable();
        let mut want: Vec<&str> = tags.iter().map(Tag::as_str).collect();
        want.sort_unstable();
        prop_assert_eq!(got, want);
        prop_assert_eq!(build_tag_pair(&tags, m, seed).unwrap(), pair);
    }

    #[test]
    fn nl_pairs_keep_first_sentence(
        nl in prop::collection::vec(sentence_strategy(), 2..12),
        frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let s = sentences(&nl);
        let m = 1 + ((s.len() - 1) as f64 * frac) as usize;
        let m = m.min(s.len() - 1);
        let pair = build_nl_pair(&s, m, seed).unwrap();
        prop_assert!(pair.complete.as_bytes().starts_with(pair.simple.as_bytes()));
        prop_assert!(pair.simple.starts_with(&nl[0]));
        let simple = split_sentences(&pair.simple);
        prop_assert_eq!(simple.len(), m);
        // chosen sentences form an in-order subsequence of the caption
        let mut rest = nl.iter();
        let ordered = simple.iter().all(|x| rest.any(|t| t == x.text()));
        prop_assert!(ordered, "{:?} not a subsequence of {:?}", pair.simple, nl);
    }

    #[test]
    fn vendi_ignores_order_and_uniform_duplication(
        vecs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..6),
        copies in 1usize..4,
        rot in 0usize..6,
    ) {
        prop_assume!(vecs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
        let base = vendi_score(&EmbeddingSet::new(vecs.clone()).unwrap()).unwrap();
        let mut rotated = vecs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        let r = vendi_score(&EmbeddingSet::new(rotated).unwrap()).unwrap();
        prop_assert!((base - r).abs() < 1e-8);
        let dup: Vec<Vec<f64>> = vecs.iter().flat_map(|v| std::iter::repeat_n(v.clone(), copies)).collect();
        let d = vendi_score(&EmbeddingSet::new(dup).unwrap()).unwrap();
        prop_assert!((base - d).abs() < 1e-8, "{base} vs {d}");
        prop_assert!(base >= 1.0 - 1e-12 && base <= vecs.len() as f64 + 1e-9);
    }

    #[test]
    fn frechet_matches_two_dimensional_closed_form(
        a in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 4..12),
        b in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 4..12),
    ) {
        let (ea, eb) = (EmbeddingSet::new(a.clone()).unwrap(), EmbeddingSet::new(b.clone()).unwrap());
        let ab = frechet_distance(&ea, &eb).unwrap();
        let ba = frechet_distance(&eb, &ea).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-8 * (1.0 + ab));
        let oracle = frechet_2d(&a, &b);
        prop_assert!((ab - oracle).abs() <= 1e-7 * (1.0 + oracle), "{ab} vs {oracle}");
    }

    #[test]
    fn elo_difference_is_odd_and_increasing(x in 0.0011f64..0.9989, dx in 1e-6f64..0.01) {
        prop_assert!((elo_difference(x) + elo_difference(1.0 - x)).abs() < 1e-9);
        let y = (x + dx).min(0.9989);
        if y > x {
            prop_assert!(elo_difference(y) > elo_difference(x));
        }
    }

    #[test]
    fn elo_ignores_tally_orientation(
        counts in prop::collection::vec((0u64..20, 0u64..20, 0u64..20), 6),
        flips in prop::collection::vec(any::<bool>(), 6),
        base in -2000.0f64..3000.0,
    ) {
        let names = ["a", "b", "c", "d"];
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let mut plain = BTreeMap::new();
        let mut mixed = BTreeMap::new();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let (w, t, l) = counts[k];
            let tally = PairTally::new(w, t, l + 1);
            plain.insert((names[i].to_string(), names[j].to_string()), tally);
            if flips[k] {
                mixed.insert((names[j].to_string(), names[i].to_string()), tally.swapped());
            } else {
                mixed.insert((names[i].to_string(), names[j].to_string()), tally);
            }
        }
        let r1 = compute_elo(&plain, base).unwrap();
        let r2 = compute_elo(&mixed, base).unwrap();
        for (m, x) in &r1.ratings {
            prop_assert!((r2.ratings[m] - x).abs() < 1e-9);
        }
        let mean = r1.ratings.values().sum::<f64>() / r1.ratings.len() as f64;
        prop_assert!((mean - base).abs() < 1e-9);
    }

    #[test]
    fn binomial_matches_exact_enumeration(w in 0u64..60, l in 0u64..60) {
        prop_assume!(w + l > 0);
        let p = binomial_test(w, l).unwrap();
        prop_assert_eq!(p, binomial_test(l, w).unwrap());
        let exact = binomial_oracle(w, l);
        prop_assert!((p - exact).abs() <= 1e-10 * exact.max(1e-300) + 1e-300, "{p} vs {exact}");
        let q = mcnemar_test(w, l).unwrap();
        prop_assert!(q > 0.0 && q <= 1.0);
    }
}

/// Two-sided exact p-value from integer binomial coefficients.
fn binomial_oracle(w: u64, l: u64) -> f64 {
    let n = w + l;
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    let observed = row[w as usize];
    let tail: u128 = row.iter().filter(|&&c| c <= observed).sum();
    (tail as f64 / 2f64.powi(n as i32)).min(1.0)
}

fn moments_2d(x: &[Vec<f64>]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = x.len() as f64;
    let mu = [
        x.iter().map(|v| v[0]).sum::<f64>() / n,
        x.iter().map(|v| v[1]).sum::<f64>() / n,
    ];
    let mut c = [[0.0; 2]; 2];
    for v in x {
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += (v[i] - mu[i]) * (v[j] - mu[j]) / (n - 1.0);
            }
        }
    }
    (mu, c)
}

/// For 2x2 M with non-negative real eigenvalues,
/// Tr sqrt(M) = sqrt(tr M + 2 sqrt(det M)).
fn frechet_2d(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (ma, ca) = moments_2d(a);
    let (mb, cb) = moments_2d(b);
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = ca[i][0] * cb[0][j] + ca[i][1] * cb[1][j];
        }
    }
    let tr = m[0][0] + m[1][1];
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]).max(0.0);
    let tr_sqrt = (tr + 2.0 * det.sqrt()).max(0.0).sqrt();
    let dm = (ma[0] - mb[0]).powi(2) + (ma[1] - mb[1]).powi(2);
    (dm + ca[0][0] + ca[1][1] + cb[0][0] + cb[1][1] - 2.0 * tr_sqrt).max(0.0)
}

#[test]
fn reported_rows_binomial_and_mcnemar_agree_within_factor_two() {
    for (w, l) in [
        (45, 66),
        (28, 80),
        (35, 64),
        (41, 80),
        (14, 34),
        (15, 28),
        (19, 35),
    ] {
        let b = binomial_test(w, l).unwrap();
        let m = mcnemar_test(w, l).unwrap();
        assert!(
            b / m < 2.0 && m / b < 2.0,
            "{w}:{l} binomial {b} mcnemar {m}"
        );
    }
}

#[test]
fn reported_win_rate_rows_reproduce_to_four_decimals() {
    for (w, l, reported) in [
        (45, 66, 0.0572),
        (35, 64, 0.0046),
        (41, 80, 0.0005),
        (14, 34, 0.0055),
        (15, 28, 0.0660),
        (19, 35, 0.0402),
    ] {
        let p = binomial_test(w, l).unwrap();
        assert!(
            (p - reported).abs() < 5e-5,
            "{w}:{l} gave {p}, expected {reported}"
        );
    }
    assert!(binomial_test(28, 80).unwrap() < 1e-4);
}
