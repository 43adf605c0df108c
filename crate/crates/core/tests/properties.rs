use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use relact::catalog::{generate_synthetic_world, WorldConfig};
use relact::classifier::undersample_indices;
use relact::eval::{diversity, macro_f1, make_fold_plan, pearson};
use relact::features::{FeatureMatrix, SchemaId};
use relact::sampling::{margin_score, qbc_score, sample_candidates, select_per_category, CandidateBatch, CandidatePair, Strategy as Selection};
use relact::{PairKey, Rel3};

fn rel3() -> impl Strategy<Value = Rel3> {
    (0usize..3).prop_map(|i| Rel3::from_index(i).unwrap())
}

fn proba() -> impl Strategy<Value = [f64; 3]> {
    (0.001f64..1.0, 0.001f64..1.0, 0.001f64..1.0).prop_map(|(a, b, c)| {
        let s = a + b + c;
        [a / s, b / s, c / s]
    })
}

fn batch() -> impl Strategy<Value = CandidateBatch> {
    prop::collection::vec((0u8..4, 0u8..6, 0u8..6), 1..40).prop_map(|raw| {
        let mut seen = HashSet::new();
        let pairs = raw
            .into_iter()
            .filter(|&(_, q, c)| q != c)
            .filter(|t| seen.insert(*t))
            .map(|(f, q, c)| CandidatePair {
                query: format!("q{q}"),
                candidate: format!("c{c}"),
                fine_category: format!("f{f}"),
            })
            .collect();
        CandidateBatch { round: 1, pairs }
    })
}

fn matrix(max_rows: usize, max_dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_rows, 2..=max_dim).prop_flat_map(|(n, d)| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, d), n))
}

fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows[0].len(), SchemaId(1), rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn selection_ignores_increasing_transforms(b in batch(), seed in any::<u64>()) {
        let scores: Vec<f64> = relact::sampling::score_random(&b, seed).iter().map(|s| (s * 8.0).floor() / 8.0).collect();
        let base = select_per_category(&b, &scores, Selection::Qbc).unwrap();
        for t in [|s: f64| s.exp(), |s: f64| 3.0 * s - 7.0, |s: f64| s.powi(3) + s] {
            let mapped: Vec<f64> = scores.iter().map(|&s| t(s)).collect();
            let other = select_per_category(&b, &mapped, Selection::Qbc).unwrap();
            let a: Vec<_> = base.pairs.iter().map(|p| &p.pair).collect();
            let o: Vec<_> = other.pairs.iter().map(|p| &p.pair).collect();
            prop_assert_eq!(a, o);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn selection_picks_one_batch_pair_per_category(b in batch(), seed in any::<u64>()) {
        let scores = relact::sampling::score_random(&b, seed);
        let sel = select_per_category(&b, &scores, Selection::Random).unwrap();
        let cats: HashSet<&str> = b.pairs.iter().map(|p| p.fine_category.as_str()).collect();
        prop_assert_eq!(sel.pairs.len(), cats.len());
        let mut seen = HashSet::new();
        for s in &sel.pairs {
            prop_assert!(seen.insert(s.pair.fine_category.clone()));
            prop_assert!(b.pairs.contains(&s.pair));
            let best = b.pairs.iter().zip(&scores)
                .filter(|(p, _)| p.fine_category == s.pair.fine_category)
                .map(|(_, &sc)| sc)
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(s.score, best);
        }
    }

    #[test]
    fn margin_and_qbc_stay_in_range(members in prop::collection::vec(proba(), 1..12)) {
        let q = qbc_score(&members);
        prop_assert!(q >= 0.0 && q <= 0.25 + 1e-12);
        for p in &members {
            let m = margin_score(p);
            prop_assert!((0.0..=1.0).contains(&m));
        }
        let same = vec![members[0]; members.len()];
        prop_assert!(qbc_score(&same).abs() < 1e-15);
    }

    #[test]
    fn diversity_is_a_row_permutation_invariant_in_unit_range(rows in matrix(12, 8), shift in 0usize..12) {
        let d = diversity(&fm(&rows)).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let mut rotated = rows.clone();
        let n = rotated.len();
        rotated.rotate_left(shift % n);
        prop_assert!((diversity(&fm(&rotated)).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn diversity_ignores_per_row_affine_maps(rows in matrix(10, 8), a in prop::collection::vec(0.1f64..4.0, 10), neg in any::<bool>()) {
        let d = diversity(&fm(&rows)).unwrap();
        let mapped: Vec<Vec<f64>> = rows.iter().enumerate().map(|(i, r)| {
            let scale = if neg && i % 2 == 0 { -a[i] } else { a[i] };
            r.iter().map(|v| scale * v + i as f64).collect()
        }).collect();
        prop_assert!((diversity(&fm(&mapped)).unwrap() - d).abs() < 1e-9);
    }

    #[test]
    fn diversity_ignores_column_order(rows in matrix(10, 8)) {
        let d = diversity(&fm(&rows)).unwrap();
        let reversed: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        prop_assert!((diversity(&fm(&reversed)).unwrap() - d).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_is_permutation_invariant(pairs in prop::collection::vec((rel3(), rel3()), 1..60), shift in 0usize..60) {
        let (p, g): (Vec<Rel3>, Vec<Rel3>) = pairs.iter().copied().unzip();
        let f = macro_f1(&p, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        let mut rotated = pairs.clone();
        let n = rotated.len();
        rotated.rotate_left(shift % n);
        let (rp, rg): (Vec<Rel3>, Vec<Rel3>) = rotated.into_iter().unzip();
        prop_assert_eq!(macro_f1(&rp, &rg).unwrap(), f);
    }

    #[test]
    fn perfect_predictions_score_one(mut labels in prop::collection::vec(rel3(), 0..40)) {
        labels.extend(Rel3::ALL);
        prop_assert_eq!(macro_f1(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn pearson_is_symmetric_bounded_and_affine_invariant(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50),
        a in 0.1f64..5.0,
        b in -5.0f64..5.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-12);
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((pearson(&xs, &y).unwrap() - r).abs() < 1e-9);
    }

    #[test]
    fn fold_plans_partition_and_stratify(labels in prop::collection::vec(rel3(), 10..200), k in 2usize..6, seed in any::<u64>()) {
        let plan = make_fold_plan(&labels, k, seed).unwrap();
        let mut all: Vec<usize> = plan.outer.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in Rel3::ALL {
            let per: Vec<usize> = plan.outer.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        for f in 0..k {
            let inner = &plan.inner[f];
            let mut joined: Vec<usize> = inner.train.iter().chain(&inner.val).copied().collect();
            joined.sort_unstable();
            prop_assert_eq!(joined, plan.train_indices(f));
        }
    }

    #[test]
    fn undersampling_balances_present_classes(labels in prop::collection::vec(rel3(), 0..80), seed in any::<u64>()) {
        let idx = undersample_indices(&labels, seed);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let mut counts = [0usize; 3];
        let mut have = [0usize; 3];
        for l in &labels { have[l.index()] += 1; }
        for &i in &idx { counts[labels[i].index()] += 1; }
        let m = have.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
        for c in 0..3 {
            prop_assert_eq!(counts[c], if have[c] > 0 { m } else { 0 });
        }
    }

    #[test]
    fn pair_keys_are_unordered(x in "[a-z]{1,6}", y in "[a-z]{1,6}") {
        prop_assert_eq!(PairKey::new(&x, &y), PairKey::new(&y, &x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn candidate_batches_respect_caps_and_exclusions(
        world_seed in 0u64..1000,
        seed in any::<u64>(),
        q in 1usize..6,
        c in 1usize..12,
        round in 0u32..5,
    ) {
        let cfg = WorldConfig {
            broad_categories: 2,
            fine_per_broad: 3,
            items_per_fine: 6,
            id_pairs: 40,
            ood_pairs: 20,
            ..WorldConfig::default()
        };
        let world = generate_synthetic_world(&cfg, world_seed).unwrap();
        let cat = &world.catalog;
        let excluded: HashSet<PairKey> = world.id_set.keys().collect();
        let b = sample_candidates(cat, &excluded, q, c, seed, round);
        prop_assert_eq!(&b, &sample_candidates(cat, &excluded, q, c, seed, round));
        let mut keys = HashSet::new();
        let mut queries: BTreeMap<&str, HashSet<&str>> = BTreeMap::new();
        let mut per_query: BTreeMap<&str, usize> = BTreeMap::new();
        for p in &b.pairs {
            prop_assert_ne!(&p.query, &p.candidate);
            let qi = cat.get(&p.query).unwrap();
            let ci = cat.get(&p.candidate).unwrap();
            prop_assert_eq!(&qi.broad_category, &ci.broad_category);
            prop_assert_eq!(&qi.fine_category, &p.fine_category);
            prop_assert!(!excluded.contains(&p.key()));
            prop_assert!(keys.insert(p.key()));
            queries.entry(&p.fine_category).or_default().insert(&p.query);
            *per_query.entry(&p.query).or_default() += 1;
        }
        prop_assert!(queries.values().all(|qs| qs.len() <= q));
        prop_assert!(per_query.values().all(|&n| n <= c));
    }
}
