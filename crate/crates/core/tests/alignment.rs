// SPDX-License-Identifier: MIT OR Apache-2.0

use langgeom::alignment::{
    align_model, assign_tokens, cosine, directions, label_vocab, language_direction, match_at_peak,
    top_tokens, vocab_share, AlignmentOptions,
};
use langgeom::langid::{Label, RuleTable};
use langgeom::probes::{
    train_probe, Dataset, OptimizerConfig, ProbeKind, ProbeMeta, ProbeParameters, ProbeWeights,
};
use langgeom::Matrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

// Plain double loop with its own cosine.
fn naive_assign(emb: &Matrix<f64>, dirs: &Matrix<f64>) -> Vec<usize> {
    (0..emb.rows())
        .map(|i| {
            let e = emb.row(i);
            let mut best = 0;
            let mut best_c = f64::NEG_INFINITY;
            for l in 0..dirs.rows() {
                let w = dirs.row(l);
                let mut d = 0.0;
                let mut ne = 0.0;
                let mut nw = 0.0;
                for j in 0..e.len() {
                    d += e[j] * w[j];
                    ne += e[j] * e[j];
                    nw += w[j] * w[j];
                }
                let c = if ne == 0.0 || nw == 0.0 {
                    0.0
                } else {
                    d / (ne.sqrt() * nw.sqrt())
                };
                if c > best_c {
                    best = l;
                    best_c = c;
                }
            }
            best
        })
        .collect()
}

fn meta() -> ProbeMeta {
    ProbeMeta {
        layer: 0,
        seed: 0,
        epochs_run: 0,
        best_epoch: 0,
        best_val_accuracy: 0.0,
        config: OptimizerConfig::default(),
    }
}

#[test]
fn blocked_assignment_equals_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let emb = random_matrix(100, 16, &mut rng);
    let dirs = random_matrix(5, 16, &mut rng);
    assert_eq!(
        assign_tokens(&emb, &dirs).unwrap().languages,
        naive_assign(&emb, &dirs)
    );
    // larger than one work block
    let emb = random_matrix(1000, 8, &mut rng);
    let dirs = random_matrix(5, 8, &mut rng);
    assert_eq!(
        assign_tokens(&emb, &dirs).unwrap().languages,
        naive_assign(&emb, &dirs)
    );
}

#[test]
fn trained_directions_are_distinct() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 32;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for c in 0..5 {
        for _ in 0..300 {
            for j in 0..d {
                let n: f64 = rng.sample(StandardNormal);
                feats.push(n + if j == c { 8.0 } else { 0.0 });
            }
            labels.push(c);
        }
    }
    let data = Dataset::new(Matrix::new(1500, d, feats).unwrap(), labels, 5).unwrap();
    let probe = train_probe(
        ProbeKind::Linear,
        &data,
        &data,
        &OptimizerConfig::desk_scale(),
    )
    .unwrap();
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|l| language_direction(&probe, l).unwrap())
        .collect();
    for a in 0..5 {
        for b in a + 1..5 {
            let c = cosine(&rows[a], &rows[b]);
            assert!(c < 0.5, "directions {a},{b}: cosine {c}");
        }
    }
}

#[test]
fn centering_flag_changes_directions() {
    let w = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 1.0]]).unwrap();
    let p = ProbeParameters {
        weights: ProbeWeights::Linear {
            w: w.clone(),
            b: vec![0.0; 2],
        },
        meta: meta(),
    };
    assert_eq!(directions(&p, false).unwrap(), w);
    let c = directions(&p, true).unwrap();
    assert_eq!(c.row(0), &[1.0, 0.0]);
    assert_eq!(c.row(1), &[-1.0, 0.0]);
}

#[test]
fn align_model_on_hand_built_layers() {
    // 2 languages, 3 layers; layer 2 puts most tokens on language 1
    let langs = vec!["EN".to_string(), "ZH".to_string()];
    let texts: Vec<String> = ["the", "中", "of", "国", "and", "人"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let emb = Matrix::from_rows(&[
        vec![1.0, 0.1],
        vec![0.1, 1.0],
        vec![1.0, 0.2],
        vec![0.2, 1.0],
        vec![1.0, 0.3],
        vec![0.3, 1.0],
    ])
    .unwrap();
    let layer = |w: Vec<Vec<f64>>| ProbeParameters {
        weights: ProbeWeights::Linear {
            w: Matrix::from_rows(&w).unwrap(),
            b: vec![0.0; 2],
        },
        meta: meta(),
    };
    let probes = vec![
        layer(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
        layer(vec![vec![1.0, -1.0], vec![1.0, 1.0]]),
        layer(vec![vec![1.0, -3.0], vec![1.0, 0.2]]),
    ];
    let labels = label_vocab(&texts, RuleTable::builtin(), false);
    let opts = AlignmentOptions {
        debug_top_k: Some(2),
        ..Default::default()
    };
    let out = align_model(&probes, &emb, &texts, &labels, &langs, &opts).unwrap();
    let zh = &out.languages[1];
    // layer 0: 3/6, layer 1: 6/6 (all cosines with [1,1] beat [1,-1]), layer 2: 6/6
    assert_eq!(zh.curve(), vec![0.5, 1.0, 1.0]);
    assert_eq!(
        (zh.peak_layer, zh.peak_depth, zh.peak_vocab_pct),
        (1, 0.5, 100.0)
    );
    assert_eq!((zh.assigned_at_peak, zh.matched_at_peak), (6, 3));
    assert_eq!(zh.match_at_peak_pct, 50.0);
    let en = &out.languages[0];
    assert_eq!(en.curve(), vec![0.5, 0.0, 0.0]);
    assert_eq!(en.match_at_peak_pct, 100.0);
    assert_eq!(en.top_tokens.as_ref().unwrap().len(), 2);
    for l in 0..3 {
        let total: usize = out.languages.iter().map(|m| m.vocab_share[l].count).sum();
        assert_eq!(total, 6);
    }
}

#[test]
fn top_tokens_are_sorted() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let emb = random_matrix(200, 6, &mut rng);
    let dirs = random_matrix(3, 6, &mut rng);
    let texts: Vec<String> = (0..200).map(|i| format!("t{i}")).collect();
    let top = top_tokens(&emb, &dirs, &texts, 50);
    for list in &top {
        assert_eq!(list.len(), 50);
        assert!(list.windows(2).all(|w| w[0].cosine >= w[1].cosine));
    }
}

fn fixture_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..300, 2usize..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_naive_loop((seed, v, d) in fixture_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = random_matrix(v, d, &mut rng);
        let dirs = random_matrix(5, d, &mut rng);
        prop_assert_eq!(assign_tokens(&emb, &dirs).unwrap().languages, naive_assign(&emb, &dirs));
    }

    #[test]
    fn shares_partition_vocabulary((seed, v, d) in fixture_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = assign_tokens(&random_matrix(v, d, &mut rng), &random_matrix(5, d, &mut rng)).unwrap();
        let shares: Vec<_> = (0..5).map(|l| vocab_share(&a, l)).collect();
        prop_assert_eq!(shares.iter().map(|s| s.count).sum::<usize>(), v);
        prop_assert!(shares.iter().all(|s| s.total == v));
    }

    #[test]
    fn positive_row_scaling_keeps_assignment((seed, v, d) in fixture_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = random_matrix(v, d, &mut rng);
        let dirs = random_matrix(5, d, &mut rng);
        let es: Vec<f64> = (0..v).map(|_| 2f64.powi(rng.random_range(-8..8))).collect();
        let ds: Vec<f64> = (0..5).map(|_| 2f64.powi(rng.random_range(-8..8))).collect();
        // powers of two scale exactly, so the comparison can be exact
        let emb2 = Matrix::from_fn(v, d, |i, j| emb.get(i, j) * es[i]);
        let dirs2 = Matrix::from_fn(5, d, |i, j| dirs.get(i, j) * ds[i]);
        prop_assert_eq!(
            assign_tokens(&emb, &dirs).unwrap().languages,
            assign_tokens(&emb2, &dirs2).unwrap().languages
        );
    }

    #[test]
    fn match_ignores_vocabulary_order(seed in any::<u64>(), v in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = random_matrix(v, 6, &mut rng);
        let dirs = random_matrix(5, 6, &mut rng);
        let pool = [Label::Lang("ZH".into()), Label::Lang("EN".into()), Label::Unknown];
        let labels: Vec<Label> = (0..v).map(|_| pool[rng.random_range(0..3)].clone()).collect();
        let a = assign_tokens(&emb, &dirs).unwrap();
        let before = match_at_peak(&a, &labels, 2, "ZH").unwrap();
        let mut perm: Vec<usize> = (0..v).collect();
        perm.shuffle(&mut rng);
        let emb_p = emb.select_rows(&perm);
        let labels_p: Vec<Label> = perm.iter().map(|&i| labels[i].clone()).collect();
        let after = match_at_peak(&assign_tokens(&emb_p, &dirs).unwrap(), &labels_p, 2, "ZH").unwrap();
        prop_assert_eq!(before, after);
    }
}
