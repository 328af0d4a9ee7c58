//! Invariants checked over generated inputs.

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;

use olid_core::corpus::{
    class_counts, holdout_validation, resample, split, LabelA, LabelB, LabelC, Level, ResampleMode, SplitMode,
    SplitSpec, TweetRecord,
};
use olid_core::encoder::{EncoderConfig, ParameterSet, Pooling, PositionScheme};
use olid_core::evaluation::{class_metrics, confusion_indices};
use olid_core::objectives::{argmax, mask_count, mlm_corrupt, predict_probs, softmax, Permutation};
use olid_core::preprocess::{is_removed_punctuation, preprocess, EmojiTable};
use olid_core::tokenizer::{build_vocab, decode, encode, TokenSequence, CLS, PAD, SEP};
use olid_core::training::{adamw_update, AdamW, OptimizerState};

/// The five label paths allowed by the hierarchy.
fn leaf(i: u8) -> (LabelA, Option<LabelB>, Option<LabelC>) {
    match i {
        0 => (LabelA::Not, None, None),
        1 => (LabelA::Off, Some(LabelB::Unt), None),
        2 => (LabelA::Off, Some(LabelB::Tin), Some(LabelC::Ind)),
        3 => (LabelA::Off, Some(LabelB::Tin), Some(LabelC::Grp)),
        _ => (LabelA::Off, Some(LabelB::Tin), Some(LabelC::Oth)),
    }
}

fn records(leaves: &[u8]) -> Vec<TweetRecord> {
    leaves
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let (a, b, c) = leaf(l);
            TweetRecord::new(format!("r{i}"), format!("text {i}"), a, b, c).unwrap()
        })
        .collect()
}

/// Level-A records with both classes present.
fn level_a() -> impl Strategy<Value = Vec<TweetRecord>> {
    proptest::collection::vec(0u8..5, 2..80)
        .prop_filter("both classes", |v| v.contains(&0) && v.iter().any(|&x| x > 0))
        .prop_map(|v| records(&v))
}

fn ids(rs: &[TweetRecord]) -> Vec<&str> {
    rs.iter().map(|r| r.id.as_str()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn oversampling_is_a_balanced_superset(rs in level_a(), seed in any::<u64>()) {
        let out = resample(&rs, Level::A, ResampleMode::Over, seed).unwrap();
        let before = class_counts(&rs, Level::A);
        let after = class_counts(&out, Level::A);
        let max = before.iter().map(|(_, n)| n).max().unwrap();
        prop_assert!(after.iter().all(|(_, n)| n == max));
        let input: HashSet<&TweetRecord> = rs.iter().collect();
        prop_assert!(out.iter().all(|r| input.contains(r)));
        let output: HashSet<&str> = ids(&out).into_iter().collect();
        prop_assert!(rs.iter().all(|r| output.contains(r.id.as_str())));
    }

    #[test]
    fn undersampling_is_a_balanced_subset(rs in level_a(), seed in any::<u64>()) {
        let out = resample(&rs, Level::A, ResampleMode::Under, seed).unwrap();
        let before = class_counts(&rs, Level::A);
        let min = before.iter().map(|(_, n)| n).min().unwrap();
        prop_assert!(class_counts(&out, Level::A).iter().all(|(_, n)| n == min));
        let unique: HashSet<&str> = ids(&out).into_iter().collect();
        prop_assert_eq!(unique.len(), out.len());
        let input: HashSet<&TweetRecord> = rs.iter().collect();
        prop_assert!(out.iter().all(|r| input.contains(r)));
    }

    #[test]
    fn no_resampling_keeps_the_multiset(rs in level_a(), seed in any::<u64>()) {
        let out = resample(&rs, Level::A, ResampleMode::None, seed).unwrap();
        let mut a = ids(&rs);
        let mut b = ids(&out);
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn holdout_partitions_and_stratifies(rs in level_a(), frac in 0.05f64..0.5, seed in any::<u64>()) {
        let (fit, valid) = holdout_validation(&rs, Level::A, frac, seed).unwrap();
        prop_assert_eq!(fit.len() + valid.len(), rs.len());
        prop_assert_eq!(valid.len(), (frac * rs.len() as f64).round() as usize);
        let f: HashSet<&str> = ids(&fit).into_iter().collect();
        prop_assert!(valid.iter().all(|r| !f.contains(r.id.as_str())));
        let before = class_counts(&rs, Level::A);
        let held = class_counts(&valid, Level::A);
        for ((_, n), (_, v)) in before.iter().zip(held.iter()) {
            prop_assert!((v as f64 - frac * n as f64).abs() < 1.0 + 1e-9);
        }
        prop_assert_eq!(holdout_validation(&rs, Level::A, frac, seed).unwrap(), (fit, valid));
    }

    #[test]
    fn ratio_split_partitions(leaves in proptest::collection::vec(0u8..5, 2..60), ratio in 0.1f64..0.9, seed in any::<u64>()) {
        let rs = records(&leaves);
        let spec = SplitSpec { mode: SplitMode::Ratio, ratio, seed };
        let (train, test) = split(&rs, None, &spec).unwrap();
        prop_assert_eq!(train.len() + test.len(), rs.len());
        prop_assert!(!train.is_empty() && !test.is_empty());
        let t: HashSet<&str> = ids(&train).into_iter().collect();
        prop_assert!(test.iter().all(|r| !t.contains(r.id.as_str())));
    }

    #[test]
    fn tokenizer_round_trip(words in proptest::collection::vec("[a-z]{1,6}", 1..30), max_len in 2usize..40) {
        let text = words.join(" ");
        let vocab = build_vocab(&[text.as_str()], 1, 1000).unwrap();
        let seq = encode(&text, &vocab, max_len);
        prop_assert_eq!(seq.ids.len(), max_len);
        prop_assert_eq!(seq.true_len, (words.len() + 1).min(max_len));
        prop_assert_eq!(seq.ids[0], CLS);
        prop_assert!(seq.mask.iter().enumerate().all(|(i, &m)| (m == 1) == (i < seq.true_len)));
        prop_assert!(seq.ids[seq.true_len..].iter().all(|&id| id == PAD));
        let kept = words[..seq.true_len - 1].join(" ");
        prop_assert_eq!(decode(&seq.ids, &vocab).unwrap(), kept);
    }

    #[test]
    fn preprocessing_is_idempotent_and_clean(text in tweetish()) {
        let once = preprocess(&text).text;
        prop_assert_eq!(&preprocess(&once).text, &once);
        let table = EmojiTable::bundled();
        prop_assert!(!once.chars().any(|c| is_removed_punctuation(c) || table.is_emoji(c)));
        prop_assert_eq!(once.to_lowercase(), once.clone());
        prop_assert!(!once.starts_with(' ') && !once.ends_with(' ') && !once.contains("  "));
        prop_assert!(!once.split(' ').any(|w| w.len() > 1 && (w.starts_with('@') || w.starts_with('#'))
            && w[1..].chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_')));
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-50f64..50.0, 1..20), shift in -100f64..100.0, scale in 0.1f64..10.0) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let scaled: Vec<f64> = logits.iter().map(|l| l * scale).collect();
        prop_assert_eq!(argmax(&scaled), argmax(&logits));
        prop_assert_eq!(argmax(&p), argmax(&logits));
    }

    #[test]
    fn metrics_match_brute_force(pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..100)) {
        let (preds, golds): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let cm = confusion_indices(&preds, &golds, &["x", "y", "z"]).unwrap();
        let r = class_metrics(&cm);
        let mut f1s = Vec::new();
        for k in 0..3 {
            let tp = pairs.iter().filter(|&&(p, g)| p == k && g == k).count() as f64;
            let pp = pairs.iter().filter(|&&(p, _)| p == k).count() as f64;
            let gp = pairs.iter().filter(|&&(_, g)| g == k).count() as f64;
            let f1 = if pp + gp == 0.0 { 0.0 } else { 2.0 * tp / (pp + gp) };
            prop_assert!((r.classes[k].f1 - f1).abs() < 1e-12);
            f1s.push(f1);
        }
        prop_assert!((r.macro_f1 - f1s.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        let acc = pairs.iter().filter(|(p, g)| p == g).count() as f64 / pairs.len() as f64;
        prop_assert!((r.accuracy - acc).abs() < 1e-12);
        prop_assert!((r.all.f1 - acc).abs() < 1e-12);
    }

    #[test]
    fn mlm_masks_the_right_number_of_tokens(body in proptest::collection::vec(4u32..20, 1..60), seed in any::<u64>()) {
        let mut ids = vec![CLS];
        ids.extend(&body);
        let seq = TokenSequence::from_ids(&ids, 64);
        let mask_id = 20;
        let b = mlm_corrupt(&seq, mask_id, seed).unwrap();
        let n = body.len();
        prop_assert_eq!(b.positions.len(), ((0.15 * n as f64).round() as usize).max(1));
        prop_assert_eq!(b.positions.len(), mask_count(n));
        prop_assert!(b.positions.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(b.positions.iter().all(|&p| (1..=n).contains(&p)));
        for i in 0..64 {
            match b.positions.iter().position(|&p| p == i) {
                Some(j) => {
                    prop_assert_eq!(b.corrupted.ids[i], mask_id);
                    prop_assert_eq!(b.targets[j], seq.ids[i]);
                }
                None => prop_assert_eq!(b.corrupted.ids[i], seq.ids[i]),
            }
        }
    }

    #[test]
    fn sampled_permutations_cover_the_tokens(body in proptest::collection::vec(4u32..20, 1..30), seed in any::<u64>()) {
        let mut ids = vec![CLS];
        ids.extend(&body);
        ids.push(SEP);
        let seq = TokenSequence::from_ids(&ids, 40);
        let perm = Permutation::sample(&seq, seed);
        let mut order = perm.order().to_vec();
        order.sort_unstable();
        prop_assert_eq!(order, (1..=body.len()).collect::<Vec<_>>());
    }

    #[test]
    fn adamw_first_step_is_bounded_by_lr(
        g in proptest::collection::vec(-10f64..10.0, 1..20),
        lr in 1e-5f64..1e-2,
    ) {
        let n = g.len();
        let mut theta = vec![0.5; n];
        let mut state = OptimizerState::new(n);
        let hp = AdamW { lr, weight_decay: 0.0, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 };
        adamw_update(&mut theta, &g, &vec![true; n], &mut state, &hp).unwrap();
        for (t, gi) in theta.iter().zip(&g) {
            let step = 0.5 - t;
            prop_assert!(step.abs() <= lr * (1.0 + 1e-12));
            prop_assert!(step * gi >= 0.0);
        }
        let mut still = vec![0.5; n];
        adamw_update(&mut still, &vec![0.0; n], &vec![false; n], &mut OptimizerState::new(n), &hp).unwrap();
        prop_assert!(still.iter().all(|&t| t == 0.5));
    }
}

fn tweetish() -> impl Strategy<Value = String> {
    let pieces = prop_oneof![
        "[A-Za-z0-9]{1,8}",
        Just(" ".to_string()),
        Just("  ".to_string()),
        "[!-/:-@\\[-`{-~]{1,3}",
        Just("@USER".to_string()),
        Just("#MAGA".to_string()),
        Just("#BBCNews".to_string()),
        Just("#.tag".to_string()),
        Just("@.x".to_string()),
        Just("http://t.co/x1".to_string()),
        Just("www.example.com".to_string()),
        Just("😂".to_string()),
        Just("👍🏽".to_string()),
        Just("❤️".to_string()),
        Just("🇺🇸".to_string()),
        Just("🂡".to_string()),
        Just("ÉÀß".to_string()),
        Just("\t".to_string()),
    ];
    proptest::collection::vec(pieces, 0..25).prop_map(|v| v.concat())
}

#[test]
fn class_probabilities_are_normalized() {
    let mut hits: HashMap<usize, usize> = HashMap::new();
    for s in 0..50u64 {
        let cfg = EncoderConfig {
            layers: 1,
            hidden: 8,
            heads: 2,
            ffn_mult: 2,
            max_len: 8,
            vocab_size: 12,
            position_scheme: if s % 2 == 0 { PositionScheme::Absolute } else { PositionScheme::Relative },
            dropout_rate: 0.0,
            seed: s,
            num_classes: 3,
            head_hidden: 0,
        };
        let p = ParameterSet::init(&cfg).unwrap();
        let seq = TokenSequence::from_ids(&[CLS, 4 + (s % 8) as u32, 5], 8);
        let probs = predict_probs(&p, &seq, Pooling::Mean).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        *hits.entry(argmax(&probs)).or_default() += 1;
    }
    assert_eq!(hits.values().sum::<usize>(), 50);
}
