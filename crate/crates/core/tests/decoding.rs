use newsgen::corpus::vocab::{BOS, EOS};
use newsgen::decoder::{beam_search, draw_token, sample_ids, DecodeMode, DecodeParams};
use newsgen::lm::{LanguageModel, LmConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_model(vocab_size: usize, seed: u64) -> LanguageModel<f64> {
    LanguageModel::new(LmConfig {
        vocab_size,
        embed_dim: 4,
        layers: 2,
        units: 5,
        seq_len: 4,
        batch_size: 1,
        init_scale: 1.5,
        seed,
        ..LmConfig::default()
    })
    .unwrap()
}

fn beam_params(width: usize, max_tokens: usize, alpha: f64) -> DecodeParams {
    DecodeParams {
        mode: DecodeMode::Beam,
        beam_width: width,
        max_tokens,
        length_norm_alpha: alpha,
        ban_unk: false,
        ..DecodeParams::default()
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|l| l - z).collect()
}

/// Every sequence the decoder may produce: stops at EOS or after `max_tokens`,
/// never contains BOS. Returns the best by normalized score, ties by ids.
fn enumerate_best(model: &LanguageModel<f64>, max_tokens: usize, alpha: f64) -> (Vec<u32>, f64) {
    let mut best: Option<(f64, Vec<u32>, f64)> = None;
    let mut stack = vec![(Vec::<u32>::new(), 0.0f64)];
    while let Some((prefix, lp)) = stack.pop() {
        let mut state = model.zero_state();
        let mut logits = model.step_logits(BOS, &mut state).unwrap();
        for &id in &prefix {
            logits = model.step_logits(id, &mut state).unwrap();
        }
        let dist = log_softmax(&logits);
        for k in 0..model.vocab_size() as u32 {
            if k == BOS {
                continue;
            }
            let mut seq = prefix.clone();
            seq.push(k);
            let total = lp + dist[k as usize];
            if k == EOS || seq.len() == max_tokens {
                let score = total / (seq.len() as f64).powf(alpha);
                let better = match &best {
                    None => true,
                    Some((s, ids, _)) => score > *s || (score == *s && seq < *ids),
                };
                if better {
                    best = Some((score, seq, total));
                }
            } else {
                stack.push((seq, total));
            }
        }
    }
    let (_, ids, lp) = best.unwrap();
    (ids, lp)
}

#[test]
fn full_width_beam_finds_the_enumerated_argmax() {
    for seed in 0..6 {
        for vocab in [5, 8] {
            for max_tokens in [1, 3, 5] {
                for alpha in [0.0, 0.7] {
                    let model = tiny_model(vocab, seed);
                    let (want, want_lp) = enumerate_best(&model, max_tokens, alpha);
                    let got = beam_search(&model, &beam_params(8usize.pow(5), max_tokens, alpha), &[]).unwrap();
                    let top = &got[0];
                    assert_eq!(top.ids, want, "seed {seed} vocab {vocab} len {max_tokens} alpha {alpha}");
                    assert!((top.logprob - want_lp).abs() < 1e-9);
                    assert!((model.sequence_logprob(&top.ids).unwrap() - want_lp).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn a_wider_beam_can_prune_the_narrow_winner() {
    // width 2 keeps the two best first tokens, then drops the greedy path in
    // favour of four continuations of the runner-up
    let model = tiny_model(8, 1027);
    let top = |w| beam_search(&model, &beam_params(w, 5, 0.0), &[]).unwrap().remove(0);
    let (one, two, three) = (top(1), top(2), top(3));
    assert_eq!(one.ids, [6, 6, EOS]);
    assert_eq!(two.ids, [4, 0, 0, 0, 0]);
    assert!(two.score < one.score);
    assert!(three.score > one.score);
}

#[test]
fn full_width_top_score_bounds_every_narrower_beam() {
    for seed in 0..100 {
        let model = tiny_model(8, 1000 + seed);
        let full = beam_search(&model, &beam_params(8usize.pow(5), 5, 0.0), &[]).unwrap()[0].score;
        for w in 1..=8 {
            let top = beam_search(&model, &beam_params(w, 5, 0.0), &[]).unwrap()[0].score;
            assert!(top <= full + 1e-12, "seed {seed} width {w}");
        }
    }
}

#[test]
fn alpha_zero_results_are_in_logprob_order() {
    for seed in 0..10 {
        let model = tiny_model(7, seed);
        let got = beam_search(&model, &beam_params(6, 4, 0.0), &[]).unwrap();
        assert!(got.windows(2).all(|w| w[0].logprob >= w[1].logprob));
    }
}

fn skewed_model() -> LanguageModel<f64> {
    let mut m = tiny_model(5, 3);
    m.params.out_bias.data = vec![0.5, -1.0, 1.2, 0.1, 2.0];
    m
}

fn allowed_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let w: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, l)| if k as u32 == BOS { 0.0 } else { (l / temperature).exp() })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

#[test]
fn sampled_frequencies_match_the_softmax() {
    let model = skewed_model();
    let mut state = model.zero_state();
    let logits = model.step_logits(BOS, &mut state).unwrap();
    for temperature in [1.0, 0.6] {
        let params = DecodeParams {
            temperature,
            ban_unk: false,
            ..DecodeParams::default()
        };
        let want = allowed_softmax(&logits, temperature);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            counts[draw_token(&logits, &params, &mut rng)] += 1;
        }
        for k in 0..5 {
            let freq = counts[k] as f64 / draws as f64;
            assert!((freq - want[k]).abs() < 0.01, "T={temperature} token {k}: {freq} vs {}", want[k]);
        }
    }
}

#[test]
fn first_sampled_token_over_many_seeds_matches_the_softmax() {
    let model = skewed_model();
    let mut state = model.zero_state();
    let logits = model.step_logits(BOS, &mut state).unwrap();
    let want = allowed_softmax(&logits, 1.0);
    let full = log_softmax(&logits);
    let mut counts = [0usize; 5];
    let draws = 100_000u64;
    for seed in 0..draws {
        let params = DecodeParams {
            temperature: 1.0,
            max_tokens: 1,
            ban_unk: false,
            seed,
            ..DecodeParams::default()
        };
        let (ids, lp) = sample_ids(&model, &params, &[]).unwrap();
        counts[ids[0] as usize] += 1;
        assert!((lp - full[ids[0] as usize]).abs() < 1e-12);
    }
    for k in 0..5 {
        let freq = counts[k] as f64 / draws as f64;
        assert!((freq - want[k]).abs() < 0.01, "token {k}: {freq} vs {}", want[k]);
    }
}
