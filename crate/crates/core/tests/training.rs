mod common;

use common::{overfit_config, overfit_corpus};
use newsgen::lm::train::{epoch_loss, WindowCursor};
use newsgen::lm::{train, LanguageModel, LmConfig};

#[test]
fn perplexity_falls_every_epoch() {
    let (vocab, ids) = overfit_corpus();
    for seed in [1, 2, 3] {
        // small steps and whole-shard windows keep each pass a descent step
        let cfg = LmConfig {
            learning_rate: 0.05,
            seq_len: 50,
            batch_size: 1,
            seed,
            ..overfit_config(vocab.len())
        };
        let mut model = LanguageModel::<f32>::new(cfg).unwrap();
        let per_epoch = WindowCursor::new(ids.len(), 1, 50).unwrap().windows_per_epoch() as u64;
        let mut prev = epoch_loss(&model, &ids).unwrap().exp();
        let start = prev;
        for epoch in 0..150 {
            train(&mut model, &ids, per_epoch, |_| {}).unwrap();
            let ppl = epoch_loss(&model, &ids).unwrap().exp();
            assert!(ppl < prev, "seed {seed} epoch {epoch}: {prev} -> {ppl}");
            prev = ppl;
        }
        assert!(prev < 0.9 * start, "seed {seed}: {start} -> {prev}");
    }
}

#[test]
fn training_is_bit_reproducible() {
    let (vocab, ids) = overfit_corpus();
    let run = || {
        let mut m = LanguageModel::<f32>::new(overfit_config(vocab.len())).unwrap();
        let log = train(&mut m, &ids, 60, |_| {}).unwrap();
        (log.losses().iter().map(|l| l.to_bits()).collect::<Vec<_>>(), m)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}
