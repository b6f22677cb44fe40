#![allow(dead_code)]

pub mod site_check;

use newsgen::lm::{LanguageModel, LmConfig, TokenBatch};

/// Model used by the gradient checks: 1 258 parameters.
pub fn grad_check_config() -> LmConfig {
    LmConfig {
        vocab_size: 10,
        embed_dim: 8,
        layers: 2,
        units: 8,
        seq_len: 4,
        batch_size: 2,
        init_scale: 0.5,
        seed: 2024,
        ..LmConfig::default()
    }
}

pub fn grad_check_batch() -> TokenBatch {
    TokenBatch::from_rows(&[vec![1, 4, 7, 9, 5], vec![6, 3, 8, 2, 4]])
}

/// Worst relative error between analytic gradients and central differences,
/// `|a - n| / max(|a|, |n|)` with both-zero entries counted as exact. Returns
/// (worst relative error, name of the tensor holding it, entries checked).
pub fn finite_difference_check(model: &LanguageModel<f64>, batch: &TokenBatch, eps: f64) -> (f64, String, usize) {
    let analytic = newsgen::lm::loss_and_grads(model, batch, None).unwrap().grads;
    let names: Vec<String> = model.config.tensor_shapes().into_iter().map(|(n, _)| n).collect();
    let loss_at = |m: &LanguageModel<f64>| newsgen::lm::loss_and_grads(m, batch, None).unwrap().loss;
    let mut probe = model.clone();
    let mut worst = (0.0f64, String::new());
    let mut checked = 0;
    for (ti, grad) in analytic.tensors().iter().enumerate() {
        for j in 0..grad.data.len() {
            let orig = probe.params.tensors()[ti].data[j];
            probe.params.tensors_mut()[ti].data[j] = orig + eps;
            let plus = loss_at(&probe);
            probe.params.tensors_mut()[ti].data[j] = orig - eps;
            let minus = loss_at(&probe);
            probe.params.tensors_mut()[ti].data[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data[j];
            let denom = a.abs().max(numeric.abs());
            let rel = if denom == 0.0 { 0.0 } else { (a - numeric).abs() / denom };
            if rel > worst.0 {
                worst = (rel, format!("{}[{j}] analytic={a:e} numeric={numeric:e}", names[ti]));
            }
            checked += 1;
        }
    }
    (worst.0, worst.1, checked)
}

pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures").join(name)
}

/// The repetitive 1 kB training text as one token stream, with its vocabulary.
pub fn overfit_corpus() -> (newsgen::corpus::Vocabulary, newsgen::corpus::TokenSequence) {
    use newsgen::corpus::{build_vocab, tokenize, Article, CorpusStore};
    let text = std::fs::read_to_string(fixture_path("overfit_1k.txt")).unwrap();
    let mut store = CorpusStore::new();
    store.insert(Article::new("overfit", "", text.clone())).unwrap();
    let vocab = build_vocab(&store, 1, 1000).unwrap();
    let ids = tokenize(&text, Some(&vocab)).0;
    (vocab, ids)
}

/// 2 layers of 32 units, tuned to memorize the 1 kB fixture quickly.
pub fn overfit_config(vocab_size: usize) -> LmConfig {
    LmConfig {
        vocab_size,
        embed_dim: 32,
        layers: 2,
        units: 32,
        seq_len: 16,
        batch_size: 4,
        learning_rate: 0.5,
        seed: 1,
        ..LmConfig::default()
    }
}

const NEWS_WORDS: &str = "government officials said president minister council city state police report \
    election vote campaign party leader senate house court judge law security border trade market economy \
    budget tax plan program school health hospital water power energy oil gas price bank money fund company \
    workers union strike protest crowd street capital region north south east west war peace talks deal \
    agreement summit nuclear missile army military troops attack bomb fire storm flood rain season team game \
    players coach fans record year month week day morning night today people family children women men \
    residents voters members group leaders experts critics analysts sources reporters media news press \
    statement interview speech letter meeting conference office building bridge road train airport flight \
    ship port island coast river mountain village town country nation world foreign local national federal \
    public private new old big small major minor first last next former early late high low strong weak \
    long short open closed free fair full empty announced warned promised denied confirmed rejected approved \
    signed visited met called asked told added noted claimed argued agreed refused planned expected began \
    ended returned moved raised cut boosted dropped launched opened closed built sent received";

/// Random news-like sentence of `lo..=hi` words.
pub fn random_sentence(rng: &mut rand_chacha::ChaCha8Rng, lo: usize, hi: usize) -> String {
    use rand::Rng;
    let vocab: Vec<&str> = NEWS_WORDS.split_whitespace().collect();
    let n = rng.gen_range(lo..=hi);
    let words: Vec<&str> = (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
    newsgen::novelty::normalize(&format!("{}.", words.join(" ")))
}

/// Up to `edits` random char insertions, deletions or substitutions.
pub fn perturb(rng: &mut rand_chacha::ChaCha8Rng, s: &str, edits: usize) -> String {
    use rand::Rng;
    let mut cs: Vec<char> = s.chars().collect();
    for _ in 0..edits {
        let c = (b'a' + rng.gen_range(0..26u8)) as char;
        let p = rng.gen_range(0..cs.len().max(1));
        match rng.gen_range(0..3) {
            0 => cs.insert(p, c),
            1 if cs.len() > 1 => {
                cs.remove(p);
            }
            _ if !cs.is_empty() => cs[p] = c,
            _ => cs.push(c),
        }
    }
    cs.into_iter().collect()
}

/// Corpus of `corpus_n` sentences (as 10-sentence articles) and `gen_n`
/// generated sentences mixing verbatim copies, light and heavy perturbations,
/// splices of two corpus sentences and fresh text.
pub fn novelty_fixture(corpus_n: usize, gen_n: usize, seed: u64) -> (Vec<(String, String)>, Vec<newsgen::novelty::Sentence>) {
    use newsgen::novelty::{Origin, Sentence};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let corpus: Vec<String> = (0..corpus_n).map(|_| random_sentence(&mut rng, 5, 10)).collect();
    let articles = corpus
        .chunks(10)
        .enumerate()
        .map(|(i, c)| (format!("c{i}"), c.join(" ")))
        .collect();
    let generated = (0..gen_n)
        .map(|i| {
            let a = &corpus[rng.gen_range(0..corpus.len())];
            let text = match i % 10 {
                0..=2 => a.clone(),
                3 | 4 => {
                    let k = rng.gen_range(1..=4);
                    perturb(&mut rng, a, k)
                }
                5 => perturb(&mut rng, a, a.chars().count() * 3 / 10),
                6 | 7 => {
                    let b = &corpus[rng.gen_range(0..corpus.len())];
                    let (wa, wb): (Vec<&str>, Vec<&str>) = (a.split(' ').collect(), b.split(' ').collect());
                    format!("{} {}", wa[..wa.len() / 2].join(" "), wb[wb.len() / 2..].join(" "))
                }
                _ => random_sentence(&mut rng, 5, 10),
            };
            Sentence {
                text: text.trim().to_string(),
                origin: Origin::Generated,
                parent_id: format!("g{}", i / 10),
                index: i % 10,
                ends_paragraph: false,
            }
        })
        .filter(|s| !s.text.is_empty())
        .collect();
    (articles, generated)
}

/// Plain two-row Levenshtein DP.
pub fn full_dp(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Naive closest match: full DP against every corpus sentence, first minimum wins.
pub fn naive_closest(corpus: &[Vec<char>], q: &[char]) -> (usize, usize) {
    let mut best = (0, usize::MAX);
    for (id, c) in corpus.iter().enumerate() {
        let d = full_dp(q, c);
        if d < best.1 {
            best = (id, d);
        }
    }
    best
}

/// Oracle verdict: keep iff the closest sentence is more than `threshold` away.
pub fn naive_verdict(corpus: &[Vec<char>], q: &[char], threshold: f64) -> (usize, usize, bool) {
    let (id, d) = naive_closest(corpus, q);
    let denom = q.len().max(corpus[id].len());
    (id, d, d as f64 / denom as f64 > threshold)
}

/// Enumerates every single char deletion or substitution and every single
/// word-token deletion or substitution of `original` and looks for `edited`.
pub fn brute_force_single_edit(original: &str, edited: &str) -> bool {
    use newsgen::corpus::words_cased;
    if original == edited {
        return true;
    }
    let oc: Vec<char> = original.chars().collect();
    let alphabet: std::collections::BTreeSet<char> = edited.chars().collect();
    for i in 0..oc.len() {
        let mut del = oc.clone();
        del.remove(i);
        if del.iter().collect::<String>() == edited {
            return true;
        }
        for &c in &alphabet {
            let mut sub = oc.clone();
            sub[i] = c;
            if sub.iter().collect::<String>() == edited {
                return true;
            }
        }
    }
    let ow = words_cased(original);
    let ew = words_cased(edited);
    for i in 0..ow.len() {
        let mut del = ow.clone();
        del.remove(i);
        if del == ew {
            return true;
        }
        for t in &ew {
            let mut sub = ow.clone();
            sub[i] = t.clone();
            if sub == ew {
                return true;
            }
        }
    }
    false
}

/// Random sentence and a random edit of it: 0 to 3 char or word level
/// insertions, deletions or substitutions.
pub fn fuzz_edit_case(rng: &mut rand_chacha::ChaCha8Rng) -> (String, String) {
    use rand::Rng;
    let original = {
        let mut s = random_sentence(rng, 2, 7);
        if rng.gen_bool(0.3) {
            s = s.replacen(' ', ", ", 1);
        }
        s
    };
    let mut edited = original.clone();
    for _ in 0..rng.gen_range(0..=3) {
        match rng.gen_range(0..4) {
            0 => {
                let k = rng.gen_range(1..=1);
                edited = perturb(rng, &edited, k);
            }
            1 => {
                let ws: Vec<&str> = edited.split(' ').collect();
                let i = rng.gen_range(0..ws.len());
                let mut ws: Vec<String> = ws.iter().map(|s| s.to_string()).collect();
                ws.remove(i);
                edited = ws.join(" ");
            }
            2 => {
                let mut ws: Vec<String> = edited.split(' ').map(str::to_string).collect();
                let i = rng.gen_range(0..ws.len());
                ws[i] = random_sentence(rng, 1, 1).trim_end_matches('.').to_lowercase();
                edited = ws.join(" ");
            }
            _ => {
                let mut cs: Vec<char> = edited.chars().collect();
                if !cs.is_empty() {
                    let i = rng.gen_range(0..cs.len());
                    let c = [' ', '.', ',', 'X', 'é'][rng.gen_range(0..5)];
                    cs[i] = c;
                }
                edited = cs.into_iter().collect();
            }
        }
    }
    (original, edited)
}

/// Copies the toy corpus and site config into `dir` and writes a
/// `pipeline.json` there from `config`.
pub fn toy_project(dir: &std::path::Path, config: &serde_json::Value) -> std::path::PathBuf {
    let toy = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy");
    for f in ["corpus.jsonl", "site.json"] {
        std::fs::copy(toy.join(f), dir.join(f)).unwrap();
    }
    let path = dir.join("pipeline.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

/// A pipeline config small enough to run every stage in a few seconds.
pub fn tiny_pipeline_config() -> serde_json::Value {
    serde_json::json!({
        "paths": { "corpus": "corpus.jsonl", "site_config": "site.json" },
        "vocab": { "min_count": 2, "max_size": 500 },
        "model": { "embed_dim": 8, "layers": 1, "units": 8, "seq_len": 10, "batch_size": 4, "learning_rate": 0.5 },
        "train_steps": 20,
        "decode": { "max_tokens": 40 },
        "pool_size": 4,
        "seed": 5
    })
}

/// sha256 of every file under `root` by relative path, skipping `skip` dirs.
pub fn file_hashes(root: &std::path::Path, skip: &[&str]) -> std::collections::BTreeMap<String, String> {
    site_check::files_under(root)
        .into_iter()
        .filter(|p| !skip.iter().any(|s| p.starts_with(s)))
        .map(|p| {
            let h = newsgen::io::sha256_file(&root.join(&p)).unwrap();
            (p.to_string_lossy().into_owned(), h)
        })
        .collect()
}
