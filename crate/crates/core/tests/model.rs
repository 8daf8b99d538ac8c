use tntm_core::corpus::{generate_synthetic, split_train_test, Corpus, Document, Synthetic, SyntheticParams};
use tntm_core::engine::{ChainState, Schedule, Trace};
use tntm_core::eval::{author_topics, cluster_metrics, label_topics, perplexity, FoldIn};
use tntm_core::graph::TextState;
use tntm_core::pdp::{sample_concentration, ConcentrationPrior, NodeState, PdpHyper};
use tntm_core::seeded_rng;
use tntm_core::tn::{variant, TnConfig, TnMeta};

fn text_chain(train: &Corpus, name: &str, iterations: u32, seed: u64) -> ChainState {
    let meta = TnMeta::from_corpus(train);
    let mut config = TnConfig::default();
    config.flags.use_network = false;
    let v = variant(name, config, &meta).unwrap();
    let text = TextState::new(v.spec.validate().unwrap(), train).unwrap();
    let schedule = Schedule {
        total_iterations: iterations,
        text_only_burnin: iterations,
        seed,
        ..Default::default()
    };
    ChainState::new(text, None, schedule, ConcentrationPrior::default()).unwrap()
}

fn planted(seed: u64, topics: u32) -> Synthetic {
    let p = SyntheticParams {
        authors: 12,
        topics,
        topic_separation: 0.95,
        author_signal: 0.9,
        ..Default::default()
    };
    generate_synthetic(&p, &mut seeded_rng(seed)).unwrap()
}

/// Planted block of a vocabulary index.
fn block(word: u32, topics: u32, vocab: u32) -> u32 {
    (word / (vocab / topics)).min(topics - 1)
}

#[test]
fn table_growth_follows_the_discount() {
    let hyper = PdpHyper::new(0.7, 1.0).unwrap();
    let checkpoints = [100usize, 200, 500, 1000, 2000, 5000, 10_000];
    let mut sums = vec![0.0; checkpoints.len()];
    let mut rng = seeded_rng(2);
    for _ in 0..1000 {
        let mut node = NodeState::new(hyper);
        let mut next = 0;
        for n in 1..=10_000 {
            node.add_customer(0, 1.0, &mut rng);
            if n == checkpoints[next] {
                sums[next] += node.total_tables() as f64;
                next = (next + 1).min(checkpoints.len() - 1);
            }
        }
    }
    let xs: Vec<f64> = checkpoints.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = sums.iter().map(|s| (s / 1000.0).ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((0.6..=0.8).contains(&slope), "{slope}");
}

#[test]
fn concentration_without_data_follows_the_prior() {
    let prior = ConcentrationPrior::new(2.0, 4.0).unwrap();
    let mut rng = seeded_rng(8);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_concentration(&[(0, 0)], 0.5, 1.0, &prior, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // Gamma(2, 4): mean 0.5, variance 0.125.
    assert!((mean - 0.5).abs() < 3.0 * (0.125f64 / n as f64).sqrt(), "{mean}");
    assert!((var - 0.125).abs() < 0.01, "{var}");
}

#[test]
fn text_loglik_rises_on_planted_data() {
    let mut wins = 0;
    for seed in 0..5 {
        let syn = planted(seed, 4);
        let mut chain = text_chain(&syn.corpus, "Full TN", 200, seed);
        let mut trace = Trace::default();
        chain.run_into(&mut trace).unwrap();
        if trace.records.last().unwrap().text_ll > trace.records[0].text_ll {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn uniform_model_perplexity_is_vocabulary_size() {
    let doc = |words: &[u32]| Document {
        id: "d".into(),
        author: 0,
        words: words.to_vec(),
        hashtags: Vec::new(),
    };
    let corpus = Corpus {
        documents: vec![doc(&[0, 1, 2]), doc(&[3, 3, 4, 5])],
        authors: vec!["a".into()],
        vocabulary: (0..7).map(|i| format!("w{i}")).collect(),
    };
    let meta = TnMeta::from_corpus(&corpus);
    let v = variant("Full TN", TnConfig::default(), &meta).unwrap();
    let state = TextState::new(v.spec.validate().unwrap(), &corpus).unwrap();
    let opts = FoldIn { fraction: 0.0, sweeps: 4 };
    let p = perplexity(&state, &corpus, &opts, &mut seeded_rng(0)).unwrap();
    assert!((p.perplexity - 7.0).abs() < 1e-9, "{}", p.perplexity);
    assert_eq!(p.scored_tokens, 7);
}

#[test]
fn training_beats_the_untrained_model() {
    let mut wins = 0;
    for seed in 0..5 {
        let syn = planted(seed, 2);
        let (train, test) = split_train_test(&syn.corpus, 0.9, &mut seeded_rng(seed + 50)).unwrap();
        let untrained = text_chain(&train, "Full TN", 0, seed);
        let mut trained = text_chain(&train, "Full TN", 100, seed);
        trained.run_into(&mut Trace::default()).unwrap();
        let opts = FoldIn { fraction: 0.5, sweeps: 20 };
        let before = perplexity(&untrained.text, &test, &opts, &mut seeded_rng(seed)).unwrap();
        let after = perplexity(&trained.text, &test, &opts, &mut seeded_rng(seed)).unwrap();
        if after.perplexity < before.perplexity {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn hashtags_label_their_word_cluster() {
    let (k, v) = (3, 200);
    let mut wins = 0;
    for seed in 0..5 {
        let syn = planted(seed, k);
        let mut chain = text_chain(&syn.corpus, "Full TN", 100, seed);
        chain.run_into(&mut Trace::default()).unwrap();
        let labels = label_topics(&chain.text, 1, 5).unwrap();
        let mut ok = true;
        let mut matched = 0;
        for l in &labels {
            let mut votes = vec![0; k as usize];
            for (w, _) in &l.words {
                votes[block(*w, k, v) as usize] += 1;
            }
            let (c, &n) = votes.iter().enumerate().max_by_key(|(_, &n)| n).unwrap();
            if n >= 4 {
                matched += 1;
                ok &= l.tags.first().is_some_and(|(t, _)| block(*t, k, v) == c as u32);
            }
        }
        if ok && matched >= k {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn planted_author_has_its_community_on_top() {
    let (k, v) = (3, 200);
    let mut wins = 0;
    for seed in 0..5 {
        let syn = planted(seed, k);
        let mut chain = text_chain(&syn.corpus, "Full TN", 100, seed);
        chain.run_into(&mut Trace::default()).unwrap();
        let top = author_topics(&chain.text, 0).unwrap()[0].0;
        let labels = label_topics(&chain.text, 0, 5).unwrap();
        let words = &labels.iter().find(|l| l.topic == top).unwrap().words;
        let mut votes = vec![0; k as usize];
        for (w, _) in words {
            votes[block(*w, k, v) as usize] += 1;
        }
        let c = (0..k as usize).max_by_key(|&c| votes[c]).unwrap();
        if c as u32 == syn.author_community[0] {
            wins += 1;
        }
    }
    assert!(wins >= 4, "{wins}/5");
}

#[test]
fn perfect_labels_score_one() {
    let truth = [3, 3, 1, 0, 1, 2];
    let pred = [7, 7, 5, 9, 5, 6];
    assert_eq!(cluster_metrics(&pred, &truth).unwrap(), (1.0, 1.0));
}
