use proptest::prelude::*;
use tntm::io::{load_corpus, load_edges, load_labels, save_corpus, save_edges, save_labels};
use tntm_core::corpus::{generate_synthetic, RawDocument, SyntheticParams};
use tntm_core::seeded_rng;

fn raw_docs() -> impl Strategy<Value = Vec<RawDocument>> {
    let token = prop::sample::select(vec!["a", "B", "c", "Happy", "happy", "x1", "zz"]);
    let doc = (
        0usize..4,
        prop::collection::vec(token.clone(), 0..6),
        prop::collection::vec(token.prop_map(|t| format!("#{t}")), 0..3),
    );
    prop::collection::vec(doc, 1..30).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, (a, tokens, hashtags))| RawDocument {
                id: format!("d{i}"),
                author: format!("user{a}"),
                tokens: tokens.into_iter().map(String::from).collect(),
                hashtags,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn load_save_load_is_identity(raw in raw_docs(), min_docs in 1usize..3, min_count in 1usize..4) {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.jsonl");
        let text: String = raw.iter().map(|d| serde_json::to_string(d).unwrap() + "\n").collect();
        std::fs::write(&first, text).unwrap();
        let Ok((c1, _)) = load_corpus(&first, min_docs, min_count) else { return Ok(()) };
        let second = dir.path().join("b.jsonl");
        save_corpus(&second, &c1).unwrap();
        let (c2, _) = load_corpus(&second, min_docs, min_count).unwrap();
        prop_assert_eq!(&c1, &c2);
        c2.check().unwrap();
        for d in &c2.documents {
            for &h in &d.hashtags {
                let tag = &c2.vocabulary[h as usize];
                prop_assert_eq!(c2.vocab_index(tag), Some(h));
            }
        }
    }
}

#[test]
fn synthetic_files_round_trip() {
    let syn = generate_synthetic(&SyntheticParams::default(), &mut seeded_rng(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    save_corpus(&p("c.jsonl"), &syn.corpus).unwrap();
    save_edges(&p("e.csv"), &syn.edges, &syn.corpus).unwrap();
    save_labels(&p("l.csv"), &syn.corpus, &syn.doc_labels).unwrap();
    let (corpus, stats) = load_corpus(&p("c.jsonl"), 1, 1).unwrap();
    assert_eq!(stats.malformed, 0);
    // Indices are reassigned by first appearance; the records are the same.
    assert_eq!(corpus.to_raw(), syn.corpus.to_raw());
    assert_eq!(corpus.authors, syn.corpus.authors);
    let (edges, skipped) = load_edges(&p("e.csv"), &corpus).unwrap();
    assert_eq!((edges, skipped), (syn.edges.clone(), 0));
    let labels = load_labels(&p("l.csv")).unwrap().align(&corpus).unwrap();
    // Label strings are renumbered by first appearance; the partition is what matters.
    for (i, a) in labels.iter().enumerate() {
        for (j, b) in labels.iter().enumerate() {
            assert_eq!(a == b, syn.doc_labels[i] == syn.doc_labels[j]);
        }
    }
}

#[test]
fn edges_to_dropped_authors_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("c.jsonl");
    let mut lines = String::new();
    for (i, a) in ["ann", "ann", "bob", "bob", "cat"].iter().enumerate() {
        lines += &format!("{{\"id\":\"{i}\",\"author\":\"{a}\",\"text-tokens\":[\"w\"]}}\n");
    }
    std::fs::write(&corpus_path, lines).unwrap();
    let (corpus, _) = load_corpus(&corpus_path, 2, 1).unwrap();
    let edges_path = dir.path().join("e.csv");
    std::fs::write(&edges_path, "ann,bob\nbob,cat\n# comment\nbob,ann\n").unwrap();
    let (edges, skipped) = load_edges(&edges_path, &corpus).unwrap();
    assert_eq!(edges.pairs, vec![(0, 1)]);
    assert_eq!(skipped, 1);
    std::fs::write(&edges_path, "ann,bob,cat\n").unwrap();
    assert!(load_edges(&edges_path, &corpus).is_err());
}
