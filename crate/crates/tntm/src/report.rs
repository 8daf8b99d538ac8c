//! Comma-separated tables and plain-text summaries of runs.
//!
//! * results: held-out perplexity and network log likelihood per model variant,
//!   mean ± sd over seeds.
//! * topic labels: hashtag labels and top words per topic.
//! * author topics: the heaviest topics of selected authors.
//! * recommendations: cosine similarity of the top and bottom ranked authors.

use std::fmt::Write;

use serde::Serialize;
use tntm_core::corpus::Corpus;
use tntm_core::eval::{mean_sd, Recommendation, TopicLabel};
use tntm_core::gp::KernelKind;

/// Perplexity counts word tokens only; hashtags are context.
pub const PERPLEXITY_NOTE: &str = "perplexity over held-out word tokens (hashtags excluded), fold-in document completion";

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Left-aligned text table with column widths fitted to the content.
fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let sep: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            s.push_str(c);
            if i + 1 < cells.len() {
                s.extend(std::iter::repeat_n(' ', w - c.chars().count()));
            }
        }
        out.push_str(&s);
        out.push('\n');
    };
    line(header.to_vec());
    line(sep.iter().map(String::as_str).collect());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
    out
}

fn pm(xs: &[f64]) -> String {
    if xs.is_empty() {
        return "N/A".into();
    }
    let (m, sd) = mean_sd(xs);
    format!("{m:.1} ± {sd:.1}")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultRow {
    pub variant: String,
    pub perplexity: Vec<f64>,
    pub network_ll: Vec<f64>,
    /// Seeds that did not finish.
    pub failed: usize,
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let opt = |xs: &[f64]| {
        if xs.is_empty() {
            ("".to_string(), "".to_string())
        } else {
            let (m, sd) = mean_sd(xs);
            (m.to_string(), sd.to_string())
        }
    };
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let (pm_, psd) = opt(&r.perplexity);
            let (nm, nsd) = opt(&r.network_ll);
            vec![
                r.variant.clone(),
                pm_,
                psd,
                nm,
                nsd,
                r.perplexity.len().max(r.network_ll.len()).to_string(),
                r.failed.to_string(),
            ]
        })
        .collect();
    csv_string(
        &["model", "perplexity_mean", "perplexity_sd", "network_ll_mean", "network_ll_sd", "seeds", "failed"],
        &body,
    )
}

pub fn results_text(rows: &[ResultRow]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut name = r.variant.clone();
            if r.failed > 0 {
                name.push_str(&format!(" (partial: {} failed)", r.failed));
            }
            vec![name, pm(&r.perplexity), pm(&r.network_ll)]
        })
        .collect();
    let mut out = text_table(&["Model", "Perplexity", "Network Log Likelihood"], &body);
    writeln!(out, "\n{PERPLEXITY_NOTE}").unwrap();
    out
}

fn words(corpus: &Corpus, ids: &[(u32, f64)]) -> String {
    ids.iter().map(|(w, _)| corpus.vocabulary[*w as usize].as_str()).collect::<Vec<_>>().join(" ")
}

fn label_rows(labels: &[TopicLabel], corpus: &Corpus) -> Vec<Vec<String>> {
    labels
        .iter()
        .map(|l| {
            let tags: Vec<String> = l.tags.iter().map(|(t, _)| format!("#{}", corpus.vocabulary[*t as usize])).collect();
            vec![l.topic.to_string(), tags.join(" "), words(corpus, &l.words)]
        })
        .collect()
}

pub fn labels_csv(labels: &[TopicLabel], corpus: &Corpus) -> String {
    csv_string(&["topic", "labels", "top_words"], &label_rows(labels, corpus))
}

pub fn labels_text(labels: &[TopicLabel], corpus: &Corpus) -> String {
    text_table(&["Topic", "Topic Label", "Top Words"], &label_rows(labels, corpus))
}

/// One author's heaviest topics with their top words.
#[derive(Clone, Debug, PartialEq)]
pub struct AuthorTopics {
    pub author: String,
    pub topics: Vec<(u32, f64, Vec<(u32, f64)>)>,
}

fn author_topic_rows(rows: &[AuthorTopics], corpus: &Corpus) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for a in rows {
        for (rank, (k, w, top)) in a.topics.iter().enumerate() {
            out.push(vec![a.author.clone(), (rank + 1).to_string(), k.to_string(), format!("{w:.3}"), words(corpus, top)]);
        }
    }
    out
}

pub fn author_topics_csv(rows: &[AuthorTopics], corpus: &Corpus) -> String {
    csv_string(&["author", "rank", "topic", "weight", "top_words"], &author_topic_rows(rows, corpus))
}

pub fn author_topics_text(rows: &[AuthorTopics], corpus: &Corpus) -> String {
    text_table(&["Author", "Rank", "Topic", "Weight", "Top Words"], &author_topic_rows(rows, corpus))
}

/// Row label of a kernel in the recommendation table.
pub fn kernel_label(kind: KernelKind) -> &'static str {
    match kind {
        KernelKind::Original => "Original",
        KernelKind::Cosine => "TN",
    }
}

fn recommendation_rows(recs: &[Recommendation], corpus: &Corpus, ranks: usize) -> Vec<Vec<String>> {
    const ORD: [&str; 3] = ["1st", "2nd", "3rd"];
    let mut out = Vec::new();
    for r in recs {
        for (set, list) in [("Recommended", r.recommended(ranks).to_vec()), ("Not-recommended", r.not_recommended(ranks))] {
            for (i, (a, score, cos)) in list.iter().enumerate() {
                let rank = ORD.get(i).map_or_else(|| format!("{}th", i + 1), |s| s.to_string());
                out.push(vec![
                    kernel_label(r.kernel).into(),
                    set.into(),
                    rank,
                    corpus.authors.get(*a as usize).cloned().unwrap_or_else(|| a.to_string()),
                    format!("{score:.4}"),
                    format!("{cos:.2}"),
                ]);
            }
        }
    }
    out
}

pub fn recommendations_csv(recs: &[Recommendation], corpus: &Corpus, ranks: usize) -> String {
    csv_string(&["model", "set", "rank", "author", "score", "cosine"], &recommendation_rows(recs, corpus, ranks))
}

pub fn recommendations_text(recs: &[Recommendation], corpus: &Corpus, ranks: usize) -> String {
    text_table(&["Model", "Set", "Rank", "Author", "Score", "Cosine similarity"], &recommendation_rows(recs, corpus, ranks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_show_missing_values() {
        let rows = vec![
            ResultRow {
                variant: "No Network".into(),
                perplexity: vec![10.0, 12.0],
                ..Default::default()
            },
            ResultRow {
                variant: "Full TN".into(),
                perplexity: vec![9.0, 9.0],
                network_ll: vec![-3.0, -5.0],
                failed: 0,
            },
        ];
        let text = results_text(&rows);
        assert!(text.contains("11.0 ± 1.4"), "{text}");
        assert!(text.contains("N/A"));
        assert!(text.contains("-4.0 ± 1.4"));
        let csv = results_csv(&rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("No Network,11,"));
    }

    #[test]
    fn recommendation_layout() {
        let corpus = Corpus {
            authors: (0..8).map(|i| format!("u{i}")).collect(),
            ..Default::default()
        };
        let rec = |kernel| Recommendation {
            kernel,
            embedding: vec![0.5, 0.5],
            ranked: (0..8).map(|a| (a, 1.0 - a as f64 / 8.0, 0.9 - a as f64 / 10.0)).collect(),
        };
        let recs = [rec(KernelKind::Original), rec(KernelKind::Cosine)];
        let csv = recommendations_csv(&recs, &corpus, 3);
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').take(3).collect()).collect();
        assert_eq!(rows.len(), 12);
        assert_eq!(rows[0], ["Original", "Recommended", "1st"]);
        assert_eq!(rows[5], ["Original", "Not-recommended", "3rd"]);
        assert_eq!(rows[6], ["TN", "Recommended", "1st"]);
        assert!(csv.lines().nth(1).unwrap().ends_with(",u0,1.0000,0.90"));
    }
}
