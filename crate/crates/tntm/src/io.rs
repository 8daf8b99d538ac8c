//! Corpus, edge and label files.
//!
//! * Corpus: one JSON object per line with `id`, `author`, `text-tokens` and an
//!   optional `hashtags` array. Tokens are pre-tokenized.
//! * Edges: CSV `author_a,author_b` of author names, header optional.
//! * Labels: CSV `doc_id,label`, header optional. Labels are arbitrary strings.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use tntm_core::corpus::{Corpus, EdgeList, RawDocument};

use crate::error::{CliError, Result};

/// Share of malformed corpus lines tolerated before loading fails.
pub const MAX_MALFORMED: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub records: usize,
    pub malformed: usize,
}

/// Parses corpus lines, skipping blank ones. Fails when more than 1% of the
/// records do not parse or nothing is left after filtering.
pub fn parse_corpus(
    reader: impl BufRead,
    min_author_docs: usize,
    min_token_count: usize,
) -> Result<(Corpus, LoadStats)> {
    let mut raw = Vec::new();
    let mut stats = LoadStats::default();
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::Data(format!("reading corpus: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.records += 1;
        match serde_json::from_str::<RawDocument>(&line) {
            Ok(d) => raw.push(d),
            Err(e) => {
                log::debug!("skipping record {}: {e}", stats.records);
                stats.malformed += 1;
            }
        }
    }
    if stats.records == 0 {
        return Err(CliError::Data("corpus is empty".into()));
    }
    if stats.malformed as f64 > MAX_MALFORMED * stats.records as f64 {
        return Err(CliError::Data(format!(
            "{} of {} corpus records are malformed",
            stats.malformed, stats.records
        )));
    }
    if stats.malformed > 0 {
        log::warn!("skipped {} malformed corpus records", stats.malformed);
    }
    let corpus = Corpus::from_raw(&raw, min_author_docs, min_token_count)?;
    Ok((corpus, stats))
}

pub fn load_corpus(path: &Path, min_author_docs: usize, min_token_count: usize) -> Result<(Corpus, LoadStats)> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_corpus(BufReader::new(file), min_author_docs, min_token_count)
        .map_err(|e| match e {
            CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
            other => other,
        })
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?);
    for d in corpus.to_raw() {
        let line = serde_json::to_string(&d).expect("records serialize");
        writeln!(out, "{line}").map_err(|e| CliError::io(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

fn csv_rows(path: &Path, header: [&str; 2]) -> Result<Vec<(String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if rec.len() != 2 {
            return Err(CliError::Data(format!(
                "{}: line {} has {} fields, expected 2",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        if i == 0 && rec[0] == *header[0] && rec[1] == *header[1] {
            continue;
        }
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(rows)
}

/// Reads an edge file against the corpus author table. Pairs naming dropped
/// authors are skipped and counted.
pub fn load_edges(path: &Path, corpus: &Corpus) -> Result<(EdgeList, usize)> {
    let rows = csv_rows(path, ["author_a", "author_b"])?;
    Ok(EdgeList::from_named(rows.iter().map(|(a, b)| (a.as_str(), b.as_str())), corpus))
}

pub fn save_edges(path: &Path, edges: &EdgeList, corpus: &Corpus) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    let mut write = |a: &str, b: &str| w.write_record([a, b]).map_err(|e| CliError::Data(e.to_string()));
    write("author_a", "author_b")?;
    for &(a, b) in &edges.pairs {
        write(&corpus.authors[a as usize], &corpus.authors[b as usize])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Document labels keyed by document id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Labels {
    pub by_doc: HashMap<String, u32>,
    /// Label names in order of first appearance.
    pub names: Vec<String>,
}

impl Labels {
    /// Labels of `corpus` in document order; errors if one is missing.
    pub fn align(&self, corpus: &Corpus) -> Result<Vec<u32>> {
        corpus
            .documents
            .iter()
            .map(|d| {
                self.by_doc
                    .get(&d.id)
                    .copied()
                    .ok_or_else(|| CliError::Data(format!("no label for document `{}`", d.id)))
            })
            .collect()
    }
}

pub fn load_labels(path: &Path) -> Result<Labels> {
    let mut labels = Labels::default();
    let mut index: HashMap<String, u32> = HashMap::new();
    for (doc, label) in csv_rows(path, ["doc_id", "label"])? {
        let next = index.len() as u32;
        let l = *index.entry(label.clone()).or_insert_with(|| {
            labels.names.push(label);
            next
        });
        if labels.by_doc.insert(doc.clone(), l).is_some() {
            return Err(CliError::Data(format!("{}: document `{doc}` labeled twice", path.display())));
        }
    }
    Ok(labels)
}

pub fn save_labels(path: &Path, corpus: &Corpus, labels: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Data(e.to_string()))?;
    w.write_record(["doc_id", "label"]).map_err(|e| CliError::Data(e.to_string()))?;
    for (d, l) in corpus.documents.iter().zip(labels) {
        w.write_record([d.id.as_str(), &l.to_string()]).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str, author: &str, tokens: &[&str], tags: &[&str]) -> String {
        serde_json::json!({"id": id, "author": author, "text-tokens": tokens, "hashtags": tags}).to_string()
    }

    #[test]
    fn hashtag_shares_the_word_index() {
        let text = line("1", "a", &["Happy", "day"], &["#happy"]);
        let (c, _) = parse_corpus(text.as_bytes(), 1, 1).unwrap();
        let d = &c.documents[0];
        assert_eq!(d.hashtags[0], d.words[0]);
        assert_eq!(c.vocabulary[d.words[0] as usize], "happy");
    }

    #[test]
    fn small_authors_are_dropped() {
        let mut text = line("1", "rare", &["x"], &[]);
        for i in 0..3 {
            text.push('\n');
            text.push_str(&line(&format!("b{i}"), "busy", &["y"], &[]));
        }
        let (c, _) = parse_corpus(text.as_bytes(), 3, 1).unwrap();
        assert_eq!(c.authors, vec!["busy".to_string()]);
        assert_eq!(c.documents.len(), 3);
    }

    #[test]
    fn empty_input_fails() {
        assert!(matches!(parse_corpus("".as_bytes(), 1, 1), Err(CliError::Data(_))));
        assert!(matches!(parse_corpus("\n\n".as_bytes(), 1, 1), Err(CliError::Data(_))));
    }

    #[test]
    fn malformed_share_is_bounded() {
        let good: Vec<String> = (0..199).map(|i| line(&i.to_string(), "a", &["w"], &[])).collect();
        let mut text = good.join("\n");
        text.push_str("\n{not json}\n");
        let (_, stats) = parse_corpus(text.as_bytes(), 1, 1).unwrap();
        assert_eq!(stats, LoadStats { records: 200, malformed: 1 });
        text.push_str("{\"id\": 3}\n{\"id\": 4}\n");
        assert!(parse_corpus(text.as_bytes(), 1, 1).is_err());
    }
}
