use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::spec::{GraphSpec, RootBase, Stream};
use super::state::TextState;
use crate::corpus::{Corpus, Document};
use crate::{Error, Result};

/// Plate sizes of a forward draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForwardSizes {
    pub authors: u32,
    pub documents: u32,
    pub words_per_doc: u32,
    pub hashtags_per_doc: u32,
    pub vocab_size: u32,
}

/// A forward draw: the generated corpus and the full latent state (every
/// seating arrangement and token topic) it was generated from.
#[derive(Clone, Debug)]
pub struct ForwardSample {
    pub corpus: Corpus,
    pub state: TextState,
}

/// Ancestral sampling of the whole network with the topic root's base replaced by
/// a uniform base over `truncation` topics. Document `m` belongs to author
/// `m mod authors`. Hashtag counts are ignored when the graph has no hashtag stream.
pub fn forward_generate<R: Rng + ?Sized>(
    spec: &GraphSpec,
    truncation: u32,
    sizes: ForwardSizes,
    rng: &mut R,
) -> Result<ForwardSample> {
    if truncation == 0 || sizes.authors == 0 || sizes.vocab_size == 0 {
        return Err(Error::Input(
            "truncation, author count and vocabulary size must be positive".into(),
        ));
    }
    let mut spec = spec.clone();
    let compiled = spec.validate()?;
    let root_id = compiled.nodes[compiled.topic_root].id.clone();
    for n in &mut spec.nodes {
        if n.id == root_id {
            n.base = Some(RootBase::FiniteTopics(truncation));
        }
    }
    let compiled = spec.validate()?;
    let hashtags = if compiled.stream(Stream::Hashtags).is_some() {
        sizes.hashtags_per_doc
    } else {
        0
    };
    let words = if compiled.stream(Stream::Words).is_some() {
        sizes.words_per_doc
    } else {
        0
    };
    let corpus = Corpus {
        documents: (0..sizes.documents)
            .map(|m| Document {
                id: format!("d{m}"),
                author: m % sizes.authors,
                words: vec![0; words as usize],
                hashtags: vec![0; hashtags as usize],
            })
            .collect(),
        authors: (0..sizes.authors).map(|a| format!("a{a}")).collect(),
        vocabulary: (0..sizes.vocab_size).map(|v| format!("w{v}")).collect::<Vec<String>>(),
    };
    let mut state = TextState::new(compiled, &corpus)?;
    for t in 0..state.tokens().len() {
        state.draw_topic(t, rng)?;
        state.draw_symbol(t, rng)?;
    }
    let mut corpus = corpus;
    fill_symbols(&mut corpus, &state);
    Ok(ForwardSample { corpus, state })
}

/// Writes the token symbols held by `state` back into `corpus`.
pub fn fill_symbols(corpus: &mut Corpus, state: &TextState) {
    for tok in state.tokens() {
        let doc = &mut corpus.documents[tok.doc as usize];
        let list = match tok.stream {
            Stream::Words => &mut doc.words,
            Stream::Hashtags => &mut doc.hashtags,
        };
        list[tok.position as usize] = tok.symbol;
    }
}

/// Redraws every token's symbol from its conditional given the topic-side state:
/// the vocabulary side is emptied and regenerated sequentially in scan order.
pub fn regenerate_symbols<R: Rng + ?Sized>(state: &mut TextState, rng: &mut R) -> Result<()> {
    state.clear_vocabulary_side();
    for t in 0..state.tokens().len() {
        state.draw_symbol(t, rng)?;
    }
    Ok(())
}
