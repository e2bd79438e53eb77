//! Text ingestion: sentence segmentation, tokenization, vocabulary
//! construction and integer encoding with sentence boundaries preserved.

mod io;
mod segment;

pub use io::{
    load_split, load_vocabulary, read_corpus, read_raw_documents, read_vocabulary, save_split,
    save_vocabulary, write_corpus, write_vocabulary, VOCAB_FILE,
};
pub use segment::{segment_sentences, tokenize};

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const UNK_ID: usize = 0;
pub const EOS_ID: usize = 1;

pub const DEFAULT_MAX_SENTENCE_LEN: usize = 40;

/// Token inventory with training-corpus frequencies.
///
/// Index 0 is always `<unk>` and index 1 is always `<eos>`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    counts: Vec<u64>,
    unigram: Vec<f64>,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list and counts.
    pub fn from_counts(tokens: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if tokens.len() != counts.len() {
            return Err(Error::LengthMismatch(tokens.len(), counts.len()));
        }
        if tokens.len() < 2 || tokens[UNK_ID] != UNK || tokens[EOS_ID] != EOS {
            return Err(Error::InvalidArgument(format!(
                "vocabulary must start with {UNK} and {EOS}"
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate token {t:?}")));
            }
        }
        let total: u64 = counts.iter().sum();
        let unigram = if total == 0 {
            vec![1.0 / tokens.len() as f64; tokens.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        Ok(Self {
            tokens,
            ids,
            counts,
            unigram,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or `<unk>` when absent.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn unigram(&self) -> &[f64] {
        &self.unigram
    }

    /// Space-joined tokens with a trailing `<eos>` dropped.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        let body = match ids.last() {
            Some(&EOS_ID) => &ids[..ids.len() - 1],
            _ => ids,
        };
        body.iter()
            .map(|&i| self.tokens.get(i).map_or(UNK, String::as_str))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A tokenized but not yet encoded document.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDocument {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
}

impl RawDocument {
    /// Segments and tokenizes `text`, dropping sentences with no tokens.
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        let sentences = segment_sentences(text)
            .iter()
            .map(|s| tokenize(s))
            .filter(|t| !t.is_empty())
            .collect();
        Self {
            id: id.into(),
            sentences,
        }
    }
}

/// An encoded document; every sentence ends with `<eos>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Vec<usize>>,
}

impl Document {
    pub fn new(id: impl Into<String>, sentences: Vec<Vec<usize>>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::EmptyDocument);
        }
        for s in &sentences {
            if s.last() != Some(&EOS_ID) {
                return Err(Error::MalformedSentence(format!(
                    "sentence {s:?} does not end with {EOS}"
                )));
            }
        }
        Ok(Self {
            id: id.into(),
            sentences,
        })
    }

    /// Number of predicted tokens, `<eos>` markers included.
    pub fn n_words(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn words(&self) -> impl Iterator<Item = usize> + '_ {
        self.sentences.iter().flatten().copied()
    }

    pub fn check_ids(&self, vocab_size: usize) -> Result<()> {
        match self.words().find(|&w| w >= vocab_size) {
            Some(id) => Err(Error::TokenOutOfRange {
                id,
                size: vocab_size,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.name())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub split: Split,
    pub vocabulary: Arc<Vocabulary>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats::of(&self.documents)
    }
}

/// Document-level descriptors of an encoded corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    /// Tokens excluding `<eos>` markers.
    pub words: usize,
}

impl CorpusStats {
    pub fn of(docs: &[Document]) -> Self {
        let sentences = docs.iter().map(|d| d.sentences.len()).sum();
        let words = docs
            .iter()
            .flat_map(|d| d.sentences.iter())
            .map(|s| s.iter().filter(|&&w| w != EOS_ID).count())
            .sum();
        Self {
            documents: docs.len(),
            sentences,
            words,
        }
    }

    pub fn mean_sentences_per_doc(&self) -> f64 {
        if self.documents == 0 {
            0.0
        } else {
            self.sentences as f64 / self.documents as f64
        }
    }

    pub fn mean_words_per_sentence(&self) -> f64 {
        if self.sentences == 0 {
            0.0
        } else {
            self.words as f64 / self.sentences as f64
        }
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "documents={}\tsentences={}\twords={}\tmean_sentences_per_doc={:.2}\tmean_words_per_sentence={:.2}",
            self.documents,
            self.sentences,
            self.words,
            self.mean_sentences_per_doc(),
            self.mean_words_per_sentence()
        )
    }
}

/// Keeps `<unk>`, `<eos>` and the `max_size - 2` most frequent training tokens.
///
/// Ties are broken by lexicographic token order. `<eos>` is counted once per
/// training sentence and `<unk>` absorbs the counts of every pruned token.
pub fn build_vocabulary(train_docs: &[RawDocument], max_size: usize) -> Result<Vocabulary> {
    if max_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary size {max_size} leaves no room for reserved tokens"
        )));
    }
    let mut freq: HashMap<&str, u64> = HashMap::new();
    let mut n_sentences = 0u64;
    let mut reserved_unk = 0u64;
    for doc in train_docs {
        for sent in &doc.sentences {
            n_sentences += 1;
            for tok in sent {
                if tok == UNK || tok == EOS {
                    reserved_unk += 1;
                } else {
                    *freq.entry(tok.as_str()).or_default() += 1;
                }
            }
        }
    }
    if n_sentences == 0 {
        return Err(Error::NoTrainingData);
    }
    let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = (max_size - 2).min(ranked.len());
    let pruned: u64 = ranked[keep..].iter().map(|&(_, c)| c).sum();

    let mut tokens = vec![UNK.to_string(), EOS.to_string()];
    let mut counts = vec![pruned + reserved_unk, n_sentences];
    for &(t, c) in &ranked[..keep] {
        tokens.push(t.to_string());
        counts.push(c);
    }
    Vocabulary::from_counts(tokens, counts)
}

/// Maps tokens to ids, appends `<eos>` and truncates long sentences to
/// `max_sentence_len - 1` tokens plus `<eos>`. Documents with no surviving
/// sentence are dropped with a warning.
pub fn encode_corpus(
    docs: &[RawDocument],
    vocabulary: &Arc<Vocabulary>,
    split: Split,
    max_sentence_len: usize,
) -> Corpus {
    let cap = max_sentence_len.max(2);
    let mut documents = Vec::with_capacity(docs.len());
    for doc in docs {
        let sentences: Vec<Vec<usize>> = doc
            .sentences
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| {
                let mut ids: Vec<usize> = s.iter().take(cap - 1).map(|t| vocabulary.id(t)).collect();
                ids.push(EOS_ID);
                ids
            })
            .collect();
        if sentences.is_empty() {
            log::warn!("dropping empty document {:?}", doc.id);
            continue;
        }
        documents.push(Document {
            id: doc.id.clone(),
            sentences,
        });
    }
    Corpus {
        documents,
        split,
        vocabulary: Arc::clone(vocabulary),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(id: &str, sents: &[&[&str]]) -> RawDocument {
        RawDocument {
            id: id.into(),
            sentences: sents
                .iter()
                .map(|s| s.iter().map(|t| t.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn frequency_cut() {
        let doc = raw(
            "d",
            &[&["a", "a", "a", "b", "b"], &["a", "a", "b", "c"]],
        );
        let v = build_vocabulary(&[doc], 4).unwrap();
        assert_eq!(v.tokens(), &["<unk>", "<eos>", "a", "b"]);
        assert_eq!(v.counts(), &[1, 2, 5, 3]);
        assert_eq!(v.id("c"), UNK_ID);
        let total: f64 = v.unigram().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lexicographic_tie_break() {
        let doc = raw("d", &[&["b", "a", "b", "a"]]);
        let v = build_vocabulary(&[doc], 3).unwrap();
        assert_eq!(v.tokens(), &["<unk>", "<eos>", "a"]);
    }

    #[test]
    fn empty_training_data_is_error() {
        assert!(matches!(build_vocabulary(&[], 10), Err(Error::NoTrainingData)));
        assert!(matches!(
            build_vocabulary(&[raw("d", &[])], 10),
            Err(Error::NoTrainingData)
        ));
        assert!(build_vocabulary(&[raw("d", &[&["x"]])], 1).is_err());
    }

    #[test]
    fn encode_oov_eos_and_truncation() {
        let v = Arc::new(build_vocabulary(&[raw("d", &[&["the", "x", "y", "z"]])], 10).unwrap());
        let c = encode_corpus(
            &[raw("a", &[&["the", "zzzunseen"]])],
            &v,
            Split::Test,
            DEFAULT_MAX_SENTENCE_LEN,
        );
        assert_eq!(c.documents[0].sentences[0], vec![v.id("the"), UNK_ID, EOS_ID]);

        let long: Vec<&str> = vec!["x"; 10];
        let c = encode_corpus(&[raw("b", &[&long])], &v, Split::Test, 4);
        assert_eq!(c.documents[0].sentences[0].len(), 4);
        assert_eq!(*c.documents[0].sentences[0].last().unwrap(), EOS_ID);

        let c = encode_corpus(&[raw("empty", &[]), raw("ok", &[&["x"]])], &v, Split::Test, 40);
        assert_eq!(c.len(), 1);
        assert_eq!(c.documents[0].id, "ok");
    }

    #[test]
    fn document_invariants() {
        assert!(matches!(Document::new("d", vec![]), Err(Error::EmptyDocument)));
        assert!(Document::new("d", vec![vec![3]]).is_err());
        let d = Document::new("d", vec![vec![3, 1], vec![1]]).unwrap();
        assert_eq!(d.n_words(), 3);
        assert!(d.check_ids(3).is_err());
        assert!(d.check_ids(4).is_ok());
    }

    #[test]
    fn stats_match_recount() {
        let v = Arc::new(build_vocabulary(&[raw("d", &[&["a"]])], 10).unwrap());
        let c = encode_corpus(
            &[raw("1", &[&["a", "b"], &["c"]]), raw("2", &[&["a", "a", "a"]])],
            &v,
            Split::Train,
            40,
        );
        let s = c.stats();
        assert_eq!((s.documents, s.sentences, s.words), (2, 3, 6));
        assert!((s.mean_sentences_per_doc() - 1.5).abs() < 1e-12);
        assert!((s.mean_words_per_sentence() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            sents in prop::collection::vec(prop::collection::vec("[a-e]{1,2}", 1..8), 1..5)
        ) {
            let train = raw("t", &[&["a", "b", "c", "aa", "bb"]]);
            let v = Arc::new(build_vocabulary(&[train], 6).unwrap());
            let doc = RawDocument { id: "x".into(), sentences: sents.clone() };
            let c = encode_corpus(&[doc], &v, Split::Test, 100);
            for (enc, orig) in c.documents[0].sentences.iter().zip(&sents) {
                prop_assert_eq!(*enc.last().unwrap(), EOS_ID);
                let decoded: Vec<&str> = enc.iter().map(|&i| v.token(i)).collect();
                let mut expected: Vec<&str> = orig
                    .iter()
                    .map(|t| if v.get(t).is_some() { t.as_str() } else { UNK })
                    .collect();
                expected.push(EOS);
                prop_assert_eq!(decoded, expected);
            }
        }

        #[test]
        fn vocabulary_is_deterministic(
            sents in prop::collection::vec(prop::collection::vec("[a-h]", 1..6), 1..6),
            size in 2usize..8
        ) {
            let doc = RawDocument { id: "x".into(), sentences: sents };
            let a = build_vocabulary(std::slice::from_ref(&doc), size).unwrap();
            let b = build_vocabulary(&[doc], size).unwrap();
            let (mut fa, mut fb) = (Vec::new(), Vec::new());
            write_vocabulary(&mut fa, &a).unwrap();
            write_vocabulary(&mut fb, &b).unwrap();
            prop_assert_eq!(fa, fb);
            let total: f64 = a.unigram().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
