//! On-disk formats.
//!
//! Encoded corpus: one document per line, tab-separated; field 0 is the
//! document id and each further field is a sentence of space-separated
//! base-10 token ids.
//!
//! Vocabulary: one `token<TAB>count` line per token; the 0-based line number
//! is the id.
//!
//! A corpus directory holds `vocab.txt` plus one encoded file per split
//! (`train.txt`, `valid.txt`, `test.txt`).
//!
//! Raw input: a directory of plain-text files (one document each) or a single
//! file whose documents are separated by lines containing only `%%%%`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Corpus, Document, Split, Vocabulary};
use crate::error::{Error, Result};

const DOC_SEPARATOR: &str = "%%%%";

pub fn write_vocabulary<W: Write>(mut w: W, vocab: &Vocabulary) -> std::io::Result<()> {
    for (t, c) in vocab.tokens().iter().zip(vocab.counts()) {
        writeln!(w, "{t}\t{c}")?;
    }
    Ok(())
}

pub fn read_vocabulary<R: BufRead>(r: R, source: &str) -> Result<Vocabulary> {
    let mut tokens = Vec::new();
    let mut counts = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let loc = || format!("{source}:{}", n + 1);
        let (tok, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(loc(), "expected token<TAB>count"))?;
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(loc(), format!("bad count {count:?}")))?;
        tokens.push(tok.to_string());
        counts.push(count);
    }
    Vocabulary::from_counts(tokens, counts)
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &Corpus) -> std::io::Result<()> {
    for doc in &corpus.documents {
        w.write_all(doc.id.as_bytes())?;
        for sent in &doc.sentences {
            w.write_all(b"\t")?;
            for (i, id) in sent.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{id}")?;
            }
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(
    r: R,
    vocabulary: Arc<Vocabulary>,
    split: Split,
    source: &str,
) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.is_empty() {
            continue;
        }
        let loc = || format!("{source}:{}", n + 1);
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        let sentences = fields
            .map(|f| {
                f.split(' ')
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| Error::parse(loc(), format!("bad token id {t:?}")))
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = Document::new(id, sentences).map_err(|e| Error::parse(loc(), e.to_string()))?;
        doc.check_ids(vocabulary.len())
            .map_err(|e| Error::parse(loc(), e.to_string()))?;
        documents.push(doc);
    }
    Ok(Corpus {
        documents,
        split,
        vocabulary,
    })
}

pub const VOCAB_FILE: &str = "vocab.txt";

pub fn save_vocabulary(dir: &Path, vocab: &Vocabulary) -> Result<()> {
    let path = dir.join(VOCAB_FILE);
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    write_vocabulary(&mut w, vocab)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

pub fn load_vocabulary(dir: &Path) -> Result<Vocabulary> {
    let path = dir.join(VOCAB_FILE);
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_vocabulary(BufReader::new(f), &path.display().to_string())
}

/// Writes `corpus` to `<dir>/<split>.txt`.
pub fn save_split(dir: &Path, corpus: &Corpus) -> Result<()> {
    let path = dir.join(corpus.split.file_name());
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    write_corpus(&mut w, corpus)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

pub fn load_split(dir: &Path, vocabulary: Arc<Vocabulary>, split: Split) -> Result<Corpus> {
    let path = dir.join(split.file_name());
    let f = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_corpus(BufReader::new(f), vocabulary, split, &path.display().to_string())
}

fn split_documents(stem: &str, text: &str, out: &mut Vec<(String, String)>) {
    if !text.lines().any(|l| l.trim() == DOC_SEPARATOR) {
        out.push((stem.to_string(), text.to_string()));
        return;
    }
    let mut current = String::new();
    let mut index = 0;
    let mut flush = |buf: &mut String, index: &mut usize| {
        if !buf.trim().is_empty() {
            out.push((format!("{stem}#{index}"), std::mem::take(buf)));
            *index += 1;
        }
        buf.clear();
    };
    for line in text.lines() {
        if line.trim() == DOC_SEPARATOR {
            flush(&mut current, &mut index);
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    flush(&mut current, &mut index);
}

/// Reads `(id, text)` pairs from a directory (files in name order) or a
/// single file.
pub fn read_raw_documents(path: &Path) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    if path.is_dir() {
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            if entry.file_type().map_err(|e| Error::io(path, e))?.is_file() {
                files.push(entry.path());
            }
        }
        files.sort();
    } else {
        files.push(path.to_path_buf());
    }
    let mut out = Vec::new();
    for f in files {
        let text = fs::read_to_string(&f).map_err(|e| Error::io(&f, e))?;
        let stem = f
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "doc".into());
        split_documents(&stem, &text, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EOS_ID, UNK_ID};

    #[test]
    fn corpus_format_is_exact() {
        let vocab = Arc::new(
            Vocabulary::from_counts(
                vec!["<unk>".into(), "<eos>".into(), "a".into()],
                vec![0, 3, 7],
            )
            .unwrap(),
        );
        let corpus = Corpus {
            documents: vec![Document::new("d0", vec![vec![2, 2, EOS_ID], vec![UNK_ID, EOS_ID]]).unwrap()],
            split: Split::Train,
            vocabulary: Arc::clone(&vocab),
        };
        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "d0\t2 2 1\t0 1\n");
        let back = read_corpus(&buf[..], vocab, Split::Train, "mem").unwrap();
        assert_eq!(back.documents, corpus.documents);

        let mut vb = Vec::new();
        write_vocabulary(&mut vb, &corpus.vocabulary).unwrap();
        assert_eq!(String::from_utf8(vb.clone()).unwrap(), "<unk>\t0\n<eos>\t3\na\t7\n");
        assert_eq!(&read_vocabulary(&vb[..], "mem").unwrap(), corpus.vocabulary.as_ref());
    }

    #[test]
    fn corpus_rejects_bad_lines() {
        let vocab = Arc::new(
            Vocabulary::from_counts(vec!["<unk>".into(), "<eos>".into()], vec![1, 1]).unwrap(),
        );
        for bad in ["d\t0 x 1\n", "d\t0 0\n", "d\t5 1\n", "d\n"] {
            assert!(
                read_corpus(bad.as_bytes(), Arc::clone(&vocab), Split::Test, "mem").is_err(),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn separator_splits_documents() {
        let mut out = Vec::new();
        split_documents("f", "One.\n%%%%\nTwo.\n%%%%\n\n%%%%\nThree.", &mut out);
        let ids: Vec<&str> = out.iter().map(|(i, _)| i.as_str()).collect();
        assert_eq!(ids, ["f#0", "f#1", "f#2"]);
        assert_eq!(out[2].1.trim(), "Three.");
    }
}
