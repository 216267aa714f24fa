use std::f64::consts::LN_10;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{NgramEntry, NgramModel, NgramTable};
use crate::lm::{TokenId, Vocabulary, LOG_ZERO};
use crate::{Error, Result};

/// log10 value written for zero probability.
const ARPA_LOG_ZERO: f64 = -99.0;

/// Entries of one order as read: words, log10 probability, log10 backoff.
type RawSection = Vec<(Vec<String>, f64, Option<f64>)>;

fn to_log10(ln: f64) -> f64 {
    if ln == LOG_ZERO {
        ARPA_LOG_ZERO
    } else {
        ln / LN_10
    }
}

fn from_log10(log10: f64) -> f64 {
    if log10 <= ARPA_LOG_ZERO {
        LOG_ZERO
    } else {
        log10 * LN_10
    }
}

pub fn write_arpa<W: Write>(model: &NgramModel, mut out: W) -> std::io::Result<()> {
    let table = model.to_table();
    let vocab = model.vocab();
    writeln!(out, "\\data\\")?;
    for (n, entries) in table.entries.iter().enumerate() {
        writeln!(out, "ngram {}={}", n + 1, entries.len())?;
    }
    for (n, entries) in table.entries.iter().enumerate() {
        writeln!(out)?;
        writeln!(out, "\\{}-grams:", n + 1)?;
        for entry in entries {
            write!(
                out,
                "{}\t{}",
                to_log10(entry.log_prob),
                vocab.decode(&entry.tokens).join(" ")
            )?;
            if let Some(b) = entry.backoff {
                write!(out, "\t{}", to_log10(b))?;
            }
            writeln!(out)?;
        }
    }
    writeln!(out)?;
    writeln!(out, "\\end\\")?;
    out.flush()
}

/// Writes an ARPA file (log10 values on disk).
pub fn save_arpa(model: &NgramModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_arpa(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Reads an ARPA file. Without a vocabulary, ids follow the order of the unigram section.
pub fn load_arpa(path: impl AsRef<Path>, vocab: Option<Arc<Vocabulary>>) -> Result<NgramModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_arpa(BufReader::new(file), path, vocab)
}

enum Section {
    Preamble,
    Data,
    Ngrams(usize),
    End,
}

pub fn read_arpa<R: BufRead>(
    reader: R,
    path: impl Into<PathBuf>,
    vocab: Option<Arc<Vocabulary>>,
) -> Result<NgramModel> {
    let path = path.into();
    let fail = |line: usize, message: String| Error::Parse {
        path: path.clone(),
        line,
        message,
    };

    let mut declared: Vec<usize> = Vec::new();
    let mut raw: Vec<RawSection> = Vec::new();
    let mut section = Section::Preamble;
    let mut last_line = 0;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line.map_err(|e| Error::io(&path, e))?;
        let line = line.trim();
        match section {
            Section::Preamble => {
                if line == "\\data\\" {
                    section = Section::Data;
                }
                // anything before \data\ is a free-form comment
            }
            Section::Data => {
                if line.is_empty() {
                    continue;
                }
                if let Some(rest) = line.strip_prefix("ngram ") {
                    let (n, count) = rest
                        .split_once('=')
                        .ok_or_else(|| fail(lineno, format!("malformed count line {line:?}")))?;
                    let n: usize = n.trim().parse().map_err(|_| fail(lineno, "bad order".into()))?;
                    let count: usize = count
                        .trim()
                        .parse()
                        .map_err(|_| fail(lineno, "bad n-gram count".into()))?;
                    if n != declared.len() + 1 {
                        return Err(fail(lineno, format!("expected ngram {} count", declared.len() + 1)));
                    }
                    declared.push(count);
                } else if let Some(n) = parse_section_header(line) {
                    if declared.is_empty() {
                        return Err(fail(lineno, "no n-gram counts in header".into()));
                    }
                    if n != 1 {
                        return Err(fail(lineno, format!("expected \\1-grams:, found {line}")));
                    }
                    raw.push(Vec::new());
                    section = Section::Ngrams(1);
                } else {
                    return Err(fail(lineno, format!("malformed header line {line:?}")));
                }
            }
            Section::Ngrams(n) => {
                if line.is_empty() {
                    continue;
                }
                if line == "\\end\\" {
                    check_count(&raw, &declared, n).map_err(|m| fail(lineno, m))?;
                    if n != declared.len() {
                        return Err(fail(lineno, format!("missing \\{}-grams: section", n + 1)));
                    }
                    section = Section::End;
                    continue;
                }
                if let Some(next) = parse_section_header(line) {
                    check_count(&raw, &declared, n).map_err(|m| fail(lineno, m))?;
                    if next != n + 1 || next > declared.len() {
                        return Err(fail(lineno, format!("unexpected section {line} after \\{n}-grams:")));
                    }
                    raw.push(Vec::new());
                    section = Section::Ngrams(next);
                    continue;
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != n + 1 && fields.len() != n + 2 {
                    return Err(fail(
                        lineno,
                        format!(
                            "expected {n} tokens in a {n}-gram line, found {}",
                            fields.len().saturating_sub(1)
                        ),
                    ));
                }
                let prob: f64 = fields[0]
                    .parse()
                    .map_err(|_| fail(lineno, format!("bad probability {:?}", fields[0])))?;
                let backoff = match fields.get(n + 1) {
                    Some(b) => Some(
                        b.parse::<f64>()
                            .map_err(|_| fail(lineno, format!("bad backoff {b:?}")))?,
                    ),
                    None => None,
                };
                if prob.is_nan() || backoff.is_some_and(f64::is_nan) {
                    return Err(fail(lineno, "NaN value".into()));
                }
                let tokens = fields[1..=n].iter().map(|s| s.to_string()).collect();
                raw[n - 1].push((tokens, from_log10(prob), backoff.map(from_log10)));
            }
            Section::End => {
                if !line.is_empty() {
                    return Err(fail(lineno, "content after \\end\\".into()));
                }
            }
        }
    }
    if !matches!(section, Section::End) {
        return Err(fail(last_line, "missing \\end\\".into()));
    }

    let vocab = match vocab {
        Some(v) => v,
        None => {
            Arc::new(Vocabulary::new(raw[0].iter().map(|(t, _, _)| t[0].clone())).map_err(|e| fail(0, e.to_string()))?)
        }
    };
    let mut table = NgramTable::default();
    for entries in raw {
        let mut converted = Vec::with_capacity(entries.len());
        for (tokens, log_prob, backoff) in entries {
            let ids: Vec<TokenId> = tokens
                .iter()
                .map(|t| vocab.id(t))
                .collect::<Result<_>>()
                .map_err(|e| fail(0, e.to_string()))?;
            converted.push(NgramEntry {
                tokens: ids,
                log_prob,
                backoff,
            });
        }
        table.entries.push(converted);
    }
    NgramModel::from_table(vocab, &table).map_err(|e| fail(0, e.to_string()))
}

fn parse_section_header(line: &str) -> Option<usize> {
    line.strip_prefix('\\')?.strip_suffix("-grams:")?.parse().ok()
}

fn check_count(raw: &[RawSection], declared: &[usize], n: usize) -> std::result::Result<(), String> {
    let found = raw[n - 1].len();
    if found != declared[n - 1] {
        return Err(format!(
            "header declares {} {n}-grams, section has {found}",
            declared[n - 1]
        ));
    }
    Ok(())
}
