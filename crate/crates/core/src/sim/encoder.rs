use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::lm::{log_sum_exp, Vocabulary};
use crate::{Error, Result};

const MAGIC: &str = "FNTSCORES v1";

/// Per-frame encoder log-probabilities over the vocabulary plus a raw blank logit.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    vocab_size: usize,
    scores: Vec<f64>,
    blank: Vec<f64>,
}

impl EncoderOutput {
    /// `scores` holds `blank.len()` rows of `vocab_size` values, each row normalized.
    pub fn new(vocab_size: usize, scores: Vec<f64>, blank: Vec<f64>) -> Result<Self> {
        if vocab_size == 0 || scores.len() != vocab_size * blank.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores do not form {} frames of size {vocab_size}",
                scores.len(),
                blank.len()
            )));
        }
        if blank.iter().any(|b| b.is_nan() || *b == f64::INFINITY) {
            return Err(Error::NanInput);
        }
        for (t, row) in scores.chunks(vocab_size).enumerate() {
            let mass = log_sum_exp(row)?;
            if (mass.exp() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "frame {t} sums to {} instead of 1",
                    mass.exp()
                )));
            }
        }
        Ok(EncoderOutput {
            vocab_size,
            scores,
            blank,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.blank.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.scores[t * self.vocab_size..(t + 1) * self.vocab_size]
    }

    pub fn blank_logit(&self, t: usize) -> f64 {
        self.blank[t]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} T={} V={}\n", self.num_frames(), self.vocab_size);
        for t in 0..self.num_frames() {
            for v in self.frame(t) {
                let _ = write!(out, "{v} ");
            }
            let _ = writeln!(out, "{}", self.blank[t]);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Parses the text format; `source` only labels errors.
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let path = source.into();
        let fail = |offset: usize, message: String| Error::Format {
            path: path.clone(),
            offset,
            message,
        };
        let mut lines = Lines { text, offset: 0 };
        let (_, header) = lines.next().ok_or_else(|| fail(0, "missing header".into()))?;
        let (frames, vocab_size) = parse_header(header).ok_or_else(|| fail(0, format!("bad header {header:?}")))?;
        let mut scores = Vec::with_capacity(frames * vocab_size);
        let mut blank = Vec::with_capacity(frames);
        for t in 0..frames {
            let (start, line) = lines
                .next()
                .ok_or_else(|| fail(text.len(), format!("truncated: expected {frames} frames, found {t}")))?;
            let mut n = 0;
            for (col, field) in fields(line) {
                let value: f64 = field
                    .parse()
                    .ok()
                    .filter(|v: &f64| !v.is_nan())
                    .ok_or_else(|| fail(start + col, format!("bad number {field:?}")))?;
                if n < vocab_size {
                    scores.push(value);
                } else {
                    blank.push(value);
                }
                n += 1;
            }
            if n != vocab_size + 1 {
                return Err(fail(
                    start,
                    format!("frame {t} has {n} values, expected {}", vocab_size + 1),
                ));
            }
        }
        if let Some((start, _)) = lines.next() {
            return Err(fail(start, "data after the last frame".into()));
        }
        EncoderOutput::new(vocab_size, scores, blank).map_err(|e| fail(0, e.to_string()))
    }

    /// Loads a score file, checking its width against `vocab` when given.
    pub fn load(path: impl AsRef<Path>, vocab: Option<&Vocabulary>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let out = Self::parse(&text, path)?;
        if let Some(v) = vocab {
            if v.len() != out.vocab_size {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: 0,
                    message: format!("header V={} but vocabulary has {} tokens", out.vocab_size, v.len()),
                });
            }
        }
        Ok(out)
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix(MAGIC)?;
    let mut parts = rest.split_whitespace();
    let t = parts.next()?.strip_prefix("T=")?.parse().ok()?;
    let v = parts.next()?.strip_prefix("V=")?.parse().ok()?;
    parts.next().is_none().then_some((t, v))
}

/// Whitespace-separated fields with their byte offsets in `line`.
fn fields(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split(' ')
        .scan(0, |pos, f| {
            let start = *pos;
            *pos += f.len() + 1;
            Some((start, f))
        })
        .filter(|(_, f)| !f.is_empty())
}

/// Non-empty lines with the byte offset of their first character.
struct Lines<'a> {
    text: &'a str,
    offset: usize,
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        while self.offset < self.text.len() {
            let start = self.offset;
            let rest = &self.text[start..];
            let end = rest.find('\n').map_or(rest.len(), |e| e + 1);
            self.offset += end;
            let line = rest[..end].trim_end_matches(['\n', '\r']);
            if !line.trim().is_empty() {
                return Some((start, line));
            }
        }
        None
    }
}
