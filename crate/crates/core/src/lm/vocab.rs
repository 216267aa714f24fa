use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

pub type TokenId = u32;

/// Sentence-start token. Only ever used as context.
pub const BOS: &str = "<s>";
/// Sentence-end token. Predicted like any other token.
pub const EOS: &str = "</s>";

/// Word-piece prefix marking the start of a word.
pub const WORD_BOUNDARY: char = '\u{2581}';

/// Returns true for class tags such as `⟨NAME⟩`.
pub fn is_class_tag(token: &str) -> bool {
    token
        .strip_prefix('\u{27e8}')
        .and_then(|rest| rest.strip_suffix('\u{27e9}'))
        .is_some_and(|name| !name.is_empty() && name.chars().all(|c| c.is_ascii_uppercase()))
}

/// Ordered word-piece inventory with a bijective token/id mapping.
///
/// The transducer blank is not a member; the decoder addresses it separately.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (line, token) in tokens.into_iter().enumerate() {
            vocab.push(token.into(), line + 1)?;
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String, line: usize) -> Result<TokenId> {
        if self.index.contains_key(&token) {
            return Err(Error::DuplicateToken { token, line });
        }
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        Ok(id)
    }

    /// Reads a vocabulary file: one token per line, line number (from zero) is the id.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut vocab = Vocabulary::new(Vec::<String>::new())?;
        for (n, line) in text.lines().enumerate() {
            let token = line.trim_end_matches('\r');
            if token.is_empty() || token.contains(char::is_whitespace) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("invalid token {token:?}"),
                });
            }
            vocab.push(token.to_string(), n + 1).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for token in &self.tokens {
            writeln!(out, "{token}").expect("write to Vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Returns a new vocabulary with `extra` appended after the existing ids.
    pub fn extended<I, S>(&self, extra: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = self.clone();
        for token in extra {
            let line = vocab.len() + 1;
            vocab.push(token.into(), line)?;
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Looks up a token; unseen strings are an error.
    pub fn id(&self, token: &str) -> Result<TokenId> {
        self.get(token).ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.len() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange { id, size: self.len() })
        }
    }

    pub fn bos(&self) -> Result<TokenId> {
        self.get(BOS).ok_or(Error::MissingReserved(BOS))
    }

    pub fn eos(&self) -> Result<TokenId> {
        self.get(EOS).ok_or(Error::MissingReserved(EOS))
    }

    /// Maps a space-separated token string to ids.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<&str> {
        ids.iter().filter_map(|&id| self.token(id)).collect()
    }

    /// Joins word-pieces into words using the `▁` boundary convention.
    ///
    /// Sentence markers and class tags are dropped.
    pub fn detokenize(&self, ids: &[TokenId]) -> Vec<String> {
        detokenize(self.decode(ids))
    }
}

pub fn detokenize<'a, I>(pieces: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut words: Vec<String> = Vec::new();
    for piece in pieces {
        if piece == BOS || piece == EOS || is_class_tag(piece) {
            continue;
        }
        match piece.strip_prefix(WORD_BOUNDARY) {
            Some(rest) => {
                if !rest.is_empty() {
                    words.push(rest.to_string());
                }
            }
            None => match words.last_mut() {
                Some(last) => last.push_str(piece),
                None => words.push(piece.to_string()),
            },
        }
    }
    words
}
