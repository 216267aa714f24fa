use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::lm::is_class_tag;
use crate::{Error, Result};

/// Class inventories keyed by tag, each a list of (word-piece entry, weight).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassDefinitions {
    classes: BTreeMap<String, Vec<(Vec<String>, f64)>>,
}

impl ClassDefinitions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, tag: &str, entry: Vec<String>, weight: f64) -> Result<()> {
        if !is_class_tag(tag) {
            return Err(Error::InvalidClass(format!("{tag:?} is not a class tag")));
        }
        if entry.is_empty() {
            return Err(Error::InvalidClass(format!("empty entry for {tag}")));
        }
        if let Some(nested) = entry.iter().find(|t| is_class_tag(t)) {
            return Err(Error::InvalidClass(format!("{tag} entry contains class tag {nested}")));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidClass(format!(
                "{tag} entry weight {weight} is not positive"
            )));
        }
        self.classes.entry(tag.to_string()).or_default().push((entry, weight));
        Ok(())
    }

    /// Tags in sorted order.
    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn entries(&self, tag: &str) -> Option<&[(Vec<String>, f64)]> {
        self.classes.get(tag).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[(Vec<String>, f64)])> {
        self.classes.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Parses TSV lines `tag<TAB>space-separated entry[<TAB>weight]`.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut defs = ClassDefinitions::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| Error::Parse {
                path: source.to_path_buf(),
                line: n + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(fail(format!(
                    "expected 2 or 3 tab-separated columns, found {}",
                    cols.len()
                )));
            }
            let weight = match cols.get(2) {
                Some(w) => w.trim().parse::<f64>().map_err(|_| fail(format!("bad weight {w:?}")))?,
                None => 1.0,
            };
            let entry = cols[1].split_whitespace().map(str::to_string).collect();
            defs.add(cols[0].trim(), entry, weight)
                .map_err(|e| fail(e.to_string()))?;
        }
        Ok(defs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (tag, entries) in &self.classes {
            for (entry, weight) in entries {
                if *weight == 1.0 {
                    let _ = writeln!(out, "{tag}\t{}", entry.join(" "));
                } else {
                    let _ = writeln!(out, "{tag}\t{}\t{weight}", entry.join(" "));
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}
