//! Corpus loading, filtering, and text cleaning.
//!
//! Posts enter as raw JSONL or CSV records, pass through tag/language filters,
//! and get a cleaning pass that strips URLs, @-mentions, #-hashtags, and any
//! character outside letters/digits/basic punctuation before whitespace
//! normalization. All operations are pure: filters return new corpora and
//! never reorder or mutate surviving posts.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One social-media post. `clean_text` stays empty until [`Corpus::cleaned`]
/// (or [`clean_text`]) runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Post {
    pub id: String,
    pub raw_text: String,
    #[serde(default)]
    pub clean_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

/// Ordered collection of posts with unique ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    posts: Vec<Post>,
    pub source_path: String,
    pub filters_applied: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    created_at: Option<String>,
    #[serde(default)]
    lang: Option<String>,
}

impl Corpus {
    /// Builds a corpus from posts, enforcing non-empty unique ids.
    pub fn from_posts(posts: Vec<Post>, source_path: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &posts {
            if p.id.is_empty() {
                return Err(Error::Precondition("post id must be non-empty".into()));
            }
            if !seen.insert(p.id.clone()) {
                return Err(Error::DuplicateId { id: p.id.clone() });
            }
        }
        Ok(Corpus {
            posts,
            source_path: source_path.into(),
            filters_applied: Vec::new(),
        })
    }

    /// Loads a corpus from disk in insertion order.
    pub fn load(path: &Path, format: CorpusFormat) -> Result<Self> {
        let records = match format {
            CorpusFormat::Jsonl => load_jsonl(path)?,
            CorpusFormat::Csv => load_csv(path)?,
        };
        let posts = records
            .into_iter()
            .map(|r| Post {
                id: r.id,
                raw_text: r.text,
                clean_text: String::new(),
                created_at: r.created_at,
                lang: r.lang,
            })
            .collect();
        Corpus::from_posts(posts, path.display().to_string())
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Keeps posts whose raw text contains any of the given variants.
    pub fn filter_by_tags(&self, variants: &[String], case_insensitive: bool) -> Result<Corpus> {
        if variants.is_empty() {
            return Err(Error::Precondition("tag variants must be non-empty".into()));
        }
        let needles: Vec<String> = if case_insensitive {
            variants.iter().map(|v| v.to_lowercase()).collect()
        } else {
            variants.to_vec()
        };
        let posts = self
            .posts
            .iter()
            .filter(|p| {
                let hay = if case_insensitive {
                    p.raw_text.to_lowercase()
                } else {
                    p.raw_text.clone()
                };
                needles.iter().any(|n| hay.contains(n))
            })
            .cloned()
            .collect();
        let mut out = Corpus {
            posts,
            source_path: self.source_path.clone(),
            filters_applied: self.filters_applied.clone(),
        };
        out.filters_applied.push(format!(
            "tags:any-of{variants:?} case_insensitive={case_insensitive}"
        ));
        Ok(out)
    }

    /// Keeps posts whose `lang` equals `code`. Posts without a `lang` field
    /// pass only if they look English: at least 80% of alphabetic characters
    /// are ASCII and at least 3 distinct stopwords from the built-in list occur.
    pub fn filter_language(&self, code: &str) -> Corpus {
        let posts = self
            .posts
            .iter()
            .filter(|p| match &p.lang {
                Some(l) => l == code,
                None => looks_english(&p.raw_text),
            })
            .cloned()
            .collect();
        let mut out = Corpus {
            posts,
            source_path: self.source_path.clone(),
            filters_applied: self.filters_applied.clone(),
        };
        out.filters_applied.push(format!("language={code}"));
        out
    }

    /// Returns a corpus with `clean_text` populated for every post.
    pub fn cleaned(&self) -> Corpus {
        let posts = self
            .posts
            .iter()
            .map(|p| Post {
                clean_text: clean_text(&p.raw_text),
                ..p.clone()
            })
            .collect();
        Corpus {
            posts,
            source_path: self.source_path.clone(),
            filters_applied: self.filters_applied.clone(),
        }
    }

    /// Drops posts whose `clean_text` is empty; the embedding stage requires
    /// non-empty cleaned text.
    pub fn drop_empty_clean(&self) -> Corpus {
        let posts = self
            .posts
            .iter()
            .filter(|p| !p.clean_text.is_empty())
            .cloned()
            .collect();
        let mut out = Corpus {
            posts,
            source_path: self.source_path.clone(),
            filters_applied: self.filters_applied.clone(),
        };
        out.filters_applied.push("non-empty-clean".into());
        out
    }
}

fn load_jsonl(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        records.push(rec);
    }
    Ok(records)
}

fn load_csv(path: &Path) -> Result<Vec<RawRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let mut records = Vec::new();
    for (idx, row) in reader.deserialize::<RawRecord>().enumerate() {
        let rec = row.map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            // header occupies line 1
            line: idx + 2,
            msg: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Cleaning order: URLs, then @-mentions, then #-hashtags (each removed as a
/// whole token up to whitespace), then any character outside
/// `[letters, digits, space, . , ! ? ' -]`, then whitespace collapse + trim.
pub fn clean_text(raw: &str) -> String {
    let mut kept_tokens: Vec<&str> = Vec::new();
    for token in raw.split_whitespace() {
        if let Some(pos) = token.find("://") {
            // strip from the start of the scheme run through end of token
            let scheme_start = token[..pos]
                .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '+' || c == '.' || c == '-'))
                .map(|i| i + c_len(token, i))
                .unwrap_or(0);
            if scheme_start > 0 {
                kept_tokens.push(&token[..scheme_start]);
            }
            continue;
        }
        if token.get(..4).is_some_and(|p| p.eq_ignore_ascii_case("www.")) {
            continue;
        }
        if token.starts_with('@') || token.starts_with('#') {
            continue;
        }
        kept_tokens.push(token);
    }

    let joined = kept_tokens.join(" ");
    let mut out = String::with_capacity(joined.len());
    for ch in joined.chars() {
        if ch.is_alphabetic() || ch.is_ascii_digit() || matches!(ch, '.' | ',' | '!' | '?' | '\'' | '-') {
            out.push(ch);
        } else if ch.is_whitespace() {
            out.push(' ');
        }
        // anything else is dropped
    }

    let mut collapsed = String::with_capacity(out.len());
    let mut prev_space = false;
    for ch in out.chars() {
        if ch == ' ' {
            if !prev_space {
                collapsed.push(' ');
            }
            prev_space = true;
        } else {
            collapsed.push(ch);
            prev_space = false;
        }
    }
    collapsed.trim().to_string()
}

fn c_len(s: &str, byte_idx: usize) -> usize {
    s[byte_idx..].chars().next().map(char::len_utf8).unwrap_or(1)
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "an", "and", "any", "are", "as", "at", "be", "because", "been",
    "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he",
    "her", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "my", "no",
    "not", "of", "on", "or", "our", "out", "she", "so", "some", "that", "the", "their", "them",
    "then", "there", "they", "this", "to", "up", "was", "we", "were", "what", "when", "which",
    "who", "will", "with", "would", "you", "your",
];

fn looks_english(text: &str) -> bool {
    let mut alpha = 0usize;
    let mut ascii_alpha = 0usize;
    for ch in text.chars() {
        if ch.is_alphabetic() {
            alpha += 1;
            if ch.is_ascii_alphabetic() {
                ascii_alpha += 1;
            }
        }
    }
    if alpha > 0 && (ascii_alpha as f64) < 0.8 * alpha as f64 {
        return false;
    }
    let mut hits: HashSet<&str> = HashSet::new();
    let mut word = String::new();
    for ch in text.chars().chain(std::iter::once(' ')) {
        if ch.is_alphabetic() {
            word.extend(ch.to_lowercase());
        } else if !word.is_empty() {
            if let Ok(idx) = STOPWORDS.binary_search(&word.as_str()) {
                hits.insert(STOPWORDS[idx]);
            }
            word.clear();
        }
    }
    hits.len() >= 3
}
