//! Structured-block parsing for model responses.
//!
//! Every role answers inside a fenced region delimited by `===BEGIN===` /
//! `===END===` lines with line-oriented fields. Extraction steps list items
//! as `name | detail` under a `keywords:` / `groups:` / `themes:` header
//! (themes carry a third `group, group` segment); the grader emits
//! `score: <0-10>` and `feedback: <text>`. Score parsing falls back to the
//! first in-range number (or `x/10`) found in free text.

use crate::agentic::{Evaluation, KeywordGroup, Theme};
use crate::error::{Error, Result};

/// Returns the lines between the first BEGIN/END fence, if both exist.
pub fn extract_block(raw: &str) -> Option<String> {
    let mut inside = false;
    let mut collected: Vec<&str> = Vec::new();
    for line in raw.lines() {
        let t = line.trim();
        if !inside {
            if t == "===BEGIN===" {
                inside = true;
            }
        } else {
            if t == "===END===" {
                return Some(collected.join("\n"));
            }
            collected.push(line);
        }
    }
    None
}

fn items_under_header<'a>(block: &'a str, header: &str) -> Result<Vec<&'a str>> {
    let mut lines = block.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(first) if first.eq_ignore_ascii_case(header) => {}
        other => {
            return Err(Error::ParseResponse(format!(
                "expected {header:?} header, found {other:?}"
            )))
        }
    }
    Ok(lines.collect())
}

fn split_segments(line: &str) -> Vec<String> {
    line.split('|').map(|s| s.trim().to_string()).collect()
}

/// `keywords:` items; the detail segment is advisory and dropped.
pub fn parse_keywords(block: &str) -> Result<Vec<String>> {
    let mut keywords = Vec::new();
    for item in items_under_header(block, "keywords:")? {
        let segments = split_segments(item);
        let name = segments[0].clone();
        if name.is_empty() {
            return Err(Error::ParseResponse(format!("empty keyword in {item:?}")));
        }
        if !keywords.contains(&name) {
            keywords.push(name);
        }
    }
    if keywords.is_empty() {
        return Err(Error::ParseResponse("no keywords in block".into()));
    }
    Ok(keywords)
}

fn canonical<'a>(known: &'a [String], candidate: &str) -> Option<&'a String> {
    known.iter().find(|k| k.eq_ignore_ascii_case(candidate))
}

/// `groups:` items `name | member, member`; members must echo known keywords
/// (case-insensitive, canonicalized to the keyword spelling).
pub fn parse_groups(block: &str, keywords: &[String]) -> Result<Vec<KeywordGroup>> {
    let mut groups: Vec<KeywordGroup> = Vec::new();
    for item in items_under_header(block, "groups:")? {
        let segments = split_segments(item);
        if segments.len() < 2 || segments[0].is_empty() {
            return Err(Error::ParseResponse(format!(
                "group line must be `name | members`: {item:?}"
            )));
        }
        let name = segments[0].clone();
        if groups.iter().any(|g| g.name == name) {
            return Err(Error::ParseResponse(format!("duplicate group {name:?}")));
        }
        let mut members = Vec::new();
        for raw_member in segments[1].split(',') {
            let m = raw_member.trim();
            if m.is_empty() {
                continue;
            }
            match canonical(keywords, m) {
                Some(kw) => {
                    if !members.contains(kw) {
                        members.push(kw.clone());
                    }
                }
                None => {
                    return Err(Error::ParseResponse(format!(
                        "group {name:?} references unknown keyword {m:?}"
                    )))
                }
            }
        }
        if members.is_empty() {
            return Err(Error::ParseResponse(format!("group {name:?} has no members")));
        }
        groups.push(KeywordGroup { name, members });
    }
    if groups.is_empty() {
        return Err(Error::ParseResponse("no groups in block".into()));
    }
    Ok(groups)
}

/// `themes:` items `title | description | group, group`; group references
/// must name known groups.
pub fn parse_themes(block: &str, groups: &[KeywordGroup]) -> Result<Vec<Theme>> {
    let group_names: Vec<String> = groups.iter().map(|g| g.name.clone()).collect();
    let mut themes = Vec::new();
    for item in items_under_header(block, "themes:")? {
        let segments = split_segments(item);
        if segments.len() < 3 || segments[0].is_empty() {
            return Err(Error::ParseResponse(format!(
                "theme line must be `title | description | groups`: {item:?}"
            )));
        }
        let mut refs = Vec::new();
        for raw_ref in segments[2].split(',') {
            let g = raw_ref.trim();
            if g.is_empty() {
                continue;
            }
            match canonical(&group_names, g) {
                Some(name) => {
                    if !refs.contains(name) {
                        refs.push(name.clone());
                    }
                }
                None => {
                    return Err(Error::ParseResponse(format!(
                        "theme {:?} references unknown group {g:?}",
                        segments[0]
                    )))
                }
            }
        }
        if refs.is_empty() {
            return Err(Error::ParseResponse(format!(
                "theme {:?} references no groups",
                segments[0]
            )));
        }
        themes.push(Theme {
            title: segments[0].clone(),
            description: segments[1].clone(),
            groups: refs,
        });
    }
    if themes.is_empty() {
        return Err(Error::ParseResponse("no themes in block".into()));
    }
    Ok(themes)
}

/// Structured `score:`/`feedback:` fields first, then a free-text fallback:
/// the first number in [0,10] (optionally written `x/10`), with the remainder
/// of the text as feedback. Scores normalize to [0,1] by /10 exactly.
pub fn parse_score_feedback(raw: &str) -> Result<Evaluation> {
    if raw.trim().is_empty() {
        return Err(Error::Precondition("grader output is empty".into()));
    }
    if let Some(block) = extract_block(raw) {
        let mut score: Option<f64> = None;
        let mut feedback: Option<String> = None;
        for line in block.lines() {
            let t = line.trim();
            if let Some(rest) = strip_field(t, "score:") {
                if let Ok(v) = rest.trim().parse::<f64>() {
                    if (0.0..=10.0).contains(&v) {
                        score = Some(v / 10.0);
                    }
                }
            } else if let Some(rest) = strip_field(t, "feedback:") {
                let text = rest.trim();
                if !text.is_empty() {
                    feedback = Some(text.to_string());
                }
            }
        }
        if let (Some(score), Some(feedback)) = (score, feedback) {
            return Ok(Evaluation {
                score,
                feedback,
                raw: raw.to_string(),
            });
        }
    }
    // fallback: first in-range number in free text
    if let Some((score, after)) = scan_free_text_score(raw) {
        let rest = raw[after..].trim();
        let feedback = if rest.is_empty() {
            raw.trim().to_string()
        } else {
            rest.to_string()
        };
        return Ok(Evaluation {
            score,
            feedback,
            raw: raw.to_string(),
        });
    }
    Err(Error::ScoreNotFound)
}

fn strip_field<'a>(line: &'a str, field: &str) -> Option<&'a str> {
    match line.get(..field.len()) {
        Some(prefix) if prefix.eq_ignore_ascii_case(field) => Some(&line[field.len()..]),
        _ => None,
    }
}

/// Scans for the first number in [0,10]; `x/10` consumes the denominator.
/// Returns (normalized score, byte index just past the match).
fn scan_free_text_score(raw: &str) -> Option<(f64, usize)> {
    let bytes = raw.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        // avoid matching the tail of an identifier like "v2"
        if i > 0 && (bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'.') {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()
        {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let value: f64 = raw[start..i].parse().ok()?;
        let mut end = i;
        // optional “/10” suffix
        let mut j = i;
        while j < bytes.len() && bytes[j] == b' ' {
            j += 1;
        }
        if j < bytes.len() && bytes[j] == b'/' {
            let mut k = j + 1;
            while k < bytes.len() && bytes[k] == b' ' {
                k += 1;
            }
            if raw[k..].starts_with("10") {
                end = k + 2;
            }
        }
        if (0.0..=10.0).contains(&value) {
            return Some((value / 10.0, end));
        }
    }
    None
}
