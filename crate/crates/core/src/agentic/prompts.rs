//! Prompt templates with `{{placeholder}}` substitution. Defaults ship with
//! the crate; any of the four can be overridden from a file via config.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub keywords: String,
    pub groups: String,
    pub themes: String,
    pub grader: String,
    pub extract_score: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            keywords: include_str!("../../prompts/keywords.txt").to_string(),
            groups: include_str!("../../prompts/groups.txt").to_string(),
            themes: include_str!("../../prompts/themes.txt").to_string(),
            grader: include_str!("../../prompts/grader.txt").to_string(),
            extract_score: include_str!("../../prompts/extract_score.txt").to_string(),
        }
    }
}

fn render(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{{{key}}}}}"), value);
    }
    out
}

impl PromptTemplates {
    pub fn render_keywords(&self, prior: &str, texts: &str) -> String {
        render(&self.keywords, &[("prior", prior), ("texts", texts)])
    }

    pub fn render_groups(&self, prior: &str, keywords: &str) -> String {
        render(&self.groups, &[("prior", prior), ("keywords", keywords)])
    }

    pub fn render_themes(&self, prior: &str, groups: &str) -> String {
        render(&self.themes, &[("prior", prior), ("groups", groups)])
    }

    pub fn render_grader(&self, themes: &str, texts: &str) -> String {
        render(&self.grader, &[("themes", themes), ("texts", texts)])
    }

    pub fn render_extract_score(&self, verdict: &str) -> String {
        render(&self.extract_score, &[("verdict", verdict)])
    }

    pub fn load_override(&mut self, which: &str, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match which {
            "keywords" => self.keywords = text,
            "groups" => self.groups = text,
            "themes" => self.themes = text,
            "grader" => self.grader = text,
            "extract_score" => self.extract_score = text,
            other => {
                return Err(Error::Config(format!(
                    "unknown prompt template {other:?}; expected keywords/groups/themes/grader/extract_score"
                )))
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_substituted() {
        let t = PromptTemplates::default();
        let p = t.render_keywords("PRIOR-BLOCK\n", "1. a post");
        assert!(p.contains("PRIOR-BLOCK"));
        assert!(p.contains("1. a post"));
        assert!(!p.contains("{{texts}}"));
        assert!(!p.contains("{{prior}}"));
    }

    #[test]
    fn empty_prior_leaves_no_gap_marker() {
        let t = PromptTemplates::default();
        let p = t.render_keywords("", "1. a post");
        assert!(!p.contains("{{"));
    }
}
