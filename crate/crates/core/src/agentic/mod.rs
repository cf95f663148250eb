//! Two-model theme refinement: a generator runs a three-step chain-of-thought
//! extraction (keywords, groups, themes), a grader scores the result, and the
//! loop feeds score + feedback back into the generator until the quality
//! threshold is met or the iteration cap is reached.

pub mod client;
pub mod parse;
pub mod prompts;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use client::{build_client, ChatClient, ChatClientSpec, ClientKind, ScriptedClient};
pub use parse::parse_score_feedback;
pub use prompts::PromptTemplates;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct KeywordGroup {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Theme {
    pub title: String,
    pub description: String,
    pub groups: Vec<String>,
}

/// One extraction round's output for a cluster.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ThemeSet {
    pub cluster_id: usize,
    pub keywords: Vec<String>,
    pub groups: Vec<KeywordGroup>,
    pub themes: Vec<Theme>,
    pub iteration: usize,
}

impl ThemeSet {
    /// Referential integrity: group members come from `keywords`, themes
    /// reference existing groups, titles are non-empty.
    pub fn validate(&self) -> Result<()> {
        for g in &self.groups {
            for m in &g.members {
                if !self.keywords.contains(m) {
                    return Err(Error::ParseResponse(format!(
                        "group {:?} references unknown keyword {m:?}",
                        g.name
                    )));
                }
            }
        }
        for t in &self.themes {
            if t.title.is_empty() {
                return Err(Error::ParseResponse("theme with empty title".into()));
            }
            if t.groups.is_empty() {
                return Err(Error::ParseResponse(format!(
                    "theme {:?} references no groups",
                    t.title
                )));
            }
            for g in &t.groups {
                if !self.groups.iter().any(|kg| &kg.name == g) {
                    return Err(Error::ParseResponse(format!(
                        "theme {:?} references unknown group {g:?}",
                        t.title
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Grader verdict, normalized to [0,1] from the 0-10 scale.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    pub feedback: String,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    ThresholdMet,
    MaxIterations,
}

/// Prompts sent in one round, kept for auditability.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RoundPrompts {
    pub keywords: String,
    pub groups: String,
    pub themes: String,
    pub grader: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Round {
    pub themes: ThemeSet,
    pub evaluation: Evaluation,
    pub prompts: RoundPrompts,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RefinementTranscript {
    pub cluster_id: usize,
    pub rounds: Vec<Round>,
    pub terminal_reason: TerminalReason,
    pub final_themes: ThemeSet,
}

/// The texts handed to the models for one cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSample {
    pub cluster_id: usize,
    pub texts: Vec<String>,
}

/// A refinement failure carrying whatever rounds completed before it.
#[derive(Debug)]
pub struct RefineError {
    pub partial: Vec<Round>,
    pub cause: Error,
}

impl RefineError {
    fn new(partial: Vec<Round>, cause: Error) -> Self {
        RefineError { partial, cause }
    }
}

const SYSTEM_EXTRACTOR: &str =
    "You are a careful thematic-analysis assistant. Always answer inside the requested \
     ===BEGIN===/===END=== block.";
const SYSTEM_GRADER: &str =
    "You are a quality-assurance grader for thematic analyses. Always answer inside the \
     requested ===BEGIN===/===END=== block.";
const SYSTEM_SCORE_EXTRACTOR: &str =
    "You extract fields from text. Always answer inside the requested \
     ===BEGIN===/===END=== block.";

fn numbered(texts: &[String]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Sends a prompt and parses the fenced block; a missing fence earns exactly
/// one re-ask before failing. Semantic violations inside a well-formed block
/// fail immediately.
fn ask_block<R>(
    client: &mut dyn ChatClient,
    system: &str,
    prompt: &str,
    parse_fn: impl Fn(&str) -> Result<R>,
) -> Result<R> {
    let raw = client.complete(system, prompt)?;
    if let Some(block) = parse::extract_block(&raw) {
        return parse_fn(&block);
    }
    let raw2 = client.complete(system, prompt)?;
    match parse::extract_block(&raw2) {
        Some(block) => parse_fn(&block),
        None => Err(Error::ParseResponse(
            "no structured block found after one re-ask".into(),
        )),
    }
}

/// Three-step CoT extraction. When `prior` is present its score and feedback
/// are embedded verbatim in the first prompt.
pub fn extract_themes(
    sample: &ClusterSample,
    client: &mut dyn ChatClient,
    templates: &PromptTemplates,
    prior: Option<&Evaluation>,
    iteration: usize,
) -> Result<(ThemeSet, RoundPrompts)> {
    if sample.texts.is_empty() {
        return Err(Error::Precondition("sample texts must be non-empty".into()));
    }

    let prior_text = match prior {
        Some(eval) => format!(
            "A previous extraction scored {} (threshold scale 0-1) with this feedback: {}\n\
             Revise the extraction to address that feedback.\n",
            eval.score, eval.feedback
        ),
        None => String::new(),
    };

    let keywords_prompt = templates.render_keywords(&prior_text, &numbered(&sample.texts));
    let keywords = ask_block(client, SYSTEM_EXTRACTOR, &keywords_prompt, parse::parse_keywords)?;

    let keyword_list = keywords
        .iter()
        .map(|k| format!("- {k}"))
        .collect::<Vec<_>>()
        .join("\n");
    let groups_prompt = templates.render_groups(&prior_text, &keyword_list);
    let groups = ask_block(client, SYSTEM_EXTRACTOR, &groups_prompt, |b| {
        parse::parse_groups(b, &keywords)
    })?;

    let group_list = groups
        .iter()
        .map(|g| format!("- {} | {}", g.name, g.members.join(", ")))
        .collect::<Vec<_>>()
        .join("\n");
    let themes_prompt = templates.render_themes(&prior_text, &group_list);
    let themes = ask_block(client, SYSTEM_EXTRACTOR, &themes_prompt, |b| {
        parse::parse_themes(b, &groups)
    })?;

    let set = ThemeSet {
        cluster_id: sample.cluster_id,
        keywords,
        groups,
        themes,
        iteration,
    };
    set.validate()?;
    Ok((
        set,
        RoundPrompts {
            keywords: keywords_prompt,
            groups: groups_prompt,
            themes: themes_prompt,
            grader: String::new(),
        },
    ))
}

/// One grading call: themes plus the sampled texts, returning the raw grader
/// text (scoring is a separate parse step).
pub fn evaluate_themes(
    themes: &ThemeSet,
    texts: &[String],
    client: &mut dyn ChatClient,
    templates: &PromptTemplates,
) -> Result<(String, String)> {
    if themes.themes.is_empty() {
        return Err(Error::Precondition(
            "cannot grade an empty theme list".into(),
        ));
    }
    let theme_list = themes
        .themes
        .iter()
        .map(|t| format!("- {} | {} | groups: {}", t.title, t.description, t.groups.join(", ")))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = templates.render_grader(&theme_list, &numbered(texts));
    let raw = client.complete(SYSTEM_GRADER, &prompt)?;
    Ok((raw, prompt))
}

/// extract -> evaluate -> stop at score >= threshold, else thread
/// (score, feedback) back into the next extraction; hard stop at the cap.
///
/// When `score_extractor` is present, the grader's verdict is routed through
/// that third model to isolate the score and feedback; otherwise the
/// deterministic parser handles the verdict directly.
pub fn refine_loop(
    sample: &ClusterSample,
    llm1: &ChatClientSpec,
    llm2: &ChatClientSpec,
    quality_threshold: f64,
    max_iterations: usize,
    templates: &PromptTemplates,
    score_extractor: Option<&ChatClientSpec>,
) -> std::result::Result<RefinementTranscript, RefineError> {
    let fail = |partial: &[Round], cause: Error| RefineError::new(partial.to_vec(), cause);

    if sample.texts.is_empty() {
        return Err(fail(&[], Error::Precondition("sample texts must be non-empty".into())));
    }
    if max_iterations == 0 {
        return Err(fail(&[], Error::Precondition("max_iterations must be >= 1".into())));
    }
    if !(0.0..=1.0).contains(&quality_threshold) {
        return Err(fail(
            &[],
            Error::Precondition("quality threshold must lie in [0,1]".into()),
        ));
    }

    let mut generator = build_client(llm1).map_err(|e| fail(&[], e))?;
    let mut grader = build_client(llm2).map_err(|e| fail(&[], e))?;
    let mut extractor = match score_extractor {
        Some(spec) => Some(build_client(spec).map_err(|e| fail(&[], e))?),
        None => None,
    };

    let mut rounds: Vec<Round> = Vec::new();
    let mut prior: Option<Evaluation> = None;
    for iteration in 1..=max_iterations {
        let (themes, mut prompts) =
            extract_themes(sample, generator.as_mut(), templates, prior.as_ref(), iteration)
                .map_err(|e| fail(&rounds, e))?;
        let (raw, grader_prompt) =
            evaluate_themes(&themes, &sample.texts, grader.as_mut(), templates)
                .map_err(|e| fail(&rounds, e))?;
        prompts.grader = grader_prompt;
        let evaluation = match extractor.as_mut() {
            Some(client) => {
                let prompt = templates.render_extract_score(&raw);
                let extracted = client
                    .complete(SYSTEM_SCORE_EXTRACTOR, &prompt)
                    .map_err(|e| fail(&rounds, e))?;
                let mut ev = parse_score_feedback(&extracted).map_err(|e| fail(&rounds, e))?;
                ev.raw = raw.clone();
                ev
            }
            None => parse_score_feedback(&raw).map_err(|e| fail(&rounds, e))?,
        };
        let met = evaluation.score >= quality_threshold;
        prior = Some(evaluation.clone());
        rounds.push(Round {
            themes: themes.clone(),
            evaluation,
            prompts,
        });
        if met {
            return Ok(RefinementTranscript {
                cluster_id: sample.cluster_id,
                final_themes: themes,
                rounds,
                terminal_reason: TerminalReason::ThresholdMet,
            });
        }
    }
    let final_themes = rounds.last().expect("at least one round ran").themes.clone();
    Ok(RefinementTranscript {
        cluster_id: sample.cluster_id,
        rounds,
        terminal_reason: TerminalReason::MaxIterations,
        final_themes,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterFailure {
    pub cluster_id: usize,
    pub rounds_completed: usize,
    pub message: String,
    /// Failure originated at the external service (retries exhausted),
    /// as opposed to a parse or precondition problem.
    pub external: bool,
}

pub struct ThemesRunOutcome {
    pub transcripts: Vec<RefinementTranscript>,
    pub failures: Vec<ClusterFailure>,
    /// Partial rounds for failed clusters, for debugging artifacts.
    pub partials: Vec<(usize, Vec<Round>)>,
}

/// Runs the refinement loop per cluster; one cluster's failure never stops
/// the others.
pub fn run_all_clusters(
    samples: &[ClusterSample],
    llm1: &ChatClientSpec,
    llm2: &ChatClientSpec,
    quality_threshold: f64,
    max_iterations: usize,
    templates: &PromptTemplates,
    score_extractor: Option<&ChatClientSpec>,
) -> Result<ThemesRunOutcome> {
    if samples.is_empty() {
        return Err(Error::Precondition("at least one cluster sample required".into()));
    }
    let mut outcome = ThemesRunOutcome {
        transcripts: Vec::new(),
        failures: Vec::new(),
        partials: Vec::new(),
    };
    for sample in samples {
        match refine_loop(
            sample,
            llm1,
            llm2,
            quality_threshold,
            max_iterations,
            templates,
            score_extractor,
        ) {
            Ok(t) => outcome.transcripts.push(t),
            Err(e) => {
                let external = matches!(
                    e.cause,
                    Error::ChatClient { .. } | Error::HttpStatus { .. } | Error::Provider { .. }
                );
                outcome.failures.push(ClusterFailure {
                    cluster_id: sample.cluster_id,
                    rounds_completed: e.partial.len(),
                    message: e.cause.to_string(),
                    external,
                });
                outcome.partials.push((sample.cluster_id, e.partial));
            }
        }
    }
    Ok(outcome)
}
