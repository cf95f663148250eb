//! Report assembly: the data behind the paper-style visual artifacts.
//!
//! Emits keyword frequencies (word-cloud data), keyword→group→theme link
//! weights (Sankey data), the with/without-compression metric comparison
//! table, and the loss/variance/inertia curves as CSV. Rendering is left to
//! external tooling; every file is plain JSON or CSV.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agentic::{TerminalReason, ThemeSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KeywordCount {
    pub keyword: String,
    pub count: usize,
}

/// Case-insensitive whole-phrase occurrence counts across the sampled texts.
/// Keywords that never occur still get a floor count of 1 so LLM-paraphrased
/// phrases remain visible in the word cloud.
pub fn keyword_frequencies(themes: &ThemeSet, texts: &[String]) -> Vec<KeywordCount> {
    let haystacks: Vec<String> = texts.iter().map(|t| t.to_lowercase()).collect();
    themes
        .keywords
        .iter()
        .map(|kw| {
            let needle = kw.to_lowercase();
            let count: usize = haystacks
                .iter()
                .map(|h| h.matches(needle.as_str()).count())
                .sum();
            KeywordCount {
                keyword: kw.clone(),
                count: count.max(1),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SankeyLink {
    pub source: String,
    pub target: String,
    pub value: f64,
}

/// One keyword→group link per membership (weight = keyword frequency) and
/// one group→theme link per reference. A group referenced by several themes
/// splits its weight equally so flow is conserved at every group node.
pub fn sankey_links(themes: &ThemeSet, freqs: &[KeywordCount]) -> Vec<SankeyLink> {
    let freq_of = |kw: &str| -> f64 {
        freqs
            .iter()
            .find(|f| f.keyword == kw)
            .map(|f| f.count as f64)
            .unwrap_or(1.0)
    };
    let mut links = Vec::new();
    for group in &themes.groups {
        for member in &group.members {
            links.push(SankeyLink {
                source: member.clone(),
                target: group.name.clone(),
                value: freq_of(member),
            });
        }
    }
    for group in &themes.groups {
        let weight: f64 = group.members.iter().map(|m| freq_of(m)).sum();
        let referencing: Vec<&str> = themes
            .themes
            .iter()
            .filter(|t| t.groups.iter().any(|g| g == &group.name))
            .map(|t| t.title.as_str())
            .collect();
        if referencing.is_empty() {
            continue;
        }
        let share = weight / referencing.len() as f64;
        for title in referencing {
            links.push(SankeyLink {
                source: group.name.clone(),
                target: title.to_string(),
                value: share,
            });
        }
    }
    links
}

/// For every group node, inbound weight must equal outbound weight.
pub fn verify_flow_conservation(themes: &ThemeSet, links: &[SankeyLink]) -> Result<()> {
    for group in &themes.groups {
        let referenced = themes
            .themes
            .iter()
            .any(|t| t.groups.iter().any(|g| g == &group.name));
        if !referenced {
            continue;
        }
        let inbound: f64 = links
            .iter()
            .filter(|l| l.target == group.name)
            .map(|l| l.value)
            .sum();
        let outbound: f64 = links
            .iter()
            .filter(|l| l.source == group.name)
            .map(|l| l.value)
            .sum();
        if (inbound - outbound).abs() > 1e-9 * inbound.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "sankey flow not conserved at group {:?}: in {inbound}, out {outbound}",
                group.name
            )));
        }
    }
    Ok(())
}

/// One arm of the metric comparison.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MetricsSummary {
    pub ch_index: f64,
    pub db_index: f64,
    pub silhouette: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsTable {
    pub with_autoencoder: MetricsSummary,
    pub without_autoencoder: MetricsSummary,
}

fn fmt_ch(v: f64) -> String {
    if v.is_infinite() {
        "+inf".into()
    } else {
        format!("{v:.0}")
    }
}

fn fmt_frac(v: f64) -> String {
    if v.is_infinite() {
        "+inf".into()
    } else {
        format!("{v:.2}")
    }
}

impl MetricsTable {
    pub fn new(with_autoencoder: MetricsSummary, without_autoencoder: MetricsSummary) -> Self {
        MetricsTable {
            with_autoencoder,
            without_autoencoder,
        }
    }

    /// Aligned plain-text rendering of the two-arm comparison.
    pub fn render_text(&self) -> String {
        let rows = [
            ("CH Index", fmt_ch(self.with_autoencoder.ch_index), fmt_ch(self.without_autoencoder.ch_index)),
            ("DB Index", fmt_frac(self.with_autoencoder.db_index), fmt_frac(self.without_autoencoder.db_index)),
            ("Silhouette Score", fmt_frac(self.with_autoencoder.silhouette), fmt_frac(self.without_autoencoder.silhouette)),
        ];
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>26} {:>30}\n",
            "Metrics", "With Autoencoder Compression", "Without Autoencoder Compression"
        ));
        for (name, a, b) in rows {
            out.push_str(&format!("{name:<20} {a:>26} {b:>30}\n"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "with_autoencoder": self.with_autoencoder,
            "without_autoencoder": self.without_autoencoder,
            "text": self.render_text(),
        })
    }
}

/// Everything the report stage assembled for one cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReportInput {
    pub cluster_id: usize,
    pub final_themes: ThemeSet,
    pub rounds: usize,
    pub final_score: f64,
    pub terminal_reason: TerminalReason,
    pub sample_texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Curves {
    /// (ratio label, per-epoch (train, val)) for every trained ratio.
    pub autoencoder_loss: Vec<(String, Vec<(f64, f64)>)>,
    /// Cumulative explained-variance ratios over all components.
    pub explained_variance: Vec<f64>,
    /// (k, inertia) from the elbow sweep.
    pub elbow_inertia: Vec<(usize, f64)>,
}

pub struct ReportInputs {
    pub clusters: Vec<ClusterReportInput>,
    pub metrics: MetricsTable,
    pub curves: Curves,
}

#[derive(Serialize)]
struct ThemeRecord<'a> {
    cluster_id: usize,
    iteration: usize,
    keywords: &'a [String],
    groups: &'a [crate::agentic::KeywordGroup],
    themes: &'a [crate::agentic::Theme],
    rounds: usize,
    final_score: f64,
    terminal_reason: TerminalReason,
}

#[derive(Serialize)]
struct WordcloudRecord {
    cluster_id: usize,
    frequencies: Vec<KeywordCount>,
}

#[derive(Serialize)]
struct SankeyRecord {
    cluster_id: usize,
    links: Vec<SankeyLink>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes themes.json, wordcloud.json, sankey.json, metrics.json, and the
/// curves CSVs into `report_dir`. Deterministic given identical inputs.
pub fn write_report(report_dir: &Path, inputs: &ReportInputs) -> Result<()> {
    fs::create_dir_all(report_dir.join("curves")).map_err(|e| Error::io(report_dir, e))?;

    let mut theme_records = Vec::new();
    let mut wordcloud_records = Vec::new();
    let mut sankey_records = Vec::new();
    for c in &inputs.clusters {
        c.final_themes.validate()?;
        let freqs = keyword_frequencies(&c.final_themes, &c.sample_texts);
        let links = sankey_links(&c.final_themes, &freqs);
        verify_flow_conservation(&c.final_themes, &links)?;
        theme_records.push(ThemeRecord {
            cluster_id: c.cluster_id,
            iteration: c.final_themes.iteration,
            keywords: &c.final_themes.keywords,
            groups: &c.final_themes.groups,
            themes: &c.final_themes.themes,
            rounds: c.rounds,
            final_score: c.final_score,
            terminal_reason: c.terminal_reason,
        });
        wordcloud_records.push(WordcloudRecord {
            cluster_id: c.cluster_id,
            frequencies: freqs,
        });
        sankey_records.push(SankeyRecord {
            cluster_id: c.cluster_id,
            links,
        });
    }

    write_json(&report_dir.join("themes.json"), &theme_records)?;
    write_json(&report_dir.join("wordcloud.json"), &wordcloud_records)?;
    write_json(&report_dir.join("sankey.json"), &sankey_records)?;
    write_json(&report_dir.join("metrics.json"), &inputs.metrics.to_json())?;

    let mut loss_csv = String::from("ratio,epoch,train_loss,val_loss\n");
    for (ratio, rows) in &inputs.curves.autoencoder_loss {
        for (epoch, (train, val)) in rows.iter().enumerate() {
            loss_csv.push_str(&format!("{ratio},{epoch},{train},{val}\n"));
        }
    }
    let loss_path = report_dir.join("curves/autoencoder_loss.csv");
    fs::write(&loss_path, loss_csv).map_err(|e| Error::io(&loss_path, e))?;

    let mut var_csv = String::from("components,cumulative_ratio\n");
    for (i, r) in inputs.curves.explained_variance.iter().enumerate() {
        var_csv.push_str(&format!("{},{r}\n", i + 1));
    }
    let var_path = report_dir.join("curves/explained_variance.csv");
    fs::write(&var_path, var_csv).map_err(|e| Error::io(&var_path, e))?;

    let mut elbow_csv = String::from("k,inertia\n");
    for (k, inertia) in &inputs.curves.elbow_inertia {
        elbow_csv.push_str(&format!("{k},{inertia}\n"));
    }
    let elbow_path = report_dir.join("curves/elbow_inertia.csv");
    fs::write(&elbow_path, elbow_csv).map_err(|e| Error::io(&elbow_path, e))?;

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agentic::{KeywordGroup, Theme};

    fn theme_set() -> ThemeSet {
        ThemeSet {
            cluster_id: 0,
            keywords: vec!["burnout".into(), "masking".into()],
            groups: vec![KeywordGroup {
                name: "Strain".into(),
                members: vec!["burnout".into(), "masking".into()],
            }],
            themes: vec![Theme {
                title: "Daily strain".into(),
                description: "exhaustion talk".into(),
                groups: vec!["Strain".into()],
            }],
            iteration: 1,
        }
    }

    #[test]
    fn frequencies_count_case_insensitive() {
        let texts = vec![
            "Burnout again. burnout is heavy".to_string(),
            "the BURNOUT cycle, and masking".to_string(),
            "burnout".to_string(),
        ];
        let f = keyword_frequencies(&theme_set(), &texts);
        assert_eq!(f[0], KeywordCount { keyword: "burnout".into(), count: 4 });
        assert_eq!(f[1].count, 1);
    }

    #[test]
    fn absent_keyword_gets_floor_of_one() {
        let f = keyword_frequencies(&theme_set(), &["nothing relevant".to_string()]);
        assert!(f.iter().all(|kc| kc.count == 1));
    }

    #[test]
    fn sankey_single_chain() {
        let mut set = theme_set();
        set.keywords = vec!["burnout".into()];
        set.groups[0].members = vec!["burnout".into()];
        let freqs = vec![KeywordCount { keyword: "burnout".into(), count: 3 }];
        let links = sankey_links(&set, &freqs);
        assert_eq!(links.len(), 2);
        assert_eq!(links[0], SankeyLink { source: "burnout".into(), target: "Strain".into(), value: 3.0 });
        assert_eq!(links[1], SankeyLink { source: "Strain".into(), target: "Daily strain".into(), value: 3.0 });
        verify_flow_conservation(&set, &links).unwrap();
    }

    #[test]
    fn sankey_group_weight_is_member_sum() {
        let set = theme_set();
        let freqs = vec![
            KeywordCount { keyword: "burnout".into(), count: 2 },
            KeywordCount { keyword: "masking".into(), count: 5 },
        ];
        let links = sankey_links(&set, &freqs);
        let group_out: Vec<&SankeyLink> = links.iter().filter(|l| l.source == "Strain").collect();
        assert_eq!(group_out.len(), 1);
        assert_eq!(group_out[0].value, 7.0);
        verify_flow_conservation(&set, &links).unwrap();
    }

    #[test]
    fn sankey_theme_with_two_groups() {
        let mut set = theme_set();
        set.keywords.push("stimming".into());
        set.groups.push(KeywordGroup {
            name: "Regulation".into(),
            members: vec!["stimming".into()],
        });
        set.themes[0].groups.push("Regulation".into());
        let freqs = keyword_frequencies(&set, &[]);
        let links = sankey_links(&set, &freqs);
        let inbound: Vec<&SankeyLink> =
            links.iter().filter(|l| l.target == "Daily strain").collect();
        assert_eq!(inbound.len(), 2);
        verify_flow_conservation(&set, &links).unwrap();
    }

    #[test]
    fn sankey_shared_group_conserves_flow() {
        let mut set = theme_set();
        set.themes.push(Theme {
            title: "Second theme".into(),
            description: "also strained".into(),
            groups: vec!["Strain".into()],
        });
        let freqs = vec![
            KeywordCount { keyword: "burnout".into(), count: 2 },
            KeywordCount { keyword: "masking".into(), count: 4 },
        ];
        let links = sankey_links(&set, &freqs);
        verify_flow_conservation(&set, &links).unwrap();
        let shares: Vec<f64> = links
            .iter()
            .filter(|l| l.source == "Strain")
            .map(|l| l.value)
            .collect();
        assert_eq!(shares, vec![3.0, 3.0]);
    }

    #[test]
    fn metrics_table_reproduces_published_layout() {
        let table = MetricsTable::new(
            MetricsSummary { ch_index: 366243.0, db_index: 0.62, silhouette: 0.48 },
            MetricsSummary { ch_index: 6235.0, db_index: 5.22, silhouette: 0.04 },
        );
        let text = table.render_text();
        assert!(text.contains("CH Index"));
        assert!(text.contains("DB Index"));
        assert!(text.contains("Silhouette Score"));
        assert!(text.contains("366243"));
        assert!(text.contains("6235"));
        assert!(text.contains("0.62"));
        assert!(text.contains("5.22"));
        assert!(text.contains("0.48"));
        assert!(text.contains("0.04"));
        assert!(text.contains("With Autoencoder Compression"));
        assert!(text.contains("Without Autoencoder Compression"));
    }

    #[test]
    fn metrics_table_identical_arms_and_roundtrip() {
        let arm = MetricsSummary { ch_index: 12.0, db_index: 1.5, silhouette: 0.3 };
        let table = MetricsTable::new(arm, arm);
        assert_eq!(table.with_autoencoder, table.without_autoencoder);
        let json = serde_json::to_string(&table).unwrap();
        let back: MetricsTable = serde_json::from_str(&json).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn write_report_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = ReportInputs {
            clusters: vec![ClusterReportInput {
                cluster_id: 0,
                final_themes: theme_set(),
                rounds: 2,
                final_score: 0.9,
                terminal_reason: TerminalReason::ThresholdMet,
                sample_texts: vec!["burnout burnout".into()],
            }],
            metrics: MetricsTable::new(
                MetricsSummary { ch_index: 10.0, db_index: 1.0, silhouette: 0.5 },
                MetricsSummary { ch_index: 8.0, db_index: 2.0, silhouette: 0.2 },
            ),
            curves: Curves {
                autoencoder_loss: vec![("1/2".into(), vec![(0.5, 0.6), (0.4, 0.5)])],
                explained_variance: vec![0.7, 1.0],
                elbow_inertia: vec![(1, 10.0), (2, 4.0), (3, 1.0)],
            },
        };
        let a_dir = dir.path().join("a");
        let b_dir = dir.path().join("b");
        write_report(&a_dir, &inputs).unwrap();
        write_report(&b_dir, &inputs).unwrap();
        for name in [
            "themes.json",
            "wordcloud.json",
            "sankey.json",
            "metrics.json",
            "curves/autoencoder_loss.csv",
            "curves/explained_variance.csv",
            "curves/elbow_inertia.csv",
        ] {
            let a = fs::read(a_dir.join(name)).unwrap();
            let b = fs::read(b_dir.join(name)).unwrap();
            assert!(!a.is_empty());
            assert_eq!(a, b, "mismatch in {name}");
            if name.ends_with(".json") {
                serde_json::from_slice::<serde_json::Value>(&a).unwrap();
            }
        }
    }
}
