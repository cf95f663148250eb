//! Bundled synthetic-corpus generator: posts drawn from per-topic word pools
//! with planted topic labels in the id (`t<topic>_p<index>`), so the planted
//! embedding provider can reconstruct the geometry without a network. Raw
//! texts carry the community hashtag plus occasional URL/mention noise to
//! give the cleaning stage real work.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Post;
use crate::error::{Error, Result};

const TOPIC_POOLS: &[&[&str]] = &[
    &[
        "excellent", "content", "highly", "recommended", "promising", "article", "great",
        "thread", "resource", "quality", "insightful", "worth", "reading", "share",
    ],
    &[
        "advocacy", "rights", "acceptance", "neurodiversity", "identity", "community",
        "representation", "voices", "empowerment", "inclusion", "respect", "dignity",
    ],
    &[
        "burnout", "coping", "wellbeing", "exhaustion", "overload", "recovery", "rest",
        "support", "therapy", "stress", "balance", "routine", "energy",
    ],
    &[
        "sensory", "environment", "noise", "texture", "light", "space", "comfort",
        "stimming", "regulation", "calm", "quiet", "headphones",
    ],
    &[
        "work", "employment", "accommodations", "office", "meetings", "deadlines",
        "colleagues", "remote", "schedule", "interview", "disclosure",
    ],
];

/// Deterministically generates `posts` records over `topics` planted topics.
pub fn generate_posts(posts: usize, topics: usize, seed: u64) -> Result<Vec<Post>> {
    if topics == 0 || topics > TOPIC_POOLS.len() {
        return Err(Error::Precondition(format!(
            "topics must lie in 1..={}, got {topics}",
            TOPIC_POOLS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(posts);
    for idx in 0..posts {
        let topic = idx % topics;
        let pool = TOPIC_POOLS[topic];
        let n_words = rng.random_range(6..=12);
        let mut words = Vec::with_capacity(n_words);
        for _ in 0..n_words {
            words.push(pool[rng.random_range(0..pool.len())]);
        }
        let mut text = words.join(" ");
        // sprinkle noise the cleaning pass must strip
        if idx % 7 == 3 {
            text.push_str(" https://t.co/link");
        }
        if idx % 11 == 5 {
            text = format!("@friend {text}");
        }
        text.push_str(" #actuallyautistic");
        out.push(Post {
            id: format!("t{topic}_p{idx:05}"),
            raw_text: text,
            clean_text: String::new(),
            created_at: Some(format!("2021-{:02}-{:02}T12:00:00Z", 1 + idx % 12, 1 + idx % 28)),
            lang: Some("en".into()),
        });
    }
    Ok(out)
}

/// Writes the generated posts as JSONL records matching the ingest schema.
pub fn write_jsonl(path: &Path, posts: &[Post]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut out = String::new();
    for p in posts {
        let record = serde_json::json!({
            "id": p.id,
            "text": p.raw_text,
            "created_at": p.created_at,
            "lang": p.lang,
        });
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
