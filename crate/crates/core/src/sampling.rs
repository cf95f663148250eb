//! Per-cluster representative sampling: Cochran sample size, then the
//! highest-silhouette members of each cluster.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::quality::silhouette;
use crate::scalar::Scalar;

/// Cochran plan. Default matches a 90% confidence level: z = 1.64, p = 0.5,
/// e = 0.1, giving n_target = 68.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SamplePlan {
    pub z: f64,
    pub p: f64,
    pub e: f64,
    pub n_target: usize,
}

impl SamplePlan {
    pub fn new(z: f64, p: f64, e: f64) -> Result<Self> {
        Ok(SamplePlan {
            z,
            p,
            e,
            n_target: cochran_n(z, p, e)?,
        })
    }
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan::new(1.64, 0.5, 0.1).expect("default plan is valid")
    }
}

/// Cochran sample size ⌈z²·p·(1−p)/e²⌉.
pub fn cochran_n(z: f64, p: f64, e: f64) -> Result<usize> {
    if z <= 0.0 {
        return Err(Error::Precondition(format!("z must be > 0, got {z}")));
    }
    if !(0.0 < p && p < 1.0) {
        return Err(Error::Precondition(format!("p must lie in (0,1), got {p}")));
    }
    if !(0.0 < e && e < 1.0) {
        return Err(Error::Precondition(format!("e must lie in (0,1), got {e}")));
    }
    let raw = z * z * p * (1.0 - p) / (e * e);
    // guard against values that are an integer up to floating noise
    Ok((raw * (1.0 - 1e-12)).ceil() as usize)
}

/// The cluster's top-silhouette members, sorted by descending score with
/// post-id tie-break, truncated to the plan's target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepresentativeSample {
    pub cluster_id: usize,
    /// (post_id, silhouette), non-increasing by silhouette.
    pub members: Vec<(String, f64)>,
}

pub fn select_representatives<T: Scalar>(
    cluster_id: usize,
    assignments: &[usize],
    x: &Array2<T>,
    post_ids: &[String],
    plan: &SamplePlan,
) -> Result<RepresentativeSample> {
    if x.nrows() != assignments.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} aligned rows", x.nrows()),
            got: format!("{} assignments", assignments.len()),
        });
    }
    let scores = silhouette(x, assignments)?;
    select_representatives_with_scores(cluster_id, assignments, &scores.per_point, post_ids, plan)
}

/// Variant for callers that already ran the shared silhouette pass.
pub fn select_representatives_with_scores<T: Scalar>(
    cluster_id: usize,
    assignments: &[usize],
    per_point_silhouette: &[T],
    post_ids: &[String],
    plan: &SamplePlan,
) -> Result<RepresentativeSample> {
    if post_ids.len() != assignments.len() || per_point_silhouette.len() != assignments.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} aligned ids/scores/assignments", assignments.len()),
            got: format!(
                "{} ids, {} scores",
                post_ids.len(),
                per_point_silhouette.len()
            ),
        });
    }
    if !assignments.contains(&cluster_id) {
        return Err(Error::Precondition(format!(
            "cluster {cluster_id} is empty"
        )));
    }
    let mut members: Vec<(String, f64)> = assignments
        .iter()
        .enumerate()
        .filter(|(_, &a)| a == cluster_id)
        .map(|(i, _)| (post_ids[i].clone(), per_point_silhouette[i].as_f64()))
        .collect();
    members.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    members.truncate(plan.n_target);
    Ok(RepresentativeSample {
        cluster_id,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cochran_paper_value() {
        assert_eq!(cochran_n(1.64, 0.5, 0.1).unwrap(), 68);
    }

    #[test]
    fn cochran_95_percent_value() {
        assert_eq!(cochran_n(1.96, 0.5, 0.05).unwrap(), 385);
    }

    #[test]
    fn cochran_maximized_at_half() {
        let base = cochran_n(1.64, 0.5, 0.1).unwrap();
        for p in [0.1, 0.25, 0.4, 0.6, 0.75, 0.9] {
            assert!(cochran_n(1.64, p, 0.1).unwrap() <= base);
        }
    }

    #[test]
    fn cochran_monotonicity() {
        let n1 = cochran_n(1.0, 0.5, 0.1).unwrap();
        let n2 = cochran_n(2.0, 0.5, 0.1).unwrap();
        assert!(n2 > n1);
        let e1 = cochran_n(1.64, 0.5, 0.05).unwrap();
        let e2 = cochran_n(1.64, 0.5, 0.2).unwrap();
        assert!(e1 > e2);
    }

    #[test]
    fn cochran_exact_for_rational_inputs() {
        // 2² · 0.25 / 0.01 = 100 exactly
        assert_eq!(cochran_n(2.0, 0.5, 0.1).unwrap(), 100);
    }

    #[test]
    fn cochran_rejects_out_of_range() {
        assert!(cochran_n(0.0, 0.5, 0.1).is_err());
        assert!(cochran_n(1.64, 0.0, 0.1).is_err());
        assert!(cochran_n(1.64, 1.0, 0.1).is_err());
        assert!(cochran_n(1.64, 0.5, 0.0).is_err());
        assert!(cochran_n(1.64, 0.5, 1.0).is_err());
    }

    #[test]
    fn small_cluster_returns_all_members_sorted() {
        let x = array![[0.0], [0.3], [0.1], [10.0], [10.5]];
        let ids: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let asg = vec![0, 0, 0, 1, 1];
        let plan = SamplePlan::default(); // n_target 68
        let s = select_representatives(0, &asg, &x, &ids, &plan).unwrap();
        assert_eq!(s.members.len(), 3);
        for w in s.members.windows(2) {
            assert!(w[0].1 >= w[1].1);
        }
    }

    #[test]
    fn equal_scores_tie_break_by_post_id() {
        // coincident pairs give both cluster-0 points the same silhouette
        let x = array![[0.0], [0.0], [10.0], [10.0]];
        let ids: Vec<String> = ["zz", "aa", "m1", "m2"].iter().map(|s| s.to_string()).collect();
        let asg = vec![0, 0, 1, 1];
        let plan = SamplePlan::default();
        let s = select_representatives(0, &asg, &x, &ids, &plan).unwrap();
        assert_eq!(s.members.len(), 2);
        assert!((s.members[0].1 - s.members[1].1).abs() < 1e-12);
        assert_eq!(s.members[0].0, "aa");
        assert_eq!(s.members[1].0, "zz");
    }

    #[test]
    fn truncation_selects_top_scores() {
        let plan = SamplePlan {
            z: 1.64,
            p: 0.5,
            e: 0.1,
            n_target: 2,
        };
        let x = array![[0.0], [0.05], [0.9], [10.0], [10.1]];
        let ids: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
        let asg = vec![0, 0, 0, 1, 1];
        let s = select_representatives(0, &asg, &x, &ids, &plan).unwrap();
        assert_eq!(s.members.len(), 2);
        // the straggler at 0.9 scores lowest in its cluster
        assert!(!s.members.iter().any(|(id, _)| id == "p2"));
    }

    #[test]
    fn empty_cluster_errors() {
        let x = array![[0.0], [1.0]];
        let ids = vec!["a".to_string(), "b".to_string()];
        let asg = vec![0, 1];
        assert!(select_representatives(2, &asg, &x, &ids, &SamplePlan::default()).is_err());
    }
}
