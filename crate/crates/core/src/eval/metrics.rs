//! Rank metrics with trec_eval conventions: means over the run's queries,
//! unjudged documents count as non-relevant, NDCG gain equals the grade.

use std::collections::BTreeMap;

use super::trec::{Qrels, RankedDoc, RunFile};
use crate::error::{HceError, Result};

fn per_query<F>(qrels: &Qrels, run: &RunFile, mut f: F) -> Result<f64>
where
    F: FnMut(&BTreeMap<String, u32>, &[RankedDoc]) -> f64,
{
    if run.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (q, ranking) in run.iter() {
        let rel = qrels
            .relevant(q)
            .ok_or_else(|| HceError::MissingJudgments(q.to_string()))?;
        total += f(rel, ranking);
    }
    Ok(total / run.len() as f64)
}

fn hits_in_top(rel: &BTreeMap<String, u32>, ranking: &[RankedDoc], k: usize) -> usize {
    ranking
        .iter()
        .take(k)
        .filter(|d| rel.contains_key(&d.doc_id))
        .count()
}

pub fn recall_at_k(qrels: &Qrels, run: &RunFile, k: usize) -> Result<f64> {
    per_query(qrels, run, |rel, ranking| {
        hits_in_top(rel, ranking, k) as f64 / rel.len() as f64
    })
}

pub fn hit_at_k(qrels: &Qrels, run: &RunFile, k: usize) -> Result<f64> {
    per_query(qrels, run, |rel, ranking| {
        if hits_in_top(rel, ranking, k) > 0 {
            1.0
        } else {
            0.0
        }
    })
}

pub fn mrr(qrels: &Qrels, run: &RunFile) -> Result<f64> {
    per_query(qrels, run, |rel, ranking| {
        ranking
            .iter()
            .position(|d| rel.contains_key(&d.doc_id))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64)
    })
}

pub fn ndcg_at_k(qrels: &Qrels, run: &RunFile, k: usize) -> Result<f64> {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    per_query(qrels, run, |rel, ranking| {
        let dcg: f64 = ranking
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, d)| rel.get(&d.doc_id).copied().unwrap_or(0) as f64 * discount(i))
            .sum();
        let mut ideal: Vec<u32> = rel.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| g as f64 * discount(i))
            .sum();
        if idcg > 0.0 {
            dcg / idcg
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Recall(usize),
    Hit(usize),
    Mrr,
    Ndcg(usize),
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::Recall(k) => format!("recall@{k}"),
            Metric::Hit(k) => format!("hit@{k}"),
            Metric::Mrr => "mrr".into(),
            Metric::Ndcg(k) => format!("ndcg@{k}"),
        }
    }

    /// Parses `recall@10`, `hit@5`, `mrr`, `ndcg@10`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || HceError::Config(format!("unknown metric {s:?}"));
        if s == "mrr" {
            return Ok(Metric::Mrr);
        }
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if k == 0 {
            return Err(bad());
        }
        match name {
            "recall" => Ok(Metric::Recall(k)),
            "hit" => Ok(Metric::Hit(k)),
            "ndcg" => Ok(Metric::Ndcg(k)),
            _ => Err(bad()),
        }
    }

    pub fn evaluate(&self, qrels: &Qrels, run: &RunFile) -> Result<f64> {
        match *self {
            Metric::Recall(k) => recall_at_k(qrels, run, k),
            Metric::Hit(k) => hit_at_k(qrels, run, k),
            Metric::Mrr => mrr(qrels, run),
            Metric::Ndcg(k) => ndcg_at_k(qrels, run, k),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_of(rankings: &[(&str, &[&str])]) -> RunFile {
        let mut run = RunFile::new();
        for (q, docs) in rankings {
            let n = docs.len();
            run.insert(
                q,
                docs.iter()
                    .enumerate()
                    .map(|(i, d)| RankedDoc {
                        doc_id: d.to_string(),
                        score: (n - i) as f64,
                    })
                    .collect(),
            );
        }
        run
    }

    fn qrels_of(entries: &[(&str, &str, u32)]) -> Qrels {
        let mut q = Qrels::new();
        for (qid, d, g) in entries {
            q.insert(qid, d, *g);
        }
        q
    }

    #[test]
    fn recall_and_hit_cases() {
        let q = qrels_of(&[("a", "d1", 1)]);
        assert_eq!(recall_at_k(&q, &run_of(&[("a", &["d1", "x"])]), 10).unwrap(), 1.0);
        let q2 = qrels_of(&[("a", "d1", 1), ("a", "d2", 1)]);
        let run = run_of(&[("a", &["x", "d2", "y", "z", "w", "d1"])]);
        assert_eq!(recall_at_k(&q2, &run, 5).unwrap(), 0.5);
        assert_eq!(hit_at_k(&q2, &run, 5).unwrap(), 1.0);
        assert_eq!(hit_at_k(&q2, &run, 2).unwrap(), 1.0);
        assert_eq!(hit_at_k(&q2, &run, 1).unwrap(), 0.0);
        assert_eq!(hit_at_k(&q, &run_of(&[("a", &["x", "y"])]), 10).unwrap(), 0.0);
        assert!(matches!(
            recall_at_k(&q, &run_of(&[("zzz", &["d1"])]), 1),
            Err(HceError::MissingJudgments(_))
        ));
    }

    #[test]
    fn mrr_cases() {
        let q = qrels_of(&[("a", "d", 1), ("b", "e", 1)]);
        assert!((mrr(&q, &run_of(&[("a", &["x", "y", "d"])])).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(mrr(&q, &run_of(&[("a", &["d"]), ("b", &["e"])])).unwrap(), 1.0);
        let two = run_of(&[("a", &["d"]), ("b", &["x", "y", "z", "e"])]);
        assert!((mrr(&q, &two).unwrap() - 0.625).abs() < 1e-12);
    }

    /// DCG written out term by term, independent of the implementation above.
    fn reference_ndcg(grades_in_rank_order: &[u32], all_grades: &[u32], k: usize) -> f64 {
        let mut dcg = 0.0;
        for (r, &g) in grades_in_rank_order.iter().enumerate().take(k) {
            dcg += g as f64 / (r as f64 + 2.0).ln() * std::f64::consts::LN_2;
        }
        let mut ideal = all_grades.to_vec();
        ideal.sort();
        ideal.reverse();
        let mut idcg = 0.0;
        for (r, &g) in ideal.iter().enumerate().take(k) {
            idcg += g as f64 / (r as f64 + 2.0).ln() * std::f64::consts::LN_2;
        }
        dcg / idcg
    }

    #[test]
    fn ndcg_cases() {
        let q = qrels_of(&[("a", "d", 1)]);
        assert_eq!(ndcg_at_k(&q, &run_of(&[("a", &["d"])]), 10).unwrap(), 1.0);
        let v = ndcg_at_k(&q, &run_of(&[("a", &["x", "d"])]), 10).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.63093).abs() < 1e-5);

        let graded = qrels_of(&[("a", "p", 2), ("a", "r", 1)]);
        let v = ndcg_at_k(&graded, &run_of(&[("a", &["r", "p", "x"])]), 10).unwrap();
        assert!((v - reference_ndcg(&[1, 2, 0], &[2, 1], 10)).abs() < 1e-12);
        let ideal = ndcg_at_k(&graded, &run_of(&[("a", &["p", "r"])]), usize::MAX).unwrap();
        assert!((ideal - 1.0).abs() < 1e-15);
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::Recall(10), Metric::Hit(1), Metric::Mrr, Metric::Ndcg(10)] {
            assert_eq!(Metric::parse(&m.name()).unwrap(), m);
        }
        assert!(Metric::parse("recall@0").is_err());
        assert!(Metric::parse("map").is_err());
    }

    proptest! {
        #[test]
        fn recall_equals_hit_with_one_relevant(
            targets in prop::collection::vec(0usize..30, 1..20),
            perms in prop::collection::vec(prop::collection::vec(0usize..30, 0..30), 20),
            k in 1usize..40,
        ) {
            let mut qrels = Qrels::new();
            let mut run = RunFile::new();
            for (i, &t) in targets.iter().enumerate() {
                let q = format!("q{i}");
                qrels.insert(&q, &format!("d{t}"), 1);
                let mut seen = std::collections::HashSet::new();
                let ranking = perms[i]
                    .iter()
                    .filter(|d| seen.insert(**d))
                    .enumerate()
                    .map(|(r, d)| RankedDoc { doc_id: format!("d{d}"), score: -(r as f64) })
                    .collect();
                run.insert(&q, ranking);
            }
            let r = recall_at_k(&qrels, &run, k).unwrap();
            let h = hit_at_k(&qrels, &run, k).unwrap();
            prop_assert_eq!(r, h);
            prop_assert!((0.0..=1.0).contains(&r));
            let n = ndcg_at_k(&qrels, &run, k).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
        }
    }
}
