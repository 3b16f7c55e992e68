use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, EpisodeMetrics, Planner, SimConfig};
use crate::error::{Error, Result};
use crate::scenario::{Scenario, ScenarioCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub id: String,
    pub category: ScenarioCategory,
    pub pass: bool,
    pub collisions: usize,
    pub rear_end: usize,
    pub offroad_frames: usize,
    pub stuck: bool,
    pub route_deviation: bool,
    pub progress: f64,
}

impl From<&EpisodeMetrics> for ReportRow {
    fn from(m: &EpisodeMetrics) -> Self {
        ReportRow {
            id: m.scenario.clone(),
            category: m.category,
            pass: m.pass,
            collisions: m.collisions.len(),
            rear_end: m.rear_end(),
            offroad_frames: m.offroad_frames,
            stuck: m.stuck,
            route_deviation: m.route_deviation,
            progress: m.progress,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: ScenarioCategory,
    pub total: usize,
    pub passed: usize,
    pub collisions: usize,
    pub rear_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub planner: String,
    pub rows: Vec<ReportRow>,
    pub categories: Vec<CategorySummary>,
    pub total: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub collisions: usize,
    pub rear_end: usize,
}

impl Report {
    pub fn from_rows(planner: &str, rows: Vec<ReportRow>) -> Self {
        let categories = ScenarioCategory::ALL
            .iter()
            .filter_map(|c| {
                let rs: Vec<&ReportRow> = rows.iter().filter(|r| r.category == *c).collect();
                (!rs.is_empty()).then(|| CategorySummary {
                    category: *c,
                    total: rs.len(),
                    passed: rs.iter().filter(|r| r.pass).count(),
                    collisions: rs.iter().map(|r| r.collisions).sum(),
                    rear_end: rs.iter().map(|r| r.rear_end).sum(),
                })
            })
            .collect();
        let total = rows.len();
        let passed = rows.iter().filter(|r| r.pass).count();
        Report {
            planner: planner.to_string(),
            categories,
            total,
            passed,
            pass_rate: if total == 0 { 0.0 } else { passed as f64 / total as f64 },
            collisions: rows.iter().map(|r| r.collisions).sum(),
            rear_end: rows.iter().map(|r| r.rear_end).sum(),
            rows,
        }
    }

    pub fn category(&self, c: ScenarioCategory) -> Option<&CategorySummary> {
        self.categories.iter().find(|s| s.category == c)
    }

    /// Pass counts per category, one line each, plus totals.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>6} {:>10} {:>8}",
            "category", "pass", "total", "collisions", "rear-end"
        );
        for c in &self.categories {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>6} {:>10} {:>8}",
                c.category.name(),
                c.passed,
                c.total,
                c.collisions,
                c.rear_end
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>6} {:>10} {:>8}",
            "all", self.passed, self.total, self.collisions, self.rear_end
        );
        let _ = write!(out, "pass rate {:.1}% ({})", 100.0 * self.pass_rate, self.planner);
        out
    }
}

/// Runs every scenario in parallel; rows keep the input order.
pub fn evaluate_suite(scenarios: &[Scenario], planner: &dyn Planner, cfg: &SimConfig) -> Result<Report> {
    if scenarios.is_empty() {
        return Err(Error::Config("evaluation suite is empty".into()));
    }
    let metrics: Vec<EpisodeMetrics> = scenarios
        .par_iter()
        .map(|s| run_episode(s, planner, cfg))
        .collect::<Result<_>>()?;
    let rows = metrics.iter().map(ReportRow::from).collect();
    Ok(Report::from_rows(planner.name(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, GeneratorConfig};
    use crate::sim::ExpertReplay;

    #[test]
    fn expert_suite_passes_and_sums() {
        let g = GeneratorConfig::default();
        let suite: Vec<Scenario> = ScenarioCategory::ALL
            .iter()
            .flat_map(|c| (0..2).map(|s| generate_scenario(*c, 100 + s, &g).unwrap()))
            .collect();
        let r = evaluate_suite(&suite, &ExpertReplay, &SimConfig::default()).unwrap();
        assert_eq!(r.pass_rate, 1.0);
        assert_eq!(r.categories.len(), 4);
        assert_eq!(r.categories.iter().map(|c| c.total).sum::<usize>(), suite.len());
        assert_eq!(r.rows.len(), suite.len());
        assert!(r.summary_table().contains("LaneFollowing"));
        let text = serde_json::to_string(&r).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_suite_is_an_error() {
        assert!(evaluate_suite(&[], &ExpertReplay, &SimConfig::default()).is_err());
    }
}
