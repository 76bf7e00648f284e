//! Latency benchmark: runs a scenario over consecutive seeds and summarises
//! submit-to-commit and view latencies in virtual seconds.

use serde::Serialize;

use crate::exec::Exec;
use crate::sim::{latency_csv, Scenario, ScenarioReport, SimError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub runs: usize,
    pub submitted: usize,
    pub committed: usize,
    pub mean_submit_s: f64,
    pub max_submit_s: f64,
    pub mean_view_s: f64,
    pub max_view_s: f64,
    /// Mean submit latency over mean view latency.
    pub submit_view_ratio: f64,
}

impl BenchSummary {
    pub fn from_reports(reports: &[ScenarioReport]) -> Self {
        let submits: Vec<u64> = reports.iter().flat_map(|r| r.submit_latencies_ms()).collect();
        let views: Vec<u64> = reports.iter().flat_map(|r| r.view_latencies_ms.iter().copied()).collect();
        let mean = |v: &[u64]| if v.is_empty() { 0.0 } else { v.iter().sum::<u64>() as f64 / v.len() as f64 / 1000.0 };
        let max = |v: &[u64]| v.iter().max().map_or(0.0, |m| *m as f64 / 1000.0);
        let (ms, mv) = (mean(&submits), mean(&views));
        BenchSummary {
            runs: reports.len(),
            submitted: reports.iter().map(|r| r.receipts.len()).sum(),
            committed: submits.len(),
            mean_submit_s: ms,
            max_submit_s: max(&submits),
            mean_view_s: mv,
            max_view_s: max(&views),
            submit_view_ratio: if mv > 0.0 { ms / mv } else { f64::INFINITY },
        }
    }

    pub fn table(&self) -> String {
        format!(
            "runs               {}\n\
             submitted          {}\n\
             committed          {}\n\
             submit mean (s)    {:.3}\n\
             submit max (s)     {:.3}\n\
             view mean (s)      {:.3}\n\
             view max (s)       {:.3}\n\
             submit/view ratio  {:.1}\n",
            self.runs,
            self.submitted,
            self.committed,
            self.mean_submit_s,
            self.max_submit_s,
            self.mean_view_s,
            self.max_view_s,
            self.submit_view_ratio
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub reports: Vec<ScenarioReport>,
    pub summary: BenchSummary,
}

impl BenchReport {
    pub fn csv(&self) -> String {
        latency_csv(&self.reports)
    }
}

/// Runs `scenario` with seeds `seed, seed + 1, ...`, one run per seed, fanned out over `exec`.
pub fn run_bench(scenario: &Scenario, runs: usize, exec: Exec) -> Result<BenchReport, SimError> {
    if runs == 0 {
        return Err(SimError::Scenario("runs must be at least 1".into()));
    }
    scenario.validate()?;
    let results = exec.map_range(0..runs as u64, |i| {
        let mut s = scenario.clone();
        s.seed = scenario.seed.wrapping_add(i);
        s.run()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = BenchSummary::from_reports(&reports);
    Ok(BenchReport { reports, summary })
}
