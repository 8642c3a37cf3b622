//! The acceptance suite: twelve oracle and property checks, each run at its
//! stated tolerance and reported as one PASS/FAIL line.

mod criteria;
pub mod instances;

use std::path::Path;
use std::time::Instant;

pub const ALL: [u8; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

/// Result of one criterion body.
pub(crate) struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

pub fn name(id: u8) -> &'static str {
    match id {
        1 => "subproblem oracle",
        2 => "root search",
        3 => "dca certificates",
        4 => "gap lower bound",
        5 => "policy vs brute force",
        6 => "conservative gradient",
        7 => "training progress",
        8 => "target radius",
        9 => "burg geometry",
        10 => "replay properties",
        11 => "wilcoxon",
        12 => "end-to-end determinism",
        _ => "unknown",
    }
}

/// Runs the selected criteria in order. `bin` is the `ideal` executable,
/// needed by the end-to-end check. `report` sees each outcome as it lands.
pub fn run(ids: &[u8], bin: Option<&Path>, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let start = Instant::now();
        let result = match id {
            1 => criteria::subproblem(),
            2 => criteria::root_search(),
            3 => criteria::dca_certificates(),
            4 => criteria::gap_lower_bound(),
            5 => criteria::policy_brute_force(),
            6 => criteria::conservative_gradient(),
            7 => criteria::training_progress(),
            8 => criteria::target_radius_check(),
            9 => criteria::burg_geometry(),
            10 => criteria::replay_properties(),
            11 => criteria::wilcoxon(),
            12 => match bin {
                Some(b) => criteria::determinism(b),
                None => Err(anyhow::anyhow!("no binary given for the end-to-end run")),
            },
            _ => Err(anyhow::anyhow!("no criterion {id}")),
        };
        let (passed, detail) = match result {
            Ok(c) => (c.passed, c.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let o = Outcome { id, name: name(id), passed, detail, seconds: start.elapsed().as_secs_f64() };
        report(&o);
        out.push(o);
    }
    out
}
