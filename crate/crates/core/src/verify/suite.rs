use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    check_invariants, check_lemma_a_with, check_lemma_b_with, generate_preconditioned, CheckOptions, TrialKind,
    TrialReport, Verdict,
};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, Connectivity, Lattice};
use crate::lulu::{operator_library, OperatorExpr};

/// Suite configuration, read from a plain `key = value` file.
///
/// ```text
/// seed = 2024
/// trials = 40            # preconditioned fields per scale
/// shapes = 10, 3x4, 4x4
/// connectivity = facet, full
/// boundary = zero, domain
/// values = -4..4
/// scales = 1..3
/// operators = library:3:2   # or a list such as: id, U2, L2.U2, neg
/// invariants = true
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub trials: usize,
    pub shapes: Vec<Vec<usize>>,
    pub connectivity: Vec<Connectivity>,
    pub boundary: Vec<Boundary>,
    pub values: RangeInclusive<i64>,
    pub scales: RangeInclusive<usize>,
    pub operators: Vec<OperatorExpr>,
    /// Source text of the operator list, echoed in reports.
    pub operators_spec: String,
    pub invariants: bool,
    pub inject_fault: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            trials: 40,
            shapes: vec![vec![10], vec![3, 4], vec![4, 4]],
            connectivity: vec![Connectivity::Facet, Connectivity::Full],
            boundary: vec![Boundary::ZeroPadded, Boundary::DomainOnly],
            values: -4..=4,
            scales: 1..=3,
            operators: operator_library(3, 2),
            operators_spec: "library:3:2".into(),
            invariants: true,
            inject_fault: false,
        }
    }
}

fn parse_range<T: std::str::FromStr>(text: &str) -> Option<RangeInclusive<T>> {
    let (lo, hi) = text.split_once("..")?;
    Some(lo.trim().parse().ok()?..=hi.trim().parse().ok()?)
}

fn parse_operators(text: &str) -> std::result::Result<Vec<OperatorExpr>, String> {
    if let Some(rest) = text.strip_prefix("library") {
        let params: Vec<&str> = rest.split(':').skip(1).collect();
        let num = |i: usize, default: usize| -> std::result::Result<usize, String> {
            params.get(i).map_or(Ok(default), |p| p.trim().parse().map_err(|_| format!("bad library parameter {p:?}")))
        };
        return Ok(operator_library(num(0, 3)?, num(1, 3)?));
    }
    text.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect()
}

impl SuiteConfig {
    /// A configuration that schedules nothing.
    pub fn empty() -> Self {
        Self { trials: 0, shapes: Vec::new(), operators: Vec::new(), operators_spec: String::new(), ..Self::default() }
    }

    /// Parses a config file. Missing keys keep their defaults; `#` starts
    /// a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || err(format!("invalid value {value:?} for {key}"));
            let list = || value.split(',').map(str::trim).filter(|s| !s.is_empty());
            match key {
                "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                "trials" => cfg.trials = value.parse().map_err(|_| bad())?,
                "shapes" => {
                    cfg.shapes = list()
                        .map(|s| {
                            s.split('x').map(|e| e.trim().parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>()
                        })
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad())?
                }
                "connectivity" => {
                    cfg.connectivity = list()
                        .map(|s| match s {
                            "facet" | "4" => Ok(Connectivity::Facet),
                            "full" | "8" => Ok(Connectivity::Full),
                            _ => Err(bad()),
                        })
                        .collect::<Result<_>>()?
                }
                "boundary" => {
                    cfg.boundary = list()
                        .map(|s| match s {
                            "zero" | "zero_padded" => Ok(Boundary::ZeroPadded),
                            "domain" | "domain_only" => Ok(Boundary::DomainOnly),
                            _ => Err(bad()),
                        })
                        .collect::<Result<_>>()?
                }
                "values" => cfg.values = parse_range(value).filter(|r| !r.is_empty()).ok_or_else(bad)?,
                "scales" => {
                    cfg.scales = parse_range(value).filter(|r| *r.start() >= 1 && !r.is_empty()).ok_or_else(bad)?
                }
                "operators" => {
                    cfg.operators = parse_operators(value).map_err(err)?;
                    cfg.operators_spec = value.to_string();
                }
                "invariants" => cfg.invariants = value.parse().map_err(|_| bad())?,
                "inject_fault" => cfg.inject_fault = value.parse().map_err(|_| bad())?,
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        Ok(cfg)
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let shapes: Vec<String> =
            self.shapes.iter().map(|s| s.iter().map(ToString::to_string).collect::<Vec<_>>().join("x")).collect();
        let conn: Vec<String> = self.connectivity.iter().map(ToString::to_string).collect();
        let bound: Vec<String> = self.boundary.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "trials = {}", self.trials);
        let _ = writeln!(out, "shapes = {}", shapes.join(", "));
        let _ = writeln!(out, "connectivity = {}", conn.join(", "));
        let _ = writeln!(out, "boundary = {}", bound.join(", "));
        let _ = writeln!(out, "values = {}..{}", self.values.start(), self.values.end());
        let _ = writeln!(out, "scales = {}..{}", self.scales.start(), self.scales.end());
        let _ = writeln!(out, "operators = {}", self.operators_spec);
        let _ = writeln!(out, "invariants = {}", self.invariants);
        let _ = writeln!(out, "inject_fault = {}", self.inject_fault);
        out
    }

    /// Every lattice the trials cycle through.
    pub fn lattices(&self) -> Result<Vec<Lattice>> {
        let mut out = Vec::new();
        for shape in &self.shapes {
            for &conn in &self.connectivity {
                if conn == Connectivity::Full && shape.len() != 2 {
                    continue;
                }
                for &b in &self.boundary {
                    out.push(Lattice::new(shape, conn, b)?);
                }
            }
        }
        Ok(out)
    }
}

/// Per-trial seed; stable across platforms and releases.
pub fn trial_seed(master: u64, n: usize, index: usize) -> u64 {
    // splitmix64 finaliser over the packed coordinates
    let mut z = master ^ ((n as u64) << 48) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckTally {
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub config: String,
    pub trials: usize,
    pub assertions: usize,
    pub failures: usize,
    pub failed_trials: usize,
    pub inapplicable: usize,
    pub precondition_alarms: usize,
    pub passed: bool,
    pub checks: BTreeMap<String, CheckTally>,
    /// The first failing trials, replayable from their seed and input.
    pub failed_reports: Vec<TrialReport>,
}

/// Cap on stored failing trials.
pub const MAX_FAILED_REPORTS: usize = 20;

/// Tallies for one scheduled trial; only failing reports are kept.
#[derive(Default)]
struct TrialBatch {
    trials: usize,
    assertions: usize,
    failures: usize,
    failed_trials: usize,
    inapplicable: usize,
    alarms: usize,
    checks: BTreeMap<String, CheckTally>,
    failed_reports: Vec<TrialReport>,
}

impl TrialBatch {
    fn record(&mut self, r: TrialReport) {
        self.trials += 1;
        for c in &r.checks {
            self.assertions += 1;
            let tally = self.checks.entry(c.id.clone()).or_default();
            if c.passed {
                tally.passed += 1;
            } else {
                tally.failed += 1;
                self.failures += 1;
            }
        }
        match r.verdict {
            Verdict::Pass => {}
            Verdict::Inapplicable => self.inapplicable += 1,
            Verdict::Fail => {
                self.failed_trials += 1;
                if self.failed_reports.len() < MAX_FAILED_REPORTS {
                    self.failed_reports.push(r);
                }
            }
        }
    }
}

fn run_trial(cfg: &SuiteConfig, lat: &Lattice, n: usize, seed: u64) -> TrialBatch {
    let options = CheckOptions { inject_fault: cfg.inject_fault };
    let mut batch = TrialBatch::default();
    let mut emit = |mut r: TrialReport| {
        r.seed = Some(seed);
        batch.record(r);
    };
    let generated = match generate_preconditioned(lat, n, seed, cfg.values.clone()) {
        Ok(g) => g,
        Err(e) => {
            let f = crate::field::ScalarField::zeros(lat.clone());
            let mut r = TrialReport::new(TrialKind::LemmaA, &f, n);
            r.check("a.generator", Err(e.to_string()));
            emit(r);
            batch.alarms = super::GENERATOR_ATTEMPTS;
            return batch;
        }
    };
    emit(check_lemma_a_with(&generated.field, n, &options));
    for op in &cfg.operators {
        emit(check_lemma_b_with(&generated.field, n, op, &options));
    }
    if cfg.invariants {
        emit(check_invariants(&generated.raw, n));
    }
    batch.alarms = generated.alarms;
    batch
}

/// Runs every scheduled trial. Trials run in parallel; the report only
/// depends on the config.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let lattices = cfg.lattices()?;
    let mut plan = Vec::new();
    if !lattices.is_empty() {
        for n in cfg.scales.clone() {
            for t in 0..cfg.trials {
                plan.push((n, &lattices[t % lattices.len()], trial_seed(cfg.seed, n, t)));
            }
        }
    }
    let batches: Vec<TrialBatch> = plan.par_iter().map(|&(n, lat, seed)| run_trial(cfg, lat, n, seed)).collect();

    let mut report = SuiteReport {
        seed: cfg.seed,
        config: cfg.to_text(),
        trials: 0,
        assertions: 0,
        failures: 0,
        failed_trials: 0,
        inapplicable: 0,
        precondition_alarms: 0,
        passed: true,
        checks: BTreeMap::new(),
        failed_reports: Vec::new(),
    };
    for batch in batches {
        report.trials += batch.trials;
        report.assertions += batch.assertions;
        report.failures += batch.failures;
        report.failed_trials += batch.failed_trials;
        report.inapplicable += batch.inapplicable;
        report.precondition_alarms += batch.alarms;
        for (id, t) in batch.checks {
            let tally = report.checks.entry(id).or_default();
            tally.passed += t.passed;
            tally.failed += t.failed;
        }
        let room = MAX_FAILED_REPORTS - report.failed_reports.len();
        report.failed_reports.extend(batch.failed_reports.into_iter().take(room));
    }
    report.passed = report.failures == 0;
    Ok(report)
}
