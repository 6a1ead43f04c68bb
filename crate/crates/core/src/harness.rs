//! Size and power experiments over grids of `(delta, c, alternative, tau)`
//! with Monte Carlo standard errors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dgp::{population_quantile_slope, simulate_with_rng, DgpSpec, Innovation};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fmtest::{decide, Ingredients, SwitchingOptions};
use crate::rng::{stream, StreamKind};
use crate::stats::normal_quantile;
use crate::tables::{fmt_sig6, TableSet};

/// Share of failed replications above which a cell is flagged invalid.
pub const MAX_FAILURE_SHARE: f64 = 0.01;
/// Desk-scale replication count.
pub const DESK_REPS: usize = 2000;
/// Replication count of the published experiments.
pub const PAPER_REPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// Quantile t with the i.i.d. score variance.
    StandardT,
    /// Quantile t with the HAC score variance.
    StandardTHac,
    SwitchingFm,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::StandardT => "standard_t",
            TestKind::StandardTHac => "standard_t_hac",
            TestKind::SwitchingFm => "switching_fm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard_t" => Ok(Self::StandardT),
            "standard_t_hac" => Ok(Self::StandardTHac),
            "switching_fm" => Ok(Self::SwitchingFm),
            other => Err(Error::Config(format!("unknown test kind '{other}'"))),
        }
    }
}

/// The axis along which the alternative is varied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alternative {
    Null,
    /// Linear slope `gamma1`.
    Linear { gammas: Vec<f64> },
    /// Tail alternative with scaled loadings `T^{kappa-1} zeta1` and fixed
    /// `T^{kappa-1} zeta2`.
    Tail { a1: Vec<f64>, a2: f64, kappa: f64 },
}

impl Alternative {
    fn values(&self) -> Vec<f64> {
        match self {
            Alternative::Null => vec![0.0],
            Alternative::Linear { gammas } => gammas.clone(),
            Alternative::Tail { a1, .. } => a1.clone(),
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Alternative::Null => "none",
            Alternative::Linear { .. } => "gamma1",
            Alternative::Tail { .. } => "scaled_zeta1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub label: String,
    pub taus: Vec<f64>,
    pub c_values: Vec<f64>,
    pub delta_values: Vec<f64>,
    pub alternative: Alternative,
    pub t: usize,
    pub replications: usize,
    pub test_kinds: Vec<TestKind>,
    pub innovation: Innovation,
    pub seed: u64,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 100 {
            return Err(Error::Config(format!("replications = {} is below 100", self.replications)));
        }
        if self.taus.is_empty() || self.taus.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::Config("quantile levels must lie in (0, 1)".into()));
        }
        if self.c_values.is_empty() || self.delta_values.is_empty() || self.test_kinds.is_empty() {
            return Err(Error::Config("empty experiment axis".into()));
        }
        for spec in self.specs() {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn needs_tables(&self) -> bool {
        self.test_kinds.contains(&TestKind::SwitchingFm)
    }

    fn spec(&self, delta: f64, c: f64, alt: f64) -> DgpSpec {
        let mut s = DgpSpec::null(self.t, c, delta);
        s.innovation = self.innovation;
        match &self.alternative {
            Alternative::Null => {}
            Alternative::Linear { .. } => s.gamma1 = alt,
            Alternative::Tail { a2, kappa, .. } => {
                s.kappa = *kappa;
                s = s.with_scaled_loadings(alt, *a2);
            }
        }
        s
    }

    fn specs(&self) -> Vec<DgpSpec> {
        let mut out = Vec::new();
        for &d in &self.delta_values {
            for &c in &self.c_values {
                for a in self.alternative.values() {
                    out.push(self.spec(d, c, a));
                }
            }
        }
        out
    }
}

/// Rejection count for one `(test, delta, c, alternative, tau)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub test_kind: TestKind,
    pub delta: f64,
    pub c: f64,
    pub alternative: f64,
    pub tau: f64,
    pub rejections: usize,
    /// Replications that produced a decision.
    pub valid: usize,
    pub failures: usize,
    pub population_slope: f64,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        if self.valid == 0 {
            f64::NAN
        } else {
            self.rejections as f64 / self.valid as f64
        }
    }

    pub fn se(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.valid as f64).sqrt()
    }

    pub fn is_null(&self) -> bool {
        self.population_slope == 0.0
    }

    pub fn is_invalid(&self) -> bool {
        let total = self.valid + self.failures;
        total == 0 || self.failures as f64 > MAX_FAILURE_SHARE * total as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectionReport {
    pub grid: ExperimentGrid,
    pub cells: Vec<CellResult>,
    /// Provenance of the tables used, if any.
    pub table_ids: Vec<String>,
}

/// Per replication and tau: decision per test kind, `None` on failure.
type RepOutcome = Vec<Vec<Option<bool>>>;

fn run_rep(
    grid: &ExperimentGrid,
    spec: &DgpSpec,
    cell: u64,
    rep: usize,
    tables: Option<&TableSet>,
    opts: &SwitchingOptions,
) -> RepOutcome {
    // The stream ignores the alternative index: alternatives share draws.
    let mut rng = stream(grid.seed, StreamKind::Experiment, cell, 0, rep as u64);
    let z05 = normal_quantile(0.95);
    let data = match simulate_with_rng(spec, &mut rng) {
        Ok(d) => d,
        Err(_) => return vec![vec![None; grid.test_kinds.len()]; grid.taus.len()],
    };
    grid.taus
        .iter()
        .map(|&tau| match Ingredients::compute(&data, tau, opts) {
            Err(_) => vec![None; grid.test_kinds.len()],
            Ok(ing) => grid
                .test_kinds
                .iter()
                .map(|k| match k {
                    TestKind::StandardT => Some(ing.iid_t.t_value >= z05),
                    TestKind::StandardTHac => Some(ing.hac_t.t_value >= z05),
                    TestKind::SwitchingFm => {
                        let tables = tables?;
                        decide(ing.clone(), tables, opts).ok().map(|r| r.reject_right)
                    }
                })
                .collect(),
        })
        .collect()
}

/// Runs every cell of the grid; size and power experiments differ only in
/// how the cells are classified afterwards.
pub fn run(grid: &ExperimentGrid, tables: Option<&TableSet>, opts: &SwitchingOptions, exec: Exec) -> Result<RejectionReport> {
    grid.validate()?;
    if grid.needs_tables() && tables.is_none() {
        return Err(Error::Config("switching_fm experiments need critical value tables".into()));
    }
    let alts = grid.alternative.values();
    let mut cells = Vec::new();
    let mut cell_id = 0u64;
    for &delta in &grid.delta_values {
        for &c in &grid.c_values {
            for &alt in &alts {
                let spec = grid.spec(delta, c, alt);
                let outcomes = exec.map(grid.replications, |r| run_rep(grid, &spec, cell_id, r, tables, opts));
                for (ti, &tau) in grid.taus.iter().enumerate() {
                    let slope = population_quantile_slope(&spec, tau);
                    for (ki, &kind) in grid.test_kinds.iter().enumerate() {
                        let mut rej = 0;
                        let mut valid = 0;
                        let mut failures = 0;
                        for o in &outcomes {
                            match o[ti][ki] {
                                Some(true) => {
                                    rej += 1;
                                    valid += 1;
                                }
                                Some(false) => valid += 1,
                                None => failures += 1,
                            }
                        }
                        cells.push(CellResult {
                            test_kind: kind,
                            delta,
                            c,
                            alternative: alt,
                            tau,
                            rejections: rej,
                            valid,
                            failures,
                            population_slope: slope,
                        });
                    }
                }
            }
            cell_id += 1;
        }
    }
    let table_ids = tables
        .map(|t| vec![t.z.id(), t.dfgls.id(), t.alpha1.id()])
        .unwrap_or_default();
    Ok(RejectionReport {
        grid: grid.clone(),
        cells,
        table_ids,
    })
}

/// Size experiment: every cell must be a null cell.
pub fn run_size(grid: &ExperimentGrid, tables: Option<&TableSet>, opts: &SwitchingOptions, exec: Exec) -> Result<RejectionReport> {
    if grid.alternative != Alternative::Null {
        return Err(Error::Config("size experiments take no alternative axis".into()));
    }
    run(grid, tables, opts, exec)
}

pub fn run_power(grid: &ExperimentGrid, tables: Option<&TableSet>, opts: &SwitchingOptions, exec: Exec) -> Result<RejectionReport> {
    run(grid, tables, opts, exec)
}

impl RejectionReport {
    pub fn cell(&self, kind: TestKind, delta: f64, c: f64, alt: f64, tau: f64) -> Option<&CellResult> {
        const EPS: f64 = 1e-9;
        self.cells.iter().find(|r| {
            r.test_kind == kind
                && (r.delta - delta).abs() < EPS
                && (r.c - c).abs() < EPS
                && (r.alternative - alt).abs() < EPS
                && (r.tau - tau).abs() < EPS
        })
    }

    pub fn total_valid(&self) -> usize {
        self.cells.iter().map(|c| c.valid).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures).sum()
    }

    fn render(&self, header: &[String], value: impl Fn(&CellResult) -> String) -> String {
        let mut s = String::new();
        for h in header {
            let _ = writeln!(s, "# {h}");
        }
        let g = &self.grid;
        let _ = writeln!(s, "# experiment={}", g.label);
        let _ = writeln!(s, "# T={} replications={} seed={}", g.t, g.replications, g.seed);
        let _ = writeln!(s, "# innovation={}", format!("{:?}", g.innovation));
        for id in &self.table_ids {
            let _ = writeln!(s, "# table={id}");
        }
        let _ = writeln!(s, "# cells marked '*' are alternatives (nonzero population slope); '!' marks cells with >1% failures");
        let taus: Vec<String> = g.taus.iter().map(|t| format!("tau={}", fmt_sig6(*t))).collect();
        let _ = writeln!(s, "test,delta,c,{},{}", g.alternative.label(), taus.join(","));
        for &kind in &g.test_kinds {
            for &d in &g.delta_values {
                for &c in &g.c_values {
                    for a in g.alternative.values() {
                        let mut row = vec![kind.as_str().to_string(), fmt_sig6(d), fmt_sig6(c), fmt_sig6(a)];
                        for &tau in &g.taus {
                            let cell = self.cell(kind, d, c, a, tau).expect("every cell is present");
                            let mut v = value(cell);
                            if !cell.is_null() {
                                v.push('*');
                            }
                            if cell.is_invalid() {
                                v.push('!');
                            }
                            row.push(v);
                        }
                        let _ = writeln!(s, "{}", row.join(","));
                    }
                }
            }
        }
        s
    }

    /// Rejection rates, one row per `(test, delta, c, alternative)` and one
    /// column per tau.
    pub fn rates_table(&self, header: &[String]) -> String {
        self.render(header, |c| format!("{:.3}", c.rate()))
    }

    /// Companion file with Monte Carlo standard errors.
    pub fn se_table(&self, header: &[String]) -> String {
        self.render(header, |c| format!("{:.4}", c.se()))
    }

    /// Failure counts per cell.
    pub fn failures_table(&self, header: &[String]) -> String {
        self.render(header, |c| c.failures.to_string())
    }
}

pub fn deciles() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Grid of one of the published experiments (tables 3 to 7).
pub fn preset(table: u32, replications: usize, seed: u64) -> Result<Vec<ExperimentGrid>> {
    let base = |label: &str, test: TestKind| ExperimentGrid {
        label: label.to_string(),
        taus: deciles(),
        c_values: vec![0.0, -5.0, -10.0, -25.0, -50.0, -200.0],
        delta_values: vec![-0.95, -0.5],
        alternative: Alternative::Null,
        t: 400,
        replications,
        test_kinds: vec![test],
        innovation: Innovation::Gaussian,
        seed,
    };
    Ok(match table {
        3 => vec![base("table3", TestKind::StandardT)],
        4 => vec![base("table4", TestKind::SwitchingFm)],
        5 => {
            let panel = |label: &str, innovation| ExperimentGrid {
                delta_values: vec![-0.95],
                innovation,
                ..base(label, TestKind::SwitchingFm)
            };
            vec![
                panel("table5_panel_a", Innovation::GjrMix { nu: 8.0 }),
                panel("table5_panel_b", Innovation::GjrOnly { nu: 8.0 }),
                panel("table5_panel_c", Innovation::TOnly { nu: 3.0 }),
            ]
        }
        6 => vec![ExperimentGrid {
            taus: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            c_values: vec![-5.0, -10.0, -25.0],
            alternative: Alternative::Linear {
                gammas: (0..6).map(|k| 0.0125 * k as f64).collect(),
            },
            ..base("table6", TestKind::SwitchingFm)
        }],
        7 => vec![ExperimentGrid {
            taus: vec![0.5, 0.7, 0.9],
            c_values: vec![-5.0, -10.0, -25.0],
            alternative: Alternative::Tail {
                a1: (0..6).map(|k| 2.236_067_977_5 * k as f64).collect(),
                a2: 100.0,
                kappa: 0.25,
            },
            ..base("table7", TestKind::SwitchingFm)
        }],
        other => return Err(Error::Config(format!("no preset for table {other} (use 3-7)"))),
    })
}
