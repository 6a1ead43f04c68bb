//! The four subcommands. Each returns the text it produced so that callers
//! (and tests) decide where it goes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use switchfm::calibrate::{calibrate_alpha1_feasible, paper_delta_grid};
use switchfm::fmtest::{switching_test, SwitchingFMResult, SwitchingOptions};
use switchfm::harness::{preset, run, DESK_REPS, PAPER_REPS};
use switchfm::series::align_predictive;
use switchfm::stats::{mean, normal_pdf, normal_quantile};
use switchfm::tables::{
    alpha1_delta_grid, calibrate_alpha1, calibration_c_grid, dfgls_c_grid, simulate_dfgls_quantiles,
    simulate_z_table, standard_levels, write_atomic, z_c_grid, z_delta_grid, Alpha1Source, CriticalValueTable,
    SwitchThresholds, TableKind, TableSet,
};
use switchfm::unitroot::{default_max_lags, dfgls};
use switchfm::Exec;

use crate::config::EmpiricalConfig;
use crate::ingest::{ingest, Ingested};
use crate::provenance::{sha256_file, table_lines, tool_line};

/// Share of `alpha2` set aside in the first-stage calibration.
const EPSILON_SHARE: f64 = 0.4;

fn thresholds(alpha2: f64) -> anyhow::Result<SwitchThresholds> {
    let d = SwitchThresholds::default();
    Ok(SwitchThresholds::new(d.c_bar_l, d.c_under_l, alpha2, EPSILON_SHARE * alpha2)?)
}

fn read_input(cfg: &EmpiricalConfig) -> anyhow::Result<Ingested> {
    ingest(cfg).with_context(|| format!("ingest: {}", cfg.input_path.display()))
}

/// Summary of the ingested data and the predictor's unit-root statistic.
pub fn cmd_ingest_check(cfg: &EmpiricalConfig) -> anyhow::Result<String> {
    let data = read_input(cfg)?;
    let aligned = align_predictive(&data.y, &data.x).context("ingest: alignment")?;
    let levels = data.x.values();
    let df = dfgls(levels, default_max_lags(levels.len())).context("unitroot: DF-GLS on the predictor")?;
    let mut s = String::new();
    let _ = writeln!(s, "# {}", tool_line());
    let _ = writeln!(s, "# input={} sha256={}", cfg.input_path.display(), sha256_file(&cfg.input_path)?);
    let _ = writeln!(s, "predictor,{}", cfg.predictor.label());
    let _ = writeln!(s, "span,{}-{}", data.first_period, data.last_period);
    let _ = writeln!(s, "rows,{}", data.y.len());
    let _ = writeln!(s, "trimmed_head,{}", data.trimmed.0);
    let _ = writeln!(s, "trimmed_tail,{}", data.trimmed.1);
    let _ = writeln!(s, "aligned_T,{}", aligned.len());
    let _ = writeln!(s, "mean_excess_return,{:.6}", mean(data.y.values()));
    let _ = writeln!(s, "mean_predictor,{:.6}", mean(levels));
    let _ = writeln!(s, "dfgls_t,{:.4}", df.t_stat);
    let _ = writeln!(s, "phi_hat,{:.4}", df.phi_hat);
    let _ = writeln!(s, "dfgls_lags,{}", df.lags);
    Ok(s)
}

fn reject_marker(r: &SwitchingFMResult) -> &'static str {
    match (r.reject_right, r.reject_left) {
        (true, _) => "right",
        (_, true) => "left",
        _ => "none",
    }
}

/// Switching-FM test at every requested quantile, one row per tau.
pub fn cmd_test(cfg: &EmpiricalConfig) -> anyhow::Result<String> {
    let data = read_input(cfg)?;
    let aligned = align_predictive(&data.y, &data.x).context("ingest: alignment")?;
    let tables = TableSet::load(&cfg.tables_dir, cfg.alpha1_source)
        .with_context(|| format!("tables: loading from {}", cfg.tables_dir.display()))?;
    let opts = SwitchingOptions {
        thresholds: thresholds(cfg.alpha2)?,
        ..SwitchingOptions::default()
    };
    let results: Vec<SwitchingFMResult> = cfg
        .taus
        .iter()
        .map(|&tau| switching_test(&aligned, tau, &tables, &opts).with_context(|| format!("fmtest: tau = {tau}")))
        .collect::<anyhow::Result<_>>()?;

    let mut s = String::new();
    let _ = writeln!(s, "# {}", tool_line());
    let _ = writeln!(s, "# input={} sha256={}", cfg.input_path.display(), sha256_file(&cfg.input_path)?);
    for l in table_lines(&cfg.tables_dir, cfg.alpha1_source, &tables)? {
        let _ = writeln!(s, "# {l}");
    }
    let _ = writeln!(
        s,
        "# predictor={} span={}-{} T={} alpha2={}",
        cfg.predictor.label(),
        data.first_period,
        data.last_period,
        aligned.len(),
        cfg.alpha2
    );
    if let Some(r) = results.first() {
        let _ = writeln!(
            s,
            "# dfgls_t={:.4} phi_hat={:.4} lags={}",
            r.dfgls.t_stat, r.dfgls.phi_hat, r.dfgls.lags
        );
    }
    for r in &results {
        for w in &r.warnings {
            let _ = writeln!(s, "# warning tau={}: {w}", r.tau);
        }
    }
    let _ = writeln!(
        s,
        "tau,gamma1_hat,t_standard,t_hac,delta_tau,alpha1_right,c_L_right,c_U_right,alpha1_left,c_L_left,c_U_left,branch_right,branch_left,gamma1_lower,gamma1_upper,reject"
    );
    for r in &results {
        let _ = writeln!(
            s,
            "{},{:.6},{:.4},{:.4},{:.4},{},{:.2},{:.2},{},{:.2},{:.2},{},{},{:.6},{:.6},{}",
            r.tau,
            r.gamma1_hat,
            r.iid_t.t_value,
            r.hac_t.t_value,
            r.long_run.delta_tau,
            r.right.alpha1,
            r.right.ci_c.c_lower,
            r.right.ci_c.c_upper,
            r.left.alpha1,
            r.left.ci_c.c_lower,
            r.left.ci_c.c_upper,
            r.right.branch.as_str(),
            r.left.branch.as_str(),
            r.gamma1_lower,
            r.gamma1_upper,
            reject_marker(r)
        );
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableChoice {
    Z,
    DfGls,
    Alpha1,
    All,
}

impl TableChoice {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "z" => Self::Z,
            "dfgls" => Self::DfGls,
            "alpha1" => Self::Alpha1,
            "all" => Self::All,
            other => bail!("unknown table kind '{other}' (z|dfgls|alpha1|all)"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMethod {
    /// Limit experiment on simulated Brownian functionals.
    Limit,
    /// Full finite-sample switching test on simulated data.
    Feasible,
}

impl CalibrationMethod {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "limit" => Self::Limit,
            "feasible" => Self::Feasible,
            other => bail!("unknown calibration method '{other}' (limit|feasible)"),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GenTablesArgs {
    pub kind: TableChoice,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub paper_scale: bool,
    pub reps: Option<usize>,
    pub sim_t: Option<usize>,
    pub alpha2: f64,
    pub method: CalibrationMethod,
    pub exec: Exec,
}

/// Checks the delta = 0 row against the normal quantiles: the average over
/// the c grid (independent paths per c) must lie within three standard
/// errors of a sample quantile.
fn z_self_check(t: &CriticalValueTable) -> anyhow::Result<()> {
    let nc = t.c_grid.len() as f64;
    for level in [0.05, 0.95] {
        let want = normal_quantile(level);
        let se = (level * (1.0 - level) / t.replications as f64).sqrt() / normal_pdf(want) / nc.sqrt();
        let got = t
            .c_grid
            .iter()
            .map(|&c| t.z_percentile(c, 0.0, level))
            .sum::<switchfm::Result<f64>>()?
            / nc;
        if (got - want).abs() > 3.0 * se {
            bail!("ou_tables: self-check failed at level {level}: {got} vs {want}");
        }
    }
    Ok(())
}

fn load_or(dir: &Path, kind: TableKind, fresh: &Option<CriticalValueTable>) -> anyhow::Result<CriticalValueTable> {
    match fresh {
        Some(t) => Ok(t.clone()),
        None => {
            let p = dir.join(kind.file_name());
            CriticalValueTable::read(&p).with_context(|| format!("tables: {} is needed first", p.display()))
        }
    }
}

/// Generates the requested tables into `out_dir`; returns a log of what
/// was written.
pub fn cmd_gen_tables(a: &GenTablesArgs) -> anyhow::Result<String> {
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut log = String::new();
    let want = |k: TableChoice| a.kind == k || a.kind == TableChoice::All;
    let write = |t: &CriticalValueTable, log: &mut String| -> anyhow::Result<()> {
        let p = a.out_dir.join(t.kind.file_name());
        t.write(&p).with_context(|| format!("writing {}", p.display()))?;
        let _ = writeln!(log, "wrote {} ({}) sha256={}", p.display(), t.id(), sha256_file(&p)?);
        Ok(())
    };

    let mut z = None;
    if want(TableChoice::Z) {
        let (t, r) = if a.paper_scale { (10_000, 1_000_000) } else { (2000, 200_000) };
        let table = simulate_z_table(
            &z_c_grid(),
            &z_delta_grid(),
            &standard_levels(),
            a.sim_t.unwrap_or(t),
            a.reps.unwrap_or(r),
            a.seed,
            a.exec,
        )
        .context("ou_tables: Z percentiles")?;
        z_self_check(&table)?;
        write(&table, &mut log)?;
        z = Some(table);
    }
    let mut df = None;
    if want(TableChoice::DfGls) {
        let (t, r) = if a.paper_scale { (5000, 200_000) } else { (2000, 100_000) };
        let table = simulate_dfgls_quantiles(
            &dfgls_c_grid(),
            &standard_levels(),
            a.sim_t.unwrap_or(t),
            a.reps.unwrap_or(r),
            a.seed,
            a.exec,
        )
        .context("ou_tables: DF-GLS quantiles")?;
        write(&table, &mut log)?;
        df = Some(table);
    }
    if want(TableChoice::Alpha1) {
        let z_t = load_or(&a.out_dir, TableKind::ZPercentiles, &z)?;
        let df_t = load_or(&a.out_dir, TableKind::DfGlsQuantiles, &df)?;
        let th = thresholds(a.alpha2)?;
        let sim_t = a.sim_t.unwrap_or(5000);
        let reps = a.reps.unwrap_or(10_000);
        let (table, failures) = match a.method {
            CalibrationMethod::Limit => {
                let cal = calibrate_alpha1(
                    &alpha1_delta_grid(),
                    &th,
                    &calibration_c_grid(),
                    sim_t,
                    reps,
                    a.seed,
                    &df_t,
                    &z_t,
                    a.exec,
                )
                .context("ou_tables: first-stage calibration")?;
                (cal.table, cal.failures)
            }
            CalibrationMethod::Feasible => {
                let opts = SwitchingOptions {
                    thresholds: th,
                    ..SwitchingOptions::default()
                };
                let cal = calibrate_alpha1_feasible(
                    &paper_delta_grid(),
                    &calibration_c_grid(),
                    sim_t,
                    reps,
                    a.seed,
                    &opts,
                    &df_t,
                    &z_t,
                    a.exec,
                )
                .context("calibrate: feasible first-stage calibration")?;
                (cal.table, cal.failures)
            }
        };
        for (d, tail) in &failures {
            let _ = writeln!(log, "warning: no admissible level for delta_tau={d} ({tail:?} tail)");
        }
        write(&table, &mut log)?;
    }
    Ok(log)
}

#[derive(Debug, Clone)]
pub struct McArgs {
    pub table: u32,
    pub reps: Option<usize>,
    pub paper_scale: bool,
    pub seed: u64,
    pub tables_dir: PathBuf,
    pub alpha1_source: Alpha1Source,
    pub alpha2: f64,
    pub out_dir: PathBuf,
    pub exec: Exec,
}

/// Runs a published experiment and writes rates, standard errors and
/// failure counts per panel. Returns the list of files written.
pub fn cmd_mc(a: &McArgs) -> anyhow::Result<Vec<PathBuf>> {
    let reps = a.reps.unwrap_or(if a.paper_scale { PAPER_REPS } else { DESK_REPS });
    let grids = preset(a.table, reps, a.seed).context("mc_harness: preset")?;
    let needs = grids.iter().any(|g| g.needs_tables());
    let tables = if needs {
        Some(
            TableSet::load(&a.tables_dir, a.alpha1_source)
                .with_context(|| format!("tables: loading from {}", a.tables_dir.display()))?,
        )
    } else {
        None
    };
    let mut header = vec![tool_line(), format!("seed={}", a.seed)];
    if let Some(t) = &tables {
        header.extend(table_lines(&a.tables_dir, a.alpha1_source, t)?);
    }
    let opts = SwitchingOptions {
        thresholds: thresholds(a.alpha2)?,
        ..SwitchingOptions::default()
    };
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let mut written = Vec::new();
    for g in &grids {
        let report = run(g, tables.as_ref(), &opts, a.exec).with_context(|| format!("mc_harness: {}", g.label))?;
        for (suffix, text) in [
            ("rates", report.rates_table(&header)),
            ("se", report.se_table(&header)),
            ("failures", report.failures_table(&header)),
        ] {
            let p = a.out_dir.join(format!("{}_{suffix}.csv", g.label));
            write_atomic(&p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))?;
            written.push(p);
        }
    }
    Ok(written)
}
