use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;

use switchfm::dgp::{simulate, DgpSpec};
use switchfm::tables::Alpha1Source;
use switchfm::Exec;
use switchfm_cli::commands::{cmd_gen_tables, cmd_mc, cmd_test, CalibrationMethod, GenTablesArgs, McArgs, TableChoice};
use switchfm_cli::config::{ColumnMap, EmpiricalConfig, Overrides, Predictor};
use switchfm_cli::ingest::{ingest_file, IngestError};

const HEADER: &str = "yyyymm,Index,D12,E12,b/m,Rfree,CRSP_SPvw";

fn shipped_tables() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tables")
}

/// Monthly rows from 1926:01 with a persistent log dividend yield and
/// returns from the null DGP; `blank(i)` empties D12 in row `i`.
fn goyal_welch_like(months: usize, blank: impl Fn(usize) -> bool) -> String {
    let mut spec = DgpSpec::null(months, -5.0, -0.9);
    spec.mu_x = -3.5;
    spec.seed = 11;
    let d = simulate(&spec).unwrap();
    let (y, x) = (d.y(), d.x_lag());
    let mut s = String::from(HEADER);
    s.push('\n');
    let mut index = 10.0_f64;
    for i in 0..months {
        let (yr, mo) = (1926 + i / 12, i % 12 + 1);
        let ret = 0.04 * y[i];
        index *= 1.0 + ret;
        let d12 = index * (x[i] * 0.1 - 3.5).exp();
        let d12 = if blank(i) { String::new() } else { format!("{d12:.6}") };
        let _ = writeln!(
            s,
            "{yr}{mo:02},\"{},{:03}.{:02}\",{d12},{:.6},{:.6},0.003,{:.8}",
            (index as u64) / 1000,
            (index as u64) % 1000,
            ((index.fract()) * 100.0) as u64,
            index * 0.05,
            0.5 + 0.01 * x[i],
            ret + 0.003
        );
    }
    s
}

fn write_tmp(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn dp() -> Predictor {
    Predictor::DividendPrice
}

#[test]
fn full_span_gives_expected_sample_size() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(1092, |_| false));
    let got = ingest_file(&p, &ColumnMap::default(), &dp(), (Some(192601), Some(201512))).unwrap();
    assert_eq!(got.y.len(), 1080);
    assert_eq!((got.first_period, got.last_period), (192601, 201512));
    let aligned = switchfm::series::align_predictive(&got.y, &got.x).unwrap();
    assert_eq!(aligned.len(), 1079);
}

#[test]
fn incomplete_edges_are_trimmed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(240, |i| i < 3 || i >= 238));
    let got = ingest_file(&p, &ColumnMap::default(), &dp(), (None, None)).unwrap();
    assert_eq!(got.trimmed, (3, 2));
    assert_eq!(got.y.len(), 235);
    assert_eq!(got.first_period, 192604);
}

#[test]
fn interior_gap_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(240, |i| i == 100));
    match ingest_file(&p, &ColumnMap::default(), &dp(), (None, None)) {
        Err(IngestError::InteriorMissing { line, column }) => {
            assert_eq!(line, 102);
            assert_eq!(column, "D12");
        }
        other => panic!("expected an interior-missing error, got {other:?}"),
    }
}

#[test]
fn missing_dividend_column() {
    let dir = tempfile::tempdir().unwrap();
    let body = goyal_welch_like(120, |_| false).replacen("D12", "Div", 1);
    let p = write_tmp(dir.path(), "gw.csv", &body);
    let err = ingest_file(&p, &ColumnMap::default(), &dp(), (None, None)).unwrap_err();
    assert!(matches!(&err, IngestError::MissingColumn { name, .. } if name == "D12"), "{err}");
    assert!(err.to_string().contains("D12"));
    // Predictors that do not need the column still load.
    assert!(ingest_file(&p, &ColumnMap::default(), &Predictor::BookToMarket, (None, None)).is_ok());
}

#[test]
fn custom_predictor_is_untransformed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(120, |_| false));
    let got = ingest_file(&p, &ColumnMap::default(), &Predictor::Custom("b/m".into()), (None, None)).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let raw: Vec<f64> = rdr.records().map(|r| r.unwrap()[4].parse().unwrap()).collect();
    assert_eq!(got.x.values(), &raw[..]);
}

#[test]
fn unparseable_value_and_month_gap() {
    let dir = tempfile::tempdir().unwrap();
    let good = goyal_welch_like(60, |_| false);
    let bad_num = good.replacen(",0.003,", ",x.y,", 1);
    let p = write_tmp(dir.path(), "a.csv", &bad_num);
    assert!(matches!(
        ingest_file(&p, &ColumnMap::default(), &dp(), (None, None)),
        Err(IngestError::Unparseable { line: 2, .. })
    ));
    let mut lines: Vec<&str> = good.lines().collect();
    lines.remove(10);
    let p = write_tmp(dir.path(), "b.csv", &lines.join("\n"));
    assert!(matches!(
        ingest_file(&p, &ColumnMap::default(), &dp(), (None, None)),
        Err(IngestError::NotContiguous { line: 11, .. })
    ));
}

fn test_config(input: PathBuf) -> EmpiricalConfig {
    EmpiricalConfig::load(
        None,
        Overrides {
            input: Some(input),
            tables_dir: Some(shipped_tables()),
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn empirical_report_schema_and_branch_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(600, |_| false));
    let report = cmd_test(&test_config(p)).unwrap();
    assert!(report.contains("# tool=switchfm-cli"));
    assert_eq!(report.matches("sha256=").count(), 4);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(report.as_bytes());
    let header = rdr.headers().unwrap().clone();
    assert_eq!(header.len(), 16);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        let f = |name: &str| r[col(name)].parse::<f64>().unwrap();
        assert!(f("gamma1_lower") <= f("gamma1_upper"));
        assert!(f("c_L_right") <= f("c_U_right"));
        assert!(f("delta_tau").abs() <= 1.0);
        let reject = &r[col("reject")];
        assert!(["right", "left", "none"].contains(&reject));
        assert_eq!(reject == "right", f("gamma1_lower") > 0.0);
        assert_eq!(reject == "left", f("gamma1_upper") < 0.0);
        assert_eq!(&r[col("branch_right")] == "t_only", f("c_U_right") < -90.0);
        assert_eq!(&r[col("branch_left")] == "t_only", f("c_U_left") < -100.0);
    }
}

#[test]
fn generated_first_stage_source_also_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(400, |_| false));
    let mut cfg = test_config(p);
    cfg.alpha1_source = Alpha1Source::Generated;
    cfg.taus = vec![0.5];
    let report = cmd_test(&cfg).unwrap();
    assert!(report.contains("alpha1_levels"));
}

fn gen_args(dir: &Path, exec: Exec) -> GenTablesArgs {
    GenTablesArgs {
        kind: TableChoice::Z,
        out_dir: dir.to_path_buf(),
        seed: 5,
        paper_scale: false,
        reps: Some(10_000),
        sim_t: Some(500),
        alpha2: 0.1,
        method: CalibrationMethod::Limit,
        exec,
    }
}

#[test]
fn table_generation_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_gen_tables(&gen_args(a.path(), Exec::Parallel)).unwrap();
    cmd_gen_tables(&gen_args(b.path(), Exec::Sequential)).unwrap();
    let read = |d: &Path| std::fs::read(d.join("z_percentiles.txt")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let leftovers: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn mc_report_has_the_published_layout() {
    let dir = tempfile::tempdir().unwrap();
    let files = cmd_mc(&McArgs {
        table: 3,
        reps: Some(100),
        paper_scale: false,
        seed: 9,
        tables_dir: shipped_tables(),
        alpha1_source: Alpha1Source::Paper,
        alpha2: 0.1,
        out_dir: dir.path().to_path_buf(),
        exec: Exec::default(),
    })
    .unwrap();
    assert_eq!(files.len(), 3);
    let rates = std::fs::read_to_string(&files[0]).unwrap();
    assert!(rates.contains("seed=9"));
    let body: Vec<&str> = rates.lines().filter(|l| !l.starts_with('#')).collect();
    // header plus 6 c-rows x 2 delta-panels, each with 9 tau columns
    assert_eq!(body.len(), 13);
    assert!(body[1..].iter().all(|l| l.split(',').count() == 4 + 9));
}

#[test]
fn binary_exit_status_reflects_errors() {
    let bin = env!("CARGO_BIN_EXE_switchfm");
    let dir = tempfile::tempdir().unwrap();
    let p = write_tmp(dir.path(), "gw.csv", &goyal_welch_like(240, |_| false));
    let ok = Command::new(bin)
        .args(["--threads", "1", "ingest-check", "--input"])
        .arg(&p)
        .output()
        .unwrap();
    assert!(ok.status.success());
    let out = String::from_utf8(ok.stdout).unwrap();
    assert!(out.contains("aligned_T,239"), "{out}");

    let bad = Command::new(bin)
        .args(["ingest-check", "--input", "does-not-exist.csv"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8(bad.stderr).unwrap().contains("ingest"));

    let config = write_tmp(
        dir.path(),
        "run.toml",
        &format!(
            "[data]\ninput = {:?}\npredictor = \"bm\"\n[columns]\nbook_to_market = \"b/m\"\n",
            p.display().to_string()
        ),
    );
    let via_config = Command::new(bin).arg("ingest-check").arg("--config").arg(&config).output().unwrap();
    assert!(via_config.status.success());
    assert!(String::from_utf8(via_config.stdout).unwrap().contains("predictor,bm"));
}
