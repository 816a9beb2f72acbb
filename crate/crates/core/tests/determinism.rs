use std::path::Path;

use bincut::experiment::{run_experiment, ExperimentManifest, CSV_AVERAGE_HEADER, CSV_HEADER};

fn manifest() -> (ExperimentManifest, &'static Path) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let m = ExperimentManifest::load(&dir.join("golden.toml")).unwrap();
    (m, Box::leak(dir.into_boxed_path()))
}

#[test]
fn reruns_are_byte_identical() {
    let (m, dir) = manifest();
    let a = run_experiment(&m, dir, Some(1)).unwrap().to_csv();
    let b = run_experiment(&m, dir, Some(4)).unwrap().to_csv();
    let c = run_experiment(&m, dir, None).unwrap().to_csv();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn csv_matches_golden_file() {
    let (m, dir) = manifest();
    let csv = run_experiment(&m, dir, None).unwrap().to_csv();
    let golden_path = dir.join("golden.csv");
    if std::env::var_os("BINCUT_BLESS").is_some() {
        std::fs::write(&golden_path, &csv).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).unwrap();
    assert_eq!(csv, golden, "set BINCUT_BLESS=1 to regenerate after an intended change");
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert!(csv.lines().any(|l| l == CSV_AVERAGE_HEADER));
}

#[test]
fn stored_averages_match_rows() {
    let (m, dir) = manifest();
    let rep = run_experiment(&m, dir, None).unwrap();
    assert_eq!(rep.rows.len(), 2 * 8);
    for avg in &rep.averages {
        let rows: Vec<_> = rep
            .rows
            .iter()
            .filter(|r| r.class == avg.class && r.formulation == avg.formulation)
            .collect();
        assert_eq!(rows.len(), avg.instances);
        let gap: f64 = rows.iter().map(|r| r.gap_with_cuts_pct.unwrap()).sum::<f64>() / rows.len() as f64;
        assert!((gap - avg.avg_gap_with_cuts_pct.unwrap()).abs() <= 1e-9);
        let cuts: f64 = rows.iter().map(|r| r.cuts_added as f64).sum::<f64>() / rows.len() as f64;
        assert!((cuts - avg.avg_cuts_added).abs() <= 1e-9);
    }
}
