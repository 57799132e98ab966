// Replays the fuzz seeds under stable `cargo test` with the same checks the fuzz targets make.

use std::fs;
use std::path::PathBuf;

use pme::cli::{parse_matrix, parse_trim};
use pme::io::{apply_filters, read_csv_long_from, write_csv_long, CsvColumns, FilterSpec, RunReport};
use pme::sim::Design;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn csv_seeds() {
    let mut parsed = 0;
    for (name, data) in seeds("csv_long") {
        let Ok(records) = read_csv_long_from(data.as_slice(), &CsvColumns::default()) else {
            continue;
        };
        parsed += 1;
        let mut buf = Vec::new();
        write_csv_long(&mut buf, &records).unwrap();
        let again = read_csv_long_from(buf.as_slice(), &CsvColumns::default()).unwrap();
        assert_eq!(records, again, "{name}");
        let spec = FilterSpec {
            min_t: 2,
            keep_longest_run: true,
            ..FilterSpec::default()
        };
        let _ = apply_filters(&records, &spec);
    }
    assert!(parsed >= 3);
}

#[test]
fn report_seeds() {
    for (name, data) in seeds("report_json") {
        let text = String::from_utf8(data).unwrap();
        let report = RunReport::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let json = report.to_json().unwrap();
        assert_eq!(RunReport::from_json(&json).unwrap().to_json().unwrap(), json, "{name}");
    }
}

#[test]
fn design_seeds() {
    for (name, data) in seeds("design_json") {
        let design: Design = serde_json::from_slice(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        let json = serde_json::to_string(&design).unwrap();
        assert_eq!(serde_json::from_str::<Design>(&json).unwrap(), design);
    }
}

#[test]
fn cli_value_seeds() {
    for (name, data) in seeds("cli_values") {
        let s = String::from_utf8(data).unwrap();
        let (m, t) = (parse_matrix(&s), parse_trim(&s));
        match name.as_str() {
            "matrix.txt" => assert_eq!(m.unwrap().shape(), (2, 2)),
            "row.txt" => assert_eq!(m.unwrap().shape(), (1, 2)),
            "trim.txt" => assert_eq!(t.unwrap().upper_pct, 99.0),
            "trim_bad.txt" => assert!(t.is_err()),
            _ => {}
        }
    }
}
