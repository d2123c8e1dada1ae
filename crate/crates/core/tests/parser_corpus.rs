//! Replays the fuzz corpus seeds through the same round-trip checks as the
//! fuzz targets, plus random inputs on stable.

use std::path::PathBuf;

use fujita_lab::config::ExperimentConfig;
use fujita_lab::report::{parse_series_csv, series_csv};
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(PathBuf, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    out
}

fn check_config(text: &str) {
    if let Ok(cfg) = ExperimentConfig::parse(text) {
        let again = ExperimentConfig::parse(&cfg.serialize()).expect("serialized config must parse");
        assert_eq!(cfg, again);
        let _ = cfg.run_config();
        let _ = cfg.weight();
    }
}

fn check_series(text: &str) {
    if let Ok(series) = parse_series_csv(text) {
        let again = parse_series_csv(&series_csv(&series)).expect("emitted series must parse");
        assert_eq!(series.len(), again.len());
        for (a, b) in series.iter().zip(&again) {
            assert!(a.0.to_bits() == b.0.to_bits() || (a.0.is_nan() && b.0.is_nan()));
            assert!(a.1.to_bits() == b.1.to_bits() || (a.1.is_nan() && b.1.is_nan()));
        }
    }
}

#[test]
fn config_seeds() {
    let seeds = corpus("config_parse");
    assert!(seeds.len() >= 3);
    let parsed = seeds.iter().filter(|(_, t)| ExperimentConfig::parse(t).is_ok()).count();
    assert!(parsed >= 3, "most seeds should be valid configs");
    for (_, text) in &seeds {
        check_config(text);
    }
}

#[test]
fn series_seeds() {
    let seeds = corpus("series_csv");
    assert!(seeds.len() >= 3);
    for (_, text) in &seeds {
        check_series(text);
    }
}

proptest! {
    #[test]
    fn config_lines_round_trip(lines in prop::collection::vec("[a-z._]{1,16} ?= ?[-0-9a-z., e+]{0,24}( #.*)?", 0..8)) {
        check_config(&lines.join("\n"));
    }

    #[test]
    fn series_text_round_trip(rows in prop::collection::vec("[-0-9.e+ainf]{0,12},[-0-9.e+ainfN]{0,12}", 0..12)) {
        check_series(&format!("t,value\n{}", rows.join("\n")));
    }

    #[test]
    fn series_parser_never_panics(text in "\\PC{0,200}") {
        check_series(&text);
    }
}
