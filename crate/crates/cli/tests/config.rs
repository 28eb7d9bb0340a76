use coalescence_cli::catalog::{catalog, default_config};
use coalescence_cli::config::*;
use coalescence_cli::output::{format_float, Table};
use coalescence_cli::{row, CliError};
use proptest::prelude::*;

fn field_of(cfg: &ExperimentConfig) -> String {
    match cfg.validate() {
        Err(CliError::Config { field, .. }) => field,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn catalog_lists_every_kind_once_in_order() {
    let kinds: Vec<_> = catalog().iter().map(|e| e.kind).collect();
    assert_eq!(kinds, ExperimentKind::ALL.to_vec());
}

#[test]
fn catalog_samples_are_valid_and_match_their_kind() {
    for e in catalog() {
        e.sample
            .validate()
            .unwrap_or_else(|err| panic!("{}: {err}", e.kind.name()));
        assert_eq!(e.sample.experiment.kind(), e.kind);
        assert_eq!(e.sample.seed.is_some(), e.kind.is_stochastic());
    }
}

#[test]
fn catalog_round_trips_through_json() {
    let entries = catalog();
    let text = serde_json::to_string(&entries).unwrap();
    let back: Vec<coalescence_cli::catalog::CatalogEntry> = serde_json::from_str(&text).unwrap();
    assert_eq!(back, entries);
}

#[test]
fn config_lines_start_with_the_experiment() {
    let lines = default_config(ExperimentKind::Fig5).to_lines();
    assert_eq!(lines[0], "experiment = fig5");
    assert!(lines.contains(&"families = two-delta,power-law:6,power-law:3".to_string()));
    let keys: Vec<_> = lines[1..]
        .iter()
        .map(|l| l.split(" = ").next().unwrap())
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn config_text_parsing() {
    let map =
        parse_config_text("# comment\nn = 300  # trailing\n\nfamilies = two-delta\n").unwrap();
    assert_eq!(map.len(), 2);
    assert_eq!(map["n"], "300");
    assert!(parse_config_text("n = 1\nn = 2\n").is_err());
    assert!(parse_config_text("just words\n").is_err());
}

#[test]
fn flags_take_precedence_over_the_file() {
    let file = parse_config_text("experiment = fig5\nn = 300\nrows = 12\n").unwrap();
    let args: Vec<String> = ["coalescence", "fig5", "--n", "50"]
        .map(String::from)
        .to_vec();
    let merged = merge_config(&args, &file, "fig5").unwrap();
    assert_eq!(merged[..4], args[..]);
    assert_eq!(merged[4..], ["--rows=12".to_string()]);
    assert!(merge_config(&args, &file, "fig6").is_err());
}

#[test]
fn validation_names_the_offending_field() {
    let mut cfg = default_config(ExperimentKind::Fig2);
    if let Experiment::Fig2(c) = &mut cfg.experiment {
        c.delta_max = 0.9;
    }
    assert_eq!(field_of(&cfg), "delta-max");

    let mut cfg = default_config(ExperimentKind::TreeSample);
    cfg.seed = None;
    assert_eq!(field_of(&cfg), "seed");

    let mut cfg = default_config(ExperimentKind::PdeRun);
    if let Experiment::PdeRun(c) = &mut cfg.experiment {
        c.horizon = 1.005;
        c.dx = 0.01;
    }
    assert_eq!(field_of(&cfg), "horizon");

    let mut cfg = default_config(ExperimentKind::Fig6);
    if let Experiment::Fig6(c) = &mut cfg.experiment {
        c.sizes = vec![500];
    }
    assert_eq!(field_of(&cfg), "x-max");
}

#[test]
fn family_parsing() {
    assert_eq!("two-delta".parse::<Family>().unwrap(), Family::TwoDelta);
    assert_eq!(
        "power-law:3".parse::<Family>().unwrap(),
        Family::PowerLaw(3.0)
    );
    assert!("power-law:2".parse::<Family>().is_err());
    assert!("gaussian".parse::<Family>().is_err());
    assert_eq!(Family::PowerLaw(3.0).profile_f0(), 1.5);
    assert_eq!(Family::PowerLaw(6.0).profile_f0(), 4.0);
}

#[test]
fn csv_layout() {
    let mut t = Table::new(&["name", "k", "value"]);
    t.push(row!["a", 3usize, 0.1]);
    let csv = t.to_csv(&["experiment = demo".to_string()]);
    assert_eq!(
        csv,
        "# experiment = demo\nname,k,value\na,3,1.0000000000000001e-1\n"
    );
}

proptest! {
    #[test]
    fn floats_keep_seventeen_digits_and_round_trip(x in proptest::num::f64::NORMAL) {
        let s = format_float(x);
        prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        let mantissa = s.trim_start_matches('-').split('e').next().unwrap();
        prop_assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
    }

    #[test]
    fn power_law_families_round_trip(alpha in 2.001f64..20.0) {
        let f = Family::PowerLaw(alpha);
        prop_assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
    }
}
