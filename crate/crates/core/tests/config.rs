use glocal::config::{ConfigError, ExperimentConfig};
use glocal::maps::{make_family, Family};
use glocal::verify::run_checks;

/// lsv(1) written out as a custom branch table.
const CUSTOM_LSV1: &str = r#"
checks = ["eqY"]

[map]
family = "custom"
eta = 1.0

[[map.branches]]
domain = { lo = 0.0, hi = 0.5 }
formula = { type = "power", xi = 0.0, b = 2.0, p = 2.0, c = 0.0, q = 0.0, shift = 0.0 }
kind = { kind = "neutral", xi = 0.0, alpha = 1.0, b = 2.0 }

[[map.branches]]
domain = { lo = 0.5, hi = 1.0 }
formula = { type = "affine", slope = 2.0, intercept = -1.0 }
kind = { kind = "uniform", rho = 2.0 }

[depths]
tail = 2000
ulam_cells = 1024
"#;

#[test]
fn custom_branch_table_matches_the_builtin_map() {
    let cfg = ExperimentConfig::from_toml(CUSTOM_LSV1).unwrap();
    let custom = make_family(cfg.map.to_family().unwrap()).unwrap();
    let lsv = make_family(Family::Lsv { alpha: 1.0 }).unwrap();
    for k in 0..=1000 {
        let x = k as f64 / 1000.0;
        assert!((custom.eval(x) - lsv.eval(x)).abs() < 1e-15, "x = {x}");
    }
    assert_eq!(custom.alpha(), Some(1.0));
    let report = run_checks(&cfg, &cfg.enabled_checks(true)).unwrap();
    let eq_y = report.check("eqY").unwrap();
    assert!(eq_y.get("measure_identity") < 1e-4);
    assert!((eq_y.get("alpha") - 1.0).abs() < 1e-15);
}

#[test]
fn configurations_round_trip_through_toml() {
    for name in ["lsv_a05", "lsv_a075", "farey", "qbranch_q2", "two_sided_a05", "qbranch_linear"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{name}.cfg"));
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
    let cfg = ExperimentConfig::from_toml(CUSTOM_LSV1).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn invalid_fields_are_named() {
    let field = |text: &str| match ExperimentConfig::from_toml(text) {
        Err(ConfigError::Invalid { field, .. }) => field,
        other => panic!("expected an invalid field, got {other:?}"),
    };
    assert_eq!(field("[map]\nfamily = \"lsv\"\nalpha = 1.5\n"), "map.alpha");
    assert_eq!(field("[map]\nfamily = \"qbranch\"\nalpha = 0.5\n"), "map.q");
    assert_eq!(field("[map]\nfamily = \"qbranch_linear\"\n"), "map.cuts");
    assert_eq!(field("[map]\nfamily = \"qbranch_linear\"\nq = 1\n"), "map.q");
    assert_eq!(field("[map]\nfamily = \"moebius\"\n"), "map.family");
    assert_eq!(field("[map]\nfamily = \"farey\"\n[depths]\ntail = 5\n"), "depths.tail");
    assert_eq!(field("[map]\nfamily = \"farey\"\n[jacobian]\njs = [500, 250]\n"), "jacobian.js");
    assert_eq!(field("[map]\nfamily = \"farey\"\n[tolerances]\nleak = 2.0\n"), "tolerances.leak");
    assert_eq!(field("checks = [\"eqZ\"]\n[map]\nfamily = \"farey\"\n"), "checks");
    assert_eq!(field("[map]\nfamily = \"farey\"\n[[observables]]\nkind = \"pwc\"\nrule = \"block\"\n"), "observables[0].length");
    assert!(matches!(
        ExperimentConfig::from_toml("[map]\nfamily = \"farey\"\nspeed = 3\n"),
        Err(ConfigError::Parse(_))
    ));
}

#[test]
fn default_checks_depend_on_the_map() {
    let cfg = ExperimentConfig::from_toml("[map]\nfamily = \"qbranch_linear\"\nq = 3\n").unwrap();
    assert_eq!(cfg.enabled_checks(false), ["glocal"]);
    assert_eq!(cfg.enabled_checks(true), ["eqY", "eqJ", "eqK", "glocal"]);
    assert_eq!(cfg.map.to_family().unwrap(), Family::QbranchLinear { cuts: vec![1.0 / 3.0, 2.0 / 3.0] });
}
