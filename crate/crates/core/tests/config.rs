use rwre::mark_law::{canonical, LawConfig};
use rwre::regime::{classify, Classification};
use rwre::Error;
use std::path::PathBuf;

fn config(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn toml_and_json_describe_the_same_law() {
    let a = LawConfig::parse(&config("two_atom.toml")).unwrap();
    let b = LawConfig::parse(&config("two_atom.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.build().unwrap(), canonical::two_atom_critical());
}

#[test]
fn shipped_configs_classify_as_expected() {
    let cases = [
        ("binary_half.toml", Classification::CriticalNullNegDrift),
        ("two_atom.toml", Classification::CriticalNullNegDrift),
        ("binary_one.toml", Classification::Transient),
    ];
    for (file, class) in cases {
        let law = LawConfig::parse(&config(file)).unwrap().build().unwrap();
        assert_eq!(classify(&law).unwrap().classification, class, "{file}");
    }
    let law = LawConfig::parse(&config("uniform_marks.toml"))
        .unwrap()
        .build()
        .unwrap();
    // E[N] = 2.5, E[A] = 0.4
    assert!((law.rho(1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn classify_report_json_shape() {
    let law = LawConfig::parse(&config("binary_half.toml"))
        .unwrap()
        .build()
        .unwrap();
    let v = serde_json::to_value(classify(&law).unwrap()).unwrap();
    assert_eq!(v["classification"], "CriticalNull_NegDrift");
    assert_eq!(v["kappa"], "+inf");
    assert_eq!(v["method"]["kind"], "Exact");
    assert_eq!(v["degenerate_unbiased"], true);
}

#[test]
fn config_errors() {
    let bad = "kind = \"finite\"\natoms = [[1.0, 3, [0.5, 0.5]]]\n";
    assert!(matches!(
        LawConfig::parse(bad).unwrap().build(),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        LawConfig::parse("kind = \"nope\""),
        Err(Error::Config(_))
    ));
    let probs = "kind = \"finite\"\natoms = [[0.7, 1, [0.5]], [0.7, 1, [0.5]]]\n";
    assert!(LawConfig::parse(probs).unwrap().build().is_err());
}

#[test]
fn law_round_trips_through_config() {
    for (_, law) in canonical::suite() {
        let text = toml::to_string(&law.to_config()).unwrap();
        assert_eq!(LawConfig::parse(&text).unwrap().build().unwrap(), law);
    }
}
