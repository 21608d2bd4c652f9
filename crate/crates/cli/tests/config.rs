use plgd::config::{
    Alpha, AlphaKeyword, CertificateMode, ExperimentConfig, SyntheticConfig, SyntheticKind, Theta0, Theta0Keyword,
};
use plgd::data::{self, DatasetFile, ParamSnapshot};
use plgd::CliError;

const BASE: &str = r#"
[problem]
family = "supervised"
[problem.dataset.inline]
inputs = [[1.0, 1.0]]
targets = [[4.0]]
[problem.model]
kind = "linear"
[problem.integrand]
kind = "least_squares"
"#;

fn parse(extra: &str) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::parse(&format!("{BASE}{extra}"))
}

#[test]
fn defaults() {
    let c = parse("").unwrap();
    assert_eq!(c.problem.theta0, Theta0::Keyword(Theta0Keyword::Init));
    assert_eq!(c.descent.alpha, Alpha::Keyword(AlphaKeyword::Auto));
    assert_eq!(c.descent.max_iter, 10_000);
    assert_eq!(c.certificates.mode, CertificateMode::Sampled);
    assert_eq!(c.certificate_seed(), 0);
}

#[test]
fn theta0_forms() {
    let with = |v: &str| {
        ExperimentConfig::parse(&BASE.replace(
            "family = \"supervised\"",
            &format!("family = \"supervised\"\ntheta0 = {v}"),
        ))
    };
    assert_eq!(
        with("\"zeros\"").unwrap().problem.theta0,
        Theta0::Keyword(Theta0Keyword::Zeros)
    );
    assert_eq!(
        with("[1.0, 2.0]").unwrap().problem.theta0,
        Theta0::Values(vec![1.0, 2.0])
    );
    assert!(matches!(
        with("{ path = \"t.json\" }").unwrap().problem.theta0,
        Theta0::File { .. }
    ));
    assert!(with("\"ones\"").is_err());
}

#[test]
fn unknown_keys_rejected() {
    assert!(parse("[descent]\nalpah = 0.1\n").is_err());
    assert!(parse("[certificates.overrides]\nk = 1.0\n").is_err());
    assert!(parse("[extra]\n").is_err());
}

#[test]
fn ranges_checked() {
    assert!(parse("[descent]\nalpha = 0.0\n").is_err());
    assert!(parse("[descent]\nalpha = -1.0\n").is_err());
    assert!(parse("[descent]\nalpha = \"fast\"\n").is_err());
    assert!(parse("[descent]\nmax_iter = 0\n").is_err());
    assert!(parse("[descent]\nstop_gap = 1e-8\nstop_ratio = 1e-8\n").is_err());
    assert!(parse("[descent]\nstop_ratio = 1.5\n").is_err());
    assert!(parse("[certificates]\nn_samples = 0\n").is_err());
    assert!(parse("[descent]\nalpha = 0.3\nstop_gap = 1e-9\n").is_ok());
}

#[test]
fn family_sections_required() {
    let no_model = BASE.replace("[problem.model]\nkind = \"linear\"\n", "");
    assert!(ExperimentConfig::parse(&no_model).is_err());
    let gan_integrand = BASE.replace("kind = \"least_squares\"", "kind = \"r1\"");
    assert!(ExperimentConfig::parse(&gan_integrand).is_err());
    let rf_no_width = BASE.replace("kind = \"linear\"", "kind = \"random_features\"");
    assert!(ExperimentConfig::parse(&rf_no_width).is_err());
}

#[test]
fn exactly_one_dataset_source() {
    let both = BASE.replace(
        "[problem.dataset.inline]",
        "[problem.dataset]\npath = \"x.json\"\n[problem.dataset.inline]",
    );
    assert!(ExperimentConfig::parse(&both).is_err());
}

#[test]
fn dataset_file_validation() {
    let ok: DatasetFile = serde_json::from_str(r#"{"inputs": [[1, 2], [3, 4]], "targets": [[1], [2]]}"#).unwrap();
    assert!(ok.validate().is_ok());
    assert_eq!(ok.to_dataset().unwrap().weights(), &[0.5, 0.5]);
    let ragged: DatasetFile = serde_json::from_str(r#"{"inputs": [[1, 2], [3]]}"#).unwrap();
    assert!(ragged.validate().is_err());
    let short: DatasetFile = serde_json::from_str(r#"{"inputs": [[1], [3]], "targets": [[1]]}"#).unwrap();
    assert!(short.validate().is_err());
    assert!(serde_json::from_str::<DatasetFile>(r#"{"inputs": [[1]], "labels": [1]}"#).is_err());
    let sides: DatasetFile =
        serde_json::from_str(r#"{"inputs": [[1], [2], [3]], "side": ["real", "generated", "real"]}"#).unwrap();
    let (real, generated) = sides.split_sides().unwrap();
    assert_eq!((real.len(), generated.len()), (2, 1));
}

#[test]
fn synthetic_datasets() {
    let cfg = SyntheticConfig {
        kind: SyntheticKind::Gaussian,
        points: 40,
        input_dim: 3,
        output_dim: 1,
        classes: Some(3),
        seed: None,
    };
    let d = data::synthetic(&cfg, 1, false);
    let labels: Vec<f64> = d.targets.unwrap().into_iter().map(|t| t[0]).collect();
    assert!(labels.iter().all(|l| [1.0, 2.0, 3.0].contains(l)));
    for c in [1.0, 2.0, 3.0] {
        assert!(labels.contains(&c));
    }
    let ortho = SyntheticConfig {
        kind: SyntheticKind::Orthonormal,
        points: 2,
        input_dim: 3,
        output_dim: 2,
        classes: None,
        seed: Some(9),
    };
    let d = data::synthetic(&ortho, 1, false);
    assert_eq!(d.inputs, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
    assert_eq!(d.targets.as_ref().unwrap()[0].len(), 2);
    assert_eq!(data::synthetic(&ortho, 5, false), d);
    let gan = data::synthetic(&cfg, 1, true);
    assert_eq!(gan.split_sides().unwrap().0.len(), 20);
}

#[test]
fn snapshot_shape_checked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.json");
    std::fs::write(&p, r#"{"shape": [2, 2], "data": [1, 2, 3]}"#).unwrap();
    assert!(ParamSnapshot::load(&p).is_err());
    std::fs::write(&p, serde_json::to_string(&ParamSnapshot::new(vec![1.0, 2.0])).unwrap()).unwrap();
    assert_eq!(ParamSnapshot::load(&p).unwrap().data, vec![1.0, 2.0]);
}

#[test]
fn shipped_configs_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
