use ddsrank::config::{ExperimentConfig, RunSpec};
use ddsrank::Error;
use ddsrank_core::model::Variant;

#[test]
fn empty_file_gives_defaults() {
    let cfg = ExperimentConfig::parse("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.seeds.len(), 5);
    assert_eq!(cfg.k, 16);
}

#[test]
fn nested_tables_are_read() {
    let cfg = ExperimentConfig::parse(
        r#"
seeds = [7, 8]
variants = ["baseline@1", "dds"]
[data.synthetic]
feature_dim = 3
sessions_per_domain = [{ train = 3, valid = 1, test = 1 }, { train = 9, valid = 3, test = 3 }]
[model]
trunk_hidden = [4]
activation = "tanh"
[train]
epochs = 2
[interleave]
pairs = [["dds", "baseline"]]
"#,
    )
    .unwrap();
    assert_eq!(cfg.seeds, [7, 8]);
    assert_eq!(cfg.data.synthetic.sessions_per_domain[1].train, 9);
    assert_eq!(cfg.model.trunk_hidden, [4]);
    assert_eq!(cfg.train.epochs, 2);
    let runs = cfg.runs(2).unwrap();
    assert_eq!(
        runs.iter().map(ToString::to_string).collect::<Vec<_>>(),
        ["baseline@1", "dds"]
    );
}

#[test]
fn invalid_configs_are_config_errors() {
    for text in [
        "unknown = 1",
        "seeds = []",
        "seeds = [1, 1]",
        "variants = []",
        "k = 0",
        "[train]\nbatch_size = 0",
        "[model]\nnot_a_field = 2",
        "[data.synthetic]\nlabel_noise = 1.5",
        "seeds = \"x\"",
    ] {
        let err = ExperimentConfig::parse(text).unwrap_err();
        assert_eq!(err.exit_code(), ddsrank::error::exit::CONFIG, "{text}: {err}");
    }
}

#[test]
fn run_names_expand() {
    let all = RunSpec::expand("baseline", 3).unwrap();
    assert_eq!(all.len(), 3);
    assert!(all.iter().all(|r| r.variant == Variant::Baseline));
    assert_eq!(RunSpec::expand("DDS", 2).unwrap()[0].to_string(), "dds");
    assert_eq!(
        RunSpec::expand("baseline@1", 2).unwrap()[0].file_stem(4),
        "baseline-d1_s4"
    );
    for bad in ["baseline@2", "dds@0", "nope", "baseline@x"] {
        assert!(matches!(RunSpec::expand(bad, 2), Err(Error::Config(_))), "{bad}");
    }
}

#[test]
fn relative_paths_follow_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(&path, "out_dir = \"results\"\n[data]\ndir = \"data\"\n").unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.out_dir, dir.path().join("results"));
    assert_eq!(cfg.data.dir.unwrap(), dir.path().join("data"));
}
