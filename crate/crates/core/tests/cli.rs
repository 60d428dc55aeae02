use std::fs;
use std::path::{Path, PathBuf};

use vagueness::checkpoint::Checkpoint;
use vagueness::cli::{command, run_with, TagReport};
use vagueness::corpus::{load_consolidated, VaguenessClass};
use vagueness::embeddings::Vocabulary;
use vagueness::word_tagger::{TaggerConfig, WordModel, WordModelKind};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("vagueness").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_word_model(zero: bool) -> WordModel {
    let words: Vec<Vec<&str>> = vec![vec!["users", "may", "post", "content", "we", "collect"]];
    let vocab = Vocabulary::build(&words, 100).unwrap();
    let cfg = TaggerConfig {
        dim: 4,
        hidden: 3,
        seed: 1,
        ..TaggerConfig::default()
    };
    let mut m = WordModel::new(WordModelKind::Aware, vocab, cfg).unwrap();
    if zero {
        let ids: Vec<_> = m.params.ids().collect();
        for id in ids {
            m.params.value_mut(id).fill(0.0);
        }
    }
    m
}

#[test]
fn help_lists_every_flag() {
    let readme = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    for sub in command().get_subcommands() {
        let name = sub.get_name().to_string();
        let help = sub.clone().render_long_help().to_string();
        assert!(
            readme.contains(&format!("vagueness {name}")),
            "README lacks subcommand {name}"
        );
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                let flag = format!("--{long}");
                assert!(help.contains(&flag), "{name} --help lacks {flag}");
                assert!(readme.contains(&flag), "README lacks {flag}");
            }
        }
    }
}

#[test]
fn help_and_version_exit_zero() {
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("train-sentence"));
    let (code, out, _) = cli(&["--version"]);
    assert_eq!(code, 0);
    assert!(out.contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn consolidate_recovers_example_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gold.jsonl");
    let (code, _, err) = cli(&[
        "consolidate",
        "--in",
        p(&fixture("annotated_example.jsonl")),
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0, "{err}");
    let gold = load_consolidated(&out).unwrap();
    let vague: Vec<&str> = gold[0]
        .tokens
        .iter()
        .zip(&gold[0].word_labels)
        .filter(|(_, &l)| l == 1)
        .map(|(t, _)| t.text.as_str())
        .collect();
    assert_eq!(vague, ["any", "other", "normally"]);
    assert_eq!(gold[0].class, VaguenessClass::Vague);
}

#[test]
fn flags_override_settings_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "threshold = 4\n").unwrap();
    let out = dir.path().join("gold.jsonl");
    let input = fixture("annotated_example.jsonl");
    let args = ["consolidate", "--in", p(&input), "--out", p(&out), "--config", p(&cfg)];
    assert_eq!(cli(&args).0, 0);
    assert_eq!(load_consolidated(&out).unwrap()[0].vague_word_count(), 0);
    let mut with_flag = args.to_vec();
    with_flag.extend(["--threshold", "2"]);
    assert_eq!(cli(&with_flag).0, 0);
    assert_eq!(load_consolidated(&out).unwrap()[0].vague_word_count(), 3);
}

#[test]
fn json_settings_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"threshold": 4}"#).unwrap();
    let out = dir.path().join("gold.jsonl");
    let input = fixture("annotated_example.jsonl");
    let args = ["consolidate", "--in", p(&input), "--out", p(&out), "--config", p(&cfg)];
    assert_eq!(cli(&args).0, 0);
    assert_eq!(load_consolidated(&out).unwrap()[0].vague_word_count(), 0);
}

#[test]
fn eval_constant_modal_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("gold.jsonl");
    let pred = dir.path().join("pred.jsonl");
    let mut g = String::new();
    let mut q = String::new();
    for (class, n) in [
        ("clear", 2690),
        ("somewhat-clear", 5077),
        ("vague", 2050),
        ("extremely-vague", 183),
    ] {
        for _ in 0..n {
            g.push_str(&format!("{{\"class\":\"{class}\"}}\n"));
            q.push_str("{\"class\":\"somewhat-clear\"}\n");
        }
    }
    fs::write(&gold, g).unwrap();
    fs::write(&pred, q).unwrap();
    let (code, out, err) = cli(&["eval", "--pred", p(&pred), "--gold", p(&gold)]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let w = &v["weighted"];
    assert!((w["precision"].as_f64().unwrap() - 25.77).abs() <= 0.05);
    assert!((w["recall"].as_f64().unwrap() - 50.77).abs() <= 0.05);
    assert!((w["f1"].as_f64().unwrap() - 34.19).abs() <= 0.05);
}

#[test]
fn tag_with_zero_model_gives_half() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    small_word_model(true).to_checkpoint().save(&model).unwrap();
    let (code, out, err) = cli(&["tag", "--model", p(&model), "--text", "users may post"]);
    assert_eq!(code, 0, "{err}");
    let report: TagReport = serde_json::from_str(&out).unwrap();
    assert_eq!(report.sentences.len(), 1);
    assert_eq!(report.sentences[0].tokens, ["users", "may", "post"]);
    assert!(report.sentences[0].probs.iter().all(|&x| x == 0.5));
}

#[test]
fn tag_empty_input_gives_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    small_word_model(true).to_checkpoint().save(&model).unwrap();
    let (code, out, _) = cli(&["tag", "--model", p(&model), "--text", ""]);
    assert_eq!(code, 0);
    let report: TagReport = serde_json::from_str(&out).unwrap();
    assert!(report.sentences.is_empty());
}

#[test]
fn tag_unknown_words_fall_back_to_unk() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    small_word_model(false).to_checkpoint().save(&model).unwrap();
    let (code, out, _) = cli(&["tag", "--model", p(&model), "--text", "Zebras juggle quietly."]);
    assert_eq!(code, 0);
    let report: TagReport = serde_json::from_str(&out).unwrap();
    let s = &report.sentences[0];
    assert_eq!(s.tokens.len(), 4);
    assert_eq!(s.probs.len(), 4);
    assert!(s.probs.iter().all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn tag_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    small_word_model(false).to_checkpoint().save(&model).unwrap();
    let text = "Users may post content. We collect some information, as needed!";
    let (code, out, _) = cli(&["tag", "--model", p(&model), "--text", text]);
    assert_eq!(code, 0);
    let golden = fixture("tag_golden.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &out).unwrap();
    }
    assert_eq!(out, fs::read_to_string(golden).unwrap());
}

#[test]
fn tag_highlight_marks_vague_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    small_word_model(true).to_checkpoint().save(&model).unwrap();
    let (code, out, _) = cli(&["tag", "--model", p(&model), "--text", "users may post", "--highlight"]);
    assert_eq!(code, 0);
    assert_eq!(out.matches("\x1b[1;31m").count(), 3);
}

#[test]
fn tag_rejects_word_model_as_sentence_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.ckpt");
    small_word_model(true).to_checkpoint().save(&model).unwrap();
    let (code, _, err) = cli(&[
        "tag",
        "--model",
        p(&model),
        "--sentence-model",
        p(&model),
        "--text",
        "a b",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("mismatch"), "{err}");
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["consolidate", "--bogus"]).0, 1);
    assert_eq!(cli(&["no-such-command"]).0, 1);
    assert_eq!(cli(&["reproduce", "--target", "no-such-target"]).0, 1);
    let (code, _, err) = cli(&["stats", "--in", "/nonexistent/corpus.jsonl"]);
    assert_eq!(code, 2);
    assert!(err.contains("/nonexistent/corpus.jsonl"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(
        cli(&[
            "stats",
            "--in",
            p(&fixture("annotated_example.jsonl")),
            "--config",
            p(&cfg)
        ])
        .0,
        1
    );
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    assert_eq!(cli(&["stats", "--in", p(&bad)]).0, 2);
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let gold = dir.path().join("gold.jsonl");
    assert_eq!(
        cli(&["synth", "--out", p(&corpus), "--gold-out", p(&gold), "--n", "40"]).0,
        0
    );
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[tagger]\ndim = 4\nhidden = 4\nepochs = 2\nlr = 1e300\nclip = 1e300\n",
    )
    .unwrap();
    let out = dir.path().join("w.ckpt");
    let (code, _, err) = cli(&["train-word", "--in", p(&gold), "--out", p(&out), "--config", p(&cfg)]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn majority_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let gold = dir.path().join("gold.jsonl");
    assert_eq!(
        cli(&["synth", "--out", p(&corpus), "--gold-out", p(&gold), "--n", "100"]).0,
        0
    );
    let model = dir.path().join("maj.ckpt");
    let (code, _, err) = cli(&[
        "train-sentence",
        "--in",
        p(&gold),
        "--out",
        p(&model),
        "--mode",
        "majority",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(Checkpoint::load(&model).unwrap().kind, "majority");
    let (code, out, err) = cli(&["eval", "--model", p(&model), "--in", p(&gold)]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let acc = v["weighted"]["accuracy"].as_f64().unwrap();
    assert!((acc - v["weighted"]["recall"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn eval_without_inputs_is_usage_error() {
    assert_eq!(cli(&["eval"]).0, 1);
    assert_eq!(cli(&["eval", "--pred", "x.jsonl"]).0, 1);
}

#[test]
fn variant_conflicting_with_baseline_mode_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let gold = dir.path().join("gold.jsonl");
    assert_eq!(
        cli(&["synth", "--out", p(&corpus), "--gold-out", p(&gold), "--n", "20"]).0,
        0
    );
    let out = dir.path().join("m.ckpt");
    let args = [
        "train-sentence",
        "--in",
        p(&gold),
        "--out",
        p(&out),
        "--mode",
        "baseline-cnn",
        "--variant",
        "lstm",
    ];
    assert_eq!(cli(&args).0, 1);
    assert!(!out.exists());
}

#[test]
fn split_partitions_records() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    assert_eq!(cli(&["synth", "--out", p(&corpus), "--n", "50"]).0, 0);
    let out = dir.path().join("folds");
    assert_eq!(
        cli(&["split", "--in", p(&corpus), "--out", p(&out), "--folds", "5"]).0,
        0
    );
    let mut tests = Vec::new();
    for i in 0..5 {
        let test = fs::read_to_string(out.join(format!("fold-{i}/test.jsonl"))).unwrap();
        tests.extend(test.lines().map(String::from));
    }
    tests.sort();
    let mut all: Vec<String> = fs::read_to_string(&corpus).unwrap().lines().map(String::from).collect();
    all.sort();
    assert_eq!(tests, all);
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    fs::copy(fixture("annotated_example.jsonl"), &input).unwrap();
    let before = fs::read(&input).unwrap();
    let out = dir.path().join("gold.jsonl");
    assert_eq!(cli(&["consolidate", "--in", p(&input), "--out", p(&out)]).0, 0);
    assert_eq!(cli(&["stats", "--in", p(&input)]).0, 0);
    assert_eq!(fs::read(&input).unwrap(), before);
}
