//! Acceptance criteria, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the pass/fail table is always
//! printed; the process exits nonzero if any required criterion fails.

mod common;

use std::fs;
use std::time::Instant;

use common::*;
use dactag_core::cli::{cmd_prepare, cmd_train, PreparedCorpus, RunConfig, CHECKPOINT_FILE};
use dactag_core::corpus::{
    conversation_to_string, load_split_manifest, merge_continuations, parse_conversation, same_speaker,
    ConversationInput, LengthStats, SplitManifest,
};
use dactag_core::gradsuite::run_suite;
use dactag_core::layers::{gru_step, GruParams, ParamStore};
use dactag_core::models::{Checkpoint, Model, Preset};
use dactag_core::numcore::{Graph, Tensor};
use dactag_core::training::{train, Splits, TrainConfig, TrainEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_SEEDS: u64 = 10;
const CLOSED_FORM_TOLERANCE: f64 = 1e-12;
/// σ(1)·tanh(1), evaluated with 40-digit arithmetic.
const SIGMOID_TANH_ONE: f64 = 0.556_769_941_145_939_744_272_2;
const ROLLOUT_STEPS: usize = 500;
const MEMORIZATION_TARGET: f64 = 0.99;
const MEMORIZATION_EPOCHS: usize = 300;
const CONTEXT_TARGET: f64 = 0.95;
const CONTEXT_MARGIN: f64 = 0.20;
const CONTEXT_EPOCHS: usize = 40;
const LENGTH_TOLERANCE: f64 = 1e-12;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn gradient_fidelity() -> Outcome {
    let mut worst = (0.0, String::new(), 0);
    let mut cases = 0;
    for seed in 0..GRADIENT_SEEDS {
        for r in run_suite(seed, None).map_err(|e| e.to_string())? {
            cases += 1;
            if r.max_relative_error > worst.0 {
                worst = (r.max_relative_error, r.name, seed);
            }
        }
    }
    check(
        worst.0 < GRADIENT_TOLERANCE,
        format!("{cases} checks over {GRADIENT_SEEDS} seeds, worst {:.2e} ({})", worst.0, worst.1),
        format!("{} seed {} has relative error {:.3e}", worst.1, worst.2, worst.0),
    )
}

fn gru_cell(input: usize, hidden: usize, value: Option<f64>, seed: u64) -> (ParamStore, GruParams) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = GruParams::new(&mut store, "gru", input, hidden, false, &mut rng);
    if let Some(v) = value {
        for id in store.ids().collect::<Vec<_>>() {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::filled(&shape, v)).unwrap();
        }
    }
    (store, p)
}

fn gru_closed_forms() -> Outcome {
    let step = |store: &ParamStore, p: &GruParams, x: Vec<f64>, h: Vec<f64>| -> Vec<f64> {
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let x = g.constant(Tensor::vector(x).unwrap());
        let h = g.constant(Tensor::vector(h).unwrap());
        let out = gru_step(&mut g, &b, p, x, h).unwrap();
        g.value(out).data().to_vec()
    };
    let (store, p) = gru_cell(3, 4, None, 9);
    let zero = step(&store, &p, vec![0.0; 3], vec![0.0; 4]);
    let (ones, q) = gru_cell(1, 1, Some(1.0), 0);
    let scalar = step(&ones, &q, vec![1.0], vec![0.0])[0];
    let err = (scalar - SIGMOID_TANH_ONE).abs();
    check(
        zero.iter().all(|&v| v == 0.0) && err <= CLOSED_FORM_TOLERANCE,
        format!("zero cell exact, scalar cell {scalar:.15} (|err| {err:.1e})"),
        format!("zero cell {zero:?}, scalar cell {scalar} (|err| {err:.3e})"),
    )
}

fn boundedness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let (store, p) = gru_cell(4, 8, None, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let mut h = p.initial_state(&mut g);
        for _ in 0..ROLLOUT_STEPS {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let x = g.constant(Tensor::vector(x).unwrap());
            h = gru_step(&mut g, &b, &p, x, h).unwrap();
            let m = g.value(h).data().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            worst = worst.max(m);
        }
    }
    check(
        worst < 1.0,
        format!("5 rollouts × {ROLLOUT_STEPS} steps, max |h| = {worst:.6}"),
        format!("hidden entry reached {worst}"),
    )
}

fn memorization() -> Outcome {
    let data = memorization_corpus(7, 6);
    let mut model = Model::build(small_config(Preset::MultiLevelGrnnNonTextual, 50, 6, 32, 1), None)
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: MEMORIZATION_EPOCHS,
        seed: 3,
        ..Default::default()
    };
    let mut reached = None;
    let mut observer = |e: TrainEvent<'_>| {
        if let TrainEvent::EpochFinished(s) = e {
            if reached.is_none() && s.train_accuracy >= MEMORIZATION_TARGET {
                reached = Some(s.epoch);
            }
        }
        Ok(())
    };
    let splits = Splits {
        train: &data,
        valid: &data,
        test: &[],
    };
    let report = train(&mut model, splits, &cfg, &mut observer).map_err(|e| e.to_string())?;
    let last = report.epochs.last().expect("epochs ran");
    let loss_fell = report.epochs[49].train_loss < report.epochs[0].train_loss;
    match reached {
        Some(epoch) if loss_fell => Ok(format!(
            "≥{:.0}% train accuracy at epoch {epoch}; final loss {:.4}",
            MEMORIZATION_TARGET * 100.0,
            last.train_loss
        )),
        _ => Err(format!(
            "final train accuracy {:.3}, loss fell by epoch 50: {loss_fell}",
            last.train_accuracy
        )),
    }
}

fn test_accuracy(preset: Preset, train_set: &[ConversationInput], valid: &[ConversationInput], test: &[ConversationInput]) -> Result<f64, String> {
    let mut model = Model::build(small_config(preset, MARKER_VOCAB, MARKER_CLASSES, 16, 5), None)
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: CONTEXT_EPOCHS,
        seed: 3,
        ..Default::default()
    };
    let splits = Splits {
        train: train_set,
        valid,
        test,
    };
    let report = train(&mut model, splits, &cfg, &mut ()).map_err(|e| e.to_string())?;
    Ok(report.test_accuracy.expect("test split is non-empty"))
}

fn context_separation() -> Outcome {
    let train_set = marker_corpus(1, 60, 8);
    let valid = marker_corpus(2, 15, 8);
    let test = marker_corpus(3, 15, 8);
    let context = test_accuracy(Preset::MultiLevelGrnn, &train_set, &valid, &test)?;
    let cnn = test_accuracy(Preset::Cnn, &train_set, &valid, &test)?;
    let grnn = test_accuracy(Preset::SingleLevelGrnn, &train_set, &valid, &test)?;
    let best_free = cnn.max(grnn);
    let summary = format!("context grnn {context:.3}, cnn {cnn:.3}, single-level grnn {grnn:.3}");
    check(
        context >= CONTEXT_TARGET && context - best_free >= CONTEXT_MARGIN,
        summary.clone(),
        summary,
    )
}

fn causality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = &marker_corpus(4, 1, 5)[0];
    let mut checks = 0;
    for preset in Preset::ALL {
        let model = Model::build(small_config(preset, MARKER_VOCAB, MARKER_CLASSES, 6, 2), None)
            .map_err(|e| e.to_string())?;
        let reference = model.forward_conversation(base).map_err(|e| e.to_string())?;
        for changed in 1..base.len() {
            let mut perturbed = base.clone();
            let s = &mut perturbed.sentences[changed];
            let len = rng.gen_range(1..9);
            s.tokens = (0..len).map(|_| rng.gen_range(0..MARKER_VOCAB)).collect();
            s.features = [rng.gen_range(1.0..50.0), rng.gen_range(1.0..4.0), 0.0, rng.gen_range(-2.0..2.0)];
            let out = model.forward_conversation(&perturbed).map_err(|e| e.to_string())?;
            for t in 0..changed {
                checks += 1;
                if out[t].data() != reference[t].data() {
                    return Err(format!("{preset}: changing sentence {} moved output {}", changed + 1, t + 1));
                }
            }
        }
    }
    Ok(format!("{checks} earlier distributions bit-identical across 10 presets"))
}

fn length_normalization() -> Outcome {
    let stats = LengthStats::from_lengths(&[1, 2, 3, 4, 5]).map_err(|e| e.to_string())?;
    let got = stats.normalize(3);
    let err = (got - std::f64::consts::FRAC_1_SQRT_2).abs();
    if err > LENGTH_TOLERANCE {
        return Err(format!("l_norm(3) = {got}, |err| {err:.3e}"));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_fixture_corpus(dir.path(), 11);
    let mut cfg = RunConfig::default();
    let p = |n: &str| dir.path().join(n).display().to_string();
    cfg.set("corpus", p("raw")).unwrap();
    cfg.set("train_list", p("train.txt")).unwrap();
    cfg.set("valid_list", p("valid.txt")).unwrap();
    cfg.set("test_list", p("test.txt")).unwrap();
    cfg.set("out", p("prepared")).unwrap();
    cmd_prepare(&cfg).map_err(|e| e.to_string())?;
    let stored = PreparedCorpus::open(&dir.path().join("prepared")).map_err(|e| e.to_string())?.stats;

    let manifest = SplitManifest {
        train: dir.path().join("train.txt"),
        valid: dir.path().join("valid.txt"),
        test: dir.path().join("test.txt"),
    };
    let splits = load_split_manifest(&dir.path().join("raw"), &manifest).map_err(|e| e.to_string())?;
    let merge = |v: &[dactag_core::corpus::Conversation]| -> Vec<_> {
        v.iter().map(|c| merge_continuations(c.clone()).unwrap().0).collect()
    };
    let (train_set, test_set) = (merge(&splits.train), merge(&splits.test));
    let train_only = LengthStats::from_records(train_set.iter().flat_map(|c| c.records())).unwrap();
    let with_test =
        LengthStats::from_records(train_set.iter().chain(&test_set).flat_map(|c| c.records())).unwrap();
    check(
        stored == train_only && with_test != train_only,
        format!("l_norm(3) = {got:.15}; stored stats equal train-only stats, not train∪test"),
        format!("stored {stored:?}, train-only {train_only:?}, train∪test {with_test:?}"),
    )
}

fn parser_round_trip() -> Outcome {
    let src = TABLE1_ROWS.join("\n");
    let conv = parse_conversation(src.as_bytes()).map_err(|e| e.to_string())?;
    let written = conversation_to_string(&conv).map_err(|e| e.to_string())?;
    let back = parse_conversation(written.as_bytes()).map_err(|e| e.to_string())?;
    let expected = [
        ("A", 5, 2, "qy", "{F Um, } {F uh, } do you live right in the city itself? /"),
        ("B", 6, 1, "nn", "No,  /"),
        ("B", 6, 2, "sd", "I'm more out in the suburbs,  /"),
        ("B", 6, 3, "sd", "{C but } I certainly work near a city. /"),
        ("A", 7, 1, "bk", "Okay,  /"),
        ("A", 7, 2, "qy", "{C so } [ ca-, +"),
    ];
    if back.len() != 6 || conv.records() != back.records() {
        return Err("records changed across write/parse".into());
    }
    for (r, e) in back.records().iter().zip(expected) {
        let got = (
            r.caller.to_string(),
            r.utterance_index,
            r.sub_utterance_index,
            r.act_tag_raw.as_str(),
            r.text.as_str(),
        );
        if got != (e.0.to_string(), e.1, e.2, e.3, e.4) || r.conversation_id != "sw2005" {
            return Err(format!("row mismatch: {got:?}"));
        }
    }
    let s62 = same_speaker(back.records()[2].sub_utterance_index);
    let s71 = same_speaker(back.records()[4].sub_utterance_index);
    check(
        s62 == 0.0 && s71 == 1.0,
        "6 rows round-trip field for field; same_speaker(6,2)=0, (7,1)=1".into(),
        format!("same_speaker(6,2)={s62}, (7,1)={s71}"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_fixture_corpus(dir.path(), 5);
    let p = |n: &str| dir.path().join(n).display().to_string();
    let mut prep = RunConfig::default();
    prep.set("corpus", p("raw")).unwrap();
    prep.set("train_list", p("train.txt")).unwrap();
    prep.set("valid_list", p("valid.txt")).unwrap();
    prep.set("test_list", p("test.txt")).unwrap();
    prep.set("out", p("prepared")).unwrap();
    cmd_prepare(&prep).map_err(|e| e.to_string())?;

    let run = |out: &str| -> Result<Vec<u8>, String> {
        let mut cfg = RunConfig::from_text(
            "preset=multi-level-grnn-non-textual\nembedding_dim=8\nsentence_hidden=8\nnontextual_hidden=8\n\
             context_hidden=8\nepochs=3\nseed=42\n",
        )
        .map_err(|e| e.to_string())?;
        cfg.set("data", p("prepared")).unwrap();
        cfg.set("out", p(out)).unwrap();
        cmd_train(&cfg).map_err(|e| e.to_string())?;
        fs::read(dir.path().join(out).join(CHECKPOINT_FILE)).map_err(|e| e.to_string())
    };
    let (a, b) = (run("run1")?, run("run2")?);
    Checkpoint::read_from(a.as_slice()).map_err(|e| e.to_string())?;
    check(
        a == b,
        format!("two seeded runs wrote identical {}-byte checkpoints", a.len()),
        "checkpoints differ between identical runs".into(),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient fidelity", gradient_fidelity),
        ("GRU closed forms", gru_closed_forms),
        ("GRU boundedness", boundedness),
        ("memorization", memorization),
        ("context-dependency separation", context_separation),
        ("causality", causality),
        ("length normalization", length_normalization),
        ("transcript parser", parser_round_trip),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2}  PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2}  FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("criterion 10  SKIP  full-corpus accuracy targets: needs the licensed corpus (not required)");
    println!(
        "acceptance: {} of 9 required criteria passed",
        9 - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
