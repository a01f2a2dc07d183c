use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::corpus::{
    build_vocab, conversation_path, encode_conversation, load_conversation_file, load_conversations,
    load_pretrained_embeddings, load_split_manifest, merge_continuations, read_id_list, write_conversation_with,
    Conversation, ConversationInput, LengthStats, SplitManifest, TagSet, Vocabulary, CONTINUATION_TAG,
};
use crate::error::{Error, Result};
use crate::gradsuite::{format_report, run_suite, CaseResult};
use crate::models::{Checkpoint, Model};
use crate::training::{evaluate, train, Evaluation, Splits, TrainEvent, TrainReport};

pub const CONVERSATIONS_DIR: &str = "conversations";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TAGS_FILE: &str = "tags.txt";
pub const STATS_FILE: &str = "stats.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const SPLIT_NAMES: [&str; 3] = ["train", "valid", "test"];

fn split_list(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.txt"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::load(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::load(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::load(path, e))
}

/// Writes the resolved configuration into the output directory.
fn record_config(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out_dir();
    create_dir(&out)?;
    info!("resolved config:\n{}", cfg.to_text());
    write_file(&out.join(CONFIG_FILE), &cfg.to_text())
}

fn load_tag_set(cfg: &RunConfig) -> Result<TagSet> {
    let keep = cfg.parse::<bool>("keep_continuations")?;
    match cfg.path("mapping") {
        Some(p) => TagSet::parse_mapping(&read_file(&p)?, keep),
        None => Ok(TagSet::swda(keep)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareSummary {
    pub counts: [usize; 3],
    pub vocab_size: usize,
    pub num_classes: usize,
    pub continuations_merged: usize,
    pub warnings: Vec<String>,
}

/// Normalizes a raw corpus: merges continuation lines (unless kept), collapses
/// tags, and writes conversations, id lists, vocabulary, tag list and length
/// statistics under `out`.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let corpus = cfg.require_path("corpus")?;
    let manifest = SplitManifest {
        train: cfg.require_path("train_list")?,
        valid: cfg.require_path("valid_list")?,
        test: cfg.require_path("test_list")?,
    };
    let tags = load_tag_set(cfg)?;
    let keep = cfg.parse::<bool>("keep_continuations")?;
    let loaded = load_split_manifest(&corpus, &manifest)?;

    let mut merged_total = 0;
    let mut prepare = |convs: Vec<Conversation>| -> Result<Vec<Conversation>> {
        convs
            .into_iter()
            .map(|c| {
                let mut c = if keep {
                    c
                } else {
                    let (c, n) = merge_continuations(c)?;
                    merged_total += n;
                    c
                };
                tags.annotate(&mut c)?;
                Ok(c)
            })
            .collect()
    };
    let sets = [
        prepare(loaded.train)?,
        prepare(loaded.valid)?,
        prepare(loaded.test)?,
    ];

    let vocab = build_vocab(&sets[0]);
    let stats = LengthStats::from_records(sets[0].iter().flat_map(|c| c.records()))?;

    let out = cfg.out_dir();
    let conv_dir = out.join(CONVERSATIONS_DIR);
    create_dir(&conv_dir)?;
    record_config(cfg)?;
    for (name, set) in SPLIT_NAMES.iter().zip(&sets) {
        let ids: String = set.iter().map(|c| format!("{}\n", c.id())).collect();
        write_file(&split_list(&out, name), &ids)?;
        for c in set {
            let path = conversation_path(&conv_dir, c.id());
            let mut buf = Vec::new();
            write_conversation_with(&mut buf, c, |r| {
                tags.decode(r.act_tag.expect("annotated")).expect("valid id").to_string()
            })?;
            fs::write(&path, buf).map_err(|e| Error::load(&path, e))?;
        }
    }
    let listing: String = vocab.tokens().iter().map(|t| format!("{t}\n")).collect();
    write_file(&out.join(VOCAB_FILE), &listing)?;
    let tag_list: String = tags.tags().iter().map(|t| format!("{t}\n")).collect();
    write_file(&out.join(TAGS_FILE), &tag_list)?;
    write_file(
        &out.join(STATS_FILE),
        &format!("range={}\nstd={}\n", stats.range(), stats.std()),
    )?;

    Ok(PrepareSummary {
        counts: [sets[0].len(), sets[1].len(), sets[2].len()],
        vocab_size: vocab.len(),
        num_classes: tags.len(),
        continuations_merged: merged_total,
        warnings: loaded.warnings,
    })
}

/// A prepared corpus directory read back into memory.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub vocab: Vocabulary,
    pub tags: TagSet,
    pub stats: LengthStats,
    pub dir: PathBuf,
}

impl PreparedCorpus {
    pub fn open(dir: &Path) -> Result<Self> {
        let lines = |name: &str| -> Result<Vec<String>> {
            Ok(read_file(&dir.join(name))?.lines().map(str::to_string).collect())
        };
        let vocab = Vocabulary::from_listing(lines(VOCAB_FILE)?).map_err(|e| Error::Data(e.to_string()))?;
        let tags = TagSet::from_tags(lines(TAGS_FILE)?).map_err(|e| Error::Data(e.to_string()))?;
        let stats = parse_stats(&read_file(&dir.join(STATS_FILE))?)?;
        Ok(PreparedCorpus {
            vocab,
            tags,
            stats,
            dir: dir.to_path_buf(),
        })
    }

    /// Loads and encodes one split against the given vocabulary, tags and stats.
    pub fn split(&self, name: &str, vocab: &Vocabulary, tags: &TagSet, stats: &LengthStats) -> Result<Vec<ConversationInput>> {
        if !SPLIT_NAMES.contains(&name) {
            return Err(Error::Config(format!("unknown split {name:?}; use train, valid or test")));
        }
        let ids = read_id_list(&split_list(&self.dir, name))?;
        load_conversations(&self.dir.join(CONVERSATIONS_DIR), &ids)?
            .into_iter()
            .map(|mut c| {
                tags.annotate(&mut c)?;
                Ok(encode_conversation(&c, vocab, stats))
            })
            .collect()
    }
}

fn parse_stats(text: &str) -> Result<LengthStats> {
    let mut range = None;
    let mut std = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("bad stats line {line:?}")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|e| Error::Data(format!("bad stats value {v:?}: {e}")))?;
        match k.trim() {
            "range" => range = Some(v),
            "std" => std = Some(v),
            other => return Err(Error::Data(format!("unknown stats key {other:?}"))),
        }
    }
    match (range, std) {
        (Some(r), Some(s)) => LengthStats::from_parts(r, s),
        _ => Err(Error::Data("stats file needs range and std".into())),
    }
}

/// Trains the configured preset on a prepared corpus; writes the best
/// checkpoint, the report (text and JSON) and the resolved config under `out`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainReport> {
    let data = PreparedCorpus::open(&cfg.require_path("data")?)?;
    let model_cfg = cfg.model_config(data.vocab.len(), data.tags.len())?;
    let train_cfg = cfg.train_config()?;
    let load = |name| data.split(name, &data.vocab, &data.tags, &data.stats);
    let (train_set, valid_set, test_set) = (load("train")?, load("valid")?, load("test")?);

    let embeddings = match (model_cfg.uses_embeddings(), cfg.path("embeddings")) {
        (true, Some(path)) => {
            let f = File::open(&path).map_err(|e| Error::load(&path, e))?;
            let mut rng = ChaCha8Rng::seed_from_u64(model_cfg.seed.wrapping_add(2));
            let (table, cov) =
                load_pretrained_embeddings(BufReader::new(f), &data.vocab, model_cfg.embedding_dim, &mut rng)
                    .map_err(|e| match e {
                        Error::Format(m) => Error::Data(m),
                        other => other,
                    })?;
            info!("embeddings: {} loaded, {} random", cov.loaded, cov.random);
            Some(table)
        }
        (false, Some(_)) => {
            warn!("preset uses no word embeddings; ignoring the embeddings file");
            None
        }
        _ => None,
    };
    let mut model = Model::build(model_cfg, embeddings)?;
    info!(
        "model {}: {} parameters",
        cfg.get("preset"),
        model.parameter_count()
    );

    let out = cfg.out_dir();
    record_config(cfg)?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut observer = |event: TrainEvent<'_>| -> Result<()> {
        if let TrainEvent::NewBest { epoch, model } = event {
            info!("epoch {epoch} is the new validation best; saving {}", ckpt_path.display());
            Checkpoint {
                model: model.clone(),
                vocab: data.vocab.clone(),
                tags: data.tags.clone(),
                stats: data.stats,
            }
            .save(&ckpt_path)?;
        }
        Ok(())
    };
    let mut report = train(
        &mut model,
        Splits {
            train: &train_set,
            valid: &valid_set,
            test: &test_set,
        },
        &train_cfg,
        &mut observer,
    )?;
    report.tags = data.tags.tags().to_vec();
    write_file(&out.join(REPORT_TEXT_FILE), &report.to_table())?;
    write_file(&out.join(REPORT_JSON_FILE), &report.to_json())?;
    Ok(report)
}

/// Reads a conversation file for tagging or evaluation against `ck`, merging
/// continuation lines when the model has no class for them. Gold tags are
/// attached when every raw tag resolves to a class of the model, through
/// `mapping` if given, else as class names or through the bundled table.
fn read_for_checkpoint(path: &Path, ck: &Checkpoint, mapping: Option<&TagSet>) -> Result<(Conversation, ConversationInput)> {
    let conv = load_conversation_file(path)?;
    let conv = if ck.tags.encode(CONTINUATION_TAG).is_none() {
        merge_continuations(conv)?.0
    } else {
        conv
    };
    let resolve = |tags: &TagSet| -> Option<Vec<usize>> {
        conv.records()
            .iter()
            .map(|r| tags.collapse_name(&r.act_tag_raw).ok().and_then(|n| ck.tags.encode(n)))
            .collect()
    };
    let gold = match mapping {
        Some(m) => resolve(m),
        None => resolve(&ck.tags).or_else(|| resolve(&TagSet::swda(ck.tags.encode(CONTINUATION_TAG).is_some()))),
    };
    let mut input = encode_conversation(&conv, &ck.vocab, &ck.stats);
    input.gold = gold;
    Ok((conv, input))
}

fn load_checkpoint(cfg: &RunConfig, key: &str) -> Result<Checkpoint> {
    let path = cfg.require_path(key)?;
    Checkpoint::load(&path)
}

/// Evaluates a checkpoint on a prepared split, or on one conversation file
/// given as `input`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Evaluation> {
    let ck = load_checkpoint(cfg, "checkpoint")?;
    let convs = match cfg.path("input") {
        Some(path) => {
            let mapping = match cfg.path("mapping") {
                Some(_) => Some(load_tag_set(cfg)?),
                None => None,
            };
            let (_, input) = read_for_checkpoint(&path, &ck, mapping.as_ref())?;
            if input.gold.is_none() {
                return Err(Error::Data(format!("{} has unresolvable act tags", path.display())));
            }
            vec![input]
        }
        None => {
            let data = PreparedCorpus::open(&cfg.require_path("data")?)?;
            data.split(cfg.get("split"), &ck.vocab, &ck.tags, &ck.stats)?
        }
    };
    evaluate(&ck.model, &convs)
}

/// One tagged sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedLine {
    pub caller: String,
    pub utterance_index: u32,
    pub sub_utterance_index: u32,
    pub text: String,
    pub gold: Option<String>,
    pub predicted: String,
    pub compared: Option<String>,
}

/// Tags every sentence of `input`; with `compare` set, a second checkpoint's
/// tags are listed alongside.
pub fn cmd_tag(cfg: &RunConfig) -> Result<Vec<TaggedLine>> {
    let ck = load_checkpoint(cfg, "checkpoint")?;
    let other = match cfg.opt("compare") {
        Some(_) => Some(load_checkpoint(cfg, "compare")?),
        None => None,
    };
    let path = cfg.require_path("input")?;
    let (conv, input) = read_for_checkpoint(&path, &ck, None)?;
    let predicted = ck.model.predict_tags(&input)?;
    let compared = match &other {
        Some(o) => {
            let (_, oi) = read_for_checkpoint(&path, o, None)?;
            if oi.len() != input.len() {
                return Err(Error::Data(
                    "checkpoints disagree on continuation handling; cannot align sentences".into(),
                ));
            }
            Some((o, o.model.predict_tags(&oi)?))
        }
        None => None,
    };
    let name = |ck: &Checkpoint, id: usize| ck.tags.decode(id).expect("model emits known classes").to_string();
    Ok(conv
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| TaggedLine {
            caller: r.caller.to_string(),
            utterance_index: r.utterance_index,
            sub_utterance_index: r.sub_utterance_index,
            text: r.text.clone(),
            gold: input.gold.as_ref().map(|g| name(&ck, g[i])),
            predicted: name(&ck, predicted[i]),
            compared: compared.as_ref().map(|(o, p)| name(o, p[i])),
        })
        .collect())
}

pub fn format_tagged(lines: &[TaggedLine]) -> String {
    let with_gold = lines.iter().any(|l| l.gold.is_some());
    let with_cmp = lines.iter().any(|l| l.compared.is_some());
    let mut out = String::new();
    let mut header = format!("{:<6} {:<8} {:<16}", "caller", "index", "predicted");
    if with_cmp {
        header.push_str(&format!(" {:<16}", "compared"));
    }
    if with_gold {
        header.push_str(&format!(" {:<16}", "gold"));
    }
    header.push_str(" text\n");
    out.push_str(&header);
    for l in lines {
        out.push_str(&format!(
            "{:<6} {:<8} {:<16}",
            l.caller,
            format!("{}.{}", l.utterance_index, l.sub_utterance_index),
            l.predicted
        ));
        if with_cmp {
            out.push_str(&format!(" {:<16}", l.compared.as_deref().unwrap_or("-")));
        }
        if with_gold {
            out.push_str(&format!(" {:<16}", l.gold.as_deref().unwrap_or("-")));
        }
        out.push_str(&format!(" {}\n", l.text));
    }
    out
}

/// Runs the finite-difference suite for `seed`; `corrupt` names a case whose
/// gradient is deliberately broken.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<Vec<CaseResult>> {
    run_suite(cfg.parse("seed")?, cfg.opt("corrupt"))
}

pub fn gradcheck_table(results: &[CaseResult]) -> String {
    format_report(results)
}

pub(crate) fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}
