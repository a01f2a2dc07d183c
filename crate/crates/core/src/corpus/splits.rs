use std::collections::HashSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use super::csv_format::parse_conversation;
use super::record::Conversation;
use crate::error::{Error, Result};

/// Conversation counts of the standard train/valid/test partition.
pub const EXPECTED_SPLIT_SIZES: [usize; 3] = [1115, 19, 19];

/// Total conversation count from which a manifest is treated as the full corpus.
pub const FULL_CORPUS_THRESHOLD: usize = 1000;

#[derive(Debug, Clone)]
pub struct SplitManifest {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<Conversation>,
    pub valid: Vec<Conversation>,
    pub test: Vec<Conversation>,
    /// Count mismatches against [`EXPECTED_SPLIT_SIZES`] on a full corpus.
    pub warnings: Vec<String>,
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

impl SplitIds {
    pub fn read(manifest: &SplitManifest) -> Result<Self> {
        let ids = SplitIds {
            train: read_id_list(&manifest.train)?,
            valid: read_id_list(&manifest.valid)?,
            test: read_id_list(&manifest.test)?,
        };
        ids.check_disjoint()?;
        Ok(ids)
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (split, ids) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for id in ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Data(format!("conversation {id} listed twice (again in {split})")));
                }
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }

    /// Warnings for count mismatches, only when the manifest looks like the
    /// full corpus.
    pub fn count_warnings(&self) -> Vec<String> {
        let counts = self.counts();
        if counts.iter().sum::<usize>() < FULL_CORPUS_THRESHOLD {
            return Vec::new();
        }
        ["train", "valid", "test"]
            .iter()
            .zip(counts.iter().zip(EXPECTED_SPLIT_SIZES))
            .filter(|(_, (got, want))| *got != want)
            .map(|(name, (got, want))| format!("{name} split has {got} conversations, expected {want}"))
            .collect()
    }
}

/// `<dir>/<id>.csv`.
pub fn conversation_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csv"))
}

pub fn load_conversation_file(path: &Path) -> Result<Conversation> {
    let file = File::open(path).map_err(|e| Error::load(path, e))?;
    parse_conversation(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::Structure(m) => Error::Structure(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_conversations(dir: &Path, ids: &[String]) -> Result<Vec<Conversation>> {
    ids.iter()
        .map(|id| {
            let conv = load_conversation_file(&conversation_path(dir, id))?;
            if conv.id() != id {
                return Err(Error::Structure(format!(
                    "file for {id} holds conversation {}",
                    conv.id()
                )));
            }
            Ok(conv)
        })
        .collect()
}

/// Reads three id lists and loads each listed conversation from `corpus_dir`.
pub fn load_split_manifest(corpus_dir: &Path, manifest: &SplitManifest) -> Result<Splits> {
    let ids = SplitIds::read(manifest)?;
    let warnings = ids.count_warnings();
    for w in &warnings {
        log::warn!("{w}");
    }
    let [tr, va, te] = ids.counts();
    log::info!("splits: {tr} train, {va} valid, {te} test conversations");
    Ok(Splits {
        train: load_conversations(corpus_dir, &ids.train)?,
        valid: load_conversations(corpus_dir, &ids.valid)?,
        test: load_conversations(corpus_dir, &ids.test)?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(train: &[&str], valid: &[&str], test: &[&str]) -> SplitIds {
        let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
        SplitIds {
            train: v(train),
            valid: v(valid),
            test: v(test),
        }
    }

    #[test]
    fn overlap_is_rejected() {
        assert!(ids(&["a", "b"], &["c"], &["b"]).check_disjoint().is_err());
        assert!(ids(&["a", "b"], &["c"], &["d"]).check_disjoint().is_ok());
    }

    #[test]
    fn small_manifests_do_not_warn() {
        assert!(ids(&["a", "b", "c"], &["d"], &["e"]).count_warnings().is_empty());
    }

    #[test]
    fn full_corpus_counts_are_checked() {
        let names: Vec<String> = (0..1115).map(|i| format!("sw{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        assert!(ids(&refs, &["v"; 19], &["t"; 19]).count_warnings().is_empty());
        let full = ids(&refs, &["v"; 19], &["t"; 18]);
        let w = full.count_warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("test"));
    }
}
