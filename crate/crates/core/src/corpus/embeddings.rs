use std::io::BufRead;

use rand::Rng;

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::layers::{uniform, EmbeddingTable, EMBEDDING_INIT_BOUND};
use crate::numcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingCoverage {
    /// Vocabulary rows filled from the file.
    pub loaded: usize,
    /// Vocabulary rows initialized at random.
    pub random: usize,
}

/// Reads word vectors in text form: an optional `V D` header, then one line
/// per word with the token followed by `dim` reals.
///
/// Covered vocabulary rows are copied; other corpus rows are uniform on
/// `[−0.05, 0.05]`; `UNK` is the mean of the loaded rows (random if none were
/// loaded) and `EMPTY` is zero.
pub fn load_pretrained_embeddings<B: BufRead, R: Rng + ?Sized>(
    source: B,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<(EmbeddingTable, EmbeddingCoverage)> {
    let v = vocab.len();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; v];
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
            let file_dim: usize = values[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad embedding header {line:?}")))?;
            if file_dim != dim {
                return Err(Error::Format(format!(
                    "embedding file has dimension {file_dim}, configured dimension is {dim}"
                )));
            }
            continue;
        }
        if values.len() != dim {
            return Err(Error::Format(format!(
                "embedding line {} has dimension {}, configured dimension is {dim}",
                i + 1,
                values.len()
            )));
        }
        if !vocab.contains(word) {
            continue;
        }
        let parsed = values
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(format!("embedding line {}: {e}", i + 1)))?;
        rows[vocab.id(word)] = Some(parsed);
    }

    let loaded: Vec<&Vec<f64>> = rows.iter().flatten().collect();
    let n_loaded = loaded.len();
    let unk_row = if n_loaded > 0 {
        let mut mean = vec![0.0; dim];
        for r in &loaded {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n_loaded as f64);
        Some(mean)
    } else {
        None
    };

    let mut data = Vec::with_capacity(v * dim);
    let mut random = 0;
    for (id, row) in rows.into_iter().enumerate() {
        let values = if id == vocab.empty() {
            vec![0.0; dim]
        } else if id == vocab.unk() {
            match &unk_row {
                Some(m) => m.clone(),
                None => {
                    random += 1;
                    uniform(&[dim], EMBEDDING_INIT_BOUND, rng).into_data()
                }
            }
        } else if let Some(r) = row {
            r
        } else {
            random += 1;
            uniform(&[dim], EMBEDDING_INIT_BOUND, rng).into_data()
        };
        data.extend(values);
    }
    let table = EmbeddingTable::new(Tensor::matrix(v, dim, data)?)?;
    Ok((
        table,
        EmbeddingCoverage {
            loaded: n_loaded,
            random,
        },
    ))
}

/// Random table for `vocab` with a zero `EMPTY` row.
pub fn random_embeddings<R: Rng + ?Sized>(vocab: &Vocabulary, dim: usize, rng: &mut R) -> EmbeddingTable {
    let mut m = EmbeddingTable::random(vocab.len(), dim, rng).into_matrix();
    m.row_mut(vocab.empty()).fill(0.0);
    EmbeddingTable::new(m).expect("rank 2")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_corpus_tokens(["okay,", "/", "uh"].map(String::from))
    }

    #[test]
    fn full_coverage_with_header() {
        let file = "3 2\nokay, 1 2\n/ 3 4\nuh 5 9\nextra 7 7\n";
        let v = vocab();
        let (t, cov) = load_pretrained_embeddings(file.as_bytes(), &v, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(cov, EmbeddingCoverage { loaded: 3, random: 0 });
        assert_eq!(t.row(v.id("uh")), &[5.0, 9.0]);
        assert_eq!(t.row(v.unk()), &[3.0, 5.0]);
        assert_eq!(t.row(v.empty()), &[0.0, 0.0]);
    }

    #[test]
    fn partial_coverage_randomizes_the_rest() {
        let v = vocab();
        let (t, cov) = load_pretrained_embeddings("uh 0.5 0.25\n".as_bytes(), &v, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(cov.random, 2);
        assert!(t.row(0).iter().all(|x| x.abs() <= EMBEDDING_INIT_BOUND));
        assert_eq!(t.row(v.unk()), &[0.5, 0.25]);
    }

    #[test]
    fn wrong_dimension_names_both() {
        let v = vocab();
        let err = load_pretrained_embeddings("3 5\n".as_bytes(), &v, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('2'), "{msg}");
        let err = load_pretrained_embeddings("uh 1 2 3\n".as_bytes(), &v, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }
}
