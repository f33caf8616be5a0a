//! Binary checkpoints: an 8-byte magic, a little-endian `u64` header length, a JSON header,
//! then raw little-endian `f64` parameter blocks in the order the header lists them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, SubwordHasher};
use crate::gazetteer::{Gazetteer, NationalityTerm};

use super::dictionary::DictionaryClassifier;
use super::recurrent::{
    dense_block_shapes, table_fingerprint, Architecture, BlockShape, EmbeddingLayer,
    RecurrentClassifier, TableSource,
};
use super::svm::{LinearSvm, SvmConfig, TfidfSvm};
use super::tfidf::{TfidfConfig, TfidfVectorizer};
use super::{Classifier, ModelError};

pub const MAGIC: &[u8; 8] = b"GMIXCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub model: ModelHeader,
    pub blocks: Vec<BlockShape>,
    /// Free-form provenance: training configuration, seed, split manifest hash.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelHeader {
    Dictionary {
        terms: Vec<NationalityTerm>,
        veto: Vec<String>,
    },
    TfidfSvm {
        tfidf: TfidfConfig,
        svm: SvmConfig,
        vocabulary: Vec<String>,
    },
    Recurrent {
        architecture: Architecture,
        embedding: EmbeddingHeader,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EmbeddingHeader {
    Learned {
        dim: usize,
        vocabulary: Vec<String>,
    },
    /// The frozen table is stored by reference; only written bucket rows are stored.
    Pretrained {
        dim: usize,
        buckets: usize,
        ngram_min: usize,
        ngram_max: usize,
        bucket_rows: Vec<usize>,
        table: Option<TableSource>,
        table_fingerprint: String,
    },
}

fn block(name: &str, shape: Vec<usize>) -> BlockShape {
    BlockShape {
        name: name.to_string(),
        shape,
    }
}

fn encode(c: &Classifier) -> (ModelHeader, Vec<BlockShape>, Vec<f64>) {
    match c {
        Classifier::Dictionary(d) => (
            ModelHeader::Dictionary {
                terms: d.gazetteer().terms().to_vec(),
                veto: d.gazetteer().veto(),
            },
            Vec::new(),
            Vec::new(),
        ),
        Classifier::TfidfSvm(m) => {
            let v = m.vectorizer.dim();
            let mut data = m.vectorizer.idf().to_vec();
            data.extend_from_slice(&m.svm.weights);
            data.push(m.svm.bias);
            (
                ModelHeader::TfidfSvm {
                    tfidf: m.vectorizer.config(),
                    svm: m.config,
                    vocabulary: m.vectorizer.terms().to_vec(),
                },
                vec![
                    block("idf", vec![v]),
                    block("svm.w", vec![v]),
                    block("svm.b", vec![1]),
                ],
                data,
            )
        }
        Classifier::Recurrent(r) => {
            let mut blocks = r.dense_blocks();
            let mut data = r.params().to_vec();
            let embedding = match r.embedding() {
                EmbeddingLayer::Learned {
                    dim, words, table, ..
                } => {
                    blocks.push(block("embedding", vec![words.len(), *dim]));
                    data.extend_from_slice(table);
                    EmbeddingHeader::Learned {
                        dim: *dim,
                        vocabulary: words.clone(),
                    }
                }
                EmbeddingLayer::Pretrained {
                    table,
                    hasher,
                    source,
                } => {
                    let rows = hasher.stored_rows();
                    blocks.push(block("subword", vec![rows.len(), hasher.dim()]));
                    for (_, row) in &rows {
                        data.extend_from_slice(row);
                    }
                    let (ngram_min, ngram_max) = hasher.ngram_range();
                    EmbeddingHeader::Pretrained {
                        dim: hasher.dim(),
                        buckets: hasher.buckets(),
                        ngram_min,
                        ngram_max,
                        bucket_rows: rows.iter().map(|(b, _)| *b).collect(),
                        table: source.clone(),
                        table_fingerprint: table_fingerprint(table),
                    }
                }
            };
            (
                ModelHeader::Recurrent {
                    architecture: r.architecture().clone(),
                    embedding,
                },
                blocks,
                data,
            )
        }
    }
}

pub fn write_checkpoint<W: Write>(
    c: &Classifier,
    metadata: serde_json::Value,
    mut out: W,
) -> std::io::Result<()> {
    let (model, blocks, data) = encode(c);
    let header = Header {
        format_version: FORMAT_VERSION,
        model,
        blocks,
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    for v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()
}

pub fn save_checkpoint(
    c: &Classifier,
    metadata: serde_json::Value,
    path: &Path,
) -> Result<(), ModelError> {
    let io = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_checkpoint(c, metadata, BufWriter::new(file)).map_err(io)
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

/// Reads the header and the named parameter blocks.
pub fn read_raw<R: Read>(mut input: R) -> Result<(Header, Vec<Vec<f64>>), ModelError> {
    let io = |e: std::io::Error| bad(format!("truncated or unreadable: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 32 {
        return Err(bad(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    input.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut blocks = Vec::with_capacity(header.blocks.len());
    let mut buf = [0u8; 8];
    for b in &header.blocks {
        let mut values = Vec::with_capacity(b.len());
        for _ in 0..b.len() {
            input
                .read_exact(&mut buf)
                .map_err(|_| bad(format!("block {} is truncated", b.name)))?;
            values.push(f64::from_le_bytes(buf));
        }
        blocks.push(values);
    }
    if input.read(&mut buf).map_err(io)? != 0 {
        return Err(bad("trailing bytes after the last block"));
    }
    Ok((header, blocks))
}

fn expect_blocks(found: &[BlockShape], expected: &[BlockShape]) -> Result<(), ModelError> {
    if found != expected {
        let describe = |v: &[BlockShape]| {
            v.iter()
                .map(|b| format!("{}{:?}", b.name, b.shape))
                .collect::<Vec<_>>()
                .join(", ")
        };
        return Err(bad(format!(
            "shape mismatch: expected [{}], found [{}]",
            describe(expected),
            describe(found)
        )));
    }
    Ok(())
}

/// Decodes a checkpoint. Pretrained-embedding models need their frozen table: pass it in,
/// or leave `table` empty to load it from the path recorded at training time. Either way
/// its fingerprint must match the one stored.
pub fn read_checkpoint<R: Read>(
    input: R,
    table: Option<Arc<EmbeddingTable<f64>>>,
) -> Result<(Classifier, Header), ModelError> {
    let (header, mut blocks) = read_raw(input)?;
    let classifier = match &header.model {
        ModelHeader::Dictionary { terms, veto } => {
            expect_blocks(&header.blocks, &[])?;
            let mut g = Gazetteer::new(terms.clone()).map_err(|e| bad(e.to_string()))?;
            g.set_veto(veto);
            Classifier::Dictionary(DictionaryClassifier::new(g))
        }
        ModelHeader::TfidfSvm {
            tfidf,
            svm,
            vocabulary,
        } => {
            let v = vocabulary.len();
            expect_blocks(
                &header.blocks,
                &[
                    block("idf", vec![v]),
                    block("svm.w", vec![v]),
                    block("svm.b", vec![1]),
                ],
            )?;
            let bias = blocks[2][0];
            let weights = std::mem::take(&mut blocks[1]);
            let idf = std::mem::take(&mut blocks[0]);
            Classifier::TfidfSvm(TfidfSvm {
                vectorizer: TfidfVectorizer::from_parts(*tfidf, vocabulary.clone(), idf)?,
                svm: LinearSvm { weights, bias },
                config: *svm,
            })
        }
        ModelHeader::Recurrent {
            architecture,
            embedding,
        } => {
            let (layer, emb_block) = match embedding {
                EmbeddingHeader::Learned { dim, vocabulary } => {
                    let index = vocabulary
                        .iter()
                        .enumerate()
                        .map(|(i, w)| (w.clone(), i))
                        .collect();
                    let table = blocks.last().cloned().unwrap_or_default();
                    (
                        EmbeddingLayer::Learned {
                            dim: *dim,
                            words: vocabulary.clone(),
                            index,
                            table,
                        },
                        block("embedding", vec![vocabulary.len(), *dim]),
                    )
                }
                EmbeddingHeader::Pretrained {
                    dim,
                    buckets,
                    ngram_min,
                    ngram_max,
                    bucket_rows,
                    table: source,
                    table_fingerprint: fingerprint,
                } => {
                    let table = match (table.clone(), source) {
                        (Some(t), _) => t,
                        (None, Some(src)) => {
                            Arc::new(EmbeddingTable::load_vec(Path::new(&src.path))?.0)
                        }
                        (None, None) => {
                            return Err(bad("the pretrained table is not recorded; supply it"))
                        }
                    };
                    if &table_fingerprint(&table) != fingerprint {
                        return Err(bad(
                            "pretrained table does not match the one used for training",
                        ));
                    }
                    let data = blocks.last().cloned().unwrap_or_default();
                    if data.len() != bucket_rows.len() * dim {
                        return Err(bad("subword block does not match its bucket list"));
                    }
                    let rows = bucket_rows
                        .iter()
                        .zip(data.chunks(*dim.max(&1)))
                        .map(|(&b, r)| (b, r.to_vec()));
                    let hasher =
                        SubwordHasher::from_rows(*dim, *buckets, *ngram_min, *ngram_max, rows)?;
                    (
                        EmbeddingLayer::Pretrained {
                            table,
                            hasher,
                            source: source.clone(),
                        },
                        block("subword", vec![bucket_rows.len(), *dim]),
                    )
                }
            };
            let mut expected = dense_block_shapes(architecture, layer.dim());
            expected.push(emb_block);
            expect_blocks(&header.blocks, &expected)?;
            blocks.pop();
            let params: Vec<f64> = blocks.into_iter().flatten().collect();
            Classifier::Recurrent(RecurrentClassifier::from_parts(
                architecture.clone(),
                layer,
                params,
            )?)
        }
    };
    Ok((classifier, header))
}

pub fn load_checkpoint(
    path: &Path,
    table: Option<Arc<EmbeddingTable<f64>>>,
) -> Result<(Classifier, Header), ModelError> {
    let file = File::open(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(BufReader::new(file), table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gazetteer::{TermKind, TermSource};
    use crate::models::recurrent::{Readout, TrainConfig};
    use crate::models::Example;

    fn examples() -> Vec<Example> {
        (0..12)
            .map(|i| {
                let pos = i % 2 == 0;
                Example::new(
                    &["viele", if pos { "briten" } else { "familien" }, "hier"],
                    pos,
                )
            })
            .collect()
    }

    fn bytes(c: &Classifier) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(c, serde_json::json!({"seed": 1}), &mut out).unwrap();
        out
    }

    fn arch() -> Architecture {
        Architecture {
            layers: 1,
            hidden: 3,
            bidirectional: true,
            readout: Readout::Final,
            max_tokens: 16,
        }
    }

    #[test]
    fn every_family_round_trips() {
        let ex = examples();
        let g = Gazetteer::new(vec![NationalityTerm::new(
            "Briten",
            "GB".parse().unwrap(),
            TermKind::Demonym,
            TermSource::Seed,
        )])
        .unwrap();
        let svm = TfidfSvm::train(&ex, TfidfConfig::default(), SvmConfig::default()).unwrap();
        let mut lstm = RecurrentClassifier::learned(arch(), 3, &ex, 1, 4).unwrap();
        lstm.train(
            &ex,
            &ex,
            &TrainConfig {
                max_epochs: 2,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        for c in [
            Classifier::Dictionary(DictionaryClassifier::new(g)),
            Classifier::TfidfSvm(svm),
            Classifier::Recurrent(lstm),
        ] {
            let b = bytes(&c);
            let (back, header) = read_checkpoint(b.as_slice(), None).unwrap();
            assert_eq!(header.metadata["seed"], 1);
            assert_eq!(bytes(&back), b, "{}", c.kind());
            for e in &ex {
                assert_eq!(back.predict(&e.tokens), c.predict(&e.tokens));
            }
        }
    }

    #[test]
    fn pretrained_models_verify_their_table() {
        let rows = vec![
            ("viele".to_string(), vec![0.1, 0.2]),
            ("hier".to_string(), vec![0.3, -0.1]),
        ];
        let (table, _) = EmbeddingTable::from_rows(2, rows).unwrap();
        let table = Arc::new(table);
        let mut hasher = SubwordHasher::new(2, 16).unwrap();
        hasher.row_mut(3)[1] = 0.5;
        let m = RecurrentClassifier::pretrained(arch(), table.clone(), hasher, None, 0).unwrap();
        let c = Classifier::Recurrent(m);
        let b = bytes(&c);
        assert!(matches!(
            read_checkpoint(b.as_slice(), None),
            Err(ModelError::Checkpoint(_))
        ));
        let (back, _) = read_checkpoint(b.as_slice(), Some(table)).unwrap();
        assert_eq!(bytes(&back), b);
        let (other, _) =
            EmbeddingTable::from_rows(2, vec![("viele".to_string(), vec![0.0, 0.2])]).unwrap();
        let err = read_checkpoint(b.as_slice(), Some(Arc::new(other))).unwrap_err();
        assert!(err.to_string().contains("does not match"));
    }

    #[test]
    fn shape_mismatches_and_corruption_are_rejected() {
        let ex = examples();
        let c = Classifier::Recurrent(RecurrentClassifier::learned(arch(), 3, &ex, 1, 4).unwrap());
        let b = bytes(&c);
        let (mut header, blocks) = read_raw(b.as_slice()).unwrap();
        header.blocks[0].shape = vec![4 * 3, 2];
        let mut forged = Vec::new();
        let json = serde_json::to_vec(&header).unwrap();
        forged.extend_from_slice(MAGIC);
        forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
        forged.extend_from_slice(&json);
        for v in blocks.into_iter().flatten() {
            forged.extend_from_slice(&v.to_le_bytes());
        }
        let err = read_checkpoint(forged.as_slice(), None).unwrap_err();
        assert!(matches!(err, ModelError::Checkpoint(_)), "{err}");

        assert!(read_checkpoint(&b[..b.len() - 3], None).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice(), None).is_err());
        assert!(read_checkpoint(&b"NOTACKPT"[..], None).is_err());
    }
}
