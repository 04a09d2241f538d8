//! Sentence-pair and single-sentence label files.
//!
//! Pair files have three tab-separated columns `index_a  index_b  gold`;
//! label files have two, `index  label`. Indices are row numbers into the
//! embedding matrices the dataset is evaluated against.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use super::{io_err, Result, StoreError};

/// Three-way entailment classes; the discriminant is the canonical class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entailment {
    Entailment = 0,
    Contradiction = 1,
    Neutral = 2,
}

impl Entailment {
    pub const ALL: [Entailment; 3] = [
        Entailment::Entailment,
        Entailment::Contradiction,
        Entailment::Neutral,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Entailment::Entailment => "entailment",
            Entailment::Contradiction => "contradiction",
            Entailment::Neutral => "neutral",
        }
    }
}

impl FromStr for Entailment {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" => Ok(Entailment::Entailment),
            "contradiction" => Ok(Entailment::Contradiction),
            "neutral" => Ok(Entailment::Neutral),
            _ => Err(()),
        }
    }
}

impl fmt::Display for Entailment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Similarity,
    Entailment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gold {
    Score(f64),
    Class(Entailment),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord {
    pub a: usize,
    pub b: usize,
    pub gold: Gold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    kind: LabelKind,
    records: Vec<PairRecord>,
}

impl PairDataset {
    /// Builds a dataset, checking every gold value matches `kind`.
    pub fn new(kind: LabelKind, records: Vec<PairRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            let ok = matches!(
                (kind, r.gold),
                (LabelKind::Similarity, Gold::Score(s)) if s.is_finite()
            ) || matches!((kind, r.gold), (LabelKind::Entailment, Gold::Class(_)));
            if !ok {
                return Err(StoreError::Dataset(format!(
                    "record {i}: gold {:?} does not match {kind:?}",
                    r.gold
                )));
            }
        }
        Ok(Self { kind, records })
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn records(&self) -> &[PairRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Gold similarity scores; `None` for entailment data.
    pub fn scores(&self) -> Option<Vec<f64>> {
        self.records
            .iter()
            .map(|r| match r.gold {
                Gold::Score(s) => Some(s),
                Gold::Class(_) => None,
            })
            .collect()
    }

    /// Canonical class ids; `None` for similarity data.
    pub fn class_ids(&self) -> Option<Vec<usize>> {
        self.records
            .iter()
            .map(|r| match r.gold {
                Gold::Class(c) => Some(c.id()),
                Gold::Score(_) => None,
            })
            .collect()
    }

    /// Fails when any index is outside the matrices the pairs point into.
    pub fn check_indices(&self, rows_a: usize, rows_b: usize) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.a >= rows_a || r.b >= rows_b {
                return Err(StoreError::Dataset(format!(
                    "pair {i} ({}, {}) out of range for {rows_a}/{rows_b} rows",
                    r.a, r.b
                )));
            }
        }
        Ok(())
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else {
        line.split(',').map(str::trim).collect()
    }
}

fn parse_index(text: &str, line: usize, field: usize) -> Result<usize> {
    text.parse().map_err(|_| StoreError::Parse {
        line,
        field,
        text: text.to_string(),
    })
}

pub fn load_pairs(path: &Path, kind: LabelKind) -> Result<PairDataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&line);
        if fields.len() != 3 {
            return Err(StoreError::Ragged {
                line: lineno,
                expected: 3,
                found: fields.len(),
            });
        }
        let a = parse_index(fields[0], lineno, 1)?;
        let b = parse_index(fields[1], lineno, 2)?;
        let gold = match kind {
            LabelKind::Similarity => {
                let s: f64 = fields[2].parse().map_err(|_| StoreError::Parse {
                    line: lineno,
                    field: 3,
                    text: fields[2].to_string(),
                })?;
                if !s.is_finite() {
                    return Err(StoreError::NonFiniteText {
                        line: lineno,
                        field: 3,
                    });
                }
                Gold::Score(s)
            }
            LabelKind::Entailment => {
                Gold::Class(fields[2].parse().map_err(|_| StoreError::UnknownClass {
                    line: lineno,
                    text: fields[2].to_string(),
                })?)
            }
        };
        records.push(PairRecord { a, b, gold });
    }
    PairDataset::new(kind, records)
}

pub fn save_pairs(pairs: &PairDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in &pairs.records {
        let gold = match r.gold {
            Gold::Score(s) => s.to_string(),
            Gold::Class(c) => c.to_string(),
        };
        writeln!(w, "{}\t{}\t{gold}", r.a, r.b).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Single-sentence classification labels.
///
/// `class_names[id]` is the label text as it appeared in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    records: Vec<(usize, usize)>,
    n_classes: usize,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(records: Vec<(usize, usize)>, n_classes: usize) -> Result<Self> {
        let names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::with_names(records, names)
    }

    pub fn with_names(records: Vec<(usize, usize)>, class_names: Vec<String>) -> Result<Self> {
        let n_classes = class_names.len();
        if n_classes < 2 {
            return Err(StoreError::Dataset(format!(
                "need at least 2 classes, got {n_classes}"
            )));
        }
        if let Some((i, &(_, l))) = records.iter().enumerate().find(|(_, r)| r.1 >= n_classes) {
            return Err(StoreError::Dataset(format!(
                "record {i}: label {l} outside [0, {n_classes})"
            )));
        }
        Ok(Self {
            records,
            n_classes,
            class_names,
        })
    }

    pub fn records(&self) -> &[(usize, usize)] {
        &self.records
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn indices(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.0).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.1).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn check_indices(&self, rows: usize) -> Result<()> {
        match self.records.iter().position(|r| r.0 >= rows) {
            Some(i) => Err(StoreError::Dataset(format!(
                "label record {i} index {} out of range for {rows} rows",
                self.records[i].0
            ))),
            None => Ok(()),
        }
    }
}

/// Reads `index\tlabel` lines.
///
/// When every label is a non-negative integer the integers are the class ids
/// and the class count is `max + 1`. Otherwise the distinct label strings
/// are sorted and numbered in that order.
pub fn load_labels(path: &Path) -> Result<LabeledDataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut raw = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&line);
        if fields.len() != 2 {
            return Err(StoreError::Ragged {
                line: lineno,
                expected: 2,
                found: fields.len(),
            });
        }
        raw.push((parse_index(fields[0], lineno, 1)?, fields[1].to_string()));
    }
    let numeric: Option<Vec<usize>> = raw.iter().map(|(_, l)| l.parse().ok()).collect();
    match numeric {
        Some(ids) => {
            let n_classes = ids.iter().max().map_or(0, |m| m + 1);
            let records = raw.iter().map(|r| r.0).zip(ids).collect();
            LabeledDataset::new(records, n_classes)
        }
        None => {
            let names: Vec<String> = raw
                .iter()
                .map(|(_, l)| l.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let records = raw
                .iter()
                .map(|(i, l)| (*i, names.binary_search(l).unwrap()))
                .collect();
            LabeledDataset::with_names(records, names)
        }
    }
}

pub fn save_labels(labels: &LabeledDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for &(i, l) in &labels.records {
        writeln!(w, "{i}\t{}", labels.class_names[l]).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn similarity_pair() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "p.tsv", "0\t1\t4.5\n");
        let d = load_pairs(&p, LabelKind::Similarity).unwrap();
        assert_eq!(d.records()[0].gold, Gold::Score(4.5));
        assert_eq!(d.scores().unwrap(), vec![4.5]);
    }

    #[test]
    fn entailment_pair() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "p.tsv", "2\t3\tentailment\n5\t6\tNEUTRAL\n");
        let d = load_pairs(&p, LabelKind::Entailment).unwrap();
        assert_eq!(d.records()[0].gold, Gold::Class(Entailment::Entailment));
        assert_eq!(d.class_ids().unwrap(), vec![0, 2]);
        assert!(d.check_indices(6, 7).is_ok());
        assert!(d.check_indices(6, 6).is_err());
    }

    #[test]
    fn unknown_class() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "p.tsv", "0\t1\tmaybe\n");
        let err = load_pairs(&p, LabelKind::Entailment).unwrap_err();
        assert!(err.to_string().contains("unknown class"));
    }

    #[test]
    fn labels_numeric_and_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "l.tsv", "0\t2\n1\t0\n");
        let l = load_labels(&p).unwrap();
        assert_eq!(l.n_classes(), 3);
        assert_eq!(l.labels(), vec![2, 0]);

        let p = write(&dir, "n.tsv", "0\tNUM\n1\tDESC\n2\tNUM\n");
        let l = load_labels(&p).unwrap();
        assert_eq!(l.class_names(), &["DESC".to_string(), "NUM".to_string()]);
        assert_eq!(l.labels(), vec![1, 0, 1]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(LabeledDataset::new(vec![(0, 0)], 1).is_err());
        assert!(LabeledDataset::new(vec![(0, 2)], 2).is_err());
    }

    #[test]
    fn pairs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = PairDataset::new(
            LabelKind::Entailment,
            vec![PairRecord {
                a: 1,
                b: 2,
                gold: Gold::Class(Entailment::Contradiction),
            }],
        )
        .unwrap();
        let p = dir.path().join("x.tsv");
        save_pairs(&d, &p).unwrap();
        assert_eq!(load_pairs(&p, LabelKind::Entailment).unwrap(), d);
    }
}
