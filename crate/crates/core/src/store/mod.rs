//! Embedding and dataset ingestion, persistence and synthetic corpora.
//!
//! Matrices are kept in memory as row-major `f64` and written to disk as
//! little-endian `f32` in the EMB1 container:
//!
//! | bytes   | content                                  |
//! |---------|------------------------------------------|
//! | 0..4    | ASCII `EMB1`                             |
//! | 4..8    | row count, `u32` little-endian           |
//! | 8..12   | column count, `u32` little-endian        |
//! | 12..    | `rows * cols` binary32 values, row-major |
//!
//! No padding and no trailing bytes are allowed.

mod datasets;
mod report;
mod synth;

pub use datasets::{
    load_labels, load_pairs, save_labels, save_pairs, Entailment, Gold, LabelKind, LabeledDataset,
    PairDataset, PairRecord,
};
pub use report::{EvalReport, EvalRow, Setting};
pub use synth::{synth_corpus, synth_split, SynthCorpus};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use faer::{Mat, MatRef};
use thiserror::Error;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
const EMB_HEADER_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },
    #[error("truncated header: {len} bytes, need 12")]
    TruncatedHeader { len: usize },
    #[error(
        "truncated payload: header declares {rows}x{cols} ({expected} bytes), found {found} bytes"
    )]
    TruncatedPayload {
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },
    #[error("{extra} trailing bytes after payload at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("non-finite value at row {row}, column {col} (byte {offset})")]
    NonFiniteBinary {
        row: usize,
        col: usize,
        offset: usize,
    },
    #[error("line {line}, field {field}: non-finite value")]
    NonFiniteText { line: usize, field: usize },
    #[error("line {line}, field {field}: cannot parse {text:?}")]
    Parse {
        line: usize,
        field: usize,
        text: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: unknown class {text:?}")]
    UnknownClass { line: usize, text: String },
    #[error("invalid matrix: {0}")]
    Shape(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dense row-major matrix of sentence embeddings.
///
/// Every entry is finite and `dim >= 1`; zero rows are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(StoreError::Shape("dimension must be at least 1".into()));
        }
        if values.len() != rows * dim {
            return Err(StoreError::Shape(format!(
                "{} values for a {rows}x{dim} matrix",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::Shape(format!(
                "non-finite value at row {}, column {}",
                i / dim,
                i % dim
            )));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(StoreError::Shape(format!(
                "row {i} has {} entries, expected {dim}",
                r.len()
            )));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            rows,
            dim,
            values: vec![0.0; rows * dim],
        }
    }

    /// Copies a faer matrix. Panics on non-finite entries, which only arise
    /// from a numerical bug upstream.
    pub fn from_mat(m: MatRef<'_, f64>) -> Self {
        let (rows, dim) = (m.nrows(), m.ncols());
        let mut values = Vec::with_capacity(rows * dim);
        for i in 0..rows {
            for j in 0..dim {
                values.push(m[(i, j)]);
            }
        }
        Self::new(rows, dim, values).expect("matrix entries must be finite")
    }

    /// Zero-copy row-major view.
    pub fn as_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.values, self.rows, self.dim)
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.dim, |i, j| self.values[i * self.dim + j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    /// Row-wise concatenation `[self; other]`.
    pub fn vstack(&self, other: &EmbeddingMatrix) -> Result<Self> {
        if self.dim != other.dim {
            return Err(StoreError::Shape(format!(
                "cannot stack dimension {} onto {}",
                other.dim, self.dim
            )));
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Ok(Self {
            rows: self.rows + other.rows,
            dim: self.dim,
            values,
        })
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            values,
        }
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for row in self.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let n = self.rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// On-disk embedding formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Emb1,
    Tsv,
}

impl Format {
    /// `.tsv`, `.csv` and `.txt` are text; everything else is EMB1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv" | "csv" | "txt") => Format::Tsv,
            _ => Format::Emb1,
        }
    }
}

pub fn load_embeddings(path: &Path, format: Format) -> Result<EmbeddingMatrix> {
    match format {
        Format::Emb1 => {
            let file = File::open(path).map_err(io_err(path))?;
            read_emb1(BufReader::new(file)).map_err(|e| match e {
                StoreError::Io { source, .. } => StoreError::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => other,
            })
        }
        Format::Tsv => {
            let file = File::open(path).map_err(io_err(path))?;
            read_tsv(BufReader::new(file))
        }
    }
}

/// Writes `m` as EMB1 (entries narrowed to `f32`).
pub fn save_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_emb1(m, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_emb1<W: Write>(m: &EmbeddingMatrix, w: &mut W) -> std::io::Result<()> {
    let rows = u32::try_from(m.rows).map_err(|_| overflow("row count"))?;
    let cols = u32::try_from(m.dim).map_err(|_| overflow("column count"))?;
    w.write_all(EMB_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in &m.values {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn overflow(what: &str) -> std::io::Error {
    std::io::Error::new(
        std::io::ErrorKind::InvalidInput,
        format!("{what} exceeds u32"),
    )
}

pub fn read_emb1<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let stream = Path::new("<stream>");
    let mut header = [0u8; EMB_HEADER_LEN];
    let mut got = 0;
    while got < EMB_HEADER_LEN {
        let n = r.read(&mut header[got..]).map_err(io_err(stream))?;
        if n == 0 {
            break;
        }
        got += n;
    }
    if got >= 4 && &header[..4] != EMB_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&header[..4]);
        return Err(StoreError::BadMagic { found });
    }
    if got < EMB_HEADER_LEN {
        return Err(StoreError::TruncatedHeader { len: got });
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if cols == 0 {
        return Err(StoreError::Shape("column count is zero".into()));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| StoreError::Shape(format!("{rows}x{cols} overflows")))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(io_err(stream))?;
    if payload.len() < expected {
        return Err(StoreError::TruncatedPayload {
            rows,
            cols,
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(StoreError::TrailingBytes {
            offset: EMB_HEADER_LEN + expected,
            extra: payload.len() - expected,
        });
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(StoreError::NonFiniteBinary {
                row: i / cols,
                col: i % cols,
                offset: EMB_HEADER_LEN + 4 * i,
            });
        }
        values.push(f64::from(v));
    }
    Ok(EmbeddingMatrix {
        rows,
        dim: cols,
        values,
    })
}

/// Parses delimited text. The delimiter (tab or comma) is detected from the
/// first non-empty line; blank lines are skipped.
pub fn read_tsv<R: BufRead>(r: R) -> Result<EmbeddingMatrix> {
    let stream = Path::new("<stream>");
    let mut delim: Option<char> = None;
    let mut dim = 0;
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(stream))?;
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let d = *delim.get_or_insert(if line.contains('\t') {
            '\t'
        } else if line.contains(',') {
            ','
        } else {
            '\t'
        });
        let start = values.len();
        for (f, text) in line.split(d).enumerate() {
            let text = text.trim();
            let v: f64 = text.parse().map_err(|_| StoreError::Parse {
                line: lineno,
                field: f + 1,
                text: text.to_string(),
            })?;
            if !v.is_finite() {
                return Err(StoreError::NonFiniteText {
                    line: lineno,
                    field: f + 1,
                });
            }
            values.push(v);
        }
        let found = values.len() - start;
        if rows == 0 {
            dim = found;
        } else if found != dim {
            return Err(StoreError::Ragged {
                line: lineno,
                expected: dim,
                found,
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(StoreError::Shape(
            "empty text matrix: dimension cannot be inferred".into(),
        ));
    }
    EmbeddingMatrix::new(rows, dim, values)
}

/// Writes tab-separated text with full `f64` precision.
pub fn save_tsv(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join("\t")).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn emb1_bytes(rows: u32, cols: u32, vals: &[f32]) -> Vec<u8> {
        let mut b = EMB_MAGIC.to_vec();
        b.extend_from_slice(&rows.to_le_bytes());
        b.extend_from_slice(&cols.to_le_bytes());
        for v in vals {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn decodes_declared_header() {
        let bytes = emb1_bytes(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = read_emb1(Cursor::new(bytes)).unwrap();
        assert_eq!((m.rows(), m.dim()), (2, 3));
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn short_payload_is_truncated() {
        let bytes = emb1_bytes(2, 3, &[1.0; 5]);
        let err = read_emb1(Cursor::new(bytes)).unwrap_err();
        assert!(matches!(err, StoreError::TruncatedPayload { .. }));
        assert!(err.to_string().contains("truncated payload"));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = emb1_bytes(1, 1, &[1.0]);
        bytes.push(0);
        assert!(matches!(
            read_emb1(Cursor::new(bytes)),
            Err(StoreError::TrailingBytes {
                offset: 16,
                extra: 1
            })
        ));
    }

    #[test]
    fn wrong_magic_rejected_before_payload() {
        // Header-only buffer: a payload read would report truncation instead.
        let mut bytes = emb1_bytes(1000, 1000, &[]);
        bytes[..4].copy_from_slice(b"EMB2");
        assert!(matches!(
            read_emb1(Cursor::new(bytes)),
            Err(StoreError::BadMagic { found }) if &found == b"EMB2"
        ));
    }

    #[test]
    fn non_finite_reports_position() {
        let bytes = emb1_bytes(2, 2, &[0.0, 1.0, f32::NAN, 2.0]);
        match read_emb1(Cursor::new(bytes)).unwrap_err() {
            StoreError::NonFiniteBinary { row, col, offset } => {
                assert_eq!((row, col, offset), (1, 0, 20));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn tsv_parses_and_detects_delimiter() {
        let m = read_tsv(Cursor::new("1.0\t2.0\n3.0\t4.0")).unwrap();
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0]);
        let m = read_tsv(Cursor::new("1,2,3\n4,5,6\n")).unwrap();
        assert_eq!((m.rows(), m.dim()), (2, 3));
    }

    #[test]
    fn tsv_ragged_row_reports_line() {
        let err = read_tsv(Cursor::new("1\t2\n\n3\n")).unwrap_err();
        assert!(matches!(
            err,
            StoreError::Ragged {
                line: 3,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn tsv_rejects_nan() {
        assert!(matches!(
            read_tsv(Cursor::new("1\tNaN\n")),
            Err(StoreError::NonFiniteText { line: 1, field: 2 })
        ));
    }

    #[test]
    fn save_load_pi() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pi.emb");
        let m = EmbeddingMatrix::new(1, 1, vec![std::f64::consts::PI]).unwrap();
        save_embeddings(&m, &p).unwrap();
        let back = load_embeddings(&p, Format::Emb1).unwrap();
        assert!((back.values()[0] - std::f64::consts::PI).abs() <= 1.2e-7);
    }

    #[test]
    fn save_load_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.emb");
        let m = EmbeddingMatrix::zeros(0, 5);
        save_embeddings(&m, &p).unwrap();
        assert_eq!(load_embeddings(&p, Format::Emb1).unwrap(), m);
    }

    #[test]
    fn header_bytes_are_little_endian_counts() {
        let m = EmbeddingMatrix::zeros(3, 2);
        let mut buf = Vec::new();
        write_emb1(&m, &mut buf).unwrap();
        assert_eq!(&buf[4..8], &3u32.to_le_bytes());
        assert_eq!(&buf[8..12], &2u32.to_le_bytes());
        assert_eq!(buf.len(), 12 + 6 * 4);
    }

    #[test]
    fn vstack_and_select() {
        let a = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = a.vstack(&b).unwrap();
        assert_eq!(s.rows(), 3);
        assert_eq!(s.select_rows(&[2, 0]).values(), &[5.0, 6.0, 1.0, 2.0]);
        assert!(a.vstack(&EmbeddingMatrix::zeros(1, 3)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_within_f32_precision(
                rows in 0usize..6,
                dim in 1usize..6,
                seed in proptest::collection::vec(-1e6f64..1e6, 36),
            ) {
                let vals: Vec<f64> = seed.into_iter().take(rows * dim).collect();
                prop_assume!(vals.len() == rows * dim);
                let m = EmbeddingMatrix::new(rows, dim, vals).unwrap();
                let mut buf = Vec::new();
                write_emb1(&m, &mut buf).unwrap();
                let back = read_emb1(Cursor::new(buf)).unwrap();
                prop_assert_eq!(back.rows(), rows);
                for (a, b) in m.values().iter().zip(back.values()) {
                    prop_assert!((a - b).abs() <= a.abs() * f64::from(f32::EPSILON) / 2.0 + f64::from(f32::MIN_POSITIVE));
                }
            }
        }
    }
}
