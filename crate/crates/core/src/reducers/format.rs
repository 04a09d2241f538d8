//! PRJ1 model files.
//!
//! ```text
//! 0..4   ASCII "PRJ1"
//! 4      method tag: 0 pca, 1 svd, 2 kpca, 3 grp, 4 autoencoder
//! 5..9   input dim, u32 LE
//! 9..13  output dim, u32 LE
//! 13..   payload, f64 LE unless noted; matrices column-major
//!        pca:  mean[d], U[d x k]
//!        svd:  V_k[d x k]
//!        kpca: kind u8, gamma, degree u32, coef0, n u32, train[n x d]
//!              row-major, eigenvalues[k], alphas[n x k], row_means[n],
//!              grand_mean
//!        grp:  seed u64 (R is regenerated)
//!        ae:   W1[k x d], b1[k], W2[d x k], b2[d], mean[d]
//! ```
//!
//! Every `f64` is stored bit-exactly, so a loaded model transforms
//! identically to the one that was saved.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;

use super::{
    fit_grp, AutoencoderModel, KernelKind, KernelSpec, KpcaModel, Method, PcaModel,
    ProjectionModel, ReducerError, Result, SvdModel,
};
use crate::store::EmbeddingMatrix;

pub const MODEL_MAGIC: &[u8; 4] = b"PRJ1";

struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| ReducerError::Format(format!("{v} does not fit in u32")))?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn slice(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }

    fn mat(&mut self, m: &Mat<f64>) {
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.f64(m[(i, j)]);
            }
        }
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                ReducerError::Format(format!(
                    "truncated payload: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| ReducerError::Format("declared size overflows".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn mat(&mut self, rows: usize, cols: usize) -> Result<Mat<f64>> {
        let v = self.vec(
            rows.checked_mul(cols)
                .ok_or_else(|| ReducerError::Format("declared size overflows".into()))?,
        )?;
        Ok(Mat::from_fn(rows, cols, |i, j| v[j * rows + i]))
    }
}

/// Serializes `model` to bytes.
pub fn write_model(model: &ProjectionModel) -> Result<Vec<u8>> {
    let mut e = Encoder {
        buf: MODEL_MAGIC.to_vec(),
    };
    e.u8(model.method().tag());
    e.u32(model.input_dim())?;
    e.u32(model.output_dim())?;
    match model {
        ProjectionModel::Pca(m) => {
            e.slice(&m.mean);
            e.mat(&m.components);
        }
        ProjectionModel::Svd(m) => e.mat(&m.components),
        ProjectionModel::Kpca(m) => {
            e.u8(m.kernel.kind as u8);
            e.f64(m.kernel.gamma);
            e.u32(m.kernel.degree as usize)?;
            e.f64(m.kernel.coef0);
            e.u32(m.train.rows())?;
            e.slice(m.train.values());
            e.slice(&m.eigenvalues);
            e.mat(&m.alphas);
            e.slice(&m.row_means);
            e.f64(m.grand_mean);
        }
        ProjectionModel::Grp(m) => e.u64(m.seed),
        ProjectionModel::Autoencoder(m) => {
            e.mat(&m.w1);
            e.slice(&m.b1);
            e.mat(&m.w2);
            e.slice(&m.b2);
            e.slice(&m.mean);
        }
    }
    Ok(e.buf)
}

/// Parses a PRJ1 buffer.
pub fn read_model(bytes: &[u8]) -> Result<ProjectionModel> {
    if bytes.len() < 4 {
        return Err(ReducerError::Format(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != MODEL_MAGIC {
        if &bytes[..3] == b"PRJ" {
            return Err(ReducerError::Version(
                String::from_utf8_lossy(&bytes[..4]).into_owned(),
            ));
        }
        return Err(ReducerError::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let mut dec = Decoder { bytes, pos: 4 };
    let tag = dec.u8()?;
    let d = dec.u32()?;
    let k = dec.u32()?;
    if d == 0 || k == 0 {
        return Err(ReducerError::Format(format!(
            "invalid dimensions {d} -> {k}"
        )));
    }
    let method = Method::ALL
        .into_iter()
        .find(|m| m.tag() == tag)
        .ok_or_else(|| ReducerError::Format(format!("unknown method tag {tag}")))?;
    let model = match method {
        Method::Pca => {
            let mean = dec.vec(d)?;
            let components = dec.mat(d, k)?;
            ProjectionModel::Pca(PcaModel { mean, components })
        }
        Method::Svd => ProjectionModel::Svd(SvdModel {
            components: dec.mat(d, k)?,
        }),
        Method::Kpca => {
            let kind_tag = dec.u8()?;
            let kind = KernelKind::from_tag(kind_tag)
                .ok_or_else(|| ReducerError::Format(format!("unknown kernel tag {kind_tag}")))?;
            let gamma = dec.f64()?;
            let degree = dec.u32()? as u32;
            let coef0 = dec.f64()?;
            let kernel = KernelSpec {
                kind,
                gamma,
                degree,
                coef0,
            };
            let n = dec.u32()?;
            let train_vals = dec.vec(
                n.checked_mul(d)
                    .ok_or_else(|| ReducerError::Format("declared size overflows".into()))?,
            )?;
            let train = EmbeddingMatrix::new(n, d, train_vals)
                .map_err(|e| ReducerError::Format(format!("kpca support points: {e}")))?;
            let eigenvalues = dec.vec(k)?;
            let alphas = dec.mat(n, k)?;
            let row_means = dec.vec(n)?;
            let grand_mean = dec.f64()?;
            ProjectionModel::Kpca(KpcaModel {
                train,
                kernel,
                eigenvalues,
                alphas,
                row_means,
                grand_mean,
            })
        }
        Method::Grp => {
            let seed = dec.u64()?;
            ProjectionModel::Grp(
                fit_grp(d, k, seed)
                    .map_err(|e| ReducerError::Format(format!("grp parameters: {e}")))?,
            )
        }
        Method::Autoencoder => {
            let w1 = dec.mat(k, d)?;
            let b1 = dec.vec(k)?;
            let w2 = dec.mat(d, k)?;
            let b2 = dec.vec(d)?;
            let mean = dec.vec(d)?;
            ProjectionModel::Autoencoder(AutoencoderModel {
                w1,
                b1,
                w2,
                b2,
                mean,
            })
        }
    };
    if dec.pos != bytes.len() {
        return Err(ReducerError::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - dec.pos
        )));
    }
    Ok(model)
}

pub fn save_model(model: &ProjectionModel, path: &Path) -> Result<()> {
    let io = |source| ReducerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = write_model(model)?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_model(path: &Path) -> Result<ProjectionModel> {
    let io = |source| ReducerError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io)?
        .read_to_end(&mut bytes)
        .map_err(io)?;
    read_model(&bytes)
}
