//! On-disk tensor formats.
//!
//! A single tensor is stored as
//!
//! ```text
//! "GGT1" | u8 dtype (0 = f32, 1 = f64) | u32 rank | u32 dims[rank] | row-major payload
//! ```
//!
//! with every integer and float little-endian. Named tensor bundles (layer
//! weights) use a `"GGTC"` container: a manifest of `(name, shape)` entries
//! followed by one complete GGT1 record per entry.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{GgError, Result};
use crate::graph::FeatureSet;
use crate::matrix::Matrix;

pub const TENSOR_MAGIC: &[u8; 4] = b"GGT1";
pub const CONTAINER_MAGIC: &[u8; 4] = b"GGTC";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

/// A dense tensor read from or written to a GGT1 record. Values are held in
/// `f64`; `dtype` records the storage precision.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(GgError::Format(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { dtype: DType::F64, shape, data })
    }

    pub fn from_matrix(m: &Matrix<f64>) -> Self {
        Self { dtype: DType::F64, shape: vec![m.rows(), m.cols()], data: m.as_slice().to_vec() }
    }

    pub fn vector(v: &[f64]) -> Self {
        Self { dtype: DType::F64, shape: vec![v.len()], data: v.to_vec() }
    }

    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    /// Interprets a rank-2 tensor as a matrix (a rank-1 tensor becomes one column).
    pub fn into_matrix(self) -> Result<Matrix<f64>> {
        match self.shape.as_slice() {
            [r, c] => Matrix::from_vec(*r, *c, self.data),
            [r] => Matrix::from_vec(*r, 1, self.data),
            s => Err(GgError::Format(format!("expected a rank-2 tensor, got shape {s:?}"))),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&[self.dtype as u8])?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            let d = u32::try_from(d).map_err(|_| GgError::Format(format!("dimension {d} exceeds u32")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        match self.dtype {
            DType::F32 => self.data.iter().for_each(|v| buf.extend((*v as f32).to_le_bytes())),
            DType::F64 => self.data.iter().for_each(|v| buf.extend(v.to_le_bytes())),
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(GgError::Format(format!("bad tensor magic {magic:?}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let dtype = match tag[0] {
            0 => DType::F32,
            1 => DType::F64,
            t => return Err(GgError::Format(format!("unknown dtype tag {t}"))),
        };
        let rank = read_u32(r)? as usize;
        if rank > 8 {
            return Err(GgError::Format(format!("implausible tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let width = if dtype == DType::F32 { 4 } else { 8 };
        let mut raw = vec![0u8; n * width];
        r.read_exact(&mut raw)?;
        let data = match dtype {
            DType::F32 => raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            DType::F64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        };
        Ok(Self { dtype, shape, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, t.to_bytes())?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Tensor::from_bytes(&std::fs::read(path)?)
}

/// Ordered collection of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorBundle {
    pub entries: Vec<(String, Tensor)>,
}

impl TensorBundle {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| GgError::Format(format!("bundle has no tensor named '{name}'")))
    }

    /// Names and shapes, in storage order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.entries.iter().map(|(n, t)| (n.clone(), t.shape.clone())).collect()
    }

    /// `"GGTC" | u32 count | count x (u16 name_len, name, u32 rank, u32 dims[rank]) | count x GGT1`
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CONTAINER_MAGIC);
        out.extend((self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            let len = u16::try_from(name.len()).map_err(|_| GgError::Format("tensor name too long".into()))?;
            out.extend(len.to_le_bytes());
            out.extend(name.as_bytes());
            out.extend((t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend((d as u32).to_le_bytes());
            }
        }
        for (_, t) in &self.entries {
            t.write_to(&mut out)?;
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let r = &mut bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CONTAINER_MAGIC {
            return Err(GgError::Format(format!("bad container magic {magic:?}")));
        }
        let count = read_u32(r)? as usize;
        let mut manifest = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let mut lb = [0u8; 2];
            r.read_exact(&mut lb)?;
            let mut name = vec![0u8; u16::from_le_bytes(lb) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| GgError::Format("tensor name is not UTF-8".into()))?;
            let rank = read_u32(r)? as usize;
            let shape = (0..rank).map(|_| read_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            manifest.push((name, shape));
        }
        let mut entries = Vec::with_capacity(manifest.len());
        for (name, shape) in manifest {
            let t = Tensor::read_from(r)?;
            if t.shape != shape {
                return Err(GgError::Format(format!(
                    "tensor '{name}' has shape {:?}, manifest says {shape:?}",
                    t.shape
                )));
            }
            entries.push((name, t));
        }
        Ok(Self { entries })
    }
}

/// Headered CSV, one row per node.
pub fn features_from_csv(text: &str) -> Result<FeatureSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| GgError::Format(format!("not a number: '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(GgError::Format("ragged CSV rows".into()));
    }
    FeatureSet::from_rows(&rows)
}

pub fn features_to_csv(f: &FeatureSet) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record((0..f.dim()).map(|j| format!("f{j}")))?;
    for i in 0..f.len() {
        w.write_record(f.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    let bytes = w.into_inner().map_err(|e| GgError::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Reads a feature set, sniffing GGT1 by its magic bytes and falling back to CSV.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(TENSOR_MAGIC) {
        let t = Tensor::from_bytes(&bytes)?;
        FeatureSet::new(t.into_matrix()?)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| GgError::Format("feature file is neither GGT1 nor UTF-8 CSV".into()))?;
        features_from_csv(&text)
    }
}

pub fn write_features(path: impl AsRef<Path>, f: &FeatureSet) -> Result<()> {
    write_tensor(path, &Tensor::from_matrix(f.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.0]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"GGT1");
        assert_eq!(b[4], 1);
        assert_eq!(&b[5..9], &2u32.to_le_bytes());
        assert_eq!(&b[9..13], &1u32.to_le_bytes());
        assert_eq!(&b[13..17], &2u32.to_le_bytes());
        assert_eq!(&b[17..25], &1.0f64.to_le_bytes());
        assert_eq!(b.len(), 33);
    }

    #[test]
    fn f32_payload_round_trips_through_f64() {
        let t = Tensor::new(vec![3], vec![0.5, 1.25, -3.0]).unwrap().with_dtype(DType::F32);
        let b = t.to_bytes();
        assert_eq!(b[4], 0);
        assert_eq!(b.len(), 4 + 1 + 4 + 4 + 12);
        assert_eq!(Tensor::from_bytes(&b).unwrap(), t);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Tensor::from_bytes(b"NOPE").is_err());
        assert!(Tensor::from_bytes(b"GGT1\x07\x00\x00\x00\x00").is_err());
        // truncated payload
        let mut b = Tensor::vector(&[1.0, 2.0]).to_bytes();
        b.pop();
        assert!(Tensor::from_bytes(&b).is_err());
    }

    #[test]
    fn bundle_round_trip_and_manifest() {
        let mut bundle = TensorBundle::default();
        bundle.push("a", Tensor::vector(&[1.0, 2.0]));
        bundle.push("m", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let back = TensorBundle::from_bytes(&bundle.to_bytes().unwrap()).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.manifest()[1], ("m".to_string(), vec![2, 2]));
        assert!(back.get("zzz").is_err());
    }

    #[test]
    fn csv_with_header() {
        let f = features_from_csv("x,y\n1,0\n0,1\n-1,0.5\n").unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.row(2), &[-1.0, 0.5]);
        let again = features_from_csv(&features_to_csv(&f).unwrap()).unwrap();
        assert_eq!(again, f);
        assert!(features_from_csv("x\nabc\n").is_err());
    }
}
