//! Flat tensor file format.
//!
//! Layout: magic `TNSR` (4 bytes), version `u32` LE, dtype `u8`
//! (0 = f32, 1 = f64, 2 = u8), rank `u8`, dims as `u64` LE, then the
//! payload row-major little-endian. Multiple tensors may be concatenated in
//! one file; readers consume records until EOF.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    U8,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
            Dtype::U8 => 2,
        }
    }

    fn from_code(c: u8) -> Result<Dtype> {
        match c {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::U8),
            other => Err(CliError::format(format!("unknown dtype code {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn from_f64(dims: Vec<u64>, data: Vec<f64>) -> Result<Tensor> {
        let expect: u64 = dims.iter().product();
        if data.len() as u64 != expect {
            return Err(CliError::format(format!(
                "tensor payload {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Tensor { dims, data: TensorData::F64(data) })
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
            TensorData::U8(_) => Dtype::U8,
        }
    }

    pub fn element_count(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    /// Convert the payload to f64 (u8 maps to [0, 255]).
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|x| *x as f64).collect(),
            TensorData::F64(v) => v.clone(),
            TensorData::U8(v) => v.iter().map(|x| *x as f64).collect(),
        }
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.dtype().code(), self.dims.len() as u8])?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            TensorData::F64(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            TensorData::U8(v) => w.write_all(v)?,
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CliError::format("bad magic"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(CliError::format(format!("unsupported version {version}")));
        }
        let mut head = [0u8; 2];
        r.read_exact(&mut head)?;
        let dtype = Dtype::from_code(head[0])?;
        let rank = head[1] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut d = [0u8; 8];
            r.read_exact(&mut d)?;
            dims.push(u64::from_le_bytes(d));
        }
        let count: u64 = dims.iter().product();
        let count = usize::try_from(count)
            .map_err(|_| CliError::format("tensor too large for this platform"))?;
        let data = match dtype {
            Dtype::F32 => {
                let mut v = vec![0f32; count];
                let mut buf = [0u8; 4];
                for x in v.iter_mut() {
                    r.read_exact(&mut buf)?;
                    *x = f32::from_le_bytes(buf);
                }
                TensorData::F32(v)
            }
            Dtype::F64 => {
                let mut v = vec![0f64; count];
                let mut buf = [0u8; 8];
                for x in v.iter_mut() {
                    r.read_exact(&mut buf)?;
                    *x = f64::from_le_bytes(buf);
                }
                TensorData::F64(v)
            }
            Dtype::U8 => {
                let mut v = vec![0u8; count];
                r.read_exact(&mut v)?;
                TensorData::U8(v)
            }
        };
        Ok(Tensor { dims, data })
    }
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in tensors {
        t.write_to(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut out = Vec::new();
    let mut consumed = 0u64;
    while consumed < len {
        let t = Tensor::read_from(&mut r)?;
        consumed += 4
            + 4
            + 2
            + 8 * t.dims.len() as u64
            + (t.element_count()
                * match t.dtype() {
                    Dtype::F32 => 4,
                    Dtype::F64 => 8,
                    Dtype::U8 => 1,
                }) as u64;
        out.push(t);
    }
    Ok(out)
}

pub fn read_single_tensor(path: &Path) -> Result<Tensor> {
    let tensors = read_tensors(path)?;
    match tensors.len() {
        1 => Ok(tensors.into_iter().next().unwrap()),
        n => Err(CliError::format(format!("expected one tensor, found {n}"))),
    }
}
