//! Binary tensor files.
//!
//! Layout (little-endian): the 8-byte magic `MRTENSR\0`, a `u32` byte length,
//! a UTF-8 JSON header line `{"dtype":"f32"|"c64","shape":[...]}` of that
//! length, then the row-major payload. `c64` elements are stored as
//! interleaved `f32` real/imaginary pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex32;
use serde::{Deserialize, Serialize};

use super::{CineSequence, ImageTensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MRTENSR\0";
const MAX_HEADER_LEN: u32 = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    C64(Vec<Complex32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::C64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::C64(_) => "c64",
        }
    }
}

/// An n-dimensional array as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dtype: String,
    shape: Vec<usize>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected =
            element_count(&shape).ok_or_else(|| Error::arg(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(Error::arg(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(values))
    }
}

fn element_count(shape: &[usize]) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d))
}

pub fn write_tensor<W: Write>(mut writer: W, tensor: &Tensor) -> Result<()> {
    let header = Header {
        dtype: tensor.data.dtype().to_string(),
        shape: tensor.shape.clone(),
    };
    let mut line = serde_json::to_string(&header).expect("header serializes");
    line.push('\n');
    let mut buf = Vec::with_capacity(16 + line.len() + tensor.data.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(line.len() as u32).to_le_bytes());
    buf.extend_from_slice(line.as_bytes());
    match &tensor.data {
        TensorData::F32(v) => {
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        TensorData::C64(v) => {
            for z in v {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    writer.write_all(&buf).map_err(|e| Error::io("<writer>", e))
}

pub fn read_tensor<R: Read>(mut reader: R) -> Result<Tensor> {
    let mut magic = [0u8; 8];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::format("magic", "file shorter than the 8-byte magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            "magic",
            format!("expected {:?}, found {:?}", MAGIC, magic),
        ));
    }
    let mut len_bytes = [0u8; 4];
    reader
        .read_exact(&mut len_bytes)
        .map_err(|_| Error::format("header_length", "missing header length"))?;
    let header_len = u32::from_le_bytes(len_bytes);
    if header_len == 0 || header_len > MAX_HEADER_LEN {
        return Err(Error::format(
            "header_length",
            format!("implausible header length {header_len}"),
        ));
    }
    let mut header_bytes = vec![0u8; header_len as usize];
    reader
        .read_exact(&mut header_bytes)
        .map_err(|_| Error::format("header", "header truncated"))?;
    let text =
        std::str::from_utf8(&header_bytes).map_err(|e| Error::format("header", format!("not UTF-8: {e}")))?;
    let header: Header = serde_json::from_str(text.trim_end_matches('\n'))
        .map_err(|e| Error::format("header", e.to_string()))?;
    let count = element_count(&header.shape)
        .ok_or_else(|| Error::format("shape", format!("{:?} overflows", header.shape)))?;
    let elem_size = match header.dtype.as_str() {
        "f32" => 4,
        "c64" => 8,
        other => return Err(Error::format("dtype", format!("unsupported dtype {other:?}"))),
    };
    let expected = count
        .checked_mul(elem_size)
        .ok_or_else(|| Error::format("shape", "payload size overflows"))?;

    let mut payload = Vec::with_capacity(expected);
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::format("payload", e.to_string()))?;
    if payload.len() < expected {
        return Err(Error::format(
            "payload",
            format!(
                "truncated: shape {:?} needs {expected} bytes, found {}",
                header.shape,
                payload.len()
            ),
        ));
    }
    if payload.len() > expected {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes", payload.len() - expected),
        ));
    }
    let floats = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let data = if elem_size == 4 {
        TensorData::F32(floats.collect())
    } else {
        let flat: Vec<f32> = floats.collect();
        TensorData::C64(flat.chunks_exact(2).map(|p| Complex32::new(p[0], p[1])).collect())
    };
    Ok(Tensor {
        shape: header.shape,
        data,
    })
}

pub fn save_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_tensor(&mut writer, tensor)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(BufReader::new(file))
}

impl From<&ImageTensor> for Tensor {
    fn from(image: &ImageTensor) -> Self {
        Tensor {
            shape: vec![image.height(), image.width()],
            data: TensorData::F32(image.pixels().to_vec()),
        }
    }
}

impl TryFrom<Tensor> for ImageTensor {
    type Error = Error;

    fn try_from(tensor: Tensor) -> Result<Self> {
        let TensorData::F32(values) = tensor.data else {
            return Err(Error::format("dtype", "image tensors must be f32"));
        };
        match tensor.shape.as_slice() {
            &[h, w] => ImageTensor::new(h, w, values).map_err(|e| Error::format("payload", e.to_string())),
            other => Err(Error::format(
                "shape",
                format!("expected a 2D image, got shape {other:?}"),
            )),
        }
    }
}

impl From<&CineSequence> for Tensor {
    fn from(cine: &CineSequence) -> Self {
        let (h, w) = cine.shape();
        let mut values = Vec::with_capacity(cine.num_frames() * h * w);
        for f in cine.frames() {
            values.extend_from_slice(f.pixels());
        }
        Tensor {
            shape: vec![cine.num_frames(), h, w],
            data: TensorData::F32(values),
        }
    }
}

impl TryFrom<Tensor> for CineSequence {
    type Error = Error;

    /// 2D tensors become single-frame sequences; the target frame is the
    /// middle one.
    fn try_from(tensor: Tensor) -> Result<Self> {
        let TensorData::F32(values) = tensor.data else {
            return Err(Error::format("dtype", "cine tensors must be f32"));
        };
        let (t, h, w) = match tensor.shape.as_slice() {
            &[h, w] => (1, h, w),
            &[t, h, w] => (t, h, w),
            other => {
                return Err(Error::format(
                    "shape",
                    format!("expected [T, H, W] or [H, W], got {other:?}"),
                ))
            }
        };
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::format("shape", "zero-sized dimension"));
        }
        let frames = values
            .chunks_exact(h * w)
            .map(|chunk| ImageTensor::new(h, w, chunk.to_vec()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::format("payload", e.to_string()))?;
        CineSequence::new(frames, t / 2)
    }
}
