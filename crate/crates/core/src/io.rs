//! On-disk formats: the raw tensor container, the multi-tensor bundle and PNG.
//!
//! Raw tensor container (`.ctn`), all integers little-endian:
//!
//! | offset | size      | content                          |
//! |--------|-----------|----------------------------------|
//! | 0      | 4         | magic `b"CTNS"`                  |
//! | 4      | 4         | `u32` format version (1)         |
//! | 8      | 4         | `u32` number of dims `n`         |
//! | 12     | 8·n       | `u64` dims, outermost first      |
//! | 12+8n  | 4·∏dims   | `f32` IEEE-754 values, row-major |
//!
//! Tensor bundle (`.ctb`):
//!
//! | size    | content                                             |
//! |---------|-----------------------------------------------------|
//! | 4       | magic `b"CTBD"`                                     |
//! | 4       | `u32` format version (1)                            |
//! | 4       | `u32` metadata length `m`                           |
//! | m       | UTF-8 JSON metadata                                 |
//! | 4       | `u32` entry count                                   |
//! | …       | entries, each: `u32` name length, UTF-8 name, `u8` dtype (1 = f32, 2 = f64), `u32` ndim, `u64` dims, values |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Mask, RgbImage, Video};

pub const TENSOR_MAGIC: &[u8; 4] = b"CTNS";
pub const BUNDLE_MAGIC: &[u8; 4] = b"CTBD";
pub const FORMAT_VERSION: u32 = 1;

/// Dense row-major `f32` tensor as stored in the raw container.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl RawTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 8 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != TENSOR_MAGIC {
            return Err(Error::Format("not a raw tensor container (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported tensor version {version}")));
        }
        let ndim = r.u32()? as usize;
        if ndim > 16 {
            return Err(Error::Format(format!("implausible dimension count {ndim}")));
        }
        let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = checked_product(&dims)?;
        let data = r.f32s(n)?;
        r.finish()?;
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| parse_error(path, e))
    }
}

fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .filter(|n| *n <= (1 << 34))
        .ok_or_else(|| Error::Format(format!("tensor dims {dims:?} too large")))
}

fn parse_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(message) | Error::ShapeMismatch(message) => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    }
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Values of one bundle entry.
#[derive(Debug, Clone, PartialEq)]
pub enum BundleData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleEntry {
    pub dims: Vec<usize>,
    pub data: BundleData,
}

/// Named tensors plus a JSON metadata document. Entries are stored sorted by
/// name so that the byte layout is independent of insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorBundle {
    pub metadata: String,
    pub entries: BTreeMap<String, BundleEntry>,
}

impl TensorBundle {
    pub fn insert_f32(&mut self, name: &str, dims: Vec<usize>, data: Vec<f32>) -> Result<()> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape(format!("entry {name}: dims {dims:?} vs {} values", data.len())));
        }
        self.entries.insert(
            name.to_string(),
            BundleEntry {
                dims,
                data: BundleData::F32(data),
            },
        );
        Ok(())
    }

    pub fn insert_f64(&mut self, name: &str, dims: Vec<usize>, data: Vec<f64>) -> Result<()> {
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::shape(format!("entry {name}: dims {dims:?} vs {} values", data.len())));
        }
        self.entries.insert(
            name.to_string(),
            BundleEntry {
                dims,
                data: BundleData::F64(data),
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&BundleEntry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Format(format!("bundle has no entry named {name:?}")))
    }

    pub fn get_f32(&self, name: &str) -> Result<(&[usize], &[f32])> {
        let e = self.get(name)?;
        match &e.data {
            BundleData::F32(v) => Ok((&e.dims, v)),
            BundleData::F64(_) => Err(Error::Format(format!("entry {name:?} is f64, expected f32"))),
        }
    }

    pub fn get_f64(&self, name: &str) -> Result<(&[usize], &[f64])> {
        let e = self.get(name)?;
        match &e.data {
            BundleData::F64(v) => Ok((&e.dims, v)),
            BundleData::F32(_) => Err(Error::Format(format!("entry {name:?} is f32, expected f64"))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, e) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(match e.data {
                BundleData::F32(_) => 1,
                BundleData::F64(_) => 2,
            });
            out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
            for d in &e.dims {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            match &e.data {
                BundleData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                BundleData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != BUNDLE_MAGIC {
            return Err(Error::Format("not a tensor bundle (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported bundle version {version}")));
        }
        let mlen = r.u32()? as usize;
        let metadata = String::from_utf8(r.take(mlen)?.to_vec())
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let count = r.u32()?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            let dtype = r.u8()?;
            let ndim = r.u32()? as usize;
            if ndim > 16 {
                return Err(Error::Format(format!("implausible dimension count {ndim}")));
            }
            let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = checked_product(&dims)?;
            let data = match dtype {
                1 => BundleData::F32(r.f32s(n)?),
                2 => BundleData::F64(r.f64s(n)?),
                other => return Err(Error::Format(format!("unknown dtype tag {other}"))),
            };
            entries.insert(name, BundleEntry { dims, data });
        }
        r.finish()?;
        Ok(Self { metadata, entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| parse_error(path, e))
    }
}

impl RgbImage {
    /// `[height, width, 3]` raw tensor.
    pub fn to_tensor(&self) -> RawTensor {
        RawTensor {
            dims: vec![self.height(), self.width(), 3],
            data: self.data().to_vec(),
        }
    }

    pub fn from_tensor(t: &RawTensor) -> Result<Self> {
        match t.dims.as_slice() {
            [h, w, 3] => RgbImage::from_raw(*w, *h, t.data.clone()),
            other => Err(Error::shape(format!("expected [h, w, 3] image tensor, got {other:?}"))),
        }
    }
}

impl Video {
    /// `[frames, height, width, 3]` raw tensor.
    pub fn to_tensor(&self) -> RawTensor {
        let (f, h, w) = self.dims();
        let mut data = Vec::with_capacity(f * h * w * 3);
        for fr in self.frames() {
            data.extend_from_slice(fr.data());
        }
        RawTensor {
            dims: vec![f, h, w, 3],
            data,
        }
    }

    pub fn from_tensor(t: &RawTensor) -> Result<Self> {
        match t.dims.as_slice() {
            [f, h, w, 3] => {
                let n = h * w * 3;
                let frames = (0..*f)
                    .map(|i| RgbImage::from_raw(*w, *h, t.data[i * n..(i + 1) * n].to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Video::new(frames)
            }
            other => Err(Error::shape(format!("expected [f, h, w, 3] video tensor, got {other:?}"))),
        }
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit RGB PNG (values clamped to `[0, 1]` and rounded).
pub fn write_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|v| to_u8(*v)).collect();
    encode_png(path, img.width(), img.height(), png::ColorType::Rgb, png::BitDepth::Eight, &bytes)
}

/// Writes a 1-bit grayscale PNG, white where the mask is set.
pub fn write_mask_png(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    let path = path.as_ref();
    let stride = mask.width().div_ceil(8);
    let mut bytes = vec![0u8; stride * mask.height()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                bytes[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    encode_png(path, mask.width(), mask.height(), png::ColorType::Grayscale, png::BitDepth::One, &bytes)
}

fn encode_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Format(format!("png header: {e}")))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::Format(format!("png data: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::Format(format!("png finish: {e}")))?;
    Ok(())
}

struct DecodedPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: Vec<u8>,
}

fn decode_png(path: &Path) -> Result<DecodedPng> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    let perr = |m: String| Error::Parse {
        path: path.to_path_buf(),
        message: m,
    };
    let decoder = png::Decoder::new(std::io::Cursor::new(raw));
    let mut reader = decoder.read_info().map_err(|e| perr(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| perr("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| perr(e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes: buf,
    })
}

/// Reads an 8-bit RGB, RGBA or grayscale PNG into a unit-float image.
pub fn read_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let d = decode_png(path)?;
    if d.depth != png::BitDepth::Eight {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("unsupported bit depth {:?}", d.depth),
        });
    }
    let channels = match d.color {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("unsupported color type {other:?}"),
            })
        }
    };
    let mut data = Vec::with_capacity(d.width * d.height * 3);
    for px in d.bytes.chunks_exact(channels) {
        let rgb = if channels >= 3 {
            [px[0], px[1], px[2]]
        } else {
            [px[0]; 3]
        };
        data.extend(rgb.iter().map(|v| *v as f32 / 255.0));
    }
    RgbImage::from_raw(d.width, d.height, data)
}

pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let d = decode_png(path)?;
    if d.color != png::ColorType::Grayscale || d.depth != png::BitDepth::One {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "mask must be a 1-bit grayscale PNG".into(),
        });
    }
    let stride = d.width.div_ceil(8);
    let mut mask = Mask::new(d.width, d.height);
    for y in 0..d.height {
        for x in 0..d.width {
            mask.set(x, y, d.bytes[y * stride + x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok(mask)
}

/// Reads an image from either a PNG or a raw tensor container, by extension.
pub fn read_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => read_png(path),
        _ => RgbImage::from_tensor(&RawTensor::read(path)?).map_err(|e| parse_error(path, e)),
    }
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
