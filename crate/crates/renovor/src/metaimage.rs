//! MetaImage (`.mhd` header + `.raw` data) reader and writer.
//!
//! Only 3D single-channel uncompressed images are handled. Raw data is
//! written little-endian; big-endian files are byte-swapped on load.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use renovor_core::{LabelVolume, ScalarVolume, VolumeGeometry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetaImageError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed header {path}: {msg}")]
    Header { path: PathBuf, msg: String },
    #[error("unsupported element type {0}")]
    UnsupportedType(String),
    #[error("raw data size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("values do not fit {0}")]
    Range(&'static str),
    #[error(transparent)]
    Volume(#[from] renovor_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    Float,
    Short,
    UShort,
    UChar,
}

impl ElementType {
    pub fn name(self) -> &'static str {
        match self {
            ElementType::Float => "MET_FLOAT",
            ElementType::Short => "MET_SHORT",
            ElementType::UShort => "MET_USHORT",
            ElementType::UChar => "MET_UCHAR",
        }
    }

    pub fn parse(s: &str) -> Result<Self, MetaImageError> {
        match s {
            "MET_FLOAT" => Ok(ElementType::Float),
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_USHORT" => Ok(ElementType::UShort),
            "MET_UCHAR" => Ok(ElementType::UChar),
            other => Err(MetaImageError::UnsupportedType(other.to_string())),
        }
    }

    pub fn size(self) -> usize {
        match self {
            ElementType::Float => 4,
            ElementType::Short | ElementType::UShort => 2,
            ElementType::UChar => 1,
        }
    }
}

/// Voxel values as stored in the file.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageData {
    Float(Vec<f32>),
    Short(Vec<i16>),
    UShort(Vec<u16>),
    UChar(Vec<u8>),
}

impl ImageData {
    pub fn element_type(&self) -> ElementType {
        match self {
            ImageData::Float(_) => ElementType::Float,
            ImageData::Short(_) => ElementType::Short,
            ImageData::UShort(_) => ElementType::UShort,
            ImageData::UChar(_) => ElementType::UChar,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ImageData::Float(v) => v.len(),
            ImageData::Short(v) => v.len(),
            ImageData::UShort(v) => v.len(),
            ImageData::UChar(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            ImageData::Float(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ImageData::Short(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ImageData::UShort(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ImageData::UChar(v) => v.clone(),
        }
    }

    fn from_bytes(t: ElementType, bytes: &[u8], big_endian: bool) -> Self {
        fn words<const N: usize>(bytes: &[u8], big: bool) -> impl Iterator<Item = [u8; N]> + '_ {
            bytes.chunks_exact(N).map(move |c| {
                let mut w: [u8; N] = c.try_into().unwrap_or_else(|_| unreachable!());
                if big {
                    w.reverse();
                }
                w
            })
        }
        match t {
            ElementType::Float => ImageData::Float(words::<4>(bytes, big_endian).map(f32::from_le_bytes).collect()),
            ElementType::Short => ImageData::Short(words::<2>(bytes, big_endian).map(i16::from_le_bytes).collect()),
            ElementType::UShort => ImageData::UShort(words::<2>(bytes, big_endian).map(u16::from_le_bytes).collect()),
            ElementType::UChar => ImageData::UChar(bytes.to_vec()),
        }
    }
}

/// A loaded image: geometry plus typed data.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaImage {
    pub geometry: VolumeGeometry,
    pub data: ImageData,
}

impl MetaImage {
    pub fn from_scalar(vol: &ScalarVolume, t: ElementType) -> Result<Self, MetaImageError> {
        let d = vol.data();
        let data = match t {
            ElementType::Float => ImageData::Float(d.to_vec()),
            ElementType::Short => ImageData::Short(checked(d, "MET_SHORT", |x| {
                (x.fract() == 0.0 && (-32768.0..=32767.0).contains(&x)).then_some(x as i16)
            })?),
            ElementType::UShort => ImageData::UShort(checked(d, "MET_USHORT", |x| {
                (x.fract() == 0.0 && (0.0..=65535.0).contains(&x)).then_some(x as u16)
            })?),
            ElementType::UChar => ImageData::UChar(checked(d, "MET_UCHAR", |x| {
                (x.fract() == 0.0 && (0.0..=255.0).contains(&x)).then_some(x as u8)
            })?),
        };
        Ok(MetaImage { geometry: *vol.geometry(), data })
    }

    pub fn from_labels(vol: &LabelVolume, t: ElementType) -> Result<Self, MetaImageError> {
        let d = vol.data();
        let data = match t {
            ElementType::Float => ImageData::Float(d.iter().map(|&x| f32::from(x)).collect()),
            ElementType::Short => ImageData::Short(checked(d, "MET_SHORT", |x| i16::try_from(x).ok())?),
            ElementType::UShort => ImageData::UShort(d.to_vec()),
            ElementType::UChar => ImageData::UChar(checked(d, "MET_UCHAR", |x| u8::try_from(x).ok())?),
        };
        Ok(MetaImage { geometry: *vol.geometry(), data })
    }

    /// Masks as MET_UCHAR when every label fits, MET_USHORT otherwise.
    pub fn from_labels_compact(vol: &LabelVolume) -> Self {
        let t = if vol.data().iter().all(|&x| x <= 255) { ElementType::UChar } else { ElementType::UShort };
        Self::from_labels(vol, t).unwrap_or_else(|_| unreachable!())
    }

    /// Any element type as 32-bit floats (exact for every supported type).
    pub fn to_scalar(&self) -> Result<ScalarVolume, MetaImageError> {
        let v: Vec<f32> = match &self.data {
            ImageData::Float(v) => v.clone(),
            ImageData::Short(v) => v.iter().map(|&x| f32::from(x)).collect(),
            ImageData::UShort(v) => v.iter().map(|&x| f32::from(x)).collect(),
            ImageData::UChar(v) => v.iter().map(|&x| f32::from(x)).collect(),
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MetaImageError::Range("finite floats"));
        }
        Ok(ScalarVolume::new(self.geometry, v)?)
    }

    /// Integer labels; float data must hold integers in `0..=65535`.
    pub fn to_labels(&self) -> Result<LabelVolume, MetaImageError> {
        let v: Vec<u16> = match &self.data {
            ImageData::Float(v) => {
                checked(v, "labels", |x| (x.fract() == 0.0 && (0.0..=65535.0).contains(&x)).then_some(x as u16))?
            }
            ImageData::Short(v) => checked(v, "labels", |x| u16::try_from(x).ok())?,
            ImageData::UShort(v) => v.clone(),
            ImageData::UChar(v) => v.iter().map(|&x| u16::from(x)).collect(),
        };
        Ok(LabelVolume::new(self.geometry, v)?)
    }

    /// Raw data bytes as written (little-endian).
    pub fn raw_bytes(&self) -> Vec<u8> {
        self.data.to_le_bytes()
    }

    /// Header text referencing `raw_name`.
    pub fn header(&self, raw_name: &str) -> String {
        let g = &self.geometry;
        let join = |v: [f64; 3]| format!("{} {} {}", v[0], v[1], v[2]);
        let d = g.dims();
        let mut s = String::new();
        let _ = writeln!(s, "ObjectType = Image");
        let _ = writeln!(s, "NDims = 3");
        let _ = writeln!(s, "DimSize = {} {} {}", d[0], d[1], d[2]);
        let _ = writeln!(s, "ElementSpacing = {}", join(g.spacing()));
        let _ = writeln!(s, "Offset = {}", join(g.origin()));
        let _ = writeln!(s, "ElementType = {}", self.data.element_type().name());
        let _ = writeln!(s, "ElementByteOrderMSB = False");
        let _ = writeln!(s, "ElementDataFile = {raw_name}");
        s
    }

    /// Header and raw bytes for a file pair named `<stem>.mhd` / `<stem>.raw`.
    pub fn encode(&self, stem: &str) -> (Vec<u8>, Vec<u8>) {
        (self.header(&format!("{stem}.raw")).into_bytes(), self.data.to_le_bytes())
    }

    /// Write `path` (an `.mhd` file) and its `.raw` sibling.
    pub fn save(&self, path: &Path) -> Result<(), MetaImageError> {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| MetaImageError::Header { path: path.into(), msg: "invalid file name".into() })?;
        let (header, raw) = self.encode(stem);
        let raw_path = path.with_file_name(format!("{stem}.raw"));
        fs::write(path, header).map_err(|source| MetaImageError::Io { path: path.into(), source })?;
        fs::write(&raw_path, raw).map_err(|source| MetaImageError::Io { path: raw_path.clone(), source })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MetaImageError> {
        let text = fs::read_to_string(path).map_err(|source| MetaImageError::Io { path: path.into(), source })?;
        let header = Header::parse(path, &text)?;
        let raw_path = match path.parent() {
            Some(dir) => dir.join(&header.data_file),
            None => PathBuf::from(&header.data_file),
        };
        let bytes = fs::read(&raw_path).map_err(|source| MetaImageError::Io { path: raw_path.clone(), source })?;
        let expected = header.geometry.len() * header.element_type.size();
        if bytes.len() != expected {
            return Err(MetaImageError::SizeMismatch { expected, found: bytes.len() });
        }
        let data = ImageData::from_bytes(header.element_type, &bytes, header.big_endian);
        Ok(MetaImage { geometry: header.geometry, data })
    }
}

fn checked<T: Copy, U>(v: &[T], what: &'static str, f: impl Fn(T) -> Option<U>) -> Result<Vec<U>, MetaImageError> {
    v.iter().map(|&x| f(x).ok_or(MetaImageError::Range(what))).collect()
}

struct Header {
    geometry: VolumeGeometry,
    element_type: ElementType,
    data_file: String,
    big_endian: bool,
}

impl Header {
    fn parse(path: &Path, text: &str) -> Result<Self, MetaImageError> {
        let bad = |msg: String| MetaImageError::Header { path: path.into(), msg };
        let mut dims = None;
        let mut spacing = [1.0; 3];
        let mut origin = [0.0; 3];
        let mut element_type = None;
        let mut data_file = None;
        let mut big_endian = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected `key = value`: {line}")))?;
            let (key, value) = (key.trim(), value.trim());
            let triple = |v: &str| -> Result<[f64; 3], MetaImageError> {
                let xs: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("{key}: {e}")))?;
                xs.try_into().map_err(|_| bad(format!("{key} needs 3 values")))
            };
            let flag = |v: &str| match v.to_ascii_lowercase().as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(bad(format!("{key}: expected True or False"))),
            };
            match key {
                "ObjectType" if value != "Image" => return Err(bad(format!("ObjectType {value}"))),
                "NDims" if value != "3" => return Err(bad(format!("NDims {value}, only 3 is supported"))),
                "DimSize" => {
                    let d: Vec<usize> = value
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(format!("DimSize: {e}")))?;
                    let d: [usize; 3] = d.try_into().map_err(|_| bad("DimSize needs 3 values".into()))?;
                    dims = Some(d);
                }
                "ElementSpacing" | "ElementSize" => spacing = triple(value)?,
                "Offset" | "Origin" | "Position" => origin = triple(value)?,
                "ElementType" => element_type = Some(ElementType::parse(value)?),
                "ElementDataFile" => data_file = Some(value.to_string()),
                "ElementByteOrderMSB" | "BinaryDataByteOrderMSB" => big_endian = flag(value)?,
                "CompressedData" if flag(value)? => return Err(bad("compressed data is not supported".into())),
                "ElementNumberOfChannels" if value != "1" => {
                    return Err(bad("multi-channel images are not supported".into()))
                }
                "HeaderSize" if value != "0" => return Err(bad("HeaderSize is not supported".into())),
                _ => {}
            }
        }
        let dims = dims.ok_or_else(|| bad("missing DimSize".into()))?;
        let element_type = element_type.ok_or_else(|| bad("missing ElementType".into()))?;
        let data_file = data_file.ok_or_else(|| bad("missing ElementDataFile".into()))?;
        if data_file == "LOCAL" || data_file.starts_with("LIST") || data_file.contains('%') {
            return Err(bad(format!("ElementDataFile {data_file} is not supported")));
        }
        let geometry = VolumeGeometry::new(dims, spacing, origin)?;
        Ok(Header { geometry, element_type, data_file, big_endian })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_key_order_is_fixed() {
        let g = VolumeGeometry::new([2, 3, 4], [0.5, 0.5, 2.0], [1.0, -2.5, 0.0]).unwrap();
        let img = MetaImage::from_labels(&LabelVolume::filled(g, 1), ElementType::UChar).unwrap();
        let header = img.header("a.raw");
        let keys: Vec<&str> = header.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "ObjectType",
                "NDims",
                "DimSize",
                "ElementSpacing",
                "Offset",
                "ElementType",
                "ElementByteOrderMSB",
                "ElementDataFile"
            ]
        );
        assert!(img.header("a.raw").contains("ElementSpacing = 0.5 0.5 2\n"));
    }

    #[test]
    fn conversions_reject_out_of_range() {
        let g = VolumeGeometry::with_dims([2, 1, 1]).unwrap();
        assert!(MetaImage::from_scalar(&ScalarVolume::new(g, vec![0.5, 1.0]).unwrap(), ElementType::Short).is_err());
        assert!(MetaImage::from_labels(&LabelVolume::new(g, vec![256, 0]).unwrap(), ElementType::UChar).is_err());
        let img = MetaImage { geometry: g, data: ImageData::Short(vec![-1, 3]) };
        assert!(img.to_labels().is_err());
        assert_eq!(img.to_scalar().unwrap().data(), &[-1.0, 3.0]);
        assert_eq!(MetaImage::from_labels_compact(&LabelVolume::new(g, vec![300, 0]).unwrap()).data.element_type(), ElementType::UShort);
    }

    #[test]
    fn big_endian_is_swapped() {
        let d = ImageData::from_bytes(ElementType::UShort, &[0x01, 0x02], true);
        assert_eq!(d, ImageData::UShort(vec![0x0102]));
    }
}
