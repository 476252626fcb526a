//! Versioned binary and JSON forms of descriptors and synthesized-view stores.
//!
//! All integers and floats are little-endian. A descriptor record is
//!
//! ```text
//! "MVDR" | version u16 | tag u8 | kernel u8 | patch_size u32 | bins u32 |
//! cells u32 | eps f64 | sigma f64 | len u32 | len x f32
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::{DescriptorParams, DescriptorTag, DescriptorVector};
use crate::imgproc::AngularKernel;

pub const RECORD_MAGIC: &[u8; 4] = b"MVDR";
pub const VIEW_STORE_MAGIC: &[u8; 4] = b"MVVS";
pub const FORMAT_VERSION: u16 = 1;

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.what, "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::format(self.what, "bad magic"));
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("length checked")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length checked")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("length checked")))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("length checked")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("length checked")))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.what, "trailing bytes"));
        }
        Ok(())
    }
}

fn kernel_code(k: AngularKernel) -> u8 {
    match k {
        AngularKernel::Triangular => 0,
        AngularKernel::WrappedGaussian => 1,
    }
}

fn kernel_from_code(c: u8) -> Result<AngularKernel> {
    match c {
        0 => Ok(AngularKernel::Triangular),
        1 => Ok(AngularKernel::WrappedGaussian),
        _ => Err(Error::format("descriptor record", format!("unknown kernel code {c}"))),
    }
}

/// A descriptor together with the parameters that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub params: DescriptorParams,
    pub descriptor: DescriptorVector,
}

impl DescriptorRecord {
    pub fn new(params: DescriptorParams, descriptor: DescriptorVector) -> Result<Self> {
        params.validate()?;
        if descriptor.len() != params.descriptor_len() || descriptor.bins != params.bins {
            return Err(Error::DimensionMismatch {
                expected: params.descriptor_len(),
                actual: descriptor.len(),
            });
        }
        Ok(Self { params, descriptor })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 4 * self.descriptor.len());
        self.encode_into(&mut out);
        out
    }

    pub(crate) fn encode_into(&self, out: &mut Vec<u8>) {
        let p = &self.params;
        out.extend_from_slice(RECORD_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.descriptor.tag.code());
        out.push(kernel_code(p.kernel));
        out.extend_from_slice(&(p.patch_size as u32).to_le_bytes());
        out.extend_from_slice(&(p.bins as u32).to_le_bytes());
        out.extend_from_slice(&(p.cells as u32).to_le_bytes());
        out.extend_from_slice(&p.eps.to_le_bytes());
        out.extend_from_slice(&p.sigma.to_le_bytes());
        out.extend_from_slice(&(self.descriptor.len() as u32).to_le_bytes());
        for v in &self.descriptor.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }

    /// Values come back rounded to `f32`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "descriptor record");
        let rec = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(rec)
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self> {
        r.magic(RECORD_MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format("descriptor record", format!("unsupported version {version}")));
        }
        let tag_code = r.u8()?;
        let tag = DescriptorTag::from_code(tag_code)
            .ok_or_else(|| Error::format("descriptor record", format!("unknown tag {tag_code}")))?;
        let kernel = kernel_from_code(r.u8()?)?;
        let patch_size = r.u32()? as usize;
        let bins = r.u32()? as usize;
        let cells = r.u32()? as usize;
        let eps = r.f64()?;
        let sigma = r.f64()?;
        let len = r.u32()? as usize;
        let mut values = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            values.push(r.f32()? as f64);
        }
        let params = DescriptorParams {
            patch_size,
            bins,
            cells,
            eps,
            sigma,
            kernel,
        };
        Self::new(params, DescriptorVector { values, tag, bins })
            .map_err(|e| Error::format("descriptor record", e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(s)?;
        Self::new(rec.params, rec.descriptor)
    }
}

/// One synthesized view's descriptor, keyed by track, view index and the
/// `(tilt axis azimuth, tilt, in-plane angle)` of its rotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub track_id: u64,
    pub view_index: u32,
    pub rotation: [f64; 3],
    pub record: DescriptorRecord,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewStore {
    pub entries: Vec<ViewEntry>,
}

impl ViewStore {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(VIEW_STORE_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.track_id.to_le_bytes());
            out.extend_from_slice(&e.view_index.to_le_bytes());
            for a in e.rotation {
                out.extend_from_slice(&a.to_le_bytes());
            }
            e.record.encode_into(&mut out);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "view store");
        r.magic(VIEW_STORE_MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format("view store", format!("unsupported version {version}")));
        }
        let n = r.u64()? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let track_id = r.u64()?;
            let view_index = r.u32()?;
            let rotation = [r.f64()?, r.f64()?, r.f64()?];
            let record = DescriptorRecord::decode_from(&mut r)?;
            entries.push(ViewEntry {
                track_id,
                view_index,
                rotation,
                record,
            });
        }
        r.finish()?;
        Ok(Self { entries })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
