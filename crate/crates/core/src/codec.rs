//! The `.nfq` container and storage accounting.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    "NFQ1"                4 bytes
//! version  u8 = 1
//! bits     u8
//! n_feat   u32
//! n_rows   u64
//! n_feat x { name_len u16, name (UTF-8), lo f64, hi f64 }
//! payload_compressed_len u64
//! payload  raw DEFLATE (RFC 1951) of the bit-packed codes
//! ```
//!
//! Codes are packed row-major in feature order, least significant bit first
//! within each byte; the last byte is zero-padded.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::quantizer::{check_bits, CodeTable, RangeModel};
use crate::tabular::{canonical_csv, FeatureTable};

pub const MAGIC: [u8; 4] = *b"NFQ1";
pub const VERSION: u8 = 1;
pub const DEFAULT_LEVEL: u32 = 6;
pub const FILE_EXTENSION: &str = "nfq";

/// A quantized feature log: schema, ranges and the raw (uncompressed) packed
/// payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    bits: u8,
    n_rows: u64,
    ranges: RangeModel,
    payload: Vec<u8>,
}

impl Container {
    pub fn bits(&self) -> u32 {
        u32::from(self.bits)
    }

    pub fn n_rows(&self) -> u64 {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &RangeModel {
        &self.ranges
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }
}

fn payload_len(n_rows: u64, n_features: u64, bits: u32) -> Result<u64> {
    let total_bits = n_rows as u128 * n_features as u128 * bits as u128;
    u64::try_from(total_bits.div_ceil(8)).map_err(|_| Error::Corrupt("payload length overflows".into()))
}

pub fn pack(codes: &CodeTable, ranges: &RangeModel) -> Result<Container> {
    if codes.feature_names() != ranges.feature_names() {
        return Err(Error::SchemaMismatch {
            expected: ranges.feature_names().to_vec(),
            found: codes.feature_names().to_vec(),
        });
    }
    let bits = codes.bits();
    let expected = payload_len(codes.n_rows() as u64, codes.n_features() as u64, bits)?;
    let mut payload = Vec::with_capacity(expected as usize);
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for &c in codes.codes() {
        acc |= c << filled;
        filled += bits;
        while filled >= 8 {
            payload.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        payload.push(acc as u8);
    }
    debug_assert_eq!(payload.len() as u64, expected);
    Ok(Container {
        bits: bits as u8,
        n_rows: codes.n_rows() as u64,
        ranges: ranges.clone(),
        payload,
    })
}

pub fn unpack(container: &Container) -> Result<(CodeTable, RangeModel)> {
    let bits = container.bits();
    check_bits(bits)?;
    let p = container.n_features();
    let expected = payload_len(container.n_rows, p as u64, bits)?;
    let actual = container.payload.len() as u64;
    if actual != expected {
        return Err(Error::Truncated {
            what: "payload",
            expected,
            actual,
        });
    }
    let count = container.n_rows as usize * p;
    let mask = (1u64 << bits) - 1;
    let mut codes = Vec::with_capacity(count);
    let mut bytes = container.payload.iter();
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    for _ in 0..count {
        while filled < bits {
            // length was checked above
            let b = *bytes.next().expect("payload length verified");
            acc |= u64::from(b) << filled;
            filled += 8;
        }
        codes.push(acc & mask);
        acc >>= bits;
        filled -= bits;
    }
    let table = CodeTable::new(
        container.ranges.feature_names().to_vec(),
        codes,
        container.n_rows as usize,
        bits,
    )?;
    Ok((table, container.ranges.clone()))
}

fn check_level(level: u32) -> Result<()> {
    if (1..=9).contains(&level) {
        Ok(())
    } else {
        Err(Error::invalid(format!("compression level {level} outside 1..=9")))
    }
}

/// Raw DEFLATE at `level`.
pub fn deflate(bytes: &[u8], level: u32) -> Result<Vec<u8>> {
    check_level(level)?;
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::new(level));
    enc.write_all(bytes)
        .and_then(|_| enc.finish())
        .map_err(|e| Error::Corrupt(format!("deflate failed: {e}")))
}

/// Serializes to file bytes: uncompressed header, DEFLATE-compressed payload.
pub fn seal(container: &Container, level: u32) -> Result<Vec<u8>> {
    let compressed = deflate(&container.payload, level)?;
    let mut out = Vec::with_capacity(64 + compressed.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(container.bits);
    let p = u32::try_from(container.n_features()).map_err(|_| Error::invalid("too many features"))?;
    out.extend_from_slice(&p.to_le_bytes());
    out.extend_from_slice(&container.n_rows.to_le_bytes());
    let r = &container.ranges;
    for (j, name) in r.feature_names().iter().enumerate() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::invalid(format!("feature name longer than 65535 bytes: {name:.32}...")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&r.lo()[j].to_le_bytes());
        out.extend_from_slice(&r.hi()[j].to_le_bytes());
    }
    out.extend_from_slice(&(compressed.len() as u64).to_le_bytes());
    out.extend_from_slice(&compressed);
    Ok(out)
}

/// Parsed header fields, without the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaderInfo {
    pub version: u8,
    pub bits: u32,
    pub n_rows: u64,
    pub ranges: RangeModel,
    pub header_bytes: u64,
    pub payload_compressed_len: u64,
    pub payload_raw_len: u64,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            what: "header",
            expected: (self.pos + n) as u64,
            actual: self.bytes.len() as u64,
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length matches"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn read_header(bytes: &[u8]) -> Result<HeaderInfo> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.array()?;
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = cur.u8()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let bits = u32::from(cur.u8()?);
    check_bits(bits).map_err(|_| Error::Corrupt(format!("bit width {bits} in header")))?;
    let p = u32::from_le_bytes(cur.array()?) as usize;
    let n_rows = u64::from_le_bytes(cur.array()?);
    let mut names = Vec::with_capacity(p.min(1 << 16));
    let mut lo = Vec::with_capacity(p.min(1 << 16));
    let mut hi = Vec::with_capacity(p.min(1 << 16));
    for _ in 0..p {
        let len = u16::from_le_bytes(cur.array()?) as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| Error::Corrupt("feature name is not UTF-8".into()))?;
        names.push(name.to_string());
        lo.push(f64::from_le_bytes(cur.array()?));
        hi.push(f64::from_le_bytes(cur.array()?));
    }
    let ranges = RangeModel::new(names, lo, hi).map_err(|e| Error::Corrupt(e.to_string()))?;
    let payload_compressed_len = u64::from_le_bytes(cur.array()?);
    Ok(HeaderInfo {
        version,
        bits,
        n_rows,
        payload_raw_len: payload_len(n_rows, p as u64, bits)?,
        ranges,
        header_bytes: cur.pos as u64,
        payload_compressed_len,
    })
}

/// Inverse of [`seal`].
pub fn open(bytes: &[u8]) -> Result<Container> {
    let header = read_header(bytes)?;
    let start = header.header_bytes as usize;
    let available = (bytes.len() - start) as u64;
    if available < header.payload_compressed_len {
        return Err(Error::Truncated {
            what: "payload stream",
            expected: header.payload_compressed_len,
            actual: available,
        });
    }
    if available > header.payload_compressed_len {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            available - header.payload_compressed_len
        )));
    }
    let mut payload = Vec::with_capacity(header.payload_raw_len as usize);
    DeflateDecoder::new(&bytes[start..])
        .take(header.payload_raw_len + 1)
        .read_to_end(&mut payload)
        .map_err(|e| Error::Corrupt(format!("payload stream: {e}")))?;
    if payload.len() as u64 != header.payload_raw_len {
        return Err(Error::Truncated {
            what: "payload",
            expected: header.payload_raw_len,
            actual: payload.len() as u64,
        });
    }
    Ok(Container {
        bits: header.bits as u8,
        n_rows: header.n_rows,
        ranges: header.ranges,
        payload,
    })
}

/// Lossless baselines for a table's features (labels and timestamps are not
/// counted): DEFLATE of the canonical CSV text and of row-major `f32` LE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSizes {
    pub csv_bytes: u64,
    pub f32_bytes: u64,
}

pub fn baseline_sizes(table: &FeatureTable, level: u32) -> Result<BaselineSizes> {
    let csv = deflate(canonical_csv(table).as_bytes(), level)?;
    let binary: Vec<u8> = table
        .values()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    let f32 = deflate(&binary, level)?;
    Ok(BaselineSizes {
        csv_bytes: csv.len() as u64,
        f32_bytes: f32.len() as u64,
    })
}

pub fn reduction_factor(baseline_bytes: u64, lossy_bytes: u64) -> Result<f64> {
    if baseline_bytes == 0 || lossy_bytes == 0 {
        return Err(Error::invalid("reduction factor needs positive sizes"));
    }
    Ok(baseline_bytes as f64 / lossy_bytes as f64)
}

/// Bits per second needed to keep `bytes` spread over `duration_seconds`.
pub fn storage_rate(bytes: u64, duration_seconds: f64) -> Result<f64> {
    if !(duration_seconds.is_finite() && duration_seconds > 0.0) {
        return Err(Error::invalid(format!(
            "duration {duration_seconds} must be positive"
        )));
    }
    Ok(8.0 * bytes as f64 / duration_seconds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageReport {
    pub lossy_bytes: u64,
    pub baseline_csv_bytes: u64,
    pub baseline_f32_bytes: u64,
    /// CSV baseline of the untransformed (unselected, unprojected) log.
    pub raw_csv_bytes: u64,
    pub reduction_vs_csv: f64,
    pub reduction_vs_f32: f64,
    pub reduction_vs_raw_csv: f64,
    pub bits_per_second: Option<f64>,
}

impl StorageReport {
    pub fn new(
        lossy_bytes: u64,
        baseline: BaselineSizes,
        raw_csv_bytes: u64,
        duration_seconds: Option<f64>,
    ) -> Result<Self> {
        Ok(Self {
            lossy_bytes,
            baseline_csv_bytes: baseline.csv_bytes,
            baseline_f32_bytes: baseline.f32_bytes,
            raw_csv_bytes,
            reduction_vs_csv: reduction_factor(baseline.csv_bytes, lossy_bytes)?,
            reduction_vs_f32: reduction_factor(baseline.f32_bytes, lossy_bytes)?,
            reduction_vs_raw_csv: reduction_factor(raw_csv_bytes, lossy_bytes)?,
            bits_per_second: duration_seconds.map(|d| storage_rate(lossy_bytes, d)).transpose()?,
        })
    }
}
