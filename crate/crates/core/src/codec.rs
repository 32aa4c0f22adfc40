//! Little-endian binary container shared by model checkpoints and data caches.
//!
//! ```text
//! magic        8 bytes
//! version      u16 major, u16 minor, u16 patch, u16 reserved (zero)
//! tag          8 bytes   (config hash for caches, zero for checkpoints)
//! body_len     u64
//! body         body_len bytes
//! checksum     SHA-256 over every preceding byte
//! ```
//!
//! A reader accepts any minor/patch version of the major it was built for.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const HEADER_LEN: usize = 8 + 8 + 8 + 8;
const CHECKSUM_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Version {
    pub major: u16,
    pub minor: u16,
    pub patch: u16,
}

impl std::fmt::Display for Version {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

pub struct Container<'a> {
    pub version: Version,
    pub tag: [u8; 8],
    pub body: &'a [u8],
}

pub fn seal(magic: &[u8; 8], version: Version, tag: [u8; 8], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + CHECKSUM_LEN);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.major.to_le_bytes());
    out.extend_from_slice(&version.minor.to_le_bytes());
    out.extend_from_slice(&version.patch.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&tag);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn open<'a>(magic: &[u8; 8], major: u16, bytes: &'a [u8]) -> Result<Container<'a>> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "missing magic header {:?}",
            String::from_utf8_lossy(magic).trim_end_matches('\0')
        )));
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(Error::Checksum);
    }
    let mut header = ByteReader::new(&bytes[8..HEADER_LEN]);
    let version = Version {
        major: header.u16()?,
        minor: header.u16()?,
        patch: header.u16()?,
    };
    let _reserved = header.u16()?;
    let mut tag = [0u8; 8];
    tag.copy_from_slice(header.take(8)?);
    let body_len = header.u64()?;
    let available = (bytes.len() - HEADER_LEN - CHECKSUM_LEN) as u64;
    if body_len != available {
        return Err(Error::Checksum);
    }
    let end = HEADER_LEN + body_len as usize;
    let digest = Sha256::digest(&bytes[..end]);
    if digest.as_slice() != &bytes[end..] {
        return Err(Error::Checksum);
    }
    if version.major != major {
        return Err(Error::Format(format!(
            "unsupported version {version}, this build reads {major}.x"
        )));
    }
    Ok(Container {
        version,
        tag,
        body: &bytes[HEADER_LEN..end],
    })
}

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, v: &str) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v.as_bytes());
    }

    pub fn u32s(&mut self, vs: &[u32]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.u32(v);
        }
    }
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() {
            return Err(Error::Format(format!(
                "unexpected end of data: need {n} bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    /// Reads a `u64` length prefix and checks that `len * elem_size` bytes
    /// are actually present before anything is allocated.
    pub fn len_prefix(&mut self, elem_size: usize) -> Result<usize> {
        let len = self.u64()?;
        let len = usize::try_from(len).map_err(|_| Error::Format("length overflow".into()))?;
        match len.checked_mul(elem_size) {
            Some(total) if total <= self.buf.len() => Ok(len),
            _ => Err(Error::Format(format!(
                "declared length {len} exceeds remaining {} bytes",
                self.buf.len()
            ))),
        }
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.len_prefix(1)?;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }

    pub fn u32s(&mut self) -> Result<Vec<u32>> {
        let len = self.len_prefix(4)?;
        (0..len).map(|_| self.u32()).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(format!("{} trailing bytes", self.buf.len())))
        }
    }
}
