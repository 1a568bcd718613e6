//! Byte encoding of published payloads.
//!
//! A payload is a one-line text header followed by length-prefixed named
//! blocks. Each block is `u32` name length, name, `u64` rows, `u64` cols and
//! the entries row-major as little-endian `f64`. Vectors are `len x 1` blocks.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::masking::MaskedPartyData;

pub const PAYLOAD_MAGIC: &str = "privbid-masked/1";
pub const OFFSET_MAGIC: &str = "privbid-offset/1";

const BLOCK_NAMES: [&str; 12] = [
    "r_bar", "xi_bar", "a_bar", "b_bar", "f_bar", "c_bar", "g_bar", "one_bar", "h_bar", "eta_bar", "l_bar",
    "a_eta",
];

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

fn put_block(out: &mut Vec<u8>, name: &str, rows: usize, cols: usize, data: &[f64]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_payload(p: &MaskedPartyData) -> Vec<u8> {
    let header = format!(
        "{PAYLOAD_MAGIC} party={} n={} s={} t={} m={} mk={}\n",
        p.party,
        p.one_bar.len(),
        p.s(),
        p.t(),
        p.a_eta.len(),
        p.m_private()
    );
    let mut out = header.into_bytes();
    let vec_block = |out: &mut Vec<u8>, name: &str, v: &[f64]| put_block(out, name, v.len(), 1, v);
    let mat_block = |out: &mut Vec<u8>, name: &str, m: &Matrix| put_block(out, name, m.rows(), m.cols(), m.as_slice());
    vec_block(&mut out, "r_bar", &p.r_bar);
    vec_block(&mut out, "xi_bar", &p.xi_bar);
    mat_block(&mut out, "a_bar", &p.a_bar);
    mat_block(&mut out, "b_bar", &p.b_bar);
    mat_block(&mut out, "f_bar", &p.f_bar);
    vec_block(&mut out, "c_bar", &p.c_bar);
    mat_block(&mut out, "g_bar", &p.g_bar);
    vec_block(&mut out, "one_bar", &p.one_bar);
    mat_block(&mut out, "h_bar", &p.h_bar);
    vec_block(&mut out, "eta_bar", &p.eta_bar);
    mat_block(&mut out, "l_bar", &p.l_bar);
    vec_block(&mut out, "a_eta", &p.a_eta);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Wire("truncated payload".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Wire("dimension overflow".into()))
    }

    fn block(&mut self, expected: &str) -> Result<Matrix> {
        let len = self.u32()? as usize;
        let name = core::str::from_utf8(self.take(len)?).map_err(|_| Error::Wire("block name is not UTF-8".into()))?;
        if name != expected {
            return Err(Error::Wire(format!("expected block {expected}, found {name}")));
        }
        let rows = self.u64()?;
        let cols = self.u64()?;
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= self.bytes.len() - self.pos))
            .ok_or_else(|| Error::Wire(format!("block {name} is larger than the payload")))?;
        let raw = self.take(count * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_row_major(rows, cols, data)
    }

    fn vector(&mut self, expected: &str) -> Result<Vec<f64>> {
        let m = self.block(expected)?;
        if m.cols() != 1 {
            return Err(Error::Wire(format!("{expected} must be a column")));
        }
        Ok(m.as_slice().to_vec())
    }
}

/// Header fields `key=value` after the magic word.
fn parse_header<'a>(bytes: &'a [u8], magic: &str) -> Result<(Vec<(&'a str, &'a str)>, usize)> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Wire("missing header".into()))?;
    let line = core::str::from_utf8(&bytes[..end]).map_err(|_| Error::Wire("header is not UTF-8".into()))?;
    let mut parts = line.split(' ');
    if parts.next() != Some(magic) {
        return Err(Error::Wire(format!("expected {magic} header")));
    }
    let fields = parts
        .map(|kv| kv.split_once('=').ok_or_else(|| Error::Wire(format!("bad header field {kv}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((fields, end + 1))
}

fn field(fields: &[(&str, &str)], key: &str) -> Result<usize> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .ok_or_else(|| Error::Wire(format!("header lacks {key}")))?
        .1
        .parse()
        .map_err(|_| Error::Wire(format!("header field {key} is not an integer")))
}

/// Dimensions announced in a payload header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PayloadHeader {
    pub party: usize,
    pub n: usize,
    pub s: usize,
    pub t: usize,
    pub m: usize,
    pub mk: usize,
}

pub fn decode_header(bytes: &[u8]) -> Result<PayloadHeader> {
    let (fields, _) = parse_header(bytes, PAYLOAD_MAGIC)?;
    Ok(PayloadHeader {
        party: field(&fields, "party")?,
        n: field(&fields, "n")?,
        s: field(&fields, "s")?,
        t: field(&fields, "t")?,
        m: field(&fields, "m")?,
        mk: field(&fields, "mk")?,
    })
}

pub fn decode_payload(bytes: &[u8]) -> Result<MaskedPartyData> {
    let header = decode_header(bytes)?;
    let (_, start) = parse_header(bytes, PAYLOAD_MAGIC)?;
    let mut r = Reader { bytes, pos: start };
    let p = MaskedPartyData {
        party: header.party,
        r_bar: r.vector(BLOCK_NAMES[0])?,
        xi_bar: r.vector(BLOCK_NAMES[1])?,
        a_bar: r.block(BLOCK_NAMES[2])?,
        b_bar: r.block(BLOCK_NAMES[3])?,
        f_bar: r.block(BLOCK_NAMES[4])?,
        c_bar: r.vector(BLOCK_NAMES[5])?,
        g_bar: r.block(BLOCK_NAMES[6])?,
        one_bar: r.vector(BLOCK_NAMES[7])?,
        h_bar: r.block(BLOCK_NAMES[8])?,
        eta_bar: r.vector(BLOCK_NAMES[9])?,
        l_bar: r.block(BLOCK_NAMES[10])?,
        a_eta: r.vector(BLOCK_NAMES[11])?,
    };
    if r.pos != bytes.len() {
        return Err(Error::Wire("trailing bytes after the last block".into()));
    }
    let dims_ok = p.one_bar.len() == header.n
        && p.s() == header.s
        && p.t() == header.t
        && p.m_private() == header.mk;
    if !dims_ok {
        return Err(Error::Wire("block sizes disagree with the header".into()));
    }
    p.validate(header.m)?;
    Ok(p)
}

pub fn encode_offset(party: usize, offset: f64) -> Vec<u8> {
    let mut out = format!("{OFFSET_MAGIC} party={party}\n").into_bytes();
    out.extend_from_slice(&offset.to_le_bytes());
    out
}

pub fn decode_offset(bytes: &[u8]) -> Result<(usize, f64)> {
    let (fields, start) = parse_header(bytes, OFFSET_MAGIC)?;
    let party = field(&fields, "party")?;
    let raw: [u8; 8] = bytes[start..]
        .try_into()
        .map_err(|_| Error::Wire("offset body must be 8 bytes".into()))?;
    Ok((party, f64::from_le_bytes(raw)))
}

/// Row-major little-endian bytes of a vector, used by plaintext scans.
pub fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn block_names() -> Vec<String> {
    BLOCK_NAMES.iter().map(|s| s.to_string()).collect()
}
