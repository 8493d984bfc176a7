//! Codebook and token-grid file formats.
//!
//! Text codebook: a `MASKCB v1 K d_vq seed` header line followed by `K` rows of
//! `d_vq` whitespace-separated decimals. Binary codebook: 16-byte magic
//! (`MSKCB1\0` zero-padded), `u32` K, `u32` d_vq, then `K·d_vq` little-endian
//! `f32`s.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{Codebook, CodecError, TokenGrid, TrainingMeta};

pub const BINARY_MAGIC: [u8; 16] = *b"MSKCB1\0\0\0\0\0\0\0\0\0\0";
const TEXT_TAG: &str = "MASKCB";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodebookFormat {
    Text,
    Binary,
}

pub fn write_codebook_text<W: Write>(cb: &Codebook, mut w: W) -> Result<(), CodecError> {
    writeln!(w, "{TEXT_TAG} v1 {} {} {}", cb.len(), cb.dim(), cb.meta.seed)?;
    for k in 0..cb.len() {
        let row: Vec<String> = cb.vector(k).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn write_codebook_binary<W: Write>(cb: &Codebook, mut w: W) -> Result<(), CodecError> {
    w.write_all(&BINARY_MAGIC)?;
    w.write_all(&(cb.len() as u32).to_le_bytes())?;
    w.write_all(&(cb.dim() as u32).to_le_bytes())?;
    let mut payload = Vec::with_capacity(cb.as_flat().len() * 4);
    for v in cb.as_flat() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&payload)?;
    Ok(())
}

/// Reads either format, sniffing the leading bytes.
pub fn read_codebook<R: Read>(r: R) -> Result<(Codebook, CodebookFormat), CodecError> {
    let mut bytes = Vec::new();
    BufReader::new(r).read_to_end(&mut bytes)?;
    if bytes.starts_with(&BINARY_MAGIC) {
        read_binary(&bytes).map(|cb| (cb, CodebookFormat::Binary))
    } else if bytes.starts_with(TEXT_TAG.as_bytes()) {
        read_text(&bytes).map(|cb| (cb, CodebookFormat::Text))
    } else {
        Err(CodecError::Parse("unrecognized codebook header".into()))
    }
}

fn read_binary(bytes: &[u8]) -> Result<Codebook, CodecError> {
    let header = 16 + 8;
    if bytes.len() < header {
        return Err(CodecError::Parse("truncated binary header".into()));
    }
    let k = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let expected = header + k * dim * 4;
    if bytes.len() != expected {
        return Err(CodecError::Parse(format!(
            "binary codebook is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let vectors = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Codebook::new(k, dim, vectors, TrainingMeta::default())
}

fn read_text(bytes: &[u8]) -> Result<Codebook, CodecError> {
    let mut lines = bytes.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| CodecError::Parse("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != TEXT_TAG || fields[1] != "v1" {
        return Err(CodecError::Parse(format!("bad header line {header:?}")));
    }
    let num = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| CodecError::Parse(format!("bad header field {s:?}")))
    };
    let k = num(fields[2])? as usize;
    let dim = num(fields[3])? as usize;
    let seed = num(fields[4])?;
    let mut vectors = Vec::with_capacity(k * dim);
    let mut rows = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = vectors.len();
        for tok in line.split_whitespace() {
            vectors.push(
                tok.parse::<f32>()
                    .map_err(|_| CodecError::Parse(format!("bad value {tok:?} in row {rows}")))?,
            );
        }
        if vectors.len() - before != dim {
            return Err(CodecError::Parse(format!(
                "row {rows} has {} values, expected {dim}",
                vectors.len() - before
            )));
        }
        rows += 1;
    }
    if rows != k {
        return Err(CodecError::Parse(format!("found {rows} rows, header says {k}")));
    }
    Codebook::new(
        k,
        dim,
        vectors,
        TrainingMeta {
            seed,
            ..TrainingMeta::default()
        },
    )
}

/// JSON token file: `{"h": _, "w": _, "tokens": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFile {
    pub h: usize,
    pub w: usize,
    pub tokens: Vec<u32>,
}

impl From<&TokenGrid> for TokenFile {
    fn from(g: &TokenGrid) -> Self {
        Self {
            h: g.rows(),
            w: g.cols(),
            tokens: g.as_slice().to_vec(),
        }
    }
}

impl TryFrom<TokenFile> for TokenGrid {
    type Error = CodecError;

    fn try_from(f: TokenFile) -> Result<Self, Self::Error> {
        TokenGrid::new(f.h, f.w, f.tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Codebook {
        let v = vec![-1.0, 0.125, 3.3333333, 1e-7, 0.1, -0.0];
        Codebook::new(
            3,
            2,
            v,
            TrainingMeta {
                seed: 9,
                iterations: 4,
                sample_count: 10,
            },
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip_is_exact() {
        let cb = sample();
        let mut buf = Vec::new();
        write_codebook_text(&cb, &mut buf).unwrap();
        assert!(buf.starts_with(b"MASKCB v1 3 2 9\n"));
        let (back, fmt) = read_codebook(&buf[..]).unwrap();
        assert_eq!(fmt, CodebookFormat::Text);
        let bits = |c: &Codebook| c.as_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&cb));
        assert_eq!(back.meta.seed, 9);
    }

    #[test]
    fn binary_layout() {
        let cb = sample();
        let mut buf = Vec::new();
        write_codebook_binary(&cb, &mut buf).unwrap();
        assert_eq!(&buf[..7], b"MSKCB1\0");
        assert_eq!(buf.len(), 16 + 8 + 6 * 4);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(buf[28..32].try_into().unwrap()), 0.125);
        let (back, fmt) = read_codebook(&buf[..]).unwrap();
        assert_eq!(fmt, CodebookFormat::Binary);
        assert_eq!(back.as_flat(), cb.as_flat());
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_codebook(&b"MASKCB v1 2 2 0\n1 2\n"[..]).is_err());
        assert!(read_codebook(&b"MASKCB v1 2 2 0\n1 2\n3\n"[..]).is_err());
        assert!(read_codebook(&b"nope"[..]).is_err());
        let mut buf = BINARY_MAGIC.to_vec();
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        assert!(read_codebook(&buf[..]).is_err());
    }

    #[test]
    fn token_json_shape() {
        let g = TokenGrid::new(1, 2, vec![5, 6]).unwrap();
        let s = serde_json::to_string(&TokenFile::from(&g)).unwrap();
        assert_eq!(s, r#"{"h":1,"w":2,"tokens":[5,6]}"#);
        let f: TokenFile = serde_json::from_str(&s).unwrap();
        assert_eq!(TokenGrid::try_from(f).unwrap(), g);
        let bad: TokenFile = serde_json::from_str(r#"{"h":2,"w":2,"tokens":[1]}"#).unwrap();
        assert!(TokenGrid::try_from(bad).is_err());
    }
}
