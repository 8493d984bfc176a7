//! Binary masks, RGB images and their netpbm (PGM/PPM) encodings.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions must be positive, got {height}x{width}")]
    EmptyDims { height: usize, width: usize },
    #[error("pixel buffer has {got} entries, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("pixel value {value} at index {index} is not 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("dimension mismatch: {a_h}x{a_w} vs {b_h}x{b_w}")]
    DimMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },
    #[error("malformed netpbm data: {0}")]
    Netpbm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An H×W grid of foreground flags, stored row-major as 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDims { height, width });
        }
        Ok(Self {
            height,
            width,
            pixels: vec![0; height * width],
        })
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDims { height, width });
        }
        if pixels.len() != height * width {
            return Err(ImageError::BufferSize {
                expected: height * width,
                got: pixels.len(),
            });
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(ImageError::NotBinary { index, value });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self, ImageError> {
        let mut mask = Self::new(height, width)?;
        for r in 0..height {
            for c in 0..width {
                mask.pixels[r * width + c] = f(r, c) as u8;
            }
        }
        Ok(mask)
    }

    pub fn full(height: usize, width: usize) -> Result<Self, ImageError> {
        Self::from_fn(height, width, |_, _| true)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.pixels[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.pixels[row * self.width + col] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0)
    }

    pub fn check_same_dims(&self, other: &Self) -> Result<(), ImageError> {
        if self.dims() != other.dims() {
            return Err(ImageError::DimMismatch {
                a_h: self.height,
                a_w: self.width,
                b_h: other.height,
                b_w: other.width,
            });
        }
        Ok(())
    }

    /// Returns `(|a ∩ b|, |a ∪ b|)`.
    pub fn overlap_counts(&self, other: &Self) -> Result<(u64, u64), ImageError> {
        self.check_same_dims(other)?;
        let mut inter = 0u64;
        let mut union = 0u64;
        for (&a, &b) in self.pixels.iter().zip(&other.pixels) {
            inter += (a & b) as u64;
            union += (a | b) as u64;
        }
        Ok((inter, union))
    }

    pub fn union_with(&mut self, other: &Self) -> Result<(), ImageError> {
        self.check_same_dims(other)?;
        for (a, &b) in self.pixels.iter_mut().zip(&other.pixels) {
            *a |= b;
        }
        Ok(())
    }

    /// Tight bounding box of the foreground as `(row_min, col_min, row_max, col_max)`,
    /// inclusive. `None` for an empty mask.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    out = Some(match out {
                        None => (r, c, r, c),
                        Some((r0, c0, r1, c1)) => (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
                    });
                }
            }
        }
        out
    }

    /// Writes binary PGM (P5): 0 = background, 255 = foreground.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().map(|&p| p * 255).collect();
        w.write_all(&bytes)
    }

    /// Reads binary PGM (P5). Any nonzero sample is foreground.
    pub fn read_pgm<R: Read>(r: R) -> Result<Self, ImageError> {
        let (header, data) = read_netpbm(r, "P5", 1)?;
        let pixels = data.iter().map(|&v| (v != 0) as u8).collect();
        Self::from_pixels(header.height, header.width, pixels)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_pgm(&mut w)?;
        w.flush()
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::read_pgm(std::fs::File::open(path)?)
    }
}

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, fill: [u8; 3]) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDims { height, width });
        }
        let data = fill
            .iter()
            .copied()
            .cycle()
            .take(height * width * 3)
            .collect();
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::EmptyDims { height, width });
        }
        if data.len() != height * width * 3 {
            return Err(ImageError::BufferSize {
                expected: height * width * 3,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    /// Reads P6 (colour) or P5 (grey, replicated to three channels).
    pub fn read_netpbm<R: Read>(r: R) -> Result<Self, ImageError> {
        let mut reader = BufReader::new(r);
        let magic = peek_magic(&mut reader)?;
        match magic.as_str() {
            "P6" => {
                let (h, data) = read_netpbm(reader, "P6", 3)?;
                Self::from_raw(h.height, h.width, data)
            }
            "P5" => {
                let (h, data) = read_netpbm(reader, "P5", 1)?;
                let rgb = data.iter().flat_map(|&v| [v, v, v]).collect();
                Self::from_raw(h.height, h.width, rgb)
            }
            other => Err(ImageError::Netpbm(format!("unsupported magic {other:?}"))),
        }
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_ppm(&mut w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::read_netpbm(std::fs::File::open(path)?)
    }
}

struct NetpbmHeader {
    width: usize,
    height: usize,
}

fn peek_magic<R: BufRead>(r: &mut R) -> Result<String, ImageError> {
    let buf = r.fill_buf()?;
    if buf.len() < 2 {
        return Err(ImageError::Netpbm("truncated header".into()));
    }
    Ok(String::from_utf8_lossy(&buf[..2]).into_owned())
}

fn read_netpbm<R: Read>(
    r: R,
    magic: &str,
    channels: usize,
) -> Result<(NetpbmHeader, Vec<u8>), ImageError> {
    let mut reader = BufReader::new(r);
    let mut tokens = Vec::with_capacity(4);
    let mut current = Vec::new();
    let mut in_comment = false;
    // magic, width, height, maxval; exactly one whitespace byte precedes the raster
    while tokens.len() < 4 {
        let mut byte = [0u8; 1];
        if reader.read(&mut byte)? == 0 {
            return Err(ImageError::Netpbm("truncated header".into()));
        }
        let b = byte[0];
        if in_comment {
            in_comment = b != b'\n';
            continue;
        }
        if b == b'#' {
            in_comment = true;
        } else if b.is_ascii_whitespace() {
            if !current.is_empty() {
                tokens.push(String::from_utf8_lossy(&current).into_owned());
                current.clear();
            }
        } else {
            current.push(b);
        }
    }
    if tokens[0] != magic {
        return Err(ImageError::Netpbm(format!(
            "expected magic {magic}, found {}",
            tokens[0]
        )));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| ImageError::Netpbm(format!("bad {what}: {s:?}")))
    };
    let width = parse(&tokens[1], "width")?;
    let height = parse(&tokens[2], "height")?;
    let maxval = parse(&tokens[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::Netpbm(format!("unsupported maxval {maxval}")));
    }
    let mut data = vec![0u8; width * height * channels];
    reader
        .read_exact(&mut data)
        .map_err(|_| ImageError::Netpbm("truncated raster".into()))?;
    Ok((NetpbmHeader { width, height }, data))
}
