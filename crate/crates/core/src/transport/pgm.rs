//! Minimal PGM (portable graymap) reader and writer.
//!
//! Supports the ASCII (`P2`) and binary (`P5`) encodings at 8 or 16
//! bits per sample, which is everything microscopy exports in practice.
//! Images become mass vectors through [`PgmImage::to_simplex`], ready
//! to serve as transport marginals.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("malformed PGM: {0}")]
    Malformed(String),
    #[error("image carries no mass; it cannot be normalized")]
    EmptyMass,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A grayscale image with row-major samples in `0..=maxval`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

impl PgmImage {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self, PgmError> {
        if width == 0 || height == 0 {
            return Err(PgmError::Malformed("zero image dimension".into()));
        }
        if maxval == 0 {
            return Err(PgmError::Malformed("maxval must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(PgmError::Malformed(format!(
                "{} samples for a {width}×{height} image",
                pixels.len()
            )));
        }
        if let Some(&bad) = pixels.iter().find(|&&v| v > maxval) {
            return Err(PgmError::Malformed(format!(
                "sample {bad} exceeds maxval {maxval}"
            )));
        }
        Ok(PgmImage {
            width,
            height,
            maxval,
            pixels,
        })
    }

    /// Normalizes pixel intensities to a probability vector (row-major),
    /// so the image can act as a transport marginal.
    pub fn to_simplex(&self) -> Result<Vec<f64>, PgmError> {
        let total: f64 = self.pixels.iter().map(|&v| v as f64).sum();
        if total <= 0.0 {
            return Err(PgmError::EmptyMass);
        }
        let mut v: Vec<f64> = self.pixels.iter().map(|&p| p as f64 / total).collect();
        // One more pass removes the accumulated rounding of the long sum,
        // which for megapixel images can exceed the simplex tolerance.
        let second: f64 = v.iter().sum();
        for x in &mut v {
            *x /= second;
        }
        Ok(v)
    }
}

/// Pulls the next whitespace-delimited token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], PgmError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return Err(PgmError::Malformed("unexpected end of header".into()));
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8]) -> Result<u64, PgmError> {
    let s = std::str::from_utf8(token)
        .map_err(|_| PgmError::Malformed("non-ASCII header token".into()))?;
    s.parse()
        .map_err(|_| PgmError::Malformed(format!("expected a number, found {s:?}")))
}

/// Parses a PGM image from raw bytes.
pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage, PgmError> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let binary = match magic {
        b"P2" => false,
        b"P5" => true,
        other => {
            return Err(PgmError::Malformed(format!(
                "unsupported magic {:?} (want P2 or P5)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = parse_number(next_token(bytes, &mut pos)?)? as usize;
    let height = parse_number(next_token(bytes, &mut pos)?)? as usize;
    let maxval = parse_number(next_token(bytes, &mut pos)?)?;
    if maxval == 0 || maxval > 65_535 {
        return Err(PgmError::Malformed(format!("maxval {maxval} out of range")));
    }
    let maxval = maxval as u16;
    let count = width
        .checked_mul(height)
        .ok_or_else(|| PgmError::Malformed("image dimensions overflow".into()))?;

    let pixels = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(PgmError::Malformed("missing separator before raster".into()));
        }
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| PgmError::Malformed("truncated raster".into()))?;
        if wide {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            raster.iter().map(|&b| b as u16).collect()
        }
    } else {
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            let n = parse_number(next_token(bytes, &mut pos)?)?;
            if n > 65_535 {
                return Err(PgmError::Malformed(format!("sample {n} out of range")));
            }
            v.push(n as u16);
        }
        v
    };
    PgmImage::new(width, height, maxval, pixels)
}

/// Reads a PGM file from disk.
pub fn read_pgm(path: &Path) -> Result<PgmImage, PgmError> {
    parse_pgm(&fs::read(path)?)
}

/// Serializes an image in the ASCII (`P2`) encoding.
pub fn encode_p2(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.extend_from_slice(line.join(" ").as_bytes());
        out.push(b'\n');
    }
    out
}

/// Serializes an image in the binary (`P5`) encoding; 16-bit samples
/// are written big-endian as the format requires.
pub fn encode_p5(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for &v in &img.pixels {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(img.pixels.iter().map(|&v| v as u8));
    }
    out
}

/// Writes an image to disk, binary (`P5`) unless `ascii` is set.
pub fn write_pgm(path: &Path, img: &PgmImage, ascii: bool) -> Result<(), PgmError> {
    let bytes = if ascii { encode_p2(img) } else { encode_p5(img) };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PgmImage {
        PgmImage::new(3, 2, 255, vec![0, 10, 20, 30, 40, 250]).unwrap()
    }

    #[test]
    fn ascii_round_trip_with_comments() {
        let text = b"P2 # magic\n# a comment line\n 3 2\n255\n0 10 20\n30 40 250\n";
        let img = parse_pgm(text).unwrap();
        assert_eq!(img, sample());
        assert_eq!(parse_pgm(&encode_p2(&img)).unwrap(), img);
    }

    #[test]
    fn binary_round_trip_both_depths() {
        let img8 = sample();
        assert_eq!(parse_pgm(&encode_p5(&img8)).unwrap(), img8);

        let img16 = PgmImage::new(2, 2, 65_535, vec![0, 300, 65_535, 7]).unwrap();
        let bytes = encode_p5(&img16);
        // Big-endian: the second sample 300 = 0x012C.
        let raster = &bytes[bytes.len() - 8..];
        assert_eq!(&raster[2..4], &[0x01, 0x2C]);
        assert_eq!(parse_pgm(&bytes).unwrap(), img16);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(matches!(parse_pgm(b"P3\n1 1\n255\n0"), Err(PgmError::Malformed(_))));
        assert!(parse_pgm(b"P2\n2 2\n255\n1 2 3").is_err()); // missing sample
        assert!(parse_pgm(b"P5\n2 2\n255\n\x01\x02\x03").is_err()); // truncated raster
        assert!(parse_pgm(b"P2\n1 1\n255\n300").is_err()); // sample above maxval
        assert!(parse_pgm(b"P2\n1 1\n0\n0").is_err()); // zero maxval
    }

    #[test]
    fn normalization_lands_on_the_simplex() {
        let img = PgmImage::new(2, 2, 255, vec![1, 3, 0, 4]).unwrap();
        let v = img.to_simplex().unwrap();
        assert_eq!(v, vec![0.125, 0.375, 0.0, 0.5]);
        let sum: f64 = v.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-15);

        let blank = PgmImage::new(2, 1, 255, vec![0, 0]).unwrap();
        assert!(matches!(blank.to_simplex(), Err(PgmError::EmptyMass)));
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("lp_debias_pgm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("img.pgm");
        let img = sample();
        write_pgm(&path, &img, false).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
        write_pgm(&path, &img, true).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
        std::fs::remove_dir_all(&dir).ok();
    }
}
