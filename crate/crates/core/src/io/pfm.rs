//! Portable float maps: `PF` (3 channels) or `Pf` (1 channel), a `width
//! height` line, a scale whose sign gives the byte order (negative = little
//! endian), then `f32` samples with the bottom image row first.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::NormalField;

/// A decoded float map. `data` is row-major from the top row, channels
/// interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn at(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.cols + col) * self.channels + ch]
    }
}

pub fn encode_pfm(img: &FloatImage) -> Vec<u8> {
    let tag = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.cols, img.rows).into_bytes();
    out.reserve(img.data.len() * 4);
    let stride = img.cols * img.channels;
    for row in (0..img.rows).rev() {
        for v in &img.data[row * stride..(row + 1) * stride] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, img: &FloatImage) -> Result<()> {
    if img.channels != 1 && img.channels != 3 {
        return Err(Error::format(path, format!("PFM holds 1 or 3 channels, not {}", img.channels)));
    }
    fs::write(path, encode_pfm(img)).map_err(|e| Error::io(path, e))
}

/// Next whitespace-delimited header token, starting at `*pos`.
fn token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(path, "truncated PFM header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::format(path, "non-ASCII PFM header"))
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<FloatImage> {
    let mut pos = 0;
    let channels = match token(bytes, &mut pos, path)? {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::format(path, format!("bad PFM magic '{other}'"))),
    };
    let parse_dim = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| Error::format(path, format!("bad PFM dimension '{s}'")))
    };
    let cols = parse_dim(token(bytes, &mut pos, path)?)?;
    let rows = parse_dim(token(bytes, &mut pos, path)?)?;
    let scale_tok = token(bytes, &mut pos, path)?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| *s != 0.0 && s.is_finite())
        .ok_or_else(|| Error::format(path, format!("bad PFM scale '{scale_tok}'")))?;
    // Exactly one whitespace byte separates the header from the samples.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(path, "truncated PFM header"));
    }
    pos += 1;
    let count = rows * cols * channels;
    let body = &bytes[pos..];
    if body.len() != count * 4 {
        return Err(Error::format(
            path,
            format!("expected {} data bytes, found {}", count * 4, body.len()),
        ));
    }
    let little = scale < 0.0;
    let stride = cols * channels;
    let mut data = vec![0f32; count];
    for (i, chunk) in body.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let file_row = i / stride;
        data[(rows - 1 - file_row) * stride + i % stride] = v;
    }
    Ok(FloatImage {
        rows,
        cols,
        channels,
        data,
    })
}

pub fn read_pfm(path: &Path) -> Result<FloatImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

/// Normals are stored as `f32`, so the round trip is exact for values
/// representable in single precision.
pub fn save_normal_map(normals: &NormalField, path: &Path) -> Result<()> {
    if !normals.all_finite() {
        return Err(Error::InvalidArgument("normal field has non-finite entries".into()));
    }
    write_pfm(path, &normals_to_image(normals))
}

pub fn normals_to_image(normals: &NormalField) -> FloatImage {
    let (rows, cols) = (normals.rows(), normals.cols());
    let mut data = Vec::with_capacity(rows * cols * 3);
    for r in 0..rows {
        for c in 0..cols {
            data.extend(normals.get(r, c).iter().map(|&v| v as f32));
        }
    }
    FloatImage {
        rows,
        cols,
        channels: 3,
        data,
    }
}

pub fn load_normal_map(path: &Path) -> Result<NormalField> {
    let img = read_pfm(path)?;
    if img.channels != 3 {
        return Err(Error::format(path, "normal map must have 3 channels"));
    }
    Ok(NormalField::from_fn(img.rows, img.cols, |r, c| {
        [
            img.at(r, c, 0) as f64,
            img.at(r, c, 1) as f64,
            img.at(r, c, 2) as f64,
        ]
    }))
}

/// Single-channel map of a column-major scalar field.
pub fn save_scalar_map(values: &[f64], rows: usize, cols: usize, path: &Path) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::dim("scalar map size does not match its shape"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(values[r + c * rows] as f32);
        }
    }
    write_pfm(
        path,
        &FloatImage {
            rows,
            cols,
            channels: 1,
            data,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_and_size() {
        let n = NormalField::filled(4, 4, [0.0, 0.0, 1.0]);
        let bytes = encode_pfm(&normals_to_image(&n));
        let header = b"PF\n4 4\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len() - header.len(), 192);
    }

    #[test]
    fn bottom_row_first() {
        let img = FloatImage {
            rows: 2,
            cols: 1,
            channels: 1,
            data: vec![1.0, 2.0],
        };
        let bytes = encode_pfm(&img);
        let body = &bytes[bytes.len() - 8..];
        assert_eq!(body, [2f32.to_le_bytes(), 1f32.to_le_bytes()].concat());
        assert_eq!(decode_pfm(&bytes, Path::new("x")).unwrap(), img);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.pfm");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = NormalField::from_fn(7, 5, |_, _| {
            [0, 1, 2].map(|_| rng.random_range(-1.0f32..1.0) as f64)
        });
        save_normal_map(&n, &path).unwrap();
        let back = load_normal_map(&path).unwrap();
        for (a, b) in n.pixels().iter().zip(back.pixels()) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
    }

    #[test]
    fn big_endian_is_read() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&0.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-3f32).to_be_bytes());
        let img = decode_pfm(&bytes, Path::new("x")).unwrap();
        assert_eq!(img.data, vec![0.5, -3.0]);
    }

    #[test]
    fn malformed_headers_rejected() {
        for bad in [&b"P6\n1 1\n-1.0\n"[..], b"PF\n0 1\n-1.0\n", b"PF\n1 1\nabc\n", b"PF\n1 1\n-1.0\n\0\0"] {
            assert!(matches!(decode_pfm(bad, Path::new("x")), Err(Error::Format { .. })));
        }
    }
}
