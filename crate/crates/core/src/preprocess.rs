//! Grayscale image handling: binary PGM I/O, eye-based similarity alignment to
//! the canonical 70x60 face frame, and histogram equalization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical face frame height.
pub const FACE_HEIGHT: usize = 70;
/// Canonical face frame width.
pub const FACE_WIDTH: usize = 60;
/// Length of a flattened canonical face.
pub const FACE_DIM: usize = FACE_HEIGHT * FACE_WIDTH;

/// Canonical eye centres in the 70x60 frame: both on row 24, columns 18 and 41.
pub const CANONICAL_LEFT_EYE: EyePoint = EyePoint { row: 24.0, col: 18.0 };
pub const CANONICAL_RIGHT_EYE: EyePoint = EyePoint { row: 24.0, col: 41.0 };

/// A pixel position, `row` down and `col` across, in source-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyePoint {
    pub row: f64,
    pub col: f64,
}

impl EyePoint {
    pub fn new(row: f64, col: f64) -> Self {
        EyePoint { row, col }
    }
}

/// 8-bit grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Image(format!("empty image {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::Image(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }
}

/// Serializes as binary PGM: `P5\n<width> <height>\n255\n` followed by the raw bytes.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Parses a binary (P5) PGM. Comments in the header are skipped; sample
/// values are kept as stored, without rescaling for maxval < 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::UnsupportedMagic(String::from_utf8_lossy(bytes).into_owned()));
    }
    if &bytes[..2] != b"P5" {
        return Err(Error::UnsupportedMagic(String::from_utf8_lossy(&bytes[..2]).into_owned()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Image("truncated or non-numeric PGM header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::Image(format!("header value {text} out of range")))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Image(format!("maxval {maxval} not in 1..=255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Image("missing whitespace after PGM header".into())),
    }
    let needed = width
        .checked_mul(height)
        .ok_or_else(|| Error::Image("image dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < needed {
        return Err(Error::Image(format!(
            "truncated payload: {} of {needed} bytes",
            payload.len()
        )));
    }
    GrayImage::new(height, width, payload[..needed].to_vec())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Bilinear sample at fractional `(row, col)`; neighbours outside the image
/// contribute 0.
fn sample_bilinear(img: &GrayImage, row: f64, col: f64) -> f64 {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= img.height as f64 || c >= img.width as f64 {
            0.0
        } else {
            img.get(r as usize, c as usize) as f64
        }
    };
    let mut acc = 0.0;
    if (1.0 - fr) * (1.0 - fc) != 0.0 {
        acc += (1.0 - fr) * (1.0 - fc) * at(r0, c0);
    }
    if (1.0 - fr) * fc != 0.0 {
        acc += (1.0 - fr) * fc * at(r0, c0 + 1.0);
    }
    if fr * (1.0 - fc) != 0.0 {
        acc += fr * (1.0 - fc) * at(r0 + 1.0, c0);
    }
    if fr * fc != 0.0 {
        acc += fr * fc * at(r0 + 1.0, c0 + 1.0);
    }
    acc
}

/// Similarity-aligns `img` so the given eyes land on the canonical eye
/// positions, then samples the 70x60 frame bilinearly (zero outside the
/// source). `eye_left` maps to column 18 and `eye_right` to column 41.
pub fn align_crop_resize(img: &GrayImage, eye_left: EyePoint, eye_right: EyePoint) -> Result<GrayImage> {
    let d_row = eye_right.row - eye_left.row;
    let d_col = eye_right.col - eye_left.col;
    let src_dist = d_row.hypot(d_col);
    if !src_dist.is_finite() || src_dist == 0.0 {
        return Err(Error::invalid("eye coordinates coincide"));
    }
    if eye_left.row.round() == eye_right.row.round() && eye_left.col.round() == eye_right.col.round() {
        return Err(Error::invalid("zero inter-eye distance after rounding"));
    }
    let canon_dist = CANONICAL_RIGHT_EYE.col - CANONICAL_LEFT_EYE.col;
    let scale = src_dist / canon_dist;
    let angle = d_row.atan2(d_col);
    let (sin, cos) = angle.sin_cos();
    let mid_row = 0.5 * (eye_left.row + eye_right.row);
    let mid_col = 0.5 * (eye_left.col + eye_right.col);
    let out_mid_row = CANONICAL_LEFT_EYE.row;
    let out_mid_col = 0.5 * (CANONICAL_LEFT_EYE.col + CANONICAL_RIGHT_EYE.col);

    GrayImage::from_fn(FACE_HEIGHT, FACE_WIDTH, |r, c| {
        let dr = r as f64 - out_mid_row;
        let dc = c as f64 - out_mid_col;
        let src_col = mid_col + scale * (cos * dc - sin * dr);
        let src_row = mid_row + scale * (sin * dc + cos * dr);
        sample_bilinear(img, src_row, src_col).round().clamp(0.0, 255.0) as u8
    })
}

/// CDF histogram equalization: `v -> round((cdf(v) - cdf_min) / (N - cdf_min) * 255)`.
/// A constant image is returned unchanged.
pub fn histogram_equalize(img: &GrayImage) -> GrayImage {
    let mut hist = [0usize; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut running = 0;
    for (level, count) in hist.iter().enumerate() {
        running += count;
        cdf[level] = running;
    }
    let total = img.pixels.len();
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if total == cdf_min {
        return img.clone();
    }
    let denom = (total - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for level in 0..256 {
        let v = (cdf[level].saturating_sub(cdf_min)) as f64 / denom * 255.0;
        lut[level] = v.round().clamp(0.0, 255.0) as u8;
    }
    GrayImage {
        height: img.height,
        width: img.width,
        pixels: img.pixels.iter().map(|&p| lut[p as usize]).collect(),
    }
}

/// Row-major flattening of a canonical 70x60 face.
pub fn to_feature_vector(img: &GrayImage) -> Result<Vec<f64>> {
    if img.height != FACE_HEIGHT || img.width != FACE_WIDTH {
        return Err(Error::Dimension(format!(
            "expected a {FACE_HEIGHT}x{FACE_WIDTH} face, got {}x{}",
            img.height, img.width
        )));
    }
    Ok(img.pixels.iter().map(|&p| p as f64).collect())
}

/// Inverse of [`to_feature_vector`]; values are rounded and clamped to bytes.
pub fn from_feature_vector(v: &[f64]) -> Result<GrayImage> {
    if v.len() != FACE_DIM {
        return Err(Error::Dimension(format!("expected {FACE_DIM} values, got {}", v.len())));
    }
    GrayImage::new(
        FACE_HEIGHT,
        FACE_WIDTH,
        v.iter().map(|x| x.round().clamp(0.0, 255.0) as u8).collect(),
    )
}

/// Full canonicalization: align when eyes are known (otherwise the image must
/// already be 70x60), then equalize.
pub fn canonicalize(img: &GrayImage, eyes: Option<(EyePoint, EyePoint)>) -> Result<GrayImage> {
    let aligned = match eyes {
        Some((l, r)) => align_crop_resize(img, l, r)?,
        None => {
            if img.height != FACE_HEIGHT || img.width != FACE_WIDTH {
                return Err(Error::Dimension(format!(
                    "image without eye coordinates must already be {FACE_HEIGHT}x{FACE_WIDTH}, got {}x{}",
                    img.height, img.width
                )));
            }
            img.clone()
        }
    };
    Ok(histogram_equalize(&aligned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_round_trip_small() {
        let img = GrayImage::new(2, 2, vec![0, 255, 128, 7]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_ascii_variant() {
        let err = decode_pgm(b"P2\n2 2\n255\n0 1 2 3\n").unwrap_err();
        assert!(err.to_string().contains("unsupported magic"), "{err}");
    }

    #[test]
    fn pgm_payload_length_for_canonical_face() {
        let img = GrayImage::filled(FACE_HEIGHT, FACE_WIDTH, 0).unwrap();
        let bytes = encode_pgm(&img);
        let header = b"P5\n60 70\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len() - header.len(), 4200);
    }

    #[test]
    fn pgm_errors() {
        assert!(decode_pgm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").is_err());
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\0\0\0"), Err(Error::Image(_))));
        let with_comment = decode_pgm(b"P5\n# made by hand\n1 2\n255\n\x05\x06").unwrap();
        assert_eq!(with_comment.pixels(), &[5, 6]);
        assert_eq!(with_comment.height(), 2);
    }

    fn smooth_reference() -> GrayImage {
        GrayImage::from_fn(FACE_HEIGHT, FACE_WIDTH, |r, c| ((r * 3 + c * 2) % 256) as u8).unwrap()
    }

    #[test]
    fn identity_alignment_is_exact() {
        let img = smooth_reference();
        let out = align_crop_resize(&img, CANONICAL_LEFT_EYE, CANONICAL_RIGHT_EYE).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn rotated_input_aligns_back() {
        let reference = smooth_reference();
        // Rotate 90 degrees counter-clockwise: the result is 60 rows x 70 cols,
        // source (r, c) lands at (W-1-c, r).
        let (h, w) = (FACE_HEIGHT, FACE_WIDTH);
        let rotated = GrayImage::from_fn(w, h, |r2, c2| reference.get(c2, w - 1 - r2)).unwrap();
        let map = |p: EyePoint| EyePoint::new((w - 1) as f64 - p.col, p.row);
        let out = align_crop_resize(&rotated, map(CANONICAL_LEFT_EYE), map(CANONICAL_RIGHT_EYE)).unwrap();
        assert_eq!((out.height(), out.width()), (FACE_HEIGHT, FACE_WIDTH));
        for (a, b) in out.pixels().iter().zip(reference.pixels()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    #[test]
    fn coincident_eyes_rejected() {
        let img = smooth_reference();
        let e = EyePoint::new(10.0, 10.0);
        assert!(align_crop_resize(&img, e, e).is_err());
        assert!(align_crop_resize(&img, e, EyePoint::new(10.2, 10.1)).is_err());
    }

    #[test]
    fn alignment_output_shape_for_any_input_size() {
        let img = GrayImage::filled(200, 130, 90).unwrap();
        let out = align_crop_resize(&img, EyePoint::new(80.0, 40.0), EyePoint::new(82.0, 90.0)).unwrap();
        assert_eq!((out.height(), out.width()), (70, 60));
    }

    #[test]
    fn equalization_examples() {
        let constant = GrayImage::filled(3, 3, 77).unwrap();
        assert_eq!(histogram_equalize(&constant), constant);
        let two = GrayImage::new(1, 2, vec![0, 255]).unwrap();
        assert_eq!(histogram_equalize(&two).pixels(), &[0, 255]);
        let four = GrayImage::new(2, 2, vec![10, 10, 200, 200]).unwrap();
        assert_eq!(histogram_equalize(&four).pixels(), &[0, 0, 255, 255]);
    }

    #[test]
    fn feature_vector_layout() {
        let zero = GrayImage::filled(FACE_HEIGHT, FACE_WIDTH, 0).unwrap();
        assert_eq!(to_feature_vector(&zero).unwrap(), vec![0.0; FACE_DIM]);
        let idx = GrayImage::from_fn(FACE_HEIGHT, FACE_WIDTH, |r, c| ((r * 60 + c) % 256) as u8).unwrap();
        let v = to_feature_vector(&idx).unwrap();
        for (i, x) in v.iter().enumerate() {
            assert_eq!(*x, (i % 256) as f64);
        }
        assert_eq!(from_feature_vector(&v).unwrap(), idx);
        assert!(to_feature_vector(&GrayImage::filled(2, 2, 0).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let img = GrayImage::from_fn(h, w, |r, c| (seed.wrapping_mul(r as u64 * 31 + c as u64 + 1) >> 13) as u8).unwrap();
            prop_assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
        }

        #[test]
        fn equalization_is_monotone_and_nearly_idempotent(px in prop::collection::vec(any::<u8>(), 1..200)) {
            let img = GrayImage::new(1, px.len(), px.clone()).unwrap();
            let out = histogram_equalize(&img);
            for i in 0..px.len() {
                for j in 0..px.len() {
                    if px[i] <= px[j] {
                        prop_assert!(out.pixels()[i] <= out.pixels()[j]);
                    }
                }
            }
            let twice = histogram_equalize(&out);
            for (a, b) in twice.pixels().iter().zip(out.pixels()) {
                prop_assert!((*a as i32 - *b as i32).abs() <= 1);
            }
        }
    }
}
