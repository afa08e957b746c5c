//! 8-bit binary PPM (P6) and PGM (P5) images.

use std::path::Path;

use crate::io::write_atomic;
use crate::nn::Tensor;
use crate::{Error, Result, Scalar};

/// Maps `[0, 1]` to `0..=255`, clamping out-of-range values.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize<T: Scalar>(q: u8) -> T {
    T::lit(q as f64 / 255.0)
}

/// Encodes a `(1, c, h, w)` tensor with `c` = 3 (PPM) or 1 (PGM).
pub fn encode_pnm<T: Scalar>(img: &Tensor<T>) -> Result<Vec<u8>> {
    let [n, c, h, w] = img.shape();
    let magic = match (n, c) {
        (1, 3) => "P6",
        (1, 1) => "P5",
        _ => return Err(Error::contract(format!("cannot encode tensor of shape {:?} as PNM", img.shape()))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.reserve(c * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize(img.at(0, ch, y, x).as_f64()));
            }
        }
    }
    Ok(out)
}

pub fn write_pnm<T: Scalar>(path: &Path, img: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode_pnm(img)?)
}

/// Decodes a P5/P6 file with maxval 255 into a `(1, c, h, w)` tensor in `[0, 1]`.
pub fn decode_pnm<T: Scalar>(bytes: &[u8], name: &str) -> Result<Tensor<T>> {
    let bad = |field: &str, message: String| Error::Parse { path: name.to_string(), line: 1, field: field.to_string(), message };
    let mut pos = 0;
    let mut token = |field: &str| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(field, "unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    let c = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        m => return Err(bad("magic", format!("expected P5 or P6, found `{m}`"))),
    };
    let num = |t: String, field: &str| t.parse::<usize>().map_err(|e| bad(field, format!("`{t}`: {e}")));
    let w = num(token("width")?, "width")?;
    let h = num(token("height")?, "height")?;
    let maxval = num(token("maxval")?, "maxval")?;
    if maxval != 255 {
        return Err(bad("maxval", format!("only 8-bit images are supported, found maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let need = c * h * w;
    if bytes.len() < start + need {
        return Err(bad("raster", format!("expected {need} bytes, found {}", bytes.len().saturating_sub(start))));
    }
    let raster = &bytes[start..start + need];
    Ok(Tensor::from_fn([1, c, h, w], |_, ch, y, x| dequantize(raster[(y * w + x) * c + ch])))
}

pub fn read_pnm<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_images_round_trip_exactly() {
        for c in [1, 3] {
            let img = Tensor::<f32>::from_fn([1, c, 5, 7], |_, ch, y, x| dequantize(((ch * 31 + y * 17 + x * 5) % 256) as u8));
            let back: Tensor<f32> = decode_pnm(&encode_pnm(&img).unwrap(), "mem").unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn header_comments_and_errors() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0, 255]);
        let t: Tensor<f64> = decode_pnm(&bytes, "x").unwrap();
        assert_eq!(t.data(), &[0.0, 1.0]);
        assert!(decode_pnm::<f64>(b"P3\n1 1\n255\n0", "x").is_err());
        assert!(decode_pnm::<f64>(b"P5\n4 4\n255\n\x00", "x").is_err());
        assert!(decode_pnm::<f64>(b"P5\n1 1\n65535\n\x00\x00", "x").is_err());
    }

    #[test]
    fn clamps_out_of_range() {
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
    }
}
