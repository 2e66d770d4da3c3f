use super::IoError;
use crate::renderer::ImageBuffer;
use std::io::{BufRead, Write};

/// Writes a binary P6 image, quantizing `[0, 1]` values to 8 bits.
pub fn write_ppm(mut w: impl Write, img: &ImageBuffer) -> Result<(), IoError> {
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    w.write_all(&to_rgb8(img))?;
    w.flush()?;
    Ok(())
}

pub fn to_rgb8(img: &ImageBuffer) -> Vec<u8> {
    img.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn read_ppm(mut r: impl BufRead) -> Result<ImageBuffer, IoError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut token = || -> Result<String, IoError> {
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
            return Err(IoError::Format("truncated PPM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(IoError::Format("only binary P6 PPM is supported".into()));
    }
    let mut num = || -> Result<usize, IoError> {
        let t = token()?;
        t.parse().map_err(|_| IoError::Format(format!("bad PPM header value '{t}'")))
    };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if maxval == 0 || maxval > 255 {
        return Err(IoError::Format(format!("unsupported PPM maxval {maxval}")));
    }
    let body = &bytes[pos + 1.min(bytes.len() - pos)..];
    let n = width * height * 3;
    if body.len() < n {
        return Err(IoError::Format("truncated PPM body".into()));
    }
    let mut img = ImageBuffer::new(width, height);
    for (d, &b) in img.data.iter_mut().zip(&body[..n]) {
        *d = b as f64 / maxval as f64;
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_quantized() {
        let mut img = ImageBuffer::new(3, 2);
        for (k, v) in img.data.iter_mut().enumerate() {
            *v = k as f64 / 17.0;
        }
        let mut buf = Vec::new();
        write_ppm(&mut buf, &img).unwrap();
        let back = read_ppm(buf.as_slice()).unwrap();
        assert_eq!((back.width, back.height), (3, 2));
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        assert!(read_ppm(&b"P3\n1 1\n255\n"[..]).is_err());
        assert!(read_ppm(&b"P6\n2 2\n255\n\x00"[..]).is_err());
    }
}
