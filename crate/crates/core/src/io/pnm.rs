//! Binary netpbm readers/writers: PPM (P6) for color, PGM (P5) for masks and
//! confidence maps, PAM (P7, depth 2) for two-channel label images. Maxval is
//! always 255; writes are byte-deterministic.

use crate::image::{dequantize8, quantize8, ImageGray, ImageRgb, Mask};
use crate::{Error, Result};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

pub fn write_ppm(path: &Path, img: &ImageRgb) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.pixels.len() * 3);
    out.extend_from_slice(format!("P6\n{} {}\n255\n", img.width, img.height).as_bytes());
    for p in &img.pixels {
        out.push(quantize8(p[0]));
        out.push(quantize8(p[1]));
        out.push(quantize8(p[2]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_pgm(path: &Path, img: &ImageGray) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.pixels.len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width, img.height).as_bytes());
    for &p in &img.pixels {
        out.push(quantize8(p));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_pgm_mask(path: &Path, mask: &Mask) -> Result<()> {
    let mut out = Vec::with_capacity(32 + mask.pixels.len());
    out.extend_from_slice(format!("P5\n{} {}\n255\n", mask.width, mask.height).as_bytes());
    for &p in &mask.pixels {
        out.push(if p { 255 } else { 0 });
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Two-channel 8-bit map (PAM P7), channel order (human, object).
pub fn write_pam2(path: &Path, a: &ImageGray, b: &ImageGray) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Image("pam channels differ in shape".into()));
    }
    let mut out = Vec::with_capacity(96 + a.pixels.len() * 2);
    out.extend_from_slice(
        format!(
            "P7\nWIDTH {}\nHEIGHT {}\nDEPTH 2\nMAXVAL 255\nTUPLTYPE GRAYSCALE_ALPHA\nENDHDR\n",
            a.width, a.height
        )
        .as_bytes(),
    );
    for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
        out.push(quantize8(x));
        out.push(quantize8(y));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_png(path: &Path, img: &ImageRgb) -> Result<()> {
    let mut buf = image::RgbImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let p = img.get(x, y);
            buf.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([quantize8(p[0]), quantize8(p[1]), quantize8(p[2])]),
            );
        }
    }
    buf.save(path)
        .map_err(|e| Error::Image(format!("png write failed: {e}")))?;
    Ok(())
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads whitespace-delimited header tokens, skipping `#` comments.
fn read_token(r: &mut impl BufRead, path: &Path) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            return Err(parse_err(path, "unexpected end of header"));
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c);
    }
}

fn read_dims(r: &mut impl BufRead, path: &Path) -> Result<(usize, usize)> {
    let w: usize = read_token(r, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad width"))?;
    let h: usize = read_token(r, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad height"))?;
    let maxval: u32 = read_token(r, path)?
        .parse()
        .map_err(|_| parse_err(path, "bad maxval"))?;
    if maxval != 255 {
        return Err(parse_err(path, format!("unsupported maxval {maxval}")));
    }
    Ok((w, h))
}

pub fn read_ppm(path: &Path) -> Result<ImageRgb> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    if read_token(&mut r, path)? != "P6" {
        return Err(parse_err(path, "not a P6 ppm"));
    }
    let (w, h) = read_dims(&mut r, path)?;
    let mut data = vec![0u8; w * h * 3];
    r.read_exact(&mut data)
        .map_err(|_| parse_err(path, "truncated pixel data"))?;
    let mut img = ImageRgb::new(w, h);
    for (i, px) in img.pixels.iter_mut().enumerate() {
        *px = [
            dequantize8(data[3 * i]),
            dequantize8(data[3 * i + 1]),
            dequantize8(data[3 * i + 2]),
        ];
    }
    Ok(img)
}

pub fn read_pgm(path: &Path) -> Result<ImageGray> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    if read_token(&mut r, path)? != "P5" {
        return Err(parse_err(path, "not a P5 pgm"));
    }
    let (w, h) = read_dims(&mut r, path)?;
    let mut data = vec![0u8; w * h];
    r.read_exact(&mut data)
        .map_err(|_| parse_err(path, "truncated pixel data"))?;
    let mut img = ImageGray::new(w, h);
    for (i, px) in img.pixels.iter_mut().enumerate() {
        *px = dequantize8(data[i]);
    }
    Ok(img)
}

pub fn read_pam2(path: &Path) -> Result<(ImageGray, ImageGray)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    if read_token(&mut r, path)? != "P7" {
        return Err(parse_err(path, "not a P7 pam"));
    }
    let (mut w, mut h, mut depth, mut maxval) = (0usize, 0usize, 0usize, 0u32);
    loop {
        let key = read_token(&mut r, path)?;
        match key.as_str() {
            "ENDHDR" => break,
            "WIDTH" => w = read_token(&mut r, path)?.parse().map_err(|_| parse_err(path, "bad WIDTH"))?,
            "HEIGHT" => h = read_token(&mut r, path)?.parse().map_err(|_| parse_err(path, "bad HEIGHT"))?,
            "DEPTH" => depth = read_token(&mut r, path)?.parse().map_err(|_| parse_err(path, "bad DEPTH"))?,
            "MAXVAL" => maxval = read_token(&mut r, path)?.parse().map_err(|_| parse_err(path, "bad MAXVAL"))?,
            "TUPLTYPE" => {
                read_token(&mut r, path)?;
            }
            other => return Err(parse_err(path, format!("unexpected header key {other}"))),
        }
    }
    if depth != 2 || maxval != 255 {
        return Err(parse_err(path, "expected DEPTH 2 MAXVAL 255"));
    }
    let mut data = vec![0u8; w * h * 2];
    r.read_exact(&mut data)
        .map_err(|_| parse_err(path, "truncated pixel data"))?;
    let mut a = ImageGray::new(w, h);
    let mut b = ImageGray::new(w, h);
    for i in 0..w * h {
        a.pixels[i] = dequantize8(data[2 * i]);
        b.pixels[i] = dequantize8(data[2 * i + 1]);
    }
    Ok((a, b))
}
