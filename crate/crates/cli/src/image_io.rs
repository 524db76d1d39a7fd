//! Binary PGM (P5) and PPM (P6) with maxval 255 and a fixed header layout,
//! so golden files diff bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use avatar_core::gaussian::RgbaImage;
use avatar_core::raster::BinaryImage;
use avatar_core::uvscatter::FeatureMap;

use crate::{CliError, Result};

fn write_header(w: &mut impl Write, kind: &str, width: u32, height: u32) -> Result<()> {
    write!(w, "{kind}\n{width} {height}\n255\n")?;
    Ok(())
}

fn read_header(r: &mut impl Read, kind: &str) -> Result<(u32, u32)> {
    // Tokenized header: magic, width, height, maxval, separated by
    // whitespace (comments supported), followed by a single whitespace byte.
    let mut tokens = Vec::new();
    let mut token = String::new();
    let mut in_comment = false;
    let mut buf = [0u8; 1];
    while tokens.len() < 4 {
        r.read_exact(&mut buf)?;
        let c = buf[0] as char;
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
        if c.is_ascii_whitespace() {
            if !token.is_empty() {
                tokens.push(std::mem::take(&mut token));
            }
            continue;
        }
        token.push(c);
    }
    if tokens[0] != kind {
        return Err(CliError::format(format!(
            "expected {kind}, found {:?}",
            tokens[0]
        )));
    }
    let width: u32 = tokens[1].parse().map_err(|_| CliError::format("bad width"))?;
    let height: u32 = tokens[2].parse().map_err(|_| CliError::format("bad height"))?;
    if tokens[3] != "255" {
        return Err(CliError::format("only maxval 255 is supported"));
    }
    Ok((width, height))
}

pub fn write_pgm(path: &Path, width: u32, height: u32, data: &[u8]) -> Result<()> {
    if data.len() != (width * height) as usize {
        return Err(CliError::format("pgm payload size mismatch"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, "P5", width, height)?;
    w.write_all(data)?;
    w.flush()?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let mut r = BufReader::new(File::open(path)?);
    let (width, height) = read_header(&mut r, "P5")?;
    let mut data = vec![0u8; (width * height) as usize];
    r.read_exact(&mut data)?;
    Ok((width, height, data))
}

pub fn write_ppm(path: &Path, width: u32, height: u32, rgb: &[u8]) -> Result<()> {
    if rgb.len() != (width * height * 3) as usize {
        return Err(CliError::format("ppm payload size mismatch"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, "P6", width, height)?;
    w.write_all(rgb)?;
    w.flush()?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let mut r = BufReader::new(File::open(path)?);
    let (width, height) = read_header(&mut r, "P6")?;
    let mut data = vec![0u8; (width * height * 3) as usize];
    r.read_exact(&mut data)?;
    Ok((width, height, data))
}

/// Quantize a unit-range value to u8 (round-half-up).
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary mask as 0/255 PGM.
pub fn write_mask(path: &Path, mask: &BinaryImage) -> Result<()> {
    let data: Vec<u8> = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    write_pgm(path, mask.width, mask.height, &data)
}

/// Read a 0/255 PGM as a mask (values >= 128 are foreground).
pub fn read_mask(path: &Path) -> Result<BinaryImage> {
    let (w, h, data) = read_pgm(path)?;
    BinaryImage::from_bits(w, h, data.iter().map(|v| *v >= 128).collect())
        .map_err(CliError::from)
}

/// Read a PPM into an RGB feature map scaled to [0, 1].
pub fn read_ppm_features(path: &Path) -> Result<FeatureMap> {
    let (w, h, data) = read_ppm(path)?;
    let values: Vec<f64> = data.iter().map(|v| *v as f64 / 255.0).collect();
    FeatureMap::from_data(h as usize, w as usize, 3, values).map_err(CliError::from)
}

/// Write an RGBA render as PPM color plus optional PGM alpha.
pub fn write_render(path: &Path, alpha_path: Option<&Path>, img: &RgbaImage) -> Result<()> {
    let mut rgb = Vec::with_capacity((img.width * img.height * 3) as usize);
    let mut alpha = Vec::with_capacity((img.width * img.height) as usize);
    for px in img.pixels() {
        rgb.push(quantize(px[0]));
        rgb.push(quantize(px[1]));
        rgb.push(quantize(px[2]));
        alpha.push(quantize(px[3]));
    }
    write_ppm(path, img.width, img.height, &rgb)?;
    if let Some(ap) = alpha_path {
        write_pgm(ap, img.width, img.height, &alpha)?;
    }
    Ok(())
}
