//! Image file I/O. Planes are stored as 16-bit grayscale, either PNG or
//! binary PGM depending on the file extension; intensities map linearly
//! between [0, 1] and [0, 65535].

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::image::{ColorFrame, ImagePlane};

fn quantize(plane: &ImagePlane) -> Vec<u16> {
    plane
        .as_slice()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect()
}

fn dequantize(width: usize, height: usize, raw: &[u16]) -> Result<ImagePlane> {
    let values = raw.iter().map(|&v| v as f64 / 65535.0).collect();
    ImagePlane::from_values(width, height, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Png,
    Pgm,
}

fn format_for(path: &Path) -> Result<Format> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "png" => Ok(Format::Png),
        "pgm" => Ok(Format::Pgm),
        other => Err(Error::UnsupportedFormat(other.to_string())),
    }
}

/// Write one plane to `path`; format follows the extension (.png or .pgm).
pub fn save_plane(plane: &ImagePlane, path: &Path) -> Result<()> {
    let raw = quantize(plane);
    match format_for(path)? {
        Format::Png => {
            let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
                ImageBuffer::from_raw(plane.width() as u32, plane.height() as u32, raw)
                    .expect("buffer sized from plane");
            buf.save(path)?;
        }
        Format::Pgm => {
            let file = fs::File::create(path)?;
            let mut w = BufWriter::new(file);
            write!(w, "P5\n{} {}\n65535\n", plane.width(), plane.height())?;
            for v in raw {
                w.write_all(&v.to_be_bytes())?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Read one plane from `path`; format follows the extension.
pub fn load_plane(path: &Path) -> Result<ImagePlane> {
    match format_for(path)? {
        Format::Png => {
            let img = image::open(path)?.into_luma16();
            let (w, h) = (img.width() as usize, img.height() as usize);
            dequantize(w, h, img.as_raw())
        }
        Format::Pgm => {
            let mut bytes = Vec::new();
            fs::File::open(path)?.read_to_end(&mut bytes)?;
            parse_pgm(&bytes)
        }
    }
}

fn parse_pgm(bytes: &[u8]) -> Result<ImagePlane> {
    let bad = |msg: &str| Error::InvalidConfig(format!("pgm: {msg}"));
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and # comments between header tokens.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(bytes)? != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let width: usize = token(bytes)?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = token(bytes)?.parse().map_err(|_| bad("bad height"))?;
    let maxval: u32 = token(bytes)?.parse().map_err(|_| bad("bad maxval"))?;
    if width == 0 || height == 0 {
        return Err(bad("empty image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    let wide = maxval > 255;
    let need = n * if wide { 2 } else { 1 };
    if bytes.len() < pos + need {
        return Err(bad("truncated raster"));
    }
    let raster = &bytes[pos..pos + need];
    let values: Vec<f64> = if wide {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 / maxval as f64).collect()
    };
    ImagePlane::from_values(width, height, values)
}

/// Derive the `_R`/`_G` sibling paths used when a frame is stored as two
/// grayscale files: `tile.png` becomes `tile_R.png` and `tile_G.png`.
pub fn channel_paths(path: &Path) -> Result<(PathBuf, PathBuf)> {
    format_for(path)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidConfig(format!("bad image path {}", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("png");
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    Ok((
        dir.join(format!("{stem}_R.{ext}")),
        dir.join(format!("{stem}_G.{ext}")),
    ))
}

/// Write both channels of a frame next to `path` with `_R`/`_G` suffixes.
pub fn save_frame(frame: &ColorFrame, path: &Path) -> Result<()> {
    let (rp, gp) = channel_paths(path)?;
    save_plane(&frame.red, &rp)?;
    save_plane(&frame.green, &gp)
}

/// Read a frame previously written by [`save_frame`].
pub fn load_frame(path: &Path) -> Result<ColorFrame> {
    let (rp, gp) = channel_paths(path)?;
    ColorFrame::new(load_plane(&rp)?, load_plane(&gp)?)
}
