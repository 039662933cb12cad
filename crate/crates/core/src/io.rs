//! File formats.
//!
//! All binary files are little-endian and start with an 8-byte magic
//! followed by `u32` height and width:
//!
//! - `PPNGRID1`: real image, `H*W` `f64` values in row-major order.
//! - `PPNKSPC1`: measurement, `H*W` interleaved `(re, im)` `f64` pairs,
//!   then `sigma_e` as `f64`, then `W` mask bytes (0 or 1).
//! - `PPNPRIOR`: Gaussian prior, `u32` rank `r`, `f64` floor, `r` `f64`
//!   eigenvalues, the `H*W` mean, then `r` eigen-images.
//!
//! Masks are also stored as text: one line of `0`/`1` characters per column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::denoiser::GaussianPrior;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kspace::{CartesianMask, Measurement};

pub const GRID_MAGIC: &[u8; 8] = b"PPNGRID1";
pub const KSPACE_MAGIC: &[u8; 8] = b"PPNKSPC1";
pub const PRIOR_MAGIC: &[u8; 8] = b"PPNPRIOR";

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), msg: msg.into() }
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], shape: (usize, usize)) -> Result<()> {
    w.write_all(magic)?;
    for d in [shape.0, shape.1] {
        let d = u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dimension {d} too large")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Reader<'a, R> {
    inner: R,
    path: &'a Path,
}

impl<R: Read> Reader<'_, R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| format_err(self.path, format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn grid(&mut self, shape: (usize, usize)) -> Result<Array2<f64>> {
        let values = (0..shape.0 * shape.1).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_vec(shape, values).expect("length matches shape"))
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<(usize, usize)> {
        if &self.bytes::<8>()? != magic {
            return Err(format_err(self.path, format!("expected magic {:?}", String::from_utf8_lossy(magic))));
        }
        let shape = (self.u32()?, self.u32()?);
        if shape.0 == 0 || shape.1 == 0 {
            return Err(format_err(self.path, "empty grid"));
        }
        Ok(shape)
    }

    fn expect_end(&mut self) -> Result<()> {
        let mut rest = [0u8; 1];
        match self.inner.read(&mut rest)? {
            0 => Ok(()),
            _ => Err(format_err(self.path, "trailing bytes")),
        }
    }
}

fn open(path: &Path) -> Result<Reader<'_, BufReader<File>>> {
    Ok(Reader { inner: BufReader::new(File::open(path)?), path })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    let mut w = create(path)?;
    write_header(&mut w, GRID_MAGIC, image.shape())?;
    write_f64s(&mut w, image.iter().copied())?;
    w.flush()?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Image> {
    let mut r = open(path)?;
    let shape = r.header(GRID_MAGIC)?;
    let grid = r.grid(shape)?;
    r.expect_end()?;
    Image::new(grid).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_measurement(path: &Path, y: &Measurement) -> Result<()> {
    let mut w = create(path)?;
    write_header(&mut w, KSPACE_MAGIC, y.shape())?;
    write_f64s(&mut w, y.kspace().iter().flat_map(|c| [c.re, c.im]))?;
    write_f64s(&mut w, [y.sigma_e()])?;
    let mask: Vec<u8> = y.mask().kept().iter().map(|&k| k as u8).collect();
    w.write_all(&mask)?;
    w.flush()?;
    Ok(())
}

pub fn read_measurement(path: &Path) -> Result<Measurement> {
    let mut r = open(path)?;
    let (h, w) = r.header(KSPACE_MAGIC)?;
    let values = (0..h * w).map(|_| Ok(Complex64::new(r.f64()?, r.f64()?))).collect::<Result<Vec<_>>>()?;
    let sigma = r.f64()?;
    let kept = (0..w)
        .map(|_| match r.bytes::<1>()?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(format_err(path, format!("bad mask byte {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    let mask = CartesianMask::from_columns(kept).map_err(|e| format_err(path, e.to_string()))?;
    let k = Array2::from_shape_vec((h, w), values).expect("length matches shape");
    Measurement::new(k, mask, sigma).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &CartesianMask) -> Result<()> {
    std::fs::write(path, format!("{}\n", mask.to_line()))?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<CartesianMask> {
    let text = std::fs::read_to_string(path)?;
    CartesianMask::from_line(&text).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_prior(path: &Path, prior: &GaussianPrior) -> Result<()> {
    let mut w = create(path)?;
    write_header(&mut w, PRIOR_MAGIC, prior.shape())?;
    w.write_all(&(prior.rank() as u32).to_le_bytes())?;
    write_f64s(&mut w, [prior.floor()])?;
    write_f64s(&mut w, prior.eigvals().iter().copied())?;
    write_f64s(&mut w, prior.mean().iter().copied())?;
    for i in 0..prior.rank() {
        write_f64s(&mut w, prior.eigen_image(i).iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_prior(path: &Path) -> Result<GaussianPrior> {
    let mut r = open(path)?;
    let shape = r.header(PRIOR_MAGIC)?;
    let rank = r.u32()?;
    let floor = r.f64()?;
    let eigvals = (0..rank).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let mean = r.grid(shape)?;
    let basis = (0..rank).map(|_| r.grid(shape)).collect::<Result<Vec<_>>>()?;
    r.expect_end()?;
    GaussianPrior::new(mean, basis, eigvals, floor).map_err(|e| format_err(path, e.to_string()))
}

/// 16-bit grayscale PNG of `image` clipped to `[lo, hi]`.
pub fn write_png(path: &Path, image: &Image, lo: f64, hi: f64) -> Result<()> {
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::InvalidArgument(format!("PNG range [{lo}, {hi}] is empty")));
    }
    let (h, w) = image.shape();
    let mut enc = png::Encoder::new(create(path)?, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header()?;
    let data: Vec<u8> = image
        .iter()
        .flat_map(|v| {
            let s = ((v.clamp(lo, hi) - lo) / (hi - lo) * 65535.0).round() as u16;
            s.to_be_bytes()
        })
        .collect();
    writer.write_image_data(&data)?;
    writer.finish()?;
    Ok(())
}
