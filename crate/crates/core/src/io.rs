//! `SPC1` cube and `SPI1` image binary formats (little-endian).
//!
//! ```text
//! SPC1: b"SPC1" | u32 Nr | u32 Nc | u32 T | f64 bin_width_ps | f64 refractive_index
//!       | Nr*Nc*T x u32 counts, (i, j, t) row-major
//! SPI1: b"SPI1" | u32 Nr | u32 Nc | Nr*Nc x f64 values, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::model::PhotonCube;
use crate::Image;

pub const CUBE_MAGIC: &[u8; 4] = b"SPC1";
pub const IMAGE_MAGIC: &[u8; 4] = b"SPI1";

struct Reader<'a> {
    what: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            what: self.what,
            offset: self.pos as u64,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "expected {n} more bytes, found {}",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != magic {
            self.pos -= 4;
            return Err(self.err(format!("bad magic {:?}", String::from_utf8_lossy(m))));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn dim(&mut self, name: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u32()?;
        if v == 0 {
            self.pos = at;
            return Err(self.err(format!("{name} must be >= 1")));
        }
        Ok(v as usize)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_cube(cube: &PhotonCube) -> Vec<u8> {
    let (nr, nc, nt) = cube.dims();
    let mut out = Vec::with_capacity(32 + 4 * nr * nc * nt);
    out.extend_from_slice(CUBE_MAGIC);
    for d in [nr, nc, nt] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&cube.bin_width_ps.to_le_bytes());
    out.extend_from_slice(&cube.refractive_index.to_le_bytes());
    for &c in cube.counts().iter() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

pub fn decode_cube(bytes: &[u8]) -> Result<PhotonCube> {
    let mut rd = Reader {
        what: "SPC1 cube",
        bytes,
        pos: 0,
    };
    rd.magic(CUBE_MAGIC)?;
    let nr = rd.dim("Nr")?;
    let nc = rd.dim("Nc")?;
    let nt = rd.dim("T")?;
    let width_at = rd.pos;
    let width = rd.f64()?;
    let index = rd.f64()?;
    let n = nr
        .checked_mul(nc)
        .and_then(|v| v.checked_mul(nt))
        .ok_or_else(|| rd.err("dimensions overflow"))?;
    let raw = rd.take(n.checked_mul(4).ok_or_else(|| rd.err("dimensions overflow"))?)?;
    rd.finish()?;
    let counts: Vec<u32> = raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let counts = Array3::from_shape_vec((nr, nc, nt), counts).expect("shape checked");
    PhotonCube::new(counts, width, index).map_err(|e| Error::Format {
        what: "SPC1 cube",
        offset: width_at as u64,
        reason: e.to_string(),
    })
}

pub fn encode_image(img: &Image) -> Vec<u8> {
    let (nr, nc) = img.dim();
    let mut out = Vec::with_capacity(12 + 8 * nr * nc);
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&(nr as u32).to_le_bytes());
    out.extend_from_slice(&(nc as u32).to_le_bytes());
    for &v in img.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let mut rd = Reader {
        what: "SPI1 image",
        bytes,
        pos: 0,
    };
    rd.magic(IMAGE_MAGIC)?;
    let nr = rd.dim("Nr")?;
    let nc = rd.dim("Nc")?;
    let n = nr.checked_mul(nc).ok_or_else(|| rd.err("dimensions overflow"))?;
    let raw = rd.take(n.checked_mul(8).ok_or_else(|| rd.err("dimensions overflow"))?)?;
    rd.finish()?;
    let v: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Array2::from_shape_vec((nr, nc), v).expect("shape checked"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

pub fn write_cube(path: impl AsRef<Path>, cube: &PhotonCube) -> Result<()> {
    write_atomic(path.as_ref(), &encode_cube(cube))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<PhotonCube> {
    decode_cube(&fs::read(path)?)
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    write_atomic(path.as_ref(), &encode_image(img))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_image(&fs::read(path)?)
}
