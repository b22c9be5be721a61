//! FLD1 field snapshots.
//!
//! Layout: a UTF-8 header of five newline-terminated lines
//!
//! ```text
//! FLD1
//! nx <nodes per row> ny <rows>
//! bounds <a> <b> <c> <d>
//! time <t>
//! data
//! ```
//!
//! followed by `nx*ny` pairs of little-endian `f64` `(re, im)` in row-major
//! order with `x` fastest, i.e. the crate's storage order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{ComplexField, Field, FieldValue};
use crate::grid::Grid2D;
use crate::scalar::{Complex, Real};

pub const MAGIC: &str = "FLD1";

/// Decoded contents of an FLD1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Nodes per row (J+1).
    pub nx: usize,
    /// Rows (K+1).
    pub ny: usize,
    pub bounds: [f64; 4],
    pub time: f64,
    pub values: Vec<Complex<f64>>,
}

impl Snapshot {
    pub fn from_field<E: FieldValue<T> + Into<Complex<T>>, T: Real>(u: &Field<E, T>, time: T) -> Self {
        let g = u.grid();
        Self {
            nx: g.nx + 1,
            ny: g.ny + 1,
            bounds: [g.a.as_f64(), g.b.as_f64(), g.c.as_f64(), g.d.as_f64()],
            time: time.as_f64(),
            values: u
                .values()
                .iter()
                .map(|&v| {
                    let z: Complex<T> = v.into();
                    Complex::new(z.re.as_f64(), z.im.as_f64())
                })
                .collect(),
        }
    }

    /// Rebuilds a field on `grid`, which must match the stored shape and
    /// bounds.
    pub fn to_field<T: Real>(&self, grid: &Grid2D<T>) -> Result<ComplexField<T>> {
        let same_bounds = [grid.a, grid.b, grid.c, grid.d]
            .iter()
            .zip(&self.bounds)
            .all(|(g, s)| (g.as_f64() - s).abs() <= 1e-12 * s.abs().max(1.0));
        if self.nx != grid.nx + 1 || self.ny != grid.ny + 1 || !same_bounds {
            return Err(Error::GridMismatch("snapshot does not match grid"));
        }
        let vals = self.values.iter().map(|z| Complex::new(T::lit(z.re), T::lit(z.im))).collect();
        Field::from_values(*grid, vals)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let [a, b, c, d] = self.bounds;
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "nx {} ny {}", self.nx, self.ny)?;
        writeln!(w, "bounds {a:e} {b:e} {c:e} {d:e}")?;
        writeln!(w, "time {:e}", self.time)?;
        writeln!(w, "data")?;
        let mut buf = Vec::with_capacity(self.values.len() * 16);
        for z in &self.values {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<_>, what: &str| -> Result<Vec<String>> {
            line.clear();
            let n = r.read_line(&mut line).map_err(|e| Error::Format(format!("reading {what}: {e}")))?;
            if n == 0 {
                return Err(Error::Format(format!("unexpected end of header at {what}")));
            }
            Ok(line.split_whitespace().map(str::to_owned).collect())
        };
        let magic = next_line(&mut r, "magic")?;
        if magic != [MAGIC] {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let dims = next_line(&mut r, "dimensions")?;
        let (nx, ny): (usize, usize) = match dims.as_slice() {
            [kx, nx, ky, ny] if kx == "nx" && ky == "ny" => (parse(nx)?, parse(ny)?),
            _ => return Err(Error::Format(format!("bad dimension line {dims:?}"))),
        };
        let bl = next_line(&mut r, "bounds")?;
        let bounds = match bl.as_slice() {
            [k, a, b, c, d] if k == "bounds" => [parse(a)?, parse(b)?, parse(c)?, parse(d)?],
            _ => return Err(Error::Format(format!("bad bounds line {bl:?}"))),
        };
        let tl = next_line(&mut r, "time")?;
        let time = match tl.as_slice() {
            [k, t] if k == "time" => parse(t)?,
            _ => return Err(Error::Format(format!("bad time line {tl:?}"))),
        };
        if next_line(&mut r, "data marker")? != ["data"] {
            return Err(Error::Format("missing data marker".into()));
        }
        let count = nx.checked_mul(ny).ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let mut bytes = vec![0u8; count * 16];
        r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(|e| Error::Format(e.to_string()))? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        let values = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex::new(re, im)
            })
            .collect();
        Ok(Self { nx, ny, bounds, time, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}

fn parse<V: std::str::FromStr>(s: &str) -> Result<V> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse `{s}`")))
}

/// Writes `(x, y, |u|)` rows with a blank line between scan lines, the
/// layout gnuplot's `splot ... with pm3d` expects.
pub fn write_gnuplot_modulus<E: FieldValue<T>, T: Real>(u: &Field<E, T>, mut w: impl Write) -> std::io::Result<()> {
    let g = u.grid();
    for k in 0..=g.ny {
        for j in 0..=g.nx {
            let (x, y) = g.node(j, k);
            writeln!(w, "{:e} {:e} {:e}", x, y, u.at(j, k).modulus())?;
        }
        writeln!(w)?;
    }
    Ok(())
}
