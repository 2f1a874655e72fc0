//! CSV state checkpoints.
//!
//! ```text
//! # savif checkpoint v1
//! # n = 40
//! # t = 2.0000000000000000e0
//! # r = 1.0241380947362781e0
//! # grid = 16 -8.0000000000000000e0 -8.0000000000000000e0 1.6000000000000000e1 1.6000000000000000e1
//! # history = 1
//! j,k,re_u,im_u,re_v,im_v,re_u_prev,im_u_prev
//! 1,1,...
//! ```
//!
//! Values use 17 significant digits so a read reproduces the written state
//! bitwise. The two `u_prev` columns are present only when `history = 1`;
//! they carry `uⁿ⁻¹` for the SAV-IF extrapolation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::sav::SavState;
use crate::scalar::Real;
use crate::spectral::{Field, Grid2D, Repr};

const MAGIC: &str = "# savif checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Real> {
    /// Index of the step that produced `state`.
    pub step: usize,
    pub state: SavState<T>,
    pub history: Option<Field<T>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse<T: Real>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse::<T>()
        .map_err(|_| bad(format!("cannot parse {what} from `{s}`")))
}

impl<T: Real> Checkpoint<T> {
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let u = self.state.u.clone().into_physical();
        let v = self.state.v.clone().into_physical();
        let prev = self.history.clone().map(Field::into_physical);
        let g = u.grid().clone();
        for f in std::iter::once(&v).chain(prev.as_ref()) {
            u.check_compatible(f)?;
        }
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "# n = {}", self.step)?;
        writeln!(out, "# t = {:.16e}", self.state.t)?;
        writeln!(out, "# r = {:.16e}", self.state.r)?;
        writeln!(
            out,
            "# grid = {} {:.16e} {:.16e} {:.16e} {:.16e}",
            g.n(),
            g.x_lower(),
            g.y_lower(),
            g.x_extent(),
            g.y_extent()
        )?;
        writeln!(out, "# history = {}", u8::from(prev.is_some()))?;
        write!(out, "j,k,re_u,im_u,re_v,im_v")?;
        if prev.is_some() {
            write!(out, ",re_u_prev,im_u_prev")?;
        }
        writeln!(out)?;
        let m = g.interior();
        for j in 1..=m {
            for k in 1..=m {
                let (a, b) = (u.get(j, k), v.get(j, k));
                write!(out, "{j},{k},{:.16e},{:.16e},{:.16e},{:.16e}", a.re, a.im, b.re, b.im)?;
                if let Some(p) = &prev {
                    let c = p.get(j, k);
                    write!(out, ",{:.16e},{:.16e}", c.re, c.im)?;
                }
                writeln!(out)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a checkpoint written for `grid`; any other grid is rejected.
    pub fn read<R: BufRead>(input: R, grid: &Arc<Grid2D<T>>) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file"))?
                .map_err(Error::from)
        };
        if next()?.trim() != MAGIC {
            return Err(bad("missing header line"));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = next()?;
            let rest = line
                .strip_prefix('#')
                .and_then(|l| l.trim().strip_prefix(key))
                .and_then(|l| l.trim().strip_prefix('='))
                .ok_or_else(|| bad(format!("expected `# {key} = ...`, found `{line}`")))?;
            Ok(rest.trim().to_string())
        };
        let step: usize = field("n")?.parse().map_err(|_| bad("bad step index"))?;
        let t: T = parse(&field("t")?, "t")?;
        let r: T = parse(&field("r")?, "r")?;
        let grid_line = field("grid")?;
        let history = match field("history")?.as_str() {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("history flag must be 0 or 1, got `{other}`"))),
        };

        let parts: Vec<&str> = grid_line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(bad("grid line needs N and four domain values"));
        }
        let n: usize = parts[0].parse().map_err(|_| bad("bad N"))?;
        let dom = parts[1..]
            .iter()
            .map(|s| parse::<T>(s, "domain"))
            .collect::<Result<Vec<T>>>()?;
        if n != grid.n() || dom != [grid.x_lower(), grid.y_lower(), grid.x_extent(), grid.y_extent()] {
            return Err(bad(format!(
                "checkpoint grid `{grid_line}` does not match the run grid"
            )));
        }

        let cols = if history { 8 } else { 6 };
        let header = next()?;
        if header.split(',').count() != cols {
            return Err(bad(format!("column header `{header}` does not match history flag")));
        }
        let len = grid.len();
        let mut u = vec![Complex::default(); len];
        let mut v = vec![Complex::default(); len];
        let mut p = vec![Complex::default(); if history { len } else { 0 }];
        let mut seen = vec![false; len];
        for _ in 0..len {
            let line = next()?;
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != cols {
                return Err(bad(format!("row `{line}` has {} columns, expected {cols}", vals.len())));
            }
            let idx = |s: &str| -> Result<usize> {
                let i: usize = s.trim().parse().map_err(|_| bad(format!("bad index in `{line}`")))?;
                if i == 0 || i > grid.interior() {
                    return Err(bad(format!("index out of range in `{line}`")));
                }
                Ok(i)
            };
            let at = grid.index(idx(vals[0])?, idx(vals[1])?);
            if std::mem::replace(&mut seen[at], true) {
                return Err(bad(format!("duplicate node in `{line}`")));
            }
            let num = |i: usize| parse::<T>(vals[i], "value");
            u[at] = Complex::new(num(2)?, num(3)?);
            v[at] = Complex::new(num(4)?, num(5)?);
            if history {
                p[at] = Complex::new(num(6)?, num(7)?);
            }
        }
        if let Some(Ok(extra)) = lines.next() {
            if !extra.trim().is_empty() {
                return Err(bad("trailing data after the last node"));
            }
        }
        Ok(Self {
            step,
            state: SavState {
                u: Field::from_data(grid, Repr::Physical, u)?,
                v: Field::from_data(grid, Repr::Physical, v)?,
                r,
                t,
            },
            history: if history {
                Some(Field::from_data(grid, Repr::Physical, p)?)
            } else {
                None
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        // Write then rename, so an interrupted run never leaves half a file.
        let tmp = path.with_extension("tmp");
        self.write(BufWriter::new(File::create(&tmp)?))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, grid: &Arc<Grid2D<T>>) -> Result<Self> {
        Self::read(BufReader::new(File::open(path)?), grid)
    }
}
