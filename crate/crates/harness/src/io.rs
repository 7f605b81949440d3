//! Text file formats. Floats are written with Rust's shortest round-trip
//! formatting, so reading a file back reproduces the values bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use osm_core::fem::Grid;
use osm_core::linalg::{CsrMatrix, DenseMatrix, C64};
use osm_core::precond::BlockOperator;
use osm_core::schwarz::{ConvergenceHistory, InterfaceVector};

use crate::error::{HarnessError, Result};

/// Version tag written in the first line of every table.
pub const TABLE_SCHEMA_VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?))
}

/// Writes through `body`, attaching the path to any IO error.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

/// `time_step,iteration,update_norm`, both counters starting at 1.
pub fn write_history(path: &Path, history: &ConvergenceHistory) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "time_step,iteration,update_norm")?;
        for (n, step) in history.steps.iter().enumerate() {
            for (k, v) in step.iter().enumerate() {
                writeln!(w, "{},{},{}", n + 1, k + 1, v)?;
            }
        }
        Ok(())
    })
}

/// `x,y,re,im`, row-major over the grid.
pub fn write_snapshot(path: &Path, grid: &Grid, u: &[C64]) -> Result<()> {
    check_field(grid, u)?;
    write_file(path, |w| {
        writeln!(w, "x,y,re,im")?;
        for (k, v) in u.iter().enumerate() {
            let (x, y) = grid.coords(k);
            writeln!(w, "{},{},{},{}", x, y, v.re, v.im)?;
        }
        Ok(())
    })
}

/// `x,y,density` with `|u|²`.
pub fn write_density(path: &Path, grid: &Grid, u: &[C64]) -> Result<()> {
    check_field(grid, u)?;
    write_file(path, |w| {
        writeln!(w, "x,y,density")?;
        for (k, v) in u.iter().enumerate() {
            let (x, y) = grid.coords(k);
            writeln!(w, "{},{},{}", x, y, v.norm_sqr())?;
        }
        Ok(())
    })
}

fn check_field(grid: &Grid, u: &[C64]) -> Result<()> {
    if u.len() != grid.node_count() {
        return Err(HarnessError::GridMismatch(format!(
            "field has {} values, grid has {} nodes",
            u.len(),
            grid.node_count()
        )));
    }
    Ok(())
}

/// Snapshot rows as `((x, y), value)`.
pub fn read_snapshot(path: &Path) -> Result<Vec<((f64, f64), C64)>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if n == 0 {
            if line.trim() != "x,y,re,im" {
                return Err(HarnessError::format(path, 1, "expected header x,y,re,im"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| HarnessError::format(path, n + 1, e.to_string()))?;
        let [x, y, re, im] = vals[..] else {
            return Err(HarnessError::format(path, n + 1, "expected 4 columns"));
        };
        out.push(((x, y), C64::new(re, im)));
    }
    Ok(out)
}

/// Reads a snapshot on `grid` and renormalizes it to unit mass. Returns the
/// field and its norm before renormalization.
pub fn load_ground_state(path: &Path, grid: &Grid) -> Result<(Vec<C64>, f64)> {
    let field = load_snapshot_on(path, grid)?;
    Ok(osm_core::gpe::normalize(grid, &field)?)
}

/// Reads a snapshot and checks that it lives on exactly `grid`.
pub fn load_snapshot_on(path: &Path, grid: &Grid) -> Result<Vec<C64>> {
    let rows = read_snapshot(path)?;
    if rows.len() != grid.node_count() {
        return Err(HarnessError::GridMismatch(format!(
            "{} has {} nodes, expected {}x{}",
            path.display(),
            rows.len(),
            grid.nx,
            grid.ny
        )));
    }
    let tol = 1e-9 * (grid.dx.min(grid.dy));
    let mut out = Vec::with_capacity(rows.len());
    for (k, ((x, y), v)) in rows.into_iter().enumerate() {
        let (gx, gy) = grid.coords(k);
        if (gx - x).abs() > tol || (gy - y).abs() > tol {
            return Err(HarnessError::GridMismatch(format!(
                "{}: node {k} at ({x}, {y}), expected ({gx}, {gy})",
                path.display()
            )));
        }
        out.push(v);
    }
    Ok(out)
}

/// Interface vector as `side,subdomain,node,re,im`.
pub fn write_interface(path: &Path, g: &InterfaceVector) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "side,subdomain,node,re,im")?;
        for k in 0..g.n_sub() {
            for (side, vals) in [("l", g.l(k)), ("r", g.r(k))] {
                for (node, v) in vals.into_iter().flatten().enumerate() {
                    writeln!(w, "{side},{k},{node},{},{}", v.re, v.im)?;
                }
            }
        }
        Ok(())
    })
}

/// Preconditioner blocks as `block,row,col,re,im`; blocks are labelled
/// `X<i>_<subdomain>`.
pub fn write_blocks(path: &Path, op: &BlockOperator) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "block,row,col,re,im")?;
        for (k, b) in op.blocks().iter().enumerate() {
            for (i, m) in [&b.x1, &b.x2, &b.x3, &b.x4].into_iter().enumerate() {
                if let Some(m) = m {
                    write_dense_rows(w, &format!("X{}_{k}", i + 1), m)?;
                }
            }
        }
        Ok(())
    })
}

fn write_dense_rows(w: &mut impl Write, label: &str, m: &DenseMatrix) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            writeln!(w, "{label},{r},{c},{},{}", v.re, v.im)?;
        }
    }
    Ok(())
}

/// Sparse matrix as a header `nrows ncols nnz` and one `row col re im` line
/// per stored entry.
pub fn write_matrix(path: &Path, a: &CsrMatrix) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
        for (r, c, v) in a.triplets() {
            writeln!(w, "{r} {c} {} {}", v.re, v.im)?;
        }
        Ok(())
    })
}

/// CSV table preceded by `# schema: <name> v<version>`.
pub fn write_table(path: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# schema: {name} v{TABLE_SCHEMA_VERSION}")?;
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        writeln!(w)
    })
}
