//! Text file formats. Floats are written in Rust's shortest round-trip
//! form unless a format fixes the precision, so every artifact reloads to
//! the exact values that were saved.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sscnn_core::autodiff::TensorMap;
use sscnn_core::eigen::{EigenOptions, SpectralBasis};
use sscnn_core::graph::Point3;
use sscnn_core::network::Model;
use sscnn_core::sparse::CsrMatrix;
use sscnn_core::sync::AverageShape;
use sscnn_core::train::{FmapMode, LossRecord};
use sscnn_core::Mat;

use crate::config;

/// Writes through a temporary sibling and renames, so readers never see a
/// partial artifact.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn floats(line: &str, path: &Path, no: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| anyhow!("{}:{}: bad number '{t}'", path.display(), no + 1)))
        .collect()
}

fn triples(path: &Path) -> Result<Vec<Point3>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            let v = floats(l, path, no)?;
            <[f64; 3]>::try_from(v).map_err(|_| anyhow!("{}:{}: expected 3 values", path.display(), no + 1))
        })
        .collect()
}

fn write_triples(path: &Path, values: &[Point3]) -> Result<()> {
    let mut s = String::new();
    for p in values {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    write_atomic(path, &s)
}

/// `.pts`: `x y z` per line.
pub fn read_pts(path: &Path) -> Result<Vec<Point3>> {
    triples(path)
}

pub fn write_pts(path: &Path, points: &[Point3]) -> Result<()> {
    write_triples(path, points)
}

/// `.nrm`: `nx ny nz` per line.
pub fn read_nrm(path: &Path) -> Result<Vec<Point3>> {
    triples(path)
}

pub fn write_nrm(path: &Path, normals: &[Point3]) -> Result<()> {
    write_triples(path, normals)
}

/// One non-negative integer per line: `.seg` labels, and `.kp` keypoint
/// vertex indices (line `j` holds keypoint class `j`).
pub fn read_ints(path: &Path) -> Result<Vec<u64>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| {
            l.trim()
                .parse()
                .map_err(|_| anyhow!("{}:{}: expected a non-negative integer", path.display(), no + 1))
        })
        .collect()
}

pub fn write_ints<T: std::fmt::Display>(path: &Path, values: &[T]) -> Result<()> {
    let mut s = String::new();
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    write_atomic(path, &s)
}

fn write_rows(s: &mut String, m: &Mat, fmt: fn(f64) -> String) {
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt(v)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
}

fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn shortest(v: f64) -> String {
    format!("{v}")
}

fn header<'a>(line: Option<&'a str>, magic: &str, path: &Path) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.unwrap_or("").split_whitespace().collect();
    if fields.first() != Some(&magic) {
        bail!("{}: not a {magic} file", path.display());
    }
    Ok(fields[1..].to_vec())
}

fn dims(fields: &[&str], count: usize, path: &Path) -> Result<Vec<usize>> {
    if fields.len() != count {
        bail!("{}: malformed header", path.display());
    }
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| anyhow!("{}: malformed header", path.display())))
        .collect()
}

fn read_matrix<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, rows: usize, cols: usize, path: &Path) -> Result<Mat> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (no, line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
        let v = floats(line, path, no)?;
        if v.len() != cols {
            bail!("{}:{}: expected {cols} values, found {}", path.display(), no + 1, v.len());
        }
        data.extend(v);
    }
    Ok(Mat::from_vec(rows, cols, data))
}

/// `.basis`: `SPECBASIS n m`, the eigenvalues, then one row per vertex,
/// all at 17 significant digits.
pub fn basis_text(basis: &SpectralBasis) -> String {
    let mut s = format!("SPECBASIS {} {}\n", basis.n(), basis.m());
    let ev: Vec<String> = basis.eigenvalues().iter().map(|&v| sig17(v)).collect();
    s.push_str(&ev.join(" "));
    s.push('\n');
    write_rows(&mut s, basis.vectors(), sig17);
    s
}

pub fn write_basis(path: &Path, basis: &SpectralBasis) -> Result<()> {
    write_atomic(path, &basis_text(basis))
}

pub fn read_basis(path: &Path) -> Result<SpectralBasis> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let d = dims(&header(lines.next().map(|l| l.1), "SPECBASIS", path)?, 2, path)?;
    let (no, ev_line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
    let ev = floats(ev_line, path, no)?;
    if ev.len() != d[1] {
        bail!("{}: expected {} eigenvalues", path.display(), d[1]);
    }
    let vectors = read_matrix(&mut lines, d[0], d[1], path)?;
    Ok(SpectralBasis::new(ev, vectors)?)
}

/// `.fmap`: `FMAP rows cols` then the matrix.
pub fn write_fmap(path: &Path, c: &Mat) -> Result<()> {
    let mut s = format!("FMAP {} {}\n", c.rows(), c.cols());
    write_rows(&mut s, c, shortest);
    write_atomic(path, &s)
}

pub fn read_fmap(path: &Path) -> Result<Mat> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let d = dims(&header(lines.next().map(|l| l.1), "FMAP", path)?, 2, path)?;
    read_matrix(&mut lines, d[0], d[1], path)
}

/// `.avg`: `AVGSHAPE R nnz`, one `i j w` triplet per line, then the mean
/// occupancy of all `R³` voxels on one line. The canonical basis is
/// recomputed (deterministically) on load.
pub fn write_average(path: &Path, avg: &AverageShape) -> Result<()> {
    let t = avg.weights().triplets();
    let mut s = format!("AVGSHAPE {} {}\n", avg.resolution(), t.len());
    for (i, j, w) in t {
        let _ = writeln!(s, "{i} {j} {w}");
    }
    let occ: Vec<String> = avg.occupancy().iter().map(|&v| shortest(v)).collect();
    s.push_str(&occ.join(" "));
    s.push('\n');
    write_atomic(path, &s)
}

pub fn read_average(path: &Path, k_canon: usize, opts: &EigenOptions) -> Result<AverageShape> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let d = dims(&header(lines.next().map(|l| l.1), "AVGSHAPE", path)?, 2, path)?;
    let (r, nnz) = (d[0], d[1]);
    let cells = r * r * r;
    let mut triplets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let (no, line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let parse = || -> Option<(usize, usize, f64)> { Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?)) };
        let t = parse().filter(|t| f.len() == 3 && t.0 < cells && t.1 < cells);
        triplets.push(t.ok_or_else(|| anyhow!("{}:{}: bad triplet", path.display(), no + 1))?);
    }
    let (no, occ_line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
    let occupancy = floats(occ_line, path, no)?;
    let weights = CsrMatrix::from_triplets(cells, cells, &triplets);
    Ok(AverageShape::from_parts(r, weights, occupancy, k_canon, opts)?)
}

const CKPT_MAGIC: &str = "SSCNN-CKPT v1";

fn write_tensors(s: &mut String, section: &str, map: &TensorMap) {
    let _ = writeln!(s, "{section} {}", map.len());
    for (name, m) in map.iter() {
        let _ = writeln!(s, "tensor {name} 2 {} {}", m.rows(), m.cols());
        write_rows(s, m, shortest);
    }
}

/// `.ckpt`: magic line, training step, the model config echo, then the
/// parameter and buffer tensors as `tensor <name> <rank> <dims…>` records
/// followed by their row-major payload.
pub fn write_checkpoint(path: &Path, model: &Model, fmap: FmapMode) -> Result<()> {
    let echo = config::model_echo(model.config(), fmap);
    let mut s = format!("{CKPT_MAGIC}\nstep {}\nconfig {}\n{echo}", model.step(), echo.lines().count());
    write_tensors(&mut s, "params", model.params());
    write_tensors(&mut s, "buffers", model.buffers());
    write_atomic(path, &s)
}

pub fn read_checkpoint(path: &Path) -> Result<(Model, FmapMode)> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|l| l.1) != Some(CKPT_MAGIC) {
        bail!("{}: not a checkpoint", path.display());
    }
    let mut field = |key: &str| -> Result<usize> {
        let (_, line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
        line.strip_prefix(key)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| anyhow!("{}: expected '{key} <n>'", path.display()))
    };
    let step = field("step ")?;
    let n_config = field("config ")?;
    let echo: Vec<&str> = (0..n_config).filter_map(|_| lines.next().map(|l| l.1)).collect();
    let (config, fmap) = config::parse_model_echo(&echo.join("\n"))?;
    let mut maps = Vec::new();
    for section in ["params", "buffers"] {
        let (_, line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
        let count: usize = line
            .strip_prefix(section)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| anyhow!("{}: expected '{section} <n>'", path.display()))?;
        let mut map = TensorMap::new();
        for _ in 0..count {
            let (no, line) = lines.next().ok_or_else(|| anyhow!("{}: truncated", path.display()))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 3 || f[0] != "tensor" {
                bail!("{}:{}: expected a tensor record", path.display(), no + 1);
            }
            let rank: usize = f[2].parse().map_err(|_| anyhow!("{}:{}: bad rank", path.display(), no + 1))?;
            let d = dims(&f[3..], rank, path)?;
            let (rows, cols) = match d[..] {
                [r, c] => (r, c),
                [r] => (r, 1),
                _ => bail!("{}:{}: unsupported tensor rank {rank}", path.display(), no + 1),
            };
            map.insert(f[1], read_matrix(&mut lines, rows, cols, path)?);
        }
        maps.push(map);
    }
    let buffers = maps.pop().unwrap();
    let params = maps.pop().unwrap();
    Ok((Model::from_parts(config, params, buffers, step as u64)?, fmap))
}

/// `epoch,phase,loss`.
pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut s = String::from("epoch,phase,loss\n");
    for r in history {
        let _ = writeln!(s, "{},{},{}", r.epoch, r.phase.name(), r.loss);
    }
    write_atomic(path, &s)
}

/// A CSV with the given header and pre-formatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    write_atomic(path, &s)
}

/// Rows of a CSV file below its header.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read(path)?
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}
