//! CSV snapshots, history tables, JSON summaries and binary checkpoints.
//! Layouts are described in `docs/formats.md`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{BoundaryField, BulkField};
use crate::geometry::Mesh;
use crate::state::{ControlTrajectory, StateTrajectory};
use crate::time::TimeGrid;

pub const OUTPUT_ROOT_VAR: &str = "CHBC_OUTPUT_ROOT";
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"CHBCCKP1";

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Relative output directories are placed under `$CHBC_OUTPUT_ROOT` when set.
pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        writeln!(w, "{}", r.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bulk_snapshot(path: &Path, mesh: &Mesh, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut header: Vec<&str> = if mesh.dimension == 1 { vec!["x"] } else { vec!["x", "y"] };
    header.extend(columns.iter().map(|c| c.0));
    let rows = mesh
        .bulk_nodes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = vec![fmt_f64(p[0])];
            if mesh.dimension == 2 {
                r.push(fmt_f64(p[1]));
            }
            r.extend(columns.iter().map(|c| fmt_f64(c.1[i])));
            r
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, &rows)
}

pub fn write_boundary_snapshot(path: &Path, mesh: &Mesh, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut header = vec!["arc"];
    header.extend(columns.iter().map(|c| c.0));
    let rows = mesh
        .boundary_arc
        .iter()
        .enumerate()
        .map(|(s, a)| {
            let mut r = vec![fmt_f64(*a)];
            r.extend(columns.iter().map(|c| fmt_f64(c.1[s])));
            r
        })
        .collect::<Vec<_>>();
    write_csv(path, &header, &rows)
}

/// Writes `fields/bulk_tNNNN.csv` and `fields/boundary_tNNNN.csv` for every
/// `stride`-th level and the final one.
pub fn write_snapshots(
    dir: &Path,
    mesh: &Mesh,
    state: &StateTrajectory,
    control: &ControlTrajectory,
    stride: usize,
) -> Result<usize> {
    let fields = dir.join("fields");
    fs::create_dir_all(&fields)?;
    let m = state.steps();
    let stride = stride.max(1);
    let mut count = 0;
    for k in (0..=m).filter(|k| k % stride == 0 || *k == m) {
        write_bulk_snapshot(
            &fields.join(format!("bulk_t{k:04}.csv")),
            mesh,
            &[("mu", &state.mu[k]), ("rho", &state.rho[k])],
        )?;
        write_boundary_snapshot(
            &fields.join(format!("boundary_t{k:04}.csv")),
            mesh,
            &[("rho_gamma", &state.rho_gamma[k]), ("u_gamma", &control.u[k])],
        )?;
        count += 1;
    }
    Ok(count)
}

/// Reads `mu` and `rho` columns from a bulk snapshot matching `mesh`.
pub fn read_bulk_csv(path: &Path, mesh: &Mesh) -> Result<(BulkField, BulkField)> {
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{}: empty file", path.display())))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column {name}", path.display())))
    };
    let (imu, irho) = (find("mu")?, find("rho")?);
    let mut mu = Vec::new();
    let mut rho = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.trim().split(',').collect();
        let parse = |i: usize| -> Result<f64> {
            vals.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("{}: bad row '{line}'", path.display())))
        };
        mu.push(parse(imu)?);
        rho.push(parse(irho)?);
    }
    if mu.len() != mesh.n_bulk() {
        return Err(Error::Format(format!(
            "{}: {} rows for a mesh with {} nodes",
            path.display(),
            mu.len(),
            mesh.n_bulk()
        )));
    }
    Ok((BulkField(mu), BulkField(rho)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// State and control trajectories in a flat binary layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub dimension: u32,
    pub resolution: u32,
    pub grid: TimeGrid,
    pub mu: Vec<BulkField>,
    pub rho: Vec<BulkField>,
    pub rho_gamma: Vec<BoundaryField>,
    pub u: Vec<BoundaryField>,
}

impl Checkpoint {
    pub fn new(mesh: &Mesh, state: &StateTrajectory, control: &ControlTrajectory) -> Self {
        Self {
            dimension: mesh.dimension as u32,
            resolution: mesh.resolution as u32,
            grid: state.grid,
            mu: state.mu.clone(),
            rho: state.rho.clone(),
            rho_gamma: state.rho_gamma.clone(),
            u: control.u.clone(),
        }
    }
}

pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let nb = c.mu.first().map_or(0, |f| f.len());
    let ng = c.rho_gamma.first().map_or(0, |f| f.len());
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&c.dimension.to_le_bytes())?;
    w.write_all(&c.resolution.to_le_bytes())?;
    w.write_all(&(nb as u64).to_le_bytes())?;
    w.write_all(&(ng as u64).to_le_bytes())?;
    w.write_all(&(c.grid.levels() as u64).to_le_bytes())?;
    w.write_all(&c.grid.final_time.to_le_bytes())?;
    let bulk = [&c.mu, &c.rho];
    for field in bulk {
        for level in field {
            for v in level.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    for field in [&c.rho_gamma, &c.u] {
        for level in field {
            for v in level.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
    let dimension = u32_at(take(4)?);
    let resolution = u32_at(take(4)?);
    let nb = u64_at(take(8)?) as usize;
    let ng = u64_at(take(8)?) as usize;
    let levels = u64_at(take(8)?) as usize;
    let final_time = f64::from_le_bytes(take(8)?.try_into().unwrap());
    if levels < 2 {
        return Err(Error::Format("checkpoint holds fewer than two levels".into()));
    }
    let mut read_levels = |n: usize| -> Result<Vec<Vec<f64>>> {
        (0..levels)
            .map(|_| {
                take(8 * n).map(|s| {
                    s.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect()
                })
            })
            .collect()
    };
    let mu = read_levels(nb)?.into_iter().map(BulkField).collect();
    let rho = read_levels(nb)?.into_iter().map(BulkField).collect();
    let rho_gamma = read_levels(ng)?.into_iter().map(BoundaryField).collect();
    let u = read_levels(ng)?.into_iter().map(BoundaryField).collect();
    if pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint payload".into()));
    }
    Ok(Checkpoint {
        dimension,
        resolution,
        grid: TimeGrid::new(final_time, levels - 1)?,
        mu,
        rho,
        rho_gamma,
        u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
