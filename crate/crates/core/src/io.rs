//! File formats: grid densities and chains as CSV, reports as JSON.
//!
//! A density file starts with one `#`-prefixed JSON line holding the grid
//! and a free-text description, followed by a `node,value` table (or
//! `node1,node2,value` on a plane). Numbers are written with 17 significant
//! digits so that reading a file back reproduces every bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{Grid1D, Grid2D, GridDensity, Mesh};
use crate::samplers::{ChainRun, CltReplication};

/// JSON header line of a density file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityHeader {
    pub lower: f64,
    pub upper: f64,
    pub n_points: usize,
    /// Second axis of a plane density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<Grid1D>,
    #[serde(default)]
    pub description: String,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => invalid(format!("malformed CSV: {other:?}")),
    }
}

pub fn write_density_csv<W: Write>(out: W, density: &GridDensity, description: &str) -> Result<()> {
    let mesh = density.mesh();
    let (first, second) = match (mesh.as_line(), mesh.as_plane()) {
        (Some(g), _) => (*g, None),
        (None, Some(p)) => (p.first, Some(p.second)),
        (None, None) => unreachable!("a mesh is a line or a plane"),
    };
    let header = DensityHeader {
        lower: first.lower(),
        upper: first.upper(),
        n_points: first.len(),
        second,
        description: description.to_string(),
    };
    let mut out = BufWriter::new(out);
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    let mut w = csv::Writer::from_writer(out);
    match second {
        None => {
            w.write_record(["node", "value"]).map_err(csv_err)?;
            for (x, v) in first.nodes().into_iter().zip(density.values()) {
                w.write_record([num(x), num(*v)]).map_err(csv_err)?;
            }
        }
        Some(g2) => {
            w.write_record(["node1", "node2", "value"]).map_err(csv_err)?;
            let plane = Grid2D::new(first, g2);
            for (k, v) in density.values().iter().enumerate() {
                let (i, j) = plane.split(k);
                w.write_record([num(first.node(i)), num(g2.node(j)), num(*v)]).map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_density_csv<R: Read>(input: R) -> Result<(GridDensity, DensityHeader)> {
    let mut input = BufReader::new(input);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let json = line
        .trim_end()
        .strip_prefix('#')
        .ok_or_else(|| invalid("density file must start with a '#' JSON header line"))?;
    let header: DensityHeader = serde_json::from_str(json.trim())?;
    let first = Grid1D::new(header.lower, header.upper, header.n_points)?;
    let second = header.second.map(|g| Grid1D::new(g.lower(), g.upper(), g.len())).transpose()?;
    let columns = if second.is_some() { 3 } else { 2 };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != columns {
            return Err(invalid(format!("row {} has {} columns, expected {columns}", row + 1, rec.len())));
        }
        let field = |c: usize| -> Result<f64> {
            rec[c].trim().parse().map_err(|_| invalid(format!("row {}: cannot parse {:?}", row + 1, &rec[c])))
        };
        let expected = match second {
            None => vec![first.node(row.min(first.len() - 1))],
            Some(g2) => {
                let (i, j) = (row / g2.len(), row % g2.len());
                vec![first.node(i.min(first.len() - 1)), g2.node(j)]
            }
        };
        for (c, x) in expected.iter().enumerate() {
            let got = field(c)?;
            if (got - x).abs() > 1e-9 * (1.0 + x.abs()) {
                return Err(invalid(format!("row {}: node {got} does not match the header grid ({x})", row + 1)));
            }
        }
        values.push(field(columns - 1)?);
    }
    let mesh: Mesh = match second {
        None => first.into(),
        Some(g2) => Grid2D::new(first, g2).into(),
    };
    // Files we wrote are normalized already and must come back bit for bit;
    // anything else is rescaled.
    let density = match GridDensity::from_normalized(mesh.clone(), values.clone()) {
        Ok(d) => d,
        Err(_) => GridDensity::new(mesh, values)?,
    };
    Ok((density, header))
}

pub fn save_density(path: &Path, density: &GridDensity, description: &str) -> Result<()> {
    write_density_csv(File::create(path)?, density, description)
}

pub fn load_density(path: &Path) -> Result<GridDensity> {
    Ok(read_density_csv(File::open(path)?)?.0)
}

/// Chain as `step,x1[,x2],accepted`, steps counted from 1; the starting
/// point, seed and kernel go in the header line.
pub fn write_chain_csv<W: Write>(out: W, run: &ChainRun, plane: bool) -> Result<()> {
    let mut out = BufWriter::new(out);
    let header = serde_json::json!({
        "seed": run.seed,
        "kernel": run.kernel_descriptor,
        "x0": if plane { run.x0.to_vec() } else { vec![run.x0[0]] },
        "acceptance_rate": run.acceptance_rate,
        "truncation_events": run.truncation_events,
    });
    writeln!(out, "# {header}")?;
    let mut w = csv::Writer::from_writer(out);
    if plane {
        w.write_record(["step", "x1", "x2", "accepted"]).map_err(csv_err)?;
    } else {
        w.write_record(["step", "x", "accepted"]).map_err(csv_err)?;
    }
    for (i, (s, a)) in run.states.iter().zip(&run.accepted).enumerate() {
        let step = (i + 1).to_string();
        let acc = if *a { "1" } else { "0" };
        if plane {
            w.write_record([step, num(s[0]), num(s[1]), acc.into()]).map_err(csv_err)?;
        } else {
            w.write_record([step, num(s[0]), acc.into()]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the states back from a chain file.
pub fn read_chain_states<R: Read>(input: R) -> Result<Vec<[f64; 2]>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> { rec[i].parse().map_err(|_| invalid(format!("bad number {:?}", &rec[i]))) };
        match rec.len() {
            3 => out.push([parse(1)?, 0.0]),
            4 => out.push([parse(1)?, parse(2)?]),
            n => return Err(invalid(format!("chain rows have 3 or 4 columns, found {n}"))),
        }
    }
    Ok(out)
}

pub fn write_replications_csv<W: Write>(out: W, reps: &[CltReplication]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "level", "random_centred", "deterministic_centred", "ergodic_average", "batch_means"])
        .map_err(csv_err)?;
    for r in reps {
        w.write_record([
            r.replication.to_string(),
            r.level.to_string(),
            num(r.random_centred),
            num(r.deterministic_centred),
            num(r.ergodic_average),
            num(r.batch_means),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A one-column series `index,value`, used for observation files.
pub fn write_series_csv<W: Write>(out: W, name: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", name]).map_err(csv_err)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i + 1).to_string(), num(*v)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            let cell = rec.get(1).ok_or_else(|| invalid("series rows need two columns"))?;
            cell.trim().parse().map_err(|_| invalid(format!("bad number {cell:?}")))
        })
        .collect()
}

/// Writes pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}
