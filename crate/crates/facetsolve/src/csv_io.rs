//! CSV field files and tables.
//!
//! Every file starts with a `# config_hash=<hex>` comment line. Floats are
//! written in shortest round-trip exponent form, so equal runs produce equal
//! bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use facetsolve_core::grid::{gradient, Grid, ScalarField, VectorField};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn create(path: &Path, hash: &str) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "# config_hash={hash}")?;
    Ok(csv::Writer::from_writer(w))
}

fn coord_names(dim: usize) -> &'static [&'static str] {
    if dim == 1 {
        &["x"]
    } else {
        &["x", "y"]
    }
}

/// One row per node: coordinates and the value.
pub fn write_node_field(path: &Path, hash: &str, name: &str, u: &ScalarField) -> anyhow::Result<()> {
    let g = u.grid();
    let mut w = create(path, hash)?;
    let mut header: Vec<&str> = coord_names(g.dim()).to_vec();
    header.push(name);
    w.write_record(&header)?;
    for (k, v) in u.values().iter().enumerate() {
        let x = g.node_point(k);
        let mut row: Vec<String> = x.as_slice().iter().map(|c| fmt_f64(*c)).collect();
        row.push(fmt_f64(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per cell: centroid, `∇u` and `Z`.
pub fn write_cell_fields(path: &Path, hash: &str, u: &ScalarField, z: &VectorField) -> anyhow::Result<()> {
    let g = u.grid();
    let grad = gradient(u)?;
    let mut w = create(path, hash)?;
    let mut header: Vec<&str> = coord_names(g.dim()).to_vec();
    if g.dim() == 1 {
        header.extend(["du_x", "z_x"]);
    } else {
        header.extend(["du_x", "du_y", "z_x", "z_y"]);
    }
    w.write_record(&header)?;
    for c in 0..g.num_cells() {
        let x = g.cell_center(c);
        let mut row: Vec<String> = x.as_slice().iter().map(|v| fmt_f64(*v)).collect();
        row.extend(grad.values()[c].as_slice().iter().map(|v| fmt_f64(*v)));
        row.extend(z.values()[c].as_slice().iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = create(path, hash)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a node field written in the [`write_node_field`] layout. Rows must
/// list every node in index order with matching coordinates.
pub fn read_node_field(path: &Path, grid: Grid) -> anyhow::Result<ScalarField> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let dim = grid.dim();
    let tol = 1e-9 * grid.side();
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            bail!("{}: row {} has {} columns, expected {}", path.display(), k + 1, rec.len(), dim + 1);
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}: row {} is not numeric", path.display(), k + 1))?;
        if k >= grid.num_nodes() {
            bail!("{}: more rows than the {} grid nodes", path.display(), grid.num_nodes());
        }
        let x = grid.node_point(k);
        if (0..dim).any(|i| (nums[i] - x.get(i)).abs() > tol) {
            bail!("{}: row {} coordinates do not match node {k}", path.display(), k + 1);
        }
        values.push(nums[dim]);
    }
    if values.len() != grid.num_nodes() {
        bail!("{}: {} rows for {} grid nodes", path.display(), values.len(), grid.num_nodes());
    }
    Ok(ScalarField::nodes(grid, values)?)
}
