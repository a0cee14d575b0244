//! CSV readers and writers for every artifact schema.
//!
//! All floats are written with Rust's shortest-round-trip `Display`
//! formatting, so a written file parses back to bit-identical values;
//! the readers enforce the exact header and report malformed cells with
//! their row and column.  Schemas:
//!
//! * training curve:   `N,mean_gen_loss,std_err,effective_lambda,replicates`
//! * failure curves:   `N,k,failure,std_err` (consecutive rows with one
//!   `N` form one curve; `N = 0` is the bias-free reference)
//! * exponent series:  `N,beta_eff,std_err`
//! * trade-off surface: `C,R,n_tilde_grid,n_tilde_foc,n_tilde_quasistatic,k_opt,total_loss`
//! * external instances: `id,mean,variance,f1,...,fd`

use crate::adapter::ExternalDataset;
use crate::allocation::SurfaceRow;
use crate::error::{Error, Result};
use crate::expfit::BetaEffPoint;
use crate::passk::PassKCurve;
use crate::ridge::TrainingCurveRow;
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

pub const TRAINING_HEADER: &str = "N,mean_gen_loss,std_err,effective_lambda,replicates";
pub const PASSK_HEADER: &str = "N,k,failure,std_err";
pub const BETA_EFF_HEADER: &str = "N,beta_eff,std_err";
pub const SURFACE_HEADER: &str =
    "C,R,n_tilde_grid,n_tilde_foc,n_tilde_quasistatic,k_opt,total_loss";

fn schema_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn check_finite(value: f64, column: &str) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "refusing to write non-finite value {value} in column {column}"
        )));
    }
    Ok(value)
}

fn parse_cell<T: FromStr>(cell: &str, row: usize, column: &str) -> Result<T> {
    cell.parse::<T>()
        .map_err(|_| schema_err(row, column, format!("cannot parse {cell:?}")))
}

/// Split a data line into exactly `columns.len()` cells.
fn split_line<'a>(line: &'a str, row: usize, columns: &[&str]) -> Result<Vec<&'a str>> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != columns.len() {
        return Err(schema_err(
            row,
            columns.get(cells.len().min(columns.len() - 1)).unwrap_or(&""),
            format!("expected {} cells, found {}", columns.len(), cells.len()),
        ));
    }
    Ok(cells)
}

fn read_lines(reader: impl BufRead, expected_header: &str) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != expected_header {
                return Err(schema_err(
                    1,
                    "",
                    format!("header {line:?} does not match {expected_header:?}"),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue; // tolerate a trailing empty line
        }
        lines.push(line);
    }
    Ok(lines)
}

pub fn write_training_curve(mut w: impl Write, rows: &[TrainingCurveRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str(TRAINING_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            check_finite(r.mean_gen_loss, "mean_gen_loss")?,
            check_finite(r.std_err, "std_err")?,
            check_finite(r.effective_lambda, "effective_lambda")?,
            r.replicates
        )
        .expect("infallible string write");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_training_curve(reader: impl BufRead) -> Result<Vec<TrainingCurveRow>> {
    const COLS: [&str; 5] = ["N", "mean_gen_loss", "std_err", "effective_lambda", "replicates"];
    let mut rows = Vec::new();
    for (i, line) in read_lines(reader, TRAINING_HEADER)?.iter().enumerate() {
        let row = i + 2;
        let cells = split_line(line, row, &COLS)?;
        rows.push(TrainingCurveRow {
            n: parse_cell(cells[0], row, COLS[0])?,
            mean_gen_loss: parse_cell(cells[1], row, COLS[1])?,
            std_err: parse_cell(cells[2], row, COLS[2])?,
            effective_lambda: parse_cell(cells[3], row, COLS[3])?,
            replicates: parse_cell(cells[4], row, COLS[4])?,
        });
    }
    Ok(rows)
}

pub fn write_passk_curves(mut w: impl Write, curves: &[PassKCurve]) -> Result<()> {
    let mut out = String::new();
    out.push_str(PASSK_HEADER);
    out.push('\n');
    for c in curves {
        if c.k_grid.len() != c.failure.len() || c.k_grid.len() != c.std_err.len() {
            return Err(Error::Dimension(format!(
                "curve for N={} has {} k values, {} failures, {} errors",
                c.n_train,
                c.k_grid.len(),
                c.failure.len(),
                c.std_err.len()
            )));
        }
        for ((k, f), se) in c.k_grid.iter().zip(&c.failure).zip(&c.std_err) {
            writeln!(
                out,
                "{},{},{},{}",
                c.n_train,
                k,
                check_finite(*f, "failure")?,
                check_finite(*se, "std_err")?
            )
            .expect("infallible string write");
        }
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_passk_curves(reader: impl BufRead) -> Result<Vec<PassKCurve>> {
    const COLS: [&str; 4] = ["N", "k", "failure", "std_err"];
    let mut curves: Vec<PassKCurve> = Vec::new();
    for (i, line) in read_lines(reader, PASSK_HEADER)?.iter().enumerate() {
        let row = i + 2;
        let cells = split_line(line, row, &COLS)?;
        let n: usize = parse_cell(cells[0], row, COLS[0])?;
        let k: u64 = parse_cell(cells[1], row, COLS[1])?;
        let f: f64 = parse_cell(cells[2], row, COLS[2])?;
        let se: f64 = parse_cell(cells[3], row, COLS[3])?;
        match curves.last_mut() {
            Some(c) if c.n_train == n => {
                c.k_grid.push(k);
                c.failure.push(f);
                c.std_err.push(se);
            }
            _ => curves.push(PassKCurve {
                n_train: n,
                k_grid: vec![k],
                failure: vec![f],
                std_err: vec![se],
            }),
        }
    }
    Ok(curves)
}

pub fn write_beta_eff(mut w: impl Write, points: &[BetaEffPoint]) -> Result<()> {
    let mut out = String::new();
    out.push_str(BETA_EFF_HEADER);
    out.push('\n');
    for p in points {
        writeln!(
            out,
            "{},{},{}",
            p.n,
            check_finite(p.beta_eff, "beta_eff")?,
            check_finite(p.std_err, "std_err")?
        )
        .expect("infallible string write");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_beta_eff(reader: impl BufRead) -> Result<Vec<BetaEffPoint>> {
    const COLS: [&str; 3] = ["N", "beta_eff", "std_err"];
    let mut points = Vec::new();
    for (i, line) in read_lines(reader, BETA_EFF_HEADER)?.iter().enumerate() {
        let row = i + 2;
        let cells = split_line(line, row, &COLS)?;
        points.push(BetaEffPoint {
            n: parse_cell(cells[0], row, COLS[0])?,
            beta_eff: parse_cell(cells[1], row, COLS[1])?,
            std_err: parse_cell(cells[2], row, COLS[2])?,
        });
    }
    Ok(points)
}

pub fn write_surface(mut w: impl Write, rows: &[SurfaceRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str(SURFACE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            check_finite(r.budget, "C")?,
            check_finite(r.train_weight, "R")?,
            check_finite(r.n_tilde_grid, "n_tilde_grid")?,
            check_finite(r.n_tilde_foc, "n_tilde_foc")?,
            check_finite(r.n_tilde_quasistatic, "n_tilde_quasistatic")?,
            check_finite(r.k_opt, "k_opt")?,
            check_finite(r.total_loss, "total_loss")?
        )
        .expect("infallible string write");
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_surface(reader: impl BufRead) -> Result<Vec<SurfaceRow>> {
    const COLS: [&str; 7] = [
        "C",
        "R",
        "n_tilde_grid",
        "n_tilde_foc",
        "n_tilde_quasistatic",
        "k_opt",
        "total_loss",
    ];
    let mut rows = Vec::new();
    for (i, line) in read_lines(reader, SURFACE_HEADER)?.iter().enumerate() {
        let row = i + 2;
        let cells = split_line(line, row, &COLS)?;
        rows.push(SurfaceRow {
            budget: parse_cell(cells[0], row, COLS[0])?,
            train_weight: parse_cell(cells[1], row, COLS[1])?,
            n_tilde_grid: parse_cell(cells[2], row, COLS[2])?,
            n_tilde_foc: parse_cell(cells[3], row, COLS[3])?,
            n_tilde_quasistatic: parse_cell(cells[4], row, COLS[4])?,
            k_opt: parse_cell(cells[5], row, COLS[5])?,
            total_loss: parse_cell(cells[6], row, COLS[6])?,
        });
    }
    Ok(rows)
}

fn external_header(d: usize) -> String {
    let mut h = String::from("id,mean,variance");
    for j in 1..=d {
        write!(h, ",f{j}").expect("infallible string write");
    }
    h
}

pub fn write_external(mut w: impl Write, data: &ExternalDataset) -> Result<()> {
    data.validate()?;
    for (i, id) in data.ids.iter().enumerate() {
        if id.is_empty() || id.contains([',', '\n', '\r']) {
            return Err(Error::Domain(format!(
                "instance id {id:?} (row {}) cannot be written as a CSV cell",
                i + 2
            )));
        }
    }
    let d = data.d();
    let mut out = external_header(d);
    out.push('\n');
    for i in 0..data.n() {
        write!(
            out,
            "{},{},{}",
            data.ids[i],
            check_finite(data.means[i], "mean")?,
            check_finite(data.variances[i], "variance")?
        )
        .expect("infallible string write");
        for j in 0..d {
            write!(out, ",{}", check_finite(data.features[(i, j)], "feature")?)
                .expect("infallible string write");
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_external(reader: impl BufRead) -> Result<ExternalDataset> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| schema_err(1, "", "empty file"))??;
    let head_cells: Vec<&str> = header.split(',').collect();
    if head_cells.len() < 4 || head_cells[..3] != ["id", "mean", "variance"] {
        return Err(schema_err(
            1,
            "",
            format!("header {header:?} must start with id,mean,variance,f1,..."),
        ));
    }
    let d = head_cells.len() - 3;
    for (j, cell) in head_cells[3..].iter().enumerate() {
        let want = format!("f{}", j + 1);
        if *cell != want {
            return Err(schema_err(1, cell, format!("expected feature column {want:?}")));
        }
    }

    let mut ids = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    let mut flat = Vec::new();
    let mut row = 1usize;
    for line in lines {
        let line = line?;
        row += 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d + 3 {
            return Err(schema_err(
                row,
                "",
                format!("expected {} cells, found {}", d + 3, cells.len()),
            ));
        }
        if cells[0].is_empty() {
            return Err(schema_err(row, "id", "empty instance id"));
        }
        ids.push(cells[0].to_string());
        means.push(parse_cell(cells[1], row, "mean")?);
        let variance: f64 = parse_cell(cells[2], row, "variance")?;
        if variance < 0.0 {
            return Err(schema_err(row, "variance", format!("negative variance {variance}")));
        }
        variances.push(variance);
        for (j, cell) in cells[3..].iter().enumerate() {
            flat.push(parse_cell::<f64>(cell, row, &format!("f{}", j + 1))?);
        }
    }
    let n = ids.len();
    let data = ExternalDataset {
        ids,
        means,
        variances,
        features: DMatrix::from_row_slice(n, d, &flat),
    };
    data.validate()?;
    Ok(data)
}

// Path-based conveniences.

fn open_reader(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    Ok(std::io::BufReader::new(std::fs::File::open(path)?))
}

fn create_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_training_curve(path: impl AsRef<Path>, rows: &[TrainingCurveRow]) -> Result<()> {
    write_training_curve(create_writer(path.as_ref())?, rows)
}

pub fn load_training_curve(path: impl AsRef<Path>) -> Result<Vec<TrainingCurveRow>> {
    read_training_curve(open_reader(path.as_ref())?)
}

pub fn save_passk_curves(path: impl AsRef<Path>, curves: &[PassKCurve]) -> Result<()> {
    write_passk_curves(create_writer(path.as_ref())?, curves)
}

pub fn load_passk_curves(path: impl AsRef<Path>) -> Result<Vec<PassKCurve>> {
    read_passk_curves(open_reader(path.as_ref())?)
}

pub fn save_beta_eff(path: impl AsRef<Path>, points: &[BetaEffPoint]) -> Result<()> {
    write_beta_eff(create_writer(path.as_ref())?, points)
}

pub fn load_beta_eff(path: impl AsRef<Path>) -> Result<Vec<BetaEffPoint>> {
    read_beta_eff(open_reader(path.as_ref())?)
}

pub fn save_surface(path: impl AsRef<Path>, rows: &[SurfaceRow]) -> Result<()> {
    write_surface(create_writer(path.as_ref())?, rows)
}

pub fn load_surface(path: impl AsRef<Path>) -> Result<Vec<SurfaceRow>> {
    read_surface(open_reader(path.as_ref())?)
}

pub fn save_external(path: impl AsRef<Path>, data: &ExternalDataset) -> Result<()> {
    write_external(create_writer(path.as_ref())?, data)
}

pub fn load_external(path: impl AsRef<Path>) -> Result<ExternalDataset> {
    read_external(open_reader(path.as_ref())?)
}
