//! Delimited-text datasets: `id, x, y, item_*, cov_*`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const ITEM_PREFIX: &str = "item_";
pub const COVARIATE_PREFIX: &str = "cov_";

fn parse_err(file: &str, line: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

enum Column {
    Id,
    X,
    Y,
    Item(usize),
    Covariate(usize),
}

/// Reads a dataset from delimited text. `name` labels error messages.
pub fn read_dataset<R: Read>(reader: R, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(name, 1, "", e.to_string()))?
        .clone();
    let mut columns = Vec::with_capacity(headers.len());
    let (mut item_names, mut covariate_names) = (Vec::new(), Vec::new());
    let mut seen = std::collections::HashSet::new();
    for h in headers.iter() {
        if !seen.insert(h.to_string()) {
            return Err(parse_err(name, 1, h, "duplicate column"));
        }
        columns.push(match h {
            "id" => Column::Id,
            "x" => Column::X,
            "y" => Column::Y,
            _ if h.starts_with(ITEM_PREFIX) && h.len() > ITEM_PREFIX.len() => {
                item_names.push(h[ITEM_PREFIX.len()..].to_string());
                Column::Item(item_names.len() - 1)
            }
            _ if h.starts_with(COVARIATE_PREFIX) && h.len() > COVARIATE_PREFIX.len() => {
                covariate_names.push(h[COVARIATE_PREFIX.len()..].to_string());
                Column::Covariate(covariate_names.len() - 1)
            }
            _ => return Err(parse_err(name, 1, h, "unknown column")),
        });
    }
    for required in ["x", "y"] {
        if !headers.iter().any(|h| h == required) {
            return Err(parse_err(name, 1, required, "required column is absent"));
        }
    }
    let (q, p) = (item_names.len(), covariate_names.len());

    let mut ids = Vec::new();
    let mut coords = Vec::new();
    let mut responses = Vec::new();
    let mut covs: Vec<f64> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| parse_err(name, line, "", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                name,
                line,
                "",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let mut id = (coords.len() + 1).to_string();
        let mut xy = [f64::NAN; 2];
        let mut row_items = vec![None; q];
        let mut row_covs = vec![0.0; p];
        for ((col, cell), h) in columns.iter().zip(record.iter()).zip(headers.iter()) {
            let number = |cell: &str| -> Result<f64> {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(name, line, h, format!("`{cell}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(name, line, h, format!("`{cell}` is not finite")))
                }
            };
            match col {
                Column::Id => id = cell.to_string(),
                Column::X => xy[0] = number(cell)?,
                Column::Y => xy[1] = number(cell)?,
                Column::Item(j) => {
                    row_items[*j] = match cell {
                        c if is_missing(c) => None,
                        "0" => Some(0),
                        "1" => Some(1),
                        other => {
                            return Err(parse_err(
                                name,
                                line,
                                h,
                                format!("item value `{other}` is not 0, 1 or NA"),
                            ))
                        }
                    }
                }
                Column::Covariate(l) => {
                    if is_missing(cell) {
                        return Err(parse_err(name, line, h, "missing covariate values are not supported"));
                    }
                    row_covs[*l] = number(cell)?;
                }
            }
        }
        ids.push(id);
        coords.push(xy);
        responses.extend(row_items);
        covs.extend(row_covs);
    }
    if coords.is_empty() {
        return Err(parse_err(name, 2, "", "dataset has no rows"));
    }
    let n = coords.len();
    let x_raw = DMatrix::from_row_slice(n, p, &covs);
    Dataset::new(ids, item_names, responses, coords, covariate_names, x_raw)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, &path.display().to_string())
}

/// Writes raw (unstandardized) covariates with round-trip float formatting.
pub fn write_dataset_to<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "x".into(), "y".into()];
    header.extend(data.item_names.iter().map(|n| format!("{ITEM_PREFIX}{n}")));
    header.extend(data.covariate_names.iter().map(|n| format!("{COVARIATE_PREFIX}{n}")));
    let to_io = |e: csv::Error| Error::Invalid(format!("writing dataset: {e}"));
    w.write_record(&header).map_err(to_io)?;
    for i in 0..data.n() {
        let mut row = vec![
            data.ids[i].clone(),
            data.coords[i][0].to_string(),
            data.coords[i][1].to_string(),
        ];
        for j in 0..data.q() {
            row.push(match data.y(i, j) {
                Some(v) => v.to_string(),
                None => "NA".into(),
            });
        }
        for l in 0..data.p() {
            row.push(data.x_raw[(i, l)].to_string());
        }
        w.write_record(&row).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("writing dataset: {e}")))?;
    Ok(())
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(data, std::io::BufWriter::new(file))
}

/// Reads `x, y` plus optional `cov_*` columns, as used for prediction sites.
pub fn read_locations<R: Read>(reader: R, name: &str) -> Result<(Vec<[f64; 2]>, Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(name, 1, "", e.to_string()))?
        .clone();
    let mut cov_names = Vec::new();
    for h in headers.iter() {
        match h {
            "x" | "y" | "id" => {}
            _ if h.starts_with(COVARIATE_PREFIX) => cov_names.push(h[COVARIATE_PREFIX.len()..].to_string()),
            _ => return Err(parse_err(name, 1, h, "unknown column")),
        }
    }
    let mut coords = Vec::new();
    let mut covs = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| parse_err(name, line, "", e.to_string()))?;
        let mut xy = [f64::NAN; 2];
        for (h, cell) in headers.iter().zip(record.iter()) {
            if h == "id" {
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_err(name, line, h, format!("`{cell}` is not a finite number")))?;
            match h {
                "x" => xy[0] = v,
                "y" => xy[1] = v,
                _ => covs.push(v),
            }
        }
        if xy.iter().any(|v| v.is_nan()) {
            return Err(parse_err(name, line, "x", "coordinates are required"));
        }
        coords.push(xy);
    }
    let x = DMatrix::from_row_slice(coords.len(), cov_names.len(), &covs);
    Ok((coords, cov_names, x))
}
