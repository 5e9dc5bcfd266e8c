//! Prediction grids and export of factor surfaces as delimited text or GeoJSON.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::products::PredictionResult;

/// Regular grid of square cells over a bounding box, optionally clipped to a
/// polygon. Cells are ordered row by row from the lower-left corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// `[x_min, y_min, x_max, y_max]`.
    pub bbox: [f64; 4],
    pub cell_size: f64,
    /// Closed ring of vertices; cells whose centre falls outside are dropped.
    #[serde(default)]
    pub mask: Option<Vec<[f64; 2]>>,
}

impl GridSpec {
    pub fn new(bbox: [f64; 4], cell_size: f64, mask: Option<Vec<[f64; 2]>>) -> Result<Self> {
        let g = GridSpec {
            bbox,
            cell_size,
            mask,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let [x0, y0, x1, y1] = self.bbox;
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(Error::Invalid(format!("grid cell size must be positive, got {}", self.cell_size)));
        }
        if !(x1 > x0 && y1 > y0) || self.bbox.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("grid bounding box {:?} is empty", self.bbox)));
        }
        if let Some(mask) = &self.mask {
            if mask.len() < 3 {
                return Err(Error::Invalid("grid mask needs at least 3 vertices".into()));
            }
        }
        if self.cell_centers().is_empty() {
            return Err(Error::Invalid("grid contains no cells".into()));
        }
        Ok(())
    }

    /// Columns and rows of the unclipped grid; a partial cell at the edge counts.
    pub fn shape(&self) -> (usize, usize) {
        let [x0, y0, x1, y1] = self.bbox;
        let nx = ((x1 - x0) / self.cell_size - 1e-9).ceil().max(1.0) as usize;
        let ny = ((y1 - y0) / self.cell_size - 1e-9).ceil().max(1.0) as usize;
        (nx, ny)
    }

    pub fn cell_centers(&self) -> Vec<[f64; 2]> {
        let (nx, ny) = self.shape();
        let [x0, y0, _, _] = self.bbox;
        let mut out = Vec::with_capacity(nx * ny);
        for r in 0..ny {
            for c in 0..nx {
                let p = [
                    x0 + (c as f64 + 0.5) * self.cell_size,
                    y0 + (r as f64 + 0.5) * self.cell_size,
                ];
                if self.mask.as_ref().is_none_or(|m| point_in_polygon(p, m)) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Even-odd rule.
pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Equirectangular projection of longitude/latitude degrees to metres about
/// an origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LonLatProjection {
    pub lon0: f64,
    pub lat0: f64,
}

impl LonLatProjection {
    /// Projection centred on the mean of `lonlat`.
    pub fn about_centroid(lonlat: &[[f64; 2]]) -> Result<Self> {
        if lonlat.is_empty() {
            return Err(Error::Invalid("cannot centre a projection on zero points".into()));
        }
        for (i, p) in lonlat.iter().enumerate() {
            if !(-180.0..=180.0).contains(&p[0]) || !(-90.0..=90.0).contains(&p[1]) {
                return Err(Error::Invalid(format!(
                    "row {i}: ({}, {}) is not a longitude/latitude pair",
                    p[0], p[1]
                )));
            }
        }
        let n = lonlat.len() as f64;
        Ok(LonLatProjection {
            lon0: lonlat.iter().map(|p| p[0]).sum::<f64>() / n,
            lat0: lonlat.iter().map(|p| p[1]).sum::<f64>() / n,
        })
    }

    pub fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        let k = self.lat0.to_radians().cos();
        [
            EARTH_RADIUS_M * (p[0] - self.lon0).to_radians() * k,
            EARTH_RADIUS_M * (p[1] - self.lat0).to_radians(),
        ]
    }

    pub fn inverse(&self, p: [f64; 2]) -> [f64; 2] {
        let k = self.lat0.to_radians().cos();
        [
            self.lon0 + (p[0] / (EARTH_RADIUS_M * k)).to_degrees(),
            self.lat0 + (p[1] / EARTH_RADIUS_M).to_degrees(),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    GeoJson,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "geojson" | "json" => Ok(ExportFormat::GeoJson),
            other => Err(Error::Invalid(format!(
                "unknown export format `{other}` (expected csv or geojson)"
            ))),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::GeoJson => "geojson",
        })
    }
}

/// Column names after `x, y`: per factor the mean, median, the two interval
/// bounds and the exceedance probability.
pub fn value_columns(result: &PredictionResult) -> Vec<String> {
    let pct = |p: f64| format!("q{:02}", (p * 100.0).round() as i64);
    let mut out = Vec::new();
    for k in 1..=result.m {
        out.push(format!("factor_{k}_mean"));
        out.push(format!("factor_{k}_median"));
        out.push(format!("factor_{k}_{}", pct(result.lower_level)));
        out.push(format!("factor_{k}_{}", pct(result.upper_level)));
        out.push(format!("factor_{k}_exceed{}", result.threshold));
    }
    out
}

fn cell_values(result: &PredictionResult, i: usize) -> Vec<f64> {
    let nn = result.n_new();
    let s = result.draws.len().max(1) as f64;
    let mut out = Vec::with_capacity(5 * result.m);
    for k in 0..result.m {
        let mean = result.draws.iter().map(|row| row[k * nn + i]).sum::<f64>() / s;
        out.extend([
            mean,
            result.median[k][i],
            result.lower[k][i],
            result.upper[k][i],
            result.exceedance[k][i],
        ]);
    }
    out
}

/// Writes one row (or point feature) per prediction location. `locate` maps
/// model coordinates to output coordinates, e.g. back to lon/lat.
pub fn export_prediction_to<W: Write>(
    result: &PredictionResult,
    format: ExportFormat,
    locate: impl Fn([f64; 2]) -> [f64; 2],
    mut w: W,
) -> Result<()> {
    let cols = value_columns(result);
    let io_err = |e: std::io::Error| Error::io("<export>", e);
    match format {
        ExportFormat::Csv => {
            let mut text = String::from("x,y");
            for c in &cols {
                text.push(',');
                text.push_str(c);
            }
            text.push('\n');
            for i in 0..result.n_new() {
                let p = locate(result.new_coords[i]);
                text.push_str(&format!("{},{}", p[0], p[1]));
                for v in cell_values(result, i) {
                    text.push(',');
                    text.push_str(&v.to_string());
                }
                text.push('\n');
            }
            w.write_all(text.as_bytes()).map_err(io_err)
        }
        ExportFormat::GeoJson => {
            let features: Vec<Value> = (0..result.n_new())
                .map(|i| {
                    let p = locate(result.new_coords[i]);
                    let props: Map<String, Value> = cols
                        .iter()
                        .cloned()
                        .zip(cell_values(result, i).into_iter().map(Value::from))
                        .collect();
                    json!({
                        "type": "Feature",
                        "geometry": { "type": "Point", "coordinates": [p[0], p[1]] },
                        "properties": props,
                    })
                })
                .collect();
            let doc = json!({ "type": "FeatureCollection", "features": features });
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::io("<export>", e.into()))?;
            w.write_all(b"\n").map_err(io_err)
        }
    }
}

/// Writes `result` to `path`; see [`export_prediction_to`].
pub fn export_prediction(
    result: &PredictionResult,
    format: ExportFormat,
    locate: impl Fn([f64; 2]) -> [f64; 2],
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    export_prediction_to(result, format, locate, std::io::BufWriter::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}
