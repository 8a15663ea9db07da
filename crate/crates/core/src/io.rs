//! Report serialization and sampled-immersion files.
//!
//! Floats are written as `{:.16e}` (17 significant digits) so identical inputs
//! give byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chart::{ChartGrid, ChartSpec};
use crate::error::{Error, Result};

/// Version tag carried by every JSON report.
pub const SCHEMA_VERSION: &str = "1";

struct FixedFloat;

impl serde_json::ser::Formatter for FixedFloat {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact deterministic JSON.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedFloat);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json writes UTF-8"))
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Csv,
    F64le,
}

/// Header of a sampled immersion: positions only, `node * (n+1) + component`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImmersionHeader {
    pub n: usize,
    pub chart: ChartSpec,
    /// Derivative order stored alongside positions; only 0 is accepted.
    #[serde(default)]
    pub jet_order: usize,
    pub encoding: Encoding,
    /// Data file, relative to the header.
    pub data: String,
}

#[derive(Debug, Clone)]
pub struct Immersion {
    pub header: ImmersionHeader,
    pub samples: Vec<f64>,
}

impl Immersion {
    pub fn grid(&self) -> Result<ChartGrid> {
        ChartGrid::new(self.header.chart.clone())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

/// Reads a header and its data file; any malformation is an input error.
pub fn read_immersion(header_path: &Path) -> Result<Immersion> {
    let header: ImmersionHeader =
        serde_json::from_str(&read_text(header_path)?).map_err(|e| Error::Input(format!("{}: {e}", header_path.display())))?;
    header.chart.validate().map_err(|e| Error::Input(e.to_string()))?;
    if header.jet_order != 0 {
        return Err(Error::Input(format!("jet_order {} not supported; provide positions only", header.jet_order)));
    }
    let data_path = header_path.parent().unwrap_or(Path::new(".")).join(&header.data);
    let samples = match header.encoding {
        Encoding::Csv => read_csv_values(&data_path)?,
        Encoding::F64le => {
            let bytes = fs::read(&data_path).map_err(|e| Error::Input(format!("{}: {e}", data_path.display())))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Input(format!("{}: length {} is not a multiple of 8", data_path.display(), bytes.len())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect()
        }
    };
    let expected = header.chart.nx * header.chart.ny * (header.n + 1);
    if samples.len() != expected {
        return Err(Error::Input(format!("{}: expected {expected} values, found {}", data_path.display(), samples.len())));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{}: non-finite value at position {i}", data_path.display())));
    }
    Ok(Immersion { header, samples })
}

/// One row per node, one column per component, no header row.
fn read_csv_values(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        for field in rec.iter() {
            let v = field.parse::<f64>().map_err(|_| Error::Input(format!("{}:{}: cannot parse `{field}`", path.display(), line + 1)))?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Writes `<stem>.json` and its data file into `dir`; returns the header path.
pub fn write_immersion(dir: &Path, stem: &str, chart: &ChartSpec, n: usize, samples: &[f64], encoding: Encoding) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let data = match encoding {
        Encoding::Csv => format!("{stem}.csv"),
        Encoding::F64le => format!("{stem}.f64"),
    };
    match encoding {
        Encoding::Csv => {
            let mut text = String::new();
            for row in samples.chunks(n + 1) {
                let cells: Vec<String> = row.iter().map(|&v| fmt_float(v)).collect();
                text.push_str(&cells.join(","));
                text.push('\n');
            }
            fs::write(dir.join(&data), text)?;
        }
        Encoding::F64le => {
            let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(dir.join(&data), bytes)?;
        }
    }
    let header = ImmersionHeader { n, chart: chart.clone(), jet_order: 0, encoding, data };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, to_json(&header)? + "\n")?;
    Ok(path)
}

/// Per-node CSV: `node,ix,iy,x,y,<fields...>`.
pub fn fields_csv(grid: &ChartGrid, fields: &[(String, Vec<f64>)]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["node".to_string(), "ix".into(), "iy".into(), "x".into(), "y".into()];
    head.extend(fields.iter().map(|(name, _)| name.clone()));
    wtr.write_record(&head)?;
    for i in 0..grid.len() {
        let (ix, iy) = grid.ixy(i);
        let (x, y) = grid.coords(i);
        let mut row = vec![i.to_string(), ix.to_string(), iy.to_string(), fmt_float(x), fmt_float(y)];
        row.extend(fields.iter().map(|(_, v)| fmt_float(v[i])));
        wtr.write_record(&row)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writes UTF-8"))
}

/// Heat map of a node field; masked nodes are drawn grey.
pub fn heatmap_svg(grid: &ChartGrid, field: &[f64], mask: &[bool], title: &str) -> String {
    const CELL: usize = 4;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (lo, hi) = field
        .iter()
        .zip(mask)
        .filter(|(v, &m)| m && v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h) = (nx * CELL, ny * CELL + 20);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <text x=\"2\" y=\"14\" font-family=\"monospace\" font-size=\"12\">{} [{}, {}]</text>\n",
        escape(title),
        fmt_float(lo),
        fmt_float(hi)
    );
    for i in 0..grid.len() {
        let (ix, iy) = grid.ixy(i);
        let fill = if mask[i] && field[i].is_finite() {
            let t = ((field[i] - lo) / span).clamp(0.0, 1.0);
            let (r, g, b) = ramp(t);
            format!("#{r:02x}{g:02x}{b:02x}")
        } else {
            "#808080".to_string()
        };
        // y grows upward in the chart.
        let py = 20 + (ny - 1 - iy) * CELL;
        svg.push_str(&format!("<rect x=\"{}\" y=\"{py}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\"/>\n", ix * CELL));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Blue to white to red.
fn ramp(t: f64) -> (u8, u8, u8) {
    let c = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if t < 0.5 {
        let s = t * 2.0;
        (c(s), c(s), 255)
    } else {
        let s = (1.0 - t) * 2.0;
        (255, c(s), c(s))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Sample {
        a: f64,
        b: Vec<f64>,
        c: Option<f64>,
    }

    #[test]
    fn floats_use_fixed_format() {
        let s = to_json(&Sample { a: 0.1, b: vec![1.0, -2.5e-300], c: Some(f64::NAN) }).unwrap();
        assert_eq!(s, r#"{"a":1.0000000000000001e-1,"b":[1.0000000000000000e0,-2.5000000000000000e-300],"c":null}"#);
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64(), Some(0.1));
    }

    #[test]
    fn immersion_round_trip_both_encodings() {
        let dir = tempfile::tempdir().unwrap();
        let chart = ChartSpec::torus(1.0, 2.0, 9, 8);
        let samples: Vec<f64> = (0..288).map(|i| (i as f64 * 0.37).sin()).collect();
        for enc in [Encoding::Csv, Encoding::F64le] {
            let path = write_immersion(dir.path(), &format!("s_{enc:?}"), &chart, 3, &samples, enc).unwrap();
            let im = read_immersion(&path).unwrap();
            assert_eq!(im.samples, samples);
            assert_eq!(im.header.chart, chart);
        }
    }

    #[test]
    fn malformed_inputs_are_input_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_immersion(&dir.path().join("missing.json")), Err(Error::Input(_))));
        let chart = ChartSpec::torus(1.0, 1.0, 8, 8);
        let path = write_immersion(dir.path(), "short", &chart, 2, &[0.0; 9], Encoding::Csv).unwrap();
        assert!(matches!(read_immersion(&path), Err(Error::Input(_))));
        fs::write(dir.path().join("bad.json"), "{\"n\": 2}").unwrap();
        assert!(matches!(read_immersion(&dir.path().join("bad.json")), Err(Error::Input(_))));
    }

    #[test]
    fn csv_and_svg_are_deterministic() {
        let g = ChartGrid::new(ChartSpec::open(0.0, 0.0, 1.0, 1.0, 8, 8)).unwrap();
        let f: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let a = fields_csv(&g, &[("k".into(), f.clone())]).unwrap();
        assert_eq!(a, fields_csv(&g, &[("k".into(), f.clone())]).unwrap());
        assert!(a.starts_with("node,ix,iy,x,y,k\n0,0,0,"));
        let svg = heatmap_svg(&g, &f, &[true; 64], "k");
        assert_eq!(svg.matches("<rect").count(), 64);
    }
}
