//! Field exporters: CSV (the interchange format, with a reader) and legacy
//! ASCII VTK structured points for visualization.

use std::fmt::Write as _;
use std::path::Path;

use ldg_core::bulk::f_bulk_shifted;
use ldg_core::field::{Grid3, QField};
use ldg_core::linalg::Vec3;
use ldg_core::qtensor::{biaxiality, decompose_sr_cap, eigen, QTensor};
use ldg_core::MaterialParams;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const CSV_SCHEMA: u32 = 1;

pub const CSV_HEADER: &str = "i,j,k,x,y,z,q1,q2,q3,q4,q5,S,R,beta,ftilde,n1,n2,n3";

/// Provenance written into every artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stamp {
    pub version: String,
    /// Hex SHA-256 of the configuration text, `none` when no file was used.
    pub config_sha256: String,
}

impl Stamp {
    pub fn new(config_sha256: impl Into<String>) -> Self {
        Stamp {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_sha256.into(),
        }
    }

    fn render(&self) -> String {
        format!("version={} config_sha256={}", self.version, self.config_sha256)
    }
}

/// Per-node derived quantities shared by both formats.
struct NodeData {
    s: f64,
    r: f64,
    beta: f64,
    ftilde: f64,
    norm: f64,
    director: Vec3,
}

fn node_data(q: &QTensor, p: &MaterialParams) -> NodeData {
    let rep = decompose_sr_cap(q);
    NodeData {
        s: rep.s,
        r: rep.r,
        beta: biaxiality(q),
        ftilde: f_bulk_shifted(q, p),
        norm: q.norm(),
        director: eigen(q).vectors[0],
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn field_csv(f: &QField, p: &MaterialParams, stamp: &Stamp) -> String {
    let g = &f.grid;
    let mut out = String::with_capacity(g.len() * 300);
    let o = g.origin;
    let _ = writeln!(
        out,
        "# ldg-field schema={CSV_SCHEMA} {} nx={} ny={} nz={} origin={:?},{:?},{:?} h={:?} a2={:?} b2={:?} c2={:?} L={:?}",
        stamp.render(),
        g.nx,
        g.ny,
        g.nz,
        o[0],
        o[1],
        o[2],
        g.h,
        p.a2,
        p.b2,
        p.c2,
        p.l
    );
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (idx, q) in f.values.iter().enumerate() {
        let [i, j, k] = g.coords(idx);
        let x = g.position_of(idx);
        let d = node_data(q, p);
        let c = q.0;
        let _ = writeln!(
            out,
            "{i},{j},{k},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            x[0],
            x[1],
            x[2],
            c[0],
            c[1],
            c[2],
            c[3],
            c[4],
            d.s,
            d.r,
            d.beta,
            d.ftilde,
            d.director[0],
            d.director[1],
            d.director[2]
        );
    }
    out
}

pub fn export_csv(path: &Path, f: &QField, p: &MaterialParams, stamp: &Stamp) -> Result<()> {
    write_file(path, &field_csv(f, p, stamp))
}

/// A field read back from CSV. Derived columns are recomputed on export, so
/// only the grid, the coefficients, the parameters and the stamp are kept.
#[derive(Clone, Debug)]
pub struct FieldFile {
    pub field: QField,
    pub params: MaterialParams,
    pub stamp: Stamp,
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Format(format!("line {line}: {msg}"))
}

pub fn parse_field_csv(text: &str) -> Result<FieldFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| format_err(1, "empty file"))?;
    let meta = first
        .strip_prefix("# ldg-field ")
        .ok_or_else(|| format_err(1, "missing `# ldg-field` provenance line"))?;
    let kv: Vec<(&str, &str)> = meta
        .split_whitespace()
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| format_err(1, format!("malformed token `{t}`")))
        })
        .collect::<Result<_>>()?;
    let get = |key: &str| {
        kv.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| format_err(1, format!("missing `{key}`")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse::<f64>()
            .map_err(|_| format_err(1, format!("invalid `{key}`")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|_| format_err(1, format!("invalid `{key}`")))
    };
    if get("schema")? != CSV_SCHEMA.to_string() {
        return Err(format_err(1, format!("unsupported schema `{}`", get("schema")?)));
    }
    let origin: Vec<f64> = get("origin")?
        .split(',')
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format_err(1, "invalid `origin`"))?;
    if origin.len() != 3 {
        return Err(format_err(1, "`origin` needs three components"));
    }
    let grid = Grid3::new(
        int("nx")?,
        int("ny")?,
        int("nz")?,
        Vec3::new(origin[0], origin[1], origin[2]),
        num("h")?,
    )?;
    let params = MaterialParams::new(num("a2")?, num("b2")?, num("c2")?, num("L")?)?;
    let stamp = Stamp {
        version: get("version")?.to_string(),
        config_sha256: get("config_sha256")?.to_string(),
    };

    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        Some((n, _)) => return Err(format_err(n, "unexpected column header")),
        None => return Err(format_err(2, "missing column header")),
    }
    let columns = CSV_HEADER.split(',').count();
    let mut values = vec![None; grid.len()];
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns {
            return Err(format_err(
                n,
                format!("expected {columns} columns, found {}", cells.len()),
            ));
        }
        let ijk = cells[..3]
            .iter()
            .map(|c| c.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format_err(n, "invalid node index"))?;
        let [nx, ny, nz] = grid.dims();
        if ijk[0] >= nx || ijk[1] >= ny || ijk[2] >= nz {
            return Err(format_err(n, "node index outside the grid"));
        }
        let mut q = [0.0; 5];
        for (slot, cell) in q.iter_mut().zip(&cells[6..11]) {
            *slot = cell
                .parse::<f64>()
                .map_err(|_| format_err(n, format!("invalid coefficient `{cell}`")))?;
        }
        let idx = grid.index(ijk[0], ijk[1], ijk[2]);
        if values[idx].replace(QTensor(q)).is_some() {
            return Err(format_err(n, "duplicate node"));
        }
    }
    let values = values
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Format("missing rows: every grid node needs one row".into()))?;
    Ok(FieldFile {
        field: QField::new(grid, values)?,
        params,
        stamp,
    })
}

pub fn import_csv(path: &Path) -> Result<FieldFile> {
    parse_field_csv(&read_file(path)?)
}

pub fn field_vtk(f: &QField, p: &MaterialParams, stamp: &Stamp) -> String {
    let g = &f.grid;
    let data: Vec<NodeData> = f.values.iter().map(|q| node_data(q, p)).collect();
    let mut out = String::with_capacity(g.len() * 120);
    let _ = write!(
        out,
        "# vtk DataFile Version 3.0\nldg field {} L={:?}\nASCII\nDATASET STRUCTURED_POINTS\n\
         DIMENSIONS {} {} {}\nORIGIN {:?} {:?} {:?}\nSPACING {:?} {:?} {:?}\nPOINT_DATA {}\n",
        stamp.render(),
        p.l,
        g.nx,
        g.ny,
        g.nz,
        g.origin[0],
        g.origin[1],
        g.origin[2],
        g.h,
        g.h,
        g.h,
        g.len()
    );
    let scalars: [(&str, fn(&NodeData) -> f64); 5] = [
        ("S", |d| d.s),
        ("R", |d| d.r),
        ("beta", |d| d.beta),
        ("ftilde", |d| d.ftilde),
        ("norm", |d| d.norm),
    ];
    for (name, get) in scalars {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for d in &data {
            let _ = writeln!(out, "{:?}", get(d));
        }
    }
    out.push_str("VECTORS director double\n");
    for d in &data {
        let _ = writeln!(out, "{:?} {:?} {:?}", d.director[0], d.director[1], d.director[2]);
    }
    out
}

pub fn export_vtk(path: &Path, f: &QField, p: &MaterialParams, stamp: &Stamp) -> Result<()> {
    write_file(path, &field_vtk(f, p, stamp))
}

/// What a structurally valid VTK file declares.
#[derive(Clone, Debug, PartialEq)]
pub struct VtkSummary {
    pub dims: [usize; 3],
    pub points: usize,
    pub scalars: Vec<String>,
    pub vectors: Vec<String>,
}

/// Header-level check of a legacy ASCII STRUCTURED_POINTS file: the fixed
/// preamble, consistent point counts, and the right number of numeric values
/// in every data block.
pub fn validate_vtk(text: &str) -> Result<VtkSummary> {
    let bad = |msg: String| CliError::Format(format!("vtk: {msg}"));
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));
    if !next("version line")?.starts_with("# vtk DataFile Version ") {
        return Err(bad("bad version line".into()));
    }
    let title = next("title")?;
    if title.trim().is_empty() || title.len() > 256 {
        return Err(bad("title must be 1 to 256 characters".into()));
    }
    if next("format")?.trim() != "ASCII" {
        return Err(bad("only ASCII files are supported".into()));
    }
    if next("dataset")?.trim() != "DATASET STRUCTURED_POINTS" {
        return Err(bad("dataset is not STRUCTURED_POINTS".into()));
    }
    let triple = |line: &str, key: &str| -> Result<Vec<String>> {
        let mut tok = line.split_whitespace();
        if tok.next() != Some(key) {
            return Err(bad(format!("expected {key}")));
        }
        let vals: Vec<String> = tok.map(str::to_string).collect();
        if vals.len() != 3 {
            return Err(bad(format!("{key} needs three values")));
        }
        Ok(vals)
    };
    let dims_tok = triple(next("DIMENSIONS")?, "DIMENSIONS")?;
    let mut dims = [0usize; 3];
    for (d, t) in dims.iter_mut().zip(&dims_tok) {
        *d = t
            .parse()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| bad(format!("bad dimension `{t}`")))?;
    }
    for t in triple(next("ORIGIN")?, "ORIGIN")? {
        t.parse::<f64>().map_err(|_| bad(format!("bad origin `{t}`")))?;
    }
    for t in triple(next("SPACING")?, "SPACING")? {
        let v = t.parse::<f64>().map_err(|_| bad(format!("bad spacing `{t}`")))?;
        if !(v > 0.0) {
            return Err(bad("spacing must be positive".into()));
        }
    }
    let pd = next("POINT_DATA")?;
    let points: usize = pd
        .strip_prefix("POINT_DATA ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| bad("bad POINT_DATA line".into()))?;
    if points != dims.iter().product::<usize>() {
        return Err(bad(format!("POINT_DATA {points} does not match DIMENSIONS")));
    }

    let mut summary = VtkSummary {
        dims,
        points,
        scalars: Vec::new(),
        vectors: Vec::new(),
    };
    let mut tokens = lines.flat_map(str::split_whitespace).peekable();
    let take_values = |count: usize, block: &str, tokens: &mut std::iter::Peekable<_>| -> Result<()> {
        for _ in 0..count {
            let t: &str = tokens.next().ok_or_else(|| bad(format!("{block}: too few values")))?;
            t.parse::<f64>()
                .map_err(|_| bad(format!("{block}: non-numeric value `{t}`")))?;
        }
        Ok(())
    };
    while let Some(kind) = tokens.next() {
        let name = tokens
            .next()
            .ok_or_else(|| bad(format!("{kind} without a name")))?
            .to_string();
        let ty = tokens
            .next()
            .ok_or_else(|| bad(format!("{kind} {name} without a type")))?;
        if !matches!(ty, "float" | "double") {
            return Err(bad(format!("unsupported data type `{ty}`")));
        }
        match kind {
            "SCALARS" => {
                let mut comps = 1;
                if let Some(t) = tokens.peek() {
                    if let Ok(c) = t.parse::<usize>() {
                        comps = c;
                        tokens.next();
                    }
                }
                if tokens.next() != Some("LOOKUP_TABLE") || tokens.next().is_none() {
                    return Err(bad(format!("SCALARS {name} lacks LOOKUP_TABLE")));
                }
                take_values(points * comps, &name, &mut tokens)?;
                summary.scalars.push(name);
            }
            "VECTORS" => {
                take_values(points * 3, &name, &mut tokens)?;
                summary.vectors.push(name);
            }
            other => return Err(bad(format!("unsupported block `{other}`"))),
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ldg_core::field::Scenario;
    use ldg_core::solve::{initial_q, minimize_q, SolverOptions};

    fn params() -> MaterialParams {
        MaterialParams::new(1.0, 1.0, 1.0, 0.01).unwrap()
    }

    fn q_min(p: &MaterialParams) -> QTensor {
        QTensor::from_uniaxial(p.s_plus, &Vec3::new(0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn constant_field_rows_match() {
        let p = params();
        let f = QField::constant(Grid3::unit_cube(4).unwrap(), q_min(&p));
        let csv = field_csv(&f, &p, &Stamp::new("none"));
        let rows: Vec<&str> = csv.lines().skip(2).collect();
        assert_eq!(rows.len(), 64);
        let tail = |r: &str| r.split(',').skip(6).collect::<Vec<_>>().join(",");
        assert!(rows.iter().all(|r| tail(r) == tail(rows[0])));
        for r in &rows {
            let cells: Vec<&str> = r.split(',').collect();
            assert_eq!(cells.len(), 18);
            assert_eq!(cells[13].parse::<f64>().unwrap(), 0.0);
        }
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let p = params();
        let g = Grid3::unit_cube(5).unwrap();
        let f = QField::from_fn(g, |x| QTensor([x[0] - 0.3, x[1] * x[2], 0.1, -x[2], 1e-300 * x[0]]));
        let first = field_csv(&f, &p, &Stamp::new("abc"));
        let back = parse_field_csv(&first).unwrap();
        assert_eq!(back.field.values, f.values);
        assert_eq!(back.stamp, Stamp::new("abc"));
        let second = field_csv(&back.field, &back.params, &back.stamp);
        assert_eq!(first, second);
    }

    #[test]
    fn csv_reader_rejects_malformed_files() {
        let p = params();
        let f = QField::constant(Grid3::unit_cube(3).unwrap(), q_min(&p));
        let good = field_csv(&f, &p, &Stamp::new("none"));
        let lines: Vec<&str> = good.lines().collect();
        let missing_row = lines[..lines.len() - 1].join("\n");
        assert!(parse_field_csv(&missing_row).is_err());
        let no_meta = lines[1..].join("\n");
        assert!(parse_field_csv(&no_meta).is_err());
        let bad_cell = good.replacen(",0.0,", ",zero,", 1);
        assert!(parse_field_csv(&bad_cell).is_err());
    }

    #[test]
    fn hedgehog_beta_peaks_near_center() {
        let p = MaterialParams::new(1.0, 1.0, 1.0, 0.02).unwrap();
        let g = Grid3::unit_cube(12).unwrap();
        let d = Scenario::Hedgehog.director_field(&g);
        let (f, report) = minimize_q(&initial_q(&d, &p), &p, &SolverOptions::for_params(&p));
        assert!(report.converged, "{:?}", report.failure);
        let csv = field_csv(&f, &p, &Stamp::new("none"));
        let c = g.center();
        let (mut near, mut far) = (0.0f64, 0.0f64);
        for row in csv.lines().skip(2) {
            let v: Vec<f64> = row.split(',').map(|s| s.parse().unwrap()).collect();
            let r = ((v[3] - c[0]).powi(2) + (v[4] - c[1]).powi(2) + (v[5] - c[2]).powi(2)).sqrt();
            if r < 0.2 {
                near = near.max(v[13]);
            } else if r > 0.35 {
                far = far.max(v[13]);
            }
        }
        assert!(near > far, "near {near} far {far}");
    }

    #[test]
    fn vtk_output_validates() {
        let p = params();
        let g = Grid3::new(3, 4, 5, Vec3::new(0.5, 0.0, -1.0), 0.25).unwrap();
        let f = QField::from_fn(g, |x| QTensor([x[0], x[1], x[2], 0.2, -0.1]));
        let text = field_vtk(&f, &p, &Stamp::new("none"));
        let s = validate_vtk(&text).unwrap();
        assert_eq!(s.dims, [3, 4, 5]);
        assert_eq!(s.points, 60);
        assert_eq!(s.scalars, ["S", "R", "beta", "ftilde", "norm"]);
        assert_eq!(s.vectors, ["director"]);
    }

    #[test]
    fn vtk_validator_catches_structural_faults() {
        let p = params();
        let f = QField::constant(Grid3::unit_cube(3).unwrap(), q_min(&p));
        let text = field_vtk(&f, &p, &Stamp::new("none"));
        assert!(validate_vtk(&text.replace("POINT_DATA 27", "POINT_DATA 28")).is_err());
        assert!(validate_vtk(&text.replace("STRUCTURED_POINTS", "UNSTRUCTURED_GRID")).is_err());
        assert!(validate_vtk(&text.replace("ASCII", "BINARY")).is_err());
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(validate_vtk(&truncated).is_err());
    }
}
