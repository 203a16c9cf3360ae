//! Plain-text field snapshots.
//!
//! ```text
//! gradplast-field v1 <kind> <nx> <ny> <nz> <h> <n_slip>
//! <components of cell 0>
//! <components of cell 1>
//! ...
//! ```
//!
//! Cells are listed x-fastest. `kind` is one of `scalar`, `vec3`, `mat3`
//! (row-major) or `slip`; `n_slip` is 0 unless the kind is `slip`. Numbers are
//! written with 17 significant digits and read back bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::algebra::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, Mat3Field, ScalarField, SlipField, Vec3Field};

const MAGIC: &str = "gradplast-field";
const VERSION: &str = "v1";

#[derive(Clone, Debug, PartialEq)]
pub enum FieldData {
    Scalar(ScalarField),
    Vec3(Vec3Field),
    Mat3(Mat3Field),
    Slip(SlipField),
}

impl FieldData {
    pub fn kind(&self) -> &'static str {
        match self {
            FieldData::Scalar(_) => "scalar",
            FieldData::Vec3(_) => "vec3",
            FieldData::Mat3(_) => "mat3",
            FieldData::Slip(_) => "slip",
        }
    }

    fn cells(&self) -> usize {
        match self {
            FieldData::Scalar(f) => f.len(),
            FieldData::Vec3(f) => f.len(),
            FieldData::Mat3(f) => f.len(),
            FieldData::Slip(f) => f.cells(),
        }
    }

    fn n_slip(&self) -> usize {
        match self {
            FieldData::Slip(f) => f.n_slip(),
            _ => 0,
        }
    }

    fn cell_values(&self, c: usize) -> Vec<f64> {
        match self {
            FieldData::Scalar(f) => vec![f[c]],
            FieldData::Vec3(f) => f[c].0.to_vec(),
            FieldData::Mat3(f) => f[c].to_row_major().to_vec(),
            FieldData::Slip(f) => f.cell(c).to_vec(),
        }
    }
}

/// A snapshot read back from disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dims: [usize; 3],
    pub h: f64,
    pub data: FieldData,
}

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render_snapshot(spec: &GridSpec, data: &FieldData) -> Result<String> {
    crate::error::check_len(spec.cells(), data.cells())?;
    let [nx, ny, nz] = spec.dims();
    let mut out = format!(
        "{MAGIC} {VERSION} {} {nx} {ny} {nz} {} {}\n",
        data.kind(),
        format_number(spec.h()),
        data.n_slip()
    );
    for c in 0..spec.cells() {
        let vals = data.cell_values(c);
        for (k, v) in vals.iter().enumerate() {
            if k > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", format_number(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_snapshot(path: &Path, spec: &GridSpec, data: &FieldData) -> Result<()> {
    let text = render_snapshot(spec, data)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_snapshot(text: &str) -> Result<Snapshot> {
    let bad = |line: usize, message: String| Error::Parse { line, message };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty snapshot".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 8 || tok[0] != MAGIC || tok[1] != VERSION {
        return Err(bad(1, format!("expected `{MAGIC} {VERSION} kind nx ny nz h n_slip`")));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| bad(1, format!("expected an integer, got `{s}`")))
    };
    let dims = [num(tok[3])?, num(tok[4])?, num(tok[5])?];
    let h: f64 = tok[6]
        .parse()
        .map_err(|_| bad(1, format!("expected a number, got `{}`", tok[6])))?;
    let n_slip = num(tok[7])?;
    let width = match tok[2] {
        "scalar" => 1,
        "vec3" => 3,
        "mat3" => 9,
        "slip" if n_slip > 0 => n_slip,
        "slip" => return Err(bad(1, "slip snapshots need n_slip > 0".into())),
        k => return Err(bad(1, format!("unknown field kind `{k}`"))),
    };
    let cells = dims[0] * dims[1] * dims[2];
    let mut flat = Vec::with_capacity(cells * width);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(i + 1, format!("bad number: {e}")))?;
        if vals.len() != width {
            return Err(bad(i + 1, format!("expected {width} values, got {}", vals.len())));
        }
        flat.extend(vals);
    }
    if flat.len() != cells * width {
        return Err(Error::DimensionMismatch {
            expected: cells,
            got: flat.len() / width,
        });
    }
    let data = match tok[2] {
        "scalar" => FieldData::Scalar(ScalarField::from_vec(flat)),
        "vec3" => FieldData::Vec3(Vec3Field::from_vec(
            flat.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect(),
        )),
        "mat3" => FieldData::Mat3(Mat3Field::from_vec(
            flat.chunks(9)
                .map(|c| Mat3::from_row_major(c.try_into().expect("chunk of 9")))
                .collect(),
        )),
        _ => FieldData::Slip(SlipField::from_vec(n_slip, flat)?),
    };
    Ok(Snapshot { dims, h, data })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&text)
}
