//! CSV and ASCII PGM writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use levelset_core::field::ScalarField;

use crate::error::{CliError, Result};

/// `printf("%.17g")` formatting: 17 significant digits, trailing zeros dropped, exponent
/// form outside `[1e-4, 1e17)`. Parsing the text back yields the same `f64`.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let fixed = format!("{v:.*}", (16 - exp) as usize);
        trim_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Column-named table of finite numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = self.header.join(",");
        out.push('\n');
        for (k, row) in self.rows.iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(CliError::Invalid(format!("row {k} holds non-finite value {v}")));
            }
            let cells: Vec<String> = row.iter().map(|&v| format_g17(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<()> {
    write_file(path, &table.to_csv()?)
}

/// ASCII PGM (`P2`, maxval 255) of a 2D field, top row first. Inside cells map linearly from
/// `[min, max]` of the inside values to `[0, 255]` (all 128 when constant); other cells are 0.
pub fn pgm_string(field: &ScalarField) -> Result<String> {
    let geom = field.geometry();
    if geom.dim() != 2 {
        return Err(CliError::Invalid(format!("PGM needs a 2D field, got dimension {}", geom.dim())));
    }
    if !field.all_finite() {
        return Err(CliError::Invalid("PGM of a non-finite field".into()));
    }
    let (w, h) = (geom.shape()[0], geom.shape()[1]);
    let (lo, hi) = (field.inside_min(), field.inside_max());
    let pixel = |v: f64| -> u8 {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            128
        }
    };
    let mut out = String::new();
    writeln!(out, "P2").unwrap();
    writeln!(out, "# min={} max={}", format_g17(lo), format_g17(hi)).unwrap();
    writeln!(out, "{w} {h}").unwrap();
    writeln!(out, "255").unwrap();
    let strides = geom.strides();
    for j in (0..h).rev() {
        let line: Vec<String> = (0..w)
            .map(|i| {
                let idx = i * strides[0] + j * strides[1];
                if geom.is_inside(idx) { pixel(field.get(idx)) } else { 0 }.to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_pgm(field: &ScalarField, path: &Path) -> Result<()> {
    write_file(path, &pgm_string(field)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
