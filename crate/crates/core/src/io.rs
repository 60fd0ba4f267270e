//! CSV exchange formats for fields and masks.
//!
//! Fields: header `i,j,x,y,value` (`d = 2`) or `i,x,value` (`d = 1`), one row
//! per cell in linear-index order. Masks use the same layout with a `0`/`1`
//! value column.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DomainMask, GridSpec, ScalarField};
use crate::scalar::Real;

fn header(d: usize) -> &'static [&'static str] {
    if d == 1 {
        &["i", "x", "value"]
    } else {
        &["i", "j", "x", "y", "value"]
    }
}

#[inline]
fn fmt_real<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64().unwrap_or(f64::NAN))
}

fn write_rows<T: Real, W: Write>(grid: &GridSpec<T>, out: W, value: impl Fn(usize) -> String) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(grid.d()))?;
    for k in 0..grid.cell_count() {
        let (i, j) = grid.coords(k);
        let c = grid.cell_center(k);
        if grid.d() == 1 {
            w.write_record([i.to_string(), fmt_real(c[0]), value(k)])?;
        } else {
            w.write_record([i.to_string(), j.to_string(), fmt_real(c[0]), fmt_real(c[1]), value(k)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_to<T: Real, W: Write>(field: &ScalarField<T>, out: W) -> Result<()> {
    write_rows(field.grid(), out, |k| fmt_real(field.get(k)))
}

pub fn write_mask_to<T: Real, W: Write>(mask: &DomainMask<T>, out: W) -> Result<()> {
    write_rows(mask.grid(), out, |k| if mask.contains(k) { "1" } else { "0" }.to_string())
}

pub fn write_field<T: Real>(field: &ScalarField<T>, path: impl AsRef<Path>) -> Result<()> {
    write_field_to(field, File::create(path)?)
}

pub fn write_mask<T: Real>(mask: &DomainMask<T>, path: impl AsRef<Path>) -> Result<()> {
    write_mask_to(mask, File::create(path)?)
}

/// Reads the value column, checking the header, row count and cell indices.
fn read_values<T: Real, R: Read>(grid: &GridSpec<T>, input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let expected = header(grid.d());
    let got: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if got != expected {
        return Err(Error::InvalidDescriptor(format!(
            "csv header {:?}, expected {:?}",
            got, expected
        )));
    }
    let value_col = expected.len() - 1;
    let mut values = Vec::with_capacity(grid.cell_count());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_idx = |c: usize| -> Result<usize> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidDescriptor(format!("row {row}: bad index column {c}")))
        };
        let i = parse_idx(0)?;
        let j = if grid.d() == 2 { parse_idx(1)? } else { 0 };
        if i >= grid.n() || j >= grid.n() || grid.index(i, j) != row {
            return Err(Error::InvalidDescriptor(format!(
                "row {row}: cell ({i}, {j}) out of order"
            )));
        }
        let v: f64 = rec
            .get(value_col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::InvalidDescriptor(format!("row {row}: bad value")))?;
        values.push(v);
    }
    if values.len() != grid.cell_count() {
        return Err(Error::GridMismatch(format!(
            "csv has {} rows, grid has {} cells",
            values.len(),
            grid.cell_count()
        )));
    }
    Ok(values)
}

pub fn read_field_from<T: Real, R: Read>(input: R, grid: &GridSpec<T>) -> Result<ScalarField<T>> {
    let values = read_values(grid, input)?;
    ScalarField::from_values(*grid, values.into_iter().map(T::lit).collect())
}

pub fn read_mask_from<T: Real, R: Read>(input: R, grid: &GridSpec<T>) -> Result<DomainMask<T>> {
    let values = read_values(grid, input)?;
    let mut inside = Vec::with_capacity(values.len());
    for (k, v) in values.into_iter().enumerate() {
        match v {
            0.0 => inside.push(false),
            1.0 => inside.push(true),
            _ => {
                return Err(Error::InvalidDescriptor(format!(
                    "mask value at cell {k} must be 0 or 1, got {v}"
                )))
            }
        }
    }
    DomainMask::from_bools(*grid, inside)
}

pub fn read_field<T: Real>(path: impl AsRef<Path>, grid: &GridSpec<T>) -> Result<ScalarField<T>> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::InvalidDescriptor(format!("cannot open {}: {e}", path.display())))?;
    read_field_from(file, grid)
}

pub fn read_mask<T: Real>(path: impl AsRef<Path>, grid: &GridSpec<T>) -> Result<DomainMask<T>> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| Error::InvalidDescriptor(format!("cannot open {}: {e}", path.display())))?;
    read_mask_from(file, grid)
}
