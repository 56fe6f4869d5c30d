//! Snapshot and ledger serialisation.
//!
//! Binary snapshot layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | dimension `d` | `u64` |
//! | cells per axis | `d × u64` |
//! | extent per axis | `d × f64` |
//! | time | `f64` |
//! | values, row-major with axis 0 slowest | `Π N_i × f64` |
//!
//! Floats in CSV use the shortest decimal that round-trips.

use std::io::{self, Read, Write};

use super::density::DensityField;
use super::diagnostics::mass_balance_residual;
use super::grid::Grid;
use super::MassLedger;

/// Shortest round-trip decimal for an `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_snapshot_csv<W: Write>(state: &DensityField, mut out: W) -> io::Result<()> {
    let d = state.grid.dimension();
    let header: Vec<String> = (1..=d)
        .map(|a| format!("x{a}"))
        .chain(["density".to_string()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (i, v) in state.values.iter().enumerate() {
        let mut row: Vec<String> = state.grid.center(i).into_iter().map(format_float).collect();
        row.push(format_float(*v));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_snapshot_binary<W: Write>(state: &DensityField, mut out: W) -> io::Result<()> {
    let grid = &state.grid;
    out.write_all(&(grid.dimension() as u64).to_le_bytes())?;
    for &n in grid.cells() {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for &r in grid.extents() {
        out.write_all(&r.to_le_bytes())?;
    }
    out.write_all(&state.time.to_le_bytes())?;
    for v in &state.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(input: &mut R) -> io::Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn read_snapshot_binary<R: Read>(mut input: R) -> io::Result<DensityField> {
    let invalid = |e: crate::error::Error| io::Error::new(io::ErrorKind::InvalidData, e.to_string());
    let d = read_u64(&mut input)? as usize;
    if !(1..=2).contains(&d) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("dimension {d}")));
    }
    let cells = (0..d)
        .map(|_| read_u64(&mut input).map(|n| n as usize))
        .collect::<io::Result<Vec<_>>>()?;
    let extents = (0..d).map(|_| read_f64(&mut input)).collect::<io::Result<Vec<_>>>()?;
    let time = read_f64(&mut input)?;
    let grid = Grid::new(extents, cells).map_err(invalid)?;
    let values = (0..grid.len())
        .map(|_| read_f64(&mut input))
        .collect::<io::Result<Vec<_>>>()?;
    DensityField::new(grid, values, time).map_err(invalid)
}

/// Columns `t, mass, c_integral, residual`.
pub fn write_ledger_csv<W: Write>(ledger: &MassLedger, mut out: W) -> io::Result<()> {
    writeln!(out, "t,mass,c_integral,residual")?;
    for (e, r) in ledger.entries.iter().zip(mass_balance_residual(ledger)) {
        writeln!(
            out,
            "{},{},{},{}",
            format_float(e.t),
            format_float(e.mass),
            format_float(e.c_integral),
            format_float(r.residual)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let grid = Grid::new(vec![1.0, 2.0], vec![8, 10]).unwrap();
        let values = (0..80).map(|i| i as f64 * 0.1).collect();
        let state = DensityField::new(grid, values, 0.25).unwrap();
        let mut buf = Vec::new();
        write_snapshot_binary(&state, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 2 + 2 + 1 + 80));
        assert_eq!(read_snapshot_binary(&buf[..]).unwrap(), state);
    }

    #[test]
    fn csv_uses_round_trip_floats() {
        let grid = Grid::cube(1, 1.0, 8).unwrap();
        let state = DensityField::new(grid, vec![0.1; 8], 0.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&state, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,density\n-0.875,0.1\n"));
    }
}
