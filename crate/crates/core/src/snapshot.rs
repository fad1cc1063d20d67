//! CSV field snapshots and atomic file output.
//!
//! Floats are written with 17 significant digits, which is enough for the
//! decimal text to parse back to the identical `f64`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{MapField, SpinorField};
use crate::surface::Lattice;
use crate::target::TargetManifold;

/// Formats a float so that it round-trips exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Writes a header row and one row per `(label, values)` pair; the label
/// is an integer such as a step or an index.
pub fn write_csv(path: &Path, header: &[&str], rows: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for (label, row) in rows {
        write!(out, "{label}").unwrap();
        for v in row {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Snapshot header for a target with `q` ambient components.
pub fn header(q: usize) -> Vec<String> {
    let mut h: Vec<String> = ["site", "i1", "i2", "x", "y"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..q).map(|i| format!("phi{i}")));
    for i in 0..q {
        for s in 0..2 {
            h.push(format!("psi{i}_{s}_re"));
            h.push(format!("psi{i}_{s}_im"));
        }
    }
    h
}

/// Renders `(φ, ψ)` as snapshot CSV text.
pub fn fields_to_csv(lattice: &Lattice, phi: &MapField, psi: &SpinorField) -> Result<String> {
    let q = phi.q;
    if psi.q != q
        || phi.values.len() != lattice.len() * q
        || psi.values.len() != lattice.len() * q * 2
    {
        return Err(Error::ShapeMismatch {
            expected: lattice.len() * q,
            actual: phi.values.len(),
        });
    }
    let mut out = header(q).join(",");
    out.push('\n');
    for site in 0..lattice.len() {
        let (i1, i2) = lattice.indices(site);
        let [x, y] = lattice.coords(site);
        write!(out, "{site},{i1},{i2},{},{}", fmt_f64(x), fmt_f64(y)).unwrap();
        for v in phi.at(site) {
            write!(out, ",{}", fmt_f64(*v)).unwrap();
        }
        for c in psi.at(site) {
            write!(out, ",{},{}", fmt_f64(c.re), fmt_f64(c.im)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_fields(
    path: &Path,
    lattice: &Lattice,
    phi: &MapField,
    psi: &SpinorField,
) -> Result<()> {
    write_atomic(path, fields_to_csv(lattice, phi, psi)?.as_bytes())
}

/// Parses snapshot text, checking the header and every site against the
/// lattice and target.
pub fn fields_from_csv(
    text: &str,
    lattice: &Lattice,
    target: &TargetManifold,
) -> Result<(MapField, SpinorField)> {
    let q = target.q();
    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::Config("snapshot is empty".into()))?;
    let expected = header(q).join(",");
    if head.trim() != expected {
        return Err(Error::Config(format!(
            "snapshot header does not match target {} (expected {} columns)",
            target.label(),
            header(q).len()
        )));
    }
    let ncol = 5 + 5 * q;
    let mut phi = Vec::with_capacity(lattice.len() * q);
    let mut psi = Vec::with_capacity(lattice.len() * q * 2);
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != ncol {
            return Err(Error::Config(format!(
                "snapshot line {}: expected {ncol} columns, got {}",
                lineno + 2,
                cols.len()
            )));
        }
        let num = |k: usize| -> Result<f64> {
            cols[k].trim().parse::<f64>().map_err(|e| {
                Error::Config(format!(
                    "snapshot line {} column {}: {e}",
                    lineno + 2,
                    k + 1
                ))
            })
        };
        let site = num(0)? as usize;
        if site != rows {
            return Err(Error::Config(format!(
                "snapshot line {}: sites out of order",
                lineno + 2
            )));
        }
        for k in 0..q {
            phi.push(num(5 + k)?);
        }
        for k in 0..2 * q {
            psi.push(Complex64::new(num(5 + q + 2 * k)?, num(6 + q + 2 * k)?));
        }
        rows += 1;
    }
    if rows != lattice.len() {
        return Err(Error::ShapeMismatch {
            expected: lattice.len(),
            actual: rows,
        });
    }
    let phi = MapField { q, values: phi };
    let psi = SpinorField { q, values: psi };
    phi.check_on(target)?;
    Ok((phi, psi))
}

pub fn read_fields(
    path: &Path,
    lattice: &Lattice,
    target: &TargetManifold,
) -> Result<(MapField, SpinorField)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read snapshot {}: {e}", path.display())))?;
    fields_from_csv(&text, lattice, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{init_map, init_spinor, MapInit, SpinorInit};
    use crate::surface::SpinStructure;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn floats_round_trip_exactly(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let y: f64 = fmt_f64(x).parse().unwrap();
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let lattice = Lattice::annulus(8, 12, 0.2, 1.0).unwrap();
        let target = TargetManifold::sphere(2).unwrap();
        let map = MapInit::RandomSmooth {
            point: vec![0.0, 0.0, 1.0],
            amplitude: 0.5,
            cutoff: 3,
        };
        let phi = init_map(&map, &lattice, &target, 3).unwrap();
        let sp = SpinorInit::RandomSmooth {
            amplitude: 1.0,
            cutoff: 3,
        };
        let psi = init_spinor(&sp, &lattice, &phi, &target, SpinStructure::PERIODIC, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        write_fields(&path, &lattice, &phi, &psi).unwrap();
        let (phi2, psi2) = read_fields(&path, &lattice, &target).unwrap();
        assert!(phi
            .values
            .iter()
            .zip(&phi2.values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(psi
            .values
            .iter()
            .zip(&psi2.values)
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
        let again = fields_to_csv(&lattice, &phi2, &psi2).unwrap();
        assert_eq!(again, std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let lattice = Lattice::square_torus(8).unwrap();
        let target = TargetManifold::sphere(2).unwrap();
        let phi = MapField::constant(&lattice, &[0.0, 0.0, 1.0]);
        let psi = SpinorField::zeros(&lattice, 3);
        let text = fields_to_csv(&lattice, &phi, &psi).unwrap();
        let small = Lattice::square_torus(10).unwrap();
        assert!(fields_from_csv(&text, &small, &target).is_err());
        let s3 = TargetManifold::sphere(3).unwrap();
        assert!(fields_from_csv(&text, &lattice, &s3).is_err());
    }
}
