//! CSV output and atomic file writes.
//!
//! Floats are written in Rust's shortest round-trip form, so identical values
//! always produce identical bytes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::recursive::ModalOutput;

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Channels-by-samples series with header `t,ch0,...,ch{n-1}`.
pub fn write_series_csv<W: Write>(mut w: W, series: &DMatrix<f64>, dt: f64, t0: f64) -> io::Result<()> {
    let (n, len) = series.shape();
    writeln!(w, "t,{}", join((0..n).map(|i| format!("ch{i}"))))?;
    for k in 0..len {
        let t = t0 + k as f64 * dt;
        writeln!(w, "{t},{}", join(series.column(k).iter()))?;
    }
    Ok(())
}

/// Generic table: header row, then one line per row.
pub fn write_table_csv<W: Write>(mut w: W, header: &[String], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", join(row.iter()))?;
    }
    Ok(())
}

/// Matrix with a `row` label column and `c0..` headers.
pub fn write_matrix_csv<W: Write>(mut w: W, m: &DMatrix<f64>, row_labels: &[String]) -> io::Result<()> {
    writeln!(w, "row,{}", join((0..m.ncols()).map(|j| format!("c{j}"))))?;
    for i in 0..m.nrows() {
        let label = row_labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        writeln!(w, "{label},{}", join(m.row(i).iter()))?;
    }
    Ok(())
}

/// Per-sample pipeline output: `k`, the real mode matrix row-major, the real
/// modal responses, the MAC values against a reference, and the status.
pub struct ModalCsvWriter<W: Write> {
    out: W,
    n: usize,
    macs: usize,
}

impl<W: Write> ModalCsvWriter<W> {
    pub fn new(mut out: W, n: usize, macs: usize) -> io::Result<Self> {
        let mut cols = vec!["k".to_string()];
        for i in 0..n {
            for j in 0..n {
                cols.push(format!("phi_{i}_{j}"));
            }
        }
        cols.extend((0..n).map(|j| format!("x{j}")));
        cols.extend((0..macs).map(|j| format!("mac{j}")));
        cols.push("status".into());
        writeln!(out, "{}", cols.join(","))?;
        Ok(Self { out, n, macs })
    }

    pub fn write(&mut self, output: &ModalOutput, mac: &[f64]) -> io::Result<()> {
        let mut fields = vec![output.index.to_string()];
        match &output.estimate {
            Some(est) => {
                for i in 0..self.n {
                    for j in 0..self.n {
                        fields.push(est.modes_real[(i, j)].to_string());
                    }
                }
            }
            None => fields.extend(std::iter::repeat_n(String::from("NaN"), self.n * self.n)),
        }
        fields.extend(output.modal_real.iter().map(|v| v.to_string()));
        fields.extend((0..self.macs).map(|j| mac.get(j).map_or("NaN".into(), |v| v.to_string())));
        let status =
            if output.status.is_ok() && output.any_dormant() { "dormant".to_string() } else { output.status.to_string().replace(',', ";") };
        fields.push(status);
        writeln!(self.out, "{}", fields.join(","))
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
