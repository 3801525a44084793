//! Snapshot CSV output: `t,count0,count1,count2` followed by any extra
//! columns. Floats use Rust's shortest round-trip formatting, so files are
//! byte-identical across runs with the same inputs.

use std::io::Write;

use crate::engine::trajectory::Trajectory;
use crate::Result;

pub const BASE_COLUMNS: [&str; 4] = ["t", "count0", "count1", "count2"];

/// Writes the snapshot table of `traj`. `extra` supplies the extra column
/// names and, per snapshot index, their values.
pub fn write_snapshots<W: Write>(
    out: W,
    traj: &Trajectory,
    extra_names: &[&str],
    mut extra: impl FnMut(usize) -> Vec<String>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = BASE_COLUMNS.iter().copied().chain(extra_names.iter().copied()).collect();
    w.write_record(&header).map_err(csv_err)?;
    for (i, s) in traj.snapshots().iter().enumerate() {
        let mut row = vec![s.t.to_string(), s.counts[0].to_string(), s.counts[1].to_string(), s.counts[2].to_string()];
        row.extend(extra(i));
        debug_assert_eq!(row.len(), header.len());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Internal(format!("csv: {other:?}")),
    }
}
