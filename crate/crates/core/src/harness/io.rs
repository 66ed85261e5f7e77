use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::harness::report::VerificationReport;
use crate::harness::Trajectory;
use crate::lagrangian::BundleDims;

/// `t, q0.., v0.., p0..`.
pub fn csv_header(dims: BundleDims) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..dims.n).map(|i| format!("q{i}")));
    h.extend((0..dims.n).map(|i| format!("v{i}")));
    h.extend((0..dims.k).map(|i| format!("p{i}")));
    h
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, dims: BundleDims) -> Result<()> {
    if let Some(bad) = traj.states.iter().position(|s| s.len() != dims.state_len()) {
        return Err(Error::DimensionMismatch(format!("sample {bad} does not match the header")));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header(dims))?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![t.to_string()];
        row.extend(s.iter().map(|x| x.to_string()));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path, system_id: &str) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let mut traj = Trajectory::new(system_id);
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number '{x}': {e}"))))
            .collect::<Result<_>>()?;
        if vals.is_empty() {
            continue;
        }
        traj.push(vals[0], DVector::from_column_slice(&vals[1..]));
    }
    traj.validate()?;
    Ok(traj)
}

pub fn write_reports_json(path: &Path, reports: &[VerificationReport]) -> Result<()> {
    let text = serde_json::to_string_pretty(reports)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
