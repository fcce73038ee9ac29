//! CSV writers. Reals are printed with 17 significant digits so that values
//! round-trip exactly.

use std::io::Write;

use crate::error::Result;
use crate::optimizer::{CoupledPair, Trajectory};

/// Scientific notation with 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

pub fn write_record<W: Write, I, S>(w: &mut csv::Writer<W>, record: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(record).map_err(csv_err)
}

pub fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Columns `iter, w_0.., cost, grad_norm_sq, region`.
pub fn write_trajectory<W: Write>(out: W, trajectory: &Trajectory) -> Result<()> {
    let dim = trajectory.records.first().map_or(0, |r| r.w.len());
    let mut w = writer(out);
    let mut header = vec!["iter".to_string()];
    header.extend((0..dim).map(|k| format!("w_{k}")));
    header.extend(["cost", "grad_norm_sq", "region"].map(String::from));
    write_record(&mut w, &header)?;
    for r in &trajectory.records {
        let mut row = vec![r.iter.to_string()];
        row.extend(r.w.iter().map(|x| real(*x)));
        row.push(real(r.cost));
        row.push(real(r.grad_norm_sq));
        row.push(r.region.map_or("-".to_string(), |l| l.to_string()));
        write_record(&mut w, &row)?;
    }
    finish(w)
}

/// Trajectory columns plus `model_w_*` and `deviation_sq`.
pub fn write_coupled<W: Write>(out: W, pair: &CoupledPair) -> Result<()> {
    let dim = pair.anchor.len();
    let mut w = writer(out);
    let mut header = vec!["iter".to_string()];
    header.extend((0..dim).map(|k| format!("w_{k}")));
    header.extend(["cost", "grad_norm_sq", "region"].map(String::from));
    header.extend((0..dim).map(|k| format!("model_w_{k}")));
    header.push("deviation_sq".into());
    write_record(&mut w, &header)?;
    for ((r, m), d) in pair
        .true_traj
        .records
        .iter()
        .zip(&pair.model_traj.records)
        .zip(&pair.deviations)
    {
        let mut row = vec![r.iter.to_string()];
        row.extend(r.w.iter().map(|x| real(*x)));
        row.push(real(r.cost));
        row.push(real(r.grad_norm_sq));
        row.push(r.region.map_or("-".to_string(), |l| l.to_string()));
        row.extend(m.w.iter().map(|x| real(*x)));
        row.push(real(*d));
        write_record(&mut w, &row)?;
    }
    finish(w)
}
