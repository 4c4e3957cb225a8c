//! CSV emission. Numbers are written with 17 significant digits so they
//! parse back to the same doubles.

use std::io::Write;

use ecc_market::solver::Trajectory;

use crate::CliError;

/// `1.2345678901234567e-3` style: 17 significant digits, round-trips.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `t, x_1..x_N, x_c, r_1..r_N, r_c, p, u_1..u_N, u_c, U_1..U_N, U_c`.
pub fn trajectory_header(n_ecps: usize) -> Vec<String> {
    let each = |prefix: &'static str| (1..=n_ecps).map(move |i| format!("{prefix}_{i}"));
    let mut h = vec!["t".to_string()];
    h.extend(each("x"));
    h.push("x_c".into());
    h.extend(each("r"));
    h.push("r_c".into());
    h.push("p".into());
    h.extend(each("u"));
    h.push("u_c".into());
    h.extend(each("U"));
    h.push("U_c".into());
    h
}

pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> Result<(), CliError> {
    let n = traj.states[0].n_ecps();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n))?;
    for k in 0..traj.len() {
        let c = &traj.controls[k];
        let mut row = vec![fmt_f64(traj.times[k])];
        row.extend(traj.states[k].shares().iter().map(|v| fmt_f64(*v)));
        row.extend(c.allocation.requests().iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(c.allocation.cloud_remainder()));
        row.push(fmt_f64(c.price));
        row.extend(traj.utilities[k].iter().map(|v| fmt_f64(*v)));
        row.extend(traj.integral_utilities[k].iter().map(|v| fmt_f64(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a table of plain rows; `None` cells are left empty.
pub fn write_table<W: Write>(out: W, header: &[String], rows: &[Vec<Option<String>>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|c| c.as_deref().unwrap_or("")))?;
    }
    w.flush()?;
    Ok(())
}
