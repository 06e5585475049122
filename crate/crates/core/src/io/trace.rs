//! Trace serialization: plot-ready CSV with a `t, err_1..err_m,
//! x_1..x_n[, xhat_i_1..]` header and floats printed with 17 significant
//! digits so a re-parse is bit-faithful.

use std::io::Write;

use crate::error::Result;
use crate::sim::SimTrace;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(trace: &SimTrace, out: &mut W) -> Result<()> {
    let m = trace.err.len();
    let n = trace.x.first().map(|x| x.len()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 1..=m {
        header.push_str(&format!(",err_{i}"));
    }
    for k in 1..=n {
        header.push_str(&format!(",x_{k}"));
    }
    if trace.xhat.is_some() {
        for i in 1..=m {
            for k in 1..=n {
                header.push_str(&format!(",xhat_{i}_{k}"));
            }
        }
    }
    writeln!(out, "{header}")?;
    for s in 0..trace.sample_count() {
        let mut line = fmt(trace.times[s]);
        for i in 0..m {
            line.push(',');
            line.push_str(&fmt(trace.err[i][s]));
        }
        for k in 0..n {
            line.push(',');
            line.push_str(&fmt(trace.x[s][k]));
        }
        if let Some(xhat) = &trace.xhat {
            for col in xhat.iter() {
                for k in 0..n {
                    line.push(',');
                    line.push_str(&fmt(col[s][k]));
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_csv_file(trace: &SimTrace, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_csv(trace, &mut buf)?;
    buf.flush()?;
    Ok(())
}

/// Per-iteration parameter-error norms, one row per (event, k):
/// `event, t_event, k, eps_1..eps_m`. Agents absent from a window leave
/// empty cells.
pub fn write_iterations_csv<W: Write>(trace: &SimTrace, out: &mut W) -> Result<()> {
    let m = trace.err.len();
    let mut header = String::from("event,t_event,k");
    for i in 1..=m {
        header.push_str(&format!(",eps_{i}"));
    }
    writeln!(out, "{header}")?;
    for ev in &trace.events {
        let Some(norms) = &ev.iter_norms else { continue };
        for (k, row) in norms.iter().enumerate() {
            let mut line = format!("{},{},{k}", ev.index, fmt(ev.time));
            let mut by_agent = vec![None; m];
            for (slot, &agent) in ev.members.iter().enumerate() {
                by_agent[agent] = Some(row[slot]);
            }
            for cell in by_agent {
                line.push(',');
                if let Some(v) = cell {
                    line.push_str(&fmt(v));
                }
            }
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

pub fn write_iterations_csv_file(trace: &SimTrace, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_iterations_csv(trace, &mut buf)?;
    buf.flush()?;
    Ok(())
}
