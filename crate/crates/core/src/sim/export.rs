use std::io::Write;

use crate::error::Result;
use crate::model::Line;

use super::SimOutcome;

/// Columns: bus_id, stop_id, arrival_s, departure_s.
pub fn write_trajectories_csv<W: Write>(line: &Line, outcome: &SimOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bus_id", "stop_id", "arrival_s", "departure_s"])?;
    for (b, points) in outcome.trajectories.iter().enumerate() {
        let bus_id = line.buses[b].id.to_string();
        for p in points {
            w.write_record([
                bus_id.clone(),
                line.stops[p.stop].id.to_string(),
                p.arrival_s.to_string(),
                p.departure_s.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns: time_s, bus_id, h_1..h_n, action.
pub fn write_ctps_csv<W: Write>(line: &Line, outcome: &SimOutcome, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time_s".to_string(), "bus_id".to_string()];
    header.extend(line.buses.iter().map(|b| format!("h_{}", b.id)));
    header.push("action".to_string());
    w.write_record(&header)?;
    for r in &outcome.ctp_records {
        let mut row = Vec::with_capacity(header.len());
        row.push(r.time_s.to_string());
        row.push(line.buses[r.bus].id.to_string());
        row.extend(r.headways.iter().map(|h| h.to_string()));
        row.push(r.action.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
