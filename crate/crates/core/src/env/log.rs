//! JSON-lines episode logs with fixed nine-decimal numbers.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::events::EventRecord;

use super::StepResult;

/// Fixed nine-decimal rendering; negative zero prints as zero and non-finite
/// values as `null`.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    let s = format!("{v:.9}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn event_json(e: &EventRecord) -> String {
    let ids: Vec<String> = e.participants.iter().map(|p| p.0.to_string()).collect();
    format!(
        "{{\"kind\":\"{}\",\"severity\":\"{}\",\"t\":{},\"participants\":[{}],\"detail\":{}}}",
        e.kind.as_str(),
        e.severity.as_str(),
        format_number(e.time),
        ids.join(","),
        quote(&e.detail)
    )
}

/// One log record: `{step, t, agents:{id:{...}}, events:[...]}`.
pub fn log_line(result: &StepResult) -> String {
    let mut out = format!(
        "{{\"step\":{},\"t\":{},\"agents\":{{",
        result.step,
        format_number(result.time)
    );
    for (i, (id, a)) in result.agents.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let s = &a.observation.state;
        let _ = write!(
            out,
            "\"{}\":{{\"x\":{},\"y\":{},\"heading\":{},\"speed\":{},\"action\":[{},{}],\"reward\":{},\"terminated\":{}}}",
            id.0,
            format_number(s.pose.position.x),
            format_number(s.pose.position.y),
            format_number(s.pose.heading),
            format_number(s.speed),
            format_number(a.action.accel),
            format_number(a.action.steer),
            format_number(a.reward),
            a.terminated
        );
    }
    out.push_str("},\"events\":[");
    let events: Vec<String> = result.info.events.iter().map(event_json).collect();
    out.push_str(&events.join(","));
    out.push_str("]}");
    out
}

#[derive(Debug)]
pub struct EpisodeLog<W: Write> {
    out: W,
    records: usize,
}

impl<W: Write> EpisodeLog<W> {
    pub fn new(out: W) -> Self {
        Self { out, records: 0 }
    }

    pub fn write_step(&mut self, result: &StepResult) -> io::Result<()> {
        writeln!(self.out, "{}", log_line(result))?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> usize {
        self.records
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(1.0), "1.000000000");
        assert_eq!(format_number(-0.0), "0.000000000");
        assert_eq!(format_number(-1e-12), "0.000000000");
        assert_eq!(format_number(-2.5), "-2.500000000");
        assert_eq!(format_number(f64::NAN), "null");
    }
}
