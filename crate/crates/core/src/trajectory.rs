//! Timed tilt paths for offline rendering, and their CSV form.
//!
//! CSV layout: header `time_s,pitch_deg,roll_deg`, one point per row, times
//! in seconds starting at 0 and strictly increasing.

use std::fmt::Write as _;

use crate::error::DomainError;
use crate::gainmap::TiltAngles;

pub const CSV_HEADER: [&str; 3] = ["time_s", "pitch_deg", "roll_deg"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time_s: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
}

impl TrajectoryPoint {
    pub fn new(time_s: f64, pitch_deg: f64, roll_deg: f64) -> Self {
        Self {
            time_s,
            pitch_deg,
            roll_deg,
        }
    }
}

/// Non-empty, strictly time-ordered list of tilt points starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltTrajectory {
    points: Vec<TrajectoryPoint>,
}

impl TiltTrajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self, DomainError> {
        validate(&points).map_err(|(_, msg)| DomainError::Trajectory(msg))?;
        Ok(Self { points })
    }

    /// A single point held forever.
    pub fn constant(pitch_deg: f64, roll_deg: f64) -> Result<Self, DomainError> {
        Self::new(vec![TrajectoryPoint::new(0.0, pitch_deg, roll_deg)])
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn end_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.time_s)
    }

    /// Tilt at `t`, linearly interpolated and held after the last point.
    /// Angles are clamped to ±90°.
    pub fn at(&self, t: f64) -> TiltAngles {
        let pts = &self.points;
        let idx = pts.partition_point(|p| p.time_s <= t);
        let (pitch, roll) = if idx == 0 {
            (pts[0].pitch_deg, pts[0].roll_deg)
        } else if idx == pts.len() {
            let last = pts[idx - 1];
            (last.pitch_deg, last.roll_deg)
        } else {
            let (a, b) = (pts[idx - 1], pts[idx]);
            let f = (t - a.time_s) / (b.time_s - a.time_s);
            (
                a.pitch_deg + (b.pitch_deg - a.pitch_deg) * f,
                a.roll_deg + (b.roll_deg - a.roll_deg) * f,
            )
        };
        TiltAngles::clamped(pitch, roll).expect("points are validated finite")
    }

    pub fn parse_csv(text: &str) -> Result<Self, TrajectoryParseError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| TrajectoryParseError::new(1, e.to_string()))?
            .clone();
        if headers.iter().ne(CSV_HEADER) {
            return Err(TrajectoryParseError::new(
                1,
                format!("expected header `{}`", CSV_HEADER.join(",")),
            ));
        }
        let mut points = Vec::new();
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                TrajectoryParseError::new(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<f64, TrajectoryParseError> {
                let raw = record.get(i).unwrap_or_default();
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        TrajectoryParseError::new(
                            line,
                            format!("`{}` is not a finite number for {}", raw, CSV_HEADER[i]),
                        )
                    })
            };
            points.push(TrajectoryPoint::new(field(0)?, field(1)?, field(2)?));
            lines.push(line);
        }
        validate(&points).map_err(|(idx, msg)| {
            let line = idx.and_then(|i| lines.get(i).copied()).unwrap_or(1);
            TrajectoryParseError::new(line, msg)
        })?;
        Ok(Self { points })
    }

    pub fn to_csv(&self) -> String {
        let mut out = CSV_HEADER.join(",");
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.time_s, p.pitch_deg, p.roll_deg);
        }
        out
    }
}

/// Returns the offending point index (if any) and a message.
fn validate(points: &[TrajectoryPoint]) -> Result<(), (Option<usize>, String)> {
    let first = points
        .first()
        .ok_or((None, "trajectory has no points".to_string()))?;
    if first.time_s != 0.0 {
        return Err((
            Some(0),
            format!("first time must be 0, got {}", first.time_s),
        ));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.time_s.is_finite() && p.pitch_deg.is_finite() && p.roll_deg.is_finite()) {
            return Err((Some(i), "values must be finite".into()));
        }
        if i > 0 && p.time_s <= points[i - 1].time_s {
            return Err((
                Some(i),
                format!(
                    "times must strictly increase ({} after {})",
                    p.time_s,
                    points[i - 1].time_s
                ),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct TrajectoryParseError {
    pub line: u64,
    pub message: String,
}

impl TrajectoryParseError {
    fn new(line: u64, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_holds() {
        let t = TiltTrajectory::new(vec![
            TrajectoryPoint::new(0.0, 0.0, -90.0),
            TrajectoryPoint::new(8.0, 10.0, 90.0),
        ])
        .unwrap();
        assert_eq!(t.at(0.0).roll_deg, -90.0);
        assert_eq!(t.at(4.0).roll_deg, 0.0);
        assert_eq!(t.at(4.0).pitch_deg, 5.0);
        assert_eq!(t.at(8.0).roll_deg, 90.0);
        assert_eq!(t.at(100.0).roll_deg, 90.0);
    }

    #[test]
    fn clamps_wild_angles() {
        let t = TiltTrajectory::constant(-200.0, 300.0).unwrap();
        assert_eq!(t.at(1.0), TiltAngles::clamped(-90.0, 90.0).unwrap());
    }

    #[test]
    fn validation() {
        assert!(TiltTrajectory::new(vec![]).is_err());
        assert!(TiltTrajectory::new(vec![TrajectoryPoint::new(0.5, 0.0, 0.0)]).is_err());
        assert!(TiltTrajectory::new(vec![
            TrajectoryPoint::new(0.0, 0.0, 0.0),
            TrajectoryPoint::new(0.0, 1.0, 0.0),
        ])
        .is_err());
        assert!(TiltTrajectory::constant(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let text = "time_s,pitch_deg,roll_deg\n0,0,-90\n2.5,1.25,0\n8,0,90\n";
        let t = TiltTrajectory::parse_csv(text).unwrap();
        assert_eq!(t.points().len(), 3);
        assert_eq!(TiltTrajectory::parse_csv(&t.to_csv()).unwrap(), t);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err =
            TiltTrajectory::parse_csv("time_s,pitch_deg,roll_deg\n0,0,0\nabc,0,0\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.to_string().contains("line 3"));

        let err = TiltTrajectory::parse_csv("time_s,pitch_deg,roll_deg\n0,0,0\n1,0,0\n1,0,0\n")
            .unwrap_err();
        assert_eq!(err.line, 4);

        let err = TiltTrajectory::parse_csv("time_s,pitch_deg,roll_deg\n0,0,0\n1,0\n").unwrap_err();
        assert_eq!(err.line, 3);

        let err = TiltTrajectory::parse_csv("t,pitch,roll\n0,0,0\n").unwrap_err();
        assert_eq!(err.line, 1);

        let err = TiltTrajectory::parse_csv("time_s,pitch_deg,roll_deg\n").unwrap_err();
        assert!(err.message.contains("no points"));
    }
}
