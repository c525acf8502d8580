//! Uniformly sampled PMU-style records and their CSV form.
//!
//! The CSV contract is a `t,v,theta,p,q` header followed by one row per
//! sample. Angles are radians. Values are written in shortest round-trip
//! form, so `parse(serialize(x)) == x` bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LoadModelError, Result};
use crate::model::{polar_to_dq, PhasorDQ};

pub const CSV_HEADER: [&str; 5] = ["t", "v", "theta", "p", "q"];

/// Relative tolerance on the sample spacing.
const SPACING_RTOL: f64 = 1e-6;

/// Time series of voltage magnitude, angle, active and reactive power.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementSeries {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl MeasurementSeries {
    /// Builds and validates a series.
    pub fn new(
        t: Vec<f64>,
        v: Vec<f64>,
        theta: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
    ) -> Result<Self> {
        let s = Self { t, v, theta, p, q };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sample period inferred from the first two samples.
    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        for (name, len) in [
            ("v", self.v.len()),
            ("theta", self.theta.len()),
            ("p", self.p.len()),
            ("q", self.q.len()),
        ] {
            if len != n {
                return Err(LoadModelError::InvalidSeries(format!(
                    "column '{name}' has {len} samples, 't' has {n}"
                )));
            }
        }
        if n < 2 {
            return Err(LoadModelError::InvalidSeries(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        for (name, col) in self.columns() {
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(LoadModelError::InvalidSeries(format!(
                    "column '{name}' is not finite at row {i}"
                )));
            }
        }
        let dt = self.dt();
        if dt <= 0.0 {
            return Err(LoadModelError::InvalidSeries(
                "column 't' must be strictly increasing".into(),
            ));
        }
        for i in 1..n {
            let step = self.t[i] - self.t[i - 1];
            if (step - dt).abs() > SPACING_RTOL * dt {
                return Err(LoadModelError::InvalidSeries(format!(
                    "column 't' is not uniformly spaced at row {i} (step {step}, expected {dt})"
                )));
            }
        }
        if let Some(i) = self.v.iter().position(|&x| x <= 0.0) {
            return Err(LoadModelError::InvalidSeries(format!(
                "column 'v' must be positive, got {} at row {i}",
                self.v[i]
            )));
        }
        Ok(())
    }

    fn columns(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("t", &self.t),
            ("v", &self.v),
            ("theta", &self.theta),
            ("p", &self.p),
            ("q", &self.q),
        ]
    }

    /// Voltage phasors in the d/q frame, one per sample.
    pub fn dq(&self) -> Vec<PhasorDQ> {
        self.v
            .iter()
            .zip(&self.theta)
            .map(|(&v, &th)| polar_to_dq(v, th))
            .collect()
    }

    pub fn mean_p(&self) -> f64 {
        mean(&self.p)
    }

    pub fn min_v(&self) -> f64 {
        self.v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the first sample at or after `time`.
    pub fn index_at(&self, time: f64) -> usize {
        let dt = self.dt();
        let raw = ((time - self.t[0]) / dt - 1e-9).ceil();
        raw.clamp(0.0, self.len() as f64) as usize
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for i in 0..self.len() {
            w.write_record([
                self.t[i].to_string(),
                self.v[i].to_string(),
                self.theta[i].to_string(),
                self.p[i].to_string(),
                self.q[i].to_string(),
            ])?;
        }
        w.flush()
    }

    /// Parses the CSV contract. Errors name the offending row and column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| LoadModelError::InvalidSeries(format!("cannot read header: {e}")))?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        if names != CSV_HEADER {
            return Err(LoadModelError::InvalidSeries(format!(
                "expected header '{}', found '{}'",
                CSV_HEADER.join(","),
                names.join(",")
            )));
        }
        let mut cols: [Vec<f64>; 5] = Default::default();
        for (row, rec) in r.records().enumerate() {
            // row numbers are 1-based data rows
            let row = row + 1;
            let rec = rec.map_err(|e| LoadModelError::InvalidSeries(format!("row {row}: {e}")))?;
            if rec.len() != 5 {
                return Err(LoadModelError::InvalidSeries(format!(
                    "row {row}: expected 5 fields, found {}",
                    rec.len()
                )));
            }
            for (k, field) in rec.iter().enumerate() {
                let x: f64 = field.parse().map_err(|_| {
                    LoadModelError::InvalidSeries(format!(
                        "row {row}, column '{}': cannot parse '{field}' as a number",
                        CSV_HEADER[k]
                    ))
                })?;
                cols[k].push(x);
            }
        }
        let [t, v, theta, p, q] = cols;
        Self::new(t, v, theta, p, q)
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> MeasurementSeries {
        let t: Vec<f64> = (0..5).map(|i| i as f64 * 0.01).collect();
        MeasurementSeries::new(
            t,
            vec![1.0, 1.01, 0.99, 1.0, 1.02],
            vec![0.0, 0.01, -0.02, 0.0, 0.1],
            vec![5.0; 5],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap()
    }

    #[test]
    fn rejects_unequal_lengths() {
        let mut s = sample();
        s.q.pop();
        assert!(s.validate().unwrap_err().to_string().contains("'q'"));
    }

    #[test]
    fn rejects_non_uniform_time() {
        let mut s = sample();
        s.t[3] = 0.035;
        assert!(s.validate().is_err());
    }

    #[test]
    fn rejects_nonpositive_voltage() {
        let mut s = sample();
        s.v[2] = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = sample();
        assert_eq!(s.mean_p(), 5.0);
        assert_eq!(s.min_v(), 0.99);
        assert_eq!(s.index_at(0.02), 2);
        assert_eq!(s.index_at(0.015), 2);
        assert_eq!(s.index_at(1.0), 5);
    }

    #[test]
    fn csv_errors_name_row_and_column() {
        let text = "t,v,theta,p,q\n0,1,0,1,1\n0.01,abc,0,1,1\n";
        let err = MeasurementSeries::read_csv(text.as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("'v'"), "{msg}");

        let text = "t,v,phi,p,q\n0,1,0,1,1\n";
        assert!(MeasurementSeries::read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(
            vals in proptest::collection::vec((0.5f64..1.5, -3.0f64..3.0, -1e3f64..1e3, -1e3f64..1e3), 2..40),
            dt in 1e-3f64..0.1,
        ) {
            let n = vals.len();
            let s = MeasurementSeries::new(
                (0..n).map(|i| i as f64 * dt).collect(),
                vals.iter().map(|x| x.0).collect(),
                vals.iter().map(|x| x.1).collect(),
                vals.iter().map(|x| x.2).collect(),
                vals.iter().map(|x| x.3).collect(),
            ).unwrap();
            let mut buf = Vec::new();
            s.write_csv(&mut buf).unwrap();
            let back = MeasurementSeries::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
