//! Per-step episode trace as CSV with a header row.

use std::io::{Read, Write};

use super::state::{EnvState, StepOutcome};
use super::EnvError;

/// One step of an episode: state after the step plus the rewards it paid.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub uav_positions: Vec<[f64; 3]>,
    pub gu_positions: Vec<[f64; 2]>,
    /// Row-major `M x N` pairing matrix.
    pub pairing: Vec<Vec<bool>>,
    pub rewards: Vec<f64>,
}

impl TraceRecord {
    pub fn from_outcome(out: &StepOutcome) -> Self {
        Self::from_state(&out.next_state, out.rewards.clone())
    }

    pub fn from_state(state: &EnvState, rewards: Vec<f64>) -> Self {
        let p = &state.pairing;
        Self {
            t: state.t,
            uav_positions: state.uav_positions(),
            gu_positions: state.gus.iter().map(|g| [g.position[0], g.position[1]]).collect(),
            pairing: (0..p.num_uavs()).map(|m| p.row(m).to_vec()).collect(),
            rewards,
        }
    }

    pub fn num_uavs(&self) -> usize {
        self.uav_positions.len()
    }

    pub fn num_gus(&self) -> usize {
        self.gu_positions.len()
    }
}

fn header(m: usize, n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 0..m {
        for axis in ["x", "y", "z"] {
            h.push(format!("uav{i}_{axis}"));
        }
    }
    for j in 0..n {
        h.push(format!("gu{j}_x"));
        h.push(format!("gu{j}_y"));
    }
    for i in 0..m {
        for j in 0..n {
            h.push(format!("sigma_{i}_{j}"));
        }
    }
    for i in 0..m {
        h.push(format!("reward{i}"));
    }
    h
}

pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    dims: (usize, usize),
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W, num_uavs: usize, num_gus: usize) -> Result<Self, EnvError> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(header(num_uavs, num_gus))?;
        Ok(Self {
            inner,
            dims: (num_uavs, num_gus),
        })
    }

    pub fn write(&mut self, rec: &TraceRecord) -> Result<(), EnvError> {
        if (rec.num_uavs(), rec.num_gus()) != self.dims || rec.rewards.len() != self.dims.0 {
            return Err(EnvError::Trace("record dimensions differ from header".into()));
        }
        let mut row = vec![rec.t.to_string()];
        row.extend(rec.uav_positions.iter().flatten().map(|v| v.to_string()));
        row.extend(rec.gu_positions.iter().flatten().map(|v| v.to_string()));
        row.extend(rec.pairing.iter().flatten().map(|&b| u8::from(b).to_string()));
        row.extend(rec.rewards.iter().map(|v| v.to_string()));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, EnvError> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| EnvError::Io(std::io::Error::other(e.to_string())))
    }
}

/// Parses a trace written by [`TraceWriter`]; dimensions come from the header.
pub fn read_trace<R: Read>(source: R) -> Result<Vec<TraceRecord>, EnvError> {
    let mut rdr = csv::Reader::from_reader(source);
    let cols = rdr.headers()?.clone();
    let m = cols.iter().filter(|c| c.starts_with("reward")).count();
    let n = cols.iter().filter(|c| c.starts_with("gu") && c.ends_with("_x")).count();
    let expected = header(m, n);
    if cols.iter().ne(expected.iter().map(String::as_str)) {
        return Err(EnvError::Trace("unrecognized trace header".into()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let num = |k: usize| -> Result<f64, EnvError> {
            row[k]
                .parse::<f64>()
                .map_err(|e| EnvError::Trace(format!("column {}: {e}", expected[k])))
        };
        let t = row[0]
            .parse::<usize>()
            .map_err(|e| EnvError::Trace(format!("column t: {e}")))?;
        let mut k = 1;
        let mut uav_positions = Vec::with_capacity(m);
        for _ in 0..m {
            uav_positions.push([num(k)?, num(k + 1)?, num(k + 2)?]);
            k += 3;
        }
        let mut gu_positions = Vec::with_capacity(n);
        for _ in 0..n {
            gu_positions.push([num(k)?, num(k + 1)?]);
            k += 2;
        }
        let mut pairing = vec![vec![false; n]; m];
        for r in pairing.iter_mut() {
            for cell in r.iter_mut() {
                *cell = num(k)? != 0.0;
                k += 1;
            }
        }
        let mut rewards = Vec::with_capacity(m);
        for _ in 0..m {
            rewards.push(num(k)?);
            k += 1;
        }
        out.push(TraceRecord {
            t,
            uav_positions,
            gu_positions,
            pairing,
            rewards,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, step, HybridAction, ScenarioConfig};

    #[test]
    fn roundtrip_is_exact() {
        let cfg = ScenarioConfig::preset("2x4").unwrap();
        let mut s = reset(&cfg, 5).unwrap();
        let acts: Vec<_> = (0..2).map(|_| HybridAction::idle(4)).collect();
        let mut w = TraceWriter::new(Vec::new(), 2, 4).unwrap();
        let mut recs = vec![];
        for _ in 0..5 {
            let out = step(&s, &acts, &cfg).unwrap();
            let r = TraceRecord::from_outcome(&out);
            w.write(&r).unwrap();
            recs.push(r);
            s = out.next_state;
        }
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("t,uav0_x,uav0_y,uav0_z,"));
        assert_eq!(read_trace(&bytes[..]).unwrap(), recs);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_trace("a,b\n1,2\n".as_bytes()).is_err());
    }
}
