use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TrainerError;

/// One agent's outcome for one training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub agent: usize,
    pub mean_episode_reward: f64,
    pub kl: f64,
    pub surrogate_gain: f64,
    pub accepted: bool,
}

/// CSV sink that flushes after every iteration so partial runs survive.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(sink: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(sink),
        }
    }

    pub fn write_all(&mut self, records: &[MetricsRecord]) -> Result<(), TrainerError> {
        for r in records {
            self.inner.serialize(r)?;
        }
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W, TrainerError> {
        self.inner
            .into_inner()
            .map_err(|e| TrainerError::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn read_metrics<R: Read>(source: R) -> Result<Vec<MetricsRecord>, TrainerError> {
    let mut rdr = csv::Reader::from_reader(source);
    let records = rdr.deserialize().collect::<Result<Vec<MetricsRecord>, _>>()?;
    Ok(records)
}
