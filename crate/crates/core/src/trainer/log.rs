use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epoch-averaged loss components. Values are unweighted; a disabled
/// component is exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub adversarial: f64,
    pub reconstruction: f64,
    pub uniform: f64,
    pub repulsion: f64,
    pub regularization: f64,
    /// Weighted generator objective.
    pub total: f64,
    /// Discriminator objective, 0 when no discriminator is trained.
    pub discriminator: f64,
    pub seconds: f64,
    /// Hex digest of the training RNG state at the end of the epoch.
    pub rng_digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn first(&self) -> Option<&EpochRecord> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut epochs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EpochRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
            epochs.push(rec);
        }
        Ok(Self { epochs })
    }

    /// Equality ignoring wall-clock times.
    pub fn same_losses(&self, other: &TrainLog) -> bool {
        self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                EpochRecord {
                    seconds: 0.0,
                    ..a.clone()
                } == EpochRecord {
                    seconds: 0.0,
                    ..b.clone()
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let rec = EpochRecord {
            epoch: 1,
            adversarial: 0.0,
            reconstruction: 0.25,
            uniform: 1.0 / 3.0,
            repulsion: 1e-7,
            regularization: 2.0,
            total: 3.5,
            discriminator: 0.0,
            seconds: 0.1,
            rng_digest: "ab".into(),
        };
        let log = TrainLog {
            epochs: vec![rec.clone(), EpochRecord { epoch: 2, ..rec }],
        };
        let text = log.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        let back = TrainLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, log);
    }
}
