use std::io::Write;
use std::path::Path;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_mse: f64,
    /// Absent when no test set was supplied to `fit`.
    pub test_mse: Option<f64>,
    pub seconds: f64,
}

/// One record per completed epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_mse).collect()
    }

    /// `epoch,train_mse,test_mse,seconds`; a missing test loss is left blank.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write(path, true)
    }

    /// Same as [`write_csv`](Self::write_csv) without the wall-clock column,
    /// so the file is reproducible byte for byte.
    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        self.write(path, false)
    }

    fn write(&self, path: &Path, seconds: bool) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        if seconds {
            writeln!(out, "epoch,train_mse,test_mse,seconds")?;
        } else {
            writeln!(out, "epoch,train_mse,test_mse")?;
        }
        for e in &self.epochs {
            let test = e.test_mse.map(|v| v.to_string()).unwrap_or_default();
            write!(out, "{},{},{}", e.epoch, e.train_mse, test)?;
            if seconds {
                write!(out, ",{:.3}", e.seconds)?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let h = TrainingHistory {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_mse: 0.5,
                    test_mse: Some(0.25),
                    seconds: 1.0,
                },
                EpochRecord {
                    epoch: 2,
                    train_mse: 0.125,
                    test_mse: None,
                    seconds: 2.0,
                },
            ],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        h.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "epoch,train_mse,test_mse,seconds\n1,0.5,0.25,1.000\n2,0.125,,2.000\n"
        );
        h.write_loss_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "epoch,train_mse,test_mse\n1,0.5,0.25\n2,0.125,\n");
    }
}
