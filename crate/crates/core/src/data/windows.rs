use crate::error::{Error, Result};

/// One rolling-window sample: `x = s[origin..origin+L]`,
/// `y = s[origin+L..origin+L+m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub origin: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    samples: Vec<Sample>,
    seq_len: usize,
    horizon: usize,
    stride: usize,
}

/// Number of windows `make_windows` yields for a series of length `t`.
pub fn window_count(t: usize, seq_len: usize, horizon: usize, stride: usize) -> usize {
    if stride == 0 || t < seq_len + horizon {
        0
    } else {
        (t - seq_len - horizon) / stride + 1
    }
}

pub fn make_windows(series: &[f64], seq_len: usize, horizon: usize, stride: usize) -> Result<WindowedDataset> {
    if seq_len == 0 || horizon == 0 || stride == 0 {
        return Err(Error::config("seq_len, horizon and stride must be ≥ 1"));
    }
    if series.len() < seq_len + horizon {
        return Err(Error::data(format!(
            "series of length {} is shorter than seq_len + horizon = {}",
            series.len(),
            seq_len + horizon
        )));
    }
    let n = window_count(series.len(), seq_len, horizon, stride);
    let samples = (0..n)
        .map(|k| {
            let origin = k * stride;
            Sample {
                x: series[origin..origin + seq_len].to_vec(),
                y: series[origin + seq_len..origin + seq_len + horizon].to_vec(),
                origin,
            }
        })
        .collect();
    Ok(WindowedDataset {
        samples,
        seq_len,
        horizon,
        stride,
    })
}

impl WindowedDataset {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Flattened inputs `[n·L]` and targets `[n·m]` for the given indices.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(indices.len() * self.seq_len);
        let mut y = Vec::with_capacity(indices.len() * self.horizon);
        for &i in indices {
            x.extend_from_slice(&self.samples[i].x);
            y.extend_from_slice(&self.samples[i].y);
        }
        (x, y)
    }

    pub fn inputs(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.x.as_slice()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_enumerated_counts() {
        let s: Vec<f64> = (0..7).map(f64::from).collect();
        let d = make_windows(&s, 3, 1, 1).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.samples()[3].x, vec![3.0, 4.0, 5.0]);
        assert_eq!(d.samples()[3].y, vec![6.0]);

        assert_eq!(make_windows(&s, 5, 2, 1).unwrap().len(), 1);
        assert!(make_windows(&s, 5, 3, 1).is_err());

        // T=10, L=3, m=1: seven windows at stride 1, four at stride 2
        let s: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(make_windows(&s, 3, 1, 1).unwrap().len(), 7);
        let d = make_windows(&s, 3, 1, 2).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.samples().iter().map(|w| w.origin).collect::<Vec<_>>(), [0, 2, 4, 6]);
    }

    #[test]
    fn gather_concatenates() {
        let s: Vec<f64> = (0..6).map(f64::from).collect();
        let d = make_windows(&s, 2, 2, 1).unwrap();
        let (x, y) = d.gather(&[2, 0]);
        assert_eq!(x, [2.0, 3.0, 0.0, 1.0]);
        assert_eq!(y, [4.0, 5.0, 2.0, 3.0]);
    }

    fn brute_force(t: usize, l: usize, m: usize, stride: usize) -> usize {
        (0..t).step_by(stride).filter(|&k| k + l + m <= t).count()
    }

    proptest! {
        #[test]
        fn count_matches_enumeration(t in 1usize..120, l in 1usize..30, m in 1usize..8, stride in 1usize..6) {
            let s = vec![0.0; t];
            let expected = brute_force(t, l, m, stride);
            match make_windows(&s, l, m, stride) {
                Ok(d) => {
                    prop_assert_eq!(d.len(), expected);
                    for w in d.samples() {
                        prop_assert!(w.origin + l + m <= t);
                    }
                }
                Err(_) => prop_assert_eq!(expected, 0),
            }
        }
    }
}
