//! Wall-clock timing of corpus scans.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detect::{detect_corpus, DetectError, Detector};
use crate::lexcat::CategorizedMethod;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Seconds per run.
    pub runs: Vec<f64>,
    pub mean_s: f64,
    /// Training time measured by the caller, if any.
    pub training_s: Option<f64>,
}

/// Score every pair `runs` times end to end (encoding included).
pub fn time_detection(
    methods: &[CategorizedMethod],
    pairs: &[(String, String)],
    detector: &Detector<'_>,
    runs: usize,
    parallelism: usize,
    training_s: Option<f64>,
) -> Result<TimingReport, DetectError> {
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let verdicts = detect_corpus(methods, pairs, detector, parallelism)?;
        std::hint::black_box(&verdicts);
        samples.push(start.elapsed().as_secs_f64());
    }
    let mean_s = if samples.is_empty() { 0.0 } else { samples.iter().sum::<f64>() / samples.len() as f64 };
    Ok(TimingReport {
        runs: samples,
        mean_s,
        training_s,
    })
}
