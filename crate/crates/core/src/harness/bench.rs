use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eoa::{dual_values, DEFAULT_DUAL_TOL};
use crate::error::{Error, Result};
use crate::model::{simulate_fir, InputSpec, NoiseSpec, DEFAULT_BURN_IN};
use crate::rng::Stream;
use crate::sps::sps_initialize_from;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub d: usize,
    /// Mean wall-clock seconds for the `m − 1` dual solves.
    pub seconds: f64,
    /// Relative to the first row.
    pub ratio: f64,
}

/// Times the dual solves of one EOA construction for each dimension in `dims`.
pub fn bench(dims: &[usize], n: usize, m: usize, reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if dims.is_empty() || reps == 0 {
        return Err(Error::InvalidConfig(
            "bench needs at least one dimension and one repetition".into(),
        ));
    }
    let mut rows: Vec<BenchRow> = Vec::new();
    for &d in dims {
        let stream = Stream::new(seed).split(d as u64);
        let ds = simulate_fir(
            &vec![5.0; d],
            &InputSpec::reference_fir(),
            &NoiseSpec::NonstationaryMixture { horizon: None },
            n,
            DEFAULT_BURN_IN,
            stream,
        )?;
        let cfg = sps_initialize_from(m, 1, n, stream, seed)?;
        let start = Instant::now();
        for _ in 0..reps {
            dual_values(&ds, &cfg, DEFAULT_DUAL_TOL)?;
        }
        let seconds = start.elapsed().as_secs_f64() / reps as f64;
        let base = rows.first().map(|r| r.seconds).unwrap_or(seconds);
        rows.push(BenchRow {
            d,
            seconds,
            ratio: seconds / base,
        });
    }
    Ok(rows)
}
