//! Seeded random streams and exact-to-tolerance CMP variate generation.
//!
//! Every stream is a ChaCha8 generator. The 256-bit key is expanded from
//! `master_seed` with `SeedableRng::seed_from_u64`, and `stream_id` selects
//! the ChaCha stream (nonce) so distinct ids never overlap. Child streams are
//! derived by mixing a tag into `stream_id` with SplitMix64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cmp::{Cmp, CmpParams, TruncationPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// A child stream identified by `tag`, independent of the parent and of
    /// siblings with other tags.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(1))),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Inverse-CDF sampler over the truncated CMP pmf.
#[derive(Debug, Clone)]
pub struct CmpSampler {
    cdf: Vec<f64>,
}

impl CmpSampler {
    pub fn new(params: CmpParams, policy: &TruncationPolicy) -> Result<Self> {
        let dist = Cmp::new(params, policy)?;
        let mut total = 0.0;
        let cdf = dist
            .probabilities()
            .into_iter()
            .map(|p| {
                total += p;
                total
            })
            .collect();
        Ok(Self { cdf })
    }

    /// Largest value that can be drawn, `K − 1`.
    pub fn max_value(&self) -> u64 {
        self.cdf.len() as u64 - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = *self.cdf.last().expect("cdf has at least two entries");
        let u = rng.random::<f64>() * total;
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) as u64
    }
}

pub fn sample_cmp(
    params: CmpParams,
    count: usize,
    seed: SeedSpec,
    policy: &TruncationPolicy,
) -> Result<Vec<u64>> {
    let sampler = CmpSampler::new(params, policy)?;
    let mut rng = seed.rng();
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl ChiSquareTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Chi-square goodness of fit of `draws` against the exact pmf over cells
/// `{0, …, last_cell − 1, last_cell+}`. Upper cells whose expected count is
/// below 5 are merged into the tail cell.
pub fn chi_square_gof(
    draws: &[u64],
    params: CmpParams,
    policy: &TruncationPolicy,
    last_cell: u64,
) -> Result<ChiSquareTest> {
    if draws.is_empty() {
        return Err(Error::EmptyData);
    }
    let dist = Cmp::new(params, policy)?;
    let n = draws.len() as f64;

    let mut expected: Vec<f64> = (0..last_cell).map(|x| n * dist.log_pmf(x).exp()).collect();
    expected.push(n - expected.iter().sum::<f64>());
    while expected.len() > 2 && expected[expected.len() - 2] < 5.0 {
        let tail = expected.pop().unwrap_or(0.0);
        *expected.last_mut().expect("at least two cells") += tail;
    }
    let cells = expected.len();
    let mut observed = vec![0.0; cells];
    for &x in draws {
        observed[(x as usize).min(cells - 1)] += 1.0;
    }

    let statistic = observed
        .iter()
        .zip(&expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum::<f64>();
    let df = cells - 1;
    let p_value = ChiSquared::new(df as f64)
        .map(|d| d.sf(statistic))
        .unwrap_or(f64::NAN);
    Ok(ChiSquareTest {
        statistic,
        df,
        p_value,
    })
}
