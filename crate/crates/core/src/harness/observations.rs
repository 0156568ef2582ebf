use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::matrix_ops::{apply_mask, SampleSet, SymmetricMatrix};

use super::Scenario;

/// How observed pairs are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplingModel {
    /// `⌊r·n(n-1)/2⌋` unordered pairs uniformly without replacement.
    UniformPairs { ratio: f64 },
    /// Every pair within Euclidean distance `rho`.
    RadioRange { rho: f64 },
}

/// Partially observed squared distances `P_E(D_obs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDistances {
    e: SampleSet,
    values: SymmetricMatrix,
    sampling_ratio: f64,
    noise_sigma: f64,
}

impl ObservedDistances {
    /// `values` must already vanish outside `E` (and on the diagonal).
    pub fn new(
        e: SampleSet,
        values: SymmetricMatrix,
        sampling_ratio: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        if e.n() != values.n() {
            return Err(dim_err(format!(
                "sample set has n = {} but values are {}x{}",
                e.n(),
                values.n(),
                values.n()
            )));
        }
        if apply_mask(&values, &e)? != values {
            return Err(Error::InvalidSample(
                "observed values must be zero outside the sample set".into(),
            ));
        }
        if !(sampling_ratio > 0.0 && sampling_ratio <= 1.0) && !e.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "sampling ratio {sampling_ratio} outside (0, 1]"
            )));
        }
        Ok(Self {
            e,
            values,
            sampling_ratio,
            noise_sigma,
        })
    }

    /// Masks a full distance matrix; the ratio is the realized fraction of
    /// observed off-diagonal entries.
    pub fn from_truth(d: &SymmetricMatrix, e: SampleSet) -> Result<Self> {
        let values = apply_mask(d, &e)?;
        let ratio = realized_ratio(&e);
        Self::new(e, values, ratio, 0.0)
    }

    /// Builds observations from unordered `(i, j, d²_ij)` triplets.
    pub fn from_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
        sampling_ratio: f64,
        noise_sigma: f64,
    ) -> Result<Self> {
        let e = SampleSet::new(n, triplets.iter().map(|&(i, j, _)| (i, j)))?;
        if e.pairs().len() != triplets.len() {
            return Err(Error::InvalidSample("duplicate pair in observations".into()));
        }
        let mut values = nalgebra::DMatrix::zeros(n, n);
        for &(i, j, v) in triplets {
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
        Self::new(e, SymmetricMatrix::new(values)?, sampling_ratio, noise_sigma)
    }

    pub fn n(&self) -> usize {
        self.e.n()
    }

    pub fn sample_set(&self) -> &SampleSet {
        &self.e
    }

    pub fn values(&self) -> &SymmetricMatrix {
        &self.values
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.sampling_ratio
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// `(i, j, value)` for each observed unordered pair, `i < j`.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.e
            .pairs()
            .iter()
            .map(|&(i, j)| (i, j, self.values[(i, j)]))
            .collect()
    }
}

fn realized_ratio(e: &SampleSet) -> f64 {
    let n = e.n();
    if n < 2 {
        return 0.0;
    }
    e.directed_len() as f64 / (n * (n - 1)) as f64
}

/// Number of unordered pairs drawn for ratio `r`. The small slack keeps
/// ratios like 0.3 from losing a pair to binary rounding.
pub(crate) fn pair_budget(n: usize, ratio: f64) -> usize {
    let total = (n * (n.saturating_sub(1)) / 2) as f64;
    (ratio * total + 1e-9).floor() as usize
}

/// Draws `E` and the observed values from a scenario.
///
/// For a fixed seed the uniform draws are nested: a larger ratio observes a
/// superset of the pairs seen at a smaller one.
pub fn sample_observations(
    s: &Scenario,
    model: &SamplingModel,
    noise_sigma: f64,
    seed: u64,
) -> Result<ObservedDistances> {
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let n = s.n;
    let (e, ratio) = match *model {
        SamplingModel::UniformPairs { ratio } => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                if ratio == 0.0 {
                    return Err(Error::EmptySample("sampling ratio 0 selects no pairs".into()));
                }
                return Err(Error::InvalidConfig(format!("sampling ratio {ratio} outside (0, 1]")));
            }
            let m = pair_budget(n, ratio);
            if m < 1 {
                return Err(Error::EmptySample(format!(
                    "ratio {ratio} selects no pairs among {} for n = {n}",
                    n * (n - 1) / 2
                )));
            }
            let mut all: Vec<(usize, usize)> = SampleSet::full(n).pairs().to_vec();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            all.shuffle(&mut rng);
            all.truncate(m);
            (SampleSet::new(n, all)?, ratio)
        }
        SamplingModel::RadioRange { rho } => {
            if !(rho > 0.0) {
                return Err(Error::InvalidConfig(format!("radio range must be > 0, got {rho}")));
            }
            let limit = rho * rho;
            let pairs = SampleSet::full(n)
                .pairs()
                .iter()
                .copied()
                .filter(|&(i, j)| s.d_true[(i, j)] <= limit)
                .collect::<Vec<_>>();
            if pairs.is_empty() {
                return Err(Error::EmptySample(format!("no pair within range {rho}")));
            }
            let e = SampleSet::new(n, pairs)?;
            let r = realized_ratio(&e);
            (e, r)
        }
    };

    let mut values = apply_mask(&s.d_true, &e)?.into_matrix();
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|err| Error::InvalidConfig(format!("noise distribution: {err}")))?;
        for &(i, j) in e.pairs() {
            let v = (values[(i, j)] + normal.sample(&mut rng)).max(0.0);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    ObservedDistances::new(e, SymmetricMatrix::new(values)?, ratio, noise_sigma)
}
