use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{dim_err, Result};
use crate::localization::{edm_of, LocationMap};
use crate::matrix_ops::SymmetricMatrix;

/// Source of ground-truth positions.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// I.i.d. uniform entries in `[0, 1)`.
    UniformUnit,
    /// Given `n x k` coordinates.
    Fixed(DMatrix<f64>),
}

/// Ground-truth layout and its squared-distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub k: usize,
    pub coords: DMatrix<f64>,
    pub d_true: SymmetricMatrix,
    pub seed: u64,
}

impl Scenario {
    pub fn location_map(&self) -> LocationMap {
        LocationMap::new(self.coords.clone())
    }
}

/// The five-node example layout: (7,9), (2,7), (11,7), (12,4), (15,6).
pub fn five_node_coords() -> DMatrix<f64> {
    DMatrix::from_row_slice(5, 2, &[7.0, 9.0, 2.0, 7.0, 11.0, 7.0, 12.0, 4.0, 15.0, 6.0])
}

pub fn generate_scenario(n: usize, k: usize, seed: u64, generator: &Generator) -> Result<Scenario> {
    if k < 1 || n <= k {
        return Err(dim_err(format!("need n > k >= 1, got n = {n}, k = {k}")));
    }
    let coords = match generator {
        Generator::UniformUnit => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Row-major draw order so a layout does not depend on storage order.
            let mut x = DMatrix::zeros(n, k);
            for i in 0..n {
                for j in 0..k {
                    x[(i, j)] = rng.random::<f64>();
                }
            }
            x
        }
        Generator::Fixed(c) => {
            if c.nrows() != n || c.ncols() != k {
                return Err(dim_err(format!(
                    "fixed coordinates are {}x{} but n = {n}, k = {k}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            c.clone()
        }
    };
    let d_true = edm_of(&LocationMap::new(coords.clone()));
    Ok(Scenario {
        n,
        k,
        coords,
        d_true,
        seed,
    })
}
