//! Location maps: coordinates read off a Gram estimate, and their alignment
//! to a reference frame.
//!
//! Distances determine positions only up to a rigid motion (rotation,
//! reflection, translation). [`align`] removes that gauge with an orthogonal
//! Procrustes fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::manifold::ManifoldPoint;
use crate::matrix_ops::SymmetricMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Arbitrary,
    Aligned,
}

/// `n` node positions in `k` dimensions, one node per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationMap {
    pub coords: DMatrix<f64>,
    pub frame: Frame,
}

impl LocationMap {
    pub fn new(coords: DMatrix<f64>) -> Self {
        Self {
            coords,
            frame: Frame::Arbitrary,
        }
    }

    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    pub fn k(&self) -> usize {
        self.coords.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<LocationMap> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(dim_err(format!("node index {bad} out of range for n = {}", self.n())));
        }
        Ok(LocationMap {
            coords: self.coords.select_rows(indices),
            frame: self.frame,
        })
    }
}

/// Rigid motion `x ↦ R x + t` fitted by [`align`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Orthogonal `k x k`; determinant may be -1.
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
    /// `sqrt(mean ‖x̂_i - x_i‖²)` over the fitted nodes, after alignment.
    pub rmse_position: f64,
}

impl AlignmentResult {
    /// Applies the motion to every row of `coords`.
    pub fn apply(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = coords * self.rotation.transpose();
        for mut row in out.row_iter_mut() {
            row += self.translation.transpose();
        }
        out
    }
}

/// `X̂ = Q Λ^{1/2}`.
pub fn extract_coordinates(y: &ManifoldPoint) -> LocationMap {
    LocationMap::new(y.factor())
}

/// Squared-distance matrix of a map.
pub fn edm_of(map: &LocationMap) -> SymmetricMatrix {
    let x = &map.coords;
    SymmetricMatrix::from_upper_fn(map.n(), |i, j| {
        if i == j {
            0.0
        } else {
            (x.row(i) - x.row(j)).norm_squared()
        }
    })
}

fn centroid(x: &DMatrix<f64>) -> DVector<f64> {
    x.row_mean().transpose()
}

fn centered(x: &DMatrix<f64>, c: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        row -= c.transpose();
    }
    out
}

fn rmse(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    ((a - b).norm_squared() / a.nrows() as f64).sqrt()
}

/// Fits `R, t` minimizing `Σ ‖R x_i + t - y_i‖²` over orthogonal `R`.
fn fit_rigid(est: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<AlignmentResult> {
    let k = reference.ncols();
    let c_est = centroid(est);
    let c_ref = centroid(reference);
    let est_c = centered(est, &c_est);
    let ref_c = centered(reference, &c_ref);

    let ref_sv = ref_c.clone().singular_values();
    let smax = ref_sv.max();
    let smin = ref_sv.min();
    if reference.nrows() <= k || !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::DegenerateReference(format!(
            "reference points span fewer than {k} dimensions"
        )));
    }

    let h = est_c.transpose() * ref_c;
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::NumericalFailure("SVD produced no U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::NumericalFailure("SVD produced no Vᵀ".into()))?;
    let rotation = v_t.transpose() * u.transpose();
    let translation = &c_ref - &rotation * &c_est;
    let mut fit = AlignmentResult {
        rotation,
        translation,
        rmse_position: 0.0,
    };
    fit.rmse_position = rmse(&fit.apply(est), reference);
    Ok(fit)
}

/// Aligns `est` onto `reference` by an orthogonal map plus translation.
pub fn align(est: &LocationMap, reference: &LocationMap) -> Result<(LocationMap, AlignmentResult)> {
    if est.n() != reference.n() || est.k() != reference.k() {
        return Err(dim_err(format!(
            "estimate is {}x{} but reference is {}x{}",
            est.n(),
            est.k(),
            reference.n(),
            reference.k()
        )));
    }
    let fit = fit_rigid(&est.coords, &reference.coords)?;
    let aligned = LocationMap {
        coords: fit.apply(&est.coords),
        frame: Frame::Aligned,
    };
    Ok((aligned, fit))
}

/// Fits the motion on anchor nodes only and applies it to the whole map.
/// `anchor_coords` row `a` is the known position of node `anchors[a]`.
pub fn align_to_anchors(
    est: &LocationMap,
    anchors: &[usize],
    anchor_coords: &LocationMap,
) -> Result<(LocationMap, AlignmentResult)> {
    if anchors.len() != anchor_coords.n() || est.k() != anchor_coords.k() {
        return Err(dim_err(format!(
            "{} anchor indices but {} anchor positions of dimension {} (estimate dimension {})",
            anchors.len(),
            anchor_coords.n(),
            anchor_coords.k(),
            est.k()
        )));
    }
    let est_anchors = est.select(anchors)?;
    let fit = fit_rigid(&est_anchors.coords, &anchor_coords.coords)?;
    let aligned = LocationMap {
        coords: fit.apply(&est.coords),
        frame: Frame::Aligned,
    };
    Ok((aligned, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_ops::edm_from_gram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn five_node() -> LocationMap {
        LocationMap::new(DMatrix::from_row_slice(
            5,
            2,
            &[7.0, 9.0, 2.0, 7.0, 11.0, 7.0, 12.0, 4.0, 15.0, 6.0],
        ))
    }

    fn rot2(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn moved(map: &LocationMap, r: &DMatrix<f64>, t: &[f64]) -> LocationMap {
        let fit = AlignmentResult {
            rotation: r.clone(),
            translation: DVector::from_column_slice(t),
            rmse_position: 0.0,
        };
        LocationMap::new(fit.apply(&map.coords))
    }

    #[test]
    fn edm_of_small_maps() {
        let single = LocationMap::new(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]));
        assert_eq!(edm_of(&single), SymmetricMatrix::zeros(1));
        assert_eq!(edm_of(&five_node())[(0, 1)], 29.0);
        let m = five_node();
        let via_gram = edm_from_gram(&SymmetricMatrix::new(&m.coords * m.coords.transpose()).unwrap());
        assert!(via_gram.sub(&edm_of(&m)).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn align_undoes_rotation_and_shift() {
        let est = moved(&five_node(), &rot2(std::f64::consts::FRAC_PI_2), &[3.0, -8.0]);
        let (aligned, fit) = align(&est, &five_node()).unwrap();
        assert!(fit.rmse_position <= 1e-10);
        assert_eq!(aligned.frame, Frame::Aligned);
        let rtr = fit.rotation.transpose() * &fit.rotation;
        assert!((rtr - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn align_undoes_reflection() {
        let flip = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let est = moved(&five_node(), &flip, &[0.5, 0.5]);
        let (_, fit) = align(&est, &five_node()).unwrap();
        assert!(fit.rmse_position <= 1e-10);
        assert!(fit.rotation.determinant() < 0.0);
    }

    #[test]
    fn align_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reference = LocationMap::new(DMatrix::from_fn(12, 3, |_, _| rng.random::<f64>()));
        let noisy = LocationMap::new(reference.coords.map(|v| v + 0.05 * rng.random_range(-1.0..1.0)));
        let (once, fit1) = align(&noisy, &reference).unwrap();
        let (_, fit2) = align(&once, &reference).unwrap();
        assert!((fit1.rmse_position - fit2.rmse_position).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_reference_is_rejected() {
        let collinear = LocationMap::new(DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]));
        assert!(matches!(
            align(&collinear, &collinear),
            Err(Error::DegenerateReference(_))
        ));
        let other = LocationMap::new(DMatrix::zeros(4, 2));
        assert!(matches!(align(&other, &collinear), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn anchors_carry_the_whole_map() {
        let est = moved(&five_node(), &rot2(0.7), &[-2.0, 1.0]);
        let anchors = [0, 2, 4];
        let anchor_pos = five_node().select(&anchors).unwrap();
        let (aligned, fit) = align_to_anchors(&est, &anchors, &anchor_pos).unwrap();
        assert!(fit.rmse_position < 1e-10);
        assert!((&aligned.coords - &five_node().coords).amax() < 1e-10);
        assert!(align_to_anchors(&est, &[0, 9], &five_node().select(&[0, 1]).unwrap()).is_err());
    }

    #[test]
    fn extract_single_column() {
        let q = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let y = ManifoldPoint::new(q.clone(), DVector::from_vec(vec![4.0])).unwrap();
        let map = extract_coordinates(&y);
        assert!((&map.coords - q * 2.0).amax() < 1e-15);
        assert_eq!(map.frame, Frame::Arbitrary);
    }

    #[test]
    fn extract_recovers_orthogonal_columns_up_to_sign() {
        // Orthogonal columns with descending norms.
        let x = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0, -1.0]);
        let y = ManifoldPoint::from_factor(&x).unwrap();
        let map = extract_coordinates(&y);
        for j in 0..2 {
            let col = map.coords.column(j);
            let want = x.column(j);
            let same = (col - want).amax();
            let flipped = (col + want).amax();
            assert!(same.min(flipped) < 1e-12);
        }
    }

    #[test]
    fn extracted_coords_reproduce_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = DMatrix::from_fn(10, 3, |_, _| rng.random::<f64>());
        let y = ManifoldPoint::from_factor(&x).unwrap();
        let map = extract_coordinates(&y);
        let gram = SymmetricMatrix::new(&map.coords * map.coords.transpose()).unwrap();
        assert!(gram.sub(&y.to_ambient()).unwrap().frobenius_norm() < 1e-10);
        let a = edm_from_gram(&gram);
        let b = edm_from_gram(&y.to_ambient());
        assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-10);
    }

    #[test]
    fn distances_are_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let map = LocationMap::new(DMatrix::from_fn(8, 2, |_, _| rng.random::<f64>()));
        let other = moved(&map, &rot2(1.3), &[5.0, -2.0]);
        assert!(edm_of(&map).sub(&edm_of(&other)).unwrap().frobenius_norm() < 1e-10);
    }
}
