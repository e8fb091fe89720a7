use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::kernels;
use crate::error::{Error, Result};

/// Frozen random Fourier feature map `x ↦ [sin(2π·B·x), cos(2π·B·x)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMap {
    freq: Arc<Array2<f64>>,
}

impl FourierMap {
    pub fn new(freq: Array2<f64>) -> Self {
        Self { freq: Arc::new(freq) }
    }

    /// `rows × input_dim` frequencies drawn from `N(0, scale²)`.
    pub fn gaussian(rows: usize, input_dim: usize, scale: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(0.0, scale).map_err(|e| Error::config(format!("fourier scale: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freq = Array2::from_shape_simple_fn((rows, input_dim), || normal.sample(&mut rng));
        Ok(Self::new(freq))
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.freq
    }

    pub fn shared_matrix(&self) -> Arc<Array2<f64>> {
        Arc::clone(&self.freq)
    }

    pub fn input_dim(&self) -> usize {
        self.freq.ncols()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.freq.nrows()
    }

    pub fn apply_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "fourier features: input has {} entries, B has {} columns",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(kernels::fourier_lift(x, self.freq.view()))
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::shape(e.to_string()))?;
        Ok(self.apply_batch(view)?.row(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn zero_input() {
        let map = FourierMap::gaussian(8, 3, 1.0, 5).unwrap();
        let out = map.apply(&[0.0; 3]).unwrap();
        assert_eq!(out.len(), 16);
        assert!(out[..8].iter().all(|&s| s == 0.0));
        assert!(out[8..].iter().all(|&c| c == 1.0));
    }

    #[test]
    fn dimension_mismatch() {
        let map = FourierMap::gaussian(4, 2, 1.0, 5).unwrap();
        assert!(matches!(map.apply(&[1.0, 2.0, 3.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn integer_frequencies_are_period_one() {
        let map = FourierMap::new(array![[1.0, -2.0], [3.0, 0.0], [0.0, 5.0]]);
        let a = map.apply(&[0.37, -0.81]).unwrap();
        let b = map.apply(&[1.37, 0.19]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn bounded(x in proptest::collection::vec(-50.0f64..50.0, 3), seed in 0u64..1000) {
            let map = FourierMap::gaussian(6, 3, 1.0, seed).unwrap();
            for v in map.apply(&x).unwrap() {
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }
}
