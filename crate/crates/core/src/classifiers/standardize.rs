use alloc::vec::Vec;

use crate::domain::{NUM_FEATURES, VECTOR_DIM};

/// Z-scores the physiological columns; availability flags pass through.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer { mean: [0.0; NUM_FEATURES], std: [1.0; NUM_FEATURES] }
    }

    /// Population mean and standard deviation per column; constant columns get σ = 1.
    pub fn fit(rows: &[[f64; VECTOR_DIM]]) -> Self {
        let mut s = Standardizer::identity();
        if rows.is_empty() {
            return s;
        }
        let n = rows.len() as f64;
        for j in 0..NUM_FEATURES {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            let std = libm::sqrt(var);
            s.mean[j] = mean;
            s.std[j] = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
        }
        s
    }

    pub fn transform(&self, row: &[f64; VECTOR_DIM]) -> [f64; VECTOR_DIM] {
        let mut out = *row;
        for j in 0..NUM_FEATURES {
            out[j] = (row[j] - self.mean[j]) / self.std[j];
        }
        out
    }

    pub fn inverse(&self, row: &[f64; VECTOR_DIM]) -> [f64; VECTOR_DIM] {
        let mut out = *row;
        for j in 0..NUM_FEATURES {
            out[j] = row[j] * self.std[j] + self.mean[j];
        }
        out
    }

    pub fn transform_all(&self, rows: &[[f64; VECTOR_DIM]]) -> Vec<[f64; VECTOR_DIM]> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    /// Maps a threshold on standardized column `j` back to raw units.
    pub fn raw_value(&self, j: usize, z: f64) -> f64 {
        if j < NUM_FEATURES {
            z * self.std[j] + self.mean[j]
        } else {
            z
        }
    }
}
