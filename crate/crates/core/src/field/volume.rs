use super::{FieldError, Grid3, C64};

/// Complex scalar field sampled on every node of a [`Grid3`].
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeWave {
    pub grid: Grid3,
    pub values: Vec<C64>,
}

impl VolumeWave {
    pub fn new(grid: Grid3, values: Vec<C64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid3) -> Self {
        Self { grid: grid.clone(), values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn constant(grid: &Grid3, value: C64) -> Self {
        Self { grid: grid.clone(), values: vec![value; grid.len()] }
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: &Grid3, f: impl Fn([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.coord_of(idx))).collect();
        Self { grid: grid.clone(), values }
    }

    /// Incident plane wave `exp(i k x3)`.
    pub fn plane_wave(grid: &Grid3, k: f64) -> Self {
        Self::from_fn(grid, |x| C64::from_polar(1.0, k * x[2]))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> C64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Plain (unweighted) Euclidean norm of the node values.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| v * s).collect() }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: C64, other: &VolumeWave) -> Result<Self, FieldError> {
        if !self.grid.same_shape(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Elementwise map into a new field on the same grid.
    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two fields on the same grid.
    pub fn zip_with(
        &self,
        other: &VolumeWave,
        f: impl Fn(C64, C64) -> C64,
    ) -> Result<Self, FieldError> {
        if !self.grid.same_shape(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Max-norm of `self - other` over nodes selected by `keep`.
    pub fn max_diff_where(&self, other: &VolumeWave, keep: impl Fn([usize; 3]) -> bool) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .filter(|(idx, _)| keep(self.grid.node(*idx)))
            .map(|(_, (a, b))| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Dot product of two complex 3-vector fields at each node, without
/// conjugation: `a . b = a1 b1 + a2 b2 + a3 b3`.
pub(crate) fn dot3(a: &[VolumeWave; 3], b: &[VolumeWave; 3], idx: usize) -> C64 {
    a[0].values[idx] * b[0].values[idx]
        + a[1].values[idx] * b[1].values[idx]
        + a[2].values[idx] * b[2].values[idx]
}
