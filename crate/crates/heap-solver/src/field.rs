use crate::SolverError;

/// One scalar field on a periodic `nx` x `ny` grid, stored row-major `[y][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl Field2D {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self { nx, ny, values: vec![0.0; nx * ny] }
    }

    /// Builds a field from a function of the grid indices `(x, y)`.
    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                values.push(f(x, y));
            }
        }
        Self { nx, ny, values }
    }

    pub fn from_values(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, SolverError> {
        if values.len() != nx * ny {
            return Err(SolverError::InvalidParameter(format!(
                "value count {} does not match {}x{} grid",
                values.len(),
                nx,
                ny
            )));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &Field2D) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.nx + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.nx + x] = v;
    }

    /// Row `y` as a contiguous slice.
    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.values[y * self.nx..(y + 1) * self.nx]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += c * other`, shapes must match.
    pub fn add_scaled(&mut self, other: &Field2D, c: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> Field2D {
        Field2D {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_fn_row_major_layout() {
        let f = Field2D::from_fn(4, 2, |x, y| (y * 10 + x) as f64);
        assert_eq!(f.at(3, 0), 3.0);
        assert_eq!(f.at(0, 1), 10.0);
        assert_eq!(f.row(1), &[10.0, 11.0, 12.0, 13.0]);
    }

    #[test]
    fn add_scaled_accumulates() {
        let mut a = Field2D::zeros(4, 4);
        let b = Field2D::from_fn(4, 4, |x, _| x as f64);
        a.add_scaled(&b, 0.5);
        assert_eq!(a.at(2, 3), 1.0);
    }

    #[test]
    fn from_values_rejects_bad_length() {
        assert!(Field2D::from_values(4, 4, vec![0.0; 15]).is_err());
    }
}
