use crate::error::{Error, Result};
use crate::vec3::{Vec3, ZERO};

/// Cell-centered 3-vector field on a structured grid, x index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    dims: [usize; 3],
    data: Vec<Vec3>,
}

impl VectorField {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self::uniform(dims, ZERO)
    }

    pub fn uniform(dims: [usize; 3], v: Vec3) -> Self {
        Self { dims, data: vec![v; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> Vec3) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<Vec3>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::InvalidGeometry(format!(
                "field of {} values cannot have dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: Vec3) {
        let n = self.index(i, j, k);
        self.data[n] = v;
    }

    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Vec3> {
        self.data
    }

    pub fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        if self.dims == dims {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: dims, found: self.dims })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Cellwise map into a new field.
    pub fn map(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        Self { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Cellwise combination of two fields of equal shape.
    pub fn zip_map(&self, other: &Self, f: impl Fn(Vec3, Vec3) -> Vec3) -> Self {
        assert_eq!(self.dims, other.dims);
        Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Euclidean L² norm with cell volume `dv`.
    pub fn l2_norm(&self, dv: f64) -> f64 {
        (crate::numeric::sum(self.data.iter().map(|v| crate::vec3::norm2(*v))) * dv).sqrt()
    }
}

/// Scalar samples on a structured grid, x index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Grid3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.index(i, j, k);
        self.data[n] = v;
    }

    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize, usize) {
        let [d0, d1, _] = self.dims;
        (n % d0, (n / d0) % d1, n / (d0 * d1))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |a, &x| a.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
