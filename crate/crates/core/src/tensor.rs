//! Dense multi-channel 3D tensors.

use num_traits::Float;

use crate::error::{Error, Result};

/// A `channels × D × H × W` tensor stored channel-major, W fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    channels: usize,
    dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Copy> Field<T> {
    pub fn from_vec(channels: usize, dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        let expected = channels * dims.iter().product::<usize>();
        if channels == 0 || dims.contains(&0) {
            return Err(Error::Shape(format!(
                "field shape {channels}x{dims:?} has a zero extent"
            )));
        }
        if data.len() != expected {
            return Err(Error::PayloadLength {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    pub fn filled(channels: usize, dims: [usize; 3], value: T) -> Self {
        assert!(channels > 0 && !dims.contains(&0), "zero-sized field");
        let len = channels * dims.iter().product::<usize>();
        Self {
            channels,
            dims,
            data: vec![value; len],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Voxels per channel.
    pub fn spatial_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.spatial_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.spatial_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape<U>(&self, other: &Field<U>) -> bool {
        self.channels == other.channels && self.dims == other.dims
    }

    pub fn shape_string(&self) -> String {
        format!(
            "{}x{}x{}x{}",
            self.channels, self.dims[0], self.dims[1], self.dims[2]
        )
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            channels: self.channels,
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_same_shape<U>(&self, other: &Field<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {} vs {}x{}x{}x{}",
                self.shape_string(),
                other.channels,
                other.dims[0],
                other.dims[1],
                other.dims[2]
            )))
        }
    }
}

impl<T: Float> Field<T> {
    pub fn zeros(channels: usize, dims: [usize; 3]) -> Self {
        Self::filled(channels, dims, T::zero())
    }

    pub fn add_assign(&mut self, other: &Field<T>) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let v = v.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum()
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    /// Converts element type, e.g. to run the f64 replica of an f32 network.
    pub fn cast<U: Float>(&self) -> Field<U> {
        self.map(|v| U::from(v).expect("float conversion"))
    }
}
