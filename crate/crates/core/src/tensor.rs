use std::fmt;

use ndarray::{Array4, ArrayView3, Axis, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Extent of a `(batch, channel, height, width)` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Shape {
            batch,
            channels,
            height,
            width,
        }
    }

    /// Number of entries in one batch element.
    pub fn per_element(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.batch * self.per_element()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }

    pub fn with_batch(self, batch: usize) -> Self {
        Shape { batch, ..self }
    }

    pub(crate) fn check_positive(&self) -> Result<()> {
        if self.dims().iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "all extents must be positive, got {self}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

/// Real-valued `B x C x H x W` batch. Houses noisy samples, predictions and
/// reconstructions alike.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorBatch {
    data: Array4<f64>,
}

impl TensorBatch {
    pub fn new(data: Array4<f64>) -> Result<Self> {
        let batch = TensorBatch { data };
        batch.shape().check_positive()?;
        Ok(batch)
    }

    pub fn from_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        shape.check_positive()?;
        let data = Array4::from_shape_vec(shape.dims(), values)
            .map_err(|e| Error::Dimension(format!("{shape}: {e}")))?;
        Ok(TensorBatch { data })
    }

    pub fn zeros(shape: Shape) -> Self {
        TensorBatch {
            data: Array4::zeros(shape.dims()),
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        TensorBatch {
            data: Array4::from_elem(shape.dims(), value),
        }
    }

    /// Standard-normal batch; element `b` is drawn from stream
    /// `(seed, domain, tag, b)`.
    pub fn standard_normal(shape: Shape, seed: u64, domain: Domain, tag: u64) -> Self {
        let mut data = Array4::zeros(shape.dims());
        data.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(b, mut element)| {
                let mut rng = rng::stream(seed, domain, tag, b as u64);
                let slice = element
                    .as_slice_mut()
                    .expect("freshly allocated arrays are contiguous");
                rng::fill_standard_normal(&mut rng, slice);
            });
        TensorBatch { data }
    }

    pub fn shape(&self) -> Shape {
        let d = self.data.dim();
        Shape::new(d.0, d.1, d.2, d.3)
    }

    pub fn array(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn array_mut(&mut self) -> &mut Array4<f64> {
        &mut self.data
    }

    pub fn into_array(self) -> Array4<f64> {
        self.data
    }

    pub fn element(&self, b: usize) -> ArrayView3<'_, f64> {
        self.data.index_axis(Axis(0), b)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NumericDomain(format!("{what} contains NaN or Inf")))
        }
    }

    pub fn ensure_same_shape(&self, other: &TensorBatch, what: &str) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: shape {} does not match {}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn scaled(&self, k: f64) -> TensorBatch {
        TensorBatch {
            data: &self.data * k,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &TensorBatch, b: f64) -> Result<TensorBatch> {
        self.ensure_same_shape(other, "linear combination")?;
        let mut out = self.data.clone();
        Zip::from(&mut out)
            .and(&other.data)
            .for_each(|o, &y| *o = a * *o + b * y);
        Ok(TensorBatch { data: out })
    }

    pub fn mean(&self) -> f64 {
        self.data.mean().unwrap_or(0.0)
    }

    pub fn mean_square(&self) -> f64 {
        let n = self.data.len() as f64;
        self.data.iter().map(|v| v * v).sum::<f64>() / n
    }

    pub fn max_abs_diff(&self, other: &TensorBatch) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_extents() {
        assert!(matches!(
            TensorBatch::from_vec(Shape::new(0, 1, 2, 2), vec![]),
            Err(Error::Dimension(_))
        ));
        assert!(TensorBatch::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn normal_draws_do_not_depend_on_batch_size() {
        let small = TensorBatch::standard_normal(Shape::new(2, 1, 4, 4), 11, Domain::Prior, 0);
        let large = TensorBatch::standard_normal(Shape::new(5, 1, 4, 4), 11, Domain::Prior, 0);
        assert_eq!(small.element(1), large.element(1));
    }

    #[test]
    fn combine_and_stats() {
        let x = TensorBatch::filled(Shape::new(1, 1, 2, 2), 2.0);
        let y = TensorBatch::filled(Shape::new(1, 1, 2, 2), 1.0);
        let z = x.combine(0.5, &y, 3.0).unwrap();
        assert_eq!(z.mean(), 4.0);
        assert_eq!(z.mean_square(), 16.0);
        assert!(x
            .combine(1.0, &TensorBatch::zeros(Shape::new(1, 1, 2, 4)), 1.0)
            .is_err());
    }
}
