use crate::error::{Error, Result};
use crate::image::Image;

/// Dense `(batch, channels, height, width)` array of doubles.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::shape(format!("tensor data length {} does not match {:?}", data.len(), shape)));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn filled(shape: [usize; 4], v: f64) -> Self {
        Tensor { shape, data: vec![v; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: [1, 1, 1, 1], data: vec![v] }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks same-sized images into one batch.
    pub fn from_images(images: &[&Image]) -> Result<Tensor> {
        let first = images.first().ok_or_else(|| Error::shape("empty batch"))?;
        let shape = [images.len(), first.channels(), first.height(), first.width()];
        let mut data = Vec::with_capacity(shape.iter().product());
        for img in images {
            if !img.same_shape(first) {
                return Err(Error::shape("batch images differ in shape"));
            }
            data.extend_from_slice(img.data());
        }
        Tensor::new(shape, data)
    }

    /// Extracts batch item `n` as an image (values left as they are).
    pub fn to_image(&self, n: usize) -> Result<Image> {
        let [_, c, h, w] = self.shape;
        let len = c * h * w;
        Image::new(w, h, c, self.data[n * len..(n + 1) * len].to_vec())
    }
}
