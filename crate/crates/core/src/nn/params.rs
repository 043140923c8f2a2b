use rand::Rng;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Initialization rule for a new parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Centered uniform on `[-1/√fan_in, 1/√fan_in]`.
    Uniform { fan_in: usize },
    Zeros,
    /// Writes `1` at the spatial center of the `(i, i)` kernel for
    /// `i < min(out, in)`, zeros elsewhere.
    Identity,
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Adds a parameter. Values are rounded to `f32` precision so that a
    /// freshly initialized model survives a checkpoint round trip exactly.
    pub fn add<R: Rng>(&mut self, name: impl Into<String>, shape: [usize; 4], init: Init, rng: &mut R) -> ParamId {
        let n: usize = shape.iter().product();
        let mut t = Tensor::zeros(shape);
        match init {
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                for v in t.data_mut() {
                    *v = rng.gen_range(-bound..bound) as f32 as f64;
                }
            }
            Init::Zeros => {}
            Init::Identity => {
                let [o, i, kh, kw] = shape;
                for c in 0..o.min(i) {
                    t.data_mut()[((c * i + c) * kh + kh / 2) * kw + kw / 2] = 1.0;
                }
            }
        }
        debug_assert_eq!(t.len(), n);
        self.names.push(name.into());
        self.values.push(t);
        ParamId(self.values.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn zero_all(&mut self) {
        for t in &mut self.values {
            t.data_mut().fill(0.0);
        }
    }
}
