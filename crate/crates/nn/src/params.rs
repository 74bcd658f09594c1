use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand::distr::{Distribution, Uniform};

use crate::error::{NnError, Result};
use crate::tape::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors plus the optimizer moments that belong to them.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    pub(crate) values: Vec<Mat>,
    pub(crate) m: Vec<Mat>,
    pub(crate) v: Vec<Mat>,
    index: HashMap<String, ParamId>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, value: Mat) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(NnError::DuplicateName(name.to_string()));
        }
        let id = ParamId(self.names.len());
        self.names.push(name.to_string());
        self.m.push(Mat::zeros(value.dim()));
        self.v.push(Mat::zeros(value.dim()));
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn count(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(_, n, _)| n.starts_with(prefix))
            .map(|(_, _, v)| v.len())
            .sum()
    }

    pub fn total(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Replaces values by name, checking shapes; unknown names are an error.
    pub fn load_values(&mut self, named: Vec<(String, Mat)>) -> Result<()> {
        for (name, value) in named {
            let id = self.id(&name).ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            let have = self.values[id.0].dim();
            if have != value.dim() {
                return Err(NnError::ShapeMismatch {
                    what: name,
                    expected: have,
                    got: value.dim(),
                });
            }
            self.values[id.0] = value;
        }
        Ok(())
    }
}

/// Glorot-uniform initialization.
pub fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let u = Uniform::new_inclusive(-a, a).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || u.sample(rng))
}

pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Mat {
    let u = Uniform::new_inclusive(-scale, scale).unwrap();
    Array2::from_shape_simple_fn((rows, cols), || u.sample(rng))
}
