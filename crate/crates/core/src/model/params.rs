use super::Real;
use crate::error::{Error, Result};

/// One named parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<S = f64> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<S>,
}

/// Ordered collection of named parameter arrays.
///
/// Values are immutable in spirit: arithmetic returns new sets, so inner-loop
/// adaptation never touches the meta-initialization it started from.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<S = f64> {
    params: Vec<Param<S>>,
}

impl<S: Real> ParamSet<S> {
    pub fn new(params: Vec<Param<S>>) -> Result<Self> {
        for p in &params {
            let expected: usize = p.shape.iter().product();
            if expected != p.values.len() {
                return Err(Error::arg(format!(
                    "parameter {} has {} values for shape {:?}",
                    p.name,
                    p.values.len(),
                    p.shape
                )));
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&Param<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    /// Total number of scalar coordinates.
    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn same_layout<T>(&self, other: &ParamSet<T>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    fn check_layout<T>(&self, other: &ParamSet<T>) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::arg("parameter sets have different layouts"))
        }
    }

    pub fn map<T: Real>(&self, mut f: impl FnMut(S) -> T) -> ParamSet<T> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    values: p.values.iter().map(|&v| f(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn zip_map<T: Real, U: Real>(
        &self,
        other: &ParamSet<T>,
        f: impl Fn(S, T) -> U,
    ) -> Result<ParamSet<U>> {
        self.check_layout(other)?;
        Ok(ParamSet {
            params: self
                .params
                .iter()
                .zip(&other.params)
                .map(|(a, b)| Param {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    values: a.values.iter().zip(&b.values).map(|(&x, &y)| f(x, y)).collect(),
                })
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| S::zero())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v.scale(k))
    }

    /// `self + k * other`.
    pub fn axpy(&self, k: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b.scale(k))
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, &y) in a.values.iter_mut().zip(&b.values) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Value at flat coordinate `index` (parameters concatenated in order).
    pub fn get_flat(&self, index: usize) -> S {
        let (p, i) = self.locate(index);
        self.params[p].values[i]
    }

    pub fn set_flat(&mut self, index: usize, value: S) {
        let (p, i) = self.locate(index);
        self.params[p].values[i] = value;
    }

    fn locate(&self, mut index: usize) -> (usize, usize) {
        for (p, param) in self.params.iter().enumerate() {
            if index < param.values.len() {
                return (p, index);
            }
            index -= param.values.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn flat_values(&self) -> Vec<S> {
        self.params
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.values.iter().all(|v| v.value().is_finite()))
    }
}

impl ParamSet<f64> {
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self
            .params
            .iter()
            .zip(&other.params)
            .map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).unwrap_or(0.0).sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_layout(other)?;
        Ok(self
            .params
            .iter()
            .zip(&other.params)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }
}
