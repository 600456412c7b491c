//! BLAS-1 style vector kernels and the partitioned monolithic vector.

use crate::error::{Error, Result};

/// y <- a*x + y
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "axpy: x has length {}, y has length {}",
            x.len(),
            y.len()
        )));
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
    Ok(())
}

pub fn dot(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "dot: x has length {}, y has length {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(a, b)| a * b).sum())
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// A vector over the velocity/pressure/multiplier unknowns of one monolithic
/// system, stored contiguously in that order. The partition sizes are fixed
/// at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MonolithicVector {
    data: Vec<f64>,
    n_u: usize,
    n_p: usize,
    n_lm: usize,
}

impl MonolithicVector {
    pub fn zeros(n_u: usize, n_p: usize, n_lm: usize) -> Self {
        MonolithicVector {
            data: vec![0.0; n_u + n_p + n_lm],
            n_u,
            n_p,
            n_lm,
        }
    }

    pub fn from_parts(u: &[f64], p: &[f64], lm: &[f64]) -> Self {
        let mut data = Vec::with_capacity(u.len() + p.len() + lm.len());
        data.extend_from_slice(u);
        data.extend_from_slice(p);
        data.extend_from_slice(lm);
        MonolithicVector {
            data,
            n_u: u.len(),
            n_p: p.len(),
            n_lm: lm.len(),
        }
    }

    pub fn from_slice(data: &[f64], n_u: usize, n_p: usize, n_lm: usize) -> Result<Self> {
        if data.len() != n_u + n_p + n_lm {
            return Err(Error::Shape(format!(
                "monolithic vector: data length {} != {} + {} + {}",
                data.len(),
                n_u,
                n_p,
                n_lm
            )));
        }
        Ok(MonolithicVector {
            data: data.to_vec(),
            n_u,
            n_p,
            n_lm,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_lm(&self) -> usize {
        self.n_lm
    }

    pub fn velocity(&self) -> &[f64] {
        &self.data[..self.n_u]
    }

    pub fn pressure(&self) -> &[f64] {
        &self.data[self.n_u..self.n_u + self.n_p]
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.data[self.n_u + self.n_p..]
    }

    pub fn velocity_mut(&mut self) -> &mut [f64] {
        &mut self.data[..self.n_u]
    }

    pub fn pressure_mut(&mut self) -> &mut [f64] {
        let n_u = self.n_u;
        let n_p = self.n_p;
        &mut self.data[n_u..n_u + n_p]
    }

    pub fn multipliers_mut(&mut self) -> &mut [f64] {
        let off = self.n_u + self.n_p;
        &mut self.data[off..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}
