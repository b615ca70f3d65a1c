use crate::error::{GcfError, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    RowMean,
    ColMean,
    Sum,
    L1,
}

/// Output of [`reduce`]: per-row / per-column vectors or a single scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum Reduced {
    Vector(Vec<f64>),
    Scalar(f64),
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[inline]
pub fn relu(t: f64) -> f64 {
    t.max(0.0)
}

/// Numerically stable softmax of one vector (max-subtracted).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax applied independently to every row.
pub fn row_softmax(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let s = softmax(x.row(r));
        out.row_mut(r).copy_from_slice(&s);
    }
    out
}

pub fn elementwise(x: &Matrix, kind: Activation) -> Matrix {
    match kind {
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Relu => x.map(relu),
    }
}

pub fn row_means(x: &Matrix) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(GcfError::Empty("row_mean"));
    }
    let n = x.cols() as f64;
    Ok((0..x.rows()).map(|r| x.row(r).iter().sum::<f64>() / n).collect())
}

pub fn col_means(x: &Matrix) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(GcfError::Empty("col_mean"));
    }
    let mut acc = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (a, &v) in acc.iter_mut().zip(x.row(r)) {
            *a += v;
        }
    }
    let n = x.rows() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

pub fn reduce(x: &Matrix, kind: Reduction) -> Result<Reduced> {
    if x.is_empty() {
        return Err(GcfError::Empty(match kind {
            Reduction::RowMean => "row_mean",
            Reduction::ColMean => "col_mean",
            Reduction::Sum => "sum",
            Reduction::L1 => "l1",
        }));
    }
    Ok(match kind {
        Reduction::RowMean => Reduced::Vector(row_means(x)?),
        Reduction::ColMean => Reduced::Vector(col_means(x)?),
        Reduction::Sum => Reduced::Scalar(x.as_slice().iter().sum()),
        Reduction::L1 => Reduced::Scalar(x.as_slice().iter().map(|v| v.abs()).sum()),
    })
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}
