//! Small dense-vector helpers used throughout the crate.
//!
//! Everything is `f64` and sequential; reduction order is fixed so that
//! results are bit-for-bit reproducible on the same build.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit-normalized copy, or `None` for a zero vector.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > 0.0 {
        Some(a.iter().map(|x| x / n).collect())
    } else {
        None
    }
}

/// `acc += k * v`
pub fn add_scaled(acc: &mut [f64], v: &[f64], k: f64) {
    debug_assert_eq!(acc.len(), v.len());
    for (a, x) in acc.iter_mut().zip(v) {
        *a += k * x;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

pub fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Mean of a set of equal-length rows.
pub fn mean_rows(rows: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = rows.first()?;
    let mut acc = vec![0.0; first.len()];
    for row in rows {
        add_scaled(&mut acc, row, 1.0);
    }
    let inv = 1.0 / rows.len() as f64;
    for a in &mut acc {
        *a *= inv;
    }
    Some(acc)
}
