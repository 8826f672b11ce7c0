//! Dense vector helpers over plain `f64` slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += c * x
pub fn axpy(y: &mut [f64], c: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn scale(v: &mut [f64], c: f64) {
    for vi in v.iter_mut() {
        *vi *= c;
    }
}

/// Unit-normalized copy, or None when the norm is numerically zero.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n <= 1e-300 {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}
