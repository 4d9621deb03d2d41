//! Small dense vector helpers with a fixed summation order.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Arithmetic mean of equally sized vectors, accumulated in input order.
pub fn mean_of<I>(vectors: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut out = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v.as_ref()) {
            *o += x;
        }
        count += 1;
    }
    if count > 0 {
        let k = count as f64;
        out.iter_mut().for_each(|o| *o /= k);
    }
    out
}
