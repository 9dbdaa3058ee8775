//! Small dense helpers over row-major `f64` slices.

/// Dot product with four independent accumulators; summation order is fixed.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `X Xᵀ` for `n` rows of length `d`.
pub fn gram(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        let xi = &data[i * d..(i + 1) * d];
        for j in 0..=i {
            let v = dot(xi, &data[j * d..(j + 1) * d]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Lower Cholesky factor of a symmetric positive definite `n × n` matrix.
/// Fails when a pivot is not above `1e-12 × max diagonal`.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    if max_diag.is_nan() || max_diag <= 0.0 {
        return None;
    }
    let floor = 1e-12 * max_diag;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = j * n;
        let pivot = a[row_j + j] - dot(&l[row_j..row_j + j], &l[row_j..row_j + j]);
        if pivot.is_nan() || pivot <= floor {
            return None;
        }
        let ljj = pivot.sqrt();
        l[row_j + j] = ljj;
        for i in j + 1..n {
            let row_i = i * n;
            let s = a[row_i + j] - dot(&l[row_i..row_i + j], &l[row_j..row_j + j]);
            l[row_i + j] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` in place given the lower factor.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s = b[i] - dot(&l[i * n..i * n + i], &b[..i]);
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
