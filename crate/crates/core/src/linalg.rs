use ndarray::{Array1, Array2, ArrayView1, Axis};

/// `m · x`, skipping the zero entries of `x`. Codes are sparse for most of a run.
pub(crate) fn sparse_matvec(m: &Array2<f64>, x: ArrayView1<'_, f64>, out: &mut Array1<f64>) {
    out.fill(0.0);
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            out.scaled_add(xj, &m.column(j));
        }
    }
}

pub(crate) fn squared_norm(x: ArrayView1<'_, f64>) -> f64 {
    x.dot(&x)
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix.
pub(crate) fn power_iteration(m: &Array2<f64>, iterations: usize) -> f64 {
    let n = m.len_of(Axis(0));
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = m.dot(&v);
        let norm = squared_norm(w.view()).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient of the final iterate
    estimate.max(v.dot(&m.dot(&v)))
}
