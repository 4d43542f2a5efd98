//! Dense row-major kernels over plain slices.
//!
//! Shapes are passed explicitly; `a` is `m x k`, `b` is `k x n` unless the
//! name says otherwise. Loops are ordered for contiguous inner access.

/// `c += a * b` with `a: m x k`, `b: k x n`, `c: m x n`.
pub fn matmul_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// `c += a^T * b` with `a: k x m`, `b: k x n`, `c: m x n`.
pub fn matmul_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], k: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += a * b^T` with `a: m x k`, `b: n x k`, `c: m x n`.
pub fn matmul_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y = A x` with `A: m x n`.
pub fn matvec(a: &[f64], x: &[f64], m: usize, n: usize) -> Vec<f64> {
    (0..m).map(|i| dot(&a[i * n..(i + 1) * n], x)).collect()
}

/// `y = A^T x` with `A: m x n`.
pub fn matvec_t(a: &[f64], x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..m {
        let xi = x[i];
        for (yv, &av) in y.iter_mut().zip(&a[i * n..(i + 1) * n]) {
            *yv += av * xi;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn kernels_agree_with_naive_product() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        let want = naive(&a, &b, m, k, n);
        let close = |x: &[f64]| x.iter().zip(&want).all(|(p, q)| (p - q).abs() < 1e-12);
        assert!(close(&matmul(&a, &b, m, k, n)));
        let mut c = vec![0.0; m * n];
        matmul_tn_acc(&transpose(&a, m, k), &b, &mut c, k, m, n);
        assert!(close(&c));
        let mut c = vec![0.0; m * n];
        matmul_nt_acc(&a, &transpose(&b, k, n), &mut c, m, k, n);
        assert!(close(&c));
        let x: Vec<f64> = (0..k).map(|i| i as f64 - 1.5).collect();
        let y = matvec(&a, &x, m, k);
        let yt = matvec_t(&transpose(&a, m, k), &x, k, m);
        assert!(y.iter().zip(&yt).all(|(p, q)| (p - q).abs() < 1e-12));
    }
}
