//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit QL with Wilkinson shifts (the EISPACK `tred2`/`tql2` pair).
//!
//! Matrices are row-major `n * n` slices. Eigenvectors are returned as the
//! columns of a row-major matrix, eigenvalues ascending.

use crate::scalar::Scalar;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub n: usize,
    pub values: Vec<T>,
    /// Row-major; column `j` is the eigenvector of `values[j]`.
    pub vectors: Vec<T>,
}

impl<T: Scalar> SymmetricEigen<T> {
    pub fn vector(&self, j: usize) -> Vec<T> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}

/// Full eigen-decomposition of the symmetric `n * n` matrix `a`.
pub fn symmetric_eigen<T: Scalar>(a: &[T], n: usize) -> SymmetricEigen<T> {
    assert_eq!(a.len(), n * n, "matrix must be n*n");
    if n == 0 {
        return SymmetricEigen {
            n,
            values: vec![],
            vectors: vec![],
        };
    }
    let mut v = a.to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e, n);
    // tred2 leaves the subdiagonal in e[1..]; tql2 wants it in e[..n-1].
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    tql2(&mut d, &mut e, &mut v, n, n);
    sort_pairs(d, v, n, n)
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (`off[i]` couples `i` and `i + 1`).
pub fn tridiagonal_eigen<T: Scalar>(diag: &[T], off: &[T]) -> SymmetricEigen<T> {
    let n = diag.len();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let (d, e) = tridiagonal_work(diag, off);
    let mut d = d;
    let mut e = e;
    tql2(&mut d, &mut e, &mut v, n, n);
    sort_pairs(d, v, n, n)
}

/// Eigenvalues of a symmetric tridiagonal matrix together with the last
/// component of each normalized eigenvector (the Lanczos residual factors).
/// Both are returned in ascending eigenvalue order.
pub fn tridiagonal_eigen_last_row<T: Scalar>(diag: &[T], off: &[T]) -> (Vec<T>, Vec<T>) {
    let n = diag.len();
    let mut row = vec![T::zero(); n];
    if n > 0 {
        row[n - 1] = T::one();
    }
    let (mut d, mut e) = tridiagonal_work(diag, off);
    tql2(&mut d, &mut e, &mut row, 1, n);
    let sorted = sort_pairs(d, row, 1, n);
    (sorted.values, sorted.vectors)
}

fn tridiagonal_work<T: Scalar>(diag: &[T], off: &[T]) -> (Vec<T>, Vec<T>) {
    let n = diag.len();
    let mut e = vec![T::zero(); n];
    let m = n.saturating_sub(1);
    e[..m].copy_from_slice(&off[..m]);
    (diag.to_vec(), e)
}

fn sort_pairs<T: Scalar>(d: Vec<T>, v: Vec<T>, rows: usize, n: usize) -> SymmetricEigen<T> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("finite eigenvalues").then(a.cmp(&b)));
    let values = order.iter().map(|&j| d[j]).collect();
    let mut vectors = vec![T::zero(); rows * n];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..rows {
            vectors[r * n + new] = v[r * n + old];
        }
    }
    SymmetricEigen { n, values, vectors }
}

#[allow(clippy::needless_range_loop)]
fn tred2<T: Scalar>(v: &mut [T], d: &mut [T], e: &mut [T], n: usize) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = T::zero();
                v[at(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[at(k, j)] -= upd;
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n.saturating_sub(1) {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[at(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = T::zero();
    }
    v[at(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// Implicit QL on the tridiagonal `(d, e)`; rotations are applied to the
/// `rows * n` row-major matrix `v`.
fn tql2<T: Scalar>(d: &mut [T], e: &mut [T], v: &mut [T], rows: usize, n: usize) {
    if n == 0 {
        return;
    }
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::of(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..rows {
                        let hk = v[k * n + i + 1];
                        let vi = v[k * n + i];
                        v[k * n + i + 1] = s * vi + c * hk;
                        v[k * n + i] = c * vi - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iterations >= 64 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(a: &[f64], n: usize, eig: &SymmetricEigen<f64>, j: usize) -> f64 {
        let v = eig.vector(j);
        (0..n)
            .map(|i| {
                let av: f64 = (0..n).map(|k| a[i * n + k] * v[k]).sum();
                (av - eig.values[j] * v[i]).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn random_symmetric_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 3, 7, 20, 45] {
            let mut a = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let x: f64 = rng.random_range(-1.0..1.0);
                    a[i * n + j] = x;
                    a[j * n + i] = x;
                }
            }
            let eig = symmetric_eigen(&a, n);
            let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
            assert!((eig.values.iter().sum::<f64>() - trace).abs() < 1e-10);
            for j in 0..n {
                assert!(residual(&a, n, &eig, j) < 1e-11, "n={n} j={j}");
                if j > 0 {
                    assert!(eig.values[j - 1] <= eig.values[j]);
                }
                for l in 0..n {
                    let dot: f64 = eig.vector(j).iter().zip(eig.vector(l)).map(|(x, y)| x * y).sum();
                    let want = if j == l { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let diag: [f64; 4] = [2.0, -1.0, 0.5, 3.0];
        let off: [f64; 3] = [1.0, 0.25, -2.0];
        let mut a = vec![0.0; 16];
        for i in 0..4 {
            a[i * 4 + i] = diag[i];
        }
        for i in 0..3 {
            a[i * 4 + i + 1] = off[i];
            a[(i + 1) * 4 + i] = off[i];
        }
        let dense = symmetric_eigen(&a, 4);
        let tri = tridiagonal_eigen(&diag, &off);
        let (vals, last) = tridiagonal_eigen_last_row(&diag, &off);
        for j in 0..4 {
            assert!((dense.values[j] - tri.values[j]).abs() < 1e-12);
            assert!((vals[j] - tri.values[j]).abs() < 1e-12);
            assert!((last[j].abs() - tri.vectors[3 * 4 + j].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_runs() {
        let a: Vec<f32> = vec![2.0, 1.0, 1.0, 2.0];
        let eig = symmetric_eigen(&a, 2);
        assert!((eig.values[0] - 1.0).abs() < 1e-6);
        assert!((eig.values[1] - 3.0).abs() < 1e-6);
    }
}
