//! Small dense solvers: Cholesky for the regularized normal equations and a
//! symmetric eigensolver (Householder tridiagonalization + implicit QL) used
//! to obtain left singular vectors from Gram matrices.

use crate::error::{Result, SisrError};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `a`. Fails when a pivot is not safely positive.
    pub fn new(a: &Matrix<T>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(SisrError::dim("cholesky needs a square matrix"));
        }
        let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(T::zero(), T::max);
        let floor = T::epsilon() * max_diag;
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return Err(SisrError::Divergence {
                    message: format!("normal matrix is not positive definite (pivot {j})"),
                    trace: Vec::new(),
                });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower: l })
    }

    /// Solves `A X = B` for every column of `b`.
    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        let n = self.n;
        if b.rows() != n {
            return Err(SisrError::dim(format!(
                "right-hand side has {} rows, system has {n}",
                b.rows()
            )));
        }
        let m = b.cols();
        let mut x = b.clone();
        let data = x.as_mut_slice();
        // L y = b
        for i in 0..n {
            for k in 0..i {
                let lik = self.lower[i * n + k];
                if lik == T::zero() {
                    continue;
                }
                let (head, tail) = data.split_at_mut(i * m);
                for (t, &h) in tail[..m].iter_mut().zip(&head[k * m..(k + 1) * m]) {
                    *t -= lik * h;
                }
            }
            let d = self.lower[i * n + i];
            data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = self.lower[k * n + i];
                if lki == T::zero() {
                    continue;
                }
                let (head, tail) = data.split_at_mut(k * m);
                for (h, &t) in head[i * m..(i + 1) * m].iter_mut().zip(&tail[..m]) {
                    *h -= lki * t;
                }
            }
            let d = self.lower[i * n + i];
            data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
        }
        Ok(x)
    }
}

/// Tikhonov-regularized pseudoinverse `(AᵀA + εI)⁻¹Aᵀ`, computed by solving
/// the normal equations rather than inverting.
pub fn tikhonov_pinv<T: Scalar>(a: &Matrix<T>, epsilon: T) -> Result<Matrix<T>> {
    let mut normal = a.gram();
    normal.add_diagonal(epsilon);
    Cholesky::new(&normal)?.solve(&a.transpose())
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues are returned in
/// descending order with matching eigenvector columns.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(SisrError::dim("eigensolver needs a square matrix"));
    }
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let mut v: Vec<T> = a.as_slice().to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(n, &mut v, &mut d, &mut e);
    tridiagonal_ql(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    Ok((values, vectors))
}

/// Left singular vectors and singular values of `a`, from the
/// eigen-decomposition of `a·aᵀ`. Returns `min(rows, cols)` pairs in
/// descending order; each vector's first clearly nonzero entry is made
/// nonnegative so the result is deterministic.
pub fn left_singular<T: Scalar>(a: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let k = a.rows().min(a.cols());
    let (values, vectors) = symmetric_eigen(&a.outer_gram())?;
    let keep: Vec<usize> = (0..k).collect();
    let mut u = vectors.select_columns(&keep);
    fix_signs(&mut u);
    let sv = values[..k].iter().map(|&l| l.max(T::zero()).sqrt()).collect();
    Ok((u, sv))
}

/// Flips columns so the first entry above 1e-10 in magnitude is positive.
pub(crate) fn fix_signs<T: Scalar>(u: &mut Matrix<T>) {
    let tol = T::of(1e-10);
    for c in 0..u.cols() {
        let lead = (0..u.rows()).map(|r| u.get(r, c)).find(|v| v.abs() > tol);
        if lead.is_some_and(|v| v < T::zero()) {
            for r in 0..u.rows() {
                u.set(r, c, -u.get(r, c));
            }
        }
    }
}

// Householder reduction to tridiagonal form (EISPACK tred2 as restated in
// JAMA). On exit `v` holds the accumulated orthogonal transform, `d` the
// diagonal and `e` the subdiagonal in `e[1..]`.
fn tridiagonalize<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let at = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = T::zero();
                v[at(j, i)] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
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
                let f = d[j];
                v[at(j, i)] = f;
                let mut g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
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
                    v[at(k, j)] -= g * d[k];
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

// Implicit QL iterations on the tridiagonal matrix (EISPACK tql2).
fn tridiagonal_ql<T: Scalar>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    let at = |r: usize, c: usize| r * n + c;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = T::of(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let max_iter = 60 * n.max(1);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(SisrError::Divergence {
                        message: "symmetric eigensolver did not converge".into(),
                        trace: Vec::new(),
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
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
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}
