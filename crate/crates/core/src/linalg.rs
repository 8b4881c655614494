//! Small dense linear algebra.
//!
//! The kinetic model only ever needs 7×7 matrices, so those are plain arrays.
//! The least-squares solver needs tall dense matrices of modest size, handled
//! by [`DenseMatrix`] with a Householder QR.

use alloc::vec;
use alloc::vec::Vec;

/// Number of electronic levels in the kinetic model.
pub const N: usize = 7;

/// Row-major 7×7 matrix: `m[row][col]`.
pub type Mat7 = [[f64; N]; N];
pub type Vec7 = [f64; N];

pub const ZERO7: Mat7 = [[0.0; N]; N];

pub fn identity7() -> Mat7 {
    let mut m = ZERO7;
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn matmul7(a: &Mat7, b: &Mat7) -> Mat7 {
    let mut c = ZERO7;
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..N {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

pub fn matvec7(a: &Mat7, x: &Vec7) -> Vec7 {
    let mut y = [0.0; N];
    for (yi, row) in y.iter_mut().zip(a) {
        *yi = row.iter().zip(x).map(|(a, x)| a * x).sum();
    }
    y
}

pub fn scale7(a: &Mat7, s: f64) -> Mat7 {
    let mut c = *a;
    c.iter_mut().flatten().for_each(|v| *v *= s);
    c
}

fn add7(a: &Mat7, b: &Mat7, sb: f64) -> Mat7 {
    let mut c = *a;
    for i in 0..N {
        for j in 0..N {
            c[i][j] += sb * b[i][j];
        }
    }
    c
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf7(a: &Mat7) -> f64 {
    a.iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal (6,6) Padé
/// approximant.
pub fn expm7(a: &Mat7) -> Mat7 {
    // Padé(6,6) coefficients c_k = (2q-k)! q! / ((2q)! k! (q-k)!), q = 6.
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let norm = norm_inf7(a);
    let mut squarings = 0i32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as i32;
    }
    let x = scale7(a, 0.5f64.powi(squarings));

    let mut power = identity7();
    let mut num = scale7(&power, C[0]);
    let mut den = num;
    for (k, &c) in C.iter().enumerate().skip(1) {
        power = matmul7(&power, &x);
        num = add7(&num, &power, c);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        den = add7(&den, &power, sign * c);
    }
    let mut result = solve_matrix7(&den, &num).expect("Padé denominator is well conditioned after scaling");
    for _ in 0..squarings {
        result = matmul7(&result, &result);
    }
    result
}

/// exp(G·t) for a rate generator `G` (non-negative off-diagonal, columns
/// summing to zero), by uniformization and squaring.
///
/// With Λ ≥ max|G_jj| and the stochastic matrix P = I + G/Λ,
/// exp(G·τ) = Σ_k e^(−Λτ)(Λτ)^k/k!·P^k. Every term is non-negative, so each
/// entry (however small) keeps full relative accuracy, and squaring
/// non-negative matrices preserves that. Padé on the same matrix cancels the
/// small entries away, which corrupts long-time limits.
pub fn expm_generator7(g: &Mat7, t: f64) -> Mat7 {
    let lambda = (0..N).map(|j| g[j][j].abs()).fold(0.0, f64::max);
    let total = lambda * t;
    if !(total > 0.0) {
        return identity7();
    }
    let squarings = if total > 0.5 { (total / 0.5).log2().ceil() as i32 } else { 0 };
    let x = total * 0.5f64.powi(squarings);
    let mut p = ZERO7;
    for i in 0..N {
        for j in 0..N {
            p[i][j] = if i == j { (1.0 + g[i][j] / lambda).max(0.0) } else { (g[i][j] / lambda).max(0.0) };
        }
    }
    // Poisson weights for x ≤ 0.5 fall below 1e-19 by k = 16
    let mut weight = (-x).exp();
    let mut power = identity7();
    let mut result = scale7(&power, weight);
    for k in 1..=18 {
        weight *= x / k as f64;
        power = matmul7(&power, &p);
        result = add7(&result, &power, weight);
    }
    // exp(G·t) is exactly column-stochastic. A column-sum defect δ doubles
    // with every squaring, so it is removed after each one.
    normalize_columns(&mut result);
    for _ in 0..squarings {
        result = matmul7(&result, &result);
        normalize_columns(&mut result);
    }
    result
}

fn normalize_columns(m: &mut Mat7) {
    for j in 0..N {
        let s: f64 = (0..N).map(|i| m[i][j]).sum();
        if s > 0.0 {
            for row in m.iter_mut() {
                row[j] /= s;
            }
        }
    }
}

/// LU factorisation with partial pivoting of a 7×7 matrix.
#[derive(Debug, Clone)]
pub struct Lu7 {
    lu: Mat7,
    perm: [usize; N],
    min_pivot: f64,
}

impl Lu7 {
    /// Factorises `a`; returns `None` if a pivot is exactly zero.
    pub fn new(a: &Mat7) -> Option<Self> {
        let mut lu = *a;
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        let mut min_pivot = f64::INFINITY;
        for k in 0..N {
            let (p, max) = (k..N)
                .map(|i| (i, lu[i][k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if max == 0.0 {
                return None;
            }
            min_pivot = min_pivot.min(max);
            lu.swap(k, p);
            perm.swap(k, p);
            for i in (k + 1)..N {
                let f = lu[i][k] / lu[k][k];
                lu[i][k] = f;
                for j in (k + 1)..N {
                    lu[i][j] -= f * lu[k][j];
                }
            }
        }
        Some(Lu7 { lu, perm, min_pivot })
    }

    /// Smallest pivot magnitude encountered.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &Vec7) -> Vec7 {
        let mut x = [0.0; N];
        for i in 0..N {
            x[i] = b[self.perm[i]];
        }
        for i in 0..N {
            for j in 0..i {
                x[i] -= self.lu[i][j] * x[j];
            }
        }
        for i in (0..N).rev() {
            for j in (i + 1)..N {
                x[i] -= self.lu[i][j] * x[j];
            }
            x[i] /= self.lu[i][i];
        }
        x
    }
}

/// Solves `a · X = b` for a matrix right-hand side.
pub fn solve_matrix7(a: &Mat7, b: &Mat7) -> Option<Mat7> {
    let lu = Lu7::new(a)?;
    let mut x = ZERO7;
    for j in 0..N {
        let col: Vec7 = core::array::from_fn(|i| b[i][j]);
        let sol = lu.solve(&col);
        for i in 0..N {
            x[i][j] = sol[i];
        }
    }
    Some(x)
}

/// Neumaier-compensated sum, so quadrature results barely depend on node order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Column-major dense matrix used by the least-squares solver.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// `Aᵀ·v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| self.column(j).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Householder QR with column pivoting, `A·P = Q·R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// R in the upper triangle, Householder vectors below it.
    qr: DenseMatrix,
    tau: Vec<f64>,
    perm: Vec<usize>,
}

impl PivotedQr {
    pub fn new(a: &DenseMatrix) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; n.min(m)];
        let mut norms: Vec<f64> = (0..n)
            .map(|j| qr.column(j).iter().map(|v| v * v).sum::<f64>())
            .collect();
        for k in 0..n.min(m) {
            // pivot on the largest remaining column norm
            let p = (k..n)
                .max_by(|&i, &j| norms[i].partial_cmp(&norms[j]).unwrap_or(core::cmp::Ordering::Equal))
                .unwrap_or(k);
            if p != k {
                for i in 0..m {
                    let t = qr.get(i, k);
                    qr.set(i, k, qr.get(i, p));
                    qr.set(i, p, t);
                }
                norms.swap(k, p);
                perm.swap(k, p);
            }
            let alpha = (k..m).map(|i| qr.get(i, k).powi(2)).sum::<f64>().sqrt();
            if alpha == 0.0 {
                tau[k] = 0.0;
                continue;
            }
            let x0 = qr.get(k, k);
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            let v0 = x0 - beta;
            for i in (k + 1)..m {
                qr.set(i, k, qr.get(i, k) / v0);
            }
            tau[k] = (beta - x0) / beta;
            qr.set(k, k, beta);
            for j in (k + 1)..n {
                let mut s = qr.get(k, j);
                for i in (k + 1)..m {
                    s += qr.get(i, k) * qr.get(i, j);
                }
                s *= tau[k];
                qr.set(k, j, qr.get(k, j) - s);
                for i in (k + 1)..m {
                    let v = qr.get(i, j) - s * qr.get(i, k);
                    qr.set(i, j, v);
                }
                norms[j] = ((k + 1)..m).map(|i| qr.get(i, j).powi(2)).sum();
            }
        }
        PivotedQr { qr, tau, perm }
    }

    /// |R_kk| in pivot order.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|k| self.qr.get(k, k).abs()).collect()
    }

    /// Numerical rank: diagonal entries above `rel_tol·|R₀₀|`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let d = self.r_diagonal();
        let Some(&first) = d.first() else { return 0 };
        if first == 0.0 {
            return 0;
        }
        d.iter().filter(|&&v| v > rel_tol * first).count()
    }

    /// `Qᵀ·b` in place.
    fn apply_qt(&self, b: &mut [f64]) {
        let m = self.qr.rows;
        for k in 0..self.tau.len() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let mut s = b[k];
            for i in (k + 1)..m {
                s += self.qr.get(i, k) * b[i];
            }
            s *= self.tau[k];
            b[k] -= s;
            for i in (k + 1)..m {
                b[i] -= s * self.qr.get(i, k);
            }
        }
    }

    /// Least-squares solution of `A·x ≈ b`. Requires full column rank.
    pub fn solve_least_squares(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.qr.cols;
        if self.tau.len() < n {
            return None;
        }
        let mut y = b.to_vec();
        self.apply_qt(&mut y);
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.qr.get(i, j) * z[j];
            }
            let d = self.qr.get(i, i);
            if d == 0.0 {
                return None;
            }
            z[i] = s / d;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        Some(x)
    }

    /// Diagonal of `(AᵀA)⁻¹` in original column order, from R.
    pub fn inverse_gram_diagonal(&self) -> Option<Vec<f64>> {
        let n = self.qr.cols;
        if self.tau.len() < n {
            return None;
        }
        // R⁻¹ column by column; (AᵀA)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ.
        let mut rinv = vec![vec![0.0; n]; n];
        for j in 0..n {
            for i in (0..=j).rev() {
                let mut s = if i == j { 1.0 } else { 0.0 };
                for k in (i + 1)..=j {
                    s -= self.qr.get(i, k) * rinv[k][j];
                }
                let d = self.qr.get(i, i);
                if d == 0.0 {
                    return None;
                }
                rinv[i][j] = s / d;
            }
        }
        let mut out = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = rinv[k].iter().map(|v| v * v).sum();
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &Mat7, b: &Mat7) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn expm_of_diagonal() {
        let mut a = ZERO7;
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = -(i as f64) * 3.7 + 1.0;
        }
        let e = expm7(&a);
        for i in 0..N {
            let want = a[i][i].exp();
            assert!((e[i][i] / want - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn expm_two_state_generator() {
        // rates a: 0->1, b: 1->0; closed form exp(G t)
        let (a, b, t) = (3.0e6, 7.0e5, 2.3e-6);
        let mut g = ZERO7;
        g[0][0] = -a;
        g[1][0] = a;
        g[1][1] = -b;
        g[0][1] = b;
        let e = expm7(&scale7(&g, t));
        let s = a + b;
        let decay = (-s * t).exp();
        assert!((e[0][0] - (b + a * decay) / s).abs() < 1e-14);
        assert!((e[1][0] - a * (1.0 - decay) / s).abs() < 1e-14);
        assert!((e[2][2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expm_additivity_for_commuting_arguments() {
        let mut a = ZERO7;
        for i in 0..N {
            for j in 0..N {
                a[i][j] = ((i * 7 + j) as f64 * 0.37).sin();
            }
        }
        let half = expm7(&scale7(&a, 0.5));
        let full = expm7(&a);
        assert!(max_abs_diff(&matmul7(&half, &half), &full) < 1e-12 * norm_inf7(&full));
    }

    #[test]
    fn lu_solve_round_trip() {
        let mut a = ZERO7;
        for i in 0..N {
            for j in 0..N {
                a[i][j] = 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 2.0 } else { 0.0 };
            }
        }
        let x: Vec7 = core::array::from_fn(|i| i as f64 - 2.5);
        let b = matvec7(&a, &x);
        let got = Lu7::new(&a).unwrap().solve(&b);
        for i in 0..N {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn qr_least_squares_matches_line_fit() {
        // y = 2 + 3x sampled exactly
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let mut a = DenseMatrix::zeros(xs.len(), 2);
        for (i, &x) in xs.iter().enumerate() {
            a.set(i, 0, 1.0);
            a.set(i, 1, x);
        }
        let b: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let qr = PivotedQr::new(&a);
        assert_eq!(qr.rank(1e-12), 2);
        let sol = qr.solve_least_squares(&b).unwrap();
        assert!((sol[0] - 2.0).abs() < 1e-12 && (sol[1] - 3.0).abs() < 1e-12);
        let d = qr.inverse_gram_diagonal().unwrap();
        assert!(d.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn qr_detects_rank_deficiency() {
        let mut a = DenseMatrix::zeros(5, 3);
        for i in 0..5 {
            a.set(i, 0, i as f64);
            a.set(i, 1, 2.0 * i as f64);
            a.set(i, 2, 1.0);
        }
        assert_eq!(PivotedQr::new(&a).rank(1e-10), 2);
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
