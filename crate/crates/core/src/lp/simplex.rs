//! Dense revised simplex for `max c.x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! Starts from the all-slack basis, keeps an explicit basis inverse and
//! uses Bland's rule, so it terminates on degenerate problems.

use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub max_iterations: usize,
    /// Reduced costs above this value are considered improving.
    pub optimality_tol: f64,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: f64,
    /// Rebuild the basis inverse from scratch every this many pivots.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_iterations: 100_000, optimality_tol: 1e-9, pivot_tol: 1e-9, refactor_every: 64 }
    }
}

struct State<'a> {
    a: &'a [Vec<f64>],
    b: &'a [f64],
    m: usize,
    n: usize,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
}

impl State<'_> {
    /// Column `j` of `[A | I]`.
    fn column(&self, j: usize) -> Vec<f64> {
        if j < self.n {
            (0..self.m).map(|r| self.a[r][j]).collect()
        } else {
            let mut e = vec![0.0; self.m];
            e[j - self.n] = 1.0;
            e
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut mat: Vec<Vec<f64>> = vec![vec![0.0; 2 * m]; m];
        for (k, &j) in self.basis.iter().enumerate() {
            for (r, v) in self.column(j).into_iter().enumerate() {
                mat[r][k] = v;
            }
        }
        for (r, row) in mat.iter_mut().enumerate() {
            row[m + r] = 1.0;
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))
                .unwrap_or(col);
            if mat[piv][col].abs() < 1e-12 {
                return Err(Error::Solver("singular basis during refactorization".into()));
            }
            mat.swap(col, piv);
            let d = mat[col][col];
            mat[col].iter_mut().for_each(|v| *v /= d);
            for r in 0..m {
                if r != col && mat[r][col] != 0.0 {
                    let f = mat[r][col];
                    let (src, dst) = if r < col {
                        let (lo, hi) = mat.split_at_mut(col);
                        (&hi[0], &mut lo[r])
                    } else {
                        let (lo, hi) = mat.split_at_mut(r);
                        (&lo[col], &mut hi[0])
                    };
                    for (dv, sv) in dst.iter_mut().zip(src.iter()) {
                        *dv -= f * sv;
                    }
                }
            }
        }
        self.binv = mat.into_iter().map(|row| row[m..].to_vec()).collect();
        self.xb = self.binv.iter().map(|row| row.iter().zip(self.b).map(|(x, y)| x * y).sum()).collect();
        Ok(())
    }
}

/// Returns an optimal `x` (structural variables only).
pub(crate) fn maximize(a: &[Vec<f64>], b: &[f64], c: &[f64], opts: &SimplexOptions) -> Result<Vec<f64>> {
    let m = b.len();
    let n = c.len();
    if a.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Solver("constraint matrix has inconsistent dimensions".into()));
    }
    if b.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("right-hand sides must be finite and non-negative".into()));
    }
    let mut st = State {
        a,
        b,
        m,
        n,
        basis: (n..n + m).collect(),
        binv: (0..m).map(|r| (0..m).map(|k| if r == k { 1.0 } else { 0.0 }).collect()).collect(),
        xb: b.to_vec(),
    };
    let cost = |j: usize| if j < n { c[j] } else { 0.0 };
    let mut in_basis = vec![false; n + m];
    for &j in &st.basis {
        in_basis[j] = true;
    }

    for iter in 0..opts.max_iterations {
        if iter > 0 && iter % opts.refactor_every == 0 {
            st.refactor()?;
        }
        // duals: pi = c_B B^-1
        let mut pi = vec![0.0; m];
        for (r, &j) in st.basis.iter().enumerate() {
            let cj = cost(j);
            if cj != 0.0 {
                for (p, v) in pi.iter_mut().zip(&st.binv[r]) {
                    *p += cj * v;
                }
            }
        }
        let entering = (0..n + m).find(|&j| {
            if in_basis[j] {
                return false;
            }
            let d = if j < n { c[j] - (0..m).map(|r| pi[r] * a[r][j]).sum::<f64>() } else { -pi[j - n] };
            d > opts.optimality_tol
        });
        let Some(enter) = entering else {
            st.refactor()?;
            let mut x = vec![0.0; n];
            for (r, &j) in st.basis.iter().enumerate() {
                if j < n {
                    x[j] = st.xb[r].max(0.0);
                }
            }
            return Ok(x);
        };

        let col = st.column(enter);
        let u: Vec<f64> = st.binv.iter().map(|row| row.iter().zip(&col).map(|(x, y)| x * y).sum()).collect();
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if u[r] > opts.pivot_tol {
                let ratio = st.xb[r].max(0.0) / u[r];
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, best)) => {
                        if ratio < best - 1e-12 || (ratio <= best + 1e-12 && st.basis[r] < st.basis[lr]) {
                            Some((r, ratio.min(best)))
                        } else {
                            Some((lr, best))
                        }
                    }
                };
            }
        }
        let Some((lr, _)) = leave else {
            return Err(Error::Solver("problem is unbounded".into()));
        };

        let piv = u[lr];
        let theta = st.xb[lr].max(0.0) / piv;
        for r in 0..m {
            if r != lr {
                st.xb[r] -= theta * u[r];
            }
        }
        st.xb[lr] = theta;
        let pivot_row: Vec<f64> = st.binv[lr].iter().map(|v| v / piv).collect();
        for r in 0..m {
            if r != lr && u[r] != 0.0 {
                let f = u[r];
                for (dv, sv) in st.binv[r].iter_mut().zip(&pivot_row) {
                    *dv -= f * sv;
                }
            }
        }
        st.binv[lr] = pivot_row;
        in_basis[st.basis[lr]] = false;
        in_basis[enter] = true;
        st.basis[lr] = enter;
    }
    Err(Error::Solver(format!("iteration limit {} reached", opts.max_iterations)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Vec<f64> {
        maximize(&a, &b, &c, &SimplexOptions::default()).unwrap()
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let x = solve(vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]], vec![4.0, 12.0, 18.0], vec![3.0, 5.0]);
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_detected() {
        let err = maximize(&[vec![1.0, -1.0]], &[1.0], &[0.0, 1.0], &SimplexOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Solver(ref m) if m.contains("unbounded")));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example under the largest-coefficient rule
        let a = vec![
            vec![0.5, -5.5, -2.5, 9.0],
            vec![0.5, -1.5, -0.5, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ];
        let x = solve(a, vec![0.0, 0.0, 1.0], vec![10.0, -57.0, -9.0, -24.0]);
        let obj = 10.0 * x[0] - 57.0 * x[1] - 9.0 * x[2] - 24.0 * x[3];
        assert!((obj - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let opts = SimplexOptions { max_iterations: 1, ..Default::default() };
        let r = maximize(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0], &[1.0, 1.0], &opts);
        assert!(matches!(r, Err(Error::Solver(_))));
    }

    #[test]
    fn frequent_refactorization_agrees() {
        let a = vec![vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0]];
        let b = vec![4.0, 5.0, 6.0];
        let c = vec![1.0, 2.0, 3.0];
        let x1 = solve(a.clone(), b.clone(), c.clone());
        let x2 = maximize(&a, &b, &c, &SimplexOptions { refactor_every: 1, ..Default::default() }).unwrap();
        let obj = |x: &[f64]| x.iter().zip(&c).map(|(p, q)| p * q).sum::<f64>();
        assert!((obj(&x1) - obj(&x2)).abs() < 1e-12);
    }
}
