//! Compact masked 5-point (3-point in 1-d) operator `-Δ_h + μ` and a Jacobi
//! preconditioned conjugate gradient solver for it.
//!
//! Only the active cells are unknowns. A face shared with an inactive cell
//! sees the ghost value 0 at that cell's centre; a face on `∂D` sees the
//! mirrored ghost `-u`, which puts the zero value on the wall itself.

use serde::{Deserialize, Serialize};

use crate::grid::GridSpec;
use crate::scalar::Real;

pub(crate) const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SolveReport<T> {
    pub iterations: usize,
    /// Relative `ℓ²` residual `‖b − Ax‖ / ‖b‖` of the returned iterate.
    pub residual: T,
    pub converged: bool,
}

impl<T: Real> SolveReport<T> {
    pub(crate) fn trivial() -> Self {
        Self {
            iterations: 0,
            residual: T::zero(),
            converged: true,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MaskedOperator<T> {
    grid: GridSpec<T>,
    cells: Vec<usize>,
    nbrs: Vec<[u32; 4]>,
    diag: Vec<T>,
    inv_h2: T,
}

impl<T: Real> MaskedOperator<T> {
    /// `shift(k)` returns `Some(μ_k)` for an active cell and `None` for an eliminated one.
    pub fn new(grid: GridSpec<T>, shift: impl Fn(usize) -> Option<T>) -> Self {
        let total = grid.cell_count();
        let mut compact = vec![NONE; total];
        let mut cells = Vec::new();
        let mut shifts = Vec::new();
        for (k, slot) in compact.iter_mut().enumerate() {
            if let Some(m) = shift(k) {
                *slot = cells.len() as u32;
                cells.push(k);
                shifts.push(m);
            }
        }
        let inv_h2 = (grid.h() * grid.h()).recip();
        let width = grid.stencil_width();
        let mut nbrs = Vec::with_capacity(cells.len());
        let mut diag = Vec::with_capacity(cells.len());
        for (&k, &m) in cells.iter().zip(&shifts) {
            let mut row = [NONE; 4];
            let mut weight = 0usize;
            for (slot, nb) in grid.neighbors(k)[..width].iter().enumerate() {
                match nb {
                    Some(nb) => {
                        weight += 1;
                        row[slot] = compact[*nb];
                    }
                    None => weight += 2,
                }
            }
            nbrs.push(row);
            diag.push(T::from_usize_lossy(weight) * inv_h2 + m);
        }
        Self {
            grid,
            cells,
            nbrs,
            diag,
            inv_h2,
        }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Compact neighbour indices of row `i` (`u32::MAX` for a ghost).
    #[inline]
    pub fn row(&self, i: usize) -> &[u32; 4] {
        &self.nbrs[i]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> T {
        self.diag[i]
    }

    #[inline]
    pub fn inv_h2(&self) -> T {
        self.inv_h2
    }

    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, (row, &dg)) in self.nbrs.iter().zip(&self.diag).enumerate() {
            let mut off = T::zero();
            for &j in row {
                if j != NONE {
                    off += x[j as usize];
                }
            }
            y[i] = dg * x[i] - self.inv_h2 * off;
        }
    }

    pub fn gather(&self, full: &[T]) -> Vec<T> {
        self.cells.iter().map(|&k| full[k]).collect()
    }

    pub fn scatter(&self, compact: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.grid.cell_count()];
        for (&k, &v) in self.cells.iter().zip(compact) {
            full[k] = v;
        }
        full
    }

    /// Solves `A x = b` to relative residual `tol`, starting from `x` (updated in place).
    pub fn solve(&self, b: &[T], x: &mut [T], tol: T, max_iter: usize) -> SolveReport<T> {
        let n = self.size();
        if n == 0 {
            return SolveReport::trivial();
        }
        let b_norm = norm(b);
        if b_norm == T::zero() {
            x.iter_mut().for_each(|v| *v = T::zero());
            return SolveReport::trivial();
        }
        let mut r = vec![T::zero(); n];
        let mut z = vec![T::zero(); n];
        let mut p = vec![T::zero(); n];
        let mut q = vec![T::zero(); n];
        let mut iterations = 0;
        // A few restarts guard against drift between the recursive and true residuals.
        for _restart in 0..4 {
            self.apply(x, &mut q);
            for i in 0..n {
                r[i] = b[i] - q[i];
            }
            let true_res = norm(&r) / b_norm;
            if true_res <= tol {
                return SolveReport {
                    iterations,
                    residual: true_res,
                    converged: true,
                };
            }
            if iterations >= max_iter {
                return SolveReport {
                    iterations,
                    residual: true_res,
                    converged: false,
                };
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            p.copy_from_slice(&z);
            let mut rz = dot(&r, &z);
            while iterations < max_iter {
                iterations += 1;
                self.apply(&p, &mut q);
                let pq = dot(&p, &q);
                if !(pq > T::zero()) {
                    break;
                }
                let alpha = rz / pq;
                for i in 0..n {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * q[i];
                }
                if norm(&r) / b_norm <= tol {
                    break;
                }
                for i in 0..n {
                    z[i] = r[i] / self.diag[i];
                }
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..n {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
        self.apply(x, &mut q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        let residual = norm(&r) / b_norm;
        SolveReport {
            iterations,
            residual,
            converged: residual <= tol,
        }
    }
}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `Δ_h u` at every cell of the box, with the mirrored ghost on `∂D`.
pub(crate) fn laplacian_values<T: Real>(grid: &GridSpec<T>, u: &[T]) -> Vec<T> {
    let inv_h2 = (grid.h() * grid.h()).recip();
    let width = grid.stencil_width();
    (0..grid.cell_count())
        .map(|k| {
            let mut acc = T::zero();
            for nb in &grid.neighbors(k)[..width] {
                acc += match nb {
                    Some(m) => u[*m] - u[k],
                    None => -(u[k] + u[k]),
                };
            }
            acc * inv_h2
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn operator_is_symmetric() {
        let g = make_grid(2, 1.0_f64, 6).unwrap();
        let op = MaskedOperator::new(g, |k| (k % 7 != 3).then_some(0.5 * (k % 3) as f64));
        let n = op.size();
        let mut a = vec![vec![0.0; n]; n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            op.apply(&e, &mut col);
            for i in 0..n {
                a[i][j] = col[i];
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }

    #[test]
    fn cg_solves_small_system() {
        let g = make_grid(1, 1.0_f64, 8).unwrap();
        let op = MaskedOperator::new(g, |_| Some(0.0));
        let b = vec![1.0; 8];
        let mut x = vec![0.0; 8];
        let rep = op.solve(&b, &mut x, 1e-12, 100);
        assert!(rep.converged);
        assert!(rep.iterations <= 8);
        let mut ax = vec![0.0; 8];
        op.apply(&x, &mut ax);
        for (a, b) in ax.iter().zip(&b) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = make_grid(2, 1.0_f64, 4).unwrap();
        let op = MaskedOperator::new(g, |_| Some(0.0));
        let mut x = vec![3.0; 16];
        let rep = op.solve(&[0.0; 16], &mut x, 1e-10, 10);
        assert!(rep.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
