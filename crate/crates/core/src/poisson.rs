//! Dirichlet and relaxed (capacitary-potential) Poisson solves, torsion
//! functions, the γ-distance, measure reconstruction and the cost functional.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainMask, GridSpec, ScalarField};
use crate::linalg::{laplacian_values, MaskedOperator};
use crate::scalar::Real;

pub use crate::linalg::SolveReport;

/// Default relative residual for every linear solve.
pub const DEFAULT_TOL: f64 = 1e-10;

/// A discrete capacitary measure: a nonnegative density per cell, or `+∞`.
///
/// Cells carrying `+∞` are removed from the linear system, so the state is
/// exactly zero there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CapacitaryPotential<T> {
    grid: GridSpec<T>,
    mu: Vec<T>,
    infinite: Vec<bool>,
}

impl<T: Real> CapacitaryPotential<T> {
    /// `mu[k] = None` encodes `+∞`.
    pub fn new(grid: GridSpec<T>, mu: Vec<Option<T>>) -> Result<Self> {
        if mu.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "expected {} potential values, got {}",
                grid.cell_count(),
                mu.len()
            )));
        }
        if let Some(k) = mu
            .iter()
            .position(|m| matches!(m, Some(v) if !(v.is_finite() && *v >= T::zero())))
        {
            return Err(Error::Domain(format!(
                "finite potential values must be nonnegative, cell {k} is {:?}",
                mu[k]
            )));
        }
        let infinite = mu.iter().map(Option::is_none).collect();
        let mu = mu.into_iter().map(|m| m.unwrap_or_else(T::zero)).collect();
        Ok(Self { grid, mu, infinite })
    }

    pub fn constant(grid: GridSpec<T>, c: T) -> Result<Self> {
        Self::new(grid, vec![Some(c); grid.cell_count()])
    }

    pub fn zero(grid: GridSpec<T>) -> Self {
        Self {
            mu: vec![T::zero(); grid.cell_count()],
            infinite: vec![false; grid.cell_count()],
            grid,
        }
    }

    /// `+∞` on every cell.
    pub fn infinite(grid: GridSpec<T>) -> Self {
        Self {
            mu: vec![T::zero(); grid.cell_count()],
            infinite: vec![true; grid.cell_count()],
            grid,
        }
    }

    /// `0` inside the mask, `+∞` outside: the measure of the domain `mask`.
    pub fn from_mask(mask: &DomainMask<T>) -> Self {
        Self {
            grid: *mask.grid(),
            mu: vec![T::zero(); mask.grid().cell_count()],
            infinite: mask.as_slice().iter().map(|&b| !b).collect(),
        }
    }

    /// Finite density field with no `+∞` cells.
    pub fn from_density(density: &ScalarField<T>) -> Result<Self> {
        Self::new(*density.grid(), density.values().iter().map(|&v| Some(v)).collect())
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// `None` for `+∞`.
    #[inline]
    pub fn value(&self, k: usize) -> Option<T> {
        (!self.infinite[k]).then(|| self.mu[k])
    }

    #[inline]
    pub fn is_infinite(&self, k: usize) -> bool {
        self.infinite[k]
    }

    /// The set of finiteness `Ω_μ`.
    pub fn finiteness_set(&self) -> DomainMask<T> {
        DomainMask::from_bools(self.grid, self.infinite.iter().map(|&b| !b).collect())
            .expect("same grid")
    }

    pub(crate) fn operator(&self) -> MaskedOperator<T> {
        MaskedOperator::new(self.grid, |k| self.value(k))
    }
}

/// Iteration cap used when the caller does not pick one: `50 n`.
pub fn default_max_iter<T: Real>(grid: &GridSpec<T>) -> usize {
    50 * grid.n()
}

fn check_tol<T: Real>(tol: T) -> Result<()> {
    if tol > T::zero() && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("tolerance must be positive, got {tol}")))
    }
}

/// Solves on a prepared operator, warm-starting from `guess` (full-grid values) when given.
pub(crate) fn solve_operator<T: Real>(
    op: &MaskedOperator<T>,
    f: &ScalarField<T>,
    guess: Option<&ScalarField<T>>,
    tol: T,
    max_iter: usize,
) -> (ScalarField<T>, SolveReport<T>) {
    let b = op.gather(f.values());
    let mut x = match guess {
        Some(g) => op.gather(g.values()),
        None => vec![T::zero(); op.size()],
    };
    let report = op.solve(&b, &mut x, tol, max_iter);
    (ScalarField::from_raw(*op.grid(), op.scatter(&x)), report)
}

/// `−Δ_h u + μ u = f` on the finite cells of `mu`, `u = 0` on the `+∞` cells.
pub fn solve_relaxed<T: Real>(
    mu: &CapacitaryPotential<T>,
    f: &ScalarField<T>,
    tol: T,
) -> Result<(ScalarField<T>, SolveReport<T>)> {
    solve_relaxed_with(mu, f, tol, default_max_iter(mu.grid()))
}

pub fn solve_relaxed_with<T: Real>(
    mu: &CapacitaryPotential<T>,
    f: &ScalarField<T>,
    tol: T,
    max_iter: usize,
) -> Result<(ScalarField<T>, SolveReport<T>)> {
    check_tol(tol)?;
    mu.grid().check_same(f.grid(), "potential vs right-hand side")?;
    let op = mu.operator();
    if op.size() == 0 {
        warn!("relaxed solve on an empty set of finiteness; returning u = 0");
        return Ok((ScalarField::zeros(*f.grid()), SolveReport::trivial()));
    }
    Ok(solve_operator(&op, f, None, tol, max_iter))
}

/// `−Δ_h u = f` on the mask, `u = 0` outside (and on `∂D`).
pub fn solve_dirichlet<T: Real>(
    mask: &DomainMask<T>,
    f: &ScalarField<T>,
    tol: T,
) -> Result<(ScalarField<T>, SolveReport<T>)> {
    solve_relaxed(&CapacitaryPotential::from_mask(mask), f, tol)
}

/// Torsion function `w_μ`: the relaxed state with `f ≡ 1`.
pub fn torsion<T: Real>(mu: &CapacitaryPotential<T>, tol: T) -> Result<ScalarField<T>> {
    let one = ScalarField::constant(*mu.grid(), T::one());
    let (w, report) = solve_relaxed(mu, &one, tol)?;
    require_converged(&report, "torsion")?;
    Ok(w)
}

pub(crate) fn require_converged<T: Real>(report: &SolveReport<T>, what: &str) -> Result<()> {
    if report.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(format!(
            "{what}: residual {} after {} iterations",
            report.residual, report.iterations
        )))
    }
}

/// `d_γ(μ₁, μ₂) = ‖w_{μ₁} − w_{μ₂}‖_{L²}`.
pub fn gamma_distance<T: Real>(
    mu1: &CapacitaryPotential<T>,
    mu2: &CapacitaryPotential<T>,
    tol: T,
) -> Result<T> {
    mu1.grid().check_same(mu2.grid(), "gamma distance")?;
    let w1 = torsion(mu1, tol)?;
    let w2 = torsion(mu2, tol)?;
    Ok(w1.sub(&w2).l2_norm())
}

/// `Δ_h u` on every cell, zero Dirichlet data on `∂D`.
pub fn discrete_laplacian<T: Real>(u: &ScalarField<T>) -> ScalarField<T> {
    ScalarField::from_raw(*u.grid(), laplacian_values(u.grid(), u.values()))
}

/// Recovers `μ = (Δ_h w + 1) / w` where `w > floor`; `+∞` elsewhere.
/// Negative round-off is clamped to zero.
pub fn reconstruct_measure<T: Real>(w: &ScalarField<T>, floor: T) -> Result<CapacitaryPotential<T>> {
    if !(floor > T::zero()) {
        return Err(Error::Precondition(format!("floor must be positive, got {floor}")));
    }
    let lap = laplacian_values(w.grid(), w.values());
    let mu = w
        .values()
        .iter()
        .zip(&lap)
        .map(|(&wk, &lk)| (wk > floor).then(|| ((lk + T::one()) / wk).max(T::zero())))
        .collect();
    CapacitaryPotential::new(*w.grid(), mu)
}

/// `∫ g·u_Ω = h^d Σ g·u` with `u = R_Ω(f)`.
pub fn cost<T: Real>(mask: &DomainMask<T>, f: &ScalarField<T>, g: &ScalarField<T>, tol: T) -> Result<T> {
    mask.grid().check_same(g.grid(), "mask vs g")?;
    let (u, report) = solve_dirichlet(mask, f, tol)?;
    require_converged(&report, "cost")?;
    Ok(g.inner(&u))
}
