//! Obstacle problem `min ½∫|∇v|² + ∫ g v` over `v ≥ 0`, solved by projected SOR.
//!
//! For `f ≥ 0` the positivity set `{v > 0}` is the unconstrained optimal domain
//! of `∫ g u_Ω`, independently of `f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sublevel_mask, DomainMask, Relation, ScalarField};
use crate::linalg::{laplacian_values, MaskedOperator, NONE};
use crate::poisson::require_converged;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObstacleOptions<T> {
    pub tol: T,
    pub omega: T,
    /// `None` means `400·n`.
    pub max_sweeps: Option<usize>,
}

impl<T: Real> ObstacleOptions<T> {
    pub fn new(tol: T) -> Self {
        Self {
            tol,
            omega: T::lit(1.8),
            max_sweeps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ObstacleReport<T> {
    pub sweeps: usize,
    /// `max |min(v, −Δ_h v + g)| / max(‖g‖_∞, 1)` at the returned iterate.
    pub residual: T,
    pub converged: bool,
}

const CHECK_EVERY: usize = 8;

/// Solves the obstacle problem from `v = 0`. Non-convergence is reported, not raised.
pub fn solve_obstacle<T: Real>(g: &ScalarField<T>, tol: T) -> Result<(ScalarField<T>, ObstacleReport<T>)> {
    solve_obstacle_with(g, None, &ObstacleOptions::new(tol))
}

/// Solves the obstacle problem from an optional initial guess (projected onto `v ≥ 0`).
pub fn solve_obstacle_with<T: Real>(
    g: &ScalarField<T>,
    init: Option<&ScalarField<T>>,
    opts: &ObstacleOptions<T>,
) -> Result<(ScalarField<T>, ObstacleReport<T>)> {
    if !(opts.tol > T::zero()) {
        return Err(Error::Precondition(format!("obstacle tol must be positive, got {}", opts.tol)));
    }
    if !(opts.omega > T::zero() && opts.omega < T::lit(2.0)) {
        return Err(Error::Precondition(format!("SOR omega must lie in (0, 2), got {}", opts.omega)));
    }
    let grid = *g.grid();
    let mut v = match init {
        Some(v0) => {
            grid.check_same(v0.grid(), "initial guess")?;
            v0.values().iter().map(|&x| x.max(T::zero())).collect()
        }
        None => vec![T::zero(); grid.cell_count()],
    };
    let op = MaskedOperator::new(grid, |_| Some(T::zero()));
    let rhs = g.values();
    let scale = g.max_abs().max(T::one());
    let max_sweeps = opts.max_sweeps.unwrap_or(400 * grid.n());
    let omega = opts.omega;
    let inv_h2 = op.inv_h2();

    let mut sweeps = 0;
    let mut residual = projected_residual(&op, &v, rhs) / scale;
    while residual > opts.tol && sweeps < max_sweeps {
        for _ in 0..CHECK_EVERY {
            for i in 0..v.len() {
                let mut off = T::zero();
                for &j in op.row(i) {
                    if j != NONE {
                        off += v[j as usize];
                    }
                }
                let gs = (inv_h2 * off - rhs[i]) / op.diag(i);
                v[i] = (v[i] + omega * (gs - v[i])).max(T::zero());
            }
        }
        sweeps += CHECK_EVERY;
        residual = projected_residual(&op, &v, rhs) / scale;
    }
    let report = ObstacleReport {
        sweeps,
        residual,
        converged: residual <= opts.tol,
    };
    if !report.converged {
        log::warn!("obstacle solve stopped after {sweeps} sweeps at residual {residual}");
    }
    Ok((ScalarField::from_raw(grid, v), report))
}

fn projected_residual<T: Real>(op: &MaskedOperator<T>, v: &[T], g: &[T]) -> T {
    let mut av = vec![T::zero(); v.len()];
    op.apply(v, &mut av);
    v.iter()
        .zip(&av)
        .zip(g)
        .map(|((&x, &a), &gi)| x.min(a + gi).abs())
        .fold(T::zero(), T::max)
}

/// Default positivity threshold `10·tol·‖g‖_∞`.
pub fn default_floor<T: Real>(g: &ScalarField<T>, tol: T) -> T {
    T::lit(10.0) * tol * g.max_abs().max(T::one())
}

/// Cells where `v > floor`.
pub fn active_set<T: Real>(v: &ScalarField<T>, floor: T) -> Result<DomainMask<T>> {
    if !(floor > T::zero()) {
        return Err(Error::Precondition(format!("active-set floor must be positive, got {floor}")));
    }
    Ok(sublevel_mask(v, floor, Relation::Gt))
}

/// `{v > floor}` for the obstacle solution of `g`; requires `f ≥ 0`, which is
/// the hypothesis under which this set minimizes `∫ g u_Ω` with no volume bound.
pub fn unconstrained_optimal_domain<T: Real>(
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    tol: T,
    floor: T,
) -> Result<DomainMask<T>> {
    f.grid().check_same(g.grid(), "g")?;
    if let Some(k) = f.values().iter().position(|&x| x < T::zero()) {
        return Err(Error::Precondition(format!(
            "f must be nonnegative; f = {} at cell {k}",
            f.get(k)
        )));
    }
    let (v, report) = solve_obstacle(g, tol)?;
    if !report.converged {
        return Err(Error::NotConverged(format!(
            "obstacle solve: residual {} after {} sweeps",
            report.residual, report.sweeps
        )));
    }
    active_set(&v, floor)
}

/// KKT residuals `(r1, r2, r3)`: negativity of `v`, negativity of `−Δ_h v + g`,
/// and the complementarity product `max |(−Δ_h v + g)·v|`.
pub fn complementarity_residual<T: Real>(v: &ScalarField<T>, g: &ScalarField<T>) -> Result<(T, T, T)> {
    v.grid().check_same(g.grid(), "g")?;
    let lap = laplacian_values(v.grid(), v.values());
    let mut r = (T::zero(), T::zero(), T::zero());
    for ((&vk, &lk), &gk) in v.values().iter().zip(&lap).zip(g.values()) {
        let s = gk - lk;
        r.0 = r.0.max(-vk);
        r.1 = r.1.max(-s);
        r.2 = r.2.max((s * vk).abs());
    }
    Ok(r)
}

/// Like [`solve_obstacle`] but raises on non-convergence.
pub fn obstacle_solution<T: Real>(g: &ScalarField<T>, tol: T) -> Result<ScalarField<T>> {
    let (v, report) = solve_obstacle(g, tol)?;
    let as_solve = crate::linalg::SolveReport {
        iterations: report.sweeps,
        residual: report.residual,
        converged: report.converged,
    };
    require_converged(&as_solve, "obstacle solve")?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::poisson::{cost, solve_dirichlet, torsion, CapacitaryPotential};

    fn indicator(n: usize, r0: f64) -> ScalarField<f64> {
        let grid = make_grid(2, 2.0_f64, n).unwrap();
        ScalarField::from_fn(grid, |p| {
            if grid.distance(p, [1.0, 1.0]) < r0 {
                -1.0
            } else {
                1.0
            }
        })
    }

    #[test]
    fn nonnegative_g_gives_zero() {
        let grid = make_grid(2, 1.0_f64, 16).unwrap();
        let g = ScalarField::from_fn(grid, |p| p[0] * p[1]);
        let (v, rep) = solve_obstacle(&g, 1e-10).unwrap();
        assert!(rep.converged);
        assert!(v.values().iter().all(|&x| x == 0.0));
        assert!(active_set(&v, 1e-9).unwrap().is_empty());
        assert_eq!(complementarity_residual(&v, &g).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_constant_reduces_to_torsion() {
        let tol = 1e-10;
        let grid = make_grid(2, 1.0_f64, 33).unwrap();
        let g = ScalarField::constant(grid, -1.0);
        let (v, rep) = solve_obstacle(&g, tol).unwrap();
        assert!(rep.converged);
        let h = grid.h();
        let center = v.get(grid.index(16, 16));
        assert!((center - 0.073_671_353_5).abs() <= 2.0 * h * h);
        let w = torsion(&CapacitaryPotential::zero(grid), 1e-12).unwrap();
        assert!(v.sub(&w).max_abs() < 1e-9);
        assert_eq!(active_set(&v, default_floor(&g, tol)).unwrap().count(), grid.cell_count());
        assert!(active_set(&v, 1.0).unwrap().is_empty());
        let (r1, r2, r3) = complementarity_residual(&v, &g).unwrap();
        assert!(r1 <= 10.0 * tol && r2 <= 10.0 * tol && r3 <= 10.0 * tol, "{r1} {r2} {r3}");
        let (_, _, r3w) = complementarity_residual(&w, &g).unwrap();
        assert!(r3w < 1e-8);
    }

    #[test]
    fn indicator_gives_disk_of_double_volume() {
        let tol = 1e-10;
        let g = indicator(128, 0.2);
        let grid = *g.grid();
        let f = ScalarField::constant(grid, 1.0);
        let m = unconstrained_optimal_domain(&f, &g, tol, default_floor(&g, tol)).unwrap();
        let target = 2.0 * std::f64::consts::PI * 0.04;
        assert!((m.volume() - target).abs() / target < 0.05, "{}", m.volume());
        let r = 0.2 * 2f64.sqrt();
        for k in m.boundary_cells() {
            let d = grid.distance(grid.cell_center(k), [1.0, 1.0]);
            assert!((d - r).abs() <= 2.0 * grid.h(), "{d}");
        }
    }

    #[test]
    fn negative_f_is_rejected() {
        let grid = make_grid(2, 1.0_f64, 8).unwrap();
        let mut vals = vec![1.0; 64];
        vals[10] = -0.5;
        let f = ScalarField::from_values(grid, vals).unwrap();
        let g = ScalarField::constant(grid, -1.0);
        assert!(matches!(
            unconstrained_optimal_domain(&f, &g, 1e-10, 1e-9),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn solution_dominates_dirichlet_states_and_is_consistent() {
        use rand::{Rng, SeedableRng};
        let tol = 1e-10;
        let g = indicator(48, 0.3);
        let grid = *g.grid();
        let (v, _) = solve_obstacle(&g, tol).unwrap();
        let neg_g = g.map(|x| -x);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f = ScalarField::from_fn(grid, |_| rng.gen_range(0.0..2.0));
        let floor = default_floor(&g, tol);
        let opt = active_set(&v, floor).unwrap();
        let best = cost(&opt, &f, &g, 1e-12).unwrap();
        for _ in 0..6 {
            let m = DomainMask::from_fn(grid, |_| rng.gen_bool(0.6));
            let (vm, _) = solve_dirichlet(&m, &neg_g, 1e-12).unwrap();
            for (a, b) in v.values().iter().zip(vm.values()) {
                assert!(*a >= b - 10.0 * tol);
            }
            assert!(cost(&m, &f, &g, 1e-12).unwrap() >= best - 10.0 * tol);
        }
        let (vo, _) = solve_dirichlet(&opt, &neg_g, 1e-12).unwrap();
        for k in opt.indices() {
            assert!((vo.get(k) - v.get(k)).abs() <= 1e3 * (floor + tol));
        }
    }

    #[test]
    fn initializations_agree() {
        let tol = 1e-10;
        let g = indicator(48, 0.3);
        let (v0, _) = solve_obstacle(&g, tol).unwrap();
        let big = ScalarField::constant(*g.grid(), 1.0);
        let (v1, rep) = solve_obstacle_with(&g, Some(&big), &ObstacleOptions::new(tol)).unwrap();
        assert!(rep.converged);
        assert!(v0.sub(&v1).max_abs() <= 10.0 * tol);
    }

    #[test]
    fn gradient_vanishes_on_free_boundary() {
        let tol = 1e-10;
        let grad_max = |n: usize| {
            let g = indicator(n, 0.2);
            let grid = *g.grid();
            let (v, _) = solve_obstacle(&g, tol).unwrap();
            let m = active_set(&v, default_floor(&g, tol)).unwrap();
            let h = grid.h();
            let mut worst = 0.0_f64;
            for k in m.outer_ring().into_iter().chain(m.boundary_cells()) {
                if g.get(k) <= 0.0 {
                    continue;
                }
                let nb = grid.neighbors(k);
                let at = |o: Option<usize>| o.map_or(0.0, |m| v.get(m));
                let gx = (at(nb[1]) - at(nb[0])) / (2.0 * h);
                let gy = (at(nb[3]) - at(nb[2])) / (2.0 * h);
                worst = worst.max(gx.hypot(gy));
            }
            (worst, h)
        };
        let (c1, h1) = grad_max(64);
        let (c2, h2) = grad_max(128);
        // radially |∇v| ≈ |g|·dist to the free boundary, and adjacent cells lie within 2h of it
        assert!(c1 <= 2.0 * h1 && c2 <= 2.0 * h2, "{c1} {c2}");
        assert!(c2 < c1);
    }
}
