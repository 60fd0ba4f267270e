//! Minimization of `∫ g·u_Ω` over masks with `|Ω| ≤ V`.
//!
//! A relaxed density `χ ∈ [0,1]` defines the potential `μ = β(1−χ)`; the cost
//! `J(χ) = ∫ g·R_μ(f)` has gradient `∂J/∂χ_k = β·u_k·v_k·h^d` with `u = R_μ(f)`,
//! `v = R_μ(g)`. Projected gradient descent runs over a ladder of `β`, the
//! result is thresholded, and a boundary-exchange polish on the true Dirichlet
//! cost finishes the job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainMask, GridSpec, ScalarField};
use crate::linalg::{MaskedOperator, SolveReport};
use crate::poisson::default_max_iter;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct OptimizerOptions<T> {
    /// Continuation ladder for the penalty `β`.
    pub beta_ladder: Vec<T>,
    /// Initial step, as the largest per-cell change of `χ`.
    pub step: T,
    /// Accepted-step cap per `β` stage.
    pub stage_iters: usize,
    /// Relative residual for every linear solve.
    pub tol: T,
    /// Binarization threshold on `χ`.
    pub threshold: T,
    /// Cap on polish rounds.
    pub polish_rounds: usize,
    /// Single-exchange candidates tried per move type once batches stop improving.
    pub polish_candidates: usize,
    /// Grids with at most this many cells try every single exchange.
    pub exhaustive_cells: usize,
}

impl<T: Real> Default for OptimizerOptions<T> {
    fn default() -> Self {
        Self {
            beta_ladder: [1e3, 1e4, 1e5, 1e6].map(T::lit).to_vec(),
            step: T::lit(0.5),
            stage_iters: 60,
            tol: T::lit(crate::poisson::DEFAULT_TOL),
            threshold: T::lit(0.5),
            polish_rounds: 400,
            polish_candidates: 6,
            exhaustive_cells: 1024,
        }
    }
}

/// One accepted step. Relaxed stages carry their `β`; polish steps carry `β = ∞`
/// and the Dirichlet cost of the current mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HistoryEntry<T> {
    pub iter: usize,
    pub cost: T,
    pub volume: T,
    pub beta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationResult<T> {
    pub mask: DomainMask<T>,
    /// Final relaxed density.
    pub chi: ScalarField<T>,
    /// Dirichlet cost `∫ g·u_mask`.
    pub cost_value: T,
    pub volume: T,
    pub vol_bound: T,
    pub saturated: bool,
    pub history: Vec<HistoryEntry<T>>,
    /// `max_k |u_k·v_k|·μ_k·h^d` at the final relaxed state.
    pub stationarity: T,
}

impl<T: Real> OptimizationResult<T> {
    pub fn write_history_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "cost", "volume", "beta"])?;
        for e in &self.history {
            let num = |v: T| {
                let v = v.to_f64().unwrap_or(f64::NAN);
                if v.is_infinite() {
                    "inf".to_string()
                } else {
                    format!("{v:.16e}")
                }
            };
            w.write_record([e.iter.to_string(), num(e.cost), num(e.volume), num(e.beta)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest admissible cell count for `vol_bound`.
pub fn cell_cap<T: Real>(grid: &GridSpec<T>, vol_bound: T) -> usize {
    (vol_bound / grid.cell_volume() + T::lit(1e-9))
        .floor()
        .to_usize()
        .unwrap_or(0)
        .min(grid.cell_count())
}

fn converged_or<T: Real>(report: &SolveReport<T>, what: &str) -> Result<()> {
    if report.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(format!(
            "{what}: residual {} after {} iterations",
            report.residual, report.iterations
        )))
    }
}

fn relaxed_operator<T: Real>(chi: &[T], grid: &GridSpec<T>, beta: T) -> MaskedOperator<T> {
    MaskedOperator::new(*grid, |k| Some(beta * (T::one() - chi[k])))
}

fn check_density<T: Real>(chi: &ScalarField<T>, beta: T) -> Result<()> {
    if !(beta > T::zero()) {
        return Err(Error::Precondition(format!("beta must be positive, got {beta}")));
    }
    if let Some(k) = chi.values().iter().position(|&c| !(c >= T::zero() && c <= T::one())) {
        return Err(Error::Precondition(format!("chi must lie in [0, 1]; chi = {} at cell {k}", chi.get(k))));
    }
    Ok(())
}

/// `J(χ) = h^d Σ g·u` with `(−Δ_h + β(1−χ)) u = f`.
pub fn relaxed_cost<T: Real>(chi: &ScalarField<T>, f: &ScalarField<T>, g: &ScalarField<T>, beta: T, tol: T) -> Result<T> {
    check_density(chi, beta)?;
    chi.grid().check_same(f.grid(), "f")?;
    chi.grid().check_same(g.grid(), "g")?;
    let grid = *chi.grid();
    let op = relaxed_operator(chi.values(), &grid, beta);
    let mut u = vec![T::zero(); grid.cell_count()];
    let rep = op.solve(f.values(), &mut u, tol, default_max_iter(&grid));
    converged_or(&rep, "relaxed state")?;
    Ok(ScalarField::from_raw(grid, u).inner(g))
}

/// `∂J/∂χ_k = β·u_k·v_k·h^d`.
pub fn relaxed_gradient<T: Real>(
    chi: &ScalarField<T>,
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    beta: T,
    tol: T,
) -> Result<ScalarField<T>> {
    check_density(chi, beta)?;
    chi.grid().check_same(f.grid(), "f")?;
    chi.grid().check_same(g.grid(), "g")?;
    let grid = *chi.grid();
    let op = relaxed_operator(chi.values(), &grid, beta);
    let state = RelaxedState::solve(&op, f, g, None, tol)?;
    Ok(ScalarField::from_raw(grid, state.gradient(beta, grid.cell_volume())))
}

struct RelaxedState<T> {
    u: Vec<T>,
    v: Vec<T>,
    cost: T,
}

impl<T: Real> RelaxedState<T> {
    fn solve(
        op: &MaskedOperator<T>,
        f: &ScalarField<T>,
        g: &ScalarField<T>,
        warm: Option<&RelaxedState<T>>,
        tol: T,
    ) -> Result<Self> {
        let max_iter = default_max_iter(op.grid());
        let mut u = warm.map_or_else(|| vec![T::zero(); f.len()], |w| w.u.clone());
        converged_or(&op.solve(f.values(), &mut u, tol, max_iter), "relaxed state")?;
        let mut v = warm.map_or_else(|| vec![T::zero(); f.len()], |w| w.v.clone());
        converged_or(&op.solve(g.values(), &mut v, tol, max_iter), "relaxed adjoint")?;
        let cost = op.grid().cell_volume() * u.iter().zip(g.values()).map(|(&a, &b)| a * b).sum::<T>();
        Ok(Self { u, v, cost })
    }

    /// Completes a state whose `u` is already known.
    fn with_state(op: &MaskedOperator<T>, u: Vec<T>, g: &ScalarField<T>, warm_v: &[T], tol: T) -> Result<Self> {
        let mut v = warm_v.to_vec();
        converged_or(&op.solve(g.values(), &mut v, tol, default_max_iter(op.grid())), "relaxed adjoint")?;
        let cost = op.grid().cell_volume() * u.iter().zip(g.values()).map(|(&a, &b)| a * b).sum::<T>();
        Ok(Self { u, v, cost })
    }

    fn gradient(&self, beta: T, cell: T) -> Vec<T> {
        self.u.iter().zip(&self.v).map(|(&a, &b)| beta * a * b * cell).collect()
    }
}

/// Cost of the state only, warm-started from `guess`.
fn state_cost<T: Real>(op: &MaskedOperator<T>, f: &ScalarField<T>, g: &ScalarField<T>, guess: &[T], tol: T) -> Result<(T, Vec<T>)> {
    let mut u = guess.to_vec();
    converged_or(&op.solve(f.values(), &mut u, tol, default_max_iter(op.grid())), "relaxed state")?;
    let cost = op.grid().cell_volume() * u.iter().zip(g.values()).map(|(&a, &b)| a * b).sum::<T>();
    Ok((cost, u))
}

/// Projects `y` onto `{0 ≤ χ ≤ 1, h^d Σχ ≤ V}` as `clamp(y − λ)` with the least `λ ≥ 0`.
fn project<T: Real>(y: &[T], cell: T, vol_bound: T) -> Vec<T> {
    let clamp = |x: T| x.max(T::zero()).min(T::one());
    let volume = |lambda: T| cell * y.iter().map(|&x| clamp(x - lambda)).sum::<T>();
    if volume(T::zero()) <= vol_bound {
        return y.iter().map(|&x| clamp(x)).collect();
    }
    let mut lo = T::zero();
    let mut hi = y.iter().copied().fold(T::zero(), T::max);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if volume(mid) > vol_bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    y.iter().map(|&x| clamp(x - hi)).collect()
}

/// `{χ ≥ threshold}`, trimmed to `cap` cells by largest `χ` (lowest index on ties).
fn binarize<T: Real>(chi: &[T], grid: &GridSpec<T>, threshold: T, cap: usize) -> DomainMask<T> {
    let mut cells: Vec<usize> = (0..chi.len()).filter(|&k| chi[k] >= threshold).collect();
    if cells.len() > cap {
        cells.sort_by(|&a, &b| chi[b].partial_cmp(&chi[a]).unwrap().then(a.cmp(&b)));
        cells.truncate(cap);
    }
    let mut inside = vec![false; chi.len()];
    for k in cells {
        inside[k] = true;
    }
    DomainMask::from_raw(*grid, inside)
}

/// Runs the relaxed continuation, thresholds, and polishes.
pub fn optimize_domain<T: Real>(
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    vol_bound: T,
    opts: &OptimizerOptions<T>,
) -> Result<OptimizationResult<T>> {
    let grid = *f.grid();
    grid.check_same(g.grid(), "g")?;
    if !(vol_bound > T::zero() && vol_bound < grid.box_volume()) {
        return Err(Error::Precondition(format!(
            "vol_bound must lie in (0, {}), got {vol_bound}",
            grid.box_volume()
        )));
    }
    if opts.beta_ladder.is_empty() || opts.beta_ladder.iter().any(|b| !(*b > T::zero())) {
        return Err(Error::Precondition("beta ladder must be non-empty and positive".into()));
    }
    if !(opts.step > T::zero()) || !(opts.tol > T::zero()) {
        return Err(Error::Precondition("step and tol must be positive".into()));
    }
    let cell = grid.cell_volume();
    let cap = cell_cap(&grid, vol_bound);
    let mut history = Vec::new();
    let mut iter = 0;

    let mut chi = vec![vol_bound / grid.box_volume(); grid.cell_count()];
    let mut warm: Option<RelaxedState<T>> = None;
    let mut stationarity = T::zero();
    for &beta in &opts.beta_ladder {
        let op = relaxed_operator(&chi, &grid, beta);
        let mut state = RelaxedState::solve(&op, f, g, warm.as_ref(), opts.tol)?;
        history.push(HistoryEntry {
            iter,
            cost: state.cost,
            volume: cell * chi.iter().copied().sum::<T>(),
            beta,
        });
        let mut step = opts.step;
        for _ in 0..opts.stage_iters {
            let grad = state.gradient(beta, cell);
            let scale = grad.iter().fold(T::zero(), |m, x| m.max(x.abs()));
            if scale == T::zero() {
                break;
            }
            let mut accepted = None;
            for _ in 0..=30 {
                let y: Vec<T> = chi.iter().zip(&grad).map(|(&c, &d)| c - step * d / scale).collect();
                let trial = project(&y, cell, vol_bound);
                let moved = trial.iter().zip(&chi).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
                if moved <= T::lit(1e-9) {
                    break;
                }
                let trial_op = relaxed_operator(&trial, &grid, beta);
                let (c, u) = state_cost(&trial_op, f, g, &state.u, opts.tol)?;
                if c < state.cost {
                    accepted = Some((trial, trial_op, u));
                    break;
                }
                step /= T::lit(2.0);
            }
            let Some((trial, trial_op, u)) = accepted else { break };
            chi = trial;
            state = RelaxedState::with_state(&trial_op, u, g, &state.v, opts.tol)?;
            iter += 1;
            history.push(HistoryEntry {
                iter,
                cost: state.cost,
                volume: cell * chi.iter().copied().sum::<T>(),
                beta,
            });
            step = (step * T::lit(2.0)).min(opts.step);
        }
        stationarity = state
            .u
            .iter()
            .zip(&state.v)
            .zip(&chi)
            .map(|((&a, &b), &c)| (a * b).abs() * beta * (T::one() - c) * cell)
            .fold(T::zero(), T::max);
        log::debug!("beta {beta}: cost {} after {iter} steps", state.cost);
        warm = Some(state);
    }

    let mask = binarize(&chi, &grid, opts.threshold, cap);
    let (mask, cost_value) = polish(mask, f, g, cap, opts, &mut history, &mut iter)?;
    let volume = mask.volume();
    Ok(OptimizationResult {
        saturated: volume >= vol_bound - cell,
        volume,
        vol_bound,
        cost_value,
        mask,
        chi: ScalarField::from_raw(grid, chi),
        history,
        stationarity,
    })
}

/// Dirichlet states on a mask, as full-grid vectors.
struct MaskState<T> {
    u: Vec<T>,
    v: Vec<T>,
    cost: T,
}

fn dirichlet_op<T: Real>(mask: &DomainMask<T>) -> MaskedOperator<T> {
    MaskedOperator::new(*mask.grid(), |k| mask.contains(k).then_some(T::zero()))
}

fn dirichlet_solve<T: Real>(op: &MaskedOperator<T>, rhs: &[T], guess: &[T], tol: T, what: &str) -> Result<Vec<T>> {
    if op.size() == 0 {
        return Ok(vec![T::zero(); rhs.len()]);
    }
    let b = op.gather(rhs);
    let mut x = op.gather(guess);
    converged_or(&op.solve(&b, &mut x, tol, default_max_iter(op.grid())), what)?;
    Ok(op.scatter(&x))
}

fn mask_cost<T: Real>(mask: &DomainMask<T>, f: &ScalarField<T>, g: &ScalarField<T>, guess: &[T], tol: T) -> Result<(T, Vec<T>)> {
    let op = dirichlet_op(mask);
    let u = dirichlet_solve(&op, f.values(), guess, tol, "Dirichlet state")?;
    let cost = mask.grid().cell_volume() * u.iter().zip(g.values()).map(|(&a, &b)| a * b).sum::<T>();
    Ok((cost, u))
}

fn mask_state<T: Real>(
    mask: &DomainMask<T>,
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    warm: Option<&MaskState<T>>,
    tol: T,
) -> Result<MaskState<T>> {
    let op = dirichlet_op(mask);
    let zeros = vec![T::zero(); f.len()];
    let u = dirichlet_solve(&op, f.values(), warm.map_or(&zeros, |w| &w.u), tol, "Dirichlet state")?;
    let v = dirichlet_solve(&op, g.values(), warm.map_or(&zeros, |w| &w.v), tol, "Dirichlet adjoint")?;
    let cost = mask.grid().cell_volume() * u.iter().zip(g.values()).map(|(&a, &b)| a * b).sum::<T>();
    Ok(MaskState { u, v, cost })
}

/// Gradient at cell `k` from inside values only: centred where both neighbours
/// are inside, one-sided towards the inside otherwise.
fn inward_gradient<T: Real>(mask: &DomainMask<T>, w: &[T], k: usize) -> [T; 2] {
    let grid = mask.grid();
    let h = grid.h();
    let nb = grid.neighbors(k);
    let mut grad = [T::zero(); 2];
    for axis in 0..grid.d() {
        let inside = |o: Option<usize>| o.filter(|&m| mask.contains(m));
        grad[axis] = match (inside(nb[2 * axis]), inside(nb[2 * axis + 1])) {
            (Some(lo), Some(hi)) => (w[hi] - w[lo]) / (h + h),
            (Some(lo), None) => (w[k] - w[lo]) / h,
            (None, Some(hi)) => (w[hi] - w[k]) / h,
            (None, None) => T::zero(),
        };
    }
    grad
}

fn sensitivities<T: Real>(mask: &DomainMask<T>, u: &[T], v: &[T]) -> Vec<(usize, T)> {
    mask.boundary_cells()
        .into_iter()
        .map(|k| {
            let (a, b) = (inward_gradient(mask, u, k), inward_gradient(mask, v, k));
            (k, a[0] * b[0] + a[1] * b[1])
        })
        .collect()
}

/// Boundary radius, in cells, over which sensitivities are averaged.
pub const SMOOTHING_CELLS: f64 = 8.0;

/// Averages each value over the boundary cells within `SMOOTHING_CELLS·h`.
/// The flux of a staircase boundary concentrates at steps and vanishes in its
/// concave corners, so only averages along the boundary approach the smooth value.
fn smooth_along_boundary<T: Real>(grid: &GridSpec<T>, raw: &[(usize, T)]) -> Vec<(usize, T)> {
    let radius = T::lit(SMOOTHING_CELLS) * grid.h();
    let centers: Vec<_> = raw.iter().map(|&(k, _)| grid.cell_center(k)).collect();
    centers
        .iter()
        .zip(raw)
        .map(|(c, &(k, _))| {
            let (sum, count) = centers
                .iter()
                .zip(raw)
                .filter(|(o, _)| grid.distance(*c, **o) <= radius)
                .fold((T::zero(), 0usize), |(s, n), (_, &(_, x))| (s + x, n + 1));
            (k, sum / T::from_usize_lossy(count))
        })
        .collect()
}

/// Normal-derivative product `∂u/∂n·∂v/∂n` at every inside cell with an
/// outside face neighbour in the box, with `u = R_mask(f)`, `v = R_mask(g)`.
///
/// Both states vanish on the boundary, so their gradients are normal there and
/// the product equals `∇u·∇v`; gradients use inside values only, which is exact
/// for the locally linear profile next to a staircase boundary. Values are
/// averaged along the boundary over `SMOOTHING_CELLS` cells.
pub fn boundary_sensitivity<T: Real>(
    mask: &DomainMask<T>,
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    tol: T,
) -> Result<Vec<(usize, T)>> {
    if mask.is_empty() {
        return Err(Error::Precondition("boundary sensitivity needs a non-empty mask".into()));
    }
    mask.grid().check_same(f.grid(), "f")?;
    mask.grid().check_same(g.grid(), "g")?;
    let st = mask_state(mask, f, g, None, tol)?;
    Ok(smooth_along_boundary(mask.grid(), &sensitivities(mask, &st.u, &st.v)))
}

/// `(spread, zero_resid)` of the boundary sensitivities: `(max − min)/|median|`
/// (zero for a saturated optimum) and `max |s| / max_interior |∇u|·|∇v|`
/// (zero for an unsaturated one).
pub fn optimality_residual<T: Real>(
    result: &OptimizationResult<T>,
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    tol: T,
) -> Result<(T, T)> {
    let mask = &result.mask;
    if mask.is_empty() {
        return Ok((T::zero(), T::zero()));
    }
    let st = mask_state(mask, f, g, None, tol)?;
    let mut s: Vec<T> = smooth_along_boundary(mask.grid(), &sensitivities(mask, &st.u, &st.v))
        .into_iter().map(|(_, x)| x).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        (s[s.len() / 2 - 1] + s[s.len() / 2]) / T::lit(2.0)
    };
    let spread = (s[s.len() - 1] - s[0]) / (median.abs() + T::min_positive_value());
    let boundary: std::collections::HashSet<usize> = mask.boundary_cells().into_iter().collect();
    let interior = mask
        .indices()
        .filter(|k| !boundary.contains(k))
        .map(|k| {
            let (a, b) = (inward_gradient(mask, &st.u, k), inward_gradient(mask, &st.v, k));
            a[0].hypot(a[1]) * b[0].hypot(b[1])
        })
        .fold(T::zero(), T::max);
    let worst = s.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let zero_resid = if interior > T::zero() { worst / interior } else { T::zero() };
    Ok((spread, zero_resid))
}

/// Whether `{f·g < 0}`, minus its own boundary layer, lies inside `mask`.
/// Vacuously true when the mask saturates `vol_bound`.
pub fn containment_check<T: Real>(mask: &DomainMask<T>, f: &ScalarField<T>, g: &ScalarField<T>, vol_bound: T) -> bool {
    let grid = mask.grid();
    if mask.volume() >= vol_bound - grid.cell_volume() {
        return true;
    }
    let negative = |k: usize| f.get(k) * g.get(k) < T::zero();
    (0..grid.cell_count())
        .filter(|&k| negative(k))
        .filter(|&k| {
            grid.neighbors(k)[..grid.stencil_width()]
                .iter()
                .all(|nb| nb.is_none_or(negative))
        })
        .all(|k| mask.contains(k))
}

#[derive(Clone, Copy, PartialEq)]
enum Move {
    Add,
    Remove,
    Swap,
}

fn apply_moves<T: Real>(mask: &DomainMask<T>, adds: &[usize], removes: &[usize]) -> DomainMask<T> {
    let mut m = mask.clone();
    for &k in adds {
        m.set(k, true);
    }
    for &k in removes {
        m.set(k, false);
    }
    m
}

/// Boundary-exchange descent on the Dirichlet cost, ranked by sensitivity.
fn polish<T: Real>(
    mut mask: DomainMask<T>,
    f: &ScalarField<T>,
    g: &ScalarField<T>,
    cap: usize,
    opts: &OptimizerOptions<T>,
    history: &mut Vec<HistoryEntry<T>>,
    iter: &mut usize,
) -> Result<(DomainMask<T>, T)> {
    let grid = *mask.grid();
    let exhaustive = grid.cell_count() <= opts.exhaustive_cells;
    let mut state = mask_state(&mask, f, g, None, opts.tol)?;
    let record = |history: &mut Vec<HistoryEntry<T>>, iter: usize, cost: T, mask: &DomainMask<T>| {
        history.push(HistoryEntry {
            iter,
            cost,
            volume: mask.volume(),
            beta: T::infinity(),
        })
    };
    record(history, *iter, state.cost, &mask);
    for _ in 0..opts.polish_rounds {
        let margin = opts.tol * state.cost.abs().max(T::min_positive_value());
        let sens = sensitivities(&mask, &state.u, &state.v);
        let by_cell: std::collections::HashMap<usize, T> = sens.iter().copied().collect();
        // outside candidates inherit the mean sensitivity of their inside neighbours
        let mut outside: Vec<(usize, T)> = if mask.is_empty() {
            (0..grid.cell_count()).map(|k| (k, f.get(k) * g.get(k))).collect()
        } else {
            mask.outer_ring()
                .into_iter()
                .map(|k| {
                    let vals: Vec<T> = grid.neighbors(k)[..grid.stencil_width()]
                        .iter()
                        .filter_map(|nb| nb.and_then(|m| by_cell.get(&m).copied()))
                        .collect();
                    (k, vals.iter().copied().sum::<T>() / T::from_usize_lossy(vals.len().max(1)))
                })
                .collect()
        };
        let mut inside = sens;
        outside.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        inside.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let room = cap.saturating_sub(mask.count());

        let adds: Vec<usize> = outside
            .iter()
            .filter(|c| room > 0 && (exhaustive || c.1 < T::zero()))
            .map(|c| c.0)
            .collect();
        let removes: Vec<usize> = inside
            .iter()
            .filter(|c| exhaustive || c.1 > T::zero())
            .map(|c| c.0)
            .collect();
        let swap_pairs: Vec<(usize, usize)> = outside
            .iter()
            .zip(&inside)
            .take_while(|(a, r)| exhaustive || a.1 < r.1)
            .map(|(a, r)| (a.0, r.0))
            .collect();

        let mut improved = None;
        'moves: for kind in [Move::Add, Move::Remove, Move::Swap] {
            let (len, batch) = match kind {
                Move::Add => (adds.len(), adds.len().min(room)),
                Move::Remove => (removes.len(), removes.len()),
                Move::Swap => (swap_pairs.len(), swap_pairs.len()),
            };
            let build = |range: &[usize]| -> DomainMask<T> {
                match kind {
                    Move::Add => apply_moves(&mask, &range.iter().map(|&i| adds[i]).collect::<Vec<_>>(), &[]),
                    Move::Remove => apply_moves(&mask, &[], &range.iter().map(|&i| removes[i]).collect::<Vec<_>>()),
                    Move::Swap => apply_moves(
                        &mask,
                        &range.iter().map(|&i| swap_pairs[i].0).collect::<Vec<_>>(),
                        &range.iter().map(|&i| swap_pairs[i].1).collect::<Vec<_>>(),
                    ),
                }
            };
            // batches of the best-ranked moves, halving on failure
            let mut k = batch;
            while k > 1 {
                let trial = build(&(0..k).collect::<Vec<_>>());
                let (c, _) = mask_cost(&trial, f, g, &state.u, opts.tol)?;
                if c < state.cost - margin {
                    improved = Some(trial);
                    break 'moves;
                }
                k /= 2;
            }
            let singles = if exhaustive { len } else { len.min(opts.polish_candidates) };
            for i in 0..singles {
                let trial = build(&[i]);
                let (c, _) = mask_cost(&trial, f, g, &state.u, opts.tol)?;
                if c < state.cost - margin {
                    improved = Some(trial);
                    break 'moves;
                }
            }
        }
        if exhaustive && improved.is_none() {
            // every add/remove pairing, not just rank-matched ones
            'pairs: for a in outside.iter().map(|c| c.0) {
                for r in inside.iter().map(|c| c.0) {
                    let trial = apply_moves(&mask, &[a], &[r]);
                    let (c, _) = mask_cost(&trial, f, g, &state.u, opts.tol)?;
                    if c < state.cost - margin {
                        improved = Some(trial);
                        break 'pairs;
                    }
                }
            }
        }
        let Some(next) = improved else { break };
        mask = next;
        state = mask_state(&mask, f, g, Some(&state), opts.tol)?;
        *iter += 1;
        record(history, *iter, state.cost, &mask);
    }
    Ok((mask, state.cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::poisson::cost;

    #[test]
    fn projection_respects_bounds_and_volume() {
        let y = vec![1.4, 0.9, 0.5, -0.2, 0.7];
        let p = project(&y, 1.0, 2.0);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert!((p.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert_eq!(project(&[0.2, 0.3], 1.0, 2.0), vec![0.2, 0.3]);
    }

    #[test]
    fn binarize_breaks_ties_by_index() {
        let g = make_grid(1, 1.0_f64, 4).unwrap();
        let m = binarize(&[0.8, 0.9, 0.8, 0.2], &g, 0.5, 2);
        assert_eq!(m.as_slice(), &[true, true, false, false]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let grid = make_grid(2, 1.0_f64, 16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let f = ScalarField::from_fn(grid, |_| rng.gen_range(0.5..1.5));
        let g = ScalarField::from_fn(grid, |p| p[0] - 0.5);
        let chi = ScalarField::from_fn(grid, |_| rng.gen_range(0.2..0.8));
        let delta = ScalarField::from_fn(grid, |_| rng.gen_range(0.0..1.0));
        let (beta, tol, eps) = (1e3, 1e-13, 1e-5);
        let grad = relaxed_gradient(&chi, &f, &g, beta, tol).unwrap();
        let predicted: f64 = grad.values().iter().zip(delta.values()).map(|(a, b)| a * b).sum();
        let plus = relaxed_cost(&chi.axpby(1.0, &delta, eps), &f, &g, beta, tol).unwrap();
        let minus = relaxed_cost(&chi.axpby(1.0, &delta, -eps), &f, &g, beta, tol).unwrap();
        let fd = (plus - minus) / (2.0 * eps);
        assert!((fd - predicted).abs() <= 1e-3 * predicted.abs(), "{fd} vs {predicted}");
    }

    #[test]
    fn sensitivity_signs() {
        let grid = make_grid(2, 1.0_f64, 24).unwrap();
        let mask = DomainMask::from_fn(grid, |p| p[0] > 0.2 && p[0] < 0.7 && p[1] > 0.3);
        let one = ScalarField::constant(grid, 1.0);
        let neg = ScalarField::constant(grid, -1.0);
        assert!(boundary_sensitivity(&mask, &one, &neg, 1e-10).unwrap().iter().all(|s| s.1 <= 0.0));
        let f = ScalarField::from_fn(grid, |p| 1.0 + p[0]);
        assert!(boundary_sensitivity(&mask, &f, &f, 1e-10).unwrap().iter().all(|s| s.1 >= 0.0));
    }

    #[test]
    fn disk_sensitivity_is_nearly_constant() {
        let grid = make_grid(2, 2.0_f64, 128).unwrap();
        let disk = DomainMask::ball(grid, [1.0, 1.0], 0.5);
        let one = ScalarField::constant(grid, 1.0);
        let s = boundary_sensitivity(&disk, &one, &one, 1e-10).unwrap();
        let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(x.1), hi.max(x.1)));
        // continuum value (R/2)² at R = 0.5
        assert!((hi - lo) / 0.0625 <= 0.3, "{lo} {hi}");
    }

    #[test]
    fn containment_examples() {
        let grid = make_grid(2, 2.0_f64, 32).unwrap();
        let one = ScalarField::constant(grid, 1.0);
        let g = ScalarField::from_fn(grid, |p| if grid.distance(p, [1.0, 1.0]) < 0.2 { -1.0 } else { 1.0 });
        assert!(containment_check(&DomainMask::ball(grid, [1.0, 1.0], 0.2828), &one, &g, 1.0));
        assert!(!containment_check(&DomainMask::empty(grid), &one, &g, 1.0));
        assert!(containment_check(&DomainMask::empty(grid), &one, &g, grid.cell_volume() / 2.0));
    }

    #[test]
    fn nonnegative_costs_give_empty_optimum() {
        let grid = make_grid(2, 1.0_f64, 16).unwrap();
        let f = ScalarField::constant(grid, 1.0);
        let g = ScalarField::from_fn(grid, |p| p[0]);
        let res = optimize_domain(&f, &g, 0.5, &OptimizerOptions::default()).unwrap();
        assert!(res.cost_value.abs() < 1e-12);
        assert!(res.mask.count() <= 2, "{}", res.mask.count());
    }

    #[test]
    fn invalid_bounds_rejected() {
        let grid = make_grid(2, 1.0_f64, 8).unwrap();
        let f = ScalarField::constant(grid, 1.0);
        for v in [0.0, 1.0, -1.0] {
            assert!(matches!(
                optimize_domain(&f, &f, v, &OptimizerOptions::default()),
                Err(Error::Precondition(_))
            ));
        }
    }

    #[test]
    fn small_saturated_run() {
        let grid = make_grid(2, 2.0_f64, 32).unwrap();
        let f = ScalarField::constant(grid, 1.0);
        let g = ScalarField::constant(grid, -1.0);
        let res = optimize_domain(&f, &g, 1.0, &OptimizerOptions::default()).unwrap();
        let h2 = grid.cell_volume();
        assert!(res.saturated);
        assert!((res.volume - 1.0).abs() <= 2.0 * h2, "{}", res.volume);
        assert!((cost(&res.mask, &f, &g, 1e-10).unwrap() - res.cost_value).abs() < 1e-9);
        for stage in res.history.chunk_by(|a, b| a.beta == b.beta) {
            assert!(stage.windows(2).all(|w| w[1].cost <= w[0].cost));
        }
        assert!(res.history.iter().all(|e| e.volume <= 1.0 + h2));
    }
}
