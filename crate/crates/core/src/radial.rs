//! One-dimensional theory for radial data: `f ≡ 1` and `g` radially symmetric
//! and nondecreasing. Everything here is exact or quadrature-accurate and serves
//! as the oracle for the grid solvers.
//!
//! With `G(s) = ∫₀^s r^{d−1} g(r) dr`, the state of `−div((1+a)∇u) = 1` on `B_R`
//! is `u_{a,R}(r) = (1/d) ∫_r^R s/(1+a(s)) ds` and
//!
//! ```text
//! ∫_{B_R} g·u_{a,R} dx = ω_d ∫₀^R G(s) s / (1 + a(s)) ds.
//! ```
//!
//! [`radial_cost`] returns that volume integral; [`radial_cost_raw`] drops the
//! surface factor `d ω_d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::interp_table;
use crate::numeric::{bisect_last_nonpositive, integrate_piecewise, unit_ball_volume};
use crate::scalar::Real;

/// Relative accuracy of every quadrature in this module.
pub const QUAD_TOL: f64 = 1e-12;

/// A function of `r ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum RadialProfile<T> {
    Constant { value: T },
    /// `inner` on `[0, r0)`, `outer` on `[r0, ∞)`.
    Indicator { r0: T, inner: T, outer: T },
    /// Piecewise linear through strictly increasing `(r, value)` nodes, constant outside.
    Table { nodes: Vec<(T, T)> },
}

impl<T: Real> RadialProfile<T> {
    pub fn constant(value: T) -> Self {
        RadialProfile::Constant { value }
    }

    pub fn indicator(r0: T, inner: T, outer: T) -> Self {
        RadialProfile::Indicator { r0, inner, outer }
    }

    pub fn table(nodes: Vec<(T, T)>) -> Result<Self> {
        let p = RadialProfile::Table { nodes };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RadialProfile::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidDescriptor("constant profile must be finite".into()))
            }
            RadialProfile::Indicator { r0, .. } if !(*r0 > T::zero()) => Err(Error::InvalidDescriptor(
                format!("indicator radius must be positive, got {r0}"),
            )),
            RadialProfile::Table { nodes } => {
                if nodes.is_empty() {
                    return Err(Error::InvalidDescriptor("empty radial table".into()));
                }
                if nodes[0].0 < T::zero() {
                    return Err(Error::InvalidDescriptor("radial table starts below r = 0".into()));
                }
                if nodes.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::InvalidDescriptor(
                        "radial table nodes must be strictly increasing".into(),
                    ));
                }
                if nodes.iter().any(|n| !n.0.is_finite() || !n.1.is_finite()) {
                    return Err(Error::InvalidDescriptor("radial table has non-finite entries".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, r: T) -> T {
        match self {
            RadialProfile::Constant { value } => *value,
            RadialProfile::Indicator { r0, inner, outer } => {
                if r < *r0 {
                    *inner
                } else {
                    *outer
                }
            }
            RadialProfile::Table { nodes } => interp_table(nodes, r),
        }
    }

    /// Radii where the profile has a kink or jump, inside `(lo, hi)`.
    pub fn breakpoints(&self, lo: T, hi: T) -> Vec<T> {
        match self {
            RadialProfile::Constant { .. } => Vec::new(),
            RadialProfile::Indicator { r0, .. } => {
                if *r0 > lo && *r0 < hi {
                    vec![*r0]
                } else {
                    Vec::new()
                }
            }
            RadialProfile::Table { nodes } => nodes
                .iter()
                .map(|n| n.0)
                .filter(|&r| r > lo && r < hi)
                .collect(),
        }
    }

    pub fn is_nondecreasing(&self) -> bool {
        match self {
            RadialProfile::Constant { .. } => true,
            RadialProfile::Indicator { inner, outer, .. } => inner <= outer,
            RadialProfile::Table { nodes } => nodes.windows(2).all(|w| w[1].1 >= w[0].1),
        }
    }

    pub fn min_value(&self) -> T {
        match self {
            RadialProfile::Constant { value } => *value,
            RadialProfile::Indicator { inner, outer, .. } => inner.min(*outer),
            RadialProfile::Table { nodes } => nodes.iter().fold(T::infinity(), |m, n| m.min(n.1)),
        }
    }

    fn is_constant(&self) -> Option<T> {
        match self {
            RadialProfile::Constant { value } => Some(*value),
            _ => None,
        }
    }
}

fn sorted_breaks<T: Real>(lo: T, hi: T, profiles: &[&RadialProfile<T>]) -> Vec<T> {
    let mut b = vec![lo, hi];
    for p in profiles {
        b.extend(p.breakpoints(lo, hi));
    }
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
    b.dedup();
    b
}

fn check_radius<T: Real>(s: T, what: &str) -> Result<()> {
    if s >= T::zero() && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be a finite nonnegative radius, got {s}")))
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d >= 1 {
        Ok(())
    } else {
        Err(Error::Domain("dimension must be at least 1".into()))
    }
}

/// `∫₀^s r^{d−1} p(r) dr`, exact for every profile kind (tables are integrated
/// segment by segment as polynomials).
fn primitive_exact<T: Real>(p: &RadialProfile<T>, d: usize, s: T) -> T {
    let df = T::from_usize_lossy(d);
    let pow = |r: T, k: usize| r.powi(k as i32);
    match p {
        RadialProfile::Constant { value } => *value * pow(s, d) / df,
        RadialProfile::Indicator { r0, inner, outer } => {
            if s <= *r0 {
                *inner * pow(s, d) / df
            } else {
                (*inner * pow(*r0, d) + *outer * (pow(s, d) - pow(*r0, d))) / df
            }
        }
        RadialProfile::Table { nodes } => {
            let d1 = T::from_usize_lossy(d + 1);
            // ∫_a^b r^{d−1}(α + βr) dr
            let seg = |a: T, b: T, alpha: T, beta: T| {
                alpha * (pow(b, d) - pow(a, d)) / df + beta * (pow(b, d + 1) - pow(a, d + 1)) / d1
            };
            let mut acc = T::zero();
            let first = nodes[0];
            let last = nodes[nodes.len() - 1];
            acc += seg(T::zero(), s.min(first.0), first.1, T::zero());
            for w in nodes.windows(2) {
                let (r0, v0) = w[0];
                let (r1, v1) = w[1];
                if s <= r0 {
                    break;
                }
                let beta = (v1 - v0) / (r1 - r0);
                acc += seg(r0, s.min(r1), v0 - beta * r0, beta);
            }
            if s > last.0 {
                acc += seg(last.0, s, last.1, T::zero());
            }
            acc
        }
    }
}

/// `G(s) = ∫₀^s r^{d−1} g(r) dr`.
pub fn radial_primitive<T: Real>(g: &RadialProfile<T>, d: usize, s: T) -> Result<T> {
    check_dim(d)?;
    check_radius(s, "s")?;
    g.validate()?;
    Ok(primitive_exact(g, d, s))
}

/// `R_g = sup{R > 0 : G(R) ≤ 0}`; `Infinite` when `G ≤ 0` on the whole search bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub enum CriticalRadius<T> {
    Finite(T),
    Infinite { searched_to: T },
}

impl<T: Real> CriticalRadius<T> {
    pub fn is_infinite(&self) -> bool {
        matches!(self, CriticalRadius::Infinite { .. })
    }

    /// The finite value, or `+∞`.
    pub fn value(&self) -> T {
        match self {
            CriticalRadius::Finite(r) => *r,
            CriticalRadius::Infinite { .. } => T::infinity(),
        }
    }
}

/// Default upper end of the `R_g` search: ten times the unit-volume radius.
pub fn default_search_radius<T: Real>(d: usize) -> T {
    T::lit(10.0) * unit_volume_radius::<T>(d)
}

/// `ω_d^{−1/d}`, radius of the ball of unit volume.
pub fn unit_volume_radius<T: Real>(d: usize) -> T {
    unit_ball_volume::<T>(d).powf(-T::one() / T::from_usize_lossy(d))
}

pub fn critical_radius<T: Real>(g: &RadialProfile<T>, d: usize) -> Result<CriticalRadius<T>> {
    critical_radius_in(g, d, default_search_radius(d))
}

/// [`critical_radius`] searching `[0, r_max]`.
pub fn critical_radius_in<T: Real>(g: &RadialProfile<T>, d: usize, r_max: T) -> Result<CriticalRadius<T>> {
    check_dim(d)?;
    g.validate()?;
    check_radius(r_max, "search radius")?;
    if !(g.value(T::zero()) < T::zero()) {
        return Err(Error::Precondition(format!(
            "g(0) = {} must be negative for a nontrivial optimum",
            g.value(T::zero())
        )));
    }
    let big_g = |s: T| primitive_exact(g, d, s);
    if big_g(r_max) <= T::zero() {
        return Ok(CriticalRadius::Infinite { searched_to: r_max });
    }
    // last sample with G ≤ 0, then bisect the following interval
    let samples = 4096;
    let step = r_max / T::from_usize_lossy(samples);
    let last = (0..samples)
        .rev()
        .find(|&i| big_g(step * T::from_usize_lossy(i)) <= T::zero())
        .unwrap_or(0);
    let lo = step * T::from_usize_lossy(last);
    let hi = step * T::from_usize_lossy(last + 1);
    Ok(CriticalRadius::Finite(bisect_last_nonpositive(big_g, lo, hi)))
}

fn check_coefficient<T: Real>(a: &RadialProfile<T>) -> Result<()> {
    a.validate()?;
    if a.min_value() < T::zero() {
        return Err(Error::Domain(format!(
            "coefficient a must be nonnegative, found {}",
            a.min_value()
        )));
    }
    Ok(())
}

/// `u_{a,R}(r) = (1/d) ∫_r^R s / (1 + a(s)) ds`.
pub fn radial_state<T: Real>(a: &RadialProfile<T>, big_r: T, d: usize, r: T) -> Result<T> {
    check_dim(d)?;
    check_coefficient(a)?;
    check_radius(big_r, "R")?;
    if !(r >= T::zero() && r <= big_r) {
        return Err(Error::Domain(format!("r = {r} outside [0, {big_r}]")));
    }
    let df = T::from_usize_lossy(d);
    if let Some(c) = a.is_constant() {
        return Ok((big_r * big_r - r * r) / (T::lit(2.0) * df * (T::one() + c)));
    }
    let breaks = sorted_breaks(r, big_r, &[a]);
    let integral = integrate_piecewise(|s| s / (T::one() + a.value(s)), &breaks, T::lit(QUAD_TOL));
    Ok(integral / df)
}

/// `∫₀^R G(s) s / (1 + a(s)) ds`.
fn weighted_primitive_integral<T: Real>(a: &RadialProfile<T>, g: &RadialProfile<T>, big_r: T, d: usize) -> T {
    if let (Some(c), true) = (a.is_constant(), !matches!(g, RadialProfile::Table { .. })) {
        return closed_form_integral(g, big_r, d) / (T::one() + c);
    }
    let breaks = sorted_breaks(T::zero(), big_r, &[a, g]);
    integrate_piecewise(
        |s| primitive_exact(g, d, s) * s / (T::one() + a.value(s)),
        &breaks,
        T::lit(QUAD_TOL),
    )
}

/// `∫₀^R G(s) s ds` for constant and indicator `g`.
fn closed_form_integral<T: Real>(g: &RadialProfile<T>, big_r: T, d: usize) -> T {
    let df = T::from_usize_lossy(d);
    let d2 = T::from_usize_lossy(d + 2);
    let pow = |r: T, k: usize| r.powi(k as i32);
    match g {
        RadialProfile::Constant { value } => *value * pow(big_r, d + 2) / (df * d2),
        RadialProfile::Indicator { r0, inner, outer } => {
            let m = big_r.min(*r0);
            let mut v = *inner * pow(m, d + 2) / (df * d2);
            if big_r > *r0 {
                let two = T::lit(2.0);
                v += ((*inner - *outer) * pow(*r0, d) * (big_r * big_r - *r0 * *r0) / two
                    + *outer * (pow(big_r, d + 2) - pow(*r0, d + 2)) / d2)
                    / df;
            }
            v
        }
        RadialProfile::Table { .. } => unreachable!("tables use quadrature"),
    }
}

/// `(1/d) ∫₀^R G(s) s/(1+a(s)) ds`: the cost without the surface factor `d ω_d`.
pub fn radial_cost_raw<T: Real>(a: &RadialProfile<T>, g: &RadialProfile<T>, big_r: T, d: usize) -> Result<T> {
    check_dim(d)?;
    check_coefficient(a)?;
    g.validate()?;
    check_radius(big_r, "R")?;
    Ok(weighted_primitive_integral(a, g, big_r, d) / T::from_usize_lossy(d))
}

/// `∫_{B_R} g·u_{a,R} dx`.
pub fn radial_cost<T: Real>(a: &RadialProfile<T>, g: &RadialProfile<T>, big_r: T, d: usize) -> Result<T> {
    let raw = radial_cost_raw(a, g, big_r, d)?;
    Ok(raw * T::from_usize_lossy(d) * unit_ball_volume::<T>(d))
}

/// `d/dR ∫_{B_R} g·u_{a,R} dx = ω_d G(R) R / (1 + a(R))`.
pub fn radial_cost_derivative<T: Real>(a: &RadialProfile<T>, g: &RadialProfile<T>, big_r: T, d: usize) -> Result<T> {
    check_dim(d)?;
    check_coefficient(a)?;
    let big_g = radial_primitive(g, d, big_r)?;
    Ok(unit_ball_volume::<T>(d) * big_g * big_r / (T::one() + a.value(big_r)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OptimalBall<T> {
    pub critical_radius: CriticalRadius<T>,
    pub radius: T,
    pub volume: T,
    pub cost: T,
    /// The ball has unit volume (the volume constraint is active).
    pub saturated: bool,
}

/// The optimal ball for `f ≡ 1`, volume bound 1: radius `min{ω_d^{−1/d}, R_g}`.
pub fn optimal_ball<T: Real>(g: &RadialProfile<T>, d: usize) -> Result<OptimalBall<T>> {
    optimal_ball_with_volume(g, d, T::one())
}

/// As [`optimal_ball`] with a general volume bound.
pub fn optimal_ball_with_volume<T: Real>(g: &RadialProfile<T>, d: usize, vol_bound: T) -> Result<OptimalBall<T>> {
    let rg = critical_radius(g, d)?;
    let r_cap = (vol_bound / unit_ball_volume::<T>(d)).powf(T::one() / T::from_usize_lossy(d));
    let (radius, saturated) = match rg {
        CriticalRadius::Finite(r) if r < r_cap => (r, false),
        _ => (r_cap, true),
    };
    let zero = RadialProfile::constant(T::zero());
    Ok(OptimalBall {
        critical_radius: rg,
        radius,
        volume: unit_ball_volume::<T>(d) * radius.powi(d as i32),
        cost: radial_cost(&zero, g, radius, d)?,
        saturated,
    })
}
