//! Finite probabilities on right-hand sides. By linearity of the resolvent the
//! averaged cost `Σ wᵢ ∫ g R_Ω(fᵢ)` equals the cost of the barycenter `Σ wᵢ fᵢ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample_field, DomainMask, FieldDescriptor, GridSpec, ScalarField};
use crate::poisson::cost;
use crate::scalar::Real;

pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble<T> {
    grid: GridSpec<T>,
    members: Vec<(T, ScalarField<T>)>,
}

impl<T: Real> Ensemble<T> {
    pub fn new(grid: GridSpec<T>, members: Vec<(T, ScalarField<T>)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidDescriptor("ensemble has no members".into()));
        }
        let mut total = T::zero();
        for (i, (w, f)) in members.iter().enumerate() {
            if !(*w >= T::zero()) || !w.is_finite() {
                return Err(Error::InvalidDescriptor(format!("member {i}: weight {w} must be nonnegative")));
            }
            grid.check_same(f.grid(), &format!("ensemble member {i}"))?;
            total += *w;
        }
        if (total - T::one()).abs() > T::lit(WEIGHT_TOL) {
            return Err(Error::InvalidDescriptor(format!("ensemble weights sum to {total}, not 1")));
        }
        Ok(Self { grid, members })
    }

    /// Equal weights `1/m`.
    pub fn uniform(grid: GridSpec<T>, fields: Vec<ScalarField<T>>) -> Result<Self> {
        let w = T::one() / T::from_usize_lossy(fields.len().max(1));
        Self::new(grid, fields.into_iter().map(|f| (w, f)).collect())
    }

    pub fn from_manifest(grid: GridSpec<T>, entries: &[ManifestEntry<T>]) -> Result<Self> {
        let members = entries
            .iter()
            .map(|e| Ok((e.weight, sample_field(&e.field_descriptor, &grid)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, members)
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn members(&self) -> &[(T, ScalarField<T>)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `Σ wᵢ ‖fᵢ‖_{L²}`.
    pub fn mean_norm(&self) -> T {
        self.members.iter().map(|(w, f)| *w * f.l2_norm()).sum()
    }
}

/// One entry of an ensemble manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ManifestEntry<T> {
    pub weight: T,
    pub field_descriptor: FieldDescriptor<T>,
}

/// `count` i.i.d. members `f0 + σ·ξ` with `ξ` cellwise standard normal, equal weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SamplerConfig<T> {
    pub f0: FieldDescriptor<T>,
    pub sigma: T,
    pub count: usize,
    pub seed: u64,
}

pub fn sample_ensemble<T: Real>(config: &SamplerConfig<T>, grid: &GridSpec<T>) -> Result<Ensemble<T>> {
    if config.count == 0 {
        return Err(Error::InvalidDescriptor("sampler count must be positive".into()));
    }
    if !(config.sigma >= T::zero()) || !config.sigma.is_finite() {
        return Err(Error::InvalidDescriptor(format!("sampler sigma {} must be nonnegative", config.sigma)));
    }
    let f0 = sample_field(&config.f0, grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let fields = (0..config.count)
        .map(|_| {
            let noise: Vec<T> = f0
                .values()
                .iter()
                .map(|&x| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    x + config.sigma * T::lit(xi)
                })
                .collect();
            ScalarField::from_values(*grid, noise)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::uniform(*grid, fields)
}

/// `B_P = Σ wᵢ fᵢ`.
pub fn barycenter<T: Real>(p: &Ensemble<T>) -> ScalarField<T> {
    let mut acc = vec![T::zero(); p.grid.cell_count()];
    for (w, f) in &p.members {
        for (a, &x) in acc.iter_mut().zip(f.values()) {
            *a += *w * x;
        }
    }
    ScalarField::from_raw(p.grid, acc)
}

/// `Σ wᵢ · cost(mask, fᵢ, g)`; member solves run in parallel, the sum is taken in member order.
pub fn averaged_cost<T: Real>(p: &Ensemble<T>, mask: &DomainMask<T>, g: &ScalarField<T>, tol: T) -> Result<T> {
    p.grid.check_same(mask.grid(), "mask")?;
    let costs = p
        .members
        .par_iter()
        .map(|(_, f)| cost(mask, f, g, tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(p.members.iter().zip(costs).map(|((w, _), c)| *w * c).sum())
}

/// `|averaged_cost(P) − cost(B_P)|`.
pub fn reduction_gap<T: Real>(p: &Ensemble<T>, mask: &DomainMask<T>, g: &ScalarField<T>, tol: T) -> Result<T> {
    let averaged = averaged_cost(p, mask, g, tol)?;
    let reduced = cost(mask, &barycenter(p), g, tol)?;
    Ok((averaged - reduced).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use rand::Rng;

    fn grid() -> GridSpec<f64> {
        make_grid(2, 1.0_f64, 24).unwrap()
    }

    #[test]
    fn barycenter_examples() {
        let g = grid();
        let f = ScalarField::from_fn(g, |p| p[0] - p[1] * p[1]);
        assert_eq!(barycenter(&Ensemble::new(g, vec![(1.0, f.clone())]).unwrap()), f);
        let sym = Ensemble::new(g, vec![(0.5, f.clone()), (0.5, f.map(|x| -x))]).unwrap();
        assert_eq!(barycenter(&sym).max_abs(), 0.0);
        let mix = Ensemble::new(
            g,
            vec![(0.3, ScalarField::constant(g, 1.0)), (0.7, ScalarField::constant(g, 2.0))],
        )
        .unwrap();
        assert!(barycenter(&mix).values().iter().all(|&x| (x - 1.7).abs() < 1e-15));
    }

    #[test]
    fn invalid_ensembles_rejected() {
        let g = grid();
        let f = ScalarField::constant(g, 1.0);
        assert!(Ensemble::new(g, vec![]).is_err());
        assert!(Ensemble::new(g, vec![(0.5, f.clone()), (0.6, f.clone())]).is_err());
        assert!(Ensemble::new(g, vec![(1.5, f.clone()), (-0.5, f.clone())]).is_err());
        let other = ScalarField::constant(make_grid(2, 1.0_f64, 8).unwrap(), 1.0);
        assert!(Ensemble::new(g, vec![(1.0, other)]).is_err());
    }

    #[test]
    fn reduction_identity_on_random_instances() {
        let g = grid();
        let tol = 1e-10;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let fields: Vec<_> = (0..5)
                .map(|_| ScalarField::from_fn(g, |_| rng.gen_range(-1.0..2.0)))
                .collect();
            let p = Ensemble::uniform(g, fields).unwrap();
            let mask = DomainMask::from_fn(g, |_| rng.gen_bool(0.7));
            let gg = ScalarField::from_fn(g, |_| rng.gen_range(-1.0..1.0));
            let gap = reduction_gap(&p, &mask, &gg, tol).unwrap();
            assert!(gap <= 10.0 * tol * p.mean_norm() * gg.l2_norm(), "{gap}");
        }
    }

    #[test]
    fn symmetric_ensemble_has_zero_average() {
        let g = grid();
        let f = ScalarField::from_fn(g, |p| 1.0 + p[0]);
        let gg = ScalarField::from_fn(g, |p| p[1] - 0.3);
        let mask = DomainMask::ball(g, [0.5, 0.5], 0.3);
        let p = Ensemble::new(g, vec![(0.5, f.clone()), (0.5, f.map(|x| -x))]).unwrap();
        assert!(averaged_cost(&p, &mask, &gg, 1e-10).unwrap().abs() <= 10.0 * 1e-10 * f.l2_norm() * gg.l2_norm());
        let single = Ensemble::new(g, vec![(1.0, f.clone())]).unwrap();
        assert_eq!(
            averaged_cost(&single, &mask, &gg, 1e-10).unwrap(),
            cost(&mask, &f, &gg, 1e-10).unwrap()
        );
    }

    #[test]
    fn sampler_is_reproducible() {
        let g = grid();
        let cfg = SamplerConfig {
            f0: FieldDescriptor::Constant { c: 1.0 },
            sigma: 0.2,
            count: 4,
            seed: 42,
        };
        let a = sample_ensemble(&cfg, &g).unwrap();
        let b = sample_ensemble(&cfg, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let mean = barycenter(&a).integral();
        assert!((mean - 1.0).abs() < 0.05);
        let other = sample_ensemble(&SamplerConfig { seed: 43, ..cfg }, &g).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn manifest_roundtrip() {
        let g = grid();
        let json = r#"[
            {"weight": 0.25, "field_descriptor": {"kind": "constant", "c": 2.0}},
            {"weight": 0.75, "field_descriptor": {"kind": "gaussian", "center": [0.5, 0.5], "sigma": 0.1, "amplitude": 1.0}}
        ]"#;
        let entries: Vec<ManifestEntry<f64>> = serde_json::from_str(json).unwrap();
        let p = Ensemble::from_manifest(g, &entries).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.members()[0].1.get(0), 2.0);
    }
}
