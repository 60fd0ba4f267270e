use signshape::grid::{self, FieldDescriptor};
use signshape::io::{read_field, read_mask, write_field, write_mask};
use signshape::shapeopt::OptimizerOptions;
use signshape::*;

#[test]
fn single_precision_tracks_double() {
    let g64 = make_grid(2, 1.0_f64, 32).unwrap();
    let g32 = make_grid(2, 1.0_f32, 32).unwrap();
    let m64 = grid::DomainMask::ball(g64, [0.5, 0.5], 0.35);
    let m32 = grid::DomainMask::ball(g32, [0.5, 0.5], 0.35);
    let u64 = solve_dirichlet(&m64, &grid::ScalarField::constant(g64, 1.0), 1e-10).unwrap().0;
    let u32 = solve_dirichlet(&m32, &grid::ScalarField::constant(g32, 1.0), 1e-5).unwrap().0;
    let worst = u64
        .values()
        .iter()
        .zip(u32.values())
        .map(|(a, &b)| (a - b as f64).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-5 * u64.max_abs(), "{worst}");
}

#[test]
fn single_precision_optimizer_runs() {
    let grid = make_grid(2, 2.0_f32, 24).unwrap();
    let one = grid::ScalarField::constant(grid, 1.0_f32);
    let minus = grid::ScalarField::constant(grid, -1.0_f32);
    let opts = OptimizerOptions::<f32> {
        tol: 1e-5,
        ..OptimizerOptions::default()
    };
    let res = optimize_domain(&one, &minus, 1.0, &opts).unwrap();
    assert!(res.saturated);
    assert!((res.volume - 1.0).abs() <= 2.0 * grid.cell_volume());
}

#[test]
fn csv_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid = make_grid(2, 2.0, 12).unwrap();
    let desc = FieldDescriptor::Gaussian {
        center: vec![0.7, 1.1],
        sigma: 0.3,
        amplitude: -2.5,
    };
    let f = sample_field(&desc, &grid).unwrap();
    let mask = sublevel_mask(&f, -0.5, Relation::Lt);
    write_field(&f, dir.path().join("f.csv")).unwrap();
    write_mask(&mask, dir.path().join("m.csv")).unwrap();
    assert_eq!(read_field(dir.path().join("f.csv"), &grid).unwrap(), f);
    assert_eq!(read_mask(dir.path().join("m.csv"), &grid).unwrap(), mask);
    let from_csv = sample_field(
        &FieldDescriptor::Csv {
            path: dir.path().join("f.csv"),
        },
        &grid,
    )
    .unwrap();
    assert_eq!(from_csv, f);
    let other = make_grid(2, 2.0, 10).unwrap();
    assert!(read_field(dir.path().join("f.csv"), &other).is_err());
}

#[test]
fn saturated_optimum_beats_the_unit_disk_and_matches_its_radius() {
    let grid = make_grid(2, 2.0, 64).unwrap();
    let one = ScalarField::constant(grid, 1.0);
    let minus = ScalarField::constant(grid, -1.0);
    let res = optimize_domain(&one, &minus, 1.0, &OptimizerOptions::default()).unwrap();
    let r = signshape::radial::unit_volume_radius::<f64>(2);
    let disk = DomainMask::ball(grid, grid.box_center(), r);
    if disk.volume() <= 1.0 {
        assert!(res.cost_value <= cost(&disk, &one, &minus, 1e-10).unwrap() + 1e-12);
    }
    // the continuum optimum cost is −π R⁴/8 for the unit-volume disk
    let exact = -std::f64::consts::PI * r.powi(4) / 8.0;
    assert!((res.cost_value / exact - 1.0).abs() <= 4.0 * grid.h(), "{} vs {exact}", res.cost_value);
}

#[test]
fn obstacle_positivity_set_matches_optimal_ball() {
    let grid = make_grid(2, 2.0, 96).unwrap();
    let c = grid.box_center();
    let g = ScalarField::from_fn(grid, |p| if grid.distance(p, c) < 0.3 { -1.0 } else { 1.0 });
    let domain = obstacle::unconstrained_optimal_domain(
        &ScalarField::constant(grid, 1.0),
        &g,
        1e-10,
        obstacle::default_floor(&g, 1e-10),
    )
    .unwrap();
    let ball = optimal_ball_with(0.3);
    assert!((domain.volume() / ball - 1.0).abs() <= 0.05, "{} vs {ball}", domain.volume());
}

fn optimal_ball_with(r0: f64) -> f64 {
    optimal_ball(&RadialProfile::indicator(r0, -1.0, 1.0), 2).unwrap().volume
}
