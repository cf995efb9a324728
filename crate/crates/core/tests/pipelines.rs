//! Cross-module behaviour through the public API.

use navier_wall::cell::{flat_cell_coefficient, solve_cell_longitudinal, solve_cell_transverse};
use navier_wall::control::{linearized_perturbation, m_sweep, ControlConfig};
use navier_wall::fields::{velocity_l2_diff, BoundaryCondition, FaceField, Forcing, ViscosityField};
use navier_wall::grid::{build_domain_grid, DomainSpec, Lateral, LayerProfile, Profile, ProfileKind};
use navier_wall::stokes::{solve_stokes, FlowModel, SolverConfig};
use navier_wall::thinlayer::{phi_eps_energy, solve_thin_layer, Resolution, ThinLayerProblem};
use navier_wall::walllaw::{solve_limit, WallLawSpec};

fn grid(n: usize, lateral: Lateral) -> navier_wall::grid::MacGrid {
    build_domain_grid(&DomainSpec::new(1.0, lateral).unwrap(), n, n, 1.0).unwrap()
}

#[test]
fn large_constant_law_approaches_no_slip() {
    let g = grid(16, Lateral::Walls);
    let f = FaceField::from_fn(&g, |_, y| (1.0 - 2.0 * y, 0.0));
    let cfg = SolverConfig::default();
    let (u0, _) = solve_limit(&f, 1.0, &WallLawSpec::no_slip(), FlowModel::Stokes, &g, &cfg).unwrap();
    let errs: Vec<f64> = [1e2, 1e4, 1e6]
        .iter()
        .map(|mu| {
            let (u, _) = solve_limit(&f, 1.0, &WallLawSpec::constant(*mu), FlowModel::Stokes, &g, &cfg).unwrap();
            velocity_l2_diff(&u, &u0, &g).unwrap()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    assert!(errs[2] < 1e-3 * errs[0], "{errs:?}");
}

#[test]
fn infinite_law_equals_all_no_slip() {
    let g = grid(16, Lateral::Walls);
    let f = FaceField::from_fn(&g, |x, y| (x * y, -y));
    let cfg = SolverConfig::default();
    let (a, _) = solve_limit(&f, 1.0, &WallLawSpec::no_slip(), FlowModel::Stokes, &g, &cfg).unwrap();
    let (b, _) = solve_stokes(&g, &ViscosityField::uniform(&g, 1.0), &BoundaryCondition::no_slip(&g), &f, &cfg).unwrap();
    assert!(velocity_l2_diff(&a, &b, &g).unwrap() <= 1e-10);
}

#[test]
fn poiseuille_navier_stokes_equals_stokes() {
    let g = grid(16, Lateral::Periodic);
    let f = FaceField::from_fn(&g, |_, _| (2.0, 0.0));
    let spec = WallLawSpec::over_h(1.0, Profile::flat(1.0));
    let cfg = SolverConfig::default();
    let (s, _) = solve_limit(&f, 1.0, &spec, FlowModel::Stokes, &g, &cfg).unwrap();
    let (n, _) = solve_limit(&f, 1.0, &spec, FlowModel::NavierStokes, &g, &cfg).unwrap();
    assert!(velocity_l2_diff(&s, &n, &g).unwrap() <= 1e-9);
}

#[test]
fn thin_layer_at_rest() {
    let layer = LayerProfile::new(ProfileKind::Fixed, Profile::flat(1.0), 0.1).unwrap();
    let prob = ThinLayerProblem {
        domain: DomainSpec::new(1.0, Lateral::Walls).unwrap().with_layer(layer).unwrap(),
        nu: 1.0,
        f: Forcing::zero(),
        model: FlowModel::NavierStokes,
    };
    let sol = solve_thin_layer(&prob, &Resolution::uniform(16, 16), &SolverConfig::default()).unwrap();
    assert_eq!(sol.state.max_abs_velocity(), 0.0);
    assert_eq!(phi_eps_energy(&sol.state, &prob, &sol.grid).unwrap(), 0.0);
}

#[test]
fn flat_cells_of_several_depths() {
    let cfg = SolverConfig::default();
    for depth in [0.5, 1.0, 2.0] {
        let h = Profile::flat(depth);
        let l = solve_cell_longitudinal(&h, 8, 64, &cfg).unwrap();
        let t = solve_cell_transverse(&h, 8, 64).unwrap();
        let e = flat_cell_coefficient(depth);
        assert!((l.c - e).abs() < 0.01 * e && (t.c - e).abs() < 0.01 * e);
    }
}

#[test]
fn perturbation_trace_stays_bounded() {
    let g = grid(16, Lateral::Walls);
    let f = Forcing::parse("exp(-((x-0.35)^2)/0.01-y/0.1)", "0").unwrap().sample(&g).unwrap();
    let ctl = ControlConfig {
        model: FlowModel::Stokes,
        tol: 1e-6,
        ..Default::default()
    };
    let cfg = SolverConfig::default();
    let r = m_sweep(&[0.2, 0.1, 0.05], &f, 0.05, &g, &cfg, &ctl, 0.05, 1).unwrap();
    assert!(!r.failed && !r.degenerate);
    let l1: Vec<f64> = r.entries.iter().map(|e| e.trace_l1_v).collect();
    let (lo, hi) = l1.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
    assert!(hi / lo < 10.0, "{l1:?}");
    for e in &r.entries {
        assert!(e.j_m <= 0.0, "J_m = {} at m = {}", e.j_m, e.m);
        assert!(e.moments[0] > 0.999 && e.moments[0] < 1.001);
    }
    // the perturbation of the no-slip flow itself vanishes
    let (u0, _) = solve_limit(&f, 0.05, &WallLawSpec::no_slip(), FlowModel::Stokes, &g, &cfg).unwrap();
    let p = linearized_perturbation(0.1, &u0, &f, 0.05, FlowModel::Stokes, &g, &cfg).unwrap();
    assert!(p.trace_l1 == 0.0 && p.j_m.abs() < 1e-12);
}
