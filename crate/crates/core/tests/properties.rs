//! Structural properties of the discrete operators, the solvers, the
//! control iteration and the expression parser.

use nalgebra::DMatrix;
use proptest::prelude::*;

use navier_wall::control::{energy_f, solve_control_fixed_point, ControlConfig};
use navier_wall::expr::{parse_expr, BinOp, Expr, Func, Var};
use navier_wall::fields::{
    advection_term, discrete_divergence, discrete_gradient, face_inner, work, BoundaryCondition, FaceField,
    FlowState, Slip, ViscosityField, WallCondition,
};
use navier_wall::grid::{build_domain_grid, DomainSpec, Lateral, MacGrid};
use navier_wall::stokes::{solve_stokes, FlowModel, SolverConfig};
use navier_wall::Error;

fn box_grid(nx: usize, ny: usize, grading: f64, lateral: Lateral) -> MacGrid {
    build_domain_grid(&DomainSpec::new(1.0, lateral).unwrap(), nx, ny, grading).unwrap()
}

/// Face field from `vals`, zeroed on faces normal to a wall.
fn interior_field(grid: &MacGrid, vals: &[f64]) -> FaceField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut f = FaceField::zeros(grid);
    let mut it = vals.iter().cycle();
    for j in 0..ny {
        for i in 0..=nx {
            let wall = !grid.periodic_x() && (i == 0 || i == nx);
            f.u[j * (nx + 1) + i] = if wall { 0.0 } else { *it.next().unwrap() };
        }
        if grid.periodic_x() {
            f.u[j * (nx + 1) + nx] = f.u[j * (nx + 1)];
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            f.v[j * nx + i] = if j == 0 || j == ny { 0.0 } else { *it.next().unwrap() };
        }
    }
    f
}

fn state_of(grid: &MacGrid, f: FaceField) -> FlowState {
    let mut s = FlowState::zeros(grid);
    s.u = f.u;
    s.v = f.v;
    s
}

fn cells_inner(grid: &MacGrid, a: &[f64], b: &[f64]) -> f64 {
    let nx = grid.nx();
    let mut s = 0.0;
    for j in 0..grid.ny() {
        for i in 0..nx {
            s += grid.dx(i) * grid.dy(j) * a[j * nx + i] * b[j * nx + i];
        }
    }
    s
}

fn lateral() -> impl Strategy<Value = Lateral> {
    prop_oneof![Just(Lateral::Walls), Just(Lateral::Periodic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// `<grad p, u> = -<p, div u>` for velocities vanishing on wall-normal faces.
    #[test]
    fn gradient_is_minus_adjoint_of_divergence(
        nx in 8usize..12, ny in 8usize..12, grading in 1.0f64..4.0, lat in lateral(),
        vals in prop::collection::vec(-1.0f64..1.0, 64), pv in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let g = box_grid(nx, ny, grading, lat);
        let u = state_of(&g, interior_field(&g, &vals));
        let p: Vec<f64> = (0..nx * ny).map(|k| pv[k % pv.len()] + 0.01 * k as f64).collect();
        let lhs = face_inner(&discrete_gradient(&p, &g).unwrap(), &u.velocity(), &g).unwrap();
        let rhs = -cells_inner(&g, &p, &discrete_divergence(&u, &g).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }

    /// The viscous operator is symmetric in the volume-weighted inner product,
    /// for no-slip and Navier-slip bottoms alike.
    #[test]
    fn viscous_operator_is_symmetric(
        nx in 8usize..11, ny in 8usize..11, grading in 1.0f64..3.0, beta in 0.0f64..5.0, lat in lateral(),
        a in prop::collection::vec(-1.0f64..1.0, 50), b in prop::collection::vec(-1.0f64..1.0, 70),
    ) {
        let g = box_grid(nx, ny, grading, lat);
        let visc = ViscosityField::uniform(&g, 0.7);
        let bc = BoundaryCondition::no_slip(&g).with_bottom(WallCondition::NavierSlip(vec![Slip::Robin(beta); nx + 1]));
        let ua = state_of(&g, interior_field(&g, &a));
        let ub = state_of(&g, interior_field(&g, &b));
        let aa = navier_wall::fields::viscous_operator(&ua, &visc, &bc, &g).unwrap();
        let ab = navier_wall::fields::viscous_operator(&ub, &visc, &bc, &g).unwrap();
        let l = face_inner(&aa, &ub.velocity(), &g).unwrap();
        let r = face_inner(&ab, &ua.velocity(), &g).unwrap();
        prop_assert!((l - r).abs() <= 1e-10 * (1.0 + l.abs()), "{} vs {}", l, r);
        prop_assert!(face_inner(&aa, &ua.velocity(), &g).unwrap() > 0.0);
    }

    /// The skew-symmetric advection form is antisymmetric for any advecting field.
    #[test]
    fn advection_is_skew(
        nx in 8usize..11, ny in 8usize..11, grading in 1.0f64..3.0, lat in lateral(),
        a in prop::collection::vec(-1.0f64..1.0, 40), u in prop::collection::vec(-1.0f64..1.0, 60),
        w in prop::collection::vec(-1.0f64..1.0, 80),
    ) {
        let g = box_grid(nx, ny, grading, lat);
        let sa = state_of(&g, interior_field(&g, &a));
        let su = state_of(&g, interior_field(&g, &u));
        let sw = state_of(&g, interior_field(&g, &w));
        let nu_w = face_inner(&advection_term(&sa, &su, &g).unwrap(), &sw.velocity(), &g).unwrap();
        let nw_u = face_inner(&advection_term(&sa, &sw, &g).unwrap(), &su.velocity(), &g).unwrap();
        prop_assert!((nu_w + nw_u).abs() <= 1e-12 * (1.0 + nu_w.abs()), "{} vs {}", nu_w, nw_u);
        let self_term = face_inner(&advection_term(&sa, &su, &g).unwrap(), &su.velocity(), &g).unwrap();
        prop_assert!(self_term.abs() <= 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Solver output is discretely divergence-free and obeys the energy
    /// identity `nu E(u) + sum beta w u_b^2 = int f . u`.
    #[test]
    fn stokes_solutions_are_solenoidal_and_balance_energy(
        c in prop::collection::vec(-3.0f64..3.0, 4), beta in 0.0f64..4.0, grading in 1.0f64..3.0,
    ) {
        let g = box_grid(12, 12, grading, Lateral::Walls);
        let f = FaceField::from_fn(&g, |x, y| (c[0] * y.sin() + c[1] * x * y, c[2] * (x * x) + c[3] * y));
        let bc = BoundaryCondition::no_slip(&g).with_bottom(WallCondition::NavierSlip(vec![Slip::Robin(beta); 13]));
        let visc = ViscosityField::uniform(&g, 1.3);
        let (s, _) = solve_stokes(&g, &visc, &bc, &f, &SolverConfig::default()).unwrap();
        let div = discrete_divergence(&s, &g).unwrap().iter().fold(0.0f64, |m, d| m.max(d.abs()));
        prop_assert!(div <= 1e-8 * (1.0 + s.max_abs_velocity()));
        let bulk = navier_wall::fields::dirichlet_energy(&s, &visc, &g).unwrap();
        let wall: f64 = g.bottom_weights().iter().zip(&s.walls.bottom).map(|(w, u)| beta * w * u * u).sum();
        let w = work(&f, &s, &g).unwrap();
        prop_assert!((bulk + wall - w).abs() <= 1e-8 * (1.0 + w.abs()), "{} vs {}", bulk + wall, w);
    }

    /// Every control iterate keeps the mass exactly, the energy never
    /// increases, and the state satisfies F = -W/2.
    #[test]
    fn control_keeps_mass_and_descends(m in 0.01f64..1.0, amp in 0.5f64..3.0, xc in 0.2f64..0.8) {
        let g = box_grid(8, 8, 1.0, Lateral::Walls);
        let f = FaceField::from_fn(&g, |x, y| (amp * (-((x - xc).powi(2) + (y - 0.2).powi(2)) / 0.02).exp(), 0.0));
        let ctl = ControlConfig { model: FlowModel::Stokes, tol: 1e-6, max_iters: 3000, ..Default::default() };
        let cs = solve_control_fixed_point(m, &f, 1.0, &ctl, &g, &SolverConfig::default()).unwrap();
        prop_assert!(cs.mass_residual <= 1e-12);
        prop_assert!(cs.h.iter().all(|h| *h >= 0.0));
        for pair in cs.history.windows(2) {
            prop_assert!(pair[1].f_value <= pair[0].f_value + 1e-12 * (1.0 + pair[0].f_value.abs()));
        }
        let fv = energy_f(&cs.h, cs.flow(), &f, 1.0, &g).unwrap();
        prop_assert_eq!(fv, cs.f_value);
        prop_assert!((cs.f_value + 0.5 * cs.work).abs() <= 1e-8 * (1.0 + cs.work.abs()));
    }
}

/// Volume-weighted matrix of the no-slip viscous operator on interior faces.
fn assembled_operator(g: &MacGrid, beta: Option<f64>) -> DMatrix<f64> {
    let visc = ViscosityField::uniform(g, 1.0);
    let bc = match beta {
        None => BoundaryCondition::no_slip(g),
        Some(b) => BoundaryCondition::no_slip(g).with_bottom(WallCondition::NavierSlip(vec![Slip::Robin(b); g.nx() + 1])),
    };
    let probe = interior_field(g, &[1.0]);
    let slots: Vec<(usize, usize)> = probe
        .u
        .iter()
        .enumerate()
        .filter(|(k, v)| **v != 0.0 && (!g.periodic_x() || k % (g.nx() + 1) != g.nx()))
        .map(|(k, _)| (0, k))
        .chain(probe.v.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| (1, k)))
        .collect();
    let n = slots.len();
    let unit = |(c, k): (usize, usize)| {
        let mut f = FaceField::zeros(g);
        if c == 0 {
            f.u[k] = 1.0;
            if g.periodic_x() && k % (g.nx() + 1) == 0 {
                f.u[k + g.nx()] = 1.0;
            }
        } else {
            f.v[k] = 1.0;
        }
        state_of(g, f)
    };
    let mut m = DMatrix::zeros(n, n);
    for (b, &sb) in slots.iter().enumerate() {
        let eb = unit(sb);
        let ab = navier_wall::fields::viscous_operator(&eb, &visc, &bc, g).unwrap();
        for (a, &sa) in slots.iter().enumerate() {
            m[(a, b)] = face_inner(&ab, &unit(sa).velocity(), g).unwrap();
        }
    }
    m
}

#[test]
fn operator_is_spd_on_8x8() {
    for (lat, grading, beta) in [
        (Lateral::Walls, 1.0, None),
        (Lateral::Walls, 3.0, Some(2.0)),
        (Lateral::Periodic, 2.0, Some(0.5)),
        (Lateral::Periodic, 1.0, None),
    ] {
        let g = box_grid(8, 8, grading, lat);
        let m = assembled_operator(&g, beta);
        let asym = (&m - m.transpose()).abs().max();
        assert!(asym <= 1e-10 * m.abs().max(), "asymmetry {asym}");
        let eig = m.clone().symmetric_eigen().eigenvalues;
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0, "{lat:?} grading {grading}: smallest eigenvalue {min}");
    }
}

#[test]
fn free_slip_bottom_stays_definite() {
    // with free slip at the bottom and no-slip at the top the operator stays definite
    let g = box_grid(8, 8, 1.0, Lateral::Periodic);
    let eig = assembled_operator(&g, Some(0.0)).symmetric_eigen().eigenvalues;
    assert!(eig.iter().all(|e| *e > 0.0));
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (0u32..1000).prop_map(f64::from),
        (0u32..100000).prop_map(|k| k as f64 / 1000.0),
        Just(0.5),
        Just(1e-7),
        Just(2.5e12),
    ]
}

fn ast() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![number().prop_map(Expr::Num), Just(Expr::Var(Var::X)), Just(Expr::Var(Var::Y))];
    leaf.prop_recursive(6, 48, 3, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
        let unary = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Abs)];
        let nary = prop_oneof![Just(Func::Min), Just(Func::Max)];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| Expr::Binary(o, Box::new(a), Box::new(b))),
            (unary, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (nary, prop::collection::vec(inner, 1..4)).prop_map(|(f, a)| Expr::Call(f, a)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Printing any tree and reparsing it gives the same tree back.
    #[test]
    fn printed_trees_reparse_identically(e in ast()) {
        let text = e.to_string();
        let back = parse_expr(&text).unwrap();
        prop_assert_eq!(&back, &e, "printed as {}", text);
    }

    /// The parser never panics; failures carry an offset inside the input.
    #[test]
    fn parser_is_total(s in "[0-9xy+*/^().,a-z -]{0,40}") {
        match parse_expr(&s) {
            Ok(e) => prop_assert_eq!(parse_expr(&e.to_string()).unwrap(), e),
            Err(Error::Parse { offset, .. }) => prop_assert!(offset <= s.len()),
            Err(other) => prop_assert!(false, "unexpected error {other:?}"),
        }
    }
}
