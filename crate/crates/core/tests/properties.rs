use proptest::prelude::*;

use kirchhoff_lab::certify::{certify, g_alpha, ratio_criterion};
use kirchhoff_lab::eigen::{rayleigh, weight_m};
use kirchhoff_lab::expr::{parse, BinOp, Constant, Expr, Func, Var};
use kirchhoff_lab::grid::{
    coefficient_face_means, coefficient_gradient, divergence, grad_inner, grad_norm_sq, gradient, inner, integrate,
    laplacian, FaceField, Grid, ScalarField,
};
use kirchhoff_lab::linalg::{assemble_weighted_laplacian, pencil_eigensolve, smallest_positive, Pencil};
use kirchhoff_lab::random::{bounded_field, dirichlet_field, rng, sign_changing_field};
use kirchhoff_lab::Problem;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

prop_compose! {
    fn any_grid()(nx in 1usize..24, ny in 1usize..24, x0 in -2.0..2.0f64, y0 in -2.0..2.0f64,
                  hx in 0.01..0.5f64, hy in 0.01..0.5f64) -> Grid {
        Grid::new(nx, ny, x0, y0, hx, hy).unwrap()
    }
}

prop_compose! {
    fn grid_and_nodes(k: usize)(grid in any_grid())
        (vals in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, grid.len()), k), grid in Just(grid))
        -> (Grid, Vec<ScalarField>) {
        let fields = vals.into_iter().map(|v| ScalarField::from_values(grid, v).unwrap()).collect();
        (grid, fields)
    }
}

prop_compose! {
    fn grid_nodes_faces()(grid in any_grid())
        (u in prop::collection::vec(-1.0..1.0f64, grid.len()),
         xf in prop::collection::vec(-1.0..1.0f64, grid.n_xfaces()),
         yf in prop::collection::vec(-1.0..1.0f64, grid.n_yfaces()),
         grid in Just(grid)) -> (ScalarField, FaceField) {
        (ScalarField::from_values(grid, u).unwrap(), FaceField::from_values(grid, xf, yf).unwrap())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summation_by_parts((u, f) in grid_nodes_faces()) {
        let lhs = integrate(&divergence(&f).zip_map(&u, |d, u| d * u));
        let rhs = -f.inner(&gradient(&u));
        prop_assert!(close(lhs, rhs, 1e-12), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn laplacian_is_divergence_of_gradient((_, fields) in grid_and_nodes(1)) {
        let u = &fields[0];
        prop_assert_eq!(laplacian(u), divergence(&gradient(u)));
    }

    #[test]
    fn green_identities((_, fields) in grid_and_nodes(2)) {
        let (u, v) = (&fields[0], &fields[1]);
        prop_assert!(close(grad_norm_sq(u), -integrate(&u.zip_map(&laplacian(u), |a, b| a * b)), 1e-12));
        prop_assert!(close(inner(u, &laplacian(v)), inner(v, &laplacian(u)), 1e-12));
        prop_assert!(close(grad_inner(u, v), -inner(u, &laplacian(v)), 1e-12));
    }

    #[test]
    fn operators_are_linear((_, fields) in grid_and_nodes(2), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let (u, v) = (&fields[0], &fields[1]);
        let combo = u.scaled(a).add_scaled(b, v);
        let lhs = laplacian(&combo);
        let rhs = laplacian(u).scaled(a).add_scaled(b, &laplacian(v));
        let scale = 1.0 + lhs.max_abs();
        prop_assert!(lhs.add_scaled(-1.0, &rhs).max_abs() <= 1e-12 * scale);
        let g = gradient(&combo);
        let (gu, gv) = (gradient(u), gradient(v));
        let expected = gu.map(|x| a * x).zip_map(&gv.map(|x| b * x), |p, q| p + q);
        let diff = g.zip_map(&expected, |p, q| (p - q).abs());
        prop_assert!(diff.xfaces().iter().chain(diff.yfaces()).all(|&d| d <= 1e-12 * scale));
    }

    #[test]
    fn weight_divergence_identity(seed in 0u64..1000, alpha in 0.0..10.0f64, n in 3usize..20) {
        let grid = Grid::unit_square(n);
        let mut r = rng(seed);
        let c = bounded_field(grid, &mut r, 0.3, 3.0);
        let u = dirichlet_field(grid, &mut r, 3);
        let m = weight_m(&c, alpha).unwrap();
        let flux = coefficient_gradient(&c).zip_map(&coefficient_face_means(&c), |g, cf| g / ((cf + alpha) * (cf + alpha)));
        let lhs = integrate(&u.zip_map(&m, |u, m| u * u * m));
        let rhs = gradient(&u.map(|v| v * v)).inner(&flux);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn rayleigh_is_scale_invariant(seed in 0u64..1000, k in prop_oneof![-5.0..-0.1f64, 0.1..5.0f64]) {
        let grid = Grid::unit_square(10);
        let c = ScalarField::from_fn(grid, |x, _| 1.0 + x);
        let u = dirichlet_field(grid, &mut rng(seed), 3);
        let a = rayleigh(&c, 0.5, &u).unwrap();
        let b = rayleigh(&c, 0.5, &u.scaled(k)).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn pencil_residuals_are_small(seed in 0u64..1000, n in 2usize..7) {
        let grid = Grid::unit_square(n);
        let mut r = rng(seed);
        let w = bounded_field(grid, &mut r, 0.5, 2.0);
        let a = assemble_weighted_laplacian(&w).unwrap();
        let b: Vec<f64> = bounded_field(grid, &mut r, -1.0, 1.0).into_values();
        let pencil = Pencil::new(a, b).unwrap();
        for pair in pencil_eigensolve(&pencil).unwrap() {
            prop_assert!(pencil.relative_residual(pair.value, &pair.vector) <= 1e-8);
        }
        if let Some(pair) = smallest_positive(&pencil).unwrap() {
            prop_assert!(pair.value > 0.0);
            let hi = pair.vector.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = pair.vector.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert!(hi >= -lo);
        }
    }

    #[test]
    fn ratio_is_scale_invariant(seed in 0u64..1000, k in 0.1..10.0f64) {
        let c = bounded_field(Grid::unit_square(12), &mut rng(seed), 0.5, 2.0);
        prop_assert!(close(ratio_criterion(&c.scaled(k)), ratio_criterion(&c), 1e-12));
    }

    #[test]
    fn g_is_decreasing(seed in 0u64..1000, a in 0.0..50.0f64, step in 1e-3..10.0f64) {
        let c = bounded_field(Grid::unit_square(12), &mut rng(seed), 0.5, 2.0);
        prop_assert!(g_alpha(&c, a + step).unwrap() < g_alpha(&c, a).unwrap());
    }

    #[test]
    fn certify_is_deterministic(seed in 0u64..1000) {
        let grid = Grid::unit_square(10);
        let mut r = rng(seed);
        let a = bounded_field(grid, &mut r, 0.5, 2.0);
        let b = bounded_field(grid, &mut r, 0.5, 2.0);
        prop_assert_eq!(certify(&a, &b).unwrap(), certify(&a, &b).unwrap());
        prop_assert_eq!(certify(&a, &b).unwrap().to_json().to_string(), certify(&a, &b).unwrap().to_json().to_string());
    }

    #[test]
    fn frozen_energy_is_below_the_bracket(seed in 0u64..1000, s in 0.0..50.0f64) {
        let grid = Grid::unit_square(10);
        let mut r = rng(seed);
        let a = bounded_field(grid, &mut r, 0.2, 3.0);
        let b = bounded_field(grid, &mut r, 0.2, 3.0);
        let h = sign_changing_field(grid, &mut r);
        let p = Problem::new(a, b, h).unwrap();
        prop_assert!(p.phi(s).unwrap() <= p.s_upper_bound() * (1.0 + 1e-12));
        prop_assert!(p.m_field(s).unwrap().min() >= p.a0());
    }
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0..1e3f64).prop_map(Expr::Num),
        (0u32..100).prop_map(|k| Expr::Num(k as f64)),
        Just(Expr::Var(Var::X)),
        Just(Expr::Var(Var::Y)),
        Just(Expr::Const(Constant::Pi)),
        Just(Expr::Const(Constant::E)),
    ]
}

fn any_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
        let func = prop_oneof![
            Just(Func::Sin),
            Just(Func::Cos),
            Just(Func::Exp),
            Just(Func::Log),
            Just(Func::Sqrt),
            Just(Func::Abs),
            Just(Func::Tanh)
        ];
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, l, r)| Expr::Binary(o, Box::new(l), Box::new(r))),
            (func, inner).prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #[test]
    fn printed_expressions_reparse(e in any_expr()) {
        let text = e.to_string();
        prop_assert_eq!(parse(&text).unwrap(), e, "{}", text);
    }

    #[test]
    fn binomial_identity(x in -10.0..10.0f64, y in -10.0..10.0f64) {
        let lhs = parse("(x+y)^2").unwrap().eval(x, y).unwrap();
        let rhs = parse("x^2+2*x*y+y^2").unwrap().eval(x, y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
