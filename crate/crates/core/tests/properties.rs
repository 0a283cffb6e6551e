use bcwave::bc_ops::{build_k, star_norm, TimeMatrix, TimeOpKind};
use bcwave::dtn::{assemble_dtn, DtnMatrix, TimePlan};
use bcwave::grid::{BoundaryGeometry, ScalarField, SpatialGrid, TimeGrid};
use bcwave::io::{decode_field, encode_field, FieldData};
use bcwave::observability::{certify, CertifyConfig, ConvexWeight};
use bcwave::recon::make_cgo_pair;
use proptest::prelude::*;

fn rectangle() -> impl Strategy<Value = SpatialGrid> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.3..3.0f64, 0.3..3.0f64, 2usize..12, 2usize..12)
        .prop_map(|(x0, y0, lx, ly, nx, ny)| SpatialGrid::new(&[x0, y0], &[lx, ly], &[nx, ny]).unwrap())
}

fn small_dtn(a: f64, b: f64) -> DtnMatrix {
    let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[3, 3]).unwrap();
    let c = ScalarField::from_fn(&g, |x| 1.0 + a * x[0] + b * x[1] * x[1]);
    assemble_dtn(&c, &TimePlan::new(0.4, 3, 2).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn surface_weights_sum_to_perimeter(g in rectangle()) {
        let b = BoundaryGeometry::new(&g);
        prop_assert!((b.total_weight() - g.perimeter()).abs() < 1e-12 * g.perimeter().max(1.0));
        for n in b.nodes() {
            prop_assert!((n.normal[0].hypot(n.normal[1]) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn field_files_round_trip(g in rectangle(), a in -5.0..5.0f64, k in 0.1..9.0f64) {
        let f = ScalarField::from_fn(&g, |x| a * (k * x[0]).cos() + x[1]);
        let (_, back) = decode_field(&encode_field("f", &f)).unwrap();
        prop_assert_eq!(back, FieldData::Real(f));
    }

    #[test]
    fn cgo_product_is_a_fourier_character(x0 in -6.0..6.0f64, x1 in -6.0..6.0f64) {
        let g = SpatialGrid::new(&[0.0, 0.0], &[1.0, 1.0], &[5, 5]).unwrap();
        let pair = make_cgo_pair(&[x0, x1], &g).unwrap();
        let dot = pair.xi[0] * pair.eta[0] + pair.xi[1] * pair.eta[1];
        prop_assert!(dot.abs() < 1e-12);
        for i in 0..g.n_nodes() {
            let x = g.coord(i);
            let want = num_complex::Complex64::new(0.0, x0 * x[0] + x1 * x[1]).exp();
            prop_assert!((pair.phi.values()[i] * pair.psi.values()[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn lattice_integral_is_exact_on_linear_signals(n in 1usize..20, t in 0.1..5.0f64, a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let time = TimeGrid::new(t, n).unwrap();
        let h = time.dt();
        let j = TimeMatrix::of(TimeOpKind::J, &time);
        let g: Vec<f64> = (0..=2 * n).map(|l| a + b * l as f64 * h).collect();
        let out = j.apply(&g, 1);
        for k in 0..=n {
            let (lo, hi) = (k as f64 * h, (2 * n - k) as f64 * h);
            let exact = 0.5 * (a * (hi - lo) + 0.5 * b * (hi * hi - lo * lo));
            prop_assert!((out[k] - exact).abs() < 1e-10 * (1.0 + exact.abs()), "k={} {} vs {}", k, out[k], exact);
        }
    }

    #[test]
    fn certificate_ignores_weight_offsets(offset in -50.0..50.0f64, cx in -3.0..0.5f64, cy in -3.0..0.5f64) {
        let g = SpatialGrid::new(&[1.0, 1.0], &[1.0, 1.0], &[6, 6]).unwrap();
        let c = ScalarField::constant(&g, 1.0);
        let w = ConvexWeight::quadratic(&[cx, cy]);
        let base = certify(&w, &c, &CertifyConfig::default()).unwrap();
        let moved = certify(&w.with_offset(offset), &c, &CertifyConfig::default()).unwrap();
        prop_assert_eq!(base.t_min, moved.t_min);
        prop_assert_eq!(&base.gamma, &moved.gamma);
        let t = 2.0 * base.t_min;
        prop_assert_eq!(base.c_of_t(t).unwrap(), moved.c_of_t(t).unwrap());
        prop_assert!(base.c_of_t(t).unwrap() > base.c_of_t(1.5 * t).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn star_norm_is_homogeneous_and_subadditive(a in -0.3..0.3f64, b in -0.3..0.3f64, s in -4.0..4.0f64) {
        let base = small_dtn(0.0, 0.0);
        let d1 = small_dtn(a, b).sub(&base).unwrap();
        let d2 = small_dtn(b, -a).sub(&base).unwrap();
        let n1 = star_norm(&d1).unwrap().total();
        let n2 = star_norm(&d2).unwrap().total();
        let ns = star_norm(&d1.scaled(s)).unwrap().total();
        prop_assert!((ns - s.abs() * n1).abs() <= 1e-8 * (1.0 + ns));
        let sum = star_norm(&d1.add(&d2).unwrap()).unwrap().total();
        prop_assert!(sum <= (n1 + n2) * (1.0 + 1e-8) + 1e-14);
    }

    #[test]
    fn connecting_form_is_symmetric(a in -0.4..0.4f64, b in -0.4..0.4f64) {
        let k = build_k(&small_dtn(a, b)).unwrap();
        let f = k.form();
        let scale = (0..f.nrows()).map(|i| f[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..f.nrows() {
            for j in 0..i {
                prop_assert!((f[(i, j)] - f[(j, i)]).abs() <= 1e-10 * scale);
            }
        }
    }
}
