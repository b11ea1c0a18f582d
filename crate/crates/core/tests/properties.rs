use ekflow::config::parse_config_str;
use ekflow::fluid::{project_constrained, strain_rate};
use ekflow::geometry::{build_phase_map, PhaseParams, RigidPose, ShapeSpec};
use ekflow::nernst_planck::{np_stable_dt, step_np, total_moles, SpeciesParams};
use ekflow::output::{csv_record, parse_diagnostics, write_diagnostics};
use ekflow::snapshot::Snapshot;
use ekflow::stepper::DiagnosticRow;
use ekflow::{Grid, MacField, ScalarField};
use proptest::prelude::*;

fn grid(n: usize) -> Grid {
    Grid::new(n, n, -1.0, 1.0, -1.0, 1.0).unwrap()
}

fn phase(g: &Grid, center: [f64; 2], radius: f64, theta: f64) -> ekflow::geometry::PhaseMap {
    let pose = RigidPose { theta, ..RigidPose::at_rest(center) };
    let params = PhaseParams { kappa1: 3.0, kappa2: 1.0, mu_p: 2.0, mu_f: 1.0 };
    build_phase_map(&pose, &ShapeSpec::Disk { radius }, g, params).unwrap()
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e3..1e3f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ion_step_conserves_moles_and_sign(
        seed in proptest::collection::vec(0.0..2.0f64, 16 * 16),
        psi_seed in proptest::collection::vec(-3.0..3.0f64, 16 * 16),
        flow in -2.0..2.0f64,
        z in prop_oneof![Just(-2), Just(-1), Just(1), Just(2)],
        d in 0.1..2.0f64,
        cx in -0.3..0.3f64,
    ) {
        let g = grid(16);
        let ph = phase(&g, [cx, 0.1], 0.3, 0.0);
        let mut n = ScalarField { nx: 16, ny: 16, data: seed };
        for (v, f) in n.data.iter_mut().zip(&ph.fluid) {
            if !f { *v = 0.0; }
        }
        let psi = ScalarField { nx: 16, ny: 16, data: psi_seed };
        let mut u = MacField::from_fn(&g, |p| [flow * p[1], -flow * p[0]]);
        u.zero_wall_normals();
        let sp = SpeciesParams { z, d };
        let dt = np_stable_dt(&u, &psi, sp, &ph, 1.0, &g);
        let before = total_moles(&n, &ph, &g);
        let next = step_np(&n, &u, &psi, sp, &ph, dt, 1.0, &g).unwrap();
        prop_assert!(next.data.iter().all(|v| *v >= 0.0));
        let after = total_moles(&next, &ph, &g);
        prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0), "{before} -> {after}");
    }

    #[test]
    fn constrained_projection_is_rigid_solenoidal_and_idempotent(
        field in proptest::collection::vec(-1.0..1.0f64, 2 * 20 * 21),
        cx in -0.3..0.3f64,
        cy in -0.3..0.3f64,
        theta in 0.0..6.3f64,
    ) {
        let g = grid(20);
        let ph = phase(&g, [cx, cy], 0.35, theta);
        let pose = RigidPose { theta, ..RigidPose::at_rest([cx, cy]) };
        let (uu, vv) = field.split_at(21 * 20);
        let u_star = MacField { nx: 20, ny: 20, u: uu.to_vec(), v: vv.to_vec() };
        let once = project_constrained(&u_star, &ph, &pose, 0.1, 1e-12, &g, None).unwrap();
        prop_assert!(once.u.divergence(&g).max_abs() <= 1e-10);
        prop_assert!(strain_rate(&once.u, &g).max_in_body(&ph, 2.0 * g.h, &g) <= 1e-10);
        let twice = project_constrained(&once.u, &ph, &pose, 0.1, 1e-12, &g, None).unwrap();
        let diff = once.u.u.iter().chain(&once.u.v).zip(twice.u.u.iter().chain(&twice.u.v))
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(diff <= 1e-9, "{diff}");
    }

    #[test]
    fn snapshots_round_trip_bit_exactly(
        t in finite(),
        step in any::<u64>(),
        pose in proptest::array::uniform8(finite()),
        scalars in proptest::collection::vec(("[a-z_]{1,12}", finite()), 0..5),
        config in ".{0,200}",
        arrays in proptest::collection::vec(("[a-z_0-9]{1,8}", proptest::collection::vec(finite(), 0..40)), 0..4),
    ) {
        let snap = Snapshot {
            nx: 3,
            ny: 2,
            h: 0.5,
            x_min: -1.0,
            y_min: 0.0,
            t,
            step,
            pose: RigidPose { x_c: [pose[0], pose[1]], x_c0: [pose[2], pose[3]], theta: pose[4], v_c: [pose[5], pose[6]], w: pose[7] },
            scalars,
            config,
            arrays,
        };
        let bytes = snap.encode();
        prop_assert_eq!(Snapshot::decode(&bytes).unwrap(), snap);
        for cut in [0, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(Snapshot::decode(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn snapshot_decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = Snapshot::decode(&bytes);
        let mut tagged = b"EKFSNAP\0\x01\0\0\0".to_vec();
        tagged.extend_from_slice(&bytes);
        let _ = Snapshot::decode(&tagged);
    }

    #[test]
    fn diagnostics_round_trip_exactly(
        values in proptest::collection::vec(proptest::collection::vec(finite(), 16), 1..6),
        moles in proptest::collection::vec(finite(), 0..4),
        iters in 0usize..100,
    ) {
        let rows: Vec<DiagnosticRow> = values.iter().map(|v| DiagnosticRow {
            t: v[0], e_k: v[1], e_d: v[2], e_p: v[3], e_el: v[4], residual: v[5],
            moles: moles.clone(),
            total_fixed_charge: v[6], gap: v[7], x_c: v[8], y_c: v[9], theta: v[10],
            v_cx: v[11], v_cy: v[12], w: v[13], picard_iters: iters, e_d_strain: v[14], e_d_dd: v[15],
        }).collect();
        let mut buf = Vec::new();
        write_diagnostics(&mut buf, &rows).unwrap();
        let back = parse_diagnostics(&buf).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(csv_record(a), csv_record(b));
        }
    }

    #[test]
    fn csv_parser_never_panics(text in ".{0,400}") {
        let _ = parse_diagnostics(text.as_bytes());
    }

    #[test]
    fn config_echo_is_a_fixed_point(
        n in 20usize..40,
        radius in 0.05..0.3f64,
        cx in -0.4..0.4f64,
        field in proptest::array::uniform2(-10.0..10.0f64),
        z in prop_oneof![-3i32..0, 1i32..4],
        d in 0.01..3.0f64,
        t_end in 0.001..10.0f64,
        seed in 0..=i64::MAX as u64,
    ) {
        let text = format!(
            "[grid]\nnx = {n}\nny = {n}\n[shape]\nradius = {radius}\ncenter = [{cx}, 0.0]\n\
             [[species]]\nz = {z}\nd = {d}\n[boundary]\nkind = \"linear\"\nfield = [{}, {}]\n\
             [run]\nt_end = {t_end}\nseed = {seed}\n",
            field[0], field[1]
        );
        let cfg = parse_config_str(&text).unwrap();
        let echo = cfg.to_toml();
        let again = parse_config_str(&echo).unwrap();
        prop_assert_eq!(&again, &cfg);
        prop_assert_eq!(again.to_toml(), echo);
    }

    #[test]
    fn config_parser_never_panics(text in ".{0,300}") {
        let _ = parse_config_str(&text);
    }
}
