use super::*;
use crate::sources::{DiscSource, IntensitySample, PointSource, SampledSource};
use proptest::prelude::*;

const LY: f64 = 9.460_730_472_580_8e15;

fn pos(x: f64, y: f64, z: f64) -> Position3 {
    Position3::new(x, y, z).unwrap()
}

fn sirius(x: f64, wavelength: f64) -> DiscSource {
    DiscSource::new(pos(x, 0.0, 8.611 * LY), 2e9, wavelength, 1.0).unwrap()
}

fn two_star() -> Vec<SourceModel> {
    let d = 4.0 * 2.0 * 2e9;
    vec![
        sirius(-0.5 * d, 292e-9).into(),
        sirius(0.5 * d, 828e-9).into(),
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn zero_baseline_gives_total_intensity() {
    let ev = Evaluator::default();
    let bl = Baseline::from_offset(0.0, 0.0);
    for s in two_star() {
        let g = ev.gamma(&s, &bl).unwrap().value();
        assert_eq!(g, Complex64::new(1.0, 0.0));
    }
    let q = Evaluator::new(QuadratureSettings::default(), DiscMethod::Quadrature);
    let g = q.gamma(&two_star()[0], &bl).unwrap().value();
    assert!((g - 1.0).norm() < 1e-14);
}

#[test]
fn point_source_is_weight_times_phase() {
    let p = PointSource::new(pos(0.1, -0.2, 3.0), 633e-9, 2.5).unwrap();
    let bl = Baseline::new(pos(0.01, 0.0, 0.0), pos(-0.01, 0.003, 0.0));
    let g = Evaluator::default().gamma(&p.clone().into(), &bl).unwrap();
    let expected = 2.5 * phase::cis(phase_delta_exact(&p.center, p.wavelength, &bl).unwrap());
    assert_eq!(g.value(), expected);
}

#[test]
fn hermitian_symmetry_all_source_kinds() {
    let samples = vec![
        IntensitySample {
            position: pos(1e9, 2e9, 1e17),
            intensity: 0.3,
            area: 1.0,
        },
        IntensitySample {
            position: pos(-3e9, 0.5e9, 1e17),
            intensity: 0.7,
            area: 2.0,
        },
    ];
    let sources: Vec<SourceModel> = vec![
        sirius(1e10, 500e-9).into(),
        PointSource::new(pos(3e9, -1e9, 1e17), 700e-9, 1.0).unwrap().into(),
        SampledSource::weighted(samples, 400e-9).unwrap().into(),
    ];
    let bl = Baseline::new(pos(3.2, -1.1, 0.0), pos(0.4, 2.0, 0.0));
    for method in [DiscMethod::ClosedForm, DiscMethod::Quadrature] {
        let ev = Evaluator::new(QuadratureSettings::default(), method);
        for s in &sources {
            let ab = ev.gamma(s, &bl).unwrap().value();
            let ba = ev.gamma(s, &bl.swapped()).unwrap().value();
            assert!((ab - ba.conj()).norm() < 1e-15 * ab.norm().max(1.0), "{s:?}");
        }
    }
}

#[test]
fn two_disc_zero_baseline_examples() {
    let s = two_star();
    let bl = Baseline::from_offset(0.0, 0.0);
    assert_eq!(g2_no_e2i2(&s, &bl).unwrap(), 6.0);
    assert_eq!(g2_e2i2(&s, &bl).unwrap(), 8.0);
    assert_eq!(g2_delta(&s, &bl).unwrap(), 2.0);
    assert_eq!(g2_single(&s[0], &bl).unwrap(), 2.0);
    assert_eq!(g2_no_e2i2(&s[..1], &bl).unwrap(), g2_single(&s[0], &bl).unwrap());
}

#[test]
fn single_group_has_no_delta() {
    let s: Vec<SourceModel> = vec![sirius(-1e10, 292e-9).into(), sirius(1e10, 292e-9 * (1.0 + 1e-12)).into()];
    for x in [0.0, 1.0, 3.7, 12.0] {
        assert_eq!(g2_delta(&s, &Baseline::from_offset(x, 0.3)).unwrap(), 0.0);
    }
}

#[test]
fn single_disc_at_first_zero_and_far_tail() {
    let d = sirius(0.0, 292e-9);
    let rho = bessel::J1_FIRST_ZERO * d.wavelength / (PI * d.angular_diameter());
    let g = g2_single(&d.clone().into(), &Baseline::from_offset(rho, 0.0)).unwrap();
    assert!((g - 1.0).abs() < 1e-20, "{g}");
    assert!((rho - 7.25).abs() < 0.05, "first zero at {rho} m");
    let mut prev_bound = f64::INFINITY;
    for k in 1..40 {
        let x = rho * k as f64;
        let g = g2_single(&d.clone().into(), &Baseline::from_offset(x, 0.0)).unwrap();
        let z = f_disc_closed_form(&d, &Baseline::from_offset(x, 0.0)).z;
        let bound = 1.0f64.min(1.7 * z.powf(-1.5)).powi(2);
        assert!(g - 1.0 <= bound + 1e-15);
        assert!(bound <= prev_bound);
        prev_bound = bound;
    }
}

#[test]
fn envelope_limits() {
    let d = sirius(0.0, 292e-9);
    let bl = Baseline::new(pos(3.0, 4.0, 0.0), pos(5.0, 0.0, 0.0));
    let env = f_disc_closed_form(&d, &bl);
    assert!(env.value().norm() <= 1.0);
    assert_eq!(env.quadratic_phase, 0.0);
    let same = f_disc_closed_form(&d, &Baseline::new(pos(1.0, 1.0, 0.0), pos(1.0, 1.0, 0.0)));
    assert_eq!(same.value(), Complex64::new(1.0, 0.0));
}

#[test]
fn point_source_delta_is_a_cosine() {
    let l = 1e17;
    let (l1, l2) = (300e-9, 800e-9);
    let (c1, c2) = (pos(-2e9, 1e9, l), pos(3e9, 0.5e9, l));
    let s: Vec<SourceModel> = vec![
        PointSource::new(c1, l1, 1.0).unwrap().into(),
        PointSource::new(c2, l2, 1.0).unwrap().into(),
    ];
    for i in 0..50 {
        // |r_A| = |r_B| removes the quadratic terms
        let t = 0.37 * i as f64;
        let r = 5.0 + 0.1 * i as f64;
        let bl = Baseline::new(pos(r * t.cos(), r * t.sin(), 0.0), pos(r * (t + 1.0).cos(), r * (t + 1.0).sin(), 0.0));
        let d = bl.delta();
        let arg = TAU / l * (d.x * (c1.x / l1 - c2.x / l2) + d.y * (c1.y / l1 - c2.y / l2));
        let got = g2_delta(&s, &bl).unwrap();
        assert!((got - 2.0 * arg.cos()).abs() < 1e-9, "{got} vs {}", 2.0 * arg.cos());
    }
}

#[test]
fn quadrature_matches_closed_form_up_to_z_20() {
    let d = sirius(1e10, 292e-9);
    let ev = Evaluator::new(QuadratureSettings::default(), DiscMethod::Quadrature);
    let z_per_m = PI * d.angular_diameter() / d.wavelength;
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let z = 20.0 * i as f64 / 200.0;
        let bl = Baseline::new(pos(z / z_per_m + 0.3, 0.2, 0.0), pos(0.3, 0.2, 0.0));
        let q = ev.gamma(&d.clone().into(), &bl).unwrap();
        let c = disc_closed_form_coherence(&d, &bl);
        assert_eq!(q.phase, c.phase);
        worst = worst.max((q.amplitude - c.amplitude).norm() / d.weight);
    }
    assert!(worst < 1e-6, "worst {worst:e}");
}

#[test]
fn quadrature_error_decreases_with_refinement() {
    let d = sirius(0.0, 292e-9);
    let z_per_m = PI * d.angular_diameter() / d.wavelength;
    for z in [15.0, 20.0] {
        let bl = Baseline::from_offset(z / z_per_m, 0.0);
        let exact = disc_closed_form_coherence(&d, &bl).amplitude;
        let mut prev = f64::INFINITY;
        // below ~2z/e nodes per axis the rule has not resolved the oscillation yet
        for n in [32usize, 40, 48, 56, 64] {
            let rule = DiscRule::new(n, n);
            let err = (disc_envelope_integral(&d, &bl, &rule) - exact).norm();
            assert!(err < prev, "z = {z}, n = {n}: {err:e} >= {prev:e}");
            prev = err;
        }
    }
}

#[test]
fn coarse_grid_reports_non_convergence() {
    let d = sirius(0.0, 292e-9);
    let z_per_m = PI * d.angular_diameter() / d.wavelength;
    let bl = Baseline::from_offset(20.0 / z_per_m, 0.0);
    let settings = QuadratureSettings {
        radial: 6,
        angular: 6,
        tolerance: 1e-6,
    };
    let err = gamma_quadrature(&d.into(), &bl, &settings).unwrap_err();
    assert!(matches!(err, Error::NonConvergence { .. }));
}

#[test]
fn sirius_curve_plateau_and_peak() {
    let ev = Evaluator::default();
    let c = ev
        .curve(Variant::Single, &[sirius(0.0, 292e-9).into()], &Sweep::along_x(0.0, 40.0, 201), 1.0)
        .unwrap();
    assert_eq!(c.values()[0], 2.0);
    assert!((c.values()[200] - 1.0).abs() < 1e-3);
    assert_eq!(c.normalization.plateau, 1.0);
}

#[test]
fn wavelength_grouping() {
    assert_eq!(wavelength_groups(&[5e-7, 3e-7, 5e-7 * (1.0 + 1e-10)]), vec![1, 0, 1]);
    assert_eq!(wavelength_groups(&[5e-7, 5e-7 * (1.0 + 1e-8)]), vec![0, 1]);
}

#[test]
fn parallel_curve_equals_sequential() {
    let ev = Evaluator::default();
    let s = two_star();
    let sweep = Sweep::along_x(0.0, 24.0, 97);
    let c = ev.curve(Variant::E2i2, &s, &sweep, 1.0).unwrap();
    for (p, x) in c.points().iter().zip(sweep.separations()) {
        assert_eq!(p.value.to_bits(), ev.g2_e2i2(&s, &sweep.baseline(x)).unwrap().to_bits());
    }
}

fn arb_sources() -> impl Strategy<Value = Vec<SourceModel>> {
    prop::collection::vec(
        (-2e10..2e10f64, -2e10..2e10f64, 0usize..3, 0.1..3.0f64, 0.5e9..3e9f64, any::<bool>()),
        1..5,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(x, y, wl, w, a, disc)| {
                let lambda = [292e-9, 550e-9, 828e-9][wl];
                let c = pos(x, y, 8e16);
                if disc {
                    DiscSource::new(c, a, lambda, w).unwrap().into()
                } else {
                    PointSource::new(c, lambda, w).unwrap().into()
                }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn decomposition_reality_scale_and_permutation(
        sources in arb_sources(),
        ax in -20.0..20.0f64, ay in -20.0..20.0f64, bx in -20.0..20.0f64, by in -20.0..20.0f64,
        s in 0.1..10.0f64,
        rot in 0usize..5,
    ) {
        let ev = Evaluator::default();
        let bl = Baseline::new(pos(ax, ay, 0.0), pos(bx, by, 0.0));
        let e = ev.g2_e2i2(&sources, &bl).unwrap();
        let n = ev.g2_no_e2i2(&sources, &bl).unwrap();
        let d = ev.g2_delta(&sources, &bl).unwrap();
        prop_assert!((e - n - d).abs() <= 1e-12 * e.abs().max(n.abs()).max(d.abs()));

        for v in Variant::ALL {
            if v == Variant::Single && sources.len() != 1 {
                continue;
            }
            let z = ev.g2_complex(v, &sources, &bl).unwrap();
            let total: f64 = sources.iter().map(|s| s.total_intensity()).sum();
            prop_assert!(z.im.abs() <= 1e-12 * total * total, "{v}: {z}");

            let scaled: Vec<SourceModel> = sources.iter().map(|x| x.scaled(s)).collect();
            let g = ev.g2(v, &sources, &bl).unwrap();
            let gs = ev.g2(v, &scaled, &bl).unwrap();
            prop_assert!(close(gs, s * s * g, 1e-12 * s * s), "{gs} vs {}", s * s * g);

            let mut permuted = sources.clone();
            let k = rot % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            prop_assert_eq!(ev.g2(v, &permuted, &bl).unwrap().to_bits(), g.to_bits());
        }
    }
}
