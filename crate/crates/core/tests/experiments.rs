use dgl_core::experiments::*;
use dgl_core::{
    classify_regime, Execution, Forcing, IntegrationOptions, LatticeState, ModelParams,
    RegimeLabel, C64,
};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn settings(n: usize) -> StudySettings {
    StudySettings::default().with_half_width(n)
}

#[test]
fn tail_mass_geometric_profile() {
    let u = LatticeState::from_fn(-40, 81, |n| c(0.5f64.powi(n.abs() as i32)));
    let expected = 2.0 * 4f64.powi(-11) / (1.0 - 0.25);
    let exact: f64 = (11..=40).map(|n| 2.0 * 4f64.powi(-n)).sum();
    let got = tail_mass(&u, 5);
    assert!((got - exact).abs() / exact < 1e-14);
    assert!((got - expected).abs() / expected < 1e-12);
}

#[test]
fn closeness_delta_two_example() {
    let params = ModelParams::local(0.0, 0.0, 2.0);
    let family = InitialFamily::inward(0.1, 1.0, 1.0, 1.0);
    let r = run_closeness(&family, &params, &Forcing::zero(), 50.0, &settings(256)).unwrap();
    assert!((r.bound_used - 3e-3).abs() < 1e-15);
    assert!(r.sup_distance_l2 <= 3e-3, "{}", r.sup_distance_l2);
    assert!(r.sup_distance_linf <= r.sup_distance_l2);
    assert!(r.pass);
    assert_eq!(r.series.first().unwrap().t, 0.0);
    assert!((r.series.last().unwrap().t - 50.0).abs() < 1e-9);
}

#[test]
fn closeness_slope_near_three() {
    let params = ModelParams::local(0.0, 0.0, 2.0);
    let eps = [0.2, 0.1, 0.05];
    let sups: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let family = InitialFamily::inward(e, 1.0, 1.0, 1.0);
            let r = run_closeness(&family, &params, &Forcing::zero(), 50.0, &settings(64)).unwrap();
            assert!(r.pass, "eps {e}: {} > {}", r.sup_distance_l2, r.bound_used);
            r.sup_distance_l2
        })
        .collect();
    let slope = fitted_slope(&eps, &sups).unwrap();
    assert!((slope - 3.0).abs() <= 0.3, "slope {slope}");
}

#[test]
fn closeness_finite_horizon_cases() {
    for (delta, c2) in [(1.0, 5.0), (0.5, 9.591409142295225)] {
        let params = ModelParams::local(0.0, 0.0, delta);
        let family = InitialFamily::inward(0.1, 1.0, 1.0, 1.0);
        let r = run_closeness(&family, &params, &Forcing::zero(), 1.0, &settings(64)).unwrap();
        assert!((r.bound_used / 1e-3 - c2).abs() < 1e-9, "{}", r.bound_used);
        assert!(r.limsup_bound.is_none());
        assert!(r.pass);
    }
}

#[test]
fn tail_study_single_site_forcing() {
    let params = ModelParams::local(0.0, 0.0, 2.0);
    let forcing = Forcing::single_site(0, 1.0);
    let init = LatticeState::single_site(0, c(1.0));
    let grid: Vec<u64> = (0..=64).collect();
    let run =
        |n| run_tail_study(&params, &forcing, &init, 30.0, 1e-8, &grid, &settings(n)).unwrap();
    let a = run(128);
    let b = run(256);
    assert!(a.hypotheses_ok);
    let m = b.min_k_passing.expect("tail settles");
    assert!(m <= 32);
    assert_eq!(a.min_k_passing, b.min_k_passing);
    assert!(b.time_of_entry.is_some());
    for row in &b.tail_masses {
        assert!(row.iter().all(|&x| x >= 0.0));
        assert!(row.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn tail_study_exploratory_when_not_dissipative() {
    let params = ModelParams::local(0.0, 0.0, 1.0);
    let r = run_tail_study(
        &params,
        &Forcing::zero(),
        &LatticeState::single_site(0, c(0.1)),
        1.0,
        1e-6,
        &[1, 2],
        &settings(16),
    )
    .unwrap();
    assert!(!r.hypotheses_ok);
    assert!(r.hypothesis_note.is_some());
}

#[test]
fn local_attractor_inside_absorbing_ball() {
    let params = ModelParams::local(0.0, 0.0, 2.0);
    let forcing = Forcing::single_site(0, 0.01);
    let seeds = [
        LatticeState::single_site(0, c(0.5)),
        LatticeState::single_site(2, C64::new(0.0, 0.3)),
    ];
    let plan = SamplingPlan {
        transient_cut: 20.0,
        stride: 0.5,
        horizon: 30.0,
    };
    let s = sample_attractor(
        SystemTag::Ldgl,
        &params,
        &forcing,
        &seeds,
        plan,
        &settings(64),
    )
    .unwrap();
    assert!(s.warnings.is_empty(), "{:?}", s.warnings);
    assert!(s.points.iter().all(|p| p.norm2() <= 0.011));
}

#[test]
fn nonlocal_attractor_inside_restricted_absorbing_ball() {
    let params = ModelParams::nonlocal(0.0, 0.0, 3.0);
    let forcing = Forcing::single_site(0, 0.01);
    let seeds = [LatticeState::single_site(0, c(0.5))];
    let plan = SamplingPlan {
        transient_cut: 20.0,
        stride: 0.5,
        horizon: 30.0,
    };
    let report = classify_regime(&params, 0.01, Some(0.25), None, 1.1).unwrap();
    let s = sample_attractor(
        SystemTag::Nldgl,
        &params,
        &forcing,
        &seeds,
        plan,
        &settings(64),
    )
    .unwrap();
    let rho_t = report.rho_tilde_sq_nldgl.unwrap();
    assert!(s.points.iter().all(|p| p.norm2() <= rho_t));
}

fn congruence_plan() -> SamplingPlan {
    SamplingPlan {
        transient_cut: 20.0,
        stride: 0.5,
        horizon: 40.0,
    }
}

#[test]
fn congruence_forced() {
    let params = ModelParams::local(0.0, 0.0, 3.0);
    let forcing = Forcing::single_site(0, 0.01);
    let template = InitialFamily::inward(0.2, 1.0, 1.0, 1.0);
    let r = run_congruence(
        &params,
        &forcing,
        &[0.2, 0.1, 0.05],
        &template,
        congruence_plan(),
        &settings(64),
    )
    .unwrap();
    assert_eq!(r.case_label, RegimeLabel::SupercriticalAnnulus);
    for row in &r.rows {
        assert!(row.pass, "{row:?}");
    }
    assert!(r.non_increasing);
    assert!(r.pass);
}

#[test]
fn congruence_unforced_is_zero() {
    let params = ModelParams::local(0.0, 0.0, 2.0);
    let template = InitialFamily::inward(0.2, 1.0, 1.0, 1.0);
    let r = run_congruence(
        &params,
        &Forcing::zero(),
        &[0.2, 0.1, 0.05],
        &template,
        congruence_plan(),
        &settings(32),
    )
    .unwrap();
    assert!(r.rows.iter().all(|row| row.dist_v_to_u <= 1e-6));
}

#[test]
fn congruence_sampling_convergence() {
    let params = ModelParams::local(0.0, 0.0, 3.0);
    let forcing = Forcing::single_site(0, 0.01);
    let template = InitialFamily::inward(0.1, 1.0, 1.0, 1.0);
    let plan = congruence_plan();
    let finer = SamplingPlan {
        transient_cut: plan.transient_cut,
        stride: plan.stride / 2.0,
        horizon: plan.horizon * 2.0,
    };
    let a = run_congruence(&params, &forcing, &[0.1], &template, plan, &settings(32)).unwrap();
    let b = run_congruence(&params, &forcing, &[0.1], &template, finer, &settings(32)).unwrap();
    let (ra, rb) = (&a.rows[0], &b.rows[0]);
    assert!(
        (ra.dist_v_to_u - rb.dist_v_to_u).abs() <= ra.sampling_tolerance.max(rb.sampling_tolerance)
    );
}

#[test]
fn regime_verification_annulus_example() {
    let params = ModelParams::nonlocal(0.0, 0.0, 3.0);
    let forcing = Forcing::single_site(0, 0.1);
    let r =
        run_regime_verification(&params, &forcing, &[0.1, 0.5, 0.97], 30.0, &settings(64)).unwrap();
    assert_eq!(r.regime.case_label, RegimeLabel::SupercriticalAnnulus);
    assert!((r.regime.r2.unwrap() - 0.025658).abs() < 1e-6);
    for p in &r.points {
        assert!(p.starts_in_annulus);
        assert!(p.envelope_ok, "{p:?}");
        assert_eq!(p.bernoulli_ok, Some(true), "{p:?}");
        assert!(p.terminal_gap_r2.is_some());
    }
}

#[test]
fn regime_verification_unforced_decays() {
    let params = ModelParams::nonlocal(0.0, 0.0, 2.0);
    let r =
        run_regime_verification(&params, &Forcing::zero(), &[0.2], 20.0, &settings(32)).unwrap();
    let p = &r.points[0];
    assert!(p.monotone);
    assert!(p.envelope_ok);
    assert!(p.terminal_chi < 1e-8);
}

#[test]
fn local_gronwall_example() {
    let params = ModelParams::local(0.0, 0.0, 2.0);
    let g = check_local_gronwall(
        &params,
        &Forcing::single_site(0, 1.0),
        4.0,
        50.0,
        &settings(64),
    )
    .unwrap();
    assert!(g.bound_ok, "{g:?}");
    assert!(g.limsup_ok, "{g:?}");
}

#[test]
fn sweeps_do_not_depend_on_execution() {
    let params = ModelParams::nonlocal(0.3, 0.2, 3.0);
    let forcing = Forcing::single_site(0, 0.1);
    let run = |exec| {
        let s = settings(32).with_opts(IntegrationOptions::oracle().with_exec(exec));
        run_regime_verification(&params, &forcing, &[0.1, 0.3, 0.5, 0.7], 5.0, &s).unwrap()
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

fn random_cloud(rng: &mut rand_chacha::ChaCha8Rng, size: usize) -> Vec<LatticeState> {
    use rand::Rng;
    (0..size)
        .map(|_| {
            let off = rng.gen_range(-3..3);
            let len = rng.gen_range(1..6);
            LatticeState::random(rng, off, len, 1.0)
        })
        .collect()
}

// Exhaustive double loop written against the raw site values.
fn oracle(a: &[LatticeState], b: &[LatticeState]) -> f64 {
    let mut sup = 0.0f64;
    for p in a {
        let mut inf = f64::INFINITY;
        for q in b {
            let lo = p.min_index().min(q.min_index());
            let hi = p.max_index().max(q.max_index());
            let mut s = 0.0;
            for n in lo..=hi {
                let d = p.get(n) - q.get(n);
                s += d.re * d.re + d.im * d.im;
            }
            inf = inf.min(s.sqrt());
        }
        sup = sup.max(inf);
    }
    sup
}

#[test]
fn hausdorff_matches_oracle_bitwise() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let na = rng.gen_range(1..=50);
        let nb = rng.gen_range(1..=50);
        let a = random_cloud(&mut rng, na);
        let b = random_cloud(&mut rng, nb);
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(
                directed_hausdorff(&a, &b, exec).unwrap().to_bits(),
                oracle(&a, &b).to_bits()
            );
        }
        assert_eq!(
            directed_hausdorff(&a, &a, Execution::Parallel).unwrap(),
            0.0
        );
    }
}

#[test]
fn hausdorff_chaining_bound() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let e = Execution::Sequential;
    for _ in 0..50 {
        let a = random_cloud(&mut rng, 20);
        let b = random_cloud(&mut rng, 20);
        let c = random_cloud(&mut rng, 20);
        let ac = directed_hausdorff(&a, &c, e).unwrap();
        let ab = directed_hausdorff(&a, &b, e).unwrap();
        let bc = directed_hausdorff(&b, &c, e).unwrap();
        assert!(ac <= ab + bc + 1e-12);
    }
}
