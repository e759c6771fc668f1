use std::f64::consts::PI;

use kredux::curvature::{big_r_p, ricci_p};
use kredux::field::ddc_m;
use kredux::fixtures::{cyl, fscyl, perturbed_cyl, PERTURBED_AMPLITUDE};
use kredux::statics::*;
use kredux::structure::gauge;
use kredux::*;
use proptest::prelude::*;

fn torus() -> TestbedGrid {
    TestbedGrid::torus(16, 129, -1.25, 1.25).unwrap()
}

fn radial() -> TestbedGrid {
    TestbedGrid::radial(257, 8.0, 129, -1.25, 1.25).unwrap().with_pole_cutoff(4.0).unwrap()
}

const TAUS: [f64; 3] = [-0.4, 0.0, 0.4];

#[test]
fn lambda_of_flat_and_fubini_study_classes() {
    let t = torus();
    assert!(lambda_mean(&Form11M::reference(t)).unwrap().abs() < 1e-14);
    let u = ScalarFieldM::from_fn(t, |x, y| 0.02 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin());
    assert!(lambda_mean(&Form11M::reference(t).add(&ddc_m(&u))).unwrap().abs() < 1e-8);

    let r = radial();
    let fs = Form11M::reference(r);
    let scal = kredux::curvature::scal_m(&fs).unwrap();
    let lambda = lambda_mean(&fs).unwrap();
    assert!((lambda - scal.values[r.n / 2]).abs() < 1e-10);
    assert!((lambda - 2.0).abs() < 1e-10);
    let bump = ScalarFieldM::from_fn(r, |v, _| 0.05 * (-v * v).exp());
    let moved = lambda_mean(&fs.add(&ddc_m(&bump))).unwrap();
    assert!((moved - lambda).abs() < 1e-8, "{moved}");
}

#[test]
fn canonical_h_on_cylinders() {
    let taus: Vec<f64> = (0..7).map(|i| -0.6 + 0.2 * i as f64).collect();
    let k = cyl(torus()).unwrap();
    assert!(k.grid().lmin < -0.6 && k.grid().lmax > 0.6);
    let h = h_canonical(&k, &taus).unwrap();
    for &tau in &taus {
        assert!((h.eval(tau).unwrap() - tau).abs() < 1e-8);
    }
    let u = ScalarFieldM::from_fn(torus(), |x, _| 0.03 * (2.0 * PI * x).sin());
    let kg = gauge(&k, &u, 0.4, 0.0).unwrap();
    let hg = h_canonical(&kg, &taus).unwrap();
    for &tau in &taus {
        assert!((hg.eval(tau).unwrap() - h.eval(tau).unwrap()).abs() < 1e-9);
    }
    let kf = fscyl(radial()).unwrap();
    let hf = h_canonical(&kf, &taus).unwrap();
    for &tau in &taus {
        assert!((hf.eval(tau).unwrap() - 2.0 - tau).abs() < 1e-8);
    }
}

#[test]
fn geodesic_residuals() {
    let k = cyl(torus()).unwrap();
    let r = residual_geodesic(&k, &Profile::Constant(1.0), &TAUS).unwrap();
    assert!(r.linf < 1e-8 && r.reduced_linf() < 1e-8, "{}", r.to_json());
    let neg = residual_geodesic(&k, &Profile::Constant(0.0), &[]).unwrap();
    let s_norm = ScalarFieldP::from_fn(k.grid(), |_, _, l| l.exp()).interior_linf();
    assert!(neg.linf > 0.1 * s_norm);
    let kf = fscyl(radial()).unwrap();
    assert!(residual_geodesic(&kf, &Profile::Constant(1.0), &TAUS).unwrap().linf < 1e-8);
}

#[test]
fn calabi_residuals() {
    let k = cyl(torus()).unwrap();
    let r = residual_calabi(&k, &Profile::analytic(|t| t), &TAUS).unwrap();
    assert!(r.linf < 1e-8 && r.reduced_linf() < 1e-8, "{}", r.to_json());
    let neg = residual_calabi(&k, &Profile::Constant(0.0), &[]).unwrap();
    assert!(neg.linf > 0.1 * ScalarFieldP::log_s(k.grid()).interior_linf());
    let kf = fscyl(radial()).unwrap();
    let rf = residual_calabi(&kf, &Profile::analytic(|t| 2.0 + t), &TAUS).unwrap();
    assert!(rf.linf < 1e-8, "{}", rf.linf);
}

#[test]
fn pseudo_calabi_residuals() {
    let k = cyl(torus()).unwrap();
    assert!(residual_pseudo_calabi(&k, &TAUS).unwrap().linf < 1e-8);
    let kf = fscyl(radial()).unwrap();
    let rf = residual_pseudo_calabi(&kf, &TAUS).unwrap();
    assert!(rf.linf < 1e-8 && rf.reduced_linf() < 1e-8, "{}", rf.to_json());
    let kp = perturbed_cyl(torus(), PERTURBED_AMPLITUDE).unwrap();
    let neg = residual_pseudo_calabi(&kp, &[]).unwrap();
    assert!(neg.linf > 0.1 * big_r_p(&kp).interior_linf());
}

#[test]
fn kr_residuals() {
    let k = cyl(torus()).unwrap();
    let r = residual_kr(&k, &TAUS).unwrap();
    assert!(r.linf < 1e-8 && r.reduced_linf() < 1e-8, "{}", r.to_json());
    let kf = fscyl(radial()).unwrap();
    let neg = residual_kr(&kf, &[]).unwrap();
    assert!(neg.linf > 0.1 * ricci_p(&kf).interior_linf());
}

#[test]
fn v_soliton_residuals() {
    let kf = fscyl(radial()).unwrap();
    let lambda = lambda_mean(&kf.sigma).unwrap();
    let f = Profile::analytic(move |m| lambda * m * m / 4.0);
    assert!(residual_v_soliton(&kf, &f).unwrap().linf < 1e-7);
    let neg = residual_v_soliton(&kf, &Profile::Constant(0.0)).unwrap();
    assert!(neg.linf > 0.1 * kf.omega.scale(lambda).interior_linf());
    let k = cyl(torus()).unwrap();
    assert!(residual_v_soliton(&k, &Profile::analytic(|m| 0.3 * m - 1.0)).unwrap().linf < 1e-8);
}

#[test]
fn reparametrization_by_identity_and_shift() {
    let k = cyl(torus()).unwrap();
    let same = reparametrize(&k, &Profile::analytic(|m| m)).unwrap();
    assert_eq!(same.phi, k.phi);
    let shift = 0.7;
    let psi = reparametrization_potential(&k, &Profile::analytic(move |m| m + shift)).unwrap();
    let expected = ScalarFieldP::from_fn(k.grid(), |_, _, l| -0.5 * shift * l);
    let gap = psi.sub(&expected);
    let g0 = gap.values[[0, 0]];
    assert!(gap.map(|v| v - g0).interior_linf() < 1e-12);
    let moved = reparametrize(&k, &Profile::analytic(move |m| m + shift)).unwrap();
    assert!(moved.mu.sub(&k.mu.map(|m| m + shift)).interior_linf() < 1e-12);
}

/// `e^{λμ}`-type maps at a moderate rate; the moment map is obtained by a
/// fourth-order fiber derivative, so the gap scales like `h⁴ λ⁴ e^{λμ}`.
#[test]
fn reparametrization_along_the_normalized_time_map() {
    let k = cyl(TestbedGrid::torus(16, 129, -1.0, 1.0).unwrap()).unwrap();
    let gap_for = |k: &kredux::structure::KahlerData, lambda: f64| {
        let f = Profile::analytic(move |m: f64| (1.0 + (lambda * m).exp()) / lambda);
        let moved = reparametrize(k, &f).unwrap();
        let target = f.of_field(&k.mu).unwrap();
        moved.mu.sub(&target).interior_linf()
    };
    let gap = gap_for(&k, 0.5);
    assert!(gap < 1e-9, "{gap:e}");
    let coarse = gap_for(&cyl(TestbedGrid::torus(16, 65, -1.0, 1.0).unwrap()).unwrap(), 2.0);
    let fine = gap_for(&k, 2.0);
    assert!(kredux::report::observed_order(coarse, fine) > 3.5, "{coarse:e} {fine:e}");
}

#[test]
fn canonical_h_is_covariant_under_shifts() {
    let k = perturbed_cyl(torus(), PERTURBED_AMPLITUDE).unwrap();
    let taus: Vec<f64> = (0..5).map(|i| -0.4 + 0.2 * i as f64).collect();
    let h = h_canonical(&k, &taus).unwrap();
    let shift = 0.25;
    let moved = reparametrize(&k, &Profile::analytic(move |m| m + shift)).unwrap();
    let new_taus: Vec<f64> = taus.iter().map(|&t| t + shift).collect();
    let hn = h_canonical(&moved, &new_taus).unwrap();
    for (t, tn) in taus.iter().zip(&new_taus) {
        let gap = (hn.eval(*tn).unwrap() - h.eval(*t).unwrap()).abs();
        assert!(gap < 1e-8, "{gap:e}");
    }
}

/// For a non-affine `f` the level sets are shared but the reduced potentials
/// drift apart at the rate `½(f'(τ) − 1) ℓ_τ`, which is not pluriharmonic.
#[test]
fn nonlinear_reparametrization_moves_reduced_metrics() {
    let k = perturbed_cyl(torus(), PERTURBED_AMPLITUDE).unwrap();
    let f = |m: f64| m + 0.3 * m * m * m + 0.2;
    let df = |m: f64| 1.0 + 0.9 * m * m;
    let moved = reparametrize(&k, &Profile::analytic(f)).unwrap();
    let drift = |tau: f64| {
        let a = kredux::reduction::reduced_potential(&k, tau).unwrap();
        let b = kredux::reduction::reduced_potential(&moved, f(tau)).unwrap();
        (b.psi_tau.zip_map(&a.psi_tau, |x, y| x - y), a.ltau)
    };
    let (tau, dt) = (0.3, 1e-3);
    let (d0, ltau) = drift(tau);
    assert!(d0.interior_spread() > 1e-4);
    let (dp, _) = drift(tau + dt);
    let (dm, _) = drift(tau - dt);
    let rate = dp.zip_map(&dm, |p, m| (p - m) / (2.0 * dt));
    let predicted = ltau.map(|l| 0.5 * (df(tau) - 1.0) * l);
    let gap = rate.zip_map(&predicted, |r, p| r - p).interior_spread();
    assert!(gap < 1e-6, "{gap:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn affine_reparametrization_sets_the_moment_map(alpha in 0.3f64..3.0, shift in -2.0f64..2.0) {
        let k = perturbed_cyl(TestbedGrid::torus(16, 65, -1.0, 1.0).unwrap(), PERTURBED_AMPLITUDE).unwrap();
        let moved = reparametrize(&k, &Profile::analytic(move |m| alpha * m + shift)).unwrap();
        let target = k.mu.map(|m| alpha * m + shift);
        let gap = moved.mu.sub(&target).interior_linf();
        prop_assert!(gap < 1e-7, "{gap:e}");
    }
}
