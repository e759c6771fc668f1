use kredux::curvature::*;
use kredux::field::integrate_m;
use kredux::fixtures::*;
use kredux::reduction::{check_riccired, check_scalred, reduced_potential};
use kredux::report::observed_order;
use kredux::*;
use proptest::prelude::*;

fn torus(nl: usize) -> TestbedGrid {
    TestbedGrid::torus(32, nl, -1.25, 1.25).unwrap()
}

fn radial() -> TestbedGrid {
    TestbedGrid::radial(257, 8.0, 129, -1.25, 1.25).unwrap().with_pole_cutoff(4.0).unwrap()
}

#[test]
fn ricci_and_scalar_curvature_descend() {
    let gaps = |nl| {
        let k = perturbed_cyl(torus(nl), PERTURBED_AMPLITUDE).unwrap();
        [-0.4, 0.0, 0.4]
            .iter()
            .map(|&t| (check_riccired(&k, t).unwrap().linf, check_scalred(&k, t).unwrap().linf))
            .fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    };
    let (coarse, fine) = (gaps(65), gaps(129));
    assert!(fine.0 < 1e-5 && fine.1 < 1e-5, "{fine:?}");
    assert!(observed_order(coarse.0, fine.0) >= 2.0 && observed_order(coarse.1, fine.1) >= 2.0, "{coarse:?} {fine:?}");

    let k = cyl(torus(129)).unwrap();
    assert!(rho_p(&k).interior_linf() < 1e-8);
    assert!(check_riccired(&k, 0.3).unwrap().linf < 1e-8);
    let kf = fscyl(radial()).unwrap();
    for tau in [-0.3, 0.3] {
        assert!(check_riccired(&kf, tau).unwrap().linf < 1e-6);
        assert!(check_scalred(&kf, tau).unwrap().linf < 1e-6);
    }
    let lambda = kredux::statics::lambda_mean(&kf.sigma).unwrap();
    assert!(big_r_p(&kf).map(|r| r - lambda).interior_linf() < 1e-6);
}

#[test]
fn moment_ricci_identity() {
    // third fiber derivatives: roundoff grows like N_ℓ³, so the exact case uses N_ℓ = 65
    assert!(check_moment_ricci_identity(&cyl(torus(65)).unwrap()).linf < 1e-10);
    assert!(check_moment_ricci_identity(&fscyl(radial()).unwrap()).linf < 1e-8);
    let gap = |nl| check_moment_ricci_identity(&perturbed_cyl(torus(nl), PERTURBED_AMPLITUDE).unwrap()).linf;
    let (coarse, fine) = (gap(65), gap(129));
    assert!(fine < 1e-5 && observed_order(coarse, fine) > 2.0, "{coarse:e} {fine:e}");
}

/// `∫ scal(ω_τ) ω_τ` is fixed by the class.
#[test]
fn total_scalar_curvature_is_independent_of_tau() {
    let k = perturbed_cyl(torus(129), PERTURBED_AMPLITUDE).unwrap();
    let totals: Vec<f64> = [-0.5, -0.1, 0.3, 0.6]
        .iter()
        .map(|&t| {
            let w = reduced_potential(&k, t).unwrap().omega_tau;
            integrate_m(&scal_m(&w).unwrap(), &w).unwrap()
        })
        .collect();
    assert!(totals.iter().all(|t| t.abs() < 1e-8), "{totals:?}");
    let kf = fscyl(radial()).unwrap();
    let w = reduced_potential(&kf, 0.2).unwrap().omega_tau;
    let fs = Form11M::reference(w.grid);
    let (a, b) = (integrate_m(&scal_m(&w).unwrap(), &w).unwrap(), integrate_m(&scal_m(&fs).unwrap(), &fs).unwrap());
    assert!((a - b).abs() < 1e-8);
}

#[test]
fn negative_controls_are_visible() {
    let k = perturbed_cyl(torus(65), 0.05).unwrap();
    assert!(big_r_p(&k).interior_linf() > 1.0);
    let flat = Form11M::reference(torus(9));
    assert!(scal_m(&flat).unwrap().values.iter().all(|v| v.abs() < 1e-14));
    assert!(scal_m(&flat.scale(-1.0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn scalar_curvature_is_the_ricci_trace(seed in 0u64..1000) {
        let g = TestbedGrid::torus(16, 9, -1.0, 1.0).unwrap();
        let w = Form11M::reference(g).add(&kredux::field::ddc_m(&random_field_m(g, seed, 0.003)));
        let ric = ricci_m(&w, &Form11M::reference(g)).unwrap();
        let scal = scal_m(&w).unwrap();
        for s in 0..g.spatial_len() {
            prop_assert!((scal.values[s] * w.h[s] - ric.h[s]).abs() < 1e-12 * (1.0 + ric.h[s].abs()));
        }
        prop_assert!(integrate_m(&scal, &w).unwrap().abs() < 1e-10);
    }
}
