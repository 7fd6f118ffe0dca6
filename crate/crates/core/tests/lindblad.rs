use vbspin::lindblad::{build_liouvillian, nuclear_polarization, steady_state, RateSet, POSITIVITY_TOL, RESIDUAL_TOL};
use vbspin::model::{DefectModel, FieldConfig, HyperfineTensor};

#[test]
fn ground_zero_populations_at_92_mt_favor_positive_m() {
    let l = build_liouvillian(&DefectModel::default(), &FieldConfig::along_z(92.0), &RateSet::default()).unwrap();
    let ss = steady_state(&l).unwrap();
    assert!((ss.rho.trace().re - 1.0).abs() < 1e-9);
    assert!(ss.min_eigenvalue() >= -POSITIVITY_TOL);
    assert!(ss.residual_norm < RESIDUAL_TOL);

    let areas = ss.ground_zero_areas();
    let total: f64 = areas.iter().map(|a| a.1).sum();
    let normalized: Vec<(f64, f64)> = areas.iter().map(|&(m, s)| (m, s / total)).collect();
    let at = |m: f64| normalized.iter().find(|a| (a.0 - m).abs() < 1e-9).unwrap().1;
    assert!(at(1.5) > at(-1.5), "{normalized:?}");
    assert!(at(0.5) > at(-0.5), "{normalized:?}");
    let p = nuclear_polarization(&ss);
    assert!(p > 0.0 && p < 0.5, "{p}");
}

#[test]
fn excited_state_hyperfine_barely_matters_below_the_ground_lac() {
    let rates = RateSet::default();
    assert!(rates.gamma_pump < 0.1 * rates.gamma_rad);
    let with_es = DefectModel::default();
    let mut without_es = with_es.clone();
    without_es.tensors_es = vec![HyperfineTensor::new(0.0, 0.0, 0.0); with_es.tensors_es.len()];
    for b in [60.0, 70.0, 80.0, 90.0] {
        let field = FieldConfig::along_z(b);
        let p = nuclear_polarization(&steady_state(&build_liouvillian(&with_es, &field, &rates).unwrap()).unwrap());
        let q = nuclear_polarization(&steady_state(&build_liouvillian(&without_es, &field, &rates).unwrap()).unwrap());
        let rel = (p - q).abs() / p.abs();
        assert!(rel < 0.05, "B = {b} mT: P = {p}, without ES hyperfine {q}");
    }
}
