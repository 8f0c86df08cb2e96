use tvgarch_core::params::{ArRegime, BreakSchedule, GarchRegime, TvArSpec, TvGarchSpec};
use tvgarch_core::qml::{fit, DummyMask, FitOptions, UnivariateModelSpec};
use tvgarch_core::sim::{simulate_path, SimConfig};

fn simulate_returns(garch: TvGarchSpec, n: usize, seed: u64, path: usize) -> Vec<f64> {
    let ar = TvArSpec::constant(ArRegime::ar1(0.02, 0.0));
    let cfg = SimConfig::new(ar, garch, n, 1, seed);
    simulate_path(&cfg, path).unwrap().y
}

#[test]
fn plain_gjr_fit_recovers_parameters() {
    let truth = GarchRegime::new(0.01, 0.05, 0.08, 0.90);
    let y = simulate_returns(TvGarchSpec::constant(truth).unwrap(), 20_000, 2024, 0);
    let t0 = std::time::Instant::now();
    let res = fit(&y, &UnivariateModelSpec::plain_gjr(0), FitOptions::default()).unwrap();
    eprintln!("fit took {:?}\n{}", t0.elapsed(), res.to_table());
    assert!(res.convergence.converged, "{:?}", res.convergence);
    for (name, v) in [("omega", 0.01), ("alpha", 0.05), ("gamma", 0.08), ("beta", 0.90)] {
        let p = res.get(name).unwrap();
        assert!((p.value - v).abs() < 2.0 * p.se, "{name}: {} ± {}", p.value, p.se);
    }
    let c = res.persistence[0];
    assert!((c - (res.get("alpha").unwrap().value + res.get("beta").unwrap().value + res.get("gamma").unwrap().value / 2.0)).abs() < 1e-15);
    let d = res.diagnostics.as_ref().unwrap();
    assert!((0.0..=1.0).contains(&d.lb.p_value) && (0.0..=1.0).contains(&d.lb_squared.p_value));
}

#[test]
fn sign_regime_fit_reports_state_persistence() {
    let truth = GarchRegime::new(0.02, 0.05, 0.0, 0.90);
    let y = simulate_returns(TvGarchSpec::constant(truth).unwrap(), 3000, 7, 0);
    let res = fit(&y, &UnivariateModelSpec::sign_regime(1), FitOptions::default()).unwrap();
    let sp = res.sign_persistence.as_ref().unwrap();
    let a = res.get("alpha").unwrap().value;
    let b = res.get("beta").unwrap().value;
    assert!((sp.r_plus - (a + b)).abs() < 1e-15);
    let am = res.get("alpha-").unwrap().value;
    let bm = res.get("beta-").unwrap().value;
    assert!((sp.r_minus - (a + b + (am + bm) / 2.0)).abs() < 1e-15);
}

#[test]
fn omega_break_is_detected() {
    // ω doubles halfway; the ω₁ dummy should be significant in most samples
    let n = 4000;
    let sched = BreakSchedule::from_offsets(vec![(n / 2) as u64]).unwrap();
    let garch = TvGarchSpec::new(
        vec![GarchRegime::new(0.2, 0.05, 0.05, 0.8), GarchRegime::new(0.1, 0.05, 0.05, 0.8)],
        sched,
    )
    .unwrap();
    let spec = UnivariateModelSpec::with_breaks(
        0,
        vec![n / 2],
        DummyMask {
            omega: true,
            ..DummyMask::NONE
        },
    );
    let hits: usize = (0..100)
        .map(|i| {
            let y = simulate_returns(garch.clone(), n, 99, i);
            let res = fit(&y, &spec, FitOptions::default()).unwrap();
            usize::from(res.get("omega1").unwrap().p_value < 0.05)
        })
        .sum();
    eprintln!("omega1 significant in {hits}/100");
    assert!(hits >= 90, "{hits}");
}
