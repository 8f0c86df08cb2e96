use std::time::Instant;

use tvgarch_core::bivariate::{
    fit_bivariate, simulate_bivariate, BivariateFitConfig, BivariateSimConfig, BivariateSpec, SignShifts,
};

fn within(name: &str, est: f64, se: f64, truth: f64, k: f64) {
    assert!(se.is_finite() && se > 0.0, "{name}: se {se}");
    assert!((est - truth).abs() <= k * se, "{name}: {est} vs {truth} (se {se})");
}

/// Each cross term should sit within 2 SE of zero; over 8 replications and 4
/// terms about 95% of the 32 checks pass, so at least 28 are required.
#[test]
fn independent_series_show_no_spillover() {
    let spec = BivariateSpec::decoupled([0.02, 0.03], [0.04, 0.03], [0.06, 0.08], [0.9, 0.9], 0.0);
    let cfg = BivariateFitConfig {
        dcc: false,
        ..Default::default()
    };
    let start = Instant::now();
    let mut inside = 0;
    for seed in 0..8u64 {
        let path = simulate_bivariate(&BivariateSimConfig::new(spec.clone(), 20_000, 100 + seed)).unwrap();
        let fit = fit_bivariate(&path.returns, &cfg).unwrap();
        for name in ["alpha12", "alpha21", "beta12", "beta21"] {
            let p = fit.get(name).unwrap();
            assert!(p.se.is_finite() && p.se > 0.0);
            inside += usize::from(p.value.abs() <= 2.0 * p.se);
        }
        let b = fit.get("beta11").unwrap();
        within("beta11", b.value, b.se, 0.9, 4.0);
    }
    eprintln!("{inside}/32 cross terms within 2 SE in {:?}", start.elapsed());
    assert!(inside >= 28, "{inside}/32");
}

#[test]
fn dcc_scalars_recovered() {
    let mut spec = BivariateSpec::decoupled([0.003, 0.004], [0.016, 0.033], [0.078, 0.082], [0.921, 0.912], 0.5);
    spec.dcc.alpha = 0.044;
    spec.dcc.beta = 0.952;
    let path = simulate_bivariate(&BivariateSimConfig::new(spec, 50_000, 2024)).unwrap();
    let start = Instant::now();
    let cfg = BivariateFitConfig {
        spillovers: false,
        ..Default::default()
    };
    let fit = fit_bivariate(&path.returns, &cfg).unwrap();
    eprintln!("fit in {:?}\n{}", start.elapsed(), fit.to_table());
    let a = fit.get("alpha_D").unwrap();
    let b = fit.get("beta_D").unwrap();
    within("alpha_D", a.value, a.se, 0.044, 2.0);
    within("beta_D", b.value, b.se, 0.952, 2.0);
}

#[test]
fn negative_sign_spillover_recovered() {
    let mut spec = BivariateSpec::decoupled([0.02, 0.02], [0.04, 0.04], [0.06, 0.06], [0.9, 0.9], 0.3);
    spec.b[1][0] = 0.02;
    spec.sign_shifts = Some(SignShifts {
        alpha_minus: [0.0, 0.0],
        beta_plus: [0.0, -0.018],
    });
    let cfg = BivariateFitConfig {
        sign_shifts: true,
        dcc: false,
        ..Default::default()
    };
    let start = Instant::now();
    let negatives = (0..50u64)
        .map(|seed| {
            let path = simulate_bivariate(&BivariateSimConfig::new(spec.clone(), 50_000, 500 + seed)).unwrap();
            fit_bivariate(&path.returns, &cfg).unwrap().get("beta21+").unwrap().value < 0.0
        })
        .filter(|n| *n)
        .count();
    eprintln!("{negatives}/50 negative in {:?}", start.elapsed());
    assert!(negatives >= 45, "{negatives}/50");
}
