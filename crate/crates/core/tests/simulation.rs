use tvgarch_core::params::{ArRegime, BreakSchedule, GarchRegime, TvArSpec, TvGarchSpec};
use tvgarch_core::sim::{estimate_moments, simulate, MomentTarget, SimConfig};
use tvgarch_core::tvar::{autocorrelation, Homoscedastic};
use tvgarch_core::tvgarch::unconditional_variance_path;

fn ar1_spec(phis: &[f64], offsets: &[u64]) -> TvArSpec {
    let regimes = phis.iter().map(|&p| ArRegime::ar1(0.0, p)).collect();
    TvArSpec::new(regimes, BreakSchedule::from_offsets(offsets.to_vec()).unwrap()).unwrap()
}

fn homoscedastic() -> TvGarchSpec {
    TvGarchSpec::constant(GarchRegime::new(1.0, 0.0, 0.0, 0.0)).unwrap()
}

#[test]
fn sample_acf_before_breaks_matches_oldest_regime() {
    let spec = ar1_spec(&[0.98, 0.80, 0.70, 0.90], &[100, 120, 140]);
    let out = simulate(&SimConfig::new(spec, homoscedastic(), 300, 20_000, 11)).unwrap();
    for e in estimate_moments(&out, MomentTarget::Acf(1), &[150, 200, 250]).unwrap() {
        assert!((e.value - 0.90).abs() < 0.01, "{e:?}");
    }
}

#[test]
fn sample_lag_seven_acf_matches_closed_form() {
    let spec = ar1_spec(&[0.60, 1.20, 0.80, 0.92], &[100, 121, 142]);
    let out = simulate(&SimConfig::new(spec.clone(), homoscedastic(), 300, 20_000, 12)).unwrap();
    for e in estimate_moments(&out, MomentTarget::Acf(7), &[150, 200]).unwrap() {
        let want = autocorrelation(&spec, e.offset as i64, 7, &Homoscedastic(1.0), 1e-12).unwrap();
        assert!((want - 0.92f64.powi(7)).abs() < 1e-9);
        assert!((e.value - want).abs() < 3.0 * e.se, "{e:?} vs {want}");
    }
    // inside the breaks the sample follows the closed form too
    for e in estimate_moments(&out, MomentTarget::Acf(7), &[0, 110]).unwrap() {
        let want = autocorrelation(&spec, e.offset as i64, 7, &Homoscedastic(1.0), 1e-12).unwrap();
        assert!((e.value - want).abs() < 3.0 * e.se, "{e:?} vs {want}");
    }
}

#[test]
fn variance_long_after_breaks_settles_at_recent_level() {
    // S&P breaks pushed 3000 steps into the past so the path ends deep in the latest regime
    let base = GarchRegime::new(0.001, 0.018, 0.023, 0.954);
    let increments = [
        GarchRegime::new(0.0, -0.039, 0.092, 0.0),
        GarchRegime::new(0.0, 0.0, 0.113, -0.048),
        GarchRegime::new(0.0, 0.0, -0.094, 0.039),
    ];
    let shift = 3000;
    let sched = BreakSchedule::from_offsets(vec![326 + shift, 474 + shift, 3459 + shift]).unwrap();
    let garch = TvGarchSpec::from_dummies(base, &increments, sched).unwrap();
    let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.0));
    let mut cfg = SimConfig::new(ar, garch.clone(), 100, 20_000, 13);
    cfg.burn_in = 6500;
    let out = simulate(&cfg).unwrap();
    let limit = unconditional_variance_path(&garch, &[0], 0.5).unwrap().future_limit.unwrap();
    assert!((limit - 0.001 / (1.0 - 0.991)).abs() < 1e-12);
    for e in estimate_moments(&out, MomentTarget::HMean, &[0, 50]).unwrap() {
        assert!((e.value - limit).abs() < 3.0 * e.se, "{e:?} vs {limit}");
    }
}
