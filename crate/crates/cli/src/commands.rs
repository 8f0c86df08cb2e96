use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use serde::Serialize;
use tvgarch_core::bivariate::{fit_bivariate, BivariateFitConfig};
use tvgarch_core::breaks::{scan_variance_breaks, segments_from_breaks, BreakCandidate, BreakScanResult};
use tvgarch_core::io::{
    dates_to_indices, ingest_prices_path, read_dates_path, write_json, Cell, Format, InputConfig, Metadata, PriceSeries,
    RunConfig, Table,
};
use tvgarch_core::params::ShockMoments;
use tvgarch_core::qml::{self, DummyMask, FitOptions, ParamEstimate, UnivariateModelSpec};
use tvgarch_core::sim::{self, SimConfig};
use tvgarch_core::tvar::{self, Homoscedastic, VarianceProfile, XiTable};
use tvgarch_core::tvgarch::{self, GarchVarianceProfile, MseTarget, SigmaProducts};
use tvgarch_core::{Error, Result};

use crate::Common;

struct Ctx {
    cfg: RunConfig,
    seed: Option<u64>,
    format: Format,
    dir: PathBuf,
    common: Common,
}

impl Ctx {
    fn load(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        if common.seed.is_some() {
            cfg.seed = common.seed;
        }
        let out = cfg.output.clone();
        Ok(Self {
            seed: cfg.seed,
            format: common.format(out.as_ref().and_then(|o| o.format)),
            dir: common.output_dir(out.as_ref().and_then(|o| o.dir.as_deref())),
            cfg,
            common: common.clone(),
        })
    }

    fn meta(&self) -> Metadata {
        Metadata::new(self.seed, self.cfg.hash())
    }

    fn emit<T: Serialize>(&self, name: &str, table: &Table, json: Option<&T>) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let meta = self.meta();
        let path = match self.format {
            Format::Csv => {
                let path = self.dir.join(format!("{name}.csv"));
                table.write_csv(&meta, BufWriter::new(File::create(&path)?))?;
                path
            }
            Format::Json => {
                let path = self.dir.join(format!("{name}.json"));
                let w = BufWriter::new(File::create(&path)?);
                match json {
                    Some(v) => write_json(&meta, v, w)?,
                    None => write_json(&meta, &table.to_json(), w)?,
                }
                path
            }
        };
        println!("wrote {}", path.display());
        Ok(())
    }

    fn shock(&self) -> Result<ShockMoments> {
        self.cfg.shocks.moments()
    }

    fn input(&self, columns: usize) -> Result<PriceSeries> {
        let path = self
            .common
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("--input is required".into()))?;
        let ic = self.cfg.input.clone().unwrap_or(InputConfig {
            date_column: "date".into(),
            price_columns: vec!["close".into()],
        });
        if ic.price_columns.len() != columns {
            return Err(Error::Config(format!(
                "[input].price_columns needs {columns} column(s), got {}",
                ic.price_columns.len()
            )));
        }
        ingest_prices_path(path, &ic.date_column, &ic.price_columns)
    }

    /// Break dates from `--dates`, else from the config.
    fn override_dates(&self) -> Result<Option<Vec<chrono::NaiveDate>>> {
        self.common.dates.as_ref().map(|p| read_dates_path(p)).transpose()
    }
}

fn none() -> Option<&'static ()> {
    None
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| Error::Config(format!("missing [{name}] section")))
}

pub fn simulate(common: &Common) -> Result<()> {
    let ctx = Ctx::load(common)?;
    let s = section(&ctx.cfg.simulate, "simulate")?;
    let mut config = SimConfig::new(ctx.cfg.ar_spec()?, ctx.cfg.garch_spec()?, s.path_length, s.path_count, ctx.seed.unwrap_or(0));
    config.burn_in = s.burn_in;
    config.shocks = ctx.cfg.shocks.dist();
    let out = sim::simulate(&config)?;
    let mut t = Table::new(&["path", "offset", "y", "h", "eps", "v"]);
    for (p, path) in out.paths.iter().enumerate() {
        let n = path.len();
        for j in 0..n {
            t.push(vec![p.into(), (n - 1 - j).into(), path.y[j].into(), path.h[j].into(), path.eps[j].into(), path.v[j].into()]);
        }
    }
    ctx.emit("simulate", &t, none())
}

pub fn solve(common: &Common) -> Result<()> {
    let ctx = Ctx::load(common)?;
    let k = section(&ctx.cfg.solve, "solve")?.horizon;
    let ar = ctx.cfg.ar_spec()?;
    let xi = XiTable::compute(&ar, 0, k);
    let garch = ctx.cfg.garch.is_some().then(|| ctx.cfg.garch_spec()).transpose()?;
    let prods = match &garch {
        Some(g) => Some(SigmaProducts::compute(g, k, None, ctx.shock()?.neg_prob)?),
        None => None,
    };
    let mut headers = vec!["k", "xi"];
    if prods.is_some() {
        headers.extend(["zeta_bar", "zeta_sq_bar", "g_sq_bar"]);
    }
    let mut t = Table::new(&headers);
    for r in 0..=k {
        let mut row: Vec<Cell> = vec![r.into(), xi.get(r as i64).into()];
        if let Some(p) = &prods {
            row.push(p.zeta_bar[r].into());
            row.push(p.zeta_sq_bar[r].into());
            row.push(if r == 0 { Cell::Text(String::new()) } else { p.g_sq_bar[r].into() });
        }
        t.push(row);
    }
    ctx.emit("solve", &t, none())
}

pub fn forecast(common: &Common) -> Result<()> {
    let ctx = Ctx::load(common)?;
    let f = section(&ctx.cfg.forecast, "forecast")?;
    let ar = ctx.cfg.ar_spec()?;
    let garch = ctx.cfg.garch_spec()?;
    let shock = ctx.shock()?;
    let init = (f.y_init[0], f.y_init[1]);
    let mut t = Table::new(&["k", "mean", "mean_mse", "variance", "variance_mse"]);
    for k in 1..=f.horizon {
        let moments = tvgarch::conditional_moments_from(&garch, &shock, k, f.h_init);
        let error_vars: Vec<f64> = moments[1..].iter().map(|m| m.0).collect();
        let second: Vec<f64> = (1..=k).map(|r| moments[k - r].1).collect();
        t.push(vec![
            k.into(),
            tvar::predict_mean(&ar, k, init)?.into(),
            tvar::forecast_error_variance(&ar, &error_vars)?.into(),
            tvgarch::predict_variance(&garch, k, f.h_init, shock.neg_prob)?.into(),
            tvgarch::variance_mse(&garch, k, &second, &shock, MseTarget::Variance)?.into(),
        ]);
    }
    ctx.emit("forecast", &t, none())
}

pub fn acf(common: &Common) -> Result<()> {
    let ctx = Ctx::load(common)?;
    let a = section(&ctx.cfg.acf, "acf")?;
    let ar = ctx.cfg.ar_spec()?;
    let profile: Box<dyn VarianceProfile> = match a.error_variance {
        Some(v) => Box::new(Homoscedastic(v)),
        None => Box::new(GarchVarianceProfile::new(&ctx.cfg.garch_spec()?, ctx.shock()?.neg_prob)?),
    };
    if a.from < a.to {
        return Err(Error::Config("[acf] needs from >= to".into()));
    }
    let mut t = Table::new(&["offset", "lag", "acf"]);
    for offset in (a.to..=a.from).rev() {
        for &lag in &a.lags {
            t.push(vec![offset.into(), lag.into(), tvar::autocorrelation(&ar, offset, lag, profile.as_ref(), a.tol)?.into()]);
        }
    }
    ctx.emit("acf", &t, none())
}

pub fn uncond(common: &Common) -> Result<()> {
    let ctx = Ctx::load(common)?;
    let u = section(&ctx.cfg.uncond, "uncond")?;
    if u.from < u.to {
        return Err(Error::Config("[uncond] needs from >= to".into()));
    }
    let garch = ctx.cfg.garch_spec()?;
    let offsets: Vec<i64> = (u.to..=u.from).rev().collect();
    let path = tvgarch::unconditional_variance_path(&garch, &offsets, ctx.shock()?.neg_prob)?;
    let mut t = Table::new(&["offset", "variance", "past_limit", "future_limit"]);
    for (o, v) in path.offsets.iter().zip(&path.values) {
        t.push(vec![
            (*o).into(),
            (*v).into(),
            path.past_limit.into(),
            path.future_limit.map_or(Cell::Text(String::new()), Cell::Num),
        ]);
    }
    ctx.emit("uncond", &t, Some(&path))
}

fn estimates_table(params: &[ParamEstimate]) -> Table {
    let mut t = Table::new(&["name", "value", "se", "t_stat", "p_value"]);
    for p in params {
        t.push(vec![p.name.clone().into(), p.value.into(), p.se.into(), p.t_stat.into(), p.p_value.into()]);
    }
    t
}

fn mask_from(names: Option<&Vec<String>>) -> DummyMask {
    match names {
        None => DummyMask::ALL,
        Some(n) => DummyMask {
            omega: n.iter().any(|s| s == "omega"),
            alpha: n.iter().any(|s| s == "alpha"),
            gamma: n.iter().any(|s| s == "gamma"),
            beta: n.iter().any(|s| s == "beta"),
        },
    }
}

fn run_univariate(mut ctx: Ctx, sign_regime: bool) -> Result<()> {
    let prices = ctx.input(1)?;
    let returns = prices.returns(0);
    let mut fc = ctx.cfg.fit.clone().unwrap_or(tvgarch_core::io::FitConfig {
        mean_lags: 0,
        asymmetry: !sign_regime,
        break_dates: vec![],
        free: None,
        prune_level: None,
        max_iter: None,
    });
    if let Some(d) = ctx.override_dates()? {
        fc.break_dates = d;
    }
    // the effective dates feed the config hash
    ctx.cfg.fit = Some(fc.clone());
    let mut spec = if sign_regime {
        UnivariateModelSpec::sign_regime(fc.mean_lags)
    } else if fc.break_dates.is_empty() {
        UnivariateModelSpec::plain_gjr(fc.mean_lags)
    } else {
        let idx = dates_to_indices(prices.return_dates(), &fc.break_dates)?;
        UnivariateModelSpec::with_breaks(fc.mean_lags, idx, mask_from(fc.free.as_ref()))
    };
    spec.asymmetry = fc.asymmetry;
    let mut options = FitOptions {
        prune_level: fc.prune_level,
        ..Default::default()
    };
    if let Some(m) = fc.max_iter {
        options.max_iter = m;
    }
    let result = qml::fit(&returns, &spec, options)?;
    print!("{}", result.to_table());
    let name = if sign_regime { "fit-regime" } else { "fit" };
    ctx.emit(name, &estimates_table(&result.params), Some(&result))
}

pub fn fit(common: &Common) -> Result<()> {
    run_univariate(Ctx::load(common)?, false)
}

pub fn fit_regime(common: &Common) -> Result<()> {
    run_univariate(Ctx::load(common)?, true)
}

pub fn fit_biv(common: &Common) -> Result<()> {
    let mut ctx = Ctx::load(common)?;
    let prices = ctx.input(2)?;
    let r1 = prices.returns(0);
    let r2 = prices.returns(1);
    let returns: Vec<[f64; 2]> = r1.iter().zip(&r2).map(|(a, b)| [*a, *b]).collect();
    let mut bc = ctx.cfg.bivariate.clone().unwrap_or(tvgarch_core::io::BivariateConfig {
        mean_lags: 0,
        asymmetry: true,
        spillovers: true,
        sign_shifts: false,
        dcc: true,
        breaks: vec![],
    });
    if let Some(dates) = ctx.override_dates()? {
        if dates.len() == bc.breaks.len() {
            for (b, d) in bc.breaks.iter_mut().zip(dates) {
                b.date = d;
            }
        } else {
            let all = ["alpha12", "alpha21", "beta12", "beta21"].map(String::from).to_vec();
            bc.breaks = dates
                .into_iter()
                .map(|date| tvgarch_core::io::BivariateBreakConfig { date, free: all.clone() })
                .collect();
        }
    }
    ctx.cfg.bivariate = Some(bc.clone());
    let dates: Vec<_> = bc.breaks.iter().map(|b| b.date).collect();
    let idx = dates_to_indices(prices.return_dates(), &dates)?;
    let config = BivariateFitConfig {
        mean_lags: bc.mean_lags,
        asymmetry: bc.asymmetry,
        spillovers: bc.spillovers,
        breaks: idx
            .iter()
            .zip(&bc.breaks)
            .map(|(&i, b)| {
                let has = |n: &str| b.free.iter().any(|s| s == n);
                (i, [has("alpha12"), has("alpha21"), has("beta12"), has("beta21")])
            })
            .collect(),
        sign_shifts: bc.sign_shifts,
        dcc: bc.dcc,
    };
    let result = fit_bivariate(&returns, &config)?;
    print!("{}", result.to_table());
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let params: Vec<ParamEstimate> = result.variance.iter().chain(&result.dcc).cloned().collect();
    ctx.emit("fit-biv", &estimates_table(&params), Some(&result))
}

pub fn breaks(common: &Common) -> Result<()> {
    let ctx = Ctx::load(common)?;
    let prices = ctx.input(1)?;
    let returns = prices.returns(0);
    let bc = ctx.cfg.breaks.clone().unwrap_or_default();
    let result = match ctx.override_dates()? {
        // user dates take precedence over detection
        Some(d) => {
            let idx = dates_to_indices(prices.return_dates(), &d)?;
            BreakScanResult {
                segments: segments_from_breaks(&returns, &idx)?,
                breaks: idx
                    .into_iter()
                    .map(|index| BreakCandidate {
                        index,
                        statistic: f64::NAN,
                        p_value: f64::NAN,
                    })
                    .collect(),
                level: bc.level,
                min_segment: bc.min_segment,
            }
        }
        None => scan_variance_breaks(&returns, bc.min_segment, bc.level)?,
    };
    let dates = prices.return_dates();
    let mut t = Table::new(&["index", "date", "statistic", "p_value"]);
    for b in &result.breaks {
        t.push(vec![b.index.into(), dates[b.index].to_string().into(), b.statistic.into(), b.p_value.into()]);
    }
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        scan: &'a BreakScanResult,
        dates: Vec<String>,
    }
    let out = Out {
        dates: result.breaks.iter().map(|b| dates[b.index].to_string()).collect(),
        scan: &result,
    };
    println!("{} break(s)", result.breaks.len());
    ctx.emit("breaks", &t, Some(&out))
}
