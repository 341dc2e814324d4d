//! Config-driven trial loops. Every trial gets its own seed, `derive_seed(seed, trial)`, so
//! results do not depend on the thread count or scheduling.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{Map, Value};

use ral_core::derive_seed;
use ral_core::dist::{prokhorov_distance, DiscreteDist, ProductDist};
use ral_core::learn::{learn_product, learn_scenario, product_sample_count, SampleSet};
use ral_core::mech::TabularMechanism;
use ral_core::multi_item::{bic_prokhorov_robustify, dsic_prokhorov_robustify, opt_bic_lp, Scenario};

use crate::audit::{base_mechanism, bic_pipeline_rows, dsic_pipeline_rows, tv_rows, Ctx};
use crate::load::{read, scenario_from_value};
use crate::report::{expr, instance_hash, Report, ReportRow};
use crate::{Global, Ic};

pub const EXPERIMENT_SCHEMA: &str = "ral.experiment/1";
const KINDS: [&str; 4] = ["learn_product", "end_to_end", "tv_sweep", "prokhorov_sweep"];

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment config (JSON, schema `ral.experiment/1`).
    pub config: PathBuf,
}

/// Collects every schema violation instead of stopping at the first.
struct Fields<'a> {
    obj: &'a Map<String, Value>,
    errs: Vec<String>,
}

impl<'a> Fields<'a> {
    fn num(&mut self, key: &str, default: Option<f64>) -> f64 {
        match self.obj.get(key) {
            None => default.unwrap_or_else(|| {
                self.errs.push(format!("missing number `{}`", key));
                f64::NAN
            }),
            Some(v) => v.as_f64().filter(|x| x.is_finite()).unwrap_or_else(|| {
                self.errs.push(format!("`{}` must be a finite number", key));
                f64::NAN
            }),
        }
    }

    fn pos(&mut self, key: &str, default: Option<f64>) -> f64 {
        let x = self.num(key, default);
        if x.is_finite() && x <= 0.0 {
            self.errs.push(format!("`{}` must be positive", key));
        }
        x
    }

    fn opt_pos(&mut self, key: &str) -> Option<f64> {
        self.obj.contains_key(key).then(|| self.pos(key, None))
    }

    fn count(&mut self, key: &str, default: Option<u64>) -> u64 {
        match self.obj.get(key) {
            None => default.unwrap_or_else(|| {
                self.errs.push(format!("missing integer `{}`", key));
                0
            }),
            Some(v) => match v.as_u64() {
                Some(k) if k > 0 => k,
                _ => {
                    self.errs.push(format!("`{}` must be a positive integer", key));
                    0
                }
            },
        }
    }

    fn nums(&mut self, key: &str) -> Vec<f64> {
        let xs: Option<Vec<f64>> =
            self.obj.get(key).and_then(Value::as_array).and_then(|a| a.iter().map(Value::as_f64).collect());
        match xs {
            Some(xs) if !xs.is_empty() && xs.iter().all(|x| x.is_finite() && *x >= 0.0) => xs,
            _ => {
                self.errs.push(format!("`{}` must be a non-empty array of nonnegative numbers", key));
                Vec::new()
            }
        }
    }

    fn ic(&mut self) -> Ic {
        match self.obj.get("ic").map(|v| v.as_str()) {
            None | Some(Some("bic")) => Ic::Bic,
            Some(Some("dsic")) => Ic::Dsic,
            _ => {
                self.errs.push("`ic` must be \"bic\" or \"dsic\"".into());
                Ic::Bic
            }
        }
    }

    fn value(&mut self, key: &str) -> Option<&'a Value> {
        let v = self.obj.get(key);
        if v.is_none() {
            self.errs.push(format!("missing field `{}`", key));
        }
        v
    }
}

enum Kind {
    LearnProduct { truth: DiscreteDist, eta: f64, h: f64, delta_fail: f64, samples: Option<u64> },
    EndToEnd { truth: Scenario, sigma: f64, eps_target: f64, delta_fail: f64, max_failure: f64, samples: Option<u64>, grids: usize, delta: Option<f64> },
    TvSweep { scenario: Scenario, ic: Ic, eps: Vec<f64> },
    ProkhorovSweep { scenario: Scenario, ic: Ic, eps: Vec<f64>, grids: usize, delta: Option<f64>, alpha: f64 },
}

struct Config {
    kind: Kind,
    seed: Option<u64>,
    trials: usize,
    tolerance: Option<f64>,
    /// Canonical text of everything the results depend on.
    fingerprint: String,
}

// a string is a path relative to the config; an object is inline
fn resolve<'v>(base: &Path, v: &'v Value, errs: &mut Vec<String>, key: &str) -> Option<(PathBuf, Value)> {
    match v {
        Value::String(p) => {
            let path = base.join(p);
            let parsed = read(&path).and_then(|t| {
                serde_json::from_str::<Value>(&t)
                    .map_err(|e| anyhow!("{}: line {} column {}: {}", path.display(), e.line(), e.column(), e))
            });
            match parsed {
                Ok(v) => Some((path, v)),
                Err(e) => {
                    errs.push(format!("`{}`: {:#}", key, e));
                    None
                }
            }
        }
        Value::Object(_) => Some((base.join("config"), v.clone())),
        _ => {
            errs.push(format!("`{}` must be a path or an object", key));
            None
        }
    }
}

fn scenario_field(f: &mut Fields, base: &Path, key: &str) -> Option<Scenario> {
    let v = f.value(key)?;
    let (path, v) = resolve(base, v, &mut f.errs, key)?;
    match scenario_from_value(&path, v) {
        Ok(s) => Some(s),
        Err(e) => {
            f.errs.push(format!("`{}`: {:#}", key, e));
            None
        }
    }
}

fn parse_config(path: &Path) -> Result<Config> {
    let text = read(path)?;
    let root: Value = serde_json::from_str(&text)
        .map_err(|e| anyhow!("{}: line {} column {}: {}", path.display(), e.line(), e.column(), e))?;
    let Some(obj) = root.as_object() else {
        bail!("{}: config must be a JSON object", path.display());
    };
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut f = Fields { obj, errs: Vec::new() };
    match obj.get("schema").and_then(Value::as_str) {
        Some(EXPERIMENT_SCHEMA) => {}
        Some(s) => f.errs.push(format!("unsupported schema `{}`, expected `{}`", s, EXPERIMENT_SCHEMA)),
        None => f.errs.push(format!("missing `schema` (expected `{}`)", EXPERIMENT_SCHEMA)),
    }
    let seed = match obj.get("seed") {
        None => None,
        Some(v) => {
            let s = v.as_u64();
            if s.is_none() {
                f.errs.push("`seed` must be a nonnegative integer".into());
            }
            s
        }
    };
    let trials = f.count("trials", Some(1)) as usize;
    let tolerance = obj.contains_key("tolerance").then(|| f.num("tolerance", None));
    let kind_name = obj.get("kind").and_then(Value::as_str).unwrap_or("");
    let kind = match kind_name {
        "learn_product" => {
            let truth = f.value("truth").and_then(|v| resolve(&base, v, &mut f.errs, "truth")).and_then(|(p, v)| {
                serde_json::from_value::<DiscreteDist>(v)
                    .map_err(|e| f.errs.push(format!("`truth` ({}): {}", p.display(), e)))
                    .ok()
            });
            let eta = f.pos("eta", None);
            let h = f.pos("H", Some(1.0));
            let delta_fail = f.pos("delta_fail", Some(0.1));
            let samples = obj.contains_key("samples").then(|| f.count("samples", None));
            truth.map(|truth| Kind::LearnProduct { truth, eta, h, delta_fail, samples })
        }
        "end_to_end" => {
            let truth = scenario_field(&mut f, &base, "scenario");
            let sigma = f.pos("sigma", None);
            let eps_target = f.pos("eps_target", None);
            let delta_fail = f.pos("delta_fail", Some(0.1));
            let max_failure = f.num("max_failure_rate", Some(0.1));
            let samples = obj.contains_key("samples").then(|| f.count("samples", None));
            let grids = f.count("grids", Some(4)) as usize;
            let delta = f.opt_pos("delta");
            truth.map(|truth| Kind::EndToEnd { truth, sigma, eps_target, delta_fail, max_failure, samples, grids, delta })
        }
        "tv_sweep" => {
            let scenario = scenario_field(&mut f, &base, "scenario");
            let ic = f.ic();
            let eps = f.nums("eps");
            scenario.map(|scenario| Kind::TvSweep { scenario, ic, eps })
        }
        "prokhorov_sweep" => {
            let scenario = scenario_field(&mut f, &base, "scenario");
            let ic = f.ic();
            let eps = f.nums("eps");
            let grids = f.count("grids", Some(4)) as usize;
            let delta = f.opt_pos("delta");
            let alpha = f.pos("alpha", Some(0.5));
            if alpha.is_finite() && alpha >= 1.0 {
                f.errs.push("`alpha` must lie in (0,1)".into());
            }
            scenario.map(|scenario| Kind::ProkhorovSweep { scenario, ic, eps, grids, delta, alpha })
        }
        other => {
            f.errs.push(format!("`kind` must be one of {:?}, got {:?}", KINDS, other));
            None
        }
    };
    if !f.errs.is_empty() {
        bail!("{}: invalid config:\n  {}", path.display(), f.errs.join("\n  "));
    }
    let kind = kind.ok_or_else(|| anyhow!("{}: invalid config", path.display()))?;
    let mut canon = root.clone();
    if let Some(o) = canon.as_object_mut() {
        // the resolved instance stands in for file references
        o.remove("seed");
        o.remove("trials");
        let inst = match &kind {
            Kind::LearnProduct { truth, .. } => serde_json::to_value(truth)?,
            Kind::EndToEnd { truth, .. } => serde_json::to_value(truth)?,
            Kind::TvSweep { scenario, .. } | Kind::ProkhorovSweep { scenario, .. } => serde_json::to_value(scenario)?,
        };
        o.insert("instance".into(), inst);
    }
    Ok(Config { kind, seed, trials, tolerance, fingerprint: canon.to_string() })
}

fn pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("RAL_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| anyhow!("RAL_THREADS must be a nonnegative integer, got `{}`", v))?,
        Err(_) => 0,
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads).build()?)
}

/// Moves mass ε·(each atom) to one random point of a 0.05 grid, so TV ≤ ε per bidder.
fn tv_perturb<R: Rng>(d: &DiscreteDist, eps: f64, h: f64, rng: &mut R) -> Result<DiscreteDist> {
    let steps = (h / 0.05).floor() as u32;
    let z: Vec<f64> = (0..d.dim()).map(|_| (rng.gen_range(0..=steps) as f64 * 0.05).min(h)).collect();
    let mut support = d.support().to_vec();
    let mut w: Vec<f64> = d.probs().iter().map(|p| p * (1.0 - eps)).collect();
    support.push(z);
    w.push(eps);
    Ok(DiscreteDist::from_weights(d.dim(), support, w)?)
}

/// Moves every atom by at most ε/2 in ℓ1, so Prokhorov ≤ ε/2.
fn prokhorov_perturb<R: Rng>(d: &DiscreteDist, eps: f64, h: f64, rng: &mut R) -> Result<DiscreteDist> {
    let r = eps / (2.0 * d.dim() as f64);
    let support = d
        .support()
        .iter()
        .map(|x| x.iter().map(|&v| (v + rng.gen_range(-r..=r)).clamp(0.0, h)).collect())
        .collect();
    Ok(DiscreteDist::from_weights(d.dim(), support, d.probs().to_vec())?)
}

fn binomial_margin(p: f64, t: usize) -> f64 {
    1.96 * (p * (1.0 - p) / t as f64).sqrt()
}

pub fn run(a: &ExperimentArgs, g: &Global) -> Result<Report> {
    let cfg = parse_config(&a.config)?;
    let seed = g.seed.or(cfg.seed).unwrap_or(0);
    let trials = g.trials.unwrap_or(cfg.trials);
    if trials == 0 {
        bail!("trial count must be positive");
    }
    let tol = cfg.tolerance.unwrap_or(g.tolerance);
    let hash = instance_hash(&cfg.fingerprint);
    let pool = pool()?;
    let rows = match &cfg.kind {
        Kind::LearnProduct { truth, eta, h, delta_fail, samples } => {
            let need = product_sample_count(truth.dim(), *h, *eta, *delta_fail)?;
            let n = samples.unwrap_or(need) as usize;
            let per: Vec<(f64, ReportRow)> = pool.install(|| {
                (0..trials)
                    .into_par_iter()
                    .map(|t| -> Result<(f64, ReportRow)> {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                        let set = SampleSet::draw(truth, n, &mut rng);
                        let p = prokhorov_distance(&learn_product(&set, *eta, *h)?, truth)?.value;
                        let exp = format!("learn_product_t{}", t);
                        Ok((p, ReportRow::info(&exp, &hash, "prokhorov", p)))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let c = Ctx { exp: "learn_product", hash: &hash, tol };
            let fails = per.iter().filter(|(p, _)| *p > eta + tol).count() as f64 / trials as f64;
            let mut rows: Vec<ReportRow> = per.into_iter().map(|(_, r)| r).collect();
            rows.push(c.info("samples", n as f64));
            rows.push(c.info("recommended_samples", need as f64));
            rows.push(c.bounded("failure_rate", fails, expr::FAILURE_RATE, delta_fail + binomial_margin(*delta_fail, trials)));
            rows
        }
        Kind::EndToEnd { truth, sigma, eps_target, delta_fail, max_failure, samples, grids, delta } => {
            let need = product_sample_count(truth.m, truth.h, *sigma, *delta_fail)?;
            let n = samples.unwrap_or(need) as usize;
            let per: Vec<(bool, Vec<ReportRow>)> = pool.install(|| {
                (0..trials)
                    .into_par_iter()
                    .map(|t| -> Result<(bool, Vec<ReportRow>)> {
                        let ts = derive_seed(seed, t as u64);
                        let mut rng = ChaCha8Rng::seed_from_u64(ts);
                        let sets: Vec<SampleSet> = truth.d.factors.iter().map(|f| SampleSet::draw(f, n, &mut rng)).collect();
                        let learned = learn_scenario(&sets, *sigma, truth.h, truth.model)?;
                        let (_, m) = opt_bic_lp(&learned, 0.0)?;
                        let p = bic_prokhorov_robustify(&m, &learned, *sigma, *grids, ts, *delta)?;
                        let rep = p.evaluate_bic(&m, &truth.d)?;
                        let eta = rep.mixture_regret.max(0.0);
                        let (opt_eta, _) = opt_bic_lp(truth, eta)?;
                        let exp = format!("end_to_end_t{}", t);
                        let c = Ctx { exp: &exp, hash: &hash, tol };
                        let prok = learned
                            .d
                            .factors
                            .iter()
                            .zip(&truth.d.factors)
                            .map(|(x, y)| prokhorov_distance(x, y).map(|r| r.value))
                            .collect::<ral_core::Result<Vec<_>>>()?
                            .into_iter()
                            .fold(0.0, f64::max);
                        let shortfall = opt_eta - rep.mean_revenue;
                        let rows = vec![
                            c.info("prokhorov_learned", prok),
                            c.info("regret", eta),
                            c.info("revenue", rep.mean_revenue),
                            c.info("opt_eta", opt_eta),
                            c.info("shortfall", shortfall),
                        ];
                        Ok((shortfall <= eps_target + tol, rows))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let fails = per.iter().filter(|(ok, _)| !ok).count() as f64 / trials as f64;
            let c = Ctx { exp: "end_to_end", hash: &hash, tol };
            let mut rows: Vec<ReportRow> = per.into_iter().flat_map(|(_, r)| r).collect();
            rows.push(c.info("samples", n as f64));
            rows.push(c.info("eps_target", *eps_target));
            rows.push(c.bounded("failure_rate", fails, expr::END_TO_END_FAILURE, *max_failure));
            rows
        }
        Kind::TvSweep { scenario, ic, eps } => {
            let m1 = base_mechanism(scenario, *ic)?;
            let jobs: Vec<(usize, f64, usize)> = eps.iter().enumerate().flat_map(|(k, &e)| (0..trials).map(move |t| (k, e, t))).collect();
            let per = pool.install(|| {
                jobs.par_iter()
                    .map(|&(k, e, t)| -> Result<Vec<ReportRow>> {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, (k * trials + t) as u64));
                        let fhat = ProductDist::new(
                            scenario.d.factors.iter().map(|f| tv_perturb(f, e, scenario.h, &mut rng)).collect::<Result<Vec<_>>>()?,
                        )?;
                        let exp = format!("tv_sweep_eps{}_t{}", e, t);
                        let c = Ctx { exp: &exp, hash: &hash, tol };
                        tv_rows(&c, scenario, *ic, Arc::clone(&m1), &fhat)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            per.into_iter().flatten().collect()
        }
        Kind::ProkhorovSweep { scenario, ic, eps, grids, delta, alpha } => {
            let m: Arc<TabularMechanism> = base_mechanism(scenario, *ic)?;
            let jobs: Vec<(usize, f64, usize)> = eps.iter().enumerate().flat_map(|(k, &e)| (0..trials).map(move |t| (k, e, t))).collect();
            let per = pool.install(|| {
                jobs.par_iter()
                    .map(|&(k, e, t)| -> Result<Vec<ReportRow>> {
                        let ts = derive_seed(seed, (k * trials + t) as u64);
                        let mut rng = ChaCha8Rng::seed_from_u64(ts);
                        let fhat = ProductDist::new(
                            scenario.d.factors.iter().map(|f| prokhorov_perturb(f, e, scenario.h, &mut rng)).collect::<Result<Vec<_>>>()?,
                        )?;
                        let exp = format!("prokhorov_sweep_eps{}_t{}", e, t);
                        let c = Ctx { exp: &exp, hash: &hash, tol };
                        Ok(match ic {
                            Ic::Bic => {
                                let p = bic_prokhorov_robustify(&*m, scenario, e, *grids, ts, *delta)?;
                                bic_pipeline_rows(&c, scenario, &p.evaluate_bic(&*m, &fhat)?)
                            }
                            Ic::Dsic => {
                                let p = dsic_prokhorov_robustify(&*m, scenario, e, *alpha, *grids, ts, *delta)?;
                                dsic_pipeline_rows(&c, &p.evaluate_dsic(&*m, &fhat, *alpha)?)
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            per.into_iter().flatten().collect()
        }
    };
    Ok(Report::new("experiment", seed, rows))
}
