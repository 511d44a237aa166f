//! Task runners shared by the subcommands and `run`.

use std::path::Path;
use std::time::Instant;

use qmep::assumptions::{certify_all, AssumptionBundle, AssumptionSettings};
use qmep::entropic::{self, default_alpha_grid, PressureConstants};
use qmep::fluctuation::{self, default_s_grid};
use qmep::hypotest;
use qmep::instrument::Process;
use qmep::operator::{spectral_report, Tolerances};
use qmep::pathspace::{self, PathCache};
use qmep::reversal::verify_or;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{EpTask, HypotestTask, LdpTask, PressureTask, SampleTask, ScenarioConfig, ValidateTask};
use crate::disk::DiskCache;
use crate::error::{CliError, Result};
use crate::source::Source;

/// A named output file.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn json(name: &str, value: &impl Serialize) -> Result<Self> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        Ok(Artifact { name: name.into(), bytes })
    }

    pub fn csv(name: &str, write: impl FnOnce(&mut Vec<u8>) -> qmep::Result<()>) -> Result<Self> {
        let mut bytes = Vec::new();
        write(&mut bytes)?;
        Ok(Artifact { name: name.into(), bytes })
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let path = dir.join(&self.name);
        std::fs::write(&path, &self.bytes).map_err(|e| CliError::io(&path, e))
    }
}

pub fn validate_task(p: &Process, cache: &PathCache, task: &ValidateTask, tol: &Tolerances) -> Result<Vec<Artifact>> {
    let report = qmep::instrument::validate_with(p.instrument(), tol);
    let spectral = spectral_report(&p.instrument().total(), tol.eigen_cluster)?;
    let reversal = match p.reversal() {
        Some(q) => Some(verify_or(p, q, task.or_horizon, 1e-10, cache.cap())?),
        None => None,
    };
    let value = json!({
        "validation": report,
        "lambda0": p.lambda0(),
        "relaxed": p.is_relaxed(),
        "invariance_defect": p.invariance_defect(),
        "spectral": spectral,
        "reversal": reversal,
    });
    Ok(vec![Artifact::json("validate.json", &value)?])
}

pub fn assumptions_task(cache: &PathCache, settings: &AssumptionSettings) -> Result<(AssumptionBundle, Vec<Artifact>)> {
    let bundle = certify_all(cache, settings)?;
    let art = Artifact::json("assumptions.json", &bundle)?;
    Ok((bundle, vec![art]))
}

pub fn ep_task(p: &Process, cache: &PathCache, task: &EpTask, seed: u64) -> Result<Vec<Artifact>> {
    let bounds = entropic::ep_bounds(cache, task.t_max)?;
    let mc = match task.mc_t {
        Some(t) => Some(entropic::ep_monte_carlo(p, t, task.mc_n, seed)?),
        None => None,
    };
    let value = json!({ "bounds": bounds, "monte_carlo": mc });
    Ok(vec![
        Artifact::json("ep.json", &value)?,
        Artifact::csv("ep.csv", |w| bounds.write_csv(w))?,
    ])
}

pub fn pressure_task(cache: &PathCache, task: &PressureTask, constants: &PressureConstants) -> Result<Vec<Artifact>> {
    let alphas = task.alphas.clone().unwrap_or_else(|| default_alpha_grid(constants.d0.is_some()));
    let curve = entropic::pressure_curve(cache, &alphas, task.t_min, task.t_max, constants)?;
    let summary = json!({
        "t_min": curve.t_min,
        "t_max": curve.t_max,
        "constants": curve.constants,
        "lower_certified": curve.lower_certified,
        "horizon_limited": curve.horizon_limited,
        "extended": curve.extended,
        "ep_lower_bound": curve.ep_lower_bound,
        "ep_estimate": curve.ep_estimate,
        "points": curve.points.iter().map(|p| json!({
            "alpha": p.alpha,
            "upper": p.upper,
            "lower": p.lower,
            "estimate": p.estimate,
        })).collect::<Vec<Value>>(),
        "warnings": curve.warnings,
    });
    Ok(vec![
        Artifact::csv("pressure.csv", |w| curve.write_csv(w))?,
        Artifact::json("pressure.json", &summary)?,
    ])
}

pub fn ldp_task(cache: &PathCache, task: &LdpTask, constants: &PressureConstants) -> Result<Vec<Artifact>> {
    let alphas = default_alpha_grid(constants.d0.is_some());
    let pt = task.pressure_t_max.unwrap_or(task.t_max);
    let curve = entropic::pressure_curve(cache, &alphas, 1, pt, constants)?;
    let validity = fluctuation::validity_interval(&curve)?;
    let grid = task.s_grid.clone().unwrap_or_else(|| default_s_grid(validity, task.s_points));
    let rate = fluctuation::rate_function(&curve, Some(&grid))?;
    let cmp = fluctuation::ldp_empirical(cache, &rate, task.interval, task.t_min, task.t_max, 0.0)?;
    let law = fluctuation::sigma_law(cache, task.t_max)?;
    let fr = fluctuation::check_fluctuation_relation(&law);
    let jar = fluctuation::check_jarzynski(cache, task.t_max)?;
    let value = json!({
        "comparison": cmp,
        "rate_function": {
            "validity": rate.validity,
            "local": rate.local,
            "alpha_range": rate.alpha_range,
            "ep_lower_bound": rate.ep_lower_bound,
            "at_zero": rate.eval(0.0),
            "symmetry_defect": rate.symmetry_defect(),
            "convexity_defect": rate.convexity_defect(),
        },
        "fluctuation_relation": fr,
        "jarzynski": jar,
    });
    Ok(vec![
        Artifact::json("ldp.json", &value)?,
        Artifact::csv("ldp.csv", |w| cmp.write_csv(w))?,
        Artifact::csv("rate_function.csv", |w| rate.write_csv(w))?,
        Artifact::csv("sigma_law.csv", |w| law.write_csv(w))?,
    ])
}

pub fn hypotest_task(cache: &PathCache, task: &HypotestTask, constants: &PressureConstants) -> Result<Vec<Artifact>> {
    let chernoff = hypotest::chernoff_exponent(cache, task.t_min, task.t_max, constants)?;
    let stein = hypotest::stein_exponent(cache, task.t_min, task.t_max, task.epsilon)?;
    let hoeffding = match entropic::pressure_curve(
        cache,
        &hypotest::hoeffding_alpha_grid(41),
        task.t_min,
        task.t_max,
        constants,
    )
    .and_then(|curve| {
        let s = entropic::uniform_grid(0.0, task.s_max, task.s_points);
        hypotest::hoeffding_psi(&curve, &s)
    }) {
        Ok(h) => Some(h),
        Err(qmep::Error::UncertifiedCurve) => None,
        Err(e) => return Err(e.into()),
    };
    let c_t: Vec<Value> = chernoff.rows.iter().map(|r| json!({ "T": r.t, "c_T": r.c_t })).collect();
    let value = json!({
        "cT": c_t,
        "chernoff": chernoff,
        "stein": stein,
        "hoeffding": hoeffding,
    });
    let mut out = vec![
        Artifact::json("hypotest.json", &value)?,
        Artifact::csv("chernoff.csv", |w| chernoff.write_csv(w))?,
        Artifact::csv("stein.csv", |w| stein.write_csv(w))?,
    ];
    if let Some(h) = &hoeffding {
        out.push(Artifact::csv("hoeffding.csv", |w| h.write_csv(w))?);
    }
    Ok(out)
}

pub fn sample_task(p: &Process, task: &SampleTask, seed: u64) -> Result<Vec<Artifact>> {
    let mut bytes = Vec::new();
    for (i, tr) in pathspace::sample_batch(p, task.t, task.n, seed).iter().enumerate() {
        bytes.extend_from_slice(tr.to_json_line(p.instrument(), i)?.as_bytes());
        bytes.push(b'\n');
    }
    Ok(vec![Artifact { name: "samples.jsonl".into(), bytes }])
}

#[derive(Clone, Debug, Serialize)]
pub struct TaskRecord {
    pub name: String,
    pub status: &'static str,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultManifest {
    pub config_hash: String,
    pub library_version: &'static str,
    pub seed: u64,
    pub cap: usize,
    pub tasks: Vec<TaskRecord>,
    pub certificates: Option<AssumptionBundle>,
    /// Wall-clock seconds per task; written to `timings.json`, not to the
    /// manifest, so manifests stay reproducible.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl ResultManifest {
    pub fn failed(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.iter().filter(|t| t.status == "failed")
    }
}

/// Runs every configured task in dependency order and writes artifacts,
/// `manifest.json` and `timings.json` into `out_dir`. A failing task is
/// recorded in the manifest without stopping independent tasks.
pub fn run(config: &ScenarioConfig, base: Option<&Path>, out_dir: &Path) -> Result<ResultManifest> {
    let source: Source = config.instrument.source.parse::<Source>()?.resolved(base);
    let p = source.process(&config.tolerances, config.instrument.rho, config.instrument.theta.as_deref())?;
    config.check(p.letters())?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let cache = PathCache::new(&p, config.cap);
    let disk = DiskCache::from_env();
    let horizon = config.horizons().iter().map(|h| h.1).max().unwrap_or(0);
    if let Some(d) = &disk {
        d.preload(&cache, horizon)?;
    }
    let mut manifest = ResultManifest {
        config_hash: config.hash(),
        library_version: env!("CARGO_PKG_VERSION"),
        seed: config.seed,
        cap: config.cap,
        tasks: Vec::new(),
        certificates: None,
        timings: Vec::new(),
    };
    let record = |name: &str, result: Result<Vec<Artifact>>, started: Instant, m: &mut ResultManifest| {
        m.timings.push((name.to_string(), started.elapsed().as_secs_f64()));
        let rec = match result.and_then(|arts| {
            for a in &arts {
                a.write_to(out_dir)?;
            }
            Ok(arts)
        }) {
            Ok(arts) => TaskRecord {
                name: name.into(),
                status: "ok",
                files: arts.into_iter().map(|a| a.name).collect(),
                error: None,
            },
            Err(e) => TaskRecord { name: name.into(), status: "failed", files: vec![], error: Some(e.diagnostic()) },
        };
        m.tasks.push(rec);
    };
    let t = &config.tasks;
    if let Some(v) = &t.validate {
        let now = Instant::now();
        record("validate", validate_task(&p, &cache, v, &config.tolerances), now, &mut manifest);
    }
    let needs_constants = t.pressure.is_some() || t.ldp.is_some() || t.hypotest.is_some();
    let mut constants = PressureConstants::uncertified(p.lambda0());
    if t.assumptions.is_some() || needs_constants {
        let settings = t.assumptions.unwrap_or_default();
        let now = Instant::now();
        match assumptions_task(&cache, &settings) {
            Ok((bundle, arts)) => {
                constants = bundle.pressure_constants;
                manifest.certificates = Some(bundle);
                if t.assumptions.is_some() {
                    record("assumptions", Ok(arts), now, &mut manifest);
                }
            }
            Err(e) => record("assumptions", Err(e), now, &mut manifest),
        }
    }
    if let Some(e) = &t.ep {
        let now = Instant::now();
        record("ep", ep_task(&p, &cache, e, config.seed), now, &mut manifest);
    }
    if let Some(pr) = &t.pressure {
        let now = Instant::now();
        record("pressure", pressure_task(&cache, pr, &constants), now, &mut manifest);
    }
    if let Some(l) = &t.ldp {
        let now = Instant::now();
        record("ldp", ldp_task(&cache, l, &constants), now, &mut manifest);
    }
    if let Some(h) = &t.hypotest {
        let now = Instant::now();
        record("hypotest", hypotest_task(&cache, h, &constants), now, &mut manifest);
    }
    if let Some(s) = &t.sample {
        let now = Instant::now();
        record("sample", sample_task(&p, s, config.seed), now, &mut manifest);
    }
    Artifact::json("manifest.json", &manifest)?.write_to(out_dir)?;
    let timings: serde_json::Map<String, Value> =
        manifest.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    Artifact::json("timings.json", &timings)?.write_to(out_dir)?;
    if let Some(d) = &disk {
        d.store(&cache)?;
    }
    Ok(manifest)
}
