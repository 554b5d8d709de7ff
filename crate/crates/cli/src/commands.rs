use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use suzz::diagnostics::{
    cube_probability, cube_probability_skeleton, ess, ks_ess_deflated, ks_one_sample, qq_data, transform_series,
    DiagnosticsReport, EssReport,
};
use suzz::efficiency::{default_observable_for, efficiency_table};
use suzz::io::{fmt17, read_events_jsonl, read_skeleton_csv, write_events_jsonl, write_skeleton_csv};
use suzz::sampler::{chain_rng, chain_seed, default_start, stationary_start, StopRule};
use suzz::{
    equivalence_check, ArrivalSampler, EventChain, KConvention, Observable, RateSpec, Sampler, Skeleton,
    SpeedFunction, SuzzError, Target,
};

use crate::config::Settings;
use crate::error::CliError;

pub const COMMON_KEYS: &[&str] = &["target", "speed", "refresh", "seed", "out", "threads"];
pub const SAMPLE_KEYS: &[&str] = &["switches", "time", "delta", "chains", "start", "sampler", "transform"];
pub const EFFICIENCY_KEYS: &[&str] = &["targets", "speeds", "observable", "convention"];
pub const COMPARE_KEYS: &[&str] = &[
    "targets", "speeds", "switches", "delta", "chains", "start", "transform", "cube",
];
pub const DIAGNOSE_KEYS: &[&str] = &["events", "skeleton", "delta", "transform", "cube", "qq_points"];
pub const ORACLE_KEYS: &[&str] = &["x0", "theta0", "n_events"];

pub fn keys_for(command: &str) -> Vec<&'static str> {
    let extra = match command {
        "sample" => SAMPLE_KEYS,
        "efficiency" => EFFICIENCY_KEYS,
        "compare" => COMPARE_KEYS,
        "diagnose" => DIAGNOSE_KEYS,
        _ => ORACLE_KEYS,
    };
    COMMON_KEYS.iter().chain(extra).copied().collect()
}

pub fn all_keys() -> Vec<&'static str> {
    let mut v: Vec<&str> = crate::COMMANDS.iter().flat_map(|c| keys_for(c)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn out_dir(s: &Settings) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(s.str_or("out", "out"));
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn lib_io(path: &Path) -> impl Fn(SuzzError) -> CliError + '_ {
    move |e| io_err(path, e)
}

fn target(s: &Settings, key: &str, id: &str) -> Result<Target, CliError> {
    s.build(key, id, Target::from_id)
}

fn speed(s: &Settings, key: &str, id: &str) -> Result<SpeedFunction, CliError> {
    s.build(key, id, SpeedFunction::from_id)
}

fn rate_spec(s: &Settings, t: Target, v: SpeedFunction) -> Result<RateSpec, CliError> {
    let d = t.dim();
    let rs = RateSpec::new(t, v);
    let refresh = s.f64_list("refresh")?;
    match refresh.len() {
        0 => Ok(rs),
        1 => s.build("refresh", "", |_| rs.with_refresh(vec![refresh[0]; d])),
        _ => s.build("refresh", "", |_| rs.with_refresh(refresh)),
    }
}

fn single_spec(s: &Settings) -> Result<RateSpec, CliError> {
    let t = target(s, "target", s.required("target")?)?;
    let v = speed(s, "speed", s.str_or("speed", "unit"))?;
    rate_spec(s, t, v)
}

fn seed(s: &Settings) -> Result<u64, CliError> {
    s.parse_or("seed", 1)
}

fn stop_rule(s: &Settings, default_switches: Option<usize>) -> Result<StopRule, CliError> {
    match (s.parse::<usize>("switches")?, s.parse::<f64>("time")?) {
        (Some(_), Some(_)) => Err(s.error("time", "give either switches or time, not both")),
        (Some(0), None) => Err(s.error("switches", "must be positive")),
        (Some(n), None) => Ok(StopRule::Switches(n)),
        (None, Some(t)) if t > 0.0 && t.is_finite() => Ok(StopRule::Time(t)),
        (None, Some(_)) => Err(s.error("time", "must be positive and finite")),
        (None, None) => default_switches
            .map(StopRule::Switches)
            .ok_or_else(|| s.error("switches", "missing: give switches or time")),
    }
}

fn positive(s: &Settings, key: &str, default: f64) -> Result<f64, CliError> {
    let v = s.parse_or(key, default)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(s.error(key, "must be positive"))
    }
}

fn chains(s: &Settings, default: usize) -> Result<usize, CliError> {
    match s.parse_or("chains", default)? {
        0 => Err(s.error("chains", "must be at least 1")),
        n => Ok(n),
    }
}

fn arrivals(s: &Settings) -> Result<ArrivalSampler, CliError> {
    match s.str_or("sampler", "exact") {
        "exact" => Ok(ArrivalSampler::exact()),
        "thinning" => Ok(ArrivalSampler::thinning()),
        other => Err(s.error("sampler", format!("expected exact or thinning, got '{other}'"))),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Start {
    Origin,
    Stationary,
}

fn start(s: &Settings, target: &Target) -> Result<Start, CliError> {
    match s.str_or("start", "origin") {
        "origin" => Ok(Start::Origin),
        "stationary" if target.dim() == 1 && target.quantile_1d(0.5).is_some() => Ok(Start::Stationary),
        "stationary" => Err(s.error("start", "stationary start needs a 1-D target with a quantile function")),
        other => Err(s.error("start", format!("expected origin or stationary, got '{other}'"))),
    }
}

#[derive(Clone, Copy)]
enum Transform {
    None,
    SgnLog,
}

/// `auto` applies the log transform to the heavy-tailed Cauchy targets.
fn transform(s: &Settings, target_id: &str) -> Result<Transform, CliError> {
    match s.str_or("transform", "auto") {
        "none" => Ok(Transform::None),
        "sgnlog" => Ok(Transform::SgnLog),
        "auto" if matches!(target_id, "student:1" | "cauchy5d") => Ok(Transform::SgnLog),
        "auto" => Ok(Transform::None),
        other => Err(s.error("transform", format!("expected auto, none or sgnlog, got '{other}'"))),
    }
}

fn apply(tr: Transform, series: Vec<f64>) -> Vec<f64> {
    match tr {
        Transform::None => series,
        Transform::SgnLog => transform_series(&series),
    }
}

fn run_chain(
    rs: &RateSpec,
    arrivals: ArrivalSampler,
    start: Start,
    stop: StopRule,
    master: u64,
    k: usize,
) -> Result<EventChain, CliError> {
    let mut rng = chain_rng(master, k as u64);
    let (x0, theta0) = match start {
        Start::Origin => default_start(rs.dim()),
        Start::Stationary => stationary_start(&rs.target, &mut rng).map_err(|e| CliError::runtime(format!("chain {k}"), e))?,
    };
    Sampler::new(rs.clone())
        .with_arrivals(arrivals)
        .run(&x0, &theta0, stop, &mut rng)
        .map_err(|e| CliError::runtime(format!("chain {k}"), e))
}

fn ess_per_coordinate(sk: &Skeleton, tr: Transform) -> Result<Vec<EssReport>, SuzzError> {
    (0..sk.dim()).map(|i| ess(&apply(tr, sk.coordinate(i)))).collect()
}

fn mean_ess(reports: &[EssReport]) -> f64 {
    reports.iter().map(|r| r.ess).sum::<f64>() / reports.len() as f64
}

pub fn sample(s: &Settings) -> Result<serde_json::Value, CliError> {
    let rs = single_spec(s)?;
    let stop = stop_rule(s, None)?;
    let delta = positive(s, "delta", 0.1)?;
    let n = chains(s, 1)?;
    let master = seed(s)?;
    let arrivals = arrivals(s)?;
    let start = start(s, &rs.target)?;
    let tr = transform(s, rs.target.id())?;
    let dir = out_dir(s)?;

    let results: Vec<Result<serde_json::Value, CliError>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let chain = run_chain(&rs, arrivals, start, stop, master, k)?;
            let sk = chain.skeleton(delta).map_err(|e| CliError::runtime(format!("chain {k}"), e))?;
            let events_path = dir.join(format!("chain_{k}.events.jsonl"));
            let mut w = create(&events_path)?;
            write_events_jsonl(&chain.events, &mut w).map_err(lib_io(&events_path))?;
            w.flush().map_err(|e| io_err(&events_path, e))?;
            let sk_path = dir.join(format!("chain_{k}.skeleton.csv"));
            let mut w = create(&sk_path)?;
            write_skeleton_csv(&sk, &mut w).map_err(lib_io(&sk_path))?;
            w.flush().map_err(|e| io_err(&sk_path, e))?;
            let ess = ess_per_coordinate(&sk, tr).ok();
            Ok(json!({
                "chain": k,
                "seed": chain_seed(master, k as u64),
                "events": chain.events.len(),
                "switches": chain.switches(),
                "t_end": chain.t_end,
                "proposals": chain.proposals,
                "guard_violations": 0,
                "reconstruction_error": chain.reconstruction_error().unwrap_or(f64::NAN),
                "skeleton_points": sk.len(),
                "ess": ess.map(|v| v.iter().map(|r| r.ess).collect::<Vec<_>>()),
            }))
        })
        .collect();
    let chains = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = json!({
        "target": rs.target.id(),
        "speed": rs.speed.id(),
        "refresh": rs.refresh(),
        "master_seed": master,
        "delta": delta,
        "chains": chains,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn convention(s: &Settings) -> Result<KConvention, CliError> {
    match s.str_or("convention", "symmetrized") {
        "symmetrized" => Ok(KConvention::Symmetrized),
        "as-printed" => Ok(KConvention::AsPrinted),
        other => Err(s.error("convention", format!("expected symmetrized or as-printed, got '{other}'"))),
    }
}

fn id_list(s: &Settings, plural: &str, single: &str, default: &str) -> Vec<String> {
    let v = s.list(plural);
    if v.is_empty() {
        vec![s.str_or(single, default).to_string()]
    } else {
        v
    }
}

pub fn efficiency(s: &Settings) -> Result<String, CliError> {
    let targets = id_list(s, "targets", "target", "normal1d")
        .iter()
        .map(|id| target(s, "targets", id))
        .collect::<Result<Vec<_>, _>>()?;
    let speeds = id_list(s, "speeds", "speed", "unit")
        .iter()
        .map(|id| speed(s, "speeds", id))
        .collect::<Result<Vec<_>, _>>()?;
    let obs = match s.str_or("observable", "auto") {
        "auto" => None,
        id => Some(s.build("observable", id, Observable::from_id)?),
    };
    let conv = convention(s)?;
    let dir = out_dir(s)?;
    let table = efficiency_table(
        &targets,
        &speeds,
        |t| obs.clone().unwrap_or_else(|| default_observable_for(t)),
        conv,
    );
    let csv = table.to_csv();
    write_text(&dir.join("efficiency.csv"), &csv)?;
    write_json(&dir.join("efficiency.json"), &table)?;
    Ok(csv)
}

#[derive(Serialize)]
struct CompareRow {
    target: String,
    speed: String,
    chains: usize,
    ess_mean: f64,
    ess_median: f64,
    ess_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn median(v: &[f64]) -> f64 {
    let mut w = v.to_vec();
    w.sort_by(f64::total_cmp);
    let m = w.len() / 2;
    if w.len() % 2 == 1 {
        w[m]
    } else {
        0.5 * (w[m - 1] + w[m])
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or(String::new(), fmt17)
}

pub fn compare(s: &Settings) -> Result<String, CliError> {
    let targets = id_list(s, "targets", "target", "student:1")
        .iter()
        .map(|id| target(s, "targets", id))
        .collect::<Result<Vec<_>, _>>()?;
    let speeds = id_list(s, "speeds", "speed", "unit")
        .iter()
        .map(|id| speed(s, "speeds", id))
        .collect::<Result<Vec<_>, _>>()?;
    let stop = stop_rule(s, Some(10_000))?;
    let delta = positive(s, "delta", 0.1)?;
    let n = chains(s, 5)?;
    let master = seed(s)?;
    let ls = s.f64_list("cube")?;
    if ls.iter().any(|l| !(*l > 0.0)) {
        return Err(s.error("cube", "side lengths must be positive"));
    }
    let dir = out_dir(s)?;

    let mut cells = Vec::new();
    for t in &targets {
        let tr = transform(s, t.id())?;
        let st = start(s, t)?;
        for v in &speeds {
            cells.push((rate_spec(s, t.clone(), v.clone())?, tr, st));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..n).map(move |k| (c, k))).collect();
    let results: Vec<Result<(f64, Vec<f64>), CliError>> = jobs
        .par_iter()
        .map(|(c, k)| {
            let (rs, tr, st) = &cells[*c];
            let ctx = |e| CliError::runtime(format!("{}/{} chain {k}", rs.target.id(), rs.speed.id()), e);
            let chain = run_chain(rs, ArrivalSampler::exact(), *st, stop, master, *k)?;
            let sk = chain.skeleton(delta).map_err(ctx)?;
            let e = mean_ess(&ess_per_coordinate(&sk, *tr).map_err(ctx)?);
            Ok((e, ls.iter().map(|l| cube_probability(&chain, *l)).collect()))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::from("target,speed,chains,ess_mean,ess_median,ess_sd\n");
    let mut cube = String::from("target,speed,l,estimate_mean,estimate_sd,actual\n");
    let mut rows = Vec::new();
    for (c, (rs, _, _)) in cells.iter().enumerate() {
        let mine = &results[c * n..(c + 1) * n];
        let values: Vec<f64> = mine.iter().map(|r| r.0).collect();
        let (mean, sd) = mean_sd(&values);
        let row = CompareRow {
            target: rs.target.id().into(),
            speed: rs.speed.id().into(),
            chains: n,
            ess_mean: mean,
            ess_median: median(&values),
            ess_sd: sd,
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.target,
            row.speed,
            n,
            fmt17(row.ess_mean),
            fmt17(row.ess_median),
            fmt17(row.ess_sd)
        ));
        rows.push(row);
        for (j, l) in ls.iter().enumerate() {
            let est: Vec<f64> = mine.iter().map(|r| r.1[j]).collect();
            let (m, sd) = mean_sd(&est);
            let actual = if rs.dim() == 1 {
                rs.target.cdf_1d(*l).zip(rs.target.cdf_1d(-l)).map(|(a, b)| a - b)
            } else {
                None
            };
            cube.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rs.target.id(),
                rs.speed.id(),
                fmt17(*l),
                fmt17(m),
                fmt17(sd),
                opt_num(actual)
            ));
        }
    }
    write_text(&dir.join("compare.csv"), &csv)?;
    write_json(&dir.join("compare.json"), &rows)?;
    if !ls.is_empty() {
        write_text(&dir.join("cube.csv"), &cube)?;
    }
    Ok(csv)
}

pub fn diagnose(s: &Settings) -> Result<DiagnosticsReport, CliError> {
    let rs = single_spec(s)?;
    let delta = positive(s, "delta", 0.1)?;
    let tr = transform(s, rs.target.id())?;
    let ls = s.f64_list("cube")?;
    let qq_points: usize = s.parse_or("qq_points", 99)?;
    let dir = out_dir(s)?;

    let (chain, sk) = match (s.str("events"), s.str("skeleton")) {
        (Some(_), Some(_)) => return Err(s.error("skeleton", "give either events or skeleton, not both")),
        (Some(p), None) => {
            let path = PathBuf::from(p);
            let f = File::open(&path).map_err(|e| io_err(&path, e))?;
            let events = read_events_jsonl(std::io::BufReader::new(f)).map_err(|e| match e {
                SuzzError::Parse { line, message } => CliError::Config {
                    line: Some(line),
                    field: Some("events".into()),
                    message: format!("{}: {message}", path.display()),
                },
                other => io_err(&path, other),
            })?;
            let chain = EventChain::from_events(rs.clone(), events, None)
                .map_err(|e| CliError::runtime("rebuilding chain", e))?;
            let sk = chain.skeleton(delta).map_err(|e| CliError::runtime("skeleton", e))?;
            (Some(chain), sk)
        }
        (None, Some(p)) => {
            let path = PathBuf::from(p);
            let f = File::open(&path).map_err(|e| io_err(&path, e))?;
            let sk = read_skeleton_csv(std::io::BufReader::new(f), delta).map_err(|e| match e {
                SuzzError::Parse { line, message } => CliError::Config {
                    line: Some(line),
                    field: Some("skeleton".into()),
                    message: format!("{}: {message}", path.display()),
                },
                other => io_err(&path, other),
            })?;
            if sk.dim() != rs.dim() {
                return Err(s.error("skeleton", format!("skeleton has dimension {}, target {}", sk.dim(), rs.dim())));
            }
            (None, sk)
        }
        (None, None) => return Err(s.error("events", "missing: give events or skeleton")),
    };

    let ess = ess_per_coordinate(&sk, tr).map_err(|e| CliError::runtime("ESS", e))?;
    let raw = sk.coordinate(0);
    let (ks, ks_deflated, qq) = if rs.dim() == 1 && rs.target.has_cdf() {
        let cdf = |x| rs.target.cdf_1d(x).unwrap();
        let quantile = |p| rs.target.quantile_1d(p).unwrap();
        (
            Some(ks_one_sample(&raw, cdf).map_err(|e| CliError::runtime("KS", e))?),
            Some(ks_ess_deflated(&raw, cdf).map_err(|e| CliError::runtime("KS", e))?),
            qq_data(&raw, quantile, qq_points).map_err(|e| CliError::runtime("QQ", e))?,
        )
    } else {
        (None, None, Vec::new())
    };
    let cube: Vec<(f64, f64)> = ls
        .iter()
        .map(|l| {
            let p = match &chain {
                Some(c) => cube_probability(c, *l),
                None => cube_probability_skeleton(&sk, *l),
            };
            (*l, p)
        })
        .collect();

    let report = DiagnosticsReport {
        ess,
        ks,
        ks_deflated,
        qq,
        cube,
    };
    write_json(&dir.join("diagnostics.json"), &report)?;
    if !report.qq.is_empty() {
        let mut text = String::from("p,empirical,reference\n");
        for q in &report.qq {
            text.push_str(&format!("{},{},{}\n", fmt17(q.p), fmt17(q.empirical), fmt17(q.reference)));
        }
        write_text(&dir.join("qq.csv"), &text)?;
    }
    if !report.cube.is_empty() {
        let mut text = String::from("l,estimate\n");
        for (l, p) in &report.cube {
            text.push_str(&format!("{},{}\n", fmt17(*l), fmt17(*p)));
        }
        write_text(&dir.join("cube.csv"), &text)?;
    }
    Ok(report)
}

pub fn oracle1d(s: &Settings) -> Result<String, CliError> {
    let rs = single_spec(s)?;
    if rs.dim() != 1 {
        return Err(s.error("target", format!("oracle1d needs a 1-D target, got dimension {}", rs.dim())));
    }
    let x0: f64 = s.parse_or("x0", 0.0)?;
    let theta0: i8 = s.parse_or("theta0", 1)?;
    if theta0 != 1 && theta0 != -1 {
        return Err(s.error("theta0", "must be 1 or -1"));
    }
    let n: usize = s.parse_or("n_events", 1000)?;
    let report = equivalence_check(&rs, x0, theta0, n, seed(s)?).map_err(|e| CliError::runtime("oracle1d", e))?;
    let text = serde_json::to_string(&report).map_err(|e| CliError::Io {
        path: "oracle1d.json".into(),
        message: e.to_string(),
    })?;
    write_text(&out_dir(s)?.join("oracle1d.json"), &format!("{text}\n"))?;
    Ok(text)
}
