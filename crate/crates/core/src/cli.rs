//! Batch front-end: `moments`, `verify` and `scan`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::currents::Moment;
use crate::error::{Error, Result};
use crate::gs::magnet::MAX_MAGNETISATION_TUPLES;
use crate::model::{ModelSpec, MomentTable, Phi4Model, SingleSiteParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{
    binder_crossing, box_vector, cesaro_green, delta_vector, green_many, irb_check, magnetisation_scan, scan_csv, worst_magnetisation_drop, Family,
    GreenSize, ScanRow, TorusPhi4, TorusSpec,
};
use crate::verifiers::{
    cluster_size_stats, inequality_checks, pairing_and_merging_stats, partition_positivity_stats, random_small_model, random_switching_instance,
    verify_domination, verify_finite_n_switching, verify_ising_switching, verify_switching_ratio, CheckMode, CheckReport, Relation, Side,
    SwitchingMode, Verdict, SIGMAS,
};

pub const BUNDLED_CONFIG: &str = include_str!("../configs/two_vertex.json");
pub const WORKERS_ENV: &str = "TANGLED_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "tangled", version, about = "Tangled-current checks for lattice φ⁴")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single-site moment table ⟨φ^{2k}⟩₀
    Moments(MomentsArgs),
    /// Run a verifier suite and write a run manifest
    Verify(VerifyArgs),
    /// Tabulate an observable over a grid as CSV
    Scan(ScanArgs),
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub max_order: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Switching,
    Inequalities,
    Tangling,
    Irb,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Tiny,
    Small,
    Normal,
    Large,
}

impl Budget {
    pub fn samples(self) -> u64 {
        match self {
            Budget::Tiny => 2_000,
            Budget::Small => 20_000,
            Budget::Normal => 100_000,
            Budget::Large => 1_000_000,
        }
    }

    pub fn sweeps(self) -> usize {
        match self {
            Budget::Tiny => 1_000,
            Budget::Small => 5_000,
            Budget::Normal => 20_000,
            Budget::Large => 100_000,
        }
    }

    pub fn instances(self) -> usize {
        match self {
            Budget::Tiny => 3,
            Budget::Small => 20,
            Budget::Normal | Budget::Large => 100,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Budget::Small)]
    pub budget: Budget,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// include wall-clock times (breaks byte-identical reruns)
    #[arg(long)]
    pub record_timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Observable {
    Magnetisation,
    Green,
    Cesaro,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub observable: Observable,
    /// β values, displacements r, or box sizes n (comma separated)
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub grid: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// torus sides; `limit` requests the L → ∞ value
    #[arg(long, value_delimiter = ',')]
    pub l: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    pub sweeps: usize,
    /// nn | exp:MU:C | power:ALPHA:C
    #[arg(long, default_value = "nn")]
    pub family: String,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedReport {
    pub name: String,
    pub report: CheckReport,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_digest: String,
    pub master_seed: u64,
    pub suite: Suite,
    pub budget: Budget,
    pub reports: Vec<NamedReport>,
    pub counts: Counts,
    pub versions: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl RunManifest {
    pub fn success(&self) -> bool {
        self.counts.fail == 0
    }
}

pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Parse and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let line: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let res = match cli.command {
        Command::Moments(a) => cmd_moments(&a).map(|_| 0),
        Command::Verify(a) => cmd_verify(&a, line).map(|m| if m.success() { 0 } else { 1 }),
        Command::Scan(a) => cmd_scan(&a).map(|_| 0),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<(ModelSpec, String)> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => BUNDLED_CONFIG.to_string(),
    };
    let spec = ModelSpec::from_json(&text)?;
    Ok((spec, hex::encode(Sha256::digest(text.as_bytes()))))
}

/// Write via a temporary sibling and rename, or print when no path is given.
pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) => {
            let mut tmp = p.as_os_str().to_owned();
            tmp.push(format!(".tmp{}", std::process::id()));
            let tmp = PathBuf::from(tmp);
            std::fs::write(&tmp, text)?;
            std::fs::rename(&tmp, p)?;
            Ok(())
        }
    }
}

fn json_text(v: &impl Serialize) -> Result<String> {
    // serde_json maps are ordered, so keys come out sorted
    let v = serde_json::to_value(v)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn moments_json(spec: &ModelSpec, max_order: usize, tol: f64) -> Result<Value> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let params = SingleSiteParams::new(spec.g, spec.a)?;
    let t = MomentTable::build(params, max_order, tol)?;
    let moments: Vec<Value> = t.u.iter().enumerate().map(|(k, v)| json!({ "order": 2 * k, "value": v })).collect();
    Ok(json!({ "g": spec.g, "a": spec.a, "max_order": t.max_order, "tol": tol, "u": t.u, "moments": moments }))
}

pub fn cmd_moments(a: &MomentsArgs) -> Result<()> {
    let (spec, _) = load_config(a.config.as_deref())?;
    emit(a.out.as_deref(), &json_text(&moments_json(&spec, a.max_order, a.tol)?)?)
}

type Job<'a> = Box<dyn Fn() -> Result<Vec<(String, CheckReport)>> + Send + Sync + 'a>;

fn one(name: &str, r: Result<CheckReport>) -> Result<Vec<(String, CheckReport)>> {
    r.map(|r| vec![(name.to_string(), r)])
}

/// A and B used by the switching suite: δ₀+δ₁ each, or 2δ₀ on one vertex.
fn suite_moments(n: usize) -> Moment {
    if n >= 2 {
        Moment::deltas(n, &[0, 1])
    } else {
        Moment::deltas(n, &[0, 0])
    }
}

fn extrapolation_grid(n_vertices: usize) -> Vec<usize> {
    let mut top = 4usize;
    while top < 1024 && ((2 * top + 1) as f64).powi(n_vertices as i32) <= MAX_MAGNETISATION_TUPLES as f64 / 4.0 {
        top *= 2;
    }
    vec![top / 4, top / 2, top]
}

fn switching_jobs<'a>(m: &'a Phi4Model, budget: Budget, seed: u64) -> Vec<Job<'a>> {
    let n = m.len();
    let ab = suite_moments(n);
    let samples = budget.samples();
    let mut jobs: Vec<Job<'a>> = Vec::new();
    let (a1, b1) = (ab.clone(), ab.clone());
    jobs.push(Box::new(move || {
        one(
            "switching_ratio_empty_b",
            verify_switching_ratio(m, &a1, &Moment::zero(n), None, &SwitchingMode::ExactN { n: 8 }, 1e-10, seed),
        )
    }));
    jobs.push(Box::new(move || {
        let grid = extrapolation_grid(n);
        one(
            "switching_ratio_extrapolated",
            verify_switching_ratio(m, &ab, &b1, None, &SwitchingMode::Extrapolated { grid }, 1e-3, seed),
        )
    }));
    for (k, big_n) in [8usize, 32].into_iter().enumerate() {
        let a = suite_moments(n);
        jobs.push(Box::new(move || {
            one(
                &format!("finite_n_switching_n{big_n}"),
                verify_finite_n_switching(m, &a, &a, None, big_n, samples, derive_seed(seed, 10 + k as u64)),
            )
        }));
    }
    if n >= 2 {
        jobs.push(Box::new(move || {
            let mut region = vec![false; n];
            region[0] = true;
            let a = Moment::deltas(n, &[0, 1]);
            let b = Moment::deltas(n, &[0, 0]);
            one(
                "finite_n_switching_subvolume",
                verify_finite_n_switching(m, &a, &b, Some(&region), 8, samples, derive_seed(seed, 20)),
            )
        }));
    }
    jobs.push(Box::new(move || {
        let mut rng = rng_from_seed(derive_seed(seed, 30));
        (0..budget.instances().min(10))
            .map(|i| {
                let (g, s, t, f) = random_switching_instance(&mut rng);
                Ok((format!("ising_switching_{i}"), verify_ising_switching(&g, &s, &t, &f)?))
            })
            .collect()
    }));
    jobs
}

fn inequality_jobs<'a>(m: &'a Phi4Model, budget: Budget, seed: u64) -> Vec<Job<'a>> {
    let sweeps = budget.sweeps();
    let mut jobs: Vec<Job<'a>> = vec![Box::new(move || {
        Ok(inequality_checks(m, sweeps, derive_seed(seed, 0))?
            .into_iter()
            .map(|(k, r)| (format!("config_{k}"), r))
            .collect())
    })];
    for i in 0..budget.instances() {
        jobs.push(Box::new(move || {
            let s = derive_seed(seed, 1 + i as u64);
            let model = random_small_model(&mut rng_from_seed(s));
            Ok(inequality_checks(&model, sweeps, derive_seed(s, 1))?
                .into_iter()
                .map(|(k, r)| (format!("random_{i}_{k}"), r))
                .collect())
        }));
    }
    jobs
}

fn tangling_jobs<'a>(p: SingleSiteParams, budget: Budget, seed: u64) -> Vec<Job<'a>> {
    let samples = budget.samples();
    let mut jobs: Vec<Job<'a>> = vec![
        Box::new(move || one("positivity_s4_exact", partition_positivity_stats(&p, &[8, 16, 32], 4, 0, 0, seed, 0.0))),
        Box::new(move || one("positivity_s2_t2_exact", partition_positivity_stats(&p, &[8, 32], 2, 2, 0, seed, 0.0))),
        Box::new(move || one("positivity_s4_t2_exact", partition_positivity_stats(&p, &[8, 32], 4, 2, 0, seed, 0.0))),
        Box::new(move || {
            one(
                "pairing_merging_s4_exact",
                pairing_and_merging_stats(&p, &[8, 16, 32], 4, 0, seed, 1e-3, 1e-3),
            )
        }),
        Box::new(move || {
            one(
                "pairing_merging_s4_worm",
                pairing_and_merging_stats(&p, &[32], 4, samples, derive_seed(seed, 1), 1e-2, 1e-3),
            )
        }),
        Box::new(move || {
            one(
                "cluster_size_exact",
                cluster_size_stats(p.g, &[p.a, p.a + 1.0], &[8, 16, 32], 2, 0, seed, 4.0),
            )
        }),
        Box::new(move || one("domination_s2_t2_exact", verify_domination(&p, 32, 2, 2, 0, seed))),
        Box::new(move || one("domination_s4_t2_exact", verify_domination(&p, 32, 4, 2, 0, seed))),
        Box::new(move || one("domination_s2_t2_worm", verify_domination(&p, 32, 2, 2, samples, derive_seed(seed, 2)))),
    ];
    for (k, (s, t)) in [(2usize, 0usize), (2, 2), (2, 4), (4, 0), (4, 2), (6, 0)].into_iter().enumerate() {
        jobs.push(Box::new(move || {
            one(
                &format!("positivity_s{s}_t{t}_worm"),
                partition_positivity_stats(&p, &[32], s, t, samples, derive_seed(seed, 10 + k as u64), 1e-3),
            )
        }));
    }
    jobs
}

pub const IRB_BETAS: [f64; 16] = [
    0.10, 0.12, 0.14, 0.16, 0.18, 0.20, 0.22, 0.24, 0.26, 0.28, 0.30, 0.32, 0.34, 0.36, 0.38, 0.40,
];
pub const IRB_FRACTION: f64 = 0.8;

/// Binder scans on L = 4 and 8, then the infrared bound at 0.8 of the
/// crossing for δ₀ and a 2-box.
pub fn irb_reports(p: SingleSiteParams, sweeps: usize, seed: u64, workers: usize) -> Result<Vec<(String, CheckReport)>> {
    let base = |l| -> Result<TorusPhi4> {
        Ok(TorusPhi4 {
            spec: TorusSpec::new(3, l, Family::NearestNeighbour)?,
            params: p,
            beta: 0.0,
        })
    };
    let small = magnetisation_scan(&base(4)?, &IRB_BETAS, sweeps, derive_seed(seed, 4), workers)?;
    let large = magnetisation_scan(&base(8)?, &IRB_BETAS, sweeps, derive_seed(seed, 8), workers)?;
    let mut out = Vec::new();
    for (l, rows) in [(4, &small), (8, &large)] {
        let z = worst_magnetisation_drop(rows);
        let inputs = json!({ "check": "magnetisation_monotone", "l": l, "betas": IRB_BETAS, "sweeps": sweeps, "seed": seed, "g": p.g, "a": p.a });
        let r = CheckReport::new(
            "⟨|m|⟩ nondecreasing in β (largest drop in σ)",
            &inputs,
            Side::exact(z),
            Side::exact(SIGMAS),
            Relation::AtMost,
            CheckMode::Exact,
            0.0,
        )
        .with("rows", rows);
        out.push((format!("magnetisation_monotone_l{l}"), r));
    }
    let crossing = binder_crossing(&small, &large);
    let beta = IRB_FRACTION * crossing.unwrap_or(IRB_BETAS[0]);
    let m = TorusPhi4 { beta, ..base(8)? };
    for (name, v) in [("irb_delta", delta_vector(3)), ("irb_box", box_vector(3, 2))] {
        let r = irb_check(&m, &v, sweeps, derive_seed(seed, 100), &GreenSize::limit())?
            .with("binder_crossing", crossing)
            .with("beta_fraction", IRB_FRACTION);
        out.push((name.to_string(), r));
    }
    Ok(out)
}

fn irb_jobs<'a>(p: SingleSiteParams, budget: Budget, seed: u64, workers: usize) -> Vec<Job<'a>> {
    vec![Box::new(move || irb_reports(p, budget.sweeps(), seed, workers))]
}

fn run_jobs(jobs: &[Job<'_>], workers: usize, timings: bool) -> Result<Vec<(String, CheckReport)>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Vec<(String, CheckReport)>>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let t0 = Instant::now();
                let mut r = jobs[i]();
                if timings {
                    if let Ok(list) = &mut r {
                        let dt = t0.elapsed().as_secs_f64();
                        for (_, rep) in list.iter_mut() {
                            rep.runtime_s = Some(dt);
                        }
                    }
                }
                slots.lock().expect("job slots")[i] = Some(r);
            });
        }
    });
    let mut out = Vec::new();
    for r in slots.into_inner().expect("job slots") {
        out.extend(r.expect("every job ran")?);
    }
    Ok(out)
}

pub fn verify_manifest(spec: &ModelSpec, digest: String, a: &VerifyArgs, command_line: Vec<String>) -> Result<RunManifest> {
    let t0 = Instant::now();
    let model = spec.model()?;
    let params = model.params;
    let w = workers();
    let mut jobs: Vec<Job<'_>> = Vec::new();
    let all = a.suite == Suite::All;
    if all || a.suite == Suite::Switching {
        jobs.extend(switching_jobs(&model, a.budget, derive_seed(a.seed, 1)));
    }
    if all || a.suite == Suite::Inequalities {
        jobs.extend(inequality_jobs(&model, a.budget, derive_seed(a.seed, 2)));
    }
    if all || a.suite == Suite::Tangling {
        jobs.extend(tangling_jobs(params, a.budget, derive_seed(a.seed, 3)));
    }
    if all || a.suite == Suite::Irb {
        jobs.extend(irb_jobs(params, a.budget, derive_seed(a.seed, 4), w));
    }
    let reports: Vec<NamedReport> = run_jobs(&jobs, w, a.record_timings)?
        .into_iter()
        .map(|(name, report)| NamedReport { name, report })
        .collect();
    let mut counts = Counts::default();
    for r in &reports {
        match r.report.verdict {
            Verdict::Pass => counts.pass += 1,
            Verdict::Fail => counts.fail += 1,
            Verdict::Inconclusive => counts.inconclusive += 1,
        }
    }
    let versions = BTreeMap::from([
        ("tangled-currents".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest".to_string(), "1".to_string()),
    ]);
    Ok(RunManifest {
        command_line,
        config_digest: digest,
        master_seed: a.seed,
        suite: a.suite,
        budget: a.budget,
        reports,
        counts,
        versions,
        wall_clock_s: a.record_timings.then(|| t0.elapsed().as_secs_f64()),
    })
}

pub fn cmd_verify(a: &VerifyArgs, command_line: Vec<String>) -> Result<RunManifest> {
    let (spec, digest) = load_config(a.config.as_deref())?;
    let m = verify_manifest(&spec, digest, a, command_line)?;
    for r in &m.reports {
        if r.report.verdict == Verdict::Fail {
            eprintln!("FAIL {}: lhs {} rhs {}", r.name, r.report.lhs.value, r.report.rhs.value);
        }
    }
    eprintln!("pass {} fail {} inconclusive {}", m.counts.pass, m.counts.fail, m.counts.inconclusive);
    emit(a.out.as_deref(), &json_text(&m)?)?;
    Ok(m)
}

pub fn parse_family(s: &str) -> Result<Family> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> Result<f64> {
        parts
            .get(i)
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Error::param("family", format!("cannot read parameter {i} of {s:?}")))
    };
    let f = match parts[0] {
        "nn" if parts.len() == 1 => Family::NearestNeighbour,
        "exp" if parts.len() == 3 => Family::Exponential { mu: num(1)?, c: num(2)? },
        "power" if parts.len() == 3 => Family::PowerLaw { alpha: num(1)?, c: num(2)? },
        _ => return Err(Error::param("family", format!("unknown family {s:?}; use nn, exp:MU:C or power:ALPHA:C"))),
    };
    f.validate()?;
    Ok(f)
}

fn parse_list<T: std::str::FromStr>(field: &str, xs: &[String]) -> Result<Vec<T>> {
    xs.iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::param(field, format!("cannot parse {s:?}"))))
        .collect()
}

fn parse_sizes(xs: &[String]) -> Result<Vec<(String, GreenSize)>> {
    if xs.is_empty() {
        return Ok(vec![("limit".into(), GreenSize::limit())]);
    }
    xs.iter()
        .map(|s| match s.trim() {
            "limit" => Ok(("limit".into(), GreenSize::limit())),
            t => t
                .parse::<usize>()
                .map(|l| (l.to_string(), GreenSize::Torus { l }))
                .map_err(|_| Error::param("l", format!("cannot parse {t:?}"))),
        })
        .collect()
}

pub fn scan_text(a: &ScanArgs) -> Result<String> {
    let (spec, _) = load_config(a.config.as_deref())?;
    let params = SingleSiteParams::new(spec.g, spec.a)?;
    let family = parse_family(&a.family)?;
    let w = workers();
    match a.observable {
        Observable::Magnetisation => {
            let mut betas: Vec<f64> = parse_list("grid", &a.grid)?;
            betas.sort_by(f64::total_cmp);
            if betas.is_empty() {
                return Ok(scan_csv(&[]));
            }
            let seed = a.seed.ok_or_else(|| Error::param("seed", "magnetisation scans need --seed"))?;
            let ls: Vec<usize> = if a.l.is_empty() { vec![8] } else { parse_list("l", &a.l)? };
            let mut rows: Vec<ScanRow> = Vec::new();
            for &l in &ls {
                let base = TorusPhi4 {
                    spec: TorusSpec::new(a.d, l, family)?,
                    params,
                    beta: 0.0,
                };
                rows.extend(magnetisation_scan(&base, &betas, a.sweeps, derive_seed(seed, l as u64), w)?);
            }
            rows.sort_by(|x, y| x.beta.total_cmp(&y.beta).then(x.l.cmp(&y.l)));
            Ok(scan_csv(&rows))
        }
        Observable::Green => {
            let rs: Vec<i64> = parse_list("grid", &a.grid)?;
            let mut s = String::from("L,r,green,error,zero_mode_weight\n");
            if rs.is_empty() {
                return Ok(s);
            }
            let disp: Vec<Vec<i64>> = rs
                .iter()
                .map(|&r| {
                    let mut x = vec![0; a.d];
                    x[0] = r;
                    x
                })
                .collect();
            for (label, size) in parse_sizes(&a.l)? {
                let vals = green_many(&family, a.d, &disp, &size, a.tol, w)?;
                for (r, v) in rs.iter().zip(vals) {
                    s.push_str(&format!("{label},{r},{},{},{}\n", v.value, v.error, v.zero_mode_weight));
                }
            }
            Ok(s)
        }
        Observable::Cesaro => {
            let ns: Vec<usize> = parse_list("grid", &a.grid)?;
            let mut s = String::from("L,n,cesaro\n");
            if ns.is_empty() {
                return Ok(s);
            }
            for (label, size) in parse_sizes(&a.l)? {
                let vals = cesaro_green(&family, a.d, &ns, &size, a.tol)?;
                for (n, v) in ns.iter().zip(vals) {
                    s.push_str(&format!("{label},{n},{v}\n"));
                }
            }
            Ok(s)
        }
    }
}

pub fn cmd_scan(a: &ScanArgs) -> Result<()> {
    emit(a.out.as_deref(), &scan_text(a)?)
}
