use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{anyhow, bail, Context, Result};

use storage_bounds::adjust::{train_policy, PriceModelConfig};
use storage_bounds::ced::{
    bounds_csv, build_dispatch, extract_bounds, linear_decay, rolling_bounds, solve_dispatch, BoundSeries,
    ComplementarityMode, History, Provenance,
};
use storage_bounds::config::{load_system, LoadedSystem, SystemDocument};
use storage_bounds::csvfmt::f6;
use storage_bounds::rng::stream;
use storage_bounds::sdp::{control_policy, thresholds, PriceInput};
use storage_bounds::sim::{
    parse_results_csv, results_csv, run_cells, summarize, summary_csv, ExperimentPlan, Grouping, RunMetrics, Toggle,
};
use storage_bounds::system::{validate_system, NetloadModel};
use storage_bounds::Error;

use crate::manifest::{hash_parts, now, version, FailureRecord, RunManifest};
use crate::{BoundsArgs, Common, Mode, PolicyArgs, SimulateArgs};

/// Marks an input that loaded but is not acceptable.
#[derive(Debug)]
struct InvalidInput(String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Io(_) => 3,
                Error::Infeasible(_) | Error::DirtyDuals(_) | Error::Solver(_) => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn out_dir(common: &Common, command: &str) -> PathBuf {
    match (&common.out, std::env::var_os("OUT_ROOT")) {
        (Some(p), _) => p.clone(),
        (None, Some(root)) => PathBuf::from(root).join(command),
        (None, None) => PathBuf::from("out").join(command),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::Io)?;
    std::fs::write(dir.join(name), text).map_err(Error::Io).with_context(|| format!("writing {name}"))
}

/// Loads and validates; a failed validation is an input error.
fn load(common: &Common) -> Result<LoadedSystem> {
    let mut loaded = load_system(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(eps) = common.epsilon {
        loaded.system.config.epsilon = eps;
    }
    let report = validate_system(&loaded.system, &loaded.netload);
    if !report.passed() {
        return Err(anyhow!(InvalidInput(report.to_string())));
    }
    Ok(loaded)
}

pub fn validate(config: &Path) -> Result<u8> {
    let loaded = load_system(config).with_context(|| format!("loading {}", config.display()))?;
    let report = validate_system(&loaded.system, &loaded.netload);
    println!("{report}");
    Ok(if report.passed() { 0 } else { 2 })
}

fn lmp_rows(out: &mut String, k: usize, series: &BoundSeries, nodes: &[usize]) {
    for (w, row) in series.lmp.iter().enumerate() {
        for (s, l) in row.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{},{}", series.start + w, nodes[s], f6(*l));
        }
    }
}

pub fn bounds(a: &BoundsArgs) -> Result<u8> {
    let loaded = load(&a.common)?;
    let sys = &loaded.system;
    let eps = sys.config.epsilon;
    let dir = out_dir(&a.common, "bounds");
    let realized = || -> Result<Vec<Vec<f64>>> { Ok(loaded.netload.sample(&mut stream(a.common.seed, &[0]))?) };
    let solve = |model: &NetloadModel, prov: Provenance| -> Result<(BoundSeries, String)> {
        let sol = solve_dispatch(&build_dispatch(sys, model, eps, 0, &History::default(), ComplementarityMode::Relaxed)?)?;
        let series = extract_bounds(&sol, 0, prov)?;
        let mut lmp = String::from("k,t,node,lmp\n");
        for w in 0..sol.window_len() {
            for n in 0..sys.network.node_count {
                let _ = writeln!(lmp, "0,{w},{n},{}", f6(sol.lmp(n, w)));
            }
        }
        Ok((series, lmp))
    };
    let storage_nodes: Vec<usize> = sys.storages.iter().map(|s| s.node).collect();
    let (bounds, lmp) = match a.mode {
        Mode::Da => {
            let (s, l) = solve(&loaded.netload, Provenance::DayAhead)?;
            (bounds_csv(&[(0, &s)]), l)
        }
        Mode::Hindsight => {
            let (s, l) = solve(&NetloadModel::deterministic(realized()?), Provenance::Hindsight)?;
            (bounds_csv(&[(0, &s)]), l)
        }
        Mode::Rolling => {
            let decay = linear_decay(a.lookahead);
            let rb = rolling_bounds(sys, &loaded.netload, eps, &realized()?, &decay, ComplementarityMode::Relaxed)?;
            let rows: Vec<(usize, &BoundSeries)> = rb.steps.iter().map(|s| (0, s)).collect();
            let mut lmp = String::from("k,t,node,lmp\n");
            for (k, s) in rb.steps.iter().enumerate() {
                lmp_rows(&mut lmp, k, s, &storage_nodes);
            }
            (bounds_csv(&rows), lmp)
        }
    };
    write(&dir, "bounds.csv", &bounds)?;
    write(&dir, "lmp.csv", &lmp)?;
    eprintln!("wrote {}", dir.display());
    Ok(0)
}

fn plan_from(a: &SimulateArgs, loaded: &LoadedSystem) -> Result<ExperimentPlan> {
    let mut plan = ExperimentPlan::new(loaded.price_sigma.clone());
    plan.da_scenarios = a.da;
    plan.rt_per_da = a.rt;
    plan.seed = a.common.seed;
    plan.epsilon = loaded.system.config.epsilon;
    plan.sigma_scales = a.sigma_scale.clone();
    plan.withholding = a.withholding.clone();
    plan.toggles = a.toggles.iter().map(|t| Toggle::parse(t)).collect::<storage_bounds::Result<_>>()?;
    plan.validate(loaded.system.horizon())?;
    Ok(plan)
}

fn config_hash(config: &Path, plan: &ExperimentPlan) -> Result<String> {
    let text = std::fs::read_to_string(config).map_err(Error::Io)?;
    let doc = SystemDocument::from_json(&text)?;
    let dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
    let mu = std::fs::read(dir.join(&doc.netload.mu)).map_err(Error::Io)?;
    let sigma = std::fs::read(dir.join(&doc.netload.sigma)).map_err(Error::Io)?;
    let canonical = serde_json::to_vec(&doc)?;
    let plan = format!("{plan:?}");
    Ok(hash_parts(&[&canonical, &mu, &sigma, plan.as_bytes()]))
}

fn cell_name(d: usize, r: usize) -> String {
    format!("d{d:04}_r{r:04}.csv")
}

pub fn simulate(a: &SimulateArgs) -> Result<u8> {
    let started = now();
    let loaded = load(&a.common)?;
    let plan = plan_from(a, &loaded)?;
    let dir = out_dir(&a.common, "simulate");
    let cells_dir = dir.join("cells");
    std::fs::create_dir_all(&cells_dir).map_err(Error::Io)?;
    let hash = config_hash(&a.common.config, &plan)?;
    let manifest_path = dir.join("manifest.json");

    let mut done: BTreeSet<(usize, usize)> = BTreeSet::new();
    match RunManifest::read(&manifest_path) {
        Some(m) if m.config_hash == hash => {
            for c in m.cells_completed {
                if cells_dir.join(cell_name(c.0, c.1)).exists() {
                    done.insert(c);
                }
            }
            if !done.is_empty() {
                eprintln!("resuming: {} cells already complete", done.len());
            }
        }
        Some(_) => {
            eprintln!("configuration changed since the last run; starting over");
            std::fs::remove_dir_all(&cells_dir).map_err(Error::Io)?;
            std::fs::create_dir_all(&cells_dir).map_err(Error::Io)?;
        }
        None => {}
    }
    let all: Vec<(usize, usize)> = (0..plan.da_scenarios).flat_map(|d| (0..plan.rt_per_da).map(move |r| (d, r))).collect();
    let todo: Vec<(usize, usize)> = all.iter().copied().filter(|c| !done.contains(c)).collect();
    let mut manifest = RunManifest {
        config_path: a.common.config.display().to_string(),
        config_hash: hash,
        seed: plan.seed,
        started_unix: started,
        finished_unix: 0,
        out_dir: dir.display().to_string(),
        version: version(),
        cells_total: all.len(),
        cells_completed: done.iter().copied().collect(),
        failures: Vec::new(),
    };
    manifest.write(&manifest_path)?;

    let storages = loaded.system.storages.len();
    let counter = AtomicUsize::new(done.len());
    let total = all.len();
    let progress = |d: usize, r: usize, res: &std::result::Result<Vec<RunMetrics>, String>| {
        let n = counter.fetch_add(1, Ordering::SeqCst) + 1;
        match res {
            Ok(rows) => {
                let _ = std::fs::write(cells_dir.join(cell_name(d, r)), results_csv(rows, storages));
                eprintln!("[{n}/{total}] cell ({d}, {r}) done");
            }
            Err(msg) => eprintln!("[{n}/{total}] cell ({d}, {r}) failed: {msg}"),
        }
    };
    let out = run_cells(&loaded.system, &loaded.netload, &plan, &todo, a.workers, &progress)?;
    for (d, r) in out.rows.iter().map(|m| (m.da_id, m.rt_id)) {
        done.insert((d, r));
    }
    manifest.cells_completed = done.iter().copied().collect();
    manifest.failures = out
        .failures
        .iter()
        .map(|f| FailureRecord { da_id: f.da_id, rt_id: f.rt_id, message: f.message.clone() })
        .collect();

    let mut rows = Vec::new();
    for (d, r) in &done {
        let text = std::fs::read_to_string(cells_dir.join(cell_name(*d, *r))).map_err(Error::Io)?;
        rows.extend(parse_results_csv(&text)?);
    }
    rows.sort_by(|x, y| {
        (x.da_id, x.rt_id, x.sigma_scale.to_bits(), x.withholding.to_bits(), x.toggle).cmp(&(
            y.da_id,
            y.rt_id,
            y.sigma_scale.to_bits(),
            y.withholding.to_bits(),
            y.toggle,
        ))
    });
    write(&dir, "results.csv", &results_csv(&rows, storages))?;
    let (summary, notes) = summarize(&rows, Grouping::default());
    write(&dir, "summary.csv", &summary_csv(&summary))?;
    for n in notes {
        eprintln!("note: {n}");
    }
    manifest.finished_unix = now();
    manifest.write(&manifest_path)?;

    let completed = done.len();
    eprintln!("{completed}/{total} cells completed; outputs in {}", dir.display());
    if (completed as f64) < 0.9 * total as f64 {
        return Ok(5);
    }
    Ok(0)
}

pub fn policy(a: &PolicyArgs) -> Result<u8> {
    let loaded = load(&a.common)?;
    let sys = &loaded.system;
    let Some(storage) = sys.storages.get(a.storage) else {
        bail!(InvalidInput(format!("unknown storage id {} (system has {})", a.storage, sys.storages.len())));
    };
    if !(a.sigma_scale.is_finite() && a.sigma_scale >= 0.0) {
        bail!(InvalidInput(format!("sigma scale {} must be finite and >= 0", a.sigma_scale)));
    }
    let eps = sys.config.epsilon;
    let sol = solve_dispatch(&build_dispatch(sys, &loaded.netload, eps, 0, &History::default(), ComplementarityMode::Relaxed)?)?;
    let dap: Vec<f64> = (0..sol.window_len()).map(|w| sol.storage_lmp(a.storage, w)).collect();
    let sigma: Vec<f64> = loaded.price_sigma.iter().map(|s| s * a.sigma_scale).collect();
    let cfg = PriceModelConfig { seed: a.common.seed, ..PriceModelConfig::default() };
    let vf = train_policy(&dap, &sigma, storage, &cfg)?;

    let mut pol = String::from("t,price_bin,price,soc,c1,c2,c3,c4,case,p,b\n");
    for t in 0..vf.horizon() {
        for (j, price) in vf.prices.grids[t].iter().enumerate() {
            let curve = vf.curve(t, j);
            for e in &vf.soc_grid {
                let th = thresholds(&curve, *e, storage);
                let d = control_policy(&vf, t, PriceInput::State(j), *e, storage)?;
                let _ = writeln!(
                    pol,
                    "{t},{j},{},{},{},{},{},{},{},{},{}",
                    f6(*price),
                    f6(*e),
                    f6(th.c1),
                    f6(th.c2),
                    f6(th.c3),
                    f6(th.c4),
                    d.trigger_case.label(),
                    f6(d.p),
                    f6(d.b)
                );
            }
        }
    }
    let dir = out_dir(&a.common, "policy");
    write(&dir, "value_function.csv", &vf.to_csv())?;
    write(&dir, "policy.csv", &pol)?;
    let mut dap_csv = String::from("t,dap,sigma\n");
    for (t, (d, s)) in dap.iter().zip(&sigma).enumerate() {
        let _ = writeln!(dap_csv, "{t},{},{}", f6(*d), f6(*s));
    }
    write(&dir, "prices.csv", &dap_csv)?;
    eprintln!("wrote {}", dir.display());
    Ok(0)
}
