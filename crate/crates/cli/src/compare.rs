//! Configuration sweeps. Cells run concurrently; rows come out in grid
//! order (workload, factor count, config, control).

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use vsa_forge::isa::ControlMode;
use vsa_forge::sim::AccConfig;
use vsa_forge::workloads::{FactSizes, Sizes, Workload, WorkloadKind};

use crate::{config, io_err, CliError, DEFAULT_DIM, DEFAULT_SEED};

#[derive(Args)]
pub struct CompareArgs {
    /// Comma-separated workloads.
    #[arg(long, value_delimiter = ',', default_value = "fact")]
    workload: Vec<WorkloadKind>,
    /// Comma-separated configurations (presets or TOML paths).
    #[arg(long, value_delimiter = ',', default_value = "acc2,acc4,acc8")]
    config: Vec<String>,
    /// Comma-separated control modes.
    #[arg(long, value_delimiter = ',', default_value = "mopc")]
    control: Vec<ControlMode>,
    /// Comma-separated FACT factor counts (other FACT sizes stay default).
    #[arg(long, value_delimiter = ',')]
    factors: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    dim: usize,
    /// Baseline as CONFIG/CONTROL, CONFIG, or CONTROL; each row is compared
    /// with the baseline cell of the same workload and factor count.
    /// Defaults to the first config and first control.
    #[arg(long)]
    baseline: Option<String>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the rows as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Cells simulated at once (defaults to the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub workload: WorkloadKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factors: Option<usize>,
    pub config: String,
    pub control: ControlMode,
    pub cycles: usize,
    pub words: usize,
    pub energy_total: f64,
    pub energy_dynamic: f64,
    pub mean_power: f64,
    pub oracle_match: bool,
    pub speedup: f64,
    pub energy_ratio: f64,
    pub power_ratio: f64,
}

struct Cell {
    group: usize,
    workload: WorkloadKind,
    factors: Option<usize>,
    config: usize,
    control: ControlMode,
}

fn baseline_index(spec: Option<&str>, configs: &[String], controls: &[ControlMode]) -> Result<(usize, ControlMode), CliError> {
    let Some(spec) = spec else { return Ok((0, controls[0])) };
    let find_cfg = |s: &str| configs.iter().position(|c| c == s);
    let find_ctl = |s: &str| s.parse::<ControlMode>().ok().filter(|m| controls.contains(m));
    let found = match spec.split_once('/') {
        Some((c, m)) => find_cfg(c).zip(find_ctl(m)),
        None => match (find_cfg(spec), find_ctl(spec)) {
            (Some(c), _) => Some((c, controls[0])),
            (None, Some(m)) => Some((0, m)),
            (None, None) => None,
        },
    };
    found.ok_or_else(|| CliError::Usage(format!("baseline `{spec}` is not a cell of the grid")))
}

pub fn sweep(args: &CompareArgs) -> Result<Vec<Row>, CliError> {
    if args.workload.is_empty() || args.config.is_empty() || args.control.is_empty() {
        return Err(CliError::Usage("empty comparison grid".into()));
    }
    let cfgs = args.config.iter().map(|c| config::apply(config::resolve(c)?, None, None)).collect::<Result<Vec<AccConfig>, _>>()?;
    let (base_cfg, base_ctl) = baseline_index(args.baseline.as_deref(), &args.config, &args.control)?;

    let mut groups: Vec<(WorkloadKind, Option<usize>)> = Vec::new();
    for &w in &args.workload {
        if w == WorkloadKind::Fact && !args.factors.is_empty() {
            groups.extend(args.factors.iter().map(|&f| (w, Some(f))));
        } else {
            groups.push((w, None));
        }
    }
    let mut cells = Vec::new();
    for (g, &(workload, factors)) in groups.iter().enumerate() {
        for config in 0..cfgs.len() {
            for &control in &args.control {
                cells.push(Cell { group: g, workload, factors, config, control });
            }
        }
    }
    if cells.len() < 2 {
        return Err(CliError::Usage(format!("a comparison needs at least 2 cells, the grid has {}", cells.len())));
    }

    // Data depends on the group and fold width only; generate it once.
    let mut data: BTreeMap<(usize, usize), Workload> = BTreeMap::new();
    for c in &cells {
        let w = cfgs[c.config].fold_width;
        if let std::collections::btree_map::Entry::Vacant(e) = data.entry((c.group, w)) {
            let sizes = match c.factors {
                Some(f) => Sizes::Fact(FactSizes { factors: f, ..FactSizes::default() }),
                None => Sizes::default_for(c.workload),
            };
            e.insert(Workload::with_sizes(sizes, args.seed, args.dim, w)?);
        }
    }

    let run = || {
        cells
            .par_iter()
            .map(|c| {
                let cfg = &cfgs[c.config];
                let w = &data[&(c.group, cfg.fold_width)];
                w.run(cfg, c.control)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let outcomes = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(run),
        None => run(),
    }?;

    let base: BTreeMap<usize, usize> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.config == base_cfg && c.control == base_ctl)
        .map(|(i, c)| (c.group, i))
        .collect();
    Ok(cells
        .iter()
        .zip(&outcomes)
        .map(|(c, o)| {
            let b = &outcomes[base[&c.group]].report;
            let r = &o.report;
            Row {
                workload: c.workload,
                factors: c.factors,
                config: cfgs[c.config].name.clone(),
                control: c.control,
                cycles: r.total_cycles,
                words: r.words_executed,
                energy_total: r.energy_total,
                energy_dynamic: r.energy_dynamic,
                mean_power: r.mean_power,
                oracle_match: o.oracle_match,
                speedup: b.total_cycles as f64 / r.total_cycles as f64,
                energy_ratio: r.energy_total / b.energy_total,
                power_ratio: r.mean_power / b.mean_power,
            }
        })
        .collect())
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::from(
        "workload,factors,config,control,cycles,words,energy_total,energy_dynamic,mean_power,oracle_match,speedup,energy_ratio,power_ratio\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.3},{:.3},{:.6},{},{:.6},{:.6},{:.6}\n",
            r.workload,
            r.factors.map_or(String::new(), |f| f.to_string()),
            r.config,
            r.control,
            r.cycles,
            r.words,
            r.energy_total,
            r.energy_dynamic,
            r.mean_power,
            r.oracle_match,
            r.speedup,
            r.energy_ratio,
            r.power_ratio
        ));
    }
    out
}

pub fn cmd_compare(args: CompareArgs) -> Result<bool, CliError> {
    let rows = sweep(&args)?;
    let csv = to_csv(&rows);
    match &args.csv {
        Some(path) => std::fs::write(path, &csv).map_err(io_err(path))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
        std::fs::write(path, json).map_err(io_err(path))?;
    }
    let ok = rows.iter().all(|r| r.oracle_match);
    if !ok {
        eprintln!("error: some cells differ from the oracle");
    }
    Ok(ok)
}
