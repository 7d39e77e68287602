//! Command orchestration: single runs, log analysis and parameter sweeps.
//!
//! Each command builds all of its artifacts in memory and then commits them
//! with [`Artifacts::commit`], so a failing run leaves no partial outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytic::{cutoff, free_running_report, original_optimal_rate};
use crate::config::{RunMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::keyrate::{analyze_tallies, baseline_original_rfi, KeyRateReport};
use crate::log::{cell_columns, cell_fields, interval_table, parse_log, Table};
use crate::sim::simulate_intervals;
use crate::slicer::SlicingResult;
use crate::tally::IntervalTally;

pub const INTERVAL_LOG_FILE: &str = "intervals.csv";
pub const SLICE_FILE: &str = "slices.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SWEEP_LOSS_FILE: &str = "sweep_loss.csv";
pub const CUTOFF_FILE: &str = "cutoffs.csv";
pub const SWEEP_THETA_FILE: &str = "sweep_theta.csv";

/// Named file contents awaiting a write.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_owned(), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }

    /// Writes every file to a temporary name, then renames them all into
    /// place. On failure the temporaries are removed.
    pub fn commit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| Error::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut staged = Vec::new();
        let result = (|| {
            for (name, contents) in &self.files {
                let tmp = dir.join(format!(".{name}.tmp"));
                staged.push(tmp.clone());
                fs::write(&tmp, contents).map_err(io(&tmp))?;
            }
            let mut out = Vec::new();
            for (name, _) in &self.files {
                let tmp = dir.join(format!(".{name}.tmp"));
                let dest = dir.join(name);
                fs::rename(&tmp, &dest).map_err(io(&dest))?;
                out.push(dest);
            }
            Ok(out)
        })();
        if result.is_err() {
            for tmp in &staged {
                let _ = fs::remove_file(tmp);
            }
        }
        result
    }
}

/// Seed of grid point `index`, derived from the master seed.
pub fn point_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

fn slice_table(slicing: &SlicingResult) -> Table {
    let mut header = vec![
        "slice_index".to_owned(),
        "representative_angle_rad".to_owned(),
        "n_intervals".to_owned(),
    ];
    header.extend(cell_columns());
    let mut t = Table::new("slice-summary", header);
    for s in &slicing.slices {
        let mut row = vec![
            s.index.to_string(),
            s.representative_angle.to_string(),
            s.n_intervals.to_string(),
        ];
        row.extend(cell_fields(&s.cells));
        t.push(row);
    }
    t
}

/// Outcome of the post-processing chain on one dataset.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub slicing: SlicingResult,
    pub report: KeyRateReport,
    /// The same data processed as a single block.
    pub unsliced: KeyRateReport,
}

pub fn analyze(
    tallies: &[IntervalTally],
    cfg: &ScenarioConfig,
    exec: Execution,
) -> Result<Analysis> {
    let (slicing, report) =
        analyze_tallies(tallies, &cfg.system, &cfg.security, &cfg.slicing, exec)?;
    let unsliced = baseline_original_rfi(tallies, &cfg.system, &cfg.security, false)?;
    Ok(Analysis {
        slicing,
        report,
        unsliced,
    })
}

fn analysis_artifacts(a: &Analysis, out: &mut Artifacts) {
    out.add(SLICE_FILE, slice_table(&a.slicing).render());
    out.add(REPORT_FILE, a.report.table().render());
    let mut summary = a.report.summary();
    summary.push_str(&format!(
        "unsliced_key_bits {}\nunsliced_c_value  {}\n",
        a.unsliced.total_key_bits,
        a.unsliced.slices[0]
            .c
            .map(|c| c.raw.to_string())
            .unwrap_or_else(|| "undefined".to_owned())
    ));
    out.add(SUMMARY_FILE, summary);
}

pub fn simulate(
    cfg: &ScenarioConfig,
    exec: Execution,
) -> Result<(Vec<IntervalTally>, Analysis, Artifacts)> {
    cfg.validate()?;
    let tallies = simulate_intervals(
        &cfg.system,
        &cfg.drift,
        cfg.duration_s,
        cfg.seed,
        cfg.sampling,
        exec,
    )?;
    let analysis = analyze(&tallies, cfg, exec)?;
    let mut out = Artifacts::default();
    out.add(INTERVAL_LOG_FILE, interval_table(&tallies).render());
    analysis_artifacts(&analysis, &mut out);
    Ok((tallies, analysis, out))
}

pub fn analyze_log(
    log: &Path,
    cfg: &ScenarioConfig,
    exec: Execution,
) -> Result<(Analysis, Artifacts)> {
    cfg.validate()?;
    let text = fs::read_to_string(log).map_err(|source| Error::Io {
        path: log.to_path_buf(),
        source,
    })?;
    let tallies = parse_log(&text, log)?;
    if tallies.is_empty() {
        return Err(Error::Format {
            path: log.to_path_buf(),
            line: 2,
            reason: "log holds no intervals".to_owned(),
        });
    }
    let analysis = analyze(&tallies, cfg, exec)?;
    let mut out = Artifacts::default();
    analysis_artifacts(&analysis, &mut out);
    Ok((analysis, out))
}

pub const FREE_RUNNING: &str = "free-running";
pub const ORIGINAL_OPTIMAL: &str = "original-optimal";
pub const ORIGINAL_UNSLICED: &str = "original-unsliced";

#[derive(Clone, Debug, PartialEq)]
pub struct LossPoint {
    pub loss_db: f64,
    pub n_total: f64,
    pub m: usize,
    pub scheme: &'static str,
    pub rate_bps: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cutoff {
    pub n_total: f64,
    pub m: usize,
    pub scheme: &'static str,
    pub loss_db: Option<f64>,
}

/// Key rate against total loss for each `(N_t, m)` of the sweep, plus the
/// baseline. Rows are ordered by `(N_t, m, scheme, loss)`.
pub fn sweep_loss(
    cfg: &ScenarioConfig,
    exec: Execution,
) -> Result<(Vec<LossPoint>, Vec<Cutoff>, Artifacts)> {
    cfg.validate()?;
    let losses = cfg.sweep.loss_db.values();
    let mut combos = Vec::new();
    for &n_total in &cfg.sweep.n_total {
        for &m in &cfg.sweep.m {
            combos.push((n_total, m));
        }
    }
    // validate every loss setting up front
    let systems = losses
        .iter()
        .map(|&l| cfg.system.with_total_loss(l))
        .collect::<Result<Vec<_>>>()?;

    let n_points = combos.len() * losses.len();
    let points = exec
        .map_range(n_points, |idx| {
            let (n_total, m) = combos[idx / losses.len()];
            let li = idx % losses.len();
            let system = crate::channel::SystemParams {
                n_total,
                m_slices: m,
                ..systems[li].clone()
            };
            match cfg.mode {
                RunMode::Analytic => {
                    let fr = free_running_report(&system, &cfg.security, Execution::Sequential)?
                        .average_rate_bps;
                    let orig = original_optimal_rate(&system, &cfg.security)?;
                    Ok([(FREE_RUNNING, fr), (ORIGINAL_OPTIMAL, orig)])
                }
                RunMode::Montecarlo => {
                    let tallies = simulate_intervals(
                        &system,
                        &cfg.drift,
                        cfg.duration_s,
                        point_seed(cfg.seed, idx as u64),
                        cfg.sampling,
                        Execution::Sequential,
                    )?;
                    let (_, report) = analyze_tallies(
                        &tallies,
                        &system,
                        &cfg.security,
                        &cfg.slicing,
                        Execution::Sequential,
                    )?;
                    let unsliced = baseline_original_rfi(&tallies, &system, &cfg.security, false)?;
                    Ok([
                        (FREE_RUNNING, report.average_rate_bps),
                        (ORIGINAL_UNSLICED, unsliced.average_rate_bps),
                    ])
                }
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut cutoffs = Vec::new();
    for (ci, &(n_total, m)) in combos.iter().enumerate() {
        for scheme in 0..2 {
            let block = &points[ci * losses.len()..(ci + 1) * losses.len()];
            let rates: Vec<f64> = block.iter().map(|p| p[scheme].1).collect();
            let name = block[0][scheme].0;
            for (l, r) in losses.iter().zip(&rates) {
                rows.push(LossPoint {
                    loss_db: *l,
                    n_total,
                    m,
                    scheme: name,
                    rate_bps: *r,
                });
            }
            cutoffs.push(Cutoff {
                n_total,
                m,
                scheme: name,
                loss_db: cutoff(&losses, &rates),
            });
        }
    }

    let mut table = Table::new(
        "sweep-loss",
        ["loss_db", "n_total", "m", "scheme", "rate_bps"]
            .map(str::to_owned)
            .to_vec(),
    );
    for r in &rows {
        table.push(vec![
            r.loss_db.to_string(),
            r.n_total.to_string(),
            r.m.to_string(),
            r.scheme.to_owned(),
            r.rate_bps.to_string(),
        ]);
    }
    let mut cut = Table::new(
        "cutoffs",
        ["n_total", "m", "scheme", "cutoff_loss_db"]
            .map(str::to_owned)
            .to_vec(),
    );
    for c in &cutoffs {
        cut.push(vec![
            c.n_total.to_string(),
            c.m.to_string(),
            c.scheme.to_owned(),
            c.loss_db.map(|l| l.to_string()).unwrap_or_default(),
        ]);
    }
    let mut out = Artifacts::default();
    out.add(SWEEP_LOSS_FILE, table.render());
    out.add(CUTOFF_FILE, cut.render());
    Ok((rows, cutoffs, out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaRow {
    pub index: usize,
    pub angle: f64,
    pub c_analytic: Option<f64>,
    pub rate_analytic_bps: f64,
    pub c_simulated: Option<f64>,
    pub rate_simulated_bps: Option<f64>,
}

/// Per-slice C and key rate for the configured `m`; simulated columns are
/// filled in Monte Carlo mode.
pub fn sweep_theta(cfg: &ScenarioConfig, exec: Execution) -> Result<(Vec<ThetaRow>, Artifacts)> {
    cfg.validate()?;
    let analytic = free_running_report(&cfg.system, &cfg.security, exec)?;
    let simulated = match cfg.mode {
        RunMode::Analytic => None,
        RunMode::Montecarlo => Some(simulate(cfg, exec)?.1.report),
    };
    let rows: Vec<ThetaRow> = analytic
        .slices
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sim = simulated.as_ref().map(|r| &r.slices[i]);
            ThetaRow {
                index: s.index,
                angle: s.representative_angle,
                c_analytic: s.c.map(|c| c.raw),
                rate_analytic_bps: s.key_rate_bps,
                c_simulated: sim.and_then(|s| s.c.map(|c| c.raw)),
                rate_simulated_bps: sim.map(|s| s.key_rate_bps),
            }
        })
        .collect();

    let mut header: Vec<String> = [
        "slice_index",
        "representative_angle_rad",
        "c_analytic",
        "rate_analytic_bps",
    ]
    .map(str::to_owned)
    .to_vec();
    if simulated.is_some() {
        header.extend(["c_simulated", "rate_simulated_bps"].map(str::to_owned));
    }
    let mut table = Table::new("sweep-theta", header);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        let mut row = vec![
            r.index.to_string(),
            r.angle.to_string(),
            opt(r.c_analytic),
            r.rate_analytic_bps.to_string(),
        ];
        if simulated.is_some() {
            row.extend([opt(r.c_simulated), opt(r.rate_simulated_bps)]);
        }
        table.push(row);
    }
    let mut out = Artifacts::default();
    out.add(SWEEP_THETA_FILE, table.render());
    Ok((rows, out))
}
