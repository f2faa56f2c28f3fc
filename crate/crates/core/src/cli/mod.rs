//! Command-line front end: data loading, chain execution and result files.
//!
//! A run writes, into the output directory,
//!
//! * `labels.csv`: `row,region` for the selected tessellation,
//! * `density_region_<i>.csv`: `y,mean,lower,upper` on the original scale,
//! * `trace.jsonl`: one post burn-in sample per line,
//! * `summary.json`: the selected partition, acceptance rates and a config echo.
//!
//! With `--chains k` each chain writes these into `chain_<i>/` and the
//! top-level `summary.json` compares the chains' distributions of `M`.

mod ingest;
mod simulate;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lgp::FitCache;
use crate::mcmc::{run_chain_with_cache, select_best, Chain, Criterion, InitialCenter, McmcConfig, MoveType};
use crate::posterior::{partition_summary, summarize_density, DensityEstimate, PartitionSummary};

pub use ingest::{ingest_csv, ColumnRef, Ingested};
pub use simulate::{series_changepoints, simulate, simulate_raw, Scenario, Simulated};

/// Where the data come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Csv {
        path: PathBuf,
        y: ColumnRef,
        x: Vec<ColumnRef>,
    },
    Simulated {
        scenario: Scenario,
        n: usize,
    },
}

/// Which files a run writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Emit {
    pub labels: bool,
    pub densities: bool,
    pub trace: bool,
    pub summary: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit {
            labels: true,
            densities: true,
            trace: true,
            summary: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub source: Source,
    pub mcmc: McmcConfig,
    pub out: PathBuf,
    pub criterion: Criterion,
    pub level: f64,
    pub n_draws: usize,
    pub chains: usize,
    pub emit: Emit,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.mcmc.validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::arg(format!("credible level must lie in (0, 1), got {}", self.level)));
        }
        if self.n_draws == 0 {
            return Err(Error::arg("need at least one density draw"));
        }
        if self.chains == 0 {
            return Err(Error::arg("need at least one chain"));
        }
        Ok(())
    }
}

/// Loaded data plus labels for the output files.
pub struct Loaded {
    pub data: Dataset,
    pub y_name: String,
    pub x_names: Vec<String>,
    pub dropped: usize,
    /// Source row of each observation.
    pub rows: Vec<usize>,
}

pub fn load(source: &Source, seed: u64) -> Result<Loaded> {
    match source {
        Source::Csv { path, y, x } => {
            let ing = ingest_csv(path, y, x)?;
            Ok(Loaded {
                data: ing.data,
                y_name: ing.y_name,
                x_names: ing.x_names,
                dropped: ing.dropped,
                rows: ing.kept_rows,
            })
        }
        Source::Simulated { scenario, n } => {
            let sim = simulate_raw(*scenario, *n, seed)?;
            Ok(Loaded {
                data: sim.dataset()?,
                y_name: "y".into(),
                x_names: sim.names,
                dropped: 0,
                rows: (0..*n).collect(),
            })
        }
    }
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    iter: usize,
    #[serde(rename = "move")]
    move_type: MoveType,
    accepted: bool,
    #[serde(rename = "M")]
    m: usize,
    centers: &'a [usize],
    w: &'a [f64],
    logml: f64,
}

#[derive(Serialize)]
struct MoveSummary {
    proposed: usize,
    accepted: usize,
    rejected_small_region: usize,
    infeasible: usize,
    rate: f64,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    input: Option<String>,
    scenario: Option<Scenario>,
    n_requested: Option<usize>,
    mcmc: &'a McmcConfig,
    criterion: Criterion,
    level: f64,
    n_draws: usize,
    chains: usize,
    emit: Emit,
}

#[derive(Serialize)]
struct ChainSummary<'a> {
    seed: u64,
    n: usize,
    p: usize,
    y_column: &'a str,
    x_columns: &'a [String],
    dropped_rows: usize,
    criterion: Criterion,
    selected_sample: usize,
    selected_iter: usize,
    log_marginal_total: f64,
    partition: &'a PartitionSummary,
    /// `m_distribution[k]` is the posterior frequency of `M = k`.
    m_distribution: Vec<f64>,
    acceptance: BTreeMap<&'static str, MoveSummary>,
    density_mass: Vec<f64>,
    config: ConfigEcho<'a>,
}

#[derive(Serialize)]
struct MultiSummary<'a> {
    chains: usize,
    seeds: Vec<u64>,
    selected_m: Vec<usize>,
    /// Row `i` is chain `i`'s distribution of `M`.
    m_distribution: Vec<Vec<f64>>,
    /// Largest absolute difference between any two chains' frequencies of any `M`.
    max_m_frequency_gap: f64,
    config: ConfigEcho<'a>,
}

/// Outcome of one chain as written to disk.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub dir: PathBuf,
    pub chain: Chain,
    pub partition: PartitionSummary,
    pub densities: Vec<DensityEstimate>,
    pub labels: Vec<usize>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn echo(cfg: &RunConfig) -> ConfigEcho<'_> {
    let (input, scenario, n_requested) = match &cfg.source {
        Source::Csv { path, .. } => (Some(path.display().to_string()), None, None),
        Source::Simulated { scenario, n } => (None, Some(*scenario), Some(*n)),
    };
    ConfigEcho {
        input,
        scenario,
        n_requested,
        mcmc: &cfg.mcmc,
        criterion: cfg.criterion,
        level: cfg.level,
        n_draws: cfg.n_draws,
        chains: cfg.chains,
        emit: cfg.emit,
    }
}

fn density_seed(seed: u64, region: usize) -> u64 {
    seed ^ (region as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn write_chain(
    dir: &Path,
    cfg: &RunConfig,
    mcmc: &McmcConfig,
    loaded: &Loaded,
    chain: Chain,
) -> Result<ChainOutput> {
    fs::create_dir_all(dir)?;
    let data = &loaded.data;
    let sel = select_best(&chain, data, &mcmc.fit_settings(), cfg.criterion)?;
    let partition = partition_summary(&sel, data)?;
    let densities = sel
        .fits
        .iter()
        .enumerate()
        .map(|(i, fit)| summarize_density(fit, i, cfg.level, cfg.n_draws, density_seed(mcmc.seed, i), data.y_scale()))
        .collect::<Result<Vec<_>>>()?;

    if cfg.emit.labels {
        let mut w = create(&dir.join("labels.csv"))?;
        writeln!(w, "row,region")?;
        for (i, l) in sel.assignment.labels.iter().enumerate() {
            writeln!(w, "{},{l}", loaded.rows[i])?;
        }
        w.flush()?;
    }
    if cfg.emit.densities {
        for est in &densities {
            let mut w = create(&dir.join(format!("density_region_{}.csv", est.region)))?;
            writeln!(w, "y,mean,lower,upper")?;
            for j in 0..est.y.len() {
                writeln!(w, "{},{},{},{}", est.y[j], est.mean[j], est.lower[j], est.upper[j])?;
            }
            w.flush()?;
        }
    }
    if cfg.emit.trace {
        let mut w = create(&dir.join("trace.jsonl"))?;
        for s in &chain.samples {
            let rec = TraceRecord {
                iter: s.iter,
                move_type: s.move_type,
                accepted: s.accepted,
                m: s.tess.m(),
                centers: s.tess.centers(),
                w: s.tess.weights(),
                logml: s.log_marginal_total,
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    if cfg.emit.summary {
        let acceptance = MoveType::ALL
            .into_iter()
            .map(|mv| {
                let s = chain.moves[mv as usize];
                (
                    mv.name(),
                    MoveSummary {
                        proposed: s.proposed,
                        accepted: s.accepted,
                        rejected_small_region: s.too_small,
                        infeasible: s.infeasible,
                        rate: s.rate(),
                    },
                )
            })
            .collect();
        let summary = ChainSummary {
            seed: mcmc.seed,
            n: data.n(),
            p: data.p(),
            y_column: &loaded.y_name,
            x_columns: &loaded.x_names,
            dropped_rows: loaded.dropped,
            criterion: cfg.criterion,
            selected_sample: sel.sample,
            selected_iter: chain.samples[sel.sample].iter,
            log_marginal_total: chain.samples[sel.sample].log_marginal_total,
            partition: &partition,
            m_distribution: chain.m_distribution(mcmc.m_max),
            acceptance,
            density_mass: densities.iter().map(DensityEstimate::mass).collect(),
            config: echo(cfg),
        };
        let mut w = create(&dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut w, &summary)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(ChainOutput {
        dir: dir.to_path_buf(),
        chain,
        partition,
        densities,
        labels: sel.assignment.labels,
    })
}

/// Loads the data, runs the chain(s) and writes all result files.
pub fn run(cfg: &RunConfig) -> Result<Vec<ChainOutput>> {
    cfg.validate()?;
    let loaded = load(&cfg.source, cfg.mcmc.seed)?;
    if let InitialCenter::Index(i) = cfg.mcmc.initial_center {
        if i >= loaded.data.n() {
            return Err(Error::arg(format!("initial center {i} out of range for n={}", loaded.data.n())));
        }
    }
    fs::create_dir_all(&cfg.out)?;
    let cache = FitCache::new();
    let cache = cfg.mcmc.cache.then_some(&cache);
    if cfg.chains == 1 {
        let chain = run_chain_with_cache(&loaded.data, &cfg.mcmc, cache)?;
        return Ok(vec![write_chain(&cfg.out, cfg, &cfg.mcmc, &loaded, chain)?]);
    }

    let configs: Vec<McmcConfig> = (0..cfg.chains)
        .map(|i| McmcConfig {
            seed: cfg.mcmc.seed.wrapping_add(i as u64),
            ..cfg.mcmc.clone()
        })
        .collect();
    let chains: Vec<Result<Chain>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| s.spawn(|| run_chain_with_cache(&loaded.data, c, cache)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidState("chain thread panicked".into()))))
            .collect()
    });
    let mut outputs = Vec::with_capacity(cfg.chains);
    for (i, (chain, c)) in chains.into_iter().zip(&configs).enumerate() {
        outputs.push(write_chain(&cfg.out.join(format!("chain_{i}")), cfg, c, &loaded, chain?)?);
    }
    if cfg.emit.summary {
        let dists: Vec<Vec<f64>> = outputs.iter().map(|o| o.chain.m_distribution(cfg.mcmc.m_max)).collect();
        let mut gap: f64 = 0.0;
        for a in &dists {
            for b in &dists {
                for (x, y) in a.iter().zip(b) {
                    gap = gap.max((x - y).abs());
                }
            }
        }
        let summary = MultiSummary {
            chains: cfg.chains,
            seeds: configs.iter().map(|c| c.seed).collect(),
            selected_m: outputs.iter().map(|o| o.partition.m).collect(),
            m_distribution: dists,
            max_m_frequency_gap: gap,
            config: echo(cfg),
        };
        let mut w = create(&cfg.out.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut w, &summary)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(outputs)
}

/// Command-line arguments.
#[derive(Parser, Debug, Clone)]
#[command(name = "pcde", version, about = "Conditional density estimation over a learned Voronoi partition")]
pub struct Args {
    /// Input CSV with a header row.
    #[arg(long, conflicts_with = "scenario")]
    pub input: Option<PathBuf>,
    /// Response column (name or zero-based index).
    #[arg(long, default_value = "y")]
    pub y: String,
    /// Covariate columns, comma separated; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,
    /// Simulate data instead of reading a file.
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<Scenario>,
    /// Sample size for --scenario.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burnin: usize,
    #[arg(long, default_value_t = 10)]
    pub mmax: usize,
    /// Dirichlet weight-proposal concentration.
    #[arg(long, default_value_t = 100.0)]
    pub d: f64,
    /// Grid bins per region.
    #[arg(long, default_value_t = 100)]
    pub r: usize,
    /// Support padding as a fraction of the response range.
    #[arg(long, default_value_t = 0.1)]
    pub pad: f64,
    #[arg(long = "min-region", default_value_t = 10)]
    pub min_region: usize,
    #[arg(long, env = "CDE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = ["marginal", "posterior"], default_value = "marginal")]
    pub criterion: String,
    /// Credible level of the density bands.
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    /// Density draws per region.
    #[arg(long, default_value_t = 4000)]
    pub draws: usize,
    #[arg(long, default_value = "pcde_out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Files to write, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "labels,densities,trace,summary")]
    pub emit: Vec<String>,
    /// Refit every region from scratch instead of memoizing fits.
    #[arg(long)]
    pub no_cache: bool,
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Args {
    pub fn into_config(self) -> Result<RunConfig> {
        let source = match (self.input, self.scenario) {
            (Some(path), None) => Source::Csv {
                path,
                y: ColumnRef::from(self.y.as_str()),
                x: self.x.iter().map(|s| ColumnRef::from(s.as_str())).collect(),
            },
            (None, Some(scenario)) => Source::Simulated { scenario, n: self.n },
            _ => return Err(Error::arg("give exactly one of --input or --scenario")),
        };
        let mut emit = Emit {
            labels: false,
            densities: false,
            trace: false,
            summary: false,
        };
        for e in &self.emit {
            match e.trim() {
                "labels" => emit.labels = true,
                "densities" => emit.densities = true,
                "trace" => emit.trace = true,
                "summary" => emit.summary = true,
                other => return Err(Error::arg(format!("unknown output kind '{other}'"))),
            }
        }
        let cfg = RunConfig {
            source,
            mcmc: McmcConfig {
                n_iters: self.iters,
                burn_in: self.burnin,
                m_max: self.mmax,
                d: self.d,
                min_region_size: self.min_region,
                r: self.r,
                pad_frac: self.pad,
                seed: self.seed,
                cache: !self.no_cache,
                ..McmcConfig::default()
            },
            out: self.out,
            criterion: if self.criterion == "posterior" {
                Criterion::Posterior
            } else {
                Criterion::Marginal
            },
            level: self.level,
            n_draws: self.draws,
            chains: self.chains,
            emit,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        Args::try_parse_from(std::iter::once("pcde").chain(args.iter().copied()))
            .map_err(|e| Error::arg(e.to_string()))?
            .into_config()
    }

    #[test]
    fn defaults() {
        let cfg = parse(&["--scenario", "piecewise"]).unwrap();
        assert_eq!(cfg.mcmc.n_iters, 10_000);
        assert_eq!(cfg.mcmc.burn_in, 1_000);
        assert_eq!(cfg.mcmc.m_max, 10);
        assert_eq!(cfg.mcmc.r, 100);
        assert_eq!(cfg.n_draws, 4000);
        assert_eq!(cfg.emit, Emit::default());
        assert_eq!(
            cfg.source,
            Source::Simulated {
                scenario: Scenario::Piecewise,
                n: 1000
            }
        );
    }

    #[test]
    fn flags_map_to_config() {
        let cfg = parse(&[
            "--input", "d.csv", "--y", "temp", "--x", "a,b", "--iters", "50", "--burnin", "5", "--mmax", "4", "--d",
            "20", "--r", "30", "--pad", "0.2", "--min-region", "3", "--seed", "7", "--criterion", "posterior",
            "--level", "0.8", "--draws", "10", "--out", "o", "--chains", "2", "--emit", "trace,summary",
        ])
        .unwrap();
        assert_eq!(cfg.mcmc.seed, 7);
        assert_eq!(cfg.mcmc.min_region_size, 3);
        assert_eq!(cfg.criterion, Criterion::Posterior);
        assert!(!cfg.emit.labels && cfg.emit.trace);
        match cfg.source {
            Source::Csv { y, x, .. } => {
                assert_eq!(y, ColumnRef::Name("temp".into()));
                assert_eq!(x.len(), 2);
            }
            _ => panic!("expected csv source"),
        }
    }

    #[test]
    fn config_errors() {
        assert!(parse(&[]).is_err());
        assert!(parse(&["--scenario", "piecewise", "--burnin", "20000"]).is_err());
        assert!(parse(&["--scenario", "piecewise", "--level", "1.5"]).is_err());
        assert!(parse(&["--scenario", "bogus"]).is_err());
        assert!(parse(&["--scenario", "piecewise", "--emit", "plots"]).is_err());
        let e = parse(&["--scenario", "piecewise", "--mmax", "1"]).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
