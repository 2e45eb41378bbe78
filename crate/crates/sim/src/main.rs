use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpsl_core::train::TrainScheme;
use cpsl_sim::config::{self, Loaded, ProfileMode};
use cpsl_sim::experiments::{self as ex, Baseline};
use cpsl_sim::report::{OutDir, Stamp};
use cpsl_sim::{SimError, SimResult};

#[derive(Parser, Debug)]
#[command(name = "cpsl-sim", version, about = "Cluster-based parallel split learning simulator")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    #[arg(long, global = true, conflicts_with_all = ["default", "preset"])]
    config: Option<PathBuf>,
    /// Use the bundled homogeneous reference scenario (the default).
    #[arg(long, global = true)]
    default: bool,
    /// Bundled scenario: homogeneous or heterogeneous.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-cut sizes and workloads.
    Profile {
        /// Only this cut.
        #[arg(long)]
        cut: Option<usize>,
        /// Ignore the model's overrides.
        #[arg(long)]
        computed: bool,
    },
    /// Per-round latency of CPSL, vanilla SL and FL.
    Latency {
        /// Also run sample-average cut selection.
        #[arg(long)]
        sweep_cut: bool,
        #[arg(long)]
        cut: Option<usize>,
        /// Number of devices.
        #[arg(long)]
        devices: Option<usize>,
        /// Number of clusters (devices are split as evenly as capacity allows).
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Gibbs-sampling clustering and subcarrier allocation.
    Optimize {
        /// Compare against a benchmark over several seeds.
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Also solve the instance exhaustively.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        cut: Option<usize>,
    },
    /// Run the learning protocol on the synthetic task.
    Train {
        /// Comma-separated subset of CL,SL,CPSL,FL.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<String>>,
        #[arg(long)]
        rounds: Option<usize>,
        /// Cut of the toy network.
        #[arg(long)]
        cut: Option<usize>,
    },
    /// Proposed clustering vs. benchmarks across bandwidths.
    Sweep {
        /// Subcarrier counts to evaluate.
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60")]
        subcarriers: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
}

fn load(common: &Common) -> SimResult<Loaded> {
    let loaded = match (&common.config, &common.preset) {
        (Some(path), _) => config::load_file(path)?,
        (None, Some(name)) => config::preset(name)?,
        (None, None) => config::preset("default")?,
    };
    match common.seed {
        Some(seed) => loaded.with(|s| s.seed = seed),
        None => Ok(loaded),
    }
}

fn out_dir(common: &Common, loaded: &Loaded) -> SimResult<OutDir> {
    OutDir::new(&common.out, Stamp { scenario_hash: loaded.hash.clone(), seed: loaded.seed() })
}

fn parse_train_scheme(s: &str) -> SimResult<TrainScheme> {
    match s.trim().to_ascii_uppercase().as_str() {
        "CL" => Ok(TrainScheme::Cl),
        "SL" => Ok(TrainScheme::Sl),
        "CPSL" => Ok(TrainScheme::Cpsl),
        "FL" => Ok(TrainScheme::Fl),
        other => Err(SimError::Config(format!("unknown scheme {other:?}"))),
    }
}

fn run(cli: Cli) -> SimResult<()> {
    if let Some(jobs) = cli.common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| SimError::Pool(e.to_string()))?;
    }
    let loaded = load(&cli.common)?;
    match cli.command {
        Command::Profile { cut, computed } => {
            let mode = if computed { ProfileMode::Computed } else { loaded.scenario.profiles };
            let mut rows = ex::profile_table(&loaded, mode)?;
            if let Some(v) = cut {
                rows.retain(|r| r.cut == v);
                if rows.is_empty() {
                    return Err(SimError::Core(cpsl_core::Error::Domain(format!("no cut {v}"))));
                }
            }
            let out = out_dir(&cli.common, &loaded)?;
            let path = out.csv("profile.csv", &rows)?;
            for r in &rows {
                println!(
                    "{:>3} {:<6} xi_d={:>12.0} xi_s={:>9.0} xi_g={:>10.0} gamma_d={:>11.0} gamma_s={:>11.0} [{}]",
                    r.cut, r.layer, r.xi_d_bits, r.xi_s_bits, r.xi_g_bits, r.gamma_d_f, r.gamma_s_f, r.source
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Latency { sweep_cut, cut, devices, clusters } => {
            let loaded = loaded.with(|s| {
                if let Some(v) = cut {
                    s.cut = v;
                }
                if let Some(n) = devices {
                    s.env.n_devices = n;
                    s.trainer.config.n_devices = n;
                }
                let n = s.env.n_devices;
                if let Some(m) = clusters {
                    s.env.cluster_capacity = n.div_ceil(m.max(1));
                } else if devices.is_some() {
                    s.env.cluster_capacity = s.env.cluster_capacity.min(n);
                }
                s.trainer.config.cluster_capacity = s.env.cluster_capacity.min(s.trainer.config.n_devices);
            })?;
            let out = out_dir(&cli.common, &loaded)?;
            let report = ex::evaluate_latency(&loaded)?;
            let summary = ex::latency_summary(&loaded, &report);
            out.csv("latency_components.csv", &ex::component_rows(&report))?;
            out.json("latency_summary.json", &summary)?;
            println!("scenario {} seed {} cut {} ({})", loaded.hash, loaded.seed(), summary.cut, summary.layer);
            for s in &summary.schemes {
                println!("{:<5} {:>9.3} s   (reference {:.2} s)", s.scheme, s.latency_s, s.reference_s);
            }
            if sweep_cut {
                let (sel, rows) = ex::sweep_cut(&loaded)?;
                out.csv("cut_sweep.csv", &rows)?;
                for r in &rows {
                    println!("cut {:>2} {:<6} mean {:>9.3} s  std {:>8.3}  p95 {:>9.3}", r.cut, r.layer, r.mean_latency_s, r.std_s, r.p95_s);
                }
                println!("selected cut {} ({})", sel.best, loaded.model.layer_name(sel.best));
            }
        }
        Command::Optimize { baseline, seeds, oracle, iterations, delta, cut } => {
            let loaded = loaded.with(|s| {
                if let Some(g) = iterations {
                    s.gibbs.iterations = g;
                }
                if let Some(d) = delta {
                    s.gibbs.delta = d;
                }
                if let Some(v) = cut {
                    s.cut = v;
                }
            })?;
            let out = out_dir(&cli.common, &loaded)?;
            match baseline {
                None => {
                    let r = ex::optimize(&loaded, oracle)?;
                    out.csv("gibbs_trace.csv", &r.gibbs.trace)?;
                    let doc = ex::assignment_doc(&loaded, &r);
                    out.json("assignment.json", &doc)?;
                    println!("initial {:.4} s -> best {:.4} s", doc.initial_theta_s, doc.theta_s);
                    if let Some(o) = doc.oracle_theta_s {
                        println!("exhaustive optimum {o:.4} s");
                    }
                }
                Some(kind) => {
                    let rows = ex::compare_baselines(&loaded, seeds)?;
                    let summary = ex::summarize_baselines(&rows, loaded.scenario.env.subcarrier_bandwidth_mhz);
                    out.csv("baseline.csv", &rows)?;
                    out.json("baseline_summary.json", &summary)?;
                    let (mean, gain) = match kind {
                        Baseline::Random => (summary.random_mean_s, summary.gain_vs_random),
                        Baseline::Heuristic => (summary.heuristic_mean_s, summary.gain_vs_heuristic),
                    };
                    println!(
                        "proposed {:.4} s vs {:?} {:.4} s over {} seeds: {:.1}% lower",
                        summary.proposed_mean_s,
                        kind,
                        mean,
                        rows.len(),
                        100.0 * gain
                    );
                }
            }
        }
        Command::Train { schemes, rounds, cut } => {
            let loaded = loaded.with(|s| {
                if let Some(t) = rounds {
                    s.trainer.config.rounds = t;
                }
                if let Some(v) = cut {
                    s.trainer.config.cut = v;
                }
            })?;
            let schemes = match schemes {
                Some(list) => list.iter().map(|s| parse_train_scheme(s)).collect::<SimResult<Vec<_>>>()?,
                None => loaded.scenario.trainer.schemes.clone(),
            };
            let out = out_dir(&cli.common, &loaded)?;
            for m in ex::train(&loaded, &schemes)? {
                let label = m.scheme.label().to_ascii_lowercase();
                out.csv(&format!("metrics_{label}.csv"), &ex::metrics_rows(&m))?;
                out.json(&format!("model_{label}.json"), &ex::checkpoint(&loaded, &m))?;
                if let Some(last) = m.rounds.last() {
                    println!(
                        "{:<5} rounds {:>4} loss {:.4} train {:.3} test {:.3} elapsed {}",
                        m.scheme.label(),
                        last.round,
                        last.loss,
                        last.train_acc,
                        last.test_acc,
                        last.elapsed.map_or("-".to_string(), |e| format!("{e:.1} s"))
                    );
                }
            }
        }
        Command::Sweep { subcarriers, seeds } => {
            let out = out_dir(&cli.common, &loaded)?;
            let results = ex::bandwidth_sweep(&loaded, &subcarriers, seeds)?;
            let summaries: Vec<_> = results.iter().map(|(s, _)| *s).collect();
            let rows: Vec<_> = results.into_iter().flat_map(|(_, r)| r).collect();
            out.csv("bandwidth_sweep.csv", &summaries)?;
            out.csv("bandwidth_sweep_runs.csv", &rows)?;
            for s in &summaries {
                println!(
                    "{:>5.1} MHz proposed {:>8.3} s random {:>8.3} s heuristic {:>8.3} s  gain {:>5.1}% / {:>5.1}%",
                    s.bandwidth_mhz,
                    s.proposed_mean_s,
                    s.random_mean_s,
                    s.heuristic_mean_s,
                    100.0 * s.gain_vs_random,
                    100.0 * s.gain_vs_heuristic
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
