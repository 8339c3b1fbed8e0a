//! `offerset`: command-line front end for generating data, building sampling indices,
//! recommending offer sets and running the experiments.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use offerset_core::harness::config::{ExperimentConfig, ExperimentKind};
use offerset_core::harness::experiments::generate;
use offerset_core::harness::report::{plot_script, render_csv, Table};
use offerset_core::harness::{run_benchmark, run_sample_probs, run_scaling};
use offerset_core::{
    load_index, p_from_tmnl, persist_index, plan_levels, recommend, rng_from_seed, vecfile, Ensemble, Error,
    ItemUniverse, LssIndex, TruncatedMnl, UserMixture,
};

#[derive(Parser)]
#[command(name = "offerset", version, about = "Sub-linear offer-set recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    /// Also write a gnuplot script plotting the report.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic item universe (and its user points).
    Gen {
        #[command(flatten)]
        common: Common,
        /// Where to write the user point(s), in the same vector format.
        #[arg(long)]
        users: Option<PathBuf>,
    },
    /// Build a sampling index over an item file.
    BuildIndex {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        items: PathBuf,
    },
    /// Query a saved index with every vector of a user file.
    Query {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        users: PathBuf,
        /// Drop level candidates beyond their radius; needs the item file.
        #[arg(long)]
        items: Option<PathBuf>,
    },
    /// Recommend an offer set for the mixture of user types in a user file.
    Recommend {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        users: PathBuf,
    },
    /// Sampling frequency against distance on distance-uniform data.
    SampleProbs(ExperimentArgs),
    /// Pipeline versus nearest-neighbor baselines on clustered data.
    Benchmark(ExperimentArgs),
    /// Query time and candidate count across catalogue sizes.
    Scaling(ExperimentArgs),
}

fn load_config(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    cfg.experiment.kind = kind;
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn load_users(path: &Path) -> Result<UserMixture, Error> {
    let file = vecfile::read_path(path)?;
    UserMixture::new(file.items().iter().map(|it| it.embedding.clone()).collect())
}

fn run_experiment(args: &ExperimentArgs, kind: ExperimentKind) -> Result<(), Error> {
    let cfg = load_config(&args.common, kind)?;
    let table = match kind {
        ExperimentKind::SampleProbs => run_sample_probs(&cfg)?.table(),
        ExperimentKind::Benchmark => run_benchmark(&cfg)?.table(),
        ExperimentKind::Scaling => run_scaling(&cfg)?.table(),
    };
    for (k, v) in &table.summary {
        eprintln!("{k} = {v}");
    }
    emit(args.common.out.as_deref(), &render_csv(&table, &cfg)?)?;
    if let Some(plot) = &args.plot {
        let data = args
            .common
            .out
            .as_ref()
            .map_or("report.csv".to_string(), |p| p.display().to_string());
        std::fs::write(plot, plot_script(kind, &data))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Gen { common, users } => {
            let cfg = load_config(&common, ExperimentKind::SampleProbs)?;
            let out = common.out.ok_or_else(|| Error::Config("gen needs --out".into()))?;
            let data = generate(&cfg)?;
            vecfile::write_path(&data.universe, &out)?;
            if let Some(users) = users {
                let points = ItemUniverse::from_embeddings(data.users.dim(), data.users.types().to_vec())?;
                vecfile::write_path(&points, &users)?;
            }
            eprintln!(
                "wrote {} items of dimension {}",
                data.universe.len(),
                data.universe.dim()
            );
        }
        Command::BuildIndex { common, items } => {
            let cfg = load_config(&common, ExperimentKind::SampleProbs)?;
            let out = common
                .out
                .ok_or_else(|| Error::Config("build-index needs --out".into()))?;
            let universe = vecfile::read_path(&items)?;
            let p = cfg.plan.planned_decay(&p_from_tmnl(&cfg.model.params()?)?)?;
            let plan = plan_levels(&p, universe.len(), cfg.plan.plan_config())?;
            let index = LssIndex::build(&universe, plan, cfg.experiment.seed)?;
            persist_index(&index, &out)?;
            eprintln!(
                "indexed {} items: {} active levels, {} stored slots",
                universe.len(),
                index.plan().active().count(),
                index.stored_slots()
            );
        }
        Command::Query {
            common,
            index,
            users,
            items,
        } => {
            let index = load_index(&index)?;
            let users = load_users(&users)?;
            let universe = items.as_deref().map(vecfile::read_path).transpose()?;
            let mut t = Table::new(vec!["query", "item_id"]);
            for (q, u) in users.types().iter().enumerate() {
                let ids = match &universe {
                    Some(uni) => index.query_pruned(u, uni)?,
                    None => index.query(u)?,
                };
                for id in ids {
                    t.push(vec![q.to_string(), id.to_string()]);
                }
            }
            let cfg = load_config(&common, ExperimentKind::SampleProbs)?;
            emit(common.out.as_deref(), &render_csv(&t, &cfg)?)?;
        }
        Command::Recommend { common, items, users } => {
            let cfg = load_config(&common, ExperimentKind::SampleProbs)?;
            let universe = vecfile::read_path(&items)?;
            let mixture = load_users(&users)?;
            let params = cfg.model.params()?;
            let model = TruncatedMnl::new(params)?;
            let p = cfg.plan.planned_decay(&p_from_tmnl(&params)?)?;
            let plan = plan_levels(&p, universe.len(), cfg.plan.plan_config())?;
            let prune = cfg.prune.prune_config();
            let s = prune.sample_count(cfg.prune.k)?;
            let seed = cfg.experiment.seed;
            let ensemble = Ensemble::build(&universe, &plan, s, seed)?;
            let mut rng = rng_from_seed(offerset_core::derive_seed(seed, u64::MAX));
            let rec = recommend(&ensemble, &mixture, cfg.prune.k, &prune, &model, &universe, &mut rng)?;
            let mut t = Table::new(vec!["rank", "item_id", "gain"]);
            for (i, (id, gain)) in rec.offer.items.iter().zip(&rec.offer.gains).enumerate() {
                t.push(vec![(i + 1).to_string(), id.to_string(), gain.to_string()]);
            }
            t.note("value", rec.offer.value);
            t.note("candidates", rec.candidates);
            t.note("samples", rec.samples);
            eprintln!(
                "value {} from {} candidates ({} samples); prune {:?}, greedy {:?}",
                rec.offer.value, rec.candidates, rec.samples, rec.prune_time, rec.greedy_time
            );
            emit(common.out.as_deref(), &render_csv(&t, &cfg)?)?;
        }
        Command::SampleProbs(args) => run_experiment(&args, ExperimentKind::SampleProbs)?,
        Command::Benchmark(args) => run_experiment(&args, ExperimentKind::Benchmark)?,
        Command::Scaling(args) => run_experiment(&args, ExperimentKind::Scaling)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Guard { .. } => 3,
                _ => 1,
            })
        }
    }
}
