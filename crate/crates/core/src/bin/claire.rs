use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use claire::augment::{generate_counterfactuals, Regularizer};
use claire::data::{write_csv, FeatureColumn, FeatureType, Schema, SensitiveColumn, TargetColumn, Task};
use claire::fairrep::ClaireModel;
use claire::harness::{self, DataSource, ExperimentConfig, Method, Repetition, ResultRow, SweepParam};
use claire::scm::claire_synthetic;
use claire::{Error, Result};

#[derive(Parser)]
#[command(name = "claire", version, about = "Counterfactually fair prediction experiments")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; repetition r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the synthetic benchmark; writes data.csv, scm.json, schema.json and config.json.
    Synth {
        #[arg(long, default_value_t = harness::DEFAULT_SYNTHETIC_ROWS)]
        n: usize,
    },
    /// Train the stage-1 model and write vae.json and counterfactuals.csv.
    Augment {
        #[arg(long, default_value = "claire_m")]
        method: Method,
    },
    /// Train a representation model on repetition 0 and write model.json.
    Train {
        #[arg(long, default_value = "claire_m")]
        method: Method,
    },
    /// Score a saved model on repetition 0's test sets.
    Eval {
        #[arg(long)]
        model: PathBuf,
    },
    /// Reproduce one of the result tables.
    Table {
        #[arg(long)]
        id: u8,
    },
    /// ERM, IRM and the CLAIRE variants side by side.
    Ablation,
    /// Vary one hyperparameter over a grid.
    Sweep {
        #[arg(long)]
        param: SweepParam,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", &e.render().to_string()),
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string()),
    }
}

fn fail(kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message.trim() }));
    ExitCode::FAILURE
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let base = match &cli.config {
        Some(p) => ExperimentConfig::from_json_file(p).map_err(|e| e.context(format!("reading {}", p.display())))?,
        None => ExperimentConfig::default(),
    };
    Ok(apply_flags(cli, base))
}

fn apply_flags(cli: &Cli, mut cfg: ExperimentConfig) -> ExperimentConfig {
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = cli.reps {
        cfg.repetitions = r;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg
}

fn execute(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth { n } => synth(cli, *n),
        Command::Augment { method } => {
            let cfg = load_config(cli)?;
            let regularizer = match method {
                Method::ClaireM => Regularizer::Mmd,
                Method::ClaireA => Regularizer::Adversarial,
                other => return Err(Error::Config(format!("augment expects claire_m or claire_a, got `{other}`"))),
            };
            let mut rep = Repetition::new(&cfg, 0)?;
            let vae = rep.vae_for(regularizer, &cfg.hp)?;
            let aug = generate_counterfactuals(&vae, &rep.train, cfg.hp.k_samples, rep.seed.wrapping_add(7))?;
            std::fs::write(cli.out.join("vae.json"), vae.to_json()?)?;
            aug.write_csv(cli.out.join("counterfactuals.csv"))?;
            println!("wrote {} augmented instances to {}", aug.len(), cli.out.display());
            Ok(())
        }
        Command::Train { method } => {
            let cfg = load_config(cli)?;
            let mut rep = Repetition::new(&cfg, 0)?;
            let model = rep.train_claire(*method, &cfg.hp)?;
            std::fs::write(cli.out.join("model.json"), model.to_json()?)?;
            println!("wrote {}", cli.out.join("model.json").display());
            Ok(())
        }
        Command::Eval { model } => {
            let cfg = load_config(cli)?;
            let model = ClaireModel::from_json(&std::fs::read_to_string(model)?)?;
            let rep = Repetition::new(&cfg, 0)?;
            let report = harness::evaluate(&model, &rep.test, &rep.cf_tests)?;
            let rows = harness::aggregate(&[vec![("model".to_string(), report)]], &cfg.pairs);
            finish(&cli.out, &rows)
        }
        Command::Table { id } => {
            let mut cfg = ExperimentConfig::table(*id)?;
            if let Some(p) = &cli.config {
                let file = ExperimentConfig::from_json_file(p)?;
                cfg = ExperimentConfig {
                    id: cfg.id,
                    methods: cfg.methods,
                    scm: cfg.scm,
                    pairs: cfg.pairs,
                    ..file
                };
            }
            let cfg = apply_flags(cli, cfg);
            let out = harness::run(&cfg)?;
            finish(&cli.out, &out.rows)
        }
        Command::Ablation => {
            let out = harness::ablation(&load_config(cli)?)?;
            finish(&cli.out, &out.rows)
        }
        Command::Sweep { param, values } => {
            let out = harness::sweep(&load_config(cli)?, *param, values)?;
            out.write(&cli.out)?;
            print_rows(&out.rows());
            Ok(())
        }
    }
}

fn synth(cli: &Cli, n: usize) -> Result<()> {
    let scm = claire_synthetic();
    let (data, _) = scm.sample(n, cli.seed.unwrap_or(0))?;
    let out = &cli.out;
    write_csv(&data, out.join("data.csv"))?;
    std::fs::write(out.join("scm.json"), scm.to_json()?)?;
    let schema = Schema {
        features: data
            .feature_names
            .iter()
            .map(|name| FeatureColumn {
                name: name.clone(),
                kind: FeatureType::Continuous,
            })
            .collect(),
        sensitive: SensitiveColumn {
            name: "s".into(),
            values: (0..data.num_sensitive).map(|s| s.to_string()).collect(),
        },
        target: TargetColumn {
            name: "y".into(),
            task: Task::Regression,
            positive: vec![],
        },
    };
    std::fs::write(out.join("schema.json"), serde_json::to_string_pretty(&schema)?)?;
    let cfg = ExperimentConfig {
        id: "synthetic-csv".into(),
        data: DataSource::Csv {
            path: absolute(&out.join("data.csv"))?,
            schema: absolute(&out.join("schema.json"))?,
            graph: absolute(&out.join("scm.json"))?,
        },
        ..ExperimentConfig::default()
    };
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    println!("wrote {n} rows to {}", out.display());
    Ok(())
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

fn finish(out: &Path, rows: &[ResultRow]) -> Result<()> {
    harness::write_rows(out, rows)?;
    print_rows(rows);
    Ok(())
}

fn print_rows(rows: &[ResultRow]) {
    for r in rows {
        println!("{:<24} {:<12} {:>10.4} ± {:.4}", r.method, r.metric, r.mean, r.std);
    }
}
