use std::path::PathBuf;
use std::process::ExitCode;

use bayes_cfa::config::Config;
use bayes_cfa::pipeline::{Pipeline, Step, StepOutput};
use bayes_cfa::Error;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bayes-cfa", version, about = "Bayesian confirmatory factor analysis with inequality-constrained model selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "bayes-cfa.toml")]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true, env = "BAYES_CFA_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Number of parallel chains for `fit`.
    #[arg(long, global = true)]
    chains: Option<usize>,
    /// Print tab-separated tables instead of the human-readable summary.
    #[arg(long, global = true)]
    machine_output: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Log-transform and standardize the data; report KMO.
    Preprocess,
    /// Posterior probabilities over the number of factors.
    SelectDim,
    /// Gibbs-sample the unrestricted base model.
    Fit,
    /// Bayes factors and posterior probabilities of the constraint models.
    Compare,
    /// Render the report bundle from the persisted results.
    Report,
    /// Run every step in order.
    All,
}

fn print_output(out: &StepOutput, machine: bool) {
    match out {
        StepOutput::Preprocess(r) => {
            let s = &r.summary;
            let kmo = s.kmo.map_or("undefined".to_string(), |k| format!("{k:.3}"));
            if machine {
                println!("n\tp\tnonsingular\tkmo\n{}\t{}\t{}\t{kmo}", s.n, s.names.len(), s.nonsingular);
            } else {
                println!("n = {}, p = {}, nonsingular = {}, KMO = {kmo}", s.n, s.names.len(), s.nonsingular);
            }
        }
        StepOutput::SelectDim(r) => {
            println!("m\tlog_marginal\tpmp\tscreen");
            for e in &r.entries {
                let lm = e.log_marginal.map_or("NA".to_string(), |v| if machine { v.to_string() } else { format!("{v:.2}") });
                let pmp = if machine { e.pmp.to_string() } else { format!("{:.4}", e.pmp) };
                let screen = if e.screen.passed() { "pass" } else { "rank-deficient" };
                println!("{}\t{lm}\t{pmp}\t{screen}", e.m);
            }
        }
        StepOutput::Fit(d) => println!("{} draws of a {}-factor model", d.kept(), d.spec.m()),
        StepOutput::Compare(c) => {
            println!("model\tbf\tpmp");
            for (m, p) in c.models.iter().zip(&c.result.posterior_probs) {
                if machine {
                    println!("{}\t{}\t{p}", m.label, m.bf.bf);
                } else {
                    println!("{}\t{:.3}\t{p:.4}", m.label, m.bf.bf);
                }
            }
        }
        StepOutput::Report(r) => {
            if machine {
                print!("{}", r.files["provenance.txt"]);
            } else {
                print!("{}", r.text());
            }
        }
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut config = Config::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(chains) = cli.chains {
        if chains == 0 {
            return Err(Error::Config { path: "--chains".into(), message: "must be at least 1".into() });
        }
        config.chains = chains;
    }
    let pipeline = Pipeline::new(config);
    let step = match cli.command {
        Command::Preprocess => Step::Preprocess,
        Command::SelectDim => Step::SelectDim,
        Command::Fit => Step::Fit,
        Command::Compare => Step::Compare,
        Command::Report => Step::Report,
        Command::All => {
            let report = pipeline.all()?;
            print_output(&StepOutput::Report(report), cli.machine_output);
            return Ok(());
        }
    };
    print_output(&pipeline.run(step)?, cli.machine_output);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
