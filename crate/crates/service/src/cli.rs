//! The `journal` command line.
//!
//! Exit status: 0 on success, 1 when input fails validation or a step fails,
//! 2 on usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::{NaiveDate, Utc};
use clap::{Parser, Subcommand};

use journal_core::analytics::{export_report, read_records_csv, CostParameters};
use journal_core::article::{
    compile, mint_article_doi_with_prefix, parse_manuscript, validate_archive_doi, validate_manuscript,
};
use journal_core::clock::SystemClock;
use journal_core::config::JournalConfig;
use journal_core::forge::SimulatedForge;
use journal_core::journal::Journal;
use journal_core::scenario::Scenario;

use crate::{router, spawn_worker, AppState};

#[derive(Debug, Parser)]
#[command(name = "journal", version, about = "Run and operate the journal")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API.
    Serve {
        /// TOML configuration file; defaults plus OJ_* overrides when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compile a paper.md into the article HTML and the Crossref deposit XML.
    Compile {
        paper: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Archive DOI of the reviewed software release.
        #[arg(long)]
        archive: String,
        /// Sequence number the article DOI is minted from.
        #[arg(long, default_value_t = 1)]
        sequence: u64,
        /// Publication date; defaults to the manuscript date, then today.
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute the statistics report from a review-records CSV.
    Stats {
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a scripted scenario on the simulated forge and print final states.
    Simulate {
        scenario: PathBuf,
        /// Print the final submission records as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve { config } => {
            let config = load_config(config.as_deref())?;
            let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            runtime.block_on(serve(config))
        }
        Command::Compile {
            paper,
            out,
            archive,
            sequence,
            date,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            compile_paper(&paper, &out, &archive, sequence, date, &config)
        }
        Command::Stats { records, out } => stats(&records, &out),
        Command::Simulate { scenario, json } => simulate(&scenario, json),
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<JournalConfig> {
    match path {
        Some(p) => JournalConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => {
            let mut config = JournalConfig::default();
            config.apply_env(std::env::vars())?;
            config.validate()?;
            Ok(config)
        }
    }
}

pub async fn serve(config: JournalConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&config.storage_path)
        .with_context(|| format!("creating {}", config.storage_path.display()))?;
    let clock = Arc::new(SystemClock);
    let mut forge = SimulatedForge::with_log_file(config.bot(), clock.clone(), config.storage_path.join("forge.jsonl"))
        .context("opening the forge event log")?;
    forge.add_repository(&config.reviews_repository);
    let listen = config.listen_address.clone();
    let journal = Journal::open(config, forge, clock).context("opening the store")?;
    let state = AppState::new(journal);
    spawn_worker(state.clone());
    let listener = tokio::net::TcpListener::bind(&listen)
        .await
        .with_context(|| format!("binding {listen}"))?;
    tracing::info!(address = %listen, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn compile_paper(
    paper: &Path,
    out: &Path,
    archive: &str,
    sequence: u64,
    date: Option<NaiveDate>,
    config: &JournalConfig,
) -> anyhow::Result<()> {
    let text = fs::read_to_string(paper).with_context(|| format!("reading {}", paper.display()))?;
    let manuscript = parse_manuscript(&text).with_context(|| format!("parsing {}", paper.display()))?;
    for v in validate_manuscript(&manuscript) {
        eprintln!("{:?}: {v}", v.severity());
    }
    let doi = mint_article_doi_with_prefix(&config.doi_prefix, sequence)?;
    let archive = validate_archive_doi(archive)?;
    let published = date
        .or(manuscript.date)
        .unwrap_or_else(|| Utc::now().date_naive());
    let publication = compile(&manuscript, &doi, &archive, published, &config.deposit_settings())?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let html = out.join("paper.html");
    let xml = out.join("crossref.xml");
    fs::write(&html, &publication.article_html).with_context(|| format!("writing {}", html.display()))?;
    fs::write(&xml, &publication.deposit_xml).with_context(|| format!("writing {}", xml.display()))?;
    println!("{doi}");
    println!("wrote {}", html.display());
    println!("wrote {}", xml.display());
    Ok(())
}

fn stats(records: &Path, out: &Path) -> anyhow::Result<()> {
    let file = fs::File::open(records).with_context(|| format!("opening {}", records.display()))?;
    let records = read_records_csv(file)?;
    if records.is_empty() {
        bail!(journal_core::analytics::AnalyticsError::EmptyInput);
    }
    let report = export_report(&records, &CostParameters::default());
    let mut f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    serde_json::to_writer_pretty(&mut f, &report)?;
    writeln!(f)?;
    let t = &report.time_to_publication;
    println!(
        "{} records: mean {:.1} days, median {:.1}, IQR {:.1}, range {}..{}",
        report.record_count, t.mean, t.median, t.interquartile_range, t.minimum, t.maximum
    );
    Ok(())
}

fn simulate(path: &Path, json: bool) -> anyhow::Result<()> {
    let (scenario, base) = Scenario::load(path)?;
    let run = scenario.run(&base)?;
    if json {
        let records: Vec<_> = run
            .submissions
            .iter()
            .filter_map(|id| run.journal.submission(*id))
            .map(|s| run.journal.status(s, None))
            .collect();
        println!("{}", serde_json::to_string_pretty(&records)?);
    } else {
        for entry in &run.log {
            println!("{:>3}. {} -> {}", entry.step, entry.description, entry.result);
        }
        for line in run.summary() {
            println!("{line}");
        }
    }
    Ok(())
}
