//! `hesitancy`: the comparative corpus pipeline as subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

pub mod config;
pub mod io;
pub mod pipeline;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hesitancy_annotate::{ServeConfig, Server};
use hesitancy_core::cluster::{kmeans, sample_cluster, sample_ids, ClusterModel};
use hesitancy_core::embed::{embed_posts, train, DocVector, EmbeddingModel};
use hesitancy_core::ingest::{corpus_stats, CleanPost};
use hesitancy_core::labels::{AnnotationStore, LabelTaxonomy};
use hesitancy_core::report::{
    bump_chart, change_bars, comparative_figure_table, comparative_stats_table, delta_table, figure_table,
    prevalence_table, stats_table, ChangeMode, Table,
};
use hesitancy_core::sentiment::{
    extreme_samples, figure_report, read_figure_reports_csv, score_corpus, write_figure_reports_csv, Bucket,
    SentimentLexicon,
};
use hesitancy_core::synth::{generate, SynthConfig};
use hesitancy_core::terms::{
    read_deltas_csv, read_records_csv, rank_diff, shared_keyword_change, term_prevalence, track_term_set,
    write_deltas_csv, write_records_csv, TermExtractor, TermKind, EMOTION_TERMS, ORGANIZATION_TERMS,
};
use serde::Serialize;

use crate::config::Config;
use crate::io::{emit, read_jsonl, read_to_string, write_bytes, write_json, write_jsonl};

#[derive(Debug, Parser)]
#[command(name = "hesitancy", version, about = "Comparative analytics over two social-media corpora")]
pub struct Cli {
    /// Config file; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides run.threads. 1 is fully deterministic.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, filter and normalize a JSONL corpus.
    Ingest(IngestArgs),
    /// Corpus statistics table.
    Stats(StatsArgs),
    #[command(subcommand)]
    Terms(TermsCmd),
    #[command(subcommand)]
    Embed(EmbedCmd),
    #[command(subcommand)]
    Cluster(ClusterCmd),
    #[command(subcommand)]
    Sentiment(SentimentCmd),
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Write the synthetic two-corpus fixture.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub tag: String,
    /// Cleaned posts, JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep posts containing this phrase; repeatable. Defaults to ingest.keyword_filter.
    #[arg(long = "filter")]
    pub filter: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Cleaned posts, JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Second corpus for a side-by-side table.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Keyword,
    Hashtag,
}

impl From<KindArg> for TermKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Keyword => TermKind::Keyword,
            KindArg::Hashtag => TermKind::Hashtag,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum TermsCmd {
    /// Term prevalence of one corpus, CSV.
    Rank {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Keyword)]
        kind: KindArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two prevalence lists: top-n ranks, or prevalence change above a floor.
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, conflicts_with = "min_prevalence")]
        top_n: Option<usize>,
        #[arg(long)]
        min_prevalence: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prevalence change of a fixed term list.
    Track {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Comma-separated terms.
        #[arg(long, value_delimiter = ',', required_unless_present = "set", conflicts_with = "set")]
        terms: Vec<String>,
        #[arg(long, value_enum)]
        set: Option<TermSet>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TermSet {
    Organizations,
    Emotions,
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    /// Train subword embeddings on one or more cleaned corpora.
    Train {
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean-pooled post vectors, JSONL.
    Apply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ClusterCmd {
    /// k-means over post vectors.
    Fit {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded sample of one cluster, or of the whole corpus without --cluster.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cluster: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SentimentCmd {
    /// Per-post compound score and bucket, JSONL.
    Score {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sentiment ratios of posts mentioning each figure, CSV.
    Figures {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated; defaults to sentiment.figures.
        #[arg(long, value_delimiter = ',')]
        figures: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample of extreme posts mentioning a figure.
    Extremes {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        figure: String,
        #[arg(long, value_enum)]
        polarity: PolarityArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    Positive,
    Negative,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCmd {
    /// Serve cluster samples and collect labels over HTTP.
    Serve {
        #[arg(long)]
        model: PathBuf,
        /// Cleaned posts the model was fitted on.
        #[arg(long)]
        corpus: PathBuf,
        /// Annotation log; created when missing.
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Label file, one per line; defaults to the bundled taxonomy.
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Bump chart SVG from a rank diff CSV.
    Bump {
        #[arg(long)]
        deltas: PathBuf,
        #[arg(long)]
        top_n: Option<usize>,
        #[arg(long, default_value = "before")]
        title_a: String,
        #[arg(long, default_value = "after")]
        title_b: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prevalence change bars SVG from a deltas CSV.
    Bars {
        #[arg(long)]
        deltas: PathBuf,
        /// pp or relative; defaults to terms.change_mode.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV and text tables from analytics outputs.
    Tables(TablesArgs),
}

#[derive(Debug, Args)]
pub struct TablesArgs {
    /// Annotation log to tabulate (with --dataset).
    #[arg(long, requires = "dataset")]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Figure report CSV.
    #[arg(long)]
    pub figures: Option<PathBuf>,
    /// Second figure report CSV for a side-by-side table.
    #[arg(long, requires = "figures")]
    pub figures_b: Option<PathBuf>,
    /// Deltas CSV.
    #[arg(long)]
    pub deltas: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    /// Every stage over the configured pair of corpora.
    Run {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Clean posts per corpus.
    #[arg(long, default_value_t = SynthConfig::default().posts_per_corpus)]
    pub posts: usize,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<hesitancy_core::Error> for CliError {
    fn from(e: hesitancy_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parse `argv`, run, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("HESITANCY_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

struct Ctx {
    cfg: Config,
    /// `--seed` when given on the command line.
    seed_flag: Option<u64>,
    /// Directory config-relative paths resolve against.
    base: PathBuf,
}

fn load_config(cli: &Cli) -> Result<Ctx> {
    let env = std::env::vars();
    let (mut cfg, base) = match &cli.config {
        Some(path) => {
            let cfg = Config::load(path, env)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (Config::parse("", env)?, PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        cfg.run.threads = threads;
    }
    Ok(Ctx {
        cfg,
        seed_flag: cli.seed,
        base,
    })
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = load_config(&cli)?;
    // Installing the global pool can only happen once per process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.cfg.run.threads)
        .build_global();
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Stats(a) => cmd_stats(a),
        Command::Terms(c) => cmd_terms(&ctx, c),
        Command::Embed(c) => cmd_embed(&ctx, c),
        Command::Cluster(c) => cmd_cluster(&ctx, c),
        Command::Sentiment(c) => cmd_sentiment(&ctx, c),
        Command::Annotate(c) => cmd_annotate(c),
        Command::Report(c) => cmd_report(&ctx, c),
        Command::Pipeline(PipelineCmd::Run { out }) => {
            let manifest = pipeline::run(&ctx.cfg, &ctx.base, &out)?;
            println!(
                "{} files written to {} (config {})",
                manifest.outputs.len() + 1,
                out.display(),
                &manifest.config_sha256[..12]
            );
            Ok(())
        }
        Command::Fixture(a) => cmd_fixture(&ctx, a),
    }
}

fn read_posts(path: &Path) -> Result<Vec<CleanPost>> {
    Ok(read_jsonl(path)?)
}

fn json_out<T: Serialize + ?Sized>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value)?,
        None => {
            let mut buf = serde_json::to_vec_pretty(value).map_err(anyhow::Error::from)?;
            buf.push(b'\n');
            emit(None, &buf)?;
        }
    }
    Ok(())
}

fn csv_out<F>(out: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> hesitancy_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    emit(out, &buf)?;
    Ok(())
}

fn cmd_ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let filter = if a.filter.is_empty() {
        ctx.cfg.ingest.keyword_filter.clone()
    } else {
        a.filter
    };
    let (posts, summary) = pipeline::ingest(&a.input, &a.tag, &filter)?;
    write_jsonl(&a.out, &posts)?;
    json_out(None, &summary)
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let first = corpus_stats(&read_posts(&a.input)?);
    let table = match &a.compare {
        Some(p) => comparative_stats_table(&first, &corpus_stats(&read_posts(p)?)),
        None => stats_table(&first),
    };
    let text = match a.format {
        TableFormat::Text => table.to_text(),
        TableFormat::Csv => table.to_csv(),
    };
    emit(a.out.as_deref(), text.as_bytes())?;
    Ok(())
}

fn cmd_terms(ctx: &Ctx, c: TermsCmd) -> Result<()> {
    let read = |p: &Path| -> Result<_> {
        let file = std::fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
        Ok(read_records_csv(file).with_context(|| format!("{}: malformed records", p.display()))?)
    };
    match c {
        TermsCmd::Rank { input, kind, out } => {
            let records = term_prevalence(&read_posts(&input)?, kind.into(), &TermExtractor::default());
            csv_out(out.as_deref(), |b| write_records_csv(b, &records))
        }
        TermsCmd::Diff { a, b, top_n, min_prevalence, out } => {
            let (ra, rb) = (read(&a)?, read(&b)?);
            let deltas = match (top_n, min_prevalence) {
                (_, Some(p)) => shared_keyword_change(&ra, &rb, p)?,
                (n, None) => {
                    let n = n.unwrap_or(ctx.cfg.terms.top_n);
                    if n == 0 {
                        return Err(usage("--top-n must be at least 1"));
                    }
                    rank_diff(&ra, &rb, n)?
                }
            };
            csv_out(out.as_deref(), |w| write_deltas_csv(w, &deltas))
        }
        TermsCmd::Track { a, b, terms, set, out } => {
            let terms: Vec<String> = match set {
                Some(TermSet::Organizations) if ctx.cfg.terms.organizations.is_empty() => {
                    ORGANIZATION_TERMS.iter().map(|s| s.to_string()).collect()
                }
                Some(TermSet::Organizations) => ctx.cfg.terms.organizations.clone(),
                Some(TermSet::Emotions) if ctx.cfg.terms.emotions.is_empty() => {
                    EMOTION_TERMS.iter().map(|s| s.to_string()).collect()
                }
                Some(TermSet::Emotions) => ctx.cfg.terms.emotions.clone(),
                None => terms,
            };
            let deltas = track_term_set(&read(&a)?, &read(&b)?, &terms)?;
            csv_out(out.as_deref(), |w| write_deltas_csv(w, &deltas))
        }
    }
}

fn cmd_embed(ctx: &Ctx, c: EmbedCmd) -> Result<()> {
    match c {
        EmbedCmd::Train { input, out } => {
            let mut streams = Vec::new();
            for p in &input {
                streams.extend(read_posts(p)?.into_iter().map(|p| p.tokens));
            }
            let model = train(&streams, &ctx.cfg.embed_config())?;
            model.save(&out)?;
            eprintln!("{} words, dim {}", model.vocab().len(), model.dim());
            Ok(())
        }
        EmbedCmd::Apply { model, input, out } => {
            let model = EmbeddingModel::load(&model)?;
            let vectors = embed_posts(&read_posts(&input)?, &model);
            write_jsonl(&out, &vectors)?;
            Ok(())
        }
    }
}

fn cmd_cluster(ctx: &Ctx, c: ClusterCmd) -> Result<()> {
    match c {
        ClusterCmd::Fit { vectors, k, out } => {
            if k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            let vectors: Vec<DocVector> = read_jsonl(&vectors)?;
            let model = kmeans(&vectors, &ctx.cfg.kmeans_config(k))?;
            model.save(&out)?;
            eprintln!("k = {k}, inertia {:.6}, sizes {:?}", model.inertia, model.sizes());
            Ok(())
        }
        ClusterCmd::Sample { model, cluster, n, out } => {
            let model = ClusterModel::load(&model)?;
            let n = n.unwrap_or(ctx.cfg.cluster.sample_n);
            let seed = ctx.cfg.run.seed;
            match cluster {
                Some(c) => json_out(out.as_deref(), &sample_cluster(&model, c, n, seed)?),
                None => {
                    let ids: Vec<&String> = model.assignments.keys().collect();
                    json_out(out.as_deref(), &sample_ids(&ids, n, seed))
                }
            }
        }
    }
}

fn cmd_sentiment(ctx: &Ctx, c: SentimentCmd) -> Result<()> {
    let lexicon = SentimentLexicon::bundled();
    match c {
        SentimentCmd::Score { input, out } => {
            let scores = score_corpus(&read_posts(&input)?, &lexicon);
            let mut buf = Vec::new();
            for s in &scores {
                serde_json::to_writer(&mut buf, s).map_err(anyhow::Error::from)?;
                buf.push(b'\n');
            }
            emit(out.as_deref(), &buf)?;
            Ok(())
        }
        SentimentCmd::Figures { input, figures, out } => {
            let figures = if figures.is_empty() {
                ctx.cfg.sentiment.figures.clone()
            } else {
                figures
            };
            let reports = figure_report(&read_posts(&input)?, &figures, &lexicon)?;
            csv_out(out.as_deref(), |w| write_figure_reports_csv(w, &reports))
        }
        SentimentCmd::Extremes { input, figure, polarity, n, out } => {
            let polarity = match polarity {
                PolarityArg::Positive => Bucket::Positive,
                PolarityArg::Negative => Bucket::Negative,
            };
            let n = n.unwrap_or(ctx.cfg.sentiment.extreme_n);
            let posts = read_posts(&input)?;
            let sample = extreme_samples(&posts, &figure, polarity, n, ctx.cfg.run.seed, &lexicon)?;
            json_out(out.as_deref(), &sample)
        }
    }
}

fn cmd_annotate(c: AnnotateCmd) -> Result<()> {
    let AnnotateCmd::Serve { model, corpus, store, dataset, addr, taxonomy } = c;
    let taxonomy = match taxonomy {
        Some(p) => LabelTaxonomy::from_file(&p)?,
        None => LabelTaxonomy::bundled(),
    };
    let cfg = ServeConfig {
        model: ClusterModel::load(&model)?,
        posts: read_posts(&corpus)?,
        dataset_tag: dataset,
        taxonomy,
        store_path: store,
        addr,
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start runtime")?;
    rt.block_on(async move {
        let server = Server::bind(cfg).await?;
        let local = server.local_addr()?;
        println!("listening on http://{local}");
        server
            .run(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
    .map_err(anyhow::Error::from)?;
    Ok(())
}

fn cmd_report(ctx: &Ctx, c: ReportCmd) -> Result<()> {
    let read_deltas = |p: &Path| -> Result<_> {
        let file = std::fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
        Ok(read_deltas_csv(file).with_context(|| format!("{}: malformed deltas", p.display()))?)
    };
    match c {
        ReportCmd::Bump { deltas, top_n, title_a, title_b, out } => {
            let d = read_deltas(&deltas)?;
            let svg = bump_chart(&d, top_n.unwrap_or(ctx.cfg.terms.top_n), (&title_a, &title_b));
            emit(out.as_deref(), svg.as_bytes())?;
            Ok(())
        }
        ReportCmd::Bars { deltas, mode, out } => {
            let mode: ChangeMode = match mode {
                Some(m) => m.parse().map_err(|e: hesitancy_core::Error| usage(e.to_string()))?,
                None => ctx.cfg.terms.mode()?,
            };
            let svg = change_bars(&read_deltas(&deltas)?, mode);
            emit(out.as_deref(), svg.as_bytes())?;
            Ok(())
        }
        ReportCmd::Tables(a) => cmd_tables(a, read_deltas),
    }
}

fn cmd_tables(a: TablesArgs, read_deltas: impl Fn(&Path) -> Result<Vec<hesitancy_core::terms::RankDelta>>) -> Result<()> {
    if a.annotations.is_none() && a.figures.is_none() && a.deltas.is_none() {
        return Err(usage("nothing to tabulate: give --annotations, --figures or --deltas"));
    }
    let write = |stem: &str, table: &Table| -> Result<()> {
        write_bytes(&a.out_dir.join(format!("{stem}.csv")), table.to_csv().as_bytes())?;
        write_bytes(&a.out_dir.join(format!("{stem}.txt")), table.to_text().as_bytes())?;
        Ok(())
    };
    if let (Some(log), Some(dataset)) = (&a.annotations, &a.dataset) {
        if !log.exists() {
            return Err(anyhow::anyhow!("annotation log {} does not exist", log.display()).into());
        }
        let store = AnnotationStore::open(log, LabelTaxonomy::bundled())?;
        write(&format!("prevalence_{dataset}"), &prevalence_table(&store.prevalence(dataset)))?;
    }
    if let Some(p) = &a.figures {
        let read = |p: &Path| -> Result<_> {
            let text = read_to_string(p)?;
            Ok(read_figure_reports_csv(text.as_bytes())?)
        };
        let first = read(p)?;
        let table = match &a.figures_b {
            Some(q) => comparative_figure_table(&first, &read(q)?),
            None => figure_table(&first),
        };
        write("figures", &table)?;
    }
    if let Some(p) = &a.deltas {
        write("deltas", &delta_table(&read_deltas(p)?))?;
    }
    Ok(())
}

fn cmd_fixture(ctx: &Ctx, a: FixtureArgs) -> Result<()> {
    if a.posts == 0 {
        return Err(usage("--posts must be at least 1"));
    }
    let cfg = SynthConfig {
        posts_per_corpus: a.posts,
        seed: ctx.seed_flag.unwrap_or(SynthConfig::default().seed),
    };
    let fx = generate(&cfg);
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    fx.before.write_jsonl(a.out_dir.join("before.jsonl"))?;
    fx.after.write_jsonl(a.out_dir.join("after.jsonl"))?;
    Ok(())
}
