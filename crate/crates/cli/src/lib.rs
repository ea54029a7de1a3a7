//! `forge` command-line driver.

pub mod server;

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use forge_core::bundle::{check_integrity, export_graph_bundle, read_bundle, write_bundle};
use forge_core::client::{ExternalClient, HttpClient, StubClient};
use forge_core::compress::compress;
use forge_core::fixture::{generate_fixture, FixtureConfig};
use forge_core::hierarchy::AbstractionTree;
use forge_core::ingest::{IngestInputs, TARGET_CORPUS};
use forge_core::mechanism::{CaptionMode, DynamicMechanismGraph, GateMode};
use forge_core::metrics::StructureMetricsRow;
use forge_core::pipeline::{
    stage_compress, stage_cooc, stage_filter, stage_hierarchy, stage_ingest, stage_mech,
    stage_metrics, stage_relate, LabelTarget, PipelineConfig,
};
use forge_core::service::{parse_id_list, GraphService};
use forge_core::workspace::{to_json_text, Workspace};
use forge_core::{Granularity, Site};

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Build, label and serve feature graphs"
)]
pub struct Cli {
    /// Pipeline configuration (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClientKind {
    Stub,
    Http,
}

#[derive(Debug, clap::Args)]
pub struct ClientArgs {
    /// Endpoint for the http client.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Per-request timeout in seconds for the http client.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate raw inputs and create a workspace.
    Ingest {
        /// `corpus.site=path`, or `site=path` for the target corpus. Repeatable.
        #[arg(long, required = true, num_args = 1..)]
        activations: Vec<String>,
        /// `name=path`, or a bare path for the target corpus. Repeatable.
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<String>,
        #[arg(long)]
        stack: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Workspace directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Gate, shortlist and adjudicate features into the retained universe.
    Filter {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "stub")]
        adjudicator: ClientKind,
        #[command(flatten)]
        client: ClientArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Co-occurrence graphs over the retained universe.
    Cooc {
        #[arg(long)]
        workspace: PathBuf,
        /// Build only this granularity (default: all).
        #[arg(long)]
        granularity: Option<Granularity>,
        /// Build only this site (default: both).
        #[arg(long)]
        site: Option<Site>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Written when exactly one graph is built.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Neighbor geometry, abstraction tree and node summaries.
    Hierarchy {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        pca: Option<usize>,
        #[arg(long, value_enum, default_value = "stub")]
        summarizer: ClientKind,
        #[command(flatten)]
        client: ClientArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Static mechanism and dynamic graphs for units.
    Mech {
        #[arg(long)]
        workspace: PathBuf,
        /// Sentence or paragraph id. Repeatable.
        #[arg(long, required = true, num_args = 1..)]
        unit: Vec<String>,
        #[arg(long)]
        caption_mode: Option<CaptionMode>,
        #[arg(long)]
        gate_mode: Option<GateMode>,
        #[arg(long, value_enum, default_value = "stub")]
        captioner: ClientKind,
        #[command(flatten)]
        client: ClientArgs,
        /// Written when exactly one unit is given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collapse a dynamic graph onto the abstraction tree.
    Compress {
        /// Dynamic payload file; with `--workspace`, a unit id instead.
        #[arg(long)]
        mech: String,
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        workspace: Option<PathBuf>,
        #[arg(long)]
        cap: Option<usize>,
        /// Comma-separated node ids kept expanded.
        #[arg(long)]
        exclude: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label every edge of a graph.
    Relate {
        /// Co-occurrence or dynamic mechanism graph file.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "stub")]
        relator: ClientKind,
        #[command(flatten)]
        client: ClientArgs,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structure metrics and the shared layout.
    Metrics {
        #[arg(long)]
        workspace: PathBuf,
        /// `all` or a comma-separated list of granularities.
        #[arg(long, default_value = "all")]
        levels: String,
        /// CSV output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export and validate a graph bundle.
    Export {
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a bundle over a read-only HTTP API.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Write the synthetic three-chapter fixture inputs.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn make_client(kind: ClientKind, args: &ClientArgs) -> anyhow::Result<Box<dyn ExternalClient>> {
    Ok(match kind {
        ClientKind::Stub => Box::new(StubClient),
        ClientKind::Http => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| anyhow!("--endpoint is required for the http client"))?;
            Box::new(HttpClient::new(
                endpoint,
                Duration::from_secs(args.timeout),
            )?)
        }
    })
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_out<T: serde::Serialize>(out: Option<&PathBuf>, value: &T) -> anyhow::Result<()> {
    if let Some(p) = out {
        write_text(p, &to_json_text(value)?)?;
    }
    Ok(())
}

/// `corpus.site=path` or `site=path`.
pub fn parse_activation_arg(arg: &str) -> anyhow::Result<(String, String, PathBuf)> {
    let (key, path) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("activation '{arg}' is not key=path"))?;
    let (corpus, site) = key.rsplit_once('.').unwrap_or((TARGET_CORPUS, key));
    if corpus.is_empty() || site.is_empty() {
        bail!("activation '{arg}' has an empty corpus or site");
    }
    Ok((corpus.to_string(), site.to_string(), PathBuf::from(path)))
}

/// `name=path` or a bare path for the target corpus.
pub fn parse_corpus_arg(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => (TARGET_CORPUS.to_string(), PathBuf::from(arg)),
    }
}

pub fn parse_levels(text: &str) -> anyhow::Result<Vec<Granularity>> {
    if text == "all" {
        return Ok(Granularity::ALL.to_vec());
    }
    text.split(',')
        .map(|s| s.trim().parse::<Granularity>().map_err(Into::into))
        .collect()
}

pub fn write_metrics_csv(rows: &[StructureMetricsRow], path: &Path) -> anyhow::Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest {
            activations,
            corpus,
            stack,
            catalog,
            out,
        } => {
            let inputs = IngestInputs {
                activations: activations
                    .iter()
                    .map(|a| parse_activation_arg(a))
                    .collect::<anyhow::Result<_>>()?,
                corpora: corpus.iter().map(|c| parse_corpus_arg(c)).collect(),
                stack_dir: stack,
                catalog,
            };
            let ws = Workspace::create(&out)?;
            let manifest = stage_ingest(&ws, &inputs)?;
            println!("{}", to_json_text(&manifest)?.trim_end());
        }
        Command::Filter {
            workspace,
            adjudicator,
            client,
            out,
        } => {
            let ws = Workspace::open(&workspace)?;
            let client = make_client(adjudicator, &client)?;
            let universe = stage_filter(&ws, &config.filter, client.as_ref())?;
            println!(
                "retained {} features: {:?}",
                universe.features.len(),
                universe.funnel
            );
            write_out(out.as_ref(), &universe)?;
        }
        Command::Cooc {
            workspace,
            granularity,
            site,
            top_k,
            out,
        } => {
            let ws = Workspace::open(&workspace)?;
            if let Some(g) = granularity {
                config.cooc.granularities = vec![g];
            }
            if let Some(s) = site {
                config.cooc.sites = vec![s];
            }
            if let Some(k) = top_k {
                config.cooc.top_k = k;
            }
            let graphs = stage_cooc(&ws, &config.cooc)?;
            for (key, g) in &graphs {
                println!("{key}: {} nodes, {} edges", g.nodes.len(), g.edges.len());
            }
            if let Some(p) = out.as_ref() {
                match graphs.as_slice() {
                    [(_, g)] => write_text(p, &to_json_text(g)?)?,
                    _ => bail!("--out needs exactly one graph; pass --granularity and --site"),
                }
            }
        }
        Command::Hierarchy {
            workspace,
            k,
            pca,
            summarizer,
            client,
            out,
        } => {
            let ws = Workspace::open(&workspace)?;
            if let Some(k) = k {
                config.hierarchy.k = k;
            }
            if let Some(p) = pca {
                config.hierarchy.pca_dim = p;
            }
            let client = make_client(summarizer, &client)?;
            let tree = stage_hierarchy(&ws, &config.hierarchy, client.as_ref())?;
            println!(
                "tree: {} nodes, {} leaves",
                tree.nodes.len(),
                tree.nodes.iter().filter(|n| n.is_leaf()).count()
            );
            write_out(out.as_ref(), &tree)?;
        }
        Command::Mech {
            workspace,
            unit,
            caption_mode,
            gate_mode,
            captioner,
            client,
            out,
        } => {
            let ws = Workspace::open(&workspace)?;
            if let Some(m) = caption_mode {
                config.mechanism.caption_mode = m;
            }
            if let Some(m) = gate_mode {
                config.mechanism.dynamic.gate_mode = m;
            }
            let client = make_client(captioner, &client)?;
            let graphs = stage_mech(&ws, &unit, &config.mechanism, client.as_ref())?;
            for g in &graphs {
                println!(
                    "{}: {} edges ({} before cap)",
                    g.unit,
                    g.edges.len(),
                    g.total_edges
                );
            }
            if let Some(p) = out.as_ref() {
                match graphs.as_slice() {
                    [g] => write_text(p, &to_json_text(g)?)?,
                    _ => bail!("--out needs exactly one --unit"),
                }
            }
        }
        Command::Compress {
            mech,
            tree,
            workspace,
            cap,
            exclude,
            out,
        } => {
            if let Some(c) = cap {
                config.compress.cap = c;
            }
            if let Some(e) = exclude {
                config.compress.exclude = parse_id_list(&e)?.into_iter().collect();
            }
            let g = match (workspace, tree) {
                (Some(ws), None) => {
                    stage_compress(&Workspace::open(&ws)?, &mech, &config.compress)?
                }
                (None, Some(tree)) => {
                    let payload: DynamicMechanismGraph = read_json_file(Path::new(&mech))?;
                    let tree: AbstractionTree = read_json_file(&tree)?;
                    compress(&payload, &tree, &config.compress)?
                }
                _ => bail!(
                    "pass either --workspace (with a unit id) or --tree (with a payload file)"
                ),
            };
            println!(
                "{}: {} display nodes, {} superedges",
                g.unit,
                g.nodes.len(),
                g.edges.len()
            );
            write_out(out.as_ref(), &g)?;
        }
        Command::Relate {
            graph,
            workspace,
            relator,
            client,
            budget,
            out,
        } => {
            let ws = Workspace::open(&workspace)?;
            if budget.is_some() {
                config.relate.budget = budget;
            }
            let text = std::fs::read_to_string(&graph)
                .with_context(|| format!("reading {}", graph.display()))?;
            let target = LabelTarget::from_json(&text)?;
            let client = make_client(relator, &client)?;
            let labels = stage_relate(
                &ws,
                &target,
                &config.mechanism,
                &config.relate,
                client.as_ref(),
            )?;
            println!("{}: {} labels", target.key(), labels.labels.len());
            write_out(out.as_ref(), &labels)?;
        }
        Command::Metrics {
            workspace,
            levels,
            out,
        } => {
            let ws = Workspace::open(&workspace)?;
            config.metrics.levels = parse_levels(&levels)?;
            let (report, _) = stage_metrics(&ws, &config.metrics)?;
            if let Some(p) = out.as_ref() {
                write_metrics_csv(&report.rows, p)?;
            } else {
                println!("{}", to_json_text(&report)?.trim_end());
            }
        }
        Command::Export { workspace, out } => {
            let ws = Workspace::open(&workspace)?;
            let bundle = export_graph_bundle(&ws)?;
            let report = check_integrity(&bundle)?;
            write_bundle(&bundle, &out)?;
            println!(
                "bundle written to {}; {} references checked",
                out.display(),
                report.references_checked
            );
        }
        Command::Serve { bundle, port } => {
            let service = GraphService::new(read_bundle(&bundle)?)?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(service, port))?;
        }
        Command::Fixture { out, seed } => {
            let fx = generate_fixture(&FixtureConfig {
                seed,
                ..Default::default()
            })?;
            let paths = fx.write(&out)?;
            write_text(&out.join("units.txt"), &(paths.units.join("\n") + "\n"))?;
            println!(
                "fixture written to {}; units: {}",
                out.display(),
                paths.units.join(" ")
            );
        }
    }
    Ok(())
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
