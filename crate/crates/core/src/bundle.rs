//! Self-contained graph bundle: export from a workspace and integrity checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cooc::CoocGraph;
use crate::error::{Error, Result};
use crate::filter::RetainedUniverse;
use crate::hierarchy::AbstractionTree;
use crate::ids::FeatureId;
use crate::ingest::{CorpusStructure, IngestManifest};
use crate::mechanism::{DynamicMechanismGraph, MechanismConfig};
use crate::metrics::{MetricsReport, SharedLayout};
use crate::pipeline::{MechInputs, StaticFile};
use crate::relate::{EdgeKind, LabeledEdges};
use crate::util::sha256_hex;
use crate::workspace::{files, Stage, Workspace};

pub const BUNDLE_FORMAT: &str = "forge-bundle";
pub const BUNDLE_VERSION: u32 = 1;

pub const REQUIRED_STAGES: [Stage; 6] = [
    Stage::Ingest,
    Stage::Filter,
    Stage::Cooc,
    Stage::Hierarchy,
    Stage::Mech,
    Stage::Metrics,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub format_version: u32,
    pub corpus_hash: String,
    pub config_hashes: BTreeMap<Stage, String>,
    pub stage_versions: BTreeMap<Stage, String>,
    /// sha256 of each section's compact JSON.
    pub section_hashes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBundle {
    pub manifest: BundleManifest,
    pub universe: RetainedUniverse,
    pub descriptions: BTreeMap<FeatureId, String>,
    /// Keyed `<site>.<granularity>`.
    pub graphs: BTreeMap<String, CoocGraph>,
    pub tree: AbstractionTree,
    /// Keyed by graph key (`<site>.<granularity>` or `mech.<unit>`).
    pub labels: BTreeMap<String, LabeledEdges>,
    /// Precomputed dynamic payloads, keyed by unit id.
    pub mech_payloads: BTreeMap<String, DynamicMechanismGraph>,
    pub mech_config: MechanismConfig,
    pub mech_inputs: MechInputs,
    pub layout: SharedLayout,
    pub metrics: MetricsReport,
}

fn section_hashes(b: &GraphBundle) -> Result<BTreeMap<String, String>> {
    let h = |v: serde_json::Result<String>| v.map(|s| sha256_hex(s.as_bytes()));
    Ok(BTreeMap::from([
        (
            "universe".to_string(),
            h(serde_json::to_string(&b.universe))?,
        ),
        (
            "descriptions".to_string(),
            h(serde_json::to_string(&b.descriptions))?,
        ),
        ("graphs".to_string(), h(serde_json::to_string(&b.graphs))?),
        ("tree".to_string(), h(serde_json::to_string(&b.tree))?),
        ("labels".to_string(), h(serde_json::to_string(&b.labels))?),
        (
            "mech_payloads".to_string(),
            h(serde_json::to_string(&b.mech_payloads))?,
        ),
        (
            "mech_config".to_string(),
            h(serde_json::to_string(&b.mech_config))?,
        ),
        (
            "mech_inputs".to_string(),
            h(serde_json::to_string(&b.mech_inputs))?,
        ),
        ("layout".to_string(), h(serde_json::to_string(&b.layout))?),
        ("metrics".to_string(), h(serde_json::to_string(&b.metrics))?),
    ]))
}

fn stem(path: &str) -> String {
    Path::new(path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Collects every stage output into one bundle; fails listing absent stages.
pub fn export_graph_bundle(ws: &Workspace) -> Result<GraphBundle> {
    ws.require(&REQUIRED_STAGES)?;
    let log = ws.log()?;
    let data = ws.ingested()?;
    let manifest: IngestManifest = ws.read_json(files::INGEST)?;
    let universe: RetainedUniverse = ws.read_json(files::UNIVERSE)?;
    let mech_config: MechanismConfig = ws.read_json(files::MECH_CONFIG)?;
    let statics: StaticFile = ws.read_json(files::STATIC_MECH)?;
    let thresholds = ws.read_json(files::THRESHOLDS)?;
    let mech_inputs = MechInputs::new(
        &data,
        statics.mechanism,
        &universe.features,
        thresholds,
        mech_config.dynamic.restrict_to_universe,
    )?;

    let mut graphs = BTreeMap::new();
    for f in ws.list("cooc")? {
        graphs.insert(stem(&f), ws.read_json(&f)?);
    }
    let mut labels = BTreeMap::new();
    for f in ws.list(files::LABELS_DIR)? {
        let l: LabeledEdges = ws.read_json(&f)?;
        let key = match (&l.graph_kind, &l.unit) {
            (EdgeKind::Mech, Some(u)) => format!("mech.{u}"),
            _ => stem(&f),
        };
        labels.insert(key, l);
    }
    let mut mech_payloads = BTreeMap::new();
    for f in ws.list(files::MECH_DIR)? {
        let g: DynamicMechanismGraph = ws.read_json(&f)?;
        mech_payloads.insert(g.unit.clone(), g);
    }
    let descriptions = universe
        .features
        .iter()
        .map(|&f| (f, data.catalog.description(f).to_string()))
        .collect();

    let mut bundle = GraphBundle {
        manifest: BundleManifest {
            format: BUNDLE_FORMAT.into(),
            format_version: BUNDLE_VERSION,
            corpus_hash: manifest.corpus_hash,
            config_hashes: log
                .stages
                .iter()
                .map(|(s, r)| (*s, r.config_hash.clone()))
                .collect(),
            stage_versions: log
                .stages
                .iter()
                .map(|(s, r)| (*s, r.version.clone()))
                .collect(),
            section_hashes: BTreeMap::new(),
        },
        universe,
        descriptions,
        graphs,
        tree: ws.read_json(files::TREE)?,
        labels,
        mech_payloads,
        mech_config,
        mech_inputs,
        layout: ws.read_json(files::LAYOUT)?,
        metrics: ws.read_json(files::METRICS)?,
    };
    bundle.manifest.section_hashes = section_hashes(&bundle)?;
    check_integrity(&bundle)?;
    Ok(bundle)
}

pub fn write_bundle(bundle: &GraphBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(bundle)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<GraphBundle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bundle: GraphBundle = serde_json::from_str(&text)?;
    check_integrity(&bundle)?;
    Ok(bundle)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub references_checked: usize,
}

struct Checker<'a> {
    universe: BTreeSet<FeatureId>,
    corpus: &'a CorpusStructure,
    problems: Vec<String>,
    checked: usize,
}

impl Checker<'_> {
    fn feature(&mut self, f: FeatureId, ctx: &str) {
        self.checked += 1;
        if !self.universe.contains(&f) {
            self.problems
                .push(format!("{ctx}: feature {f} not in universe"));
        }
    }

    fn sentence(&mut self, id: &str, ctx: &str) {
        self.checked += 1;
        if self.corpus.find_unit(id).is_none() {
            self.problems
                .push(format!("{ctx}: sentence {id} does not resolve"));
        }
    }

    fn holds(&mut self, ok: bool, problem: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.problems.push(problem());
        }
    }
}

/// Verifies that every feature, node, unit and sentence reference resolves
/// inside the bundle and that section hashes match.
pub fn check_integrity(b: &GraphBundle) -> Result<IntegrityReport> {
    let corpus = CorpusStructure::from_document(b.mech_inputs.corpus.clone())?;
    let mut c = Checker {
        universe: b.universe.features.iter().copied().collect(),
        corpus: &corpus,
        problems: vec![],
        checked: 0,
    };

    let expected = section_hashes(b)?;
    c.holds(expected == b.manifest.section_hashes, || {
        "section hashes do not match the manifest".into()
    });
    c.holds(b.universe.features.windows(2).all(|w| w[0] < w[1]), || {
        "universe is not sorted and unique".into()
    });
    c.holds(b.mech_inputs.universe == b.universe.features, || {
        "mechanism inputs use a different universe".into()
    });
    let described: BTreeSet<FeatureId> = b.descriptions.keys().copied().collect();
    c.holds(described == c.universe, || {
        "descriptions do not cover the universe".into()
    });

    for (key, g) in &b.graphs {
        let nodes: BTreeSet<FeatureId> = g.nodes.iter().map(|n| n.id).collect();
        for &n in &nodes {
            c.feature(n, &format!("graph {key}"));
        }
        for e in &g.edges {
            c.holds(
                nodes.contains(&e.source) && nodes.contains(&e.target),
                || {
                    format!(
                        "graph {key}: edge {}-{} has an endpoint outside the node list",
                        e.source, e.target
                    )
                },
            );
            c.holds(e.source < e.target, || {
                format!(
                    "graph {key}: edge {}-{} not stored once",
                    e.source, e.target
                )
            });
        }
    }

    if let Err(e) = b.tree.validate(&b.universe.features) {
        c.problems.push(format!("tree: {e}"));
    }
    let n_nodes = b.tree.nodes.len();
    for node in &b.tree.nodes {
        for &child in &node.children {
            c.holds(
                child < n_nodes && b.tree.nodes[child].parent == Some(node.id),
                || format!("tree: node {} lists bad child {child}", node.id),
            );
        }
    }
    let leaves = b.tree.leaf_nodes();

    for (unit, g) in &b.mech_payloads {
        c.holds(corpus.find_unit(unit).is_some() && g.unit == *unit, || {
            format!("mech payload {unit} does not resolve")
        });
        for e in &g.edges {
            for f in [e.source, e.target] {
                if g.restricted {
                    c.feature(f, &format!("mech {unit}"));
                }
                c.holds(!g.restricted || leaves.contains_key(&f), || {
                    format!("mech {unit}: {f} is not a tree leaf")
                });
            }
        }
    }

    for (key, l) in &b.labels {
        let resolves = match (&l.graph_kind, &l.unit) {
            (EdgeKind::Mech, Some(u)) => b.mech_payloads.contains_key(u),
            _ => b.graphs.contains_key(key),
        };
        c.holds(resolves, || format!("labels {key}: graph does not exist"));
        let packet_ids: BTreeSet<&str> = l.packets.iter().map(|p| p.id.as_str()).collect();
        c.holds(l.labels.len() == l.packets.len(), || {
            format!("labels {key}: one label per packet expected")
        });
        for label in &l.labels {
            c.holds(packet_ids.contains(label.packet_id.as_str()), || {
                format!("labels {key}: packet {} missing", label.packet_id)
            });
        }
        for p in &l.packets {
            c.feature(p.source, &format!("labels {key}"));
            c.feature(p.target, &format!("labels {key}"));
            for line in p.joint.iter().chain(&p.source_only).chain(&p.target_only) {
                c.sentence(&line.sentence_id, &format!("labels {key}"));
            }
        }
    }

    for n in &b.layout.nodes {
        c.feature(n.id, "layout");
    }
    for w in &b.layout.chapter_weights {
        c.holds(corpus.find_unit(&w.chapter).is_some(), || {
            format!("layout: chapter {} does not resolve", w.chapter)
        });
        c.holds(w.weights.len() == b.layout.nodes.len(), || {
            format!("layout: chapter {} weights misaligned", w.chapter)
        });
    }

    if c.problems.is_empty() {
        Ok(IntegrityReport {
            references_checked: c.checked,
        })
    } else {
        let shown: Vec<String> = c.problems.iter().take(10).cloned().collect();
        Err(Error::Integrity(format!(
            "{} problem(s): {}",
            c.problems.len(),
            shown.join("; ")
        )))
    }
}
