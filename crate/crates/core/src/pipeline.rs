//! Stage drivers that read and write a [`Workspace`].

use serde::{Deserialize, Serialize};

use crate::client::ExternalClient;
use crate::compress::{compress, CompressConfig, CompressedGraph};
use crate::cooc::{build_cooc_graph, CoocGraph, DEFAULT_TOP_K};
use crate::error::{Error, Result};
use crate::filter::{run_filter, RetainedUniverse, ShortlistConfig};
use crate::hierarchy::{
    build_neighbor_geometry, grow_abstraction_tree, summarize_tree, AbstractionTree,
    HierarchyConfig, TreeShape,
};
use crate::ids::{FeatureId, Granularity, Site};
use crate::ingest::{
    ingest, write_ingested, CorpusDocument, CorpusStructure, IngestInputs, IngestManifest,
    Ingested, TokenActivationStore, LATENT_SITE,
};
use crate::mechanism::{
    build_dynamic_graph, build_static_mechanism, DynamicConfig, DynamicMechanismGraph, MechStores,
    MechanismConfig, StaticMechanism,
};
use crate::metrics::{
    compute_shared_layout, compute_structure_metrics, MetricsConfig, MetricsReport, SharedLayout,
};
use crate::presence::{
    calibrate_from_scores, lift_presence, presence_from_scores, PresenceMatrix, SentenceScores,
    ThresholdVector,
};
use crate::relate::{
    build_cooc_packet, build_mech_packet, label_packets, EdgeKind, LabeledEdges, RelateConfig,
    SentenceEvidence,
};
use crate::workspace::{
    compress_file, config_hash, cooc_file, files, graph_key, labels_file, mech_file, Stage,
    Workspace,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoocConfig {
    pub top_k: usize,
    pub sites: Vec<Site>,
    pub granularities: Vec<Granularity>,
}

impl Default for CoocConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            sites: Site::ALL.to_vec(),
            granularities: Granularity::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsStageConfig {
    pub site: Site,
    pub levels: Vec<Granularity>,
    #[serde(flatten)]
    pub metrics: MetricsConfig,
}

impl Default for MetricsStageConfig {
    fn default() -> Self {
        Self {
            site: Site::Src,
            levels: Granularity::ALL.to_vec(),
            metrics: MetricsConfig::default(),
        }
    }
}

/// Every stage's configuration; loadable from TOML or JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filter: ShortlistConfig,
    pub cooc: CoocConfig,
    pub hierarchy: HierarchyConfig,
    pub mechanism: MechanismConfig,
    pub compress: CompressConfig,
    pub relate: RelateConfig,
    pub metrics: MetricsStageConfig,
}

pub fn site_scores(data: &Ingested, site: Site) -> Result<SentenceScores> {
    SentenceScores::compute(data.target.store(site)?, &data.target.corpus)
}

/// Sentence presence of the thresholded features of one site; empty columns
/// when none of the site's features were retained.
pub fn site_presence(
    scores: &SentenceScores,
    thresholds: &ThresholdVector,
    corpus: &CorpusStructure,
) -> PresenceMatrix {
    if thresholds.features(scores.site).next().is_none() {
        return PresenceMatrix {
            granularity: Granularity::Sentence,
            features: vec![],
            rows: vec![vec![]; corpus.num_sentences()],
        };
    }
    presence_from_scores(scores, thresholds)
}

pub fn stage_ingest(ws: &Workspace, inputs: &IngestInputs) -> Result<IngestManifest> {
    let data = ingest(inputs)?;
    let manifest = write_ingested(&data, &ws.path(files::DATA_DIR))?;
    ws.write_json(files::INGEST, &manifest)?;
    ws.record(Stage::Ingest, &manifest)?;
    Ok(manifest)
}

/// Runs the filter, then calibrates thresholds for the retained features.
pub fn stage_filter(
    ws: &Workspace,
    config: &ShortlistConfig,
    client: &dyn ExternalClient,
) -> Result<RetainedUniverse> {
    let data = ws.ingested()?;
    let universe = run_filter(&data, config, client)?;
    let mut thresholds = ThresholdVector {
        config: config.calibration,
        ..Default::default()
    };
    for site in Site::ALL {
        let members = universe.site_features(site);
        if !members.is_empty() {
            thresholds.merge(calibrate_from_scores(
                &site_scores(&data, site)?,
                &members,
                &config.calibration,
            )?);
        }
    }
    ws.write_json(files::UNIVERSE, &universe)?;
    ws.write_json(files::THRESHOLDS, &thresholds)?;
    ws.record(Stage::Filter, config)?;
    Ok(universe)
}

pub fn stage_cooc(ws: &Workspace, config: &CoocConfig) -> Result<Vec<(String, CoocGraph)>> {
    ws.require(&[Stage::Filter])?;
    let data = ws.ingested()?;
    let thresholds: ThresholdVector = ws.read_json(files::THRESHOLDS)?;
    let mut out = Vec::new();
    for &site in &config.sites {
        let sentence = site_presence(&site_scores(&data, site)?, &thresholds, &data.target.corpus);
        for &g in &config.granularities {
            let graph = build_cooc_graph(
                &lift_presence(&sentence, &data.target.corpus, g),
                config.top_k,
            )?;
            ws.write_json(&cooc_file(site, g), &graph)?;
            out.push((graph_key(site, g), graph));
        }
    }
    ws.record(Stage::Cooc, config)?;
    Ok(out)
}

pub fn stage_hierarchy(
    ws: &Workspace,
    config: &HierarchyConfig,
    client: &dyn ExternalClient,
) -> Result<AbstractionTree> {
    ws.require(&[Stage::Filter])?;
    let data = ws.ingested()?;
    let universe: RetainedUniverse = ws.read_json(files::UNIVERSE)?;
    let tree = if universe.features.is_empty() {
        AbstractionTree::from_shape(&TreeShape::Group(vec![]))
    } else {
        let geometry =
            build_neighbor_geometry(&data.catalog, &universe.features, config.pca_dim, config.k)?;
        let mut tree = grow_abstraction_tree(&geometry, &config.tree);
        summarize_tree(
            &mut tree,
            &geometry,
            &data.catalog,
            client,
            config.max_in_flight,
        )?;
        tree.validate(&universe.features)?;
        ws.write_json(files::GEOMETRY, &geometry)?;
        tree
    };
    ws.write_json(files::TREE, &tree)?;
    ws.record(Stage::Hierarchy, config)?;
    Ok(tree)
}

/// Everything needed to compute a dynamic mechanism graph for any target unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechInputs {
    pub corpus: CorpusDocument,
    pub src: TokenActivationStore,
    pub tgt: TokenActivationStore,
    pub latent: TokenActivationStore,
    pub statics: StaticMechanism,
    /// Sorted.
    pub universe: Vec<FeatureId>,
    pub thresholds: ThresholdVector,
}

fn restrict(
    store: &TokenActivationStore,
    keep: &[FeatureId],
    site: Site,
) -> Result<TokenActivationStore> {
    let entries = store
        .entries()
        .iter()
        .filter(|e| keep.binary_search(&FeatureId::new(site, e.feature)).is_ok())
        .copied()
        .collect();
    TokenActivationStore::new(
        store.site_id(),
        store.num_tokens(),
        store.num_features(),
        entries,
        store.special_token_mask().to_vec(),
    )
}

impl MechInputs {
    /// With `restrict_stores`, src/tgt activations outside the universe are
    /// dropped; graphs are unchanged as long as gating restricts to the universe.
    pub fn new(
        data: &Ingested,
        statics: StaticMechanism,
        universe: &[FeatureId],
        thresholds: ThresholdVector,
        restrict_stores: bool,
    ) -> Result<Self> {
        let src = data.target.store(Site::Src)?;
        let tgt = data.target.store(Site::Tgt)?;
        let (src, tgt) = if restrict_stores {
            (
                restrict(src, universe, Site::Src)?,
                restrict(tgt, universe, Site::Tgt)?,
            )
        } else {
            (src.clone(), tgt.clone())
        };
        Ok(Self {
            corpus: data.target.corpus.document().clone(),
            src,
            tgt,
            latent: data.target.site(LATENT_SITE)?.clone(),
            statics,
            universe: universe.to_vec(),
            thresholds,
        })
    }

    pub fn corpus_structure(&self) -> Result<CorpusStructure> {
        CorpusStructure::from_document(self.corpus.clone())
    }
}

#[derive(Clone, Copy)]
pub struct MechContext<'a> {
    pub inputs: &'a MechInputs,
    pub corpus: &'a CorpusStructure,
}

impl MechContext<'_> {
    pub fn stores(&self) -> MechStores<'_> {
        MechStores {
            src: &self.inputs.src,
            tgt: &self.inputs.tgt,
            latent: &self.inputs.latent,
        }
    }

    /// Dynamic graph with strongest-latent captions attached.
    pub fn dynamic(&self, unit: &str, config: &DynamicConfig) -> Result<DynamicMechanismGraph> {
        let mut g = build_dynamic_graph(
            unit,
            self.stores(),
            self.corpus,
            &self.inputs.statics.supports,
            Some(&self.inputs.universe),
            Some(&self.inputs.thresholds),
            config,
        )?;
        self.inputs.statics.attach_captions(&mut g);
        Ok(g)
    }

    pub fn compressed(
        &self,
        unit: &str,
        dynamic: &DynamicConfig,
        tree: &AbstractionTree,
        config: &CompressConfig,
    ) -> Result<CompressedGraph> {
        compress(&self.dynamic(unit, dynamic)?, tree, config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFile {
    pub config_hash: String,
    pub mechanism: StaticMechanism,
}

fn static_key(config: &MechanismConfig) -> Result<String> {
    config_hash(&(
        config.drop_tol,
        config.prior_floor,
        config.caption_mode,
        config.support_cap,
    ))
}

/// Loads the workspace's static mechanism, recomputing it when the caption or
/// support settings changed.
pub fn static_mechanism(
    ws: &Workspace,
    data: &Ingested,
    config: &MechanismConfig,
    client: &dyn ExternalClient,
) -> Result<StaticMechanism> {
    let key = static_key(config)?;
    if ws.exists(files::STATIC_MECH) {
        let cached: StaticFile = ws.read_json(files::STATIC_MECH)?;
        if cached.config_hash == key {
            return Ok(cached.mechanism);
        }
    }
    let mechanism = build_static_mechanism(&data.stack, &data.catalog, config, client)?;
    ws.write_json(
        files::STATIC_MECH,
        &StaticFile {
            config_hash: key,
            mechanism: mechanism.clone(),
        },
    )?;
    Ok(mechanism)
}

pub fn mech_inputs(
    ws: &Workspace,
    config: &MechanismConfig,
    client: &dyn ExternalClient,
    restrict_stores: bool,
) -> Result<MechInputs> {
    ws.require(&[Stage::Filter])?;
    let data = ws.ingested()?;
    let universe: RetainedUniverse = ws.read_json(files::UNIVERSE)?;
    let thresholds: ThresholdVector = ws.read_json(files::THRESHOLDS)?;
    let statics = static_mechanism(ws, &data, config, client)?;
    MechInputs::new(
        &data,
        statics,
        &universe.features,
        thresholds,
        restrict_stores,
    )
}

pub fn stage_mech(
    ws: &Workspace,
    units: &[String],
    config: &MechanismConfig,
    client: &dyn ExternalClient,
) -> Result<Vec<DynamicMechanismGraph>> {
    let inputs = mech_inputs(ws, config, client, false)?;
    ws.write_json(files::MECH_CONFIG, config)?;
    let corpus = inputs.corpus_structure()?;
    let ctx = MechContext {
        inputs: &inputs,
        corpus: &corpus,
    };
    let graphs = units
        .iter()
        .map(|u| {
            let g = ctx.dynamic(u, &config.dynamic)?;
            ws.write_json(&mech_file(u), &g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    ws.record(Stage::Mech, config)?;
    Ok(graphs)
}

pub fn stage_compress(
    ws: &Workspace,
    unit: &str,
    config: &CompressConfig,
) -> Result<CompressedGraph> {
    ws.require(&[Stage::Hierarchy, Stage::Mech])?;
    let payload: DynamicMechanismGraph = ws.read_json(&mech_file(unit))?;
    let tree: AbstractionTree = ws.read_json(files::TREE)?;
    let g = compress(&payload, &tree, config)?;
    ws.write_json(&compress_file(unit), &g)?;
    ws.record(Stage::Compress, config)?;
    Ok(g)
}

/// A graph that can be labeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelTarget {
    Cooc(CoocGraph),
    Mech(DynamicMechanismGraph),
}

impl LabelTarget {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        match v["kind"].as_str() {
            Some("cooc") => Ok(Self::Cooc(serde_json::from_value(v)?)),
            Some("mechanism") => Ok(Self::Mech(serde_json::from_value(v)?)),
            other => Err(Error::Schema(format!(
                "cannot label a graph of kind {other:?}"
            ))),
        }
    }

    pub fn key(&self) -> String {
        match self {
            Self::Cooc(g) => graph_key(g.site.unwrap_or(Site::Src), g.granularity),
            Self::Mech(g) => format!("mech.{}", g.unit),
        }
    }
}

/// Labels every edge of a co-occurrence or mechanism graph against the workspace data.
pub fn relate_graph(
    ws: &Workspace,
    target: &LabelTarget,
    mech_config: &MechanismConfig,
    config: &RelateConfig,
    client: &dyn ExternalClient,
) -> Result<LabeledEdges> {
    ws.require(&[Stage::Filter])?;
    let data = ws.ingested()?;
    let thresholds: ThresholdVector = ws.read_json(files::THRESHOLDS)?;
    let src = site_scores(&data, Site::Src)?;
    let tgt = site_scores(&data, Site::Tgt)?;
    let ev = SentenceEvidence {
        corpus: &data.target.corpus,
        catalog: &data.catalog,
        thresholds: &thresholds,
        src: &src,
        tgt: &tgt,
    };
    match target {
        LabelTarget::Cooc(g) => {
            let packets = g
                .edges
                .iter()
                .map(|e| build_cooc_packet(e, &ev, config.limits))
                .collect();
            label_packets(packets, EdgeKind::Cooc, None, client, config)
        }
        LabelTarget::Mech(g) => {
            // The mech stage's recorded configuration wins so labeling reuses its captions.
            let recorded: MechanismConfig;
            let mech_config = if ws.exists(files::MECH_CONFIG) {
                recorded = ws.read_json(files::MECH_CONFIG)?;
                &recorded
            } else {
                mech_config
            };
            let inputs = mech_inputs(ws, mech_config, client, false)?;
            let corpus = &data.target.corpus;
            let ctx = MechContext {
                inputs: &inputs,
                corpus,
            };
            let (gran, idx) = corpus
                .find_unit(&g.unit)
                .ok_or_else(|| Error::NotFound(format!("unit '{}'", g.unit)))?;
            // Scope: every sentence of the chapter enclosing the unit.
            let first = corpus.unit_sentences(gran, idx)[0];
            let chapter = corpus.sentence_unit(first, Granularity::Chapter);
            let per_sentence = DynamicConfig {
                edge_cap: None,
                ..mech_config.dynamic.clone()
            };
            let scope = corpus
                .unit_sentences(Granularity::Chapter, chapter)
                .into_iter()
                .map(|s| Ok((s, ctx.dynamic(&corpus.sentence(s).id, &per_sentence)?)))
                .collect::<Result<Vec<_>>>()?;
            let packets = g
                .edges
                .iter()
                .map(|e| {
                    build_mech_packet(
                        &g.unit,
                        e,
                        &scope,
                        &ev,
                        e.strongest_caption.clone(),
                        config.limits,
                    )
                })
                .collect();
            label_packets(
                packets,
                EdgeKind::Mech,
                Some(g.unit.clone()),
                client,
                config,
            )
        }
    }
}

pub fn stage_relate(
    ws: &Workspace,
    target: &LabelTarget,
    mech_config: &MechanismConfig,
    config: &RelateConfig,
    client: &dyn ExternalClient,
) -> Result<LabeledEdges> {
    let labels = relate_graph(ws, target, mech_config, config, client)?;
    ws.write_json(&labels_file(&target.key()), &labels)?;
    ws.record(Stage::Relate, config)?;
    Ok(labels)
}

pub fn stage_metrics(
    ws: &Workspace,
    config: &MetricsStageConfig,
) -> Result<(MetricsReport, SharedLayout)> {
    ws.require(&[Stage::Cooc])?;
    let data = ws.ingested()?;
    let thresholds: ThresholdVector = ws.read_json(files::THRESHOLDS)?;
    let corpus = &data.target.corpus;
    let scores = site_scores(&data, config.site)?;
    let presence = site_presence(&scores, &thresholds, corpus);
    let mut rows = Vec::new();
    let mut shared = None;
    for &g in &config.levels {
        let graph: CoocGraph = ws.read_json(&cooc_file(config.site, g))?;
        let layout = compute_shared_layout(&graph, &presence, &scores, corpus, &config.metrics)?;
        rows.push(compute_structure_metrics(
            &graph,
            &presence,
            corpus,
            &layout,
            &config.metrics,
        )?);
        if g == Granularity::Sentence {
            shared = Some(layout);
        }
    }
    let layout = match shared {
        Some(l) => l,
        None => {
            let graph: CoocGraph = ws.read_json(&cooc_file(config.site, Granularity::Sentence))?;
            compute_shared_layout(&graph, &presence, &scores, corpus, &config.metrics)?
        }
    };
    let report = MetricsReport::new(rows, &config.metrics);
    ws.write_json(files::METRICS, &report)?;
    ws.write_json(files::LAYOUT, &layout)?;
    ws.record(Stage::Metrics, config)?;
    Ok((report, layout))
}

/// Ingest through metrics, labeling the sentence-level graph of each configured
/// site and every mechanism unit.
pub fn run_pipeline(
    ws: &Workspace,
    inputs: &IngestInputs,
    units: &[String],
    config: &PipelineConfig,
    client: &dyn ExternalClient,
) -> Result<()> {
    stage_ingest(ws, inputs)?;
    stage_filter(ws, &config.filter, client)?;
    let graphs = stage_cooc(ws, &config.cooc)?;
    stage_hierarchy(ws, &config.hierarchy, client)?;
    let payloads = stage_mech(ws, units, &config.mechanism, client)?;
    for u in units {
        stage_compress(ws, u, &config.compress)?;
    }
    for (_, g) in graphs
        .into_iter()
        .filter(|(_, g)| g.granularity == Granularity::Sentence)
    {
        stage_relate(
            ws,
            &LabelTarget::Cooc(g),
            &config.mechanism,
            &config.relate,
            client,
        )?;
    }
    for p in payloads {
        stage_relate(
            ws,
            &LabelTarget::Mech(p),
            &config.mechanism,
            &config.relate,
            client,
        )?;
    }
    stage_metrics(ws, &config.metrics)?;
    Ok(())
}
