//! Shared setup for the benchmarks: the synthetic fixture run through the pipeline once.

use forge_core::client::StubClient;
use forge_core::filter::RetainedUniverse;
use forge_core::fixture::{generate_fixture, Fixture, FixtureConfig};
use forge_core::hierarchy::AbstractionTree;
use forge_core::ingest::Ingested;
use forge_core::pipeline::{run_pipeline, PipelineConfig};
use forge_core::workspace::{files, Workspace};

pub struct Prepared {
    pub fixture: Fixture,
    pub data: Ingested,
    pub universe: RetainedUniverse,
    pub tree: AbstractionTree,
    _dir: tempfile::TempDir,
}

pub fn prepare() -> Prepared {
    let fixture = generate_fixture(&FixtureConfig::default()).expect("fixture");
    let dir = tempfile::tempdir().expect("tempdir");
    let paths = fixture
        .write(dir.path().join("raw"))
        .expect("write fixture");
    let ws = Workspace::create(dir.path().join("ws")).expect("workspace");
    run_pipeline(
        &ws,
        &paths.inputs,
        &paths.units,
        &PipelineConfig::default(),
        &StubClient,
    )
    .expect("pipeline");
    let universe = ws.read_json(files::UNIVERSE).expect("universe");
    let tree = ws.read_json(files::TREE).expect("tree");
    let data = fixture.ingested().expect("ingest");
    Prepared {
        fixture,
        data,
        universe,
        tree,
        _dir: dir,
    }
}
