use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::nnls::{nnls, NnlsOptions};
use super::support::SupportMatrices;
use crate::client::{ClientRequest, ExternalClient, Task};
use crate::error::{Error, Result};
use crate::ids::FeatureId;
use crate::ingest::{FeatureCatalog, SparseStack};

pub const CAPTION_TERMS: usize = 3;
pub const DEFAULT_SUPPORT_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMode {
    #[default]
    TopFunctional,
    ConstrainedNnls,
}

impl std::str::FromStr for CaptionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" | "top_functional" => Ok(Self::TopFunctional),
            "nnls" | "constrained_nnls" => Ok(Self::ConstrainedNnls),
            other => Err(Error::Config(format!("unknown caption mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionTerm {
    pub feature: FeatureId,
    /// A+/G+ entry in top-functional mode, fit coefficient in NNLS mode.
    pub weight: f64,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnlsFit {
    /// Nonzero coefficients, by feature id.
    pub coefficients: Vec<(FeatureId, f64)>,
    /// Columns the fit was allowed to use.
    pub candidates: Vec<FeatureId>,
    pub residual: f64,
    pub target_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCaption {
    pub latent: usize,
    pub mode: CaptionMode,
    pub sources: Vec<CaptionTerm>,
    pub targets: Vec<CaptionTerm>,
    pub label: String,
    pub label_fallback: bool,
    pub vacuous: bool,
    pub alpha: Option<NnlsFit>,
    pub beta: Option<NnlsFit>,
}

/// Top `m` features of one support column, by value desc then id asc.
fn candidates(column: &[(u32, f64)], m: usize) -> Vec<(u32, f64)> {
    let mut c = column.to_vec();
    c.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    c.truncate(m);
    c
}

fn fit(
    dict: &DMatrix<f64>,
    target: DVector<f64>,
    cands: &[(u32, f64)],
    make: fn(u32) -> FeatureId,
) -> NnlsFit {
    let cols: Vec<usize> = cands.iter().map(|&(i, _)| i as usize).collect();
    let candidates: Vec<FeatureId> = cands.iter().map(|&(i, _)| make(i)).collect();
    if cols.is_empty() {
        return NnlsFit {
            coefficients: vec![],
            candidates,
            residual: target.norm(),
            target_norm: target.norm(),
            iterations: 0,
            converged: true,
        };
    }
    let sub = dict.select_columns(&cols);
    let sol = nnls(&sub, &target, NnlsOptions::default());
    let mut coefficients: Vec<(FeatureId, f64)> = cols
        .iter()
        .zip(sol.x.iter())
        .filter(|(_, &v)| v > 0.0)
        .map(|(&i, &v)| (make(i as u32), v))
        .collect();
    coefficients.sort_by_key(|&(f, _)| f);
    NnlsFit {
        coefficients,
        candidates,
        residual: sol.residual,
        target_norm: target.norm(),
        iterations: sol.iterations,
        converged: sol.converged,
    }
}

fn terms(weighted: &[(FeatureId, f64)], catalog: &FeatureCatalog) -> Vec<CaptionTerm> {
    let mut w = weighted.to_vec();
    w.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    w.into_iter()
        .take(CAPTION_TERMS)
        .map(|(feature, weight)| CaptionTerm {
            feature,
            weight,
            description: catalog.description(feature).to_string(),
        })
        .collect()
}

pub fn caption_latent(
    k: usize,
    supports: &SupportMatrices,
    stack: &SparseStack,
    catalog: &FeatureCatalog,
    mode: CaptionMode,
    m: usize,
    client: &dyn ExternalClient,
) -> Result<LatentCaption> {
    let num_latents = supports.num_latents();
    if k >= num_latents {
        return Err(Error::NotFound(format!("latent {k} (K = {num_latents})")));
    }
    if m == 0 {
        return Err(Error::Config("support-size cap must be at least 1".into()));
    }
    let src_c = candidates(&supports.a_pos.by_col[k], m);
    let tgt_c = candidates(&supports.g_pos.by_col[k], m);

    let (sources, targets, alpha, beta) = match mode {
        CaptionMode::TopFunctional => {
            let s: Vec<_> = src_c.iter().map(|&(i, v)| (FeatureId::src(i), v)).collect();
            let t: Vec<_> = tgt_c.iter().map(|&(i, v)| (FeatureId::tgt(i), v)).collect();
            (terms(&s, catalog), terms(&t, catalog), None, None)
        }
        CaptionMode::ConstrainedNnls => {
            let a = fit(&stack.d_src, stack.read_vector(k), &src_c, FeatureId::src);
            let b = fit(
                &stack.d_tgt,
                stack.write_vector(k).into_owned(),
                &tgt_c,
                FeatureId::tgt,
            );
            (
                terms(&a.coefficients, catalog),
                terms(&b.coefficients, catalog),
                Some(a),
                Some(b),
            )
        }
    };

    let vacuous = src_c.is_empty() && tgt_c.is_empty();
    let label = if vacuous {
        None
    } else {
        let request = ClientRequest {
            task: Task::CaptionLabel,
            payload: json!({
                "latent": k,
                "sources": sources.iter().map(|t| t.description.as_str()).collect::<Vec<_>>(),
                "targets": targets.iter().map(|t| t.description.as_str()).collect::<Vec<_>>(),
            }),
            profile: serde_json::Value::Null,
        };
        match client.call(&request) {
            Ok(reply) => reply["label"]
                .as_str()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned),
            Err(e) => {
                log::warn!("caption label for latent {k} failed: {e}");
                None
            }
        }
    };
    let (label, label_fallback) = match label {
        Some(l) => (l, false),
        None => (format!("latent:{k}"), true),
    };
    Ok(LatentCaption {
        latent: k,
        mode,
        sources,
        targets,
        label,
        label_fallback,
        vacuous,
        alpha,
        beta,
    })
}
