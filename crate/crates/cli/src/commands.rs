use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use recpca_core::conditioning::{bound_report, effective_subspace, softmax, ConditioningReport, Quantity};
use recpca_core::graph::{
    build_cooccurrence, normalized_laplacian, sparsify_topk, total_variation, CooccurrenceGraph,
};
use recpca_core::ingest::{
    generate_synthetic, parse_interactions, read_embeddings, write_embeddings, InteractionLog, SynthConfig,
};
use recpca_core::recpca::{fit_transform, sqrt_apply, RecPcaConfig, TransformMode, EXACT_MAX_NODES};
use recpca_core::trainer::{
    init_model, load_checkpoint, save_checkpoint, split_leave_one_out, train, InitMode, TrainConfig,
};
use recpca_core::EmbeddingMatrix;

use crate::args::*;
use crate::manifest::{Outputs, RunManifest};

fn config_json<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn emb_bytes(m: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_embeddings(m, &mut buf)?;
    Ok(buf)
}

fn load_emb(manifest: &mut RunManifest, path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = manifest.input(path)?;
    read_embeddings(&bytes[..]).with_context(|| format!("{}", path.display()))
}

fn load_log(manifest: &mut RunManifest, path: &Path) -> Result<InteractionLog> {
    let bytes = manifest.input(path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    parse_interactions(&text).with_context(|| format!("{}", path.display()))
}

fn load_graph(manifest: &mut RunManifest, path: &Path) -> Result<CooccurrenceGraph> {
    let bytes = manifest.input(path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    CooccurrenceGraph::from_tsv(&text).with_context(|| format!("{}", path.display()))
}

/// Same edges over `n >= g.num_nodes()` nodes.
fn pad_graph(g: &CooccurrenceGraph, n: usize) -> Result<CooccurrenceGraph> {
    if n == g.num_nodes() {
        return Ok(g.clone());
    }
    Ok(CooccurrenceGraph::from_edges(n, g.edges())?)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<RunManifest> {
    let mut cfg = match args.preset {
        Preset::Default => SynthConfig::default(),
        Preset::Misaligned => SynthConfig::misaligned(),
    };
    cfg.num_items = args.items;
    cfg.num_users = args.users;
    cfg.seed = args.seed;
    if let Some(s) = args.sigma {
        cfg.norm_scale_sigma = s;
    }
    if let Some(c) = args.clusters {
        cfg.num_clusters = c;
    }
    if let Some(d) = args.dim {
        cfg.embed_dim = d;
    }
    if let Some(d) = args.distractor_dims {
        cfg.distractor_dims = d;
    }
    if let Some(p) = args.jump_prob {
        cfg.jump_prob = p;
    }
    let data = generate_synthetic(&cfg)?;

    let mut out = Outputs::new(&args.output)?;
    out.write("interactions.tsv", data.log.to_tsv())?;
    out.write("embeddings.emb1", emb_bytes(&data.embeddings)?)?;

    let mut manifest = RunManifest::new("synth", json!({ "args": config_json(args), "synth": cfg }));
    let norms = data.embeddings.row_norms();
    manifest.summary = json!({
        "num_items": data.embeddings.rows(),
        "num_users": data.log.sequences().len(),
        "num_interactions": data.log.num_interactions(),
        "embedding_dim": data.embeddings.cols(),
        "norm_ratio": data.embeddings.norm_ratio(),
        "norm_max": norms.iter().cloned().fold(0.0, f64::max),
        "norm_min": norms.iter().cloned().fold(f64::INFINITY, f64::min),
    });
    out.commit(manifest)
}

pub fn cmd_build_graph(args: &BuildGraphArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("build-graph", config_json(args));
    let log = load_log(&mut manifest, &args.interactions)?;
    let mut full = build_cooccurrence(&log);
    if let Some(n) = args.num_items {
        if n < full.num_nodes() {
            bail!("--num-items {n} is smaller than the largest item id + 1 ({})", full.num_nodes());
        }
        full = pad_graph(&full, n)?;
    }
    let graph = match args.topk {
        Some(k) => sparsify_topk(&full, k)?,
        None => full.clone(),
    };

    let mut out = Outputs::new(&args.output)?;
    out.write("graph.tsv", graph.to_tsv())?;
    let isolated = graph.degrees().iter().filter(|&&d| d == 0.0).count();
    manifest.summary = json!({
        "nodes": graph.num_nodes(),
        "edges": graph.num_edges(),
        "edges_before_sparsify": full.num_edges(),
        "total_weight": graph.total_weight(),
        "isolated_nodes": isolated,
    });
    out.commit(manifest)
}

pub fn cmd_recpca(args: &RecpcaArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("recpca", config_json(args));
    let x = load_emb(&mut manifest, &args.embeddings)?;
    let graph = load_graph(&mut manifest, &args.graph)?;
    if graph.num_nodes() > x.rows() {
        bail!(
            "graph {} has {} nodes but {} has only {} rows",
            args.graph.display(),
            graph.num_nodes(),
            args.embeddings.display(),
            x.rows()
        );
    }
    // items that never co-occur are isolated nodes
    let graph = pad_graph(&graph, x.rows())?;
    let lap = normalized_laplacian(&graph);
    let mode: TransformMode = args.mode.into();
    let cfg = RecPcaConfig {
        center: args.center,
        ..RecPcaConfig::new(args.alpha, args.dim, mode)
    };
    let (model, reduced) = fit_transform(&x, &lap, &cfg)?;

    // how far the polynomial filter lands from the exact square root
    let gap = if mode != TransformMode::Exact && x.rows() <= EXACT_MAX_NODES {
        let mut exact_model = model.clone();
        exact_model.config.mode = TransformMode::Exact;
        let exact = exact_model.transform(&x, &lap)?;
        let filtered_exact = sqrt_apply(&lap, args.alpha, TransformMode::Exact, &x)?;
        let filtered = sqrt_apply(&lap, args.alpha, mode, &x)?;
        let scale = filtered_exact.frobenius_distance(&EmbeddingMatrix::zeros(x.rows(), x.cols()));
        let filter_gap = filtered.frobenius_distance(&filtered_exact);
        json!({
            "reduced_frobenius": reduced.frobenius_distance(&exact),
            "filter_frobenius": filter_gap,
            "filter_relative": if scale > 0.0 { filter_gap / scale } else { 0.0 },
        })
    } else {
        Value::Null
    };

    let mut out = Outputs::new(&args.output)?;
    out.write("reduced.emb1", emb_bytes(&reduced)?)?;
    out.write("projection.emb1", emb_bytes(&model.projection_matrix())?)?;
    out.write("model.json", serde_json::to_string_pretty(&model.sidecar())?)?;
    manifest.summary = json!({
        "nodes": graph.num_nodes(),
        "edges": graph.num_edges(),
        "objective": model.objective(),
        "eigenvalues": model.eigenvalues,
        "total_variation_input": total_variation(&x, &lap)?,
        "total_variation_reduced": total_variation(&reduced, &lap)?,
        "chebyshev_gap": gap,
    });
    out.commit(manifest)
}

/// `target<TAB>v0,v1,...` lines; blank lines and `#` comments skipped.
pub fn parse_logits(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (target, values) = line
            .split_once('\t')
            .with_context(|| format!("line {line_no}: expected target<TAB>logits"))?;
        let target: usize = target
            .trim()
            .parse()
            .with_context(|| format!("line {line_no}: bad target {target:?}"))?;
        let logits = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .with_context(|| format!("line {line_no}: bad logit value"))?;
        if logits.iter().any(|v| !v.is_finite()) {
            bail!("line {line_no}: logits must be finite");
        }
        rows.push((target, logits));
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
pub struct DiagnosedInstance {
    pub index: usize,
    pub target: usize,
    pub subspace: Vec<usize>,
    pub report: ConditioningReport,
}

#[derive(Debug, Serialize)]
pub struct VerdictCount {
    pub held: usize,
    pub applicable: usize,
}

fn count(reports: &[DiagnosedInstance], f: impl Fn(&ConditioningReport) -> Option<bool>) -> VerdictCount {
    VerdictCount {
        held: reports.iter().filter(|r| f(&r.report) == Some(true)).count(),
        applicable: reports.iter().filter(|r| f(&r.report).is_some()).count(),
    }
}

#[derive(Debug, Serialize)]
pub struct DiagnoseReport {
    pub num_items: usize,
    pub dim: usize,
    pub m: usize,
    /// Row norms of the embedding table, largest first.
    pub norm_profile: Vec<f64>,
    /// Largest over smallest row norm; `infinite` with a zero row.
    pub norm_ratio: Quantity,
    pub mean_rho: Option<f64>,
    pub upper: VerdictCount,
    pub lower: VerdictCount,
    pub gershgorin: VerdictCount,
    pub instances: Vec<DiagnosedInstance>,
}

pub fn diagnose(
    embeddings: &EmbeddingMatrix,
    cases: &[(usize, Vec<f64>)],
    m: usize,
) -> Result<DiagnoseReport> {
    let n = embeddings.rows();
    if m > n {
        bail!("--m {m} exceeds the number of items ({n})");
    }
    let mut instances = Vec::with_capacity(cases.len());
    for (index, (target, logits)) in cases.iter().enumerate() {
        if logits.len() != n {
            bail!("instance {index}: {} logits for {n} items", logits.len());
        }
        if *target >= n {
            bail!("instance {index}: target {target} out of range for {n} items");
        }
        let sub = effective_subspace(logits, *target, m)?;
        let h = sub.restricted_hessian(&softmax(logits));
        let e_u = embeddings.select_rows(&sub.indices);
        let report = bound_report(&e_u, &h).with_context(|| format!("instance {index}"))?;
        instances.push(DiagnosedInstance {
            index,
            target: *target,
            subspace: sub.indices,
            report,
        });
    }
    let mut norm_profile = embeddings.row_norms();
    norm_profile.sort_by(|a, b| b.total_cmp(a));
    let rhos: Vec<f64> = instances.iter().filter_map(|i| i.report.rho).collect();
    Ok(DiagnoseReport {
        num_items: n,
        dim: embeddings.cols(),
        m,
        norm_ratio: match embeddings.norm_ratio() {
            r if r.is_finite() => Quantity::Value(r),
            _ => Quantity::Infinite,
        },
        norm_profile,
        mean_rho: (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64),
        upper: count(&instances, |r| r.verdict_upper),
        lower: count(&instances, |r| r.verdict_lower),
        gershgorin: count(&instances, |r| r.verdict_gershgorin),
        instances,
    })
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("diagnose", config_json(args));
    let m = args.m as usize;
    let (embeddings, cases) = match args.logits_from {
        LogitSource::File => {
            let Some(path) = &args.logits else {
                bail!("--logits-from file needs --logits <FILE>");
            };
            let Some(emb) = &args.embeddings else {
                bail!("--logits-from file needs --embeddings <FILE>");
            };
            let e = load_emb(&mut manifest, emb)?;
            let text = String::from_utf8(manifest.input(path)?)
                .with_context(|| format!("{} is not UTF-8", path.display()))?;
            let mut cases = parse_logits(&text).with_context(|| format!("{}", path.display()))?;
            cases.truncate(args.max_instances);
            (e, cases)
        }
        LogitSource::Model => {
            let (Some(ckpt), Some(inter)) = (&args.checkpoint, &args.interactions) else {
                bail!("--logits-from model needs --checkpoint <DIR> and --interactions <FILE>");
            };
            for name in ["checkpoint.json", "item_embeddings.emb1", "w1.emb1", "b1.emb1", "w2.emb1", "b2.emb1"] {
                manifest.input(&ckpt.join(name))?;
            }
            let (model, meta) =
                load_checkpoint(ckpt).with_context(|| format!("checkpoint {}", ckpt.display()))?;
            let log = load_log(&mut manifest, inter)?;
            if log.num_items() > model.num_items() {
                bail!(
                    "{} mentions item {} but the checkpoint has {} items",
                    inter.display(),
                    log.num_items() - 1,
                    model.num_items()
                );
            }
            let (_, valid) = split_leave_one_out(&log, args.max_seq_len);
            let mut cases = Vec::new();
            for ex in valid.iter().take(args.max_instances) {
                let h = model.encode(&ex.prefix)?;
                cases.push((ex.target, model.logits(&h, meta.normalize_candidates)));
            }
            let e = match &args.embeddings {
                Some(p) => load_emb(&mut manifest, p)?,
                None => model.item_embeddings.clone(),
            };
            (e, cases)
        }
    };
    if cases.is_empty() {
        bail!("no instances to diagnose");
    }
    let report = diagnose(&embeddings, &cases, m)?;

    let mut out = Outputs::new(&args.output)?;
    out.write("report.json", serde_json::to_string_pretty(&report)?)?;
    manifest.summary = json!({
        "instances": report.instances.len(),
        "upper": report.upper,
        "lower": report.lower,
        "gershgorin": report.gershgorin,
        "mean_rho": report.mean_rho,
    });
    out.commit(manifest)
}

pub fn cmd_train(args: &TrainArgs) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("train", Value::Null);
    let mut log = load_log(&mut manifest, &args.interactions)?;
    if args.min_count > 0 {
        log = log.filter_min_count(args.min_count)?;
    }
    let init = if args.init == "random" {
        None
    } else {
        Some(load_emb(&mut manifest, Path::new(&args.init))?)
    };
    let num_items = match &init {
        Some(e) if e.rows() < log.num_items() => bail!(
            "{} has {} rows but the log mentions item {}",
            args.init,
            e.rows(),
            log.num_items() - 1
        ),
        Some(e) => e.rows(),
        None => log.num_items(),
    };
    let embed_dim = match (&init, args.embed_dim) {
        (Some(e), Some(d)) if e.cols() != d => {
            bail!("--embed-dim {d} does not match {} ({} columns)", args.init, e.cols())
        }
        (Some(e), _) => e.cols(),
        (None, d) => d.unwrap_or(64),
    };
    let cfg = TrainConfig {
        embed_dim,
        hidden_dim: args.hidden_dim,
        normalize_candidates: args.normalize == Switch::On,
        learning_rate: args.lr,
        weight_decay: args.weight_decay,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: args.seed,
        rho_sample: args.rho_sample,
        rho_m: args.rho_m,
        patience: (args.patience > 0).then_some(args.patience),
        max_seq_len: args.max_seq_len,
        ..TrainConfig::default()
    };
    manifest.config = json!({ "args": config_json(args), "train": cfg });

    let mode = match init {
        Some(e) => InitMode::FromMatrix(e),
        None => InitMode::Random { num_items },
    };
    let mut model = init_model(mode, &cfg)?;
    let (train_set, valid_set) = split_leave_one_out(&log, cfg.max_seq_len);
    // create the directory only once training can start, so bad input leaves nothing behind
    let mut out = Outputs::new(&args.output)?;
    let trace = train(&mut model, &train_set, &valid_set, &cfg)?;

    out.write("trace.csv", trace.to_csv())?;
    out.write("trace.json", serde_json::to_string_pretty(&trace)?)?;
    let ckpt = out.path("checkpoint");
    out.track_dir(ckpt.clone());
    save_checkpoint(&model, &ckpt, cfg.normalize_candidates)?;
    let last = trace.records.last();
    manifest.summary = json!({
        "epochs_run": trace.records.len(),
        "final_loss": trace.final_loss(),
        "final_rho": last.map(|r| r.rho),
        "final_ndcg10": last.map(|r| r.ndcg10),
        "best_epoch": trace.metadata.best_epoch,
        "stopped_early": trace.metadata.stopped_early,
    });
    out.commit(manifest)
}
