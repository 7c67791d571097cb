//! The six subcommands. Each one reads the artifacts of the previous stage
//! from the output directory and writes its own next to them.

use std::path::PathBuf;

use anyhow::Context as _;
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use nalista_core::dictionary::{
    compute_dictionary, generalized_coherence, max_admissible_sparsity, welch_bound, AnalyticDictionary,
};
use nalista_core::problems::{fixed_test_set, load_dataset, save_dataset, Batch, ProblemEnsemble};
use nalista_core::rng::derive_seed;
use nalista_core::solvers::{ForwardOptions, InputFeatures, ModelKind, Operators, Solver, SupportSelectionSchedule};
use nalista_core::training::{
    evaluate, norm_correlation, parameter_stats, proxy_error_correlation, ratio_stats, spearman,
    Checkpoint, EvalReport, Trainer, TrainConfig,
};
use nalista_core::Error;

use crate::config::{model_label, ExperimentConfig, SweepAxis};
use crate::output::{f, Outputs};
use crate::UsageError;

const TAG_CORRELATION: u64 = 0x636f_7272;

/// A resolved configuration bound to an output directory.
#[derive(Clone, Debug)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: Outputs,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, root: PathBuf, force: bool) -> Self {
        let config_hash = cfg.hash();
        Self {
            cfg,
            out: Outputs {
                root,
                config_hash,
                force,
            },
        }
    }
}

pub fn data_rel(seed: u64) -> String {
    format!("data/seed-{seed}.dataset")
}

pub fn dict_rel(seed: u64) -> String {
    format!("dict/seed-{seed}.dict")
}

pub fn model_rel(label: &str, seed: u64) -> String {
    format!("models/{label}-seed-{seed}.ckpt")
}

pub fn curve_rel(label: &str, seed: u64) -> String {
    format!("curves/{label}-seed-{seed}.csv")
}

/// Per-layer cost of the recurrent cell relative to one ALISTA layer.
pub fn cost_ratio(h: usize, m: usize, n: usize) -> f64 {
    (h * h) as f64 / (m * n) as f64
}

/// A learned model to train: its file label, kind and cell inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub kind: ModelKind,
    pub features: InputFeatures,
}

/// Configured model kinds, or the three NA-ALISTA input sets when `ablation`.
pub fn variants(cfg: &ExperimentConfig, ablation: bool) -> Vec<Variant> {
    if ablation {
        [InputFeatures::R, InputFeatures::U, InputFeatures::Both]
            .into_iter()
            .map(|features| Variant {
                label: model_label(ModelKind::NaAlista, Some(features)),
                kind: ModelKind::NaAlista,
                features,
            })
            .collect()
    } else {
        cfg.model
            .kinds
            .iter()
            .map(|&kind| Variant {
                label: model_label(kind, None),
                kind,
                features: cfg.model.features,
            })
            .collect()
    }
}

fn train_config(cfg: &ExperimentConfig, v: &Variant, seed: u64) -> TrainConfig {
    let mut tc = cfg.train_config(v.kind, seed);
    tc.model.features = v.features;
    tc
}

fn missing(what: &str, path: &std::path::Path, hint: &str) -> anyhow::Error {
    UsageError(format!("{what} {} not found; run `{hint}` first", path.display())).into()
}

struct Loaded {
    ens: ProblemEnsemble,
    test: Batch,
    ops: Operators,
    coherence: f64,
}

fn load_dataset_for(ctx: &Context, seed: u64) -> anyhow::Result<(ProblemEnsemble, Batch)> {
    let path = ctx.out.path(data_rel(seed));
    if !path.exists() {
        return Err(missing("dataset", &path, "nalista gen-data"));
    }
    let (ens, test, meta) = load_dataset(&path).with_context(|| format!("loading {}", path.display()))?;
    let e = &ctx.cfg.ensemble;
    if (meta.m, meta.n, meta.s, meta.snr_db, meta.seed, meta.test_size) != (e.m, e.n, e.s, e.snr_db, seed, e.test_size)
    {
        return Err(UsageError(format!(
            "{} was generated for a different ensemble; rerun `nalista gen-data --force`",
            path.display()
        ))
        .into());
    }
    Ok((ens, test))
}

fn load_all(ctx: &Context, seed: u64) -> anyhow::Result<Loaded> {
    let (ens, test) = load_dataset_for(ctx, seed)?;
    let path = ctx.out.path(dict_rel(seed));
    if !path.exists() {
        return Err(missing("dictionary", &path, "nalista compute-dict"));
    }
    let dict = match AnalyticDictionary::load(&path, &ens.phi) {
        Err(Error::Checksum { .. }) => {
            return Err(UsageError(format!(
                "{} belongs to a different measurement matrix; rerun `nalista compute-dict --force`",
                path.display()
            ))
            .into())
        }
        r => r.with_context(|| format!("loading {}", path.display()))?,
    };
    let ops = Operators::new(ens.phi.clone(), dict.w)?;
    Ok(Loaded {
        ens,
        test,
        ops,
        coherence: dict.coherence,
    })
}

fn load_checkpoint(ctx: &Context, v: &Variant, seed: u64) -> anyhow::Result<(Checkpoint, TrainConfig)> {
    let path = ctx.out.path(model_rel(&v.label, seed));
    if !path.exists() {
        return Err(missing("checkpoint", &path, "nalista train"));
    }
    let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let tc = train_config(&ctx.cfg, v, seed);
    if ckpt.config_hash != tc.hash() {
        return Err(UsageError(format!(
            "{} was trained under config {} but the current config hashes to {}; retrain with --force",
            path.display(),
            ckpt.config_hash,
            tc.hash()
        ))
        .into());
    }
    Ok((ckpt, tc))
}

fn file_checksum(path: &std::path::Path) -> anyhow::Result<String> {
    Ok(nalista_core::container::checksum(&std::fs::read(path)?))
}

pub fn gen_data(ctx: &Context) -> anyhow::Result<()> {
    let e = &ctx.cfg.ensemble;
    ctx.out.check_free(ctx.cfg.seeds.iter().map(|&s| data_rel(s)))?;
    for &seed in &ctx.cfg.seeds {
        let ens = ProblemEnsemble::generate(e.m, e.n, e.s, e.snr_db, seed)?;
        let test = fixed_test_set(&ens, e.test_size, seed)?;
        let path = ctx.out.target(data_rel(seed))?;
        let meta = save_dataset(&path, &ens, &test, seed)?;
        info!("wrote {} (M={}, N={}, S={})", path.display(), e.m, e.n, e.s);
        ctx.out.json(
            format!("data/seed-{seed}.json"),
            json!({
                "file": path.file_name().map(|n| n.to_string_lossy().into_owned()),
                "file_sha256": file_checksum(&path)?,
                "dataset": meta,
            }),
        )?;
    }
    Ok(())
}

pub fn compute_dict(ctx: &Context) -> anyhow::Result<()> {
    ctx.out.check_free(ctx.cfg.seeds.iter().map(|&s| dict_rel(s)))?;
    let opts = ctx.cfg.dictionary_options();
    for &seed in &ctx.cfg.seeds {
        let (ens, _) = load_dataset_for(ctx, seed)?;
        let dict = compute_dictionary(&ens.phi, &opts)?;
        let welch = welch_bound(ens.m, ens.n)?;
        let baseline = generalized_coherence(&ens.phi, &ens.phi)?;
        let path = ctx.out.target(dict_rel(seed))?;
        dict.save(&path, &ens.phi)?;
        info!(
            "seed {seed}: generalized coherence {:.5} (W = Phi: {baseline:.5}, Welch bound {welch:.5}) after {} + {} steps",
            dict.coherence, dict.iterations_run, dict.refine_steps
        );
        ctx.out.json(
            format!("dict/seed-{seed}.json"),
            json!({
                "file_sha256": file_checksum(&path)?,
                "phi_checksum": ens.phi_checksum(),
                "coherence": dict.coherence,
                "coherence_w_eq_phi": baseline,
                "welch_bound": welch,
                "max_admissible_sparsity": max_admissible_sparsity(dict.coherence)?,
                "iterations_run": dict.iterations_run,
                "refine_steps": dict.refine_steps,
                "selected_iteration": dict.selected_iteration,
                "surrogate_value": dict.surrogate_value,
            }),
        )?;
    }
    Ok(())
}

pub fn train(ctx: &Context, ablation: bool) -> anyhow::Result<()> {
    let vs = variants(&ctx.cfg, ablation);
    let targets = ctx
        .cfg
        .seeds
        .iter()
        .flat_map(|&s| vs.iter().flat_map(move |v| [model_rel(&v.label, s), curve_rel(&v.label, s)]));
    ctx.out.check_free(targets)?;
    for &seed in &ctx.cfg.seeds {
        let l = load_all(ctx, seed)?;
        for v in &vs {
            let tc = train_config(&ctx.cfg, v, seed);
            let hash = tc.hash();
            info!("training {} seed {seed}", v.label);
            let ckpt = match Trainer::new(tc, &l.ens, &l.ops, Some(&l.test)).and_then(Trainer::run) {
                Ok(c) => c,
                Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    checkpoint,
                }) => {
                    let dump = ctx.out.target(format!("models/{}-seed-{seed}.failed.ckpt", v.label))?;
                    checkpoint.save(&dump)?;
                    anyhow::bail!(
                        "{} seed {seed}: non-finite loss at epoch {epoch}, step {step}; last good state saved to {}",
                        v.label,
                        dump.display()
                    );
                }
                Err(e) => return Err(e.into()),
            };
            ckpt.save(ctx.out.target(model_rel(&v.label, seed))?)?;
            let mut c = ctx.out.csv(curve_rel(&v.label, seed), &["epoch", "train_loss", "test_nmse_db"])?;
            for p in &ckpt.curve {
                c.row([p.epoch.to_string(), f(p.train_loss), f(p.test_nmse_db)])?;
            }
            c.finish()?;
            ctx.out.json(
                format!("curves/{}-seed-{seed}.json", v.label),
                json!({
                    "model": v.label,
                    "seed": seed,
                    "train_config_hash": hash,
                    "x": "epoch",
                    "y": ["train_loss", "test_nmse_db"],
                    "y_units": ["mse", "dB"],
                }),
            )?;
            if let Some(last) = ckpt.curve.last() {
                info!("{} seed {seed}: final test NMSE {:.3} dB", v.label, last.test_nmse_db);
            }
        }
    }
    Ok(())
}

/// One line of the NMSE report.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub seed: u64,
    pub iterations: usize,
    pub nmse_db: f64,
    pub per_iteration_nmse_db: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Evaluate the classical baselines and every trained model on the fixed
/// test set. Checkpoints are only read.
pub fn eval(ctx: &Context, ablation: bool) -> anyhow::Result<Vec<EvalRow>> {
    let name = if ablation { "ablation" } else { "nmse" };
    let files = [
        format!("eval/{name}.csv"),
        format!("eval/{name}_per_iteration.csv"),
        format!("eval/{name}.json"),
    ];
    ctx.out.check_free(&files)?;
    let k = ctx.cfg.model.iterations;
    let lambda = ctx.cfg.baselines.lambda;
    let vs = variants(&ctx.cfg, ablation);
    let mut rows = Vec::new();
    for &seed in &ctx.cfg.seeds {
        let l = load_all(ctx, seed)?;
        let mut push = |model: String, r: EvalReport| {
            info!("{model} seed {seed}: {:.3} dB", r.nmse_db);
            rows.push(EvalRow {
                model,
                seed,
                iterations: k,
                nmse_db: r.nmse_db,
                per_iteration_nmse_db: r.per_iteration_nmse_db,
            });
        };
        if !ablation {
            let none = SupportSelectionSchedule::none(k);
            for solver in [Solver::Ista { lambda }, Solver::Fista { lambda }] {
                let r = evaluate(&solver, &l.ops, &l.test, k, &none, ForwardOptions::default())?;
                push(solver.name().to_string(), r);
            }
        }
        for v in &vs {
            let (ckpt, tc) = load_checkpoint(ctx, v, seed)?;
            let r = evaluate(
                &Solver::Learned(ckpt.model),
                &l.ops,
                &l.test,
                k,
                &tc.schedule()?,
                ForwardOptions::default(),
            )?;
            push(v.label.clone(), r);
        }
    }

    let mut c = ctx.out.csv(&files[0], &["model", "seed", "iterations", "nmse_db"])?;
    for r in &rows {
        c.row([r.model.clone(), r.seed.to_string(), r.iterations.to_string(), f(r.nmse_db)])?;
    }
    c.finish()?;
    let mut c = ctx.out.csv(&files[1], &["model", "seed", "k", "nmse_db"])?;
    for r in &rows {
        for (i, v) in r.per_iteration_nmse_db.iter().enumerate() {
            c.row([r.model.clone(), r.seed.to_string(), (i + 1).to_string(), f(*v)])?;
        }
    }
    c.finish()?;
    let mut models: Vec<&str> = Vec::new();
    for r in &rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let medians: serde_json::Map<String, serde_json::Value> = models
        .iter()
        .map(|m| {
            let v = rows.iter().filter(|r| r.model == *m).map(|r| r.nmse_db).collect();
            (m.to_string(), json!(median(v)))
        })
        .collect();
    ctx.out.json(
        &files[2],
        json!({
            "median_nmse_db": medians,
            "tables": {
                name: {"columns": ["model", "seed", "iterations", "nmse_db"]},
                format!("{name}_per_iteration"): {"x": "k", "y": "nmse_db", "group": ["model", "seed"]},
            },
        }),
    )?;
    Ok(rows)
}

/// One sweep coordinate that could not be completed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub value: usize,
    pub error: String,
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::K => "k",
        SweepAxis::N => "n",
        SweepAxis::H => "h",
        SweepAxis::None => "none",
    }
}

pub fn point_dir(axis: SweepAxis, value: usize) -> String {
    format!("sweep/{}-{value}", axis_name(axis))
}

/// Full pipeline at one sweep coordinate, inside its own directory.
pub fn run_point(ctx: &Context, value: usize) -> anyhow::Result<(ExperimentConfig, Vec<EvalRow>)> {
    let pcfg = ctx.cfg.at_point(ctx.cfg.sweep.axis, value);
    pcfg.validate().map_err(|e| UsageError(format!("{e:#}")))?;
    let pctx = Context::new(pcfg.clone(), ctx.out.path(point_dir(ctx.cfg.sweep.axis, value)), ctx.out.force);
    gen_data(&pctx)?;
    compute_dict(&pctx)?;
    train(&pctx, false)?;
    Ok((pcfg, eval(&pctx, false)?))
}

/// Train and evaluate every point of the sweep axis. Completed points are
/// written even when others fail; the failures are listed in the sidecar.
pub fn sweep(ctx: &Context) -> anyhow::Result<Vec<SweepFailure>> {
    let axis = ctx.cfg.sweep.axis;
    if axis == SweepAxis::None {
        return Err(UsageError("sweep.axis is `none`; set it to k, n or h".into()).into());
    }
    let name = axis_name(axis);
    let csv_rel = format!("sweep/{name}.csv");
    let json_rel = format!("sweep/{name}.json");
    let mut taken = vec![csv_rel.clone(), json_rel.clone()];
    taken.extend(ctx.cfg.sweep.values.iter().map(|&v| point_dir(axis, v)));
    ctx.out.check_free(&taken)?;

    let results: Vec<_> = ctx
        .cfg
        .sweep
        .values
        .par_iter()
        .map(|&value| (value, run_point(ctx, value)))
        .collect();

    let mut c = ctx.out.csv(&csv_rel, &["axis", "value", "model", "seed", "nmse_db", "cost_ratio"])?;
    let mut failures = Vec::new();
    for (value, res) in results {
        match res {
            Ok((pcfg, rows)) => {
                let ratio = cost_ratio(pcfg.model.hidden, pcfg.ensemble.m, pcfg.ensemble.n);
                for r in rows {
                    c.row([
                        name.to_string(),
                        value.to_string(),
                        r.model,
                        r.seed.to_string(),
                        f(r.nmse_db),
                        f(ratio),
                    ])?;
                }
            }
            Err(e) => {
                warn!("sweep point {name}={value} failed: {e:#}");
                failures.push(SweepFailure {
                    value,
                    error: format!("{e:#}"),
                });
            }
        }
    }
    c.finish()?;
    ctx.out.json(
        &json_rel,
        json!({
            "axis": name,
            "values": ctx.cfg.sweep.values,
            "x": "value",
            "y": "nmse_db",
            "group": ["model", "seed"],
            "cost_ratio": "H^2 / (M N)",
            "failures": failures.iter().map(|f| json!({"value": f.value, "error": f.error})).collect::<Vec<_>>(),
        }),
    )?;
    Ok(failures)
}

const DIAG_FILES: [&str; 6] = [
    "diag/correlation.csv",
    "diag/correlation_summary.csv",
    "diag/params.csv",
    "diag/assumption_ratio.csv",
    "diag/proxy_pairs.csv",
    "diag/proxy_summary.csv",
];

/// Norm correlations at `x = 0`, per-iteration parameter statistics and the
/// assumption-ratio series for every trained model.
pub fn diagnose(ctx: &Context) -> anyhow::Result<()> {
    ctx.out.check_free(DIAG_FILES.iter().copied().chain(["diag/diagnostics.json"]))?;
    let cfg = &ctx.cfg;
    let mut corr = ctx.out.csv(DIAG_FILES[0], &["seed", "sparsity", "l1_target", "r", "u"])?;
    let mut corr_sum = ctx.out.csv(DIAG_FILES[1], &["seed", "sparsity", "corr_r", "corr_u"])?;
    let mut params = ctx.out.csv(
        DIAG_FILES[2],
        &["model", "seed", "k", "theta_mean", "theta_std", "gamma_mean", "gamma_std"],
    )?;
    let mut ratio = ctx.out.csv(
        DIAG_FILES[3],
        &["model", "seed", "k", "ratio_mean", "ratio_std", "error_mean", "error_std"],
    )?;
    let mut proxy = ctx.out.csv(DIAG_FILES[4], &["model", "seed", "i", "j", "u", "error_l1"])?;
    let mut proxy_sum = ctx.out.csv(DIAG_FILES[5], &["model", "seed", "i", "j", "corr"])?;
    let mut trend = serde_json::Map::new();

    for &seed in &cfg.seeds {
        let l = load_all(ctx, seed)?;
        for s in [cfg.ensemble.s, cfg.ensemble.n as f64] {
            let c = norm_correlation(
                &l.ops.phi,
                &l.ops.w,
                s,
                cfg.diagnose.correlation_samples,
                derive_seed(seed, &[TAG_CORRELATION, s.to_bits()]),
            )?;
            for i in 0..c.l1_target.len() {
                corr.row([seed.to_string(), f(s), f(c.l1_target[i]), f(c.r[i]), f(c.u[i])])?;
            }
            corr_sum.row([seed.to_string(), f(s), f(c.corr_r), f(c.corr_u)])?;
        }
        for v in variants(cfg, false) {
            let (ckpt, tc) = load_checkpoint(ctx, &v, seed)?;
            let k = tc.model.iterations;
            let report = evaluate(
                &Solver::Learned(ckpt.model),
                &l.ops,
                &l.test,
                k,
                &tc.schedule()?,
                ForwardOptions::default(),
            )?;
            let ps = parameter_stats(&report);
            for i in 0..k {
                params.row([
                    v.label.clone(),
                    seed.to_string(),
                    i.to_string(),
                    f(ps.theta_mean[i]),
                    f(ps.theta_std[i]),
                    f(ps.gamma_mean[i]),
                    f(ps.gamma_std[i]),
                ])?;
            }
            let rs = ratio_stats(&report, l.coherence);
            for i in 0..k {
                ratio.row([
                    v.label.clone(),
                    seed.to_string(),
                    i.to_string(),
                    f(rs.ratio_mean[i]),
                    f(rs.ratio_std[i]),
                    f(rs.error_mean[i]),
                    f(rs.error_std[i]),
                ])?;
            }
            for &(i, j) in &cfg.diagnose.pairs {
                let p = proxy_error_correlation(&report, i, j)?;
                for (u, e) in p.u.iter().zip(&p.error_l1) {
                    proxy.row([v.label.clone(), seed.to_string(), i.to_string(), j.to_string(), f(*u), f(*e)])?;
                }
                proxy_sum.row([v.label.clone(), seed.to_string(), i.to_string(), j.to_string(), f(p.corr)])?;
            }
            trend.insert(
                format!("{}-seed-{seed}", v.label),
                json!({
                    "theta_mean": ps.theta_mean,
                    "theta_std": ps.theta_std,
                    "ratio_error_spearman": spearman(&rs.ratio_mean, &rs.error_mean),
                }),
            );
        }
    }
    for w in [corr, corr_sum, params, ratio, proxy, proxy_sum] {
        w.finish()?;
    }
    ctx.out.json(
        "diag/diagnostics.json",
        json!({
            "correlation": {"x": "l1_target", "y": ["r", "u"], "group": ["seed", "sparsity"], "evaluated_at": "x = 0"},
            "params": {"x": "k", "y": ["theta_mean", "gamma_mean"], "error_bars": ["theta_std", "gamma_std"]},
            "assumption_ratio": {"x": "k", "y": ["ratio_mean", "error_mean"], "error_bars": ["ratio_std", "error_std"],
                "ratio": "theta / gamma", "error": "coherence * ||x^(k) - x*||_1"},
            "proxy_pairs": {"x": "u", "y": "error_l1", "u": "u at step i", "error_l1": "||x^(j) - x*||_1"},
            "models": trend,
        }),
    )?;
    Ok(())
}
