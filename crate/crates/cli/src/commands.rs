use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tversky_core::engine::Tensor;
use tversky_core::experiments::gradsuite::run_gradient_suite;
use tversky_core::experiments::mnist::{TrainOutput, IMAGE_SIDE};
use tversky_core::experiments::sweep::{find_group, write_convergence};
use tversky_core::experiments::{
    aggregate_convergence, build_constructed_add, build_constructed_xor, run_sweep, train_mnist, ConstructedModel,
    GroupKey, MnistNet,
};
use tversky_core::interp::{
    decision_boundary_grid, export_images, export_prototype_images, parse_field, rank_in_field, salience_rank,
    trace_contrast_weights, write_scores, ObjectScore, ObjectTable,
};
use tversky_core::io::config::RunConfig;
use tversky_core::io::idx::{load_mnist, Dataset};
use tversky_core::io::seed::rng_for;
use tversky_core::io::{checkpoint, fmt_g9, write_csv, write_json};
use tversky_core::tversky::FeatureBank;
use tversky_core::{Error, Result};

use crate::args::{BoundaryArgs, Cli, Command, Constructed, ModelArgs};

/// Name of the final parameter file written by `train-mnist`.
pub const MODEL_FILE: &str = "model.bin";

/// Evaluation chunk size for MNIST forward passes.
const EVAL_CHUNK: usize = 1000;

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    let out = cfg.output_dir(cli.command.name());
    if let Command::XorSweep(a) = &cli.command {
        if a.dry_run {
            println!("trials {}", cfg.sweep.cardinality());
            println!("epochs {}", cfg.sweep.protocol.epochs);
            return Ok(());
        }
    }
    if let Command::Field(f) = &cli.command {
        parse_field(&f.expr)?;
    }
    std::fs::create_dir_all(&out)?;
    cfg.echo(&out)?;
    match &cli.command {
        Command::XorConstruct => construct(constructed(&cfg, Constructed::Xor), &out),
        Command::AddConstruct => construct(constructed(&cfg, Constructed::Add), &out),
        Command::XorSweep(_) => sweep(&cfg, &out),
        Command::TrainMnist(_) => train(&cfg, &out),
        Command::Eval(m) => eval(&cfg, m, &out),
        Command::Salience(m) => salience(&cfg, m, &out),
        Command::Field(f) => field(&cfg, &f.expr, &f.model, &out),
        Command::Boundary(b) => boundary(&cfg, b, &out),
        Command::ProtoImages(m) => proto_images(&cfg, m, &out),
        Command::Gradcheck(_) => gradcheck(&cfg, &out),
    }
}

fn constructed(cfg: &RunConfig, which: Constructed) -> ConstructedModel {
    let m = match which {
        Constructed::Xor => build_constructed_xor(),
        Constructed::Add => build_constructed_add(),
    };
    match cfg.reduction {
        Some(r) => m.with_config(r),
        None => m,
    }
}

fn construct(model: ConstructedModel, out: &Path) -> Result<()> {
    let scores = model.scores(&model.inputs)?;
    let pred = scores.argmax_rows();
    let p = model.num_classes();
    let mut header = vec!["row".to_string(), "input".to_string()];
    header.extend((0..p).map(|j| format!("s_p{j}")));
    header.extend(["predicted".into(), "truth".into(), "features".into()]);
    let mut rows = Vec::new();
    for (i, x) in model.inputs.iter().enumerate() {
        let members = model.membership(x)?.members;
        let mut row = vec![i.to_string(), fmt_vec(x)];
        row.extend(scores.row(i).iter().map(|&s| fmt_g9(s)));
        row.extend([pred[i].to_string(), model.truth[i].to_string(), fmt_set(&members)]);
        println!("{}", row.join("\t"));
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&out.join("scores.csv"), &header, rows)?;
    let input_features = model
        .inputs
        .iter()
        .map(|x| Ok(model.membership(x)?.members))
        .collect::<Result<Vec<_>>>()?;
    let prototype_features = model
        .prototypes()
        .rows()
        .map(|p| Ok(model.membership(p)?.members))
        .collect::<Result<Vec<_>>>()?;
    let correct = model.correct()?;
    println!("{}: {correct}/{} rows correct", model.name, model.inputs.len());
    write_json(
        &out.join("summary.json"),
        &json!({
            "model": model.name,
            "reduction": model.layer.cfg(),
            "correct": correct,
            "rows": model.inputs.len(),
            "input_features": input_features,
            "prototype_features": prototype_features,
        }),
    )
}

fn fmt_vec(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|&v| fmt_g9(v)).collect();
    format!("({})", parts.join(" "))
}

fn fmt_set(s: &[usize]) -> String {
    let parts: Vec<String> = s.iter().map(|k| format!("f{k}")).collect();
    format!("{{{}}}", parts.join(" "))
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let results = run_sweep(&cfg.sweep, cfg.threads(), Some(&out.join("results.csv")))?;
    let tables: [&[GroupKey]; 5] = [
        &[GroupKey::Intersection, GroupKey::Difference],
        &[GroupKey::NumFeatures],
        &[GroupKey::Normalize],
        &[GroupKey::PrototypeInit, GroupKey::FeatureInit],
        &[],
    ];
    for keys in tables {
        let stats = aggregate_convergence(&results, keys)?;
        let name = if keys.is_empty() {
            "all".to_string()
        } else {
            keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join("+")
        };
        write_convergence(&out.join(format!("convergence_{name}.csv")), keys, &stats)?;
        for s in &stats {
            let label: Vec<String> = s.keys.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("{:<40} n={:<5} p(conv) {}", label.join(" "), s.n, s.p_conv);
        }
    }
    let by_pair = aggregate_convergence(&results, &[GroupKey::Intersection, GroupKey::Difference])?;
    let p = |i: &str, d: &str| {
        find_group(&by_pair, &[(GroupKey::Intersection, i), (GroupKey::Difference, d)]).map(|s| s.p_conv.mean)
    };
    write_json(
        &out.join("summary.json"),
        &json!({
            "trials": results.len(),
            "converged": results.iter().filter(|r| r.converged).count(),
            "p_conv_product_substractmatch": p("product", "substractmatch"),
            "p_conv_min_substractmatch": p("min", "substractmatch"),
        }),
    )
}

fn load_split(cfg: &RunConfig, split: &str) -> Result<Dataset> {
    load_mnist(&cfg.data_dir(), split)
}

fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let protocol = &cfg.mnist;
    let train = load_split(cfg, "train")?;
    let test = load_split(cfg, "test")?;
    let mut rng = rng_for(cfg.seed, "mnist.init", 0);
    let mut net: MnistNet<f32> = MnistNet::new(protocol.arch, protocol.reduction, &mut rng)?;
    println!("{} parameters {}", protocol.arch, net.num_params());
    let target = TrainOutput { dir: out.to_path_buf() };
    let log = train_mnist(&mut net, &train, &test, protocol, Some(&target), |e| {
        println!(
            "epoch {:>4} loss {:.4} acc {:.4} theta {:.4} alpha {:.4} beta {:.4} {:.0}s",
            e.epoch, e.train_loss, e.test_acc, e.theta, e.alpha, e.beta, e.wall_s
        );
    })?;
    checkpoint::save_store(&out.join(MODEL_FILE), &net.store)?;
    let last = log.last().copied();
    let alpha_gt_beta = if net.contrast_params().is_some() {
        let trace = trace_contrast_weights(&log)?;
        trace.write_csv(&out.join("contrast_trace.csv"))?;
        trace.final_alpha_exceeds_beta()
    } else {
        None
    };
    write_json(
        &out.join("summary.json"),
        &json!({
            "arch": protocol.arch,
            "params": net.num_params(),
            "epochs_run": last.map(|e| e.epoch),
            "final_acc": last.map(|e| e.test_acc),
            "best_acc": log.best_acc(),
            "alpha_exceeds_beta": alpha_gt_beta,
        }),
    )
}

fn load_net(cfg: &RunConfig, path: &Path) -> Result<MnistNet<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = MnistNet::new(cfg.mnist.arch, cfg.mnist.reduction, &mut rng)?;
    checkpoint::restore_store(path, &mut net.store)?;
    Ok(net)
}

fn require_checkpoint<'a>(m: &'a ModelArgs, command: &str) -> Result<&'a PathBuf> {
    m.checkpoint
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("{command} needs --checkpoint")))
}

fn test_set(cfg: &RunConfig) -> Result<Dataset> {
    let test = load_split(cfg, "test")?;
    Ok(cfg.mnist.test_limit.map_or(test.clone(), |n| test.take(n)))
}

fn eval(cfg: &RunConfig, m: &ModelArgs, out: &Path) -> Result<()> {
    let net = load_net(cfg, require_checkpoint(m, "eval")?)?;
    let test = test_set(cfg)?;
    let acc = net.accuracy(&test, EVAL_CHUNK)?;
    println!("{} test accuracy {acc:.4} on {} images", net.arch, test.len());
    write_json(
        &out.join("eval.json"),
        &json!({ "arch": net.arch, "test_acc": acc, "n": test.len() }),
    )
}

/// Objects, feature bank and ranking candidates for the interpretability
/// commands. Candidate ids index into `candidates`.
struct Universe {
    objects: ObjectTable<f64>,
    bank: FeatureBank<f64>,
    candidates: ObjectTable<f64>,
    images: Option<Tensor<f32>>,
}

fn universe(cfg: &RunConfig, m: &ModelArgs) -> Result<Universe> {
    let Some(path) = &m.checkpoint else {
        let model = constructed(cfg, m.model);
        let bank = model.layer.similarity.feature_bank(&model.store)?;
        let n = model.inputs.len();
        let protos = model.prototypes().clone();
        let mut names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        names.extend((0..protos.shape()[0]).map(|j| format!("p{j}")));
        let mut data: Vec<f64> = model.inputs.concat();
        data.extend_from_slice(protos.data());
        let objects = ObjectTable::new(names.clone(), Tensor::new(vec![names.len(), model.dim()], data)?)?;
        let candidates = ObjectTable::new(names[..n].to_vec(), Tensor::from_rows(&model.inputs)?)?;
        return Ok(Universe {
            objects,
            bank: bank.clone(),
            candidates,
            images: None,
        });
    };
    let net = load_net(cfg, path)?;
    let (bank, protos) = net.tversky_space()?;
    let test = test_set(cfg)?;
    let embedded = net.embed_dataset(&test, EVAL_CHUNK)?;
    let test_names: Vec<String> = (0..test.len()).map(|i| format!("test:{i}")).collect();
    let mut names: Vec<String> = (0..protos.shape()[0]).map(|j| format!("p{j}")).collect();
    names.extend(test_names.iter().cloned());
    let mut data = protos.cast::<f64>().into_data();
    data.extend(embedded.cast::<f64>().data());
    let d = bank.dim();
    Ok(Universe {
        objects: ObjectTable::new(names.clone(), Tensor::new(vec![names.len(), d], data)?)?,
        bank: FeatureBank::new(bank.vectors().cast())?,
        candidates: ObjectTable::new(test_names, embedded.cast())?,
        images: Some(test.images),
    })
}

/// Writes the images of the ranked candidates, when they are images.
fn export_ranked(u: &Universe, ranked: &[ObjectScore], dir: &Path, prefix: &str) -> Result<()> {
    let Some(images) = &u.images else {
        return Ok(());
    };
    if ranked.is_empty() {
        return Ok(());
    }
    let ids: Vec<usize> = ranked.iter().map(|s| s.id).collect();
    export_images(&images.gather(&ids), IMAGE_SIDE, IMAGE_SIDE, dir, prefix)?;
    Ok(())
}

fn salience(cfg: &RunConfig, m: &ModelArgs, out: &Path) -> Result<()> {
    let u = universe(cfg, m)?;
    let ranked = salience_rank(&u.candidates, &u.bank)?;
    write_scores(&out.join("salience.csv"), &ranked)?;
    let k = cfg.top_k.min(ranked.len());
    let least = &ranked[..k];
    let most: Vec<ObjectScore> = ranked.iter().rev().take(k).cloned().collect();
    export_ranked(&u, least, &out.join("images"), "least")?;
    export_ranked(&u, &most, &out.join("images"), "most")?;
    for s in least {
        println!("least {:<12} {}", s.object, fmt_g9(s.score));
    }
    for s in &most {
        println!("most  {:<12} {}", s.object, fmt_g9(s.score));
    }
    Ok(())
}

fn field(cfg: &RunConfig, expr: &str, m: &ModelArgs, out: &Path) -> Result<()> {
    let parsed = parse_field(expr)?;
    let u = universe(cfg, m)?;
    let features: BTreeSet<usize> = parsed.evaluate(&u.bank, &u.objects)?;
    let ranked = rank_in_field(&features, &u.candidates, &u.bank, cfg.top_k)?;
    println!("{parsed} = {}", fmt_set(&features.iter().copied().collect::<Vec<_>>()));
    for s in &ranked {
        println!("{:<12} {}", s.object, fmt_g9(s.score));
    }
    write_scores(&out.join("field_ranking.csv"), &ranked)?;
    export_ranked(&u, &ranked, &out.join("images"), "field")?;
    write_json(
        &out.join("field.json"),
        &json!({ "expr": parsed.to_string(), "features": features, "ranking": ranked }),
    )
}

fn boundary(cfg: &RunConfig, b: &BoundaryArgs, out: &Path) -> Result<()> {
    let model = constructed(cfg, b.model);
    let bc = &cfg.boundary;
    let grid = decision_boundary_grid(&model.layer, &model.store, bc.x, bc.y, bc.resolution)?;
    grid.write_csv(&out.join("boundary.csv"))?;
    grid.write_pgm(&out.join("boundary.pgm"))?;
    let corners: Vec<usize> = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        .iter()
        .map(|&(x, y)| grid.class_at(x, y))
        .collect();
    println!(
        "{} cells; classes at (0,0) (0,1) (1,0) (1,1): {corners:?}",
        grid.cells()
    );
    write_json(
        &out.join("summary.json"),
        &json!({ "model": model.name, "resolution": bc.resolution, "corner_classes": corners }),
    )
}

fn proto_images(cfg: &RunConfig, m: &ModelArgs, out: &Path) -> Result<()> {
    let net = load_net(cfg, require_checkpoint(m, "proto-images")?)?;
    let written = export_prototype_images(&net, &out.join("images"), "final")?;
    println!("wrote {} images to {}", written.len(), out.join("images").display());
    Ok(())
}

fn gradcheck(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = &cfg.gradcheck;
    let rows = run_gradient_suite(g.points, g.step, cfg.seed)?;
    let mut worst: f64 = 0.0;
    let records: Vec<[String; 9]> = rows
        .iter()
        .map(|r| {
            worst = worst.max(r.report.max_rel_error);
            [
                r.target.as_str().to_string(),
                r.reduction.intersection.to_string(),
                r.reduction.difference.to_string(),
                r.reduction.normalize.to_string(),
                r.points.to_string(),
                r.report.checked.to_string(),
                r.report.boundary.to_string(),
                fmt_g9(r.report.max_rel_error),
                fmt_g9(r.report.max_elem_error),
            ]
        })
        .collect();
    for r in &records {
        println!("{}", r.join("\t"));
    }
    write_csv(
        &out.join("gradcheck.csv"),
        &[
            "target",
            "intersection",
            "difference",
            "normalize",
            "points",
            "checked",
            "boundary",
            "max_rel_error",
            "max_elem_error",
        ],
        records,
    )?;
    println!("max relative error {worst:e} (tolerance {:e})", g.tolerance);
    if worst < g.tolerance {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!(
            "max relative error {worst:e} >= tolerance {:e}",
            g.tolerance
        )))
    }
}
