use std::collections::HashSet;
use std::path::{Path, PathBuf};

use dualmol_core::contrastive::{epoch_means, load_checkpoint, loss_curve_csv, Trainer};
use dualmol_core::downstream::{ddi_train_eval, finetune, synth_ddi, FinetuneExample};
use dualmol_core::encoder::{Branch, Encoder};
use dualmol_core::index::{build_store, cross_lingual_recall, recall_csv, sample_group, topk_query, EmbeddingStore};
use dualmol_core::io::{
    correspondence_csv, parse_pair_corpus, read_labeled_csv, read_pairs_csv, synth_corpus, PairCorpus,
};
use dualmol_core::pipeline::{embed_corpus, pretrain, Tokenizers};
use dualmol_core::repr::{layer_cka_report, token_alignment};
use dualmol_core::tokenizers::{corpus_stats, train_bpe};
use dualmol_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{csv_string, Outputs};
use crate::{
    CkaArgs, Cli, Command, DdiArgs, EmbedArgs, EvalRetrievalArgs, FinetuneArgs, PretrainArgs, RetrieveArgs,
    StatsArgs, SynthArgs, SynthDdiArgs, TokenAlignArgs, TokenizeArgs, TrainBpeArgs,
};

const CHECKPOINTS: &str = "checkpoints";
const FINAL: &str = "final";

pub fn run(cli: Cli) -> Result<Value> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Synth(a) => synth(&cfg, a),
        Command::TrainBpe(a) => train_bpe_cmd(&cfg, a),
        Command::Tokenize(a) => tokenize(a),
        Command::Stats(a) => stats(&cfg, a),
        Command::Pretrain(a) => pretrain_cmd(&cfg, a),
        Command::Embed(a) => embed(a),
        Command::Retrieve(a) => retrieve(a),
        Command::EvalRetrieval(a) => eval_retrieval(&cfg, a),
        Command::Finetune(a) => finetune_cmd(&cfg, a),
        Command::Ddi(a) => ddi(&cfg, a),
        Command::SynthDdi(a) => synth_ddi_cmd(&cfg, a),
        Command::Cka(a) => cka(&cfg, a),
        Command::TokenAlign(a) => token_align(a),
    }
}

fn written(paths: Vec<PathBuf>) -> Value {
    Value::from(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

struct Model {
    tokenizers: Tokenizers,
    trainer: Trainer,
}

fn load_model(dir: &Path) -> Result<Model> {
    let trainer = load_checkpoint(&dir.join(CHECKPOINTS).join(FINAL))?;
    let tokenizers = Tokenizers::load(dir, trainer.model.smiles.config.max_len)?;
    let pairs = [
        ("smiles", tokenizers.smiles.vocab().len(), trainer.model.smiles.config.vocab_size),
        ("iupac", tokenizers.iupac.vocab().len(), trainer.model.iupac.config.vocab_size),
    ];
    for (name, tok, model) in pairs {
        if tok != model {
            return Err(Error::Checkpoint(format!(
                "{name}.vocab_size: tokenizer has {tok} tokens, checkpoint expects {model}"
            )));
        }
    }
    Ok(Model { tokenizers, trainer })
}

impl Model {
    fn encoder(&self, branch: Branch) -> &Encoder<f32> {
        match branch {
            Branch::Smiles => &self.trainer.model.smiles,
            Branch::Iupac => &self.trainer.model.iupac,
        }
    }
}

fn synth(cfg: &RunConfig, a: SynthArgs) -> Result<Value> {
    if a.size == 0 {
        return Err(Error::invalid("synth corpus size must be at least 1"));
    }
    let s = synth_corpus(cfg.seed, a.size);
    let mut out = Outputs::default();
    out.add(&a.out, s.corpus.to_tsv());
    if let Some(p) = &a.correspondence {
        out.add(p, correspondence_csv());
    }
    Ok(json!({ "records": s.corpus.len(), "written": written(out.commit()?) }))
}

fn train_bpe_cmd(cfg: &RunConfig, a: TrainBpeArgs) -> Result<Value> {
    let vocab_size = a.vocab_size.unwrap_or(cfg.tokenizer.bpe_vocab_size);
    let corpus = parse_pair_corpus(&a.corpus)?;
    let model = train_bpe(&corpus.smiles(), vocab_size)?;
    let mut out = Outputs::default();
    out.add(&a.out, model.to_json()?);
    Ok(json!({
        "vocab_size": model.vocab().len(),
        "merges": model.merges().len(),
        "written": written(out.commit()?),
    }))
}

fn column(corpus: &PairCorpus, branch: Branch) -> Vec<&str> {
    match branch {
        Branch::Smiles => corpus.smiles(),
        Branch::Iupac => corpus.iupac(),
    }
}

fn tokenize(a: TokenizeArgs) -> Result<Value> {
    let model = load_model(&a.model)?;
    let corpus = parse_pair_corpus(&a.corpus)?;
    let tokenizer = model.tokenizers.tokenizer(a.branch);
    let mut lines = String::new();
    for (id, s) in corpus.ids().into_iter().zip(column(&corpus, a.branch)) {
        let seq = model.tokenizers.encode(a.branch, s);
        let row = json!({ "id": id, "tokens": tokenizer.split(s), "ids": seq.ids, "mask": seq.mask });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    let mut out = Outputs::default();
    out.add(&a.out, lines);
    Ok(json!({ "records": corpus.len(), "written": written(out.commit()?) }))
}

fn stats(cfg: &RunConfig, a: StatsArgs) -> Result<Value> {
    let corpus = parse_pair_corpus(&a.corpus)?;
    let tokenizers = match &a.model {
        Some(dir) => load_model(dir)?.tokenizers,
        None => Tokenizers::fit(&corpus, &cfg.tokenizer)?,
    };
    let mut out = Outputs::default();
    let mut summary = serde_json::Map::new();
    for branch in [Branch::Smiles, Branch::Iupac] {
        let s = corpus_stats(&column(&corpus, branch), &tokenizers.tokenizer(branch))?;
        let name = branch.as_str();
        out.add(a.out_dir.join(format!("{name}_length_histogram.csv")), s.histogram_csv());
        out.add(a.out_dir.join(format!("{name}_top_tokens.csv")), s.top_k_csv(a.top, true)?);
        summary.insert(
            name.into(),
            json!({ "sequences": s.corpus_size, "tokens": s.total_tokens(), "distinct_tokens": s.token_frequency.len() }),
        );
    }
    out.json(a.out_dir.join("stats.json"), &summary)?;
    summary.insert("written".into(), written(out.commit()?));
    Ok(Value::Object(summary))
}

fn pretrain_cmd(cfg: &RunConfig, a: PretrainArgs) -> Result<Value> {
    let corpus = parse_pair_corpus(&a.corpus)?;
    if a.holdout >= corpus.len() {
        return Err(Error::invalid(format!("holdout {} leaves no training pairs out of {}", a.holdout, corpus.len())));
    }
    let (train, held) = corpus.split_tail(a.holdout);
    let ckpt = a.out.join(CHECKPOINTS);
    let run = pretrain(&train, &cfg.tokenizer, &cfg.encoder, &cfg.train, Some(&ckpt), |_| {})?;
    run.tokenizers.save(&a.out)?;
    let means = epoch_means(&run.losses);
    let mut out = Outputs::default();
    out.add(a.out.join("loss_curve.csv"), loss_curve_csv(&run.losses));
    out.json(a.out.join("config.json"), cfg)?;
    if a.holdout > 0 {
        out.add(a.out.join("holdout.tsv"), held.to_tsv());
    }
    let summary = json!({
        "train_pairs": train.len(),
        "holdout_pairs": held.len(),
        "steps": run.trainer.step,
        "epochs": run.trainer.epochs_done,
        "epoch_mean_loss": means.iter().map(|(_, m)| *m).collect::<Vec<_>>(),
    });
    out.json(a.out.join("summary.json"), &summary)?;
    let files = out.commit()?;
    Ok(json!({ "summary": summary, "written": written(files) }))
}

fn embed(a: EmbedArgs) -> Result<Value> {
    let model = load_model(&a.model)?;
    let corpus = parse_pair_corpus(&a.corpus)?;
    let (s, i) = embed_corpus(&model.trainer.model, &model.tokenizers, &corpus)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let sp = a.out_dir.join("smiles.mmfp");
    let ip = a.out_dir.join("iupac.mmfp");
    s.save(&sp)?;
    i.save(&ip)?;
    Ok(json!({ "records": corpus.len(), "dim": s.dim(), "written": written(vec![sp, ip]) }))
}

fn retrieve(a: RetrieveArgs) -> Result<Value> {
    let store = EmbeddingStore::load(&a.store)?;
    let (qid, q) = match (&a.query_store, &a.query) {
        (Some(qs), None) => {
            let qstore = EmbeddingStore::load(qs)?;
            let id = a.query_id.as_deref().expect("clap requires query_id");
            let row = qstore.position(id).ok_or_else(|| Error::invalid(format!("query id {id:?} is not in the query store")))?;
            (id.to_owned(), qstore.row(row).to_vec())
        }
        (None, Some(text)) => {
            let dir = a.model.as_deref().expect("clap requires model");
            let branch = a.branch.expect("clap requires branch");
            let model = load_model(dir)?;
            let seq = model.tokenizers.encode(branch, text);
            (text.clone(), model.encoder(branch).encode(&seq)?)
        }
        _ => return Err(Error::invalid("give either --query-store with --query-id, or --query with --model and --branch")),
    };
    let result = topk_query(&store, &qid, &q, a.k)?;
    let value = serde_json::to_value(&result)?;
    if let Some(p) = &a.out {
        let mut out = Outputs::default();
        out.json(p, &result)?;
        out.commit()?;
    }
    Ok(value)
}

fn eval_retrieval(cfg: &RunConfig, a: EvalRetrievalArgs) -> Result<Value> {
    let mut s = EmbeddingStore::load(&a.smiles_store)?;
    let mut i = EmbeddingStore::load(&a.iupac_store)?;
    if let Some(size) = cfg.retrieval.group_size {
        (s, i) = sample_group(&s, &i, size, cfg.seed)?;
    }
    let reports = cross_lingual_recall(&s, &i, &cfg.retrieval.ks)?;
    let mut out = Outputs::default();
    out.json(a.out_dir.join("recall.json"), &reports)?;
    out.add(a.out_dir.join("recall.csv"), recall_csv(&reports));
    let value = serde_json::to_value(&reports)?;
    Ok(json!({ "reports": value, "written": written(out.commit()?) }))
}

fn finetune_cmd(cfg: &RunConfig, a: FinetuneArgs) -> Result<Value> {
    let model = load_model(&a.model)?;
    let rows = read_labeled_csv(&a.data)?;
    let mut data = Vec::with_capacity(rows.len());
    for r in &rows {
        let text = match a.branch {
            Branch::Smiles => r.smiles.as_str(),
            Branch::Iupac => r
                .iupac
                .as_deref()
                .ok_or_else(|| Error::invalid(format!("record {:?} has no IUPAC name; the dataset needs an iupac column", r.id)))?,
        };
        data.push(FinetuneExample { seq: model.tokenizers.encode(a.branch, text), label: r.label });
    }
    let mut ft = cfg.finetune.clone();
    ft.freeze = a.freeze;
    let (report, _) = finetune(model.encoder(a.branch), &data, a.task, &ft)?;
    let metric_cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut rows_out: Vec<Vec<String>> = report
        .seeds
        .iter()
        .map(|s| {
            let mut row = vec![s.seed.to_string(), s.best_lr.to_string(), s.best_batch_size.to_string()];
            row.extend(s.test.values().into_iter().map(metric_cell));
            row
        })
        .collect();
    for (name, m) in [("mean", &report.summary.mean), ("std", &report.summary.std)] {
        let mut row = vec![name.to_string(), String::new(), String::new()];
        row.extend(m.values().into_iter().map(metric_cell));
        rows_out.push(row);
    }
    let csv = csv_string(&["seed", "lr", "batch_size", "roc_auc", "aupr", "precision", "recall", "rmse"], rows_out)?;
    let mut out = Outputs::default();
    out.json(a.out_dir.join("finetune.json"), &report)?;
    out.add(a.out_dir.join("finetune.csv"), csv);
    Ok(json!({ "summary": report.summary, "written": written(out.commit()?) }))
}

fn ddi(cfg: &RunConfig, a: DdiArgs) -> Result<Value> {
    let s = a.smiles_store.as_deref().map(EmbeddingStore::load).transpose()?;
    let i = a.iupac_store.as_deref().map(EmbeddingStore::load).transpose()?;
    let pairs = read_pairs_csv(&a.pairs)?;
    let report = ddi_train_eval(s.as_ref(), i.as_ref(), a.source, &pairs, &cfg.ddi)?;
    let fps = csv_string(
        &["rank", "id_a", "id_b", "score", "fold"],
        report.false_positives.iter().enumerate().map(|(r, p)| {
            vec![(r + 1).to_string(), p.id_a.clone(), p.id_b.clone(), p.score.to_string(), p.fold.to_string()]
        }),
    )?;
    let mut out = Outputs::default();
    out.json(a.out_dir.join("ddi.json"), &report)?;
    out.add(a.out_dir.join("ddi_folds.csv"), report.to_csv());
    out.add(a.out_dir.join("false_positives.csv"), fps);
    Ok(json!({ "summary": report.summary, "prevalence": report.prevalence, "written": written(out.commit()?) }))
}

fn synth_ddi_cmd(cfg: &RunConfig, a: SynthDdiArgs) -> Result<Value> {
    let (drugs, pairs) = synth_ddi(a.drugs, a.pairs, a.dim, a.prevalence, !a.no_signal, cfg.seed)?;
    let store = build_store(&drugs)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let sp = a.out_dir.join("drugs.mmfp");
    let pp = a.out_dir.join("pairs.csv");
    store.save(&sp)?;
    dualmol_core::io::write_pairs_csv(&pp, &pairs)?;
    Ok(json!({ "drugs": drugs.len(), "pairs": pairs.len(), "written": written(vec![sp, pp]) }))
}

fn cka(cfg: &RunConfig, a: CkaArgs) -> Result<Value> {
    let model = load_model(&a.model)?;
    let corpus = parse_pair_corpus(&a.corpus)?;
    let report = match (&a.other_model, a.branch) {
        (Some(other), Some(branch)) => {
            let other = load_model(other)?;
            let seqs_a = model.tokenizers.encode_column(&corpus, branch);
            let seqs_b = other.tokenizers.encode_column(&corpus, branch);
            layer_cka_report(model.encoder(branch), &seqs_a, other.encoder(branch), &seqs_b, &cfg.cka)?
        }
        _ => {
            let s = model.tokenizers.encode_column(&corpus, Branch::Smiles);
            let i = model.tokenizers.encode_column(&corpus, Branch::Iupac);
            layer_cka_report(&model.trainer.model.smiles, &s, &model.trainer.model.iupac, &i, &cfg.cka)?
        }
    };
    let mut out = Outputs::default();
    out.add(&a.out, report.to_csv());
    Ok(json!({ "samples": report.samples, "diagonal": report.diagonal(), "written": written(out.commit()?) }))
}

fn read_correspondence(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["iupac_token", "smiles_token"] {
        return Err(Error::Parse { path: path.to_owned(), line: 1, msg: format!("header must be iupac_token,smiles_token, found {header:?}") });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((rec[0].to_owned(), rec[1].to_owned()));
    }
    Ok(out)
}

fn token_align(a: TokenAlignArgs) -> Result<Value> {
    let model = load_model(&a.model)?;
    let (rows, cols, expected) = match &a.correspondence {
        Some(p) => {
            let pairs = read_correspondence(p)?;
            let rows: Vec<String> = pairs.iter().map(|p| p.0.clone()).collect();
            let mut seen = HashSet::new();
            let cols: Vec<String> = pairs.iter().map(|p| p.1.clone()).filter(|c| seen.insert(c.clone())).collect();
            (rows, cols, Some(pairs))
        }
        None => (a.iupac_token.clone(), a.smiles_token.clone(), None),
    };
    let m = token_alignment(
        &model.trainer.model.iupac,
        model.tokenizers.iupac.vocab(),
        &rows,
        &model.trainer.model.smiles,
        model.tokenizers.smiles.vocab(),
        &cols,
    )?;
    let accuracy = expected.as_deref().map(|e| m.argmax_accuracy(e)).transpose()?;
    let mut out = Outputs::default();
    out.add(&a.out, m.to_csv());
    if let Some(p) = &a.svg {
        out.add(p, m.to_svg());
    }
    Ok(json!({ "rows": m.rows.len(), "cols": m.cols.len(), "argmax": m.argmax(), "argmax_accuracy": accuracy, "written": written(out.commit()?) }))
}
