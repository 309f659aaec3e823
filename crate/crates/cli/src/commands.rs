use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use orsm_core::corpus::{self, parse_uci_bow};
use orsm_core::eval::{self, classify_eval, document_features, retrieval_eval, RetrievalReport};
use orsm_core::orsm::{self, OrsmModel};
use orsm_core::partition::{self, AisCache};
use orsm_core::persist;
use orsm_core::rng::seeded;
use orsm_core::rsm;
use orsm_core::{Corpus, Document, ModelParams, Split};

use crate::config::{RunConfig, UsageError};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn read_corpus_files(docword: &Path, vocab: Option<&Path>, labels: Option<&Path>) -> Result<Corpus> {
    let vocab = vocab.map(open).transpose()?;
    let labels = labels.map(open).transpose()?;
    parse_uci_bow(open(docword)?, vocab, labels).with_context(|| format!("reading {}", docword.display()))
}

/// The corpus named by `paths.*`, with split tags when a split file is set.
fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let corpus = read_corpus_files(
        &cfg.path("paths.corpus")?,
        cfg.optional_path("paths.vocab").as_deref(),
        cfg.optional_path("paths.labels").as_deref(),
    )?;
    match cfg.optional_path("paths.splits") {
        Some(p) => {
            let splits = corpus::read_splits(open(&p)?).with_context(|| format!("reading {}", p.display()))?;
            Ok(corpus.with_splits(splits)?)
        }
        None => Ok(corpus),
    }
}

fn load_model(path: &Path) -> Result<OrsmModel> {
    persist::load_model(path).with_context(|| format!("loading {}", path.display()))
}

fn nonempty<'a>(docs: Vec<&'a Document>, what: &str) -> Result<Vec<&'a Document>> {
    if docs.is_empty() {
        bail!("the {what} split has no documents");
    }
    Ok(docs)
}

fn check_vocab(model: &OrsmModel, corpus: &Corpus) -> Result<()> {
    if model.vocab_size() != corpus.vocab_size() {
        bail!(
            "model has K={} but the corpus has K={}",
            model.vocab_size(),
            corpus.vocab_size()
        );
    }
    Ok(())
}

fn write_report(cfg: &RunConfig, name: &str, body: &str) -> Result<()> {
    let path = cfg.path("paths.output_dir")?.join(format!("{name}.report"));
    let mut w = create(&path)?;
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn ingest(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let mut corpus = read_corpus_files(
        &cfg.path("ingest.docword")?,
        cfg.optional_path("ingest.vocab").as_deref(),
        cfg.optional_path("ingest.labels").as_deref(),
    )?;
    let k_new: usize = cfg.parse("ingest.vocab_size")?;
    let valid: f64 = cfg.parse("ingest.valid_fraction")?;
    let test: f64 = cfg.parse("ingest.test_fraction")?;
    if !(0.0..=1.0).contains(&valid) || !(0.0..=1.0).contains(&test) || valid + test > 1.0 {
        return Err(UsageError("split fractions must be in [0, 1] and sum to at most 1".into()).into());
    }
    // Split first so truncation counts train frequencies only.
    corpus = corpus::split_corpus(&corpus, [1.0 - valid - test, valid, test], seed)?;
    if k_new > 0 {
        corpus = corpus::truncate_vocabulary(&corpus, k_new)?;
    }
    let mut w = create(&cfg.path("paths.corpus")?)?;
    corpus.write_uci(&mut w)?;
    w.flush()?;
    let mut w = create(&cfg.path("paths.vocab")?)?;
    corpus.vocabulary.write(&mut w)?;
    w.flush()?;
    let mut w = create(&cfg.path("paths.splits")?)?;
    corpus.write_splits(&mut w)?;
    w.flush()?;
    if let Some(p) = cfg.optional_path("paths.labels") {
        let mut w = create(&p)?;
        corpus.write_labels(&mut w)?;
        w.flush()?;
    }
    let count = |s| corpus.split_indices(s).len();
    let summary = format!(
        "documents = {}\nvocab_size = {}\ntrain = {}\nvalid = {}\ntest = {}\nwords = {}\n",
        corpus.len(),
        corpus.vocab_size(),
        count(Split::Train),
        count(Split::Valid),
        count(Split::Test),
        corpus.total_words()
    );
    write_report(cfg, "ingest", &summary)?;
    Ok(summary)
}

fn epoch_line(r: &rsm::EpochReport) {
    eprintln!(
        "epoch {:>4}  updates {:>7}  lr {:.2e}  k {:>2}  recon {:.5}  activity {:.4}",
        r.epoch + 1,
        r.updates,
        r.learning_rate,
        r.cd_k,
        r.reconstruction_error,
        r.mean_hidden_activity
    );
}

/// CD training: plain RSM when `softmaxes` is `None`, otherwise scaled
/// pretraining for that many second-layer units.
fn train_cd_command(cfg: &RunConfig, softmaxes: Option<u32>, name: &str) -> Result<String> {
    let seed = cfg.seed()?;
    let hyper = cfg.train_hyper()?;
    let epochs: usize = cfg.parse("train.epochs")?;
    let hidden: usize = cfg.parse("model.hidden")?;
    if hidden == 0 {
        return Err(UsageError("model.hidden must be positive".into()).into());
    }
    let out = cfg.path("paths.model")?;
    let corpus = load_corpus(cfg)?;
    let train = nonempty(corpus.split_documents(Split::Train), "train")?;
    let mut rng = seeded(seed);
    let mut params = ModelParams::init(hidden, corpus.vocab_size(), &train, &mut rng);
    let (model, reports) = match softmaxes {
        None => {
            let reports = rsm::train_cd(&mut params, &train, &hyper, epochs, 0, &mut rng, epoch_line)?;
            (OrsmModel::new(params, 0), reports)
        }
        Some(m) => {
            let mut model = OrsmModel::new(params, m);
            let reports = orsm::pretrain(&mut model, &train, &hyper, epochs, &mut rng, epoch_line)?;
            (model, reports)
        }
    };
    persist::save_model(&model, &out)?;
    let mut summary = format!("model = {}\nsoftmaxes = {}\nepochs = {epochs}\n", out.display(), model.softmaxes());
    if let Some(last) = reports.last() {
        writeln!(summary, "updates = {}\nreconstruction_error = {}", last.updates, last.reconstruction_error)?;
    }
    write_report(cfg, name, &summary)?;
    Ok(summary)
}

pub fn train_rsm(cfg: &RunConfig) -> Result<String> {
    train_cd_command(cfg, None, "train-rsm")
}

pub fn pretrain(cfg: &RunConfig) -> Result<String> {
    let m: u32 = cfg.parse("model.softmaxes")?;
    train_cd_command(cfg, Some(m), "pretrain")
}

pub fn train_dbm(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let hyper = cfg.train_hyper()?;
    let sap = cfg.sap_config()?;
    let out = cfg.path("paths.model")?;
    let mut model = load_model(&cfg.path("paths.init_model")?)?;
    let corpus = load_corpus(cfg)?;
    check_vocab(&model, &corpus)?;
    let train = nonempty(corpus.split_documents(Split::Train), "train")?;
    let probe = corpus.split_documents(Split::Valid);
    let mut rng = seeded(seed);
    let reports = orsm::sap_train(&mut model, &train, &hyper, &sap, &probe, &mut rng, |r| {
        eprintln!(
            "epoch {:>4}  updates {:>7}  lr {:.2e}  recon {:.5}  activity {:.4}  valid bound/word {:.5}",
            r.epoch + 1,
            r.updates,
            r.learning_rate,
            r.reconstruction_error,
            r.mean_topic_activity,
            r.probe_bound
        )
    })?;
    persist::save_model(&model, &out)?;
    let mut summary = format!("model = {}\nsoftmaxes = {}\nepochs = {}\n", out.display(), model.softmaxes(), sap.epochs);
    if let Some(last) = reports.last() {
        writeln!(summary, "updates = {}\nvalid_bound_per_word = {}", last.updates, last.probe_bound)?;
    }
    write_report(cfg, "train-dbm", &summary)?;
    Ok(summary)
}

fn eval_split(cfg: &RunConfig) -> Result<Split> {
    let raw = cfg.require("eval.split")?;
    raw.parse().map_err(|e: orsm_core::Error| UsageError(format!("eval.split: {e}")).into())
}

pub fn perplexity(cfg: &RunConfig) -> Result<String> {
    let seed = cfg.seed()?;
    let ais = cfg.ais_config()?;
    let split = eval_split(cfg)?;
    let model = load_model(&cfg.path("paths.model")?)?;
    let corpus = load_corpus(cfg)?;
    check_vocab(&model, &corpus)?;
    let docs = nonempty(corpus.split_documents(split), split.as_str())?;

    let cache_path = cfg.optional_path("paths.ais_cache");
    let mut cache = match &cache_path {
        Some(p) if p.exists() => persist::load_ais_cache(p).with_context(|| format!("loading {}", p.display()))?,
        _ => AisCache::default(),
    };
    let had = cache.entries.len();
    cache.fill(&model, &docs, &ais, seed)?;
    if let Some(p) = &cache_path {
        if cache.entries.len() != had {
            persist::save_ais_cache(&cache, p)?;
        }
    }
    let ppl = partition::perplexity(&model, &docs, &cache)?;
    let train = corpus.split_documents(Split::Train);
    let unigram = partition::unigram_perplexity(corpus.vocab_size(), &train, &docs);
    let min_ess = cache
        .entries
        .values()
        .map(|e| e.effective_sample_size)
        .filter(|x| !x.is_nan())
        .fold(f64::INFINITY, f64::min);
    let report = format!(
        "split = {split}\ndocuments = {}\nsoftmaxes = {}\nperplexity = {ppl}\nunigram_perplexity = {unigram}\nais_lengths = {}\nmin_effective_sample_size = {min_ess}\n",
        docs.len(),
        model.softmaxes(),
        cache.entries.len()
    );
    write_report(cfg, "perplexity", &report)?;
    Ok(format!("{ppl:.1}\n"))
}

pub fn features(cfg: &RunConfig) -> Result<String> {
    let mode = cfg.inference_mode()?;
    let out = cfg.path("paths.features")?;
    let model = load_model(&cfg.path("paths.model")?)?;
    let corpus = load_corpus(cfg)?;
    let feats = eval::doc_features(&model, &corpus, mode)?;
    persist::save_features(&feats, &out)?;
    let summary = format!(
        "features = {}\nrows = {}\ncols = {}\nmode = {mode}\n",
        out.display(),
        feats.rows(),
        feats.cols()
    );
    write_report(cfg, "features", &summary)?;
    Ok(summary)
}

fn labels_of(docs: &[&Document]) -> Vec<Vec<u32>> {
    docs.iter().map(|d| d.labels.clone()).collect()
}

fn retrieval_text(r: &RetrievalReport) -> String {
    let mut s = format!("mean_average_precision = {}\n", r.curve.average_precision);
    for (i, b) in r.length_buckets.iter().enumerate() {
        let _ = writeln!(
            s,
            "decile.{i} = lengths {}..{} queries {} mean_ap {}",
            b.min_len, b.max_len, b.queries, b.mean_ap
        );
    }
    s
}

pub fn retrieve(cfg: &RunConfig) -> Result<String> {
    let mode = cfg.inference_mode()?;
    let split = eval_split(cfg)?;
    let model = load_model(&cfg.path("paths.model")?)?;
    let corpus = load_corpus(cfg)?;
    check_vocab(&model, &corpus)?;
    let db = nonempty(corpus.split_documents(Split::Train), "train")?;
    let queries = nonempty(corpus.split_documents(split), split.as_str())?;
    let db_feats = document_features(&model, &db, mode)?;
    let q_feats = document_features(&model, &queries, mode)?;
    let lengths: Vec<u32> = queries.iter().map(|d| d.len()).collect();
    let report = retrieval_eval(&db_feats, &labels_of(&db), &q_feats, &labels_of(&queries), &lengths)?;

    let text = retrieval_text(&report);
    write_report(cfg, "retrieve", &text)?;
    let mut w = create(&cfg.path("paths.output_dir")?.join("pr_curve.csv"))?;
    writeln!(w, "recall,precision")?;
    for (r, p) in &report.curve.points {
        writeln!(w, "{r},{p}")?;
    }
    w.flush()?;
    Ok(format!("{:.4}\n", report.curve.average_precision))
}

pub fn classify(cfg: &RunConfig) -> Result<String> {
    let mode = cfg.inference_mode()?;
    let split = eval_split(cfg)?;
    let (clf_mode, metric, hyper) = cfg.classifier()?;
    let model = load_model(&cfg.path("paths.model")?)?;
    let corpus = load_corpus(cfg)?;
    check_vocab(&model, &corpus)?;
    let train = nonempty(corpus.split_documents(Split::Train), "train")?;
    let test = nonempty(corpus.split_documents(split), split.as_str())?;
    let n_labels = corpus.label_names.len();
    let train_feats = document_features(&model, &train, mode)?;
    let test_feats = document_features(&model, &test, mode)?;
    let clf = eval::train_linear_classifier(&train_feats, &labels_of(&train), n_labels, clf_mode, &hyper)?;
    let score = classify_eval(&clf, &test_feats, &labels_of(&test), metric)?;
    let metric_name = match metric {
        eval::ClassMetric::Accuracy => "accuracy",
        eval::ClassMetric::MeanAveragePrecision => "mean_average_precision",
    };
    write_report(cfg, "classify", &format!("split = {split}\n{metric_name} = {score}\n"))?;
    Ok(format!("{score:.4}\n"))
}

pub fn info(path: &Path) -> Result<String> {
    let model = load_model(path)?;
    let p = &model.params;
    Ok(format!(
        "F = {}\nK = {}\nM = {}\nparameters = {}\n",
        p.n_hidden(),
        p.vocab_size(),
        model.softmaxes(),
        p.n_parameters()
    ))
}
