use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use srl_core::classifiers::{ClassifierKind, TrainConfig};
use srl_core::clustering::{fit_gmm, ClusterModel, EmbeddingTable, GmmConfig};
use srl_core::corpus::{read_props_str, Corpus};
use srl_core::evaluation::{
    ablation_json, ablation_text, ablation_suite, cross_validate, curve_json, curve_text, learning_curve, score_props,
};
use srl_core::extraction::{find_predicate_node, score_extraction, Alg1Mode, Extractor, ExtractorKind};
use srl_core::features::FeatureSetConfig;
use srl_core::labelling::{train_pipeline, PipelineConfig, SrlPipeline};
use srl_core::synthetic;
use srl_core::treebank::read_tree_str;

#[derive(Parser)]
#[command(name = "srl", version, about = "Semantic role labelling over bracketed treebanks")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// key=value file supplying defaults for any long option
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// seed for every random choice
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (outputs do not depend on this)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a tree file
    Parse {
        #[arg(long)]
        trees: Option<PathBuf>,
        /// print each tree back in normalised bracketed form
        #[arg(long)]
        serialize: bool,
    },
    /// Score both candidate extractors against gold argument spans
    CompareExtractors {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster word embeddings with a diagonal Gaussian mixture
    Cluster {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a pipeline and save it
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label the predicates listed in a prop file
    Label {
        #[arg(long)]
        pipeline: Option<PathBuf>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted props against gold props
    Score {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// k-fold cross-validation
    Cv {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Cross-validate several feature-set presets on shared folds
    Ablate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Cross-validated F1 on nested subsamples of increasing size
    LearningCurve {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        report: ReportArgs,
        /// comma-separated, strictly increasing sample sizes
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Write the synthetic fixture corpus and embeddings
    Synth {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        doubles: Option<usize>,
    },
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    trees: Option<PathBuf>,
    #[arg(long)]
    props: Option<PathBuf>,
    /// keep sentences with more than one annotated predicate
    #[arg(long)]
    no_filter: bool,
}

#[derive(Args)]
struct ModeArgs {
    /// follow the extraction procedure literally (default)
    #[arg(long, conflicts_with = "repaired")]
    strict_alg1: bool,
    /// collect a non-splittable sister whole instead of dropping it
    #[arg(long)]
    repaired: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// preset name (phi0..phi16) or comma-separated templates; for ablate, a
    /// comma-separated list of presets
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    /// alg1 or node-mapping
    #[arg(long)]
    extractor: Option<String>,
    /// svm or maxent
    #[arg(long)]
    classifier: Option<String>,
    /// cluster model file for the word-cluster templates
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    mode: ModeArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    k: Option<usize>,
    /// text or json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Invalid(String),
}

fn invalid(e: impl Display) -> Failure {
    Failure::Invalid(e.to_string())
}

type Res<T> = Result<T, Failure>;

/// Flag values, falling back to the config file, then to defaults.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Res<Settings> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| invalid(format!("{} line {}: expected key=value", path.display(), i + 1)))?;
                file.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        Ok(Settings { file })
    }

    fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Res<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Failure::Usage(format!("config {key}={v}: {e}"))),
            None => Ok(None),
        }
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Res<T>
    where
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Res<T>
    where
        T::Err: Display,
    {
        self.opt(flag, key)?
            .ok_or_else(|| Failure::Usage(format!("missing required option --{key}")))
    }

    fn flag(&self, flag: bool, key: &str) -> Res<bool> {
        if flag {
            return Ok(true);
        }
        self.get(None, key, false)
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Res<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e| Failure::Usage(format!("--{key} {v}: {e}")))
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(invalid)?;
            stdout.flush().map_err(invalid)
        }
    }
}

struct LoadedCorpus {
    corpus: Corpus,
    echo: Vec<(String, String)>,
}

fn load_corpus(s: &Settings, args: CorpusArgs, filter_default: bool) -> Res<LoadedCorpus> {
    let trees: PathBuf = s.required(args.trees, "trees")?;
    let props: PathBuf = s.required(args.props, "props")?;
    let filter = filter_default && !s.flag(args.no_filter, "no-filter")?;
    let (corpus, diags) = Corpus::from_strs_lenient(&read(&trees)?, &read(&props)?);
    for d in &diags {
        eprintln!("warning: {d}");
    }
    let corpus = if filter {
        let (c, stats) = corpus.filter_simple();
        log::info!(
            "kept {} sentences, dropped {} sentences and {} instances",
            stats.kept_sentences,
            stats.dropped_sentences,
            stats.dropped_instances
        );
        c
    } else {
        corpus
    };
    let echo = vec![
        ("trees".to_string(), trees.display().to_string()),
        ("props".to_string(), props.display().to_string()),
        ("filter".to_string(), filter.to_string()),
    ];
    Ok(LoadedCorpus { corpus, echo })
}

fn alg1_mode(s: &Settings, m: &ModeArgs) -> Res<Alg1Mode> {
    if m.strict_alg1 {
        return Ok(Alg1Mode::Strict);
    }
    Ok(if s.flag(m.repaired, "repaired")? { Alg1Mode::Repaired } else { Alg1Mode::Strict })
}

struct ResolvedPipeline {
    config: PipelineConfig,
    clusters: Option<Arc<ClusterModel>>,
    features_arg: String,
}

fn resolve_pipeline(s: &Settings, p: PipelineArgs, seed: u64) -> Res<ResolvedPipeline> {
    let features_arg: String = s.get(p.features, "features", "phi0".to_string())?;
    let features = FeatureSetConfig::resolve(features_arg.split(',').next().unwrap_or_default())
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let mut config = PipelineConfig::new(features);
    config.strategy = parse_value("strategy", &s.get(p.strategy, "strategy", "one-step".to_string())?)?;
    let kind: ExtractorKind = parse_value("extractor", &s.get(p.extractor, "extractor", "alg1".to_string())?)?;
    config.extractor = Extractor::new(kind, alg1_mode(s, &p.mode)?);
    let defaults = TrainConfig::default();
    let classifier: ClassifierKind = parse_value("classifier", &s.get(p.classifier, "classifier", "svm".to_string())?)?;
    config.train = TrainConfig {
        kind: classifier,
        l2_strength: s.get(p.l2, "l2", defaults.l2_strength)?,
        svm_c: s.get(p.svm_c, "svm-c", defaults.svm_c)?,
        max_iter: s.get(p.max_iter, "max-iter", defaults.max_iter)?,
        tol: s.get(p.tol, "tol", defaults.tol)?,
        seed,
    };
    let clusters = match s.opt(p.clusters, "clusters")? {
        Some(path) => Some(Arc::new(ClusterModel::load(&path).map_err(invalid)?)),
        None => None,
    };
    Ok(ResolvedPipeline {
        config,
        clusters,
        features_arg,
    })
}

fn is_json(s: &Settings, r: &ReportArgs) -> Res<bool> {
    match s.get(r.format.clone(), "format", "text".to_string())?.as_str() {
        "text" => Ok(false),
        "json" => Ok(true),
        other => Err(Failure::Usage(format!("--format {other}: expected text or json"))),
    }
}

fn run(cli: Cli) -> Res<()> {
    let s = Settings::load(cli.config.as_deref())?;
    let seed: u64 = s.get(cli.seed, "seed", 0)?;
    let jobs: usize = s.get(
        cli.jobs,
        "jobs",
        std::thread::available_parallelism().map_or(1, |n| n.get()),
    )?;
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(invalid)?;
    pool.install(|| dispatch(&s, cli.command, seed))
}

fn dispatch(s: &Settings, command: Command, seed: u64) -> Res<()> {
    match command {
        Command::Parse { trees, serialize } => {
            let path: PathBuf = s.required(trees, "trees")?;
            let (sentences, errors) = read_tree_str(&read(&path)?);
            for e in &errors {
                eprintln!("error: {}: {e}", path.display());
            }
            let mut out = String::new();
            if serialize {
                for st in &sentences {
                    out += &format!("{} {}\n", st.id, st.tree.serialize());
                }
            }
            out += &format!("trees {} ok {} rejected\n", sentences.len(), errors.len());
            emit(None, &out)?;
            if errors.is_empty() {
                Ok(())
            } else {
                Err(Failure::Invalid(format!("{} malformed trees", errors.len())))
            }
        }
        Command::CompareExtractors { corpus, mode, out } => {
            let loaded = load_corpus(s, corpus, true)?;
            let mode = alg1_mode(s, &mode)?;
            let c = &loaded.corpus;
            let mut text = String::new();
            for (k, v) in &loaded.echo {
                text += &format!("# {k}={v}\n");
            }
            text += &format!("# alg1_mode={mode}\n# instances={}\n", c.len());
            text += &format!("{:<14} {:>8} {:>8} {:>8} {:>11} {:>6}\n", "extractor", "P", "R", "F1", "candidates", "gold");
            for kind in [ExtractorKind::Alg1, ExtractorKind::NodeMapping] {
                let ex = Extractor::new(kind, mode);
                let sets = c
                    .instances
                    .iter()
                    .map(|inst| {
                        let tree = &c.sentences[&inst.sentence_id].tree;
                        let pred = find_predicate_node(tree, inst.predicate_index)?;
                        ex.extract(tree, &pred)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(invalid)?;
                let prf = score_extraction(&sets, &c.instances).map_err(invalid)?;
                text += &format!(
                    "{:<14} {:>8.2} {:>8.2} {:>8.2} {:>11} {:>6}\n",
                    kind.to_string(),
                    100.0 * prf.precision,
                    100.0 * prf.recall,
                    100.0 * prf.f1,
                    prf.predicted,
                    prf.gold
                );
            }
            emit(s.opt(out, "out")?.as_deref(), &text)
        }
        Command::Cluster {
            embeddings,
            k,
            max_iter,
            tol,
            out,
        } => {
            let path: PathBuf = s.required(embeddings, "embeddings")?;
            let out: PathBuf = s.required(out, "out")?;
            let defaults = GmmConfig::default();
            let cfg = GmmConfig {
                k: s.get(k, "k", defaults.k)?,
                seed,
                max_iter: s.get(max_iter, "max-iter", defaults.max_iter)?,
                tol: s.get(tol, "tol", defaults.tol)?,
            };
            let table = EmbeddingTable::load(&path).map_err(invalid)?;
            let fit = fit_gmm(&table, &cfg).map_err(invalid)?;
            fit.model.save(&out).map_err(invalid)?;
            let mut text = format!(
                "# embeddings={}\n# k={}\n# seed={seed}\n# max_iter={}\n# tol={:?}\n",
                path.display(),
                cfg.k,
                cfg.max_iter,
                cfg.tol
            );
            text += "iteration mean_log_likelihood\n";
            for (i, ll) in fit.log_likelihood.iter().enumerate() {
                text += &format!("{} {ll:.6}\n", i + 1);
            }
            text += &format!("words {} dim {} converged {}\n", table.len(), table.dim(), fit.converged);
            emit(None, &text)
        }
        Command::Train { corpus, pipeline, out } => {
            let out: PathBuf = s.required(out, "out")?;
            let loaded = load_corpus(s, corpus, true)?;
            let rp = resolve_pipeline(s, pipeline, seed)?;
            let p = train_pipeline(&loaded.corpus, &rp.config, rp.clusters).map_err(invalid)?;
            p.save(&out).map_err(invalid)?;
            let mut text = String::new();
            for (k, v) in loaded.echo.iter().chain(&rp.config.echo()) {
                text += &format!("# {k}={v}\n");
            }
            text += &format!("trained on {} instances\n", loaded.corpus.len());
            emit(None, &text)
        }
        Command::Label { pipeline, corpus, out } => {
            let path: PathBuf = s.required(pipeline, "pipeline")?;
            let p = SrlPipeline::load(&path).map_err(invalid)?;
            let loaded = load_corpus(s, corpus, false)?;
            let labelled = p.label_corpus(&loaded.corpus).map_err(invalid)?;
            let text: String = labelled.iter().map(|l| l.to_line() + "\n").collect();
            emit(s.opt(out, "out")?.as_deref(), &text)
        }
        Command::Score { pred, gold } => {
            let pred: PathBuf = s.required(pred, "pred")?;
            let gold: PathBuf = s.required(gold, "gold")?;
            let (p, pd) = read_props_str(&read(&pred)?);
            let (g, gd) = read_props_str(&read(&gold)?);
            for d in pd.iter().chain(&gd) {
                eprintln!("error: {d}");
            }
            if !pd.is_empty() || !gd.is_empty() {
                return Err(Failure::Invalid("malformed prop lines".into()));
            }
            let prf = score_props(&p, &g).map_err(invalid)?;
            emit(
                None,
                &format!(
                    "P {:.4} R {:.4} F1 {:.4} matched {} predicted {} gold {}\n",
                    prf.precision, prf.recall, prf.f1, prf.matched, prf.predicted, prf.gold
                ),
            )
        }
        Command::Cv { corpus, pipeline, report } => {
            let loaded = load_corpus(s, corpus, true)?;
            let rp = resolve_pipeline(s, pipeline, seed)?;
            let k = s.get(report.k, "k", 10)?;
            let mut r = cross_validate(&loaded.corpus, &rp.config, rp.clusters, k, seed).map_err(invalid)?;
            r.config.splice(0..0, loaded.echo);
            let text = if is_json(s, &report)? { r.to_json() + "\n" } else { r.to_text() };
            emit(s.opt(report.out, "out")?.as_deref(), &text)
        }
        Command::Ablate { corpus, pipeline, report } => {
            let loaded = load_corpus(s, corpus, true)?;
            let rp = resolve_pipeline(s, pipeline, seed)?;
            let names: Vec<String> = rp.features_arg.split(',').map(|n| n.trim().to_string()).collect();
            let k = s.get(report.k, "k", 10)?;
            let mut rows = ablation_suite(&loaded.corpus, &names, &rp.config, rp.clusters, k, seed).map_err(invalid)?;
            for r in &mut rows {
                r.report.config.splice(0..0, loaded.echo.clone());
            }
            let text = if is_json(s, &report)? { ablation_json(&rows) + "\n" } else { ablation_text(&rows) };
            emit(s.opt(report.out, "out")?.as_deref(), &text)
        }
        Command::LearningCurve {
            corpus,
            pipeline,
            report,
            sizes,
        } => {
            let loaded = load_corpus(s, corpus, true)?;
            let rp = resolve_pipeline(s, pipeline, seed)?;
            let sizes: String = s.required(sizes, "sizes")?;
            let sizes = sizes
                .split(',')
                .filter(|x| !x.trim().is_empty())
                .map(|x| parse_value::<usize>("sizes", x.trim()))
                .collect::<Res<Vec<_>>>()?;
            let k = s.get(report.k, "k", 10)?;
            let points = learning_curve(&loaded.corpus, &sizes, &rp.config, rp.clusters.clone(), k, seed)
                .map_err(invalid)?;
            let mut echo = loaded.echo;
            echo.extend(rp.config.echo());
            echo.push(("k".into(), k.to_string()));
            echo.push(("clusters".into(), if rp.clusters.is_some() { "yes" } else { "no" }.into()));
            let text = if is_json(s, &report)? {
                curve_json(&points, &echo) + "\n"
            } else {
                curve_text(&points, &echo)
            };
            emit(s.opt(report.out, "out")?.as_deref(), &text)
        }
        Command::Synth {
            out_dir,
            sentences,
            doubles,
        } => {
            let dir: PathBuf = s.required(out_dir, "out-dir")?;
            let g = synthetic::generate(s.get(sentences, "sentences", 50)?, s.get(doubles, "doubles", 4)?, seed);
            fs::create_dir_all(&dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
            for (name, body) in [
                ("synthetic.trees", &g.trees),
                ("synthetic.props", &g.props),
                ("synthetic.emb", &g.embeddings),
            ] {
                let p = dir.join(name);
                fs::write(&p, body).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}\nRun `srl --help` for the synopsis.");
            ExitCode::from(2)
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
