//! `relboost` command-line driver.
//!
//! Exit status: 0 on success, 1 for bad input or data, 2 when an internal
//! invariant is violated.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{derive_seed, RunConfig};
use crate::error::{Error, Result};
use crate::facts::FactStore;
use crate::ingest::{generate_all, ingest_csv, store_from_facts, Example, Schema};
use crate::learner::{train, BoostedModel};
use crate::logic::{parse_examples, parse_facts, render_examples, render_facts, RuleStyle};
use crate::metrics::{scores_csv, split_subjects, ActionReport, MetricsReport, ScoredExample, SplitInfo};
use crate::rules::{parse_rule_file, RuleSet};
use crate::synth::{generate, Policy, SynthConfig, SynthParams};

#[derive(Debug, Parser)]
#[command(name = "relboost", version, about = "Boosted relational rule learning over hourly trajectories")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed; every stochastic step derives its own stream from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Schema file (default: built-in clinical schema).
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Discretize a CSV of measurements into facts and per-action examples.
    Ingest(IngestArgs),
    /// Fit boosted trees for one or more actions.
    Train(TrainArgs),
    /// Print a model's trees as weighted rules.
    Rules(RulesArgs),
    /// Probability of an action at given (subject, hour) points.
    Predict(PredictArgs),
    /// Generate synthetic trajectories from a known policy.
    Synth(SynthArgs),
    /// Score models on examples and write a metrics report.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV with header `subject,time,parameter,value`.
    pub csv: PathBuf,
    #[arg(long)]
    pub out_facts: PathBuf,
    /// Directory receiving one `<action>.ex` file per action.
    #[arg(long)]
    pub out_examples: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub facts: PathBuf,
    /// An `.ex` file or a directory of them.
    #[arg(long)]
    pub examples: PathBuf,
    /// Action to learn; repeatable. Default: configured targets, else all actions.
    #[arg(long = "target")]
    pub targets: Vec<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    /// Train on this fraction of subjects only.
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Model file; only valid with a single target.
    #[arg(long, conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Directory receiving `<target>.json` per target.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RulesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Only this tree (0-based).
    #[arg(long)]
    pub tree: Option<usize>,
    /// Render with logical glyphs instead of ASCII.
    #[arg(long)]
    pub unicode: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub facts: PathBuf,
    /// `subject,hour`; repeatable.
    #[arg(long = "query", required_unless_present = "batch")]
    pub queries: Vec<String>,
    /// File of `subject,hour` lines.
    #[arg(long)]
    pub batch: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Ground-truth policy as a rule file (default: built-in policy).
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Generator settings (TOML).
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub hours: Option<u32>,
    #[arg(long)]
    pub missingness: Option<f64>,
    #[arg(long)]
    pub drift: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file; repeatable.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub facts: PathBuf,
    #[arg(long)]
    pub examples: PathBuf,
    /// Evaluate only the subjects held out by a split with this train fraction.
    #[arg(long)]
    pub train_frac: Option<f64>,
    /// Metrics report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Per-example scores (CSV).
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command, returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_internal() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut run = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        run.seed = seed;
    }
    if let Some(t) = cli.threads {
        run.threads = Some(t);
    }
    if let Some(s) = &cli.schema {
        run.schema = Some(s.clone());
    }
    run.validate()?;
    if let Some(n) = run.threads {
        // Fails only if a pool already exists, e.g. in tests running several commands.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&run, &a, out),
        Command::Train(a) => cmd_train(run, &a, out),
        Command::Rules(a) => cmd_rules(&a, out),
        Command::Predict(a) => cmd_predict(&run, &a, out),
        Command::Synth(a) => cmd_synth(&run, &a, out),
        Command::Eval(a) => cmd_eval(run, &a, out),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("<stdout>", e))
}

pub fn load_store(path: &Path, schema: &Schema) -> Result<FactStore> {
    store_from_facts(parse_facts(&read(path)?, schema)?, schema)
}

/// Examples from one `.ex` file or every `.ex` file in a directory (by name).
pub fn load_examples(path: &Path, schema: &Schema) -> Result<Vec<Example>> {
    if !path.is_dir() {
        return parse_examples(&read(path)?, schema);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ex"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in files {
        all.extend(parse_examples(&read(&f)?, schema)?);
    }
    Ok(all)
}

fn write_examples_dir(dir: &Path, schema: &Schema, by_action: &std::collections::BTreeMap<String, Vec<Example>>) -> Result<()> {
    for action in schema.actions() {
        let examples = &by_action[action.name()];
        write_file(&dir.join(format!("{}.ex", action.name())), &render_examples(examples))?;
    }
    Ok(())
}

fn cmd_ingest(run: &RunConfig, a: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let schema = run.load_schema()?;
    let file = std::fs::File::open(&a.csv).map_err(|e| Error::io(&a.csv, e))?;
    let store = ingest_csv(std::io::BufReader::new(file), &schema)?;
    let (by_action, derived) = generate_all(&store, schema.actions())?;
    write_file(&a.out_facts, &render_facts(&derived.facts(), &schema)?)?;
    write_examples_dir(&a.out_examples, &schema, &by_action)?;
    for action in schema.actions() {
        let ex = &by_action[action.name()];
        let pos = ex.iter().filter(|e| e.is_positive()).count();
        say(out, format_args!("{}\t{} positive\t{} negative\n", action.name(), pos, ex.len() - pos))?;
    }
    Ok(())
}

/// Subjects held out by the run's split, if one is configured.
fn held_out(run: &RunConfig, store: &FactStore) -> Result<Option<BTreeSet<String>>> {
    match run.train_frac {
        Some(frac) => {
            let (_, test) = split_subjects(store.subjects(), frac, derive_seed(run.seed, "split"))?;
            Ok(Some(test.into_iter().collect()))
        }
        None => Ok(None),
    }
}

fn cmd_train(mut run: RunConfig, a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(n) = a.trees {
        run.train.n_trees = n;
    }
    if let Some(f) = a.train_frac {
        run.train_frac = Some(f);
    }
    if !a.targets.is_empty() {
        run.targets = a.targets.clone();
    }
    run.validate()?;
    run.train.seed = derive_seed(run.seed, "subsample");
    let schema = run.load_schema()?;
    let targets = run.resolve_targets(&schema)?;
    let out_dir = a.out_dir.clone().or_else(|| run.output_dir.clone());
    if a.out.is_some() && targets.len() != 1 {
        return Err(Error::InvalidConfig(format!(
            "--out takes a single target, got {}; use --out-dir",
            targets.len()
        )));
    }
    if a.out.is_none() && out_dir.is_none() {
        return Err(Error::InvalidConfig("one of --out or --out-dir is required".into()));
    }

    let store = load_store(&a.facts, &schema)?;
    let mut examples = load_examples(&a.examples, &schema)?;
    if let Some(test) = held_out(&run, &store)? {
        examples.retain(|e| !test.contains(&e.subject));
    }
    for target in &targets {
        let model = train(&store, &examples, target, &schema, &run.train)?;
        let t = &model.trace;
        say(
            out,
            format_args!(
                "{target}: {} examples, {} positive, initial nll {:.6}\n",
                t.n_examples, t.n_positive, t.initial_nll
            ),
        )?;
        for (m, tree) in t.trees.iter().enumerate() {
            let gains: Vec<String> = tree.gains.iter().map(|g| format!("{g:.4}")).collect();
            say(out, format_args!("  tree {m}: nll {:.6} gains [{}]\n", tree.nll, gains.join(", ")))?;
        }
        say(out, format_args!("{target}: final nll {:.6}\n", t.final_nll()))?;
        let path = match (&a.out, &out_dir) {
            (Some(p), _) => p.clone(),
            (None, Some(dir)) => dir.join(format!("{target}.json")),
            (None, None) => unreachable!("checked above"),
        };
        write_file(&path, &model.to_json()?)?;
    }
    Ok(())
}

fn cmd_rules(a: &RulesArgs, out: &mut dyn Write) -> Result<()> {
    let model = BoostedModel::load(&a.model)?;
    if let Some(m) = a.tree {
        if m >= model.trees.len() {
            return Err(Error::InvalidConfig(format!(
                "tree {m} out of range; model has {} trees",
                model.trees.len()
            )));
        }
    }
    let style = if a.unicode { RuleStyle::Unicode } else { RuleStyle::Ascii };
    let text = RuleSet::from_model(&model).render(&model.schema, style, a.tree)?;
    match &a.out {
        Some(path) => write_file(path, &text),
        None => say(out, format_args!("{text}")),
    }
}

fn parse_query(text: &str) -> Result<(String, u32)> {
    let bad = || Error::InvalidConfig(format!("query `{text}` is not `subject,hour`"));
    let (s, t) = text.split_once(',').ok_or_else(bad)?;
    let time = t.trim().parse().map_err(|_| bad())?;
    Ok((s.trim().to_string(), time))
}

fn model_schema(run: &RunConfig, model: &BoostedModel) -> Result<Schema> {
    if run.schema.is_some() {
        model.check_schema(&run.load_schema()?)?;
    }
    Ok(model.schema.clone())
}

fn cmd_predict(run: &RunConfig, a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = BoostedModel::load(&a.model)?;
    let schema = model_schema(run, &model)?;
    let store = load_store(&a.facts, &schema)?;
    let mut queries = a.queries.iter().map(|q| parse_query(q)).collect::<Result<Vec<_>>>()?;
    if let Some(batch) = &a.batch {
        for line in read(batch)?.lines().filter(|l| !l.trim().is_empty()) {
            queries.push(parse_query(line)?);
        }
    }
    for (subject, time) in queries {
        say(out, format_args!("{}\n", model.predict(&store, &subject, time)?))?;
    }
    Ok(())
}

fn synth_params(run: &RunConfig, a: &SynthArgs) -> Result<SynthParams> {
    let mut params = match &a.synth_config {
        Some(path) => {
            let table: toml::Table = read(path)?
                .parse()
                .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
            if table.contains_key("seed") {
                return Err(Error::InvalidConfig(
                    "synth config may not set `seed`; use --seed or the run config".into(),
                ));
            }
            table
                .try_into()
                .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?
        }
        None => SynthParams::default(),
    };
    if let Some(n) = a.subjects {
        params.n_subjects = n;
    }
    if let Some(h) = a.hours {
        params.hours_min = h;
        params.hours_max = h;
    }
    if let Some(m) = a.missingness {
        params.missingness = m;
    }
    if let Some(d) = a.drift {
        params.drift = d;
    }
    params.seed = derive_seed(run.seed, "synth");
    Ok(params)
}

fn cmd_synth(run: &RunConfig, a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let schema = run.load_schema()?;
    let policy = match &a.policy {
        Some(path) => Policy::Rules(parse_rule_file(&read(path)?, &schema)?),
        None => Policy::standard(),
    };
    let cfg = SynthConfig::new(synth_params(run, a)?, schema.clone(), policy);
    let generated = generate(&cfg)?;
    let (by_action, derived) = generate_all(&generated.store, schema.actions())?;

    write_file(&a.out.join("schema.txt"), &schema.render())?;
    let mut policy_text = String::new();
    for set in cfg.policy.to_rulesets() {
        policy_text.push_str(&set.render(&schema, RuleStyle::Ascii, None)?);
    }
    write_file(&a.out.join("policy.rules"), &policy_text)?;
    write_file(&a.out.join("trajectories.facts"), &render_facts(&derived.facts(), &schema)?)?;
    write_examples_dir(&a.out.join("examples"), &schema, &by_action)?;
    write_file(&a.out.join("truth.truth"), &render_examples(&generated.truth))?;

    say(
        out,
        format_args!(
            "{} subjects, {} observed facts, {} ground-truth actions\n",
            cfg.params.n_subjects,
            generated.store.len(),
            generated.truth.len()
        ),
    )?;
    for action in schema.actions() {
        let truth = generated.truth.iter().filter(|e| e.action == action.name).count();
        let found = by_action[action.name()].iter().filter(|e| e.is_positive()).count();
        say(out, format_args!("{}\t{} taken\t{} labelled positive\n", action.name(), truth, found))?;
    }
    Ok(())
}

fn cmd_eval(mut run: RunConfig, a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    if let Some(f) = a.train_frac {
        run.train_frac = Some(f);
    }
    run.validate()?;
    let models = a
        .models
        .iter()
        .map(|p| BoostedModel::load(p))
        .collect::<Result<Vec<_>>>()?;
    let schema = model_schema(&run, &models[0])?;
    for m in &models[1..] {
        m.check_schema(&schema)?;
    }
    let store = load_store(&a.facts, &schema)?;
    let mut examples = load_examples(&a.examples, &schema)?;
    let test = held_out(&run, &store)?;
    if let Some(test) = &test {
        examples.retain(|e| test.contains(&e.subject));
    }

    let mut reports = Vec::new();
    let mut all_scored = Vec::new();
    for model in &models {
        let scored = examples
            .iter()
            .filter(|e| e.action.name() == model.target)
            .map(|e| {
                Ok(ScoredExample {
                    score: model.predict(&store, &e.subject, e.time)?,
                    example: e.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let report = ActionReport::new(&model.target, &scored)?;
        say(
            out,
            format_args!(
                "{}\t{} examples\t{} positive\tauc_roc {:.4}\tauc_pr {:.4}\n",
                report.action, report.n_examples, report.n_positive, report.auc_roc, report.auc_pr
            ),
        )?;
        reports.push(report);
        all_scored.extend(scored);
    }
    let report = MetricsReport {
        split: test.map(|t| SplitInfo {
            test_subjects: t.into_iter().collect(),
        }),
        actions: reports,
    };
    write_file(&a.out, &report.to_json()?)?;
    if let Some(path) = &a.scores {
        write_file(path, &scores_csv(&all_scored))?;
    }
    Ok(())
}
