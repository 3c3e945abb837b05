//! Pipeline stages. Each reads the artifacts of earlier stages from a
//! replicate directory and writes its own.

use crate::artifacts::RunDir;
use crate::config::{Method, RunConfig};
use anyhow::{bail, Context, Result};
use aor_core::obsopt::{
    carve_validation, describe, first_iteration, iterate_improvement, next_iteration, ImageFeatures, ImprovementRun,
    ImprovementSetup, Iteration, LikelihoodParams, ObservationWeights,
};
use aor_core::planner::{read_labels, write_labels, ActionValueLabels, BeliefTreeSearch};
use aor_core::policy::{
    evaluate, read_policy, train_actor_critic, train_nfq, train_supervised, write_policy, AccuracyTable, EpisodeSource,
    TrainedPolicy, UniformPolicy,
};
use aor_core::seed::{indexed_rng, stream_rng, stream_seed};
use aor_core::world::{
    design_scores, novel_objects_split, novel_views_split, read_dataset, write_dataset, Split, SplitKind, ViewDataset,
    ViewWorld,
};
use std::fs;
use std::path::Path;

pub const DATASET_FILE: &str = "dataset.txt";
pub const SPLIT_FILE: &str = "split.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const OBSOPT_LOG_FILE: &str = "obsopt/log.txt";

pub fn policy_file(method: Method) -> String {
    format!("policies/{}.txt", method.name())
}

fn iteration_dir(index: usize) -> String {
    format!("obsopt/iter-{index}")
}

fn dataset_bytes(dataset: &ViewDataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_dataset(dataset, &mut buf)?;
    Ok(buf)
}

fn load_dataset(dir: &RunDir) -> Result<ViewDataset> {
    Ok(read_dataset(&dir.read(DATASET_FILE, "generate")?)?)
}

fn load_split(dir: &RunDir) -> Result<Split> {
    Ok(Split::read(&dir.read(SPLIT_FILE, "generate")?)?)
}

fn load_labels(dir: &RunDir) -> Result<ActionValueLabels> {
    Ok(read_labels(&dir.read(LABELS_FILE, "plan")?)?)
}

fn source<'a>(
    config: &RunConfig,
    world: &'a ViewWorld,
    model: &'a aor_core::LikelihoodModel,
    starts: &'a [usize],
) -> EpisodeSource<'a> {
    EpisodeSource {
        world,
        model,
        starts,
        reward: config.reward,
        max_steps: config.episodes.max_steps,
    }
}

/// World, design scores and train/test split.
pub fn generate(config: &RunConfig, dir: &RunDir) -> Result<()> {
    let design = config.design()?;
    let scores = design_scores(&design, stream_seed(dir.seed, "world"))?;
    let world = ViewWorld::new(
        design.num_labels,
        design.views,
        design.offsets.clone(),
        design.jitter_prob,
    )?;
    let dataset = ViewDataset::new(world, scores)?;
    let mut rng = stream_rng(dir.seed, "split");
    let split = match config.split.kind {
        SplitKind::NovelViews => novel_views_split(&dataset.world, config.split.arc, &mut rng)?,
        SplitKind::NovelObjects => novel_objects_split(&dataset.world, config.split.train_fraction, &mut rng)?,
    };
    dir.write(DATASET_FILE, &dataset_bytes(&dataset)?)?;
    let mut buf = Vec::new();
    split.write(&mut buf)?;
    dir.write(SPLIT_FILE, &buf)
}

/// Planner action-values for every training image.
pub fn plan(config: &RunConfig, dir: &RunDir) -> Result<()> {
    let dataset = load_dataset(dir)?;
    let split = load_split(dir)?;
    let labels = plan_labels(config, &dataset.world, &dataset.model, &split.train)?;
    let mut buf = Vec::new();
    write_labels(&labels, &mut buf)?;
    dir.write(LABELS_FILE, &buf)
}

fn plan_labels(
    config: &RunConfig,
    world: &ViewWorld,
    model: &aor_core::LikelihoodModel,
    train: &[usize],
) -> Result<ActionValueLabels> {
    let bts = BeliefTreeSearch::new(world, model, config.reward, config.planner_params()?)?;
    Ok(bts.label_training_set(train)?)
}

pub fn train(config: &RunConfig, dir: &RunDir, method: Method) -> Result<()> {
    let dataset = load_dataset(dir)?;
    let split = load_split(dir)?;
    let labels = if method.needs_labels() {
        Some(load_labels(dir)?)
    } else {
        None
    };
    let src = source(config, &dataset.world, &dataset.model, &split.train);
    let mut rng = stream_rng(dir.seed, method.name());
    let policy = match method {
        Method::Rnd => TrainedPolicy::Random(UniformPolicy {
            num_actions: dataset.world.offsets().len(),
        }),
        Method::Nfq | Method::NfqGuided => TrainedPolicy::Q(train_nfq(&src, labels.as_ref(), &config.rl, &mut rng)?),
        Method::Ac | Method::AcGuided => {
            TrainedPolicy::Actor(train_actor_critic(&src, labels.as_ref(), &config.rl, &mut rng)?)
        }
        Method::Lstm => {
            let labels = labels.as_ref().expect("loaded above");
            let (policy, report) = train_supervised(&src, labels, &config.supervised, &mut rng)?;
            log::info!(
                "lstm: final loss {:.4}, train accuracy {:.3}",
                report.final_loss,
                report.train_accuracy
            );
            TrainedPolicy::Recurrent(policy)
        }
    };
    let mut buf = Vec::new();
    write_policy(&policy, &mut buf)?;
    dir.write(&policy_file(method), &buf)
}

/// Accuracy after 0..=max_steps actions on the test images, one row block
/// per configured method.
pub fn evaluate_methods(config: &RunConfig, dir: &RunDir) -> Result<AccuracyTable> {
    let dataset = load_dataset(dir)?;
    let split = load_split(dir)?;
    let src = source(config, &dataset.world, &dataset.model, &split.test);
    let mut table = AccuracyTable::new();
    for &method in &config.methods {
        let text = dir.read(&policy_file(method), &format!("train {}", method.name()))?;
        let mut policy = read_policy(&text)?;
        let index = Method::ALL.iter().position(|m| *m == method).expect("listed") as u64;
        let mut rng = indexed_rng(dir.seed, "eval", index);
        let acc = evaluate(
            policy.as_policy(),
            &src,
            config.episodes.eval_episodes_per_start,
            method.selection(),
            &mut rng,
        )?;
        table.add_runs(method.name(), &[acc])?;
    }
    write_table(dir, &table)?;
    Ok(table)
}

fn write_table(dir: &RunDir, table: &AccuracyTable) -> Result<()> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    dir.write(ACCURACY_FILE, &buf)?;
    dir.write(SUMMARY_FILE, table.summary().as_bytes())
}

/// Inputs of the reweighting loop. Features and the validation views come
/// from their own streams, so every iteration sees the same ones.
struct ObsOptInputs {
    dataset: ViewDataset,
    features: ImageFeatures,
    initial: LikelihoodParams,
    train: Vec<usize>,
    validation: Vec<usize>,
    test: Vec<usize>,
}

impl ObsOptInputs {
    fn load(config: &RunConfig, dir: &RunDir) -> Result<Self> {
        let dataset = load_dataset(dir)?;
        let split = load_split(dir)?;
        let world = &dataset.world;
        let labels: Vec<usize> = (0..world.num_observations()).map(|o| world.label_of(o)).collect();
        let features = ImageFeatures::from_scores(
            &dataset.scores,
            &labels,
            &config.obsopt.features,
            &mut stream_rng(dir.seed, "features"),
        )?;
        let (train, validation) = carve_validation(
            world,
            &split.train,
            config.split.validation_arc,
            &mut stream_rng(dir.seed, "validation"),
        )?;
        let initial = LikelihoodParams::zeros(world.num_labels(), features.dim());
        Ok(Self {
            dataset,
            features,
            initial,
            train,
            validation,
            test: split.test,
        })
    }

    fn setup<'a>(&'a self, config: &'a RunConfig) -> Result<ImprovementSetup<'a>> {
        Ok(ImprovementSetup {
            world: &self.dataset.world,
            features: &self.features,
            initial: &self.initial,
            train: &self.train,
            validation: &self.validation,
            test: &self.test,
            planner: config.planner_params()?,
            reward: config.reward,
            max_steps: config.episodes.max_steps,
            supervised: &config.supervised,
            eval_episodes: config.episodes.eval_episodes_per_start,
        })
    }
}

fn write_iteration(dir: &RunDir, inputs: &ObsOptInputs, it: &Iteration) -> Result<()> {
    let world = &inputs.dataset.world;
    let base = iteration_dir(it.index);
    let mut buf = Vec::new();
    it.weights.write(&mut buf)?;
    dir.write(&format!("{base}/weights.txt"), &buf)?;
    buf.clear();
    it.params.write(&mut buf)?;
    dir.write(&format!("{base}/classifier.txt"), &buf)?;
    let scores = it.params.scores(&inputs.features);
    dir.write(
        &format!("{base}/{DATASET_FILE}"),
        &dataset_bytes(&ViewDataset::new(world.clone(), scores)?)?,
    )?;
    buf.clear();
    write_labels(&it.labels, &mut buf)?;
    dir.write(&format!("{base}/{LABELS_FILE}"), &buf)?;
    buf.clear();
    write_policy(&TrainedPolicy::Recurrent(it.policy.clone()), &mut buf)?;
    dir.write(&format!("{base}/lstm.txt"), &buf)?;
    let mut table = AccuracyTable::new();
    table.add_runs("validation", std::slice::from_ref(&it.validation))?;
    table.add_runs("test", std::slice::from_ref(&it.test))?;
    buf.clear();
    table.write_csv(&mut buf)?;
    dir.write(&format!("{base}/{ACCURACY_FILE}"), &buf)
}

fn read_iteration(dir: &RunDir, index: usize) -> Result<Iteration> {
    let base = iteration_dir(index);
    let read = |name: &str| dir.read(&format!("{base}/{name}"), "reweight");
    let weights = ObservationWeights::read(&read("weights.txt")?)?;
    let params = LikelihoodParams::read(&read("classifier.txt")?)?;
    let model = read_dataset(&read(DATASET_FILE)?)?.model;
    let labels = read_labels(&read(LABELS_FILE)?)?;
    let policy = match read_policy(&read("lstm.txt")?)? {
        TrainedPolicy::Recurrent(p) => p,
        _ => bail!("{base}/lstm.txt does not hold a recurrent policy"),
    };
    let table = AccuracyTable::read_csv(&read(ACCURACY_FILE)?)?;
    let curve = |name: &str| -> Result<Vec<f64>> {
        let rows: Vec<f64> = table
            .rows()
            .iter()
            .filter(|r| r.method == name)
            .map(|r| r.mean)
            .collect();
        if rows.is_empty() {
            bail!("{base}/{ACCURACY_FILE} has no {name} rows");
        }
        Ok(rows)
    };
    Ok(Iteration {
        index,
        weights,
        params,
        model,
        labels,
        policy,
        validation: curve("validation")?,
        test: curve("test")?,
    })
}

fn append_log(dir: &RunDir, lines: &[String]) -> Result<()> {
    let mut text = if dir.exists(OBSOPT_LOG_FILE) {
        fs::read_to_string(dir.path(OBSOPT_LOG_FILE))?
    } else {
        String::new()
    };
    for line in lines {
        text.push_str(line);
        text.push('\n');
    }
    dir.write(OBSOPT_LOG_FILE, text.as_bytes())
}

/// One reweighting iteration on top of the latest one in `dir`.
pub fn reweight(config: &RunConfig, dir: &RunDir) -> Result<Iteration> {
    let inputs = ObsOptInputs::load(config, dir)?;
    let setup = inputs.setup(config)?;
    let cfg = &config.obsopt.improvement;
    let latest = (1..).take_while(|k| dir.exists(&iteration_dir(*k))).last();
    let seed = stream_seed(dir.seed, "obsopt");
    let (it, mut lines) = match latest {
        None => (first_iteration(&setup, cfg, seed)?, Vec::new()),
        Some(k) => {
            let prev = read_iteration(dir, k)?;
            let it = next_iteration(&setup, cfg, &prev, seed)?;
            let note = (it.validation_mean() < prev.validation_mean())
                .then(|| format!("validation accuracy stopped improving after iteration {k}"));
            (it, note.into_iter().collect())
        }
    };
    write_iteration(dir, &inputs, &it)?;
    lines.insert(0, describe(&it));
    append_log(dir, &lines)?;
    Ok(it)
}

/// The whole reweighting loop with early stopping.
pub fn improve(config: &RunConfig, dir: &RunDir) -> Result<ImprovementRun> {
    if dir.exists("obsopt") {
        bail!("{} already holds reweighting iterations", dir.path("obsopt").display());
    }
    let inputs = ObsOptInputs::load(config, dir)?;
    let run = iterate_improvement(
        &inputs.setup(config)?,
        &config.obsopt.improvement,
        stream_seed(dir.seed, "obsopt"),
    )?;
    for it in &run.iterations {
        write_iteration(dir, &inputs, it)?;
    }
    append_log(dir, &run.log)?;
    Ok(run)
}

/// Every stage of one replicate. Returns the method table and the test
/// curve of each reweighting iteration.
pub fn run_replicate(config: &RunConfig, dir: &RunDir) -> Result<(AccuracyTable, Vec<Vec<f64>>)> {
    generate(config, dir)?;
    plan(config, dir)?;
    for &method in &config.methods {
        train(config, dir, method).with_context(|| format!("training {}", method.name()))?;
    }
    let table = evaluate_methods(config, dir)?;
    let run = improve(config, dir)?;
    Ok((table, run.iterations.into_iter().map(|it| it.test).collect()))
}

/// All replicates, then a table pooled across them in `out`.
pub fn pipeline(config: &RunConfig, config_text: &str, out: &Path) -> Result<AccuracyTable> {
    let mut per_method: Vec<Vec<Vec<f64>>> = vec![Vec::new(); config.methods.len()];
    let mut per_iteration: Vec<Vec<Vec<f64>>> = Vec::new();
    for replicate in 0..config.replicates {
        let dir = RunDir::prepare(out, config_text, config, replicate)?;
        log::info!("replicate {replicate} (seed {})", dir.seed);
        let (table, iterations) = run_replicate(config, &dir)?;
        for (runs, method) in per_method.iter_mut().zip(&config.methods) {
            runs.push(
                table
                    .rows()
                    .iter()
                    .filter(|r| r.method == method.name())
                    .map(|r| r.mean)
                    .collect(),
            );
        }
        for (k, test) in iterations.into_iter().enumerate() {
            if per_iteration.len() <= k {
                per_iteration.push(Vec::new());
            }
            per_iteration[k].push(test);
        }
    }
    let mut pooled = AccuracyTable::new();
    for (runs, method) in per_method.iter().zip(&config.methods) {
        pooled.add_runs(method.name(), runs)?;
    }
    for (k, runs) in per_iteration.iter().enumerate() {
        pooled.add_runs(&format!("lstm-i{}", k + 1), runs)?;
    }
    let mut buf = Vec::new();
    pooled.write_csv(&mut buf)?;
    fs::write(out.join(ACCURACY_FILE), buf)?;
    fs::write(out.join(SUMMARY_FILE), pooled.summary())?;
    Ok(pooled)
}
