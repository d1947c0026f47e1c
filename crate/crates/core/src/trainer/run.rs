use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::models::{parameter_gradient, Checkpoint, ModelBundle};
use super::plan::{build_epoch_plan, Direction, FreezeMode, PlanStep, Stage, TrainingSchedule};
use crate::dataset::{resolve_path, DatasetManifest};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss, content_cycle_mrm, content_cycle_rmr, content_sup_m2r, content_sup_r2m,
    identity_loss, total_loss, LossBreakdown, LossKind, LossWeights,
};
use crate::tile::ImageTile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Rs,
    Map,
}

/// Where the trainer gets sample images from.
pub trait ImageSource {
    fn load(&self, id: &str, domain: Domain) -> Result<ImageTile>;
}

#[derive(Debug, Default, Clone)]
pub struct InMemorySource {
    images: HashMap<(String, Domain), ImageTile>,
}

impl InMemorySource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: &str, domain: Domain, img: ImageTile) {
        self.images.insert((id.to_string(), domain), img);
    }
}

impl ImageSource for InMemorySource {
    fn load(&self, id: &str, domain: Domain) -> Result<ImageTile> {
        self.images
            .get(&(id.to_string(), domain))
            .cloned()
            .ok_or_else(|| Error::Record {
                id: id.to_string(),
                reason: format!("no {domain:?} image loaded"),
            })
    }
}

/// Reads PNGs referenced by a manifest, caching decoded tiles.
#[derive(Debug)]
pub struct FileSource {
    manifest_path: PathBuf,
    manifest: DatasetManifest,
    cache: Mutex<HashMap<(String, Domain), ImageTile>>,
}

impl FileSource {
    pub fn new(manifest_path: impl AsRef<Path>, manifest: DatasetManifest) -> Self {
        Self {
            manifest_path: manifest_path.as_ref().to_path_buf(),
            manifest,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl ImageSource for FileSource {
    fn load(&self, id: &str, domain: Domain) -> Result<ImageTile> {
        let key = (id.to_string(), domain);
        if let Some(img) = self.cache.lock().unwrap().get(&key) {
            return Ok(img.clone());
        }
        let rec = self.manifest.get(id).ok_or_else(|| Error::Record {
            id: id.to_string(),
            reason: "not in manifest".into(),
        })?;
        let entry = match domain {
            Domain::Rs => rec.rs_path.as_deref(),
            Domain::Map => rec.map_path.as_deref(),
        }
        .ok_or_else(|| Error::Record {
            id: id.to_string(),
            reason: format!("record has no {domain:?} path"),
        })?;
        let img = ImageTile::read_png(resolve_path(&self.manifest_path, entry))?;
        self.cache.lock().unwrap().insert(key, img.clone());
        Ok(img)
    }
}

/// One Adam state per trainable component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub g_rm: Adam,
    pub g_mr: Adam,
    pub d_m: Adam,
    pub d_r: Adam,
}

impl OptimizerState {
    pub fn for_models(models: &ModelBundle, sched: &TrainingSchedule) -> Self {
        let adam = |n: usize| Adam::new(n, sched.adam_beta1, sched.adam_beta2);
        Self {
            g_rm: adam(models.g_rm.params().len()),
            g_mr: adam(models.g_mr.params().len()),
            d_m: adam(models.d_m.params().len()),
            d_r: adam(models.d_r.params().len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    GRm,
    GMr,
    DM,
    DR,
}

/// Result of one optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub loss: LossBreakdown,
    /// Components that received an Adam update.
    pub updated: Vec<Component>,
}

struct Objective {
    /// (weight, raw loss evaluated at the given parameters)
    terms: Vec<(f64, Box<dyn Fn(&[f64]) -> Result<f64>>)>,
}

impl Objective {
    fn new() -> Self {
        Self { terms: Vec::new() }
    }

    fn add(&mut self, weight: f64, f: impl Fn(&[f64]) -> Result<f64> + 'static) {
        if weight != 0.0 {
            self.terms.push((weight, Box::new(f)));
        }
    }

    fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn eval(&self, p: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for (w, f) in &self.terms {
            s += w * f(p)?;
        }
        Ok(s)
    }
}

fn non_finite(context: &str, parts: &[LossBreakdown], w: &LossWeights) -> Error {
    let ledger = total_loss(parts, w);
    Error::NonFinite {
        context: context.to_string(),
        ledger: serde_json::to_string(&ledger.terms).unwrap_or_default(),
    }
}

fn apply(
    objective: Objective,
    params: &mut [f64],
    adam: &mut Adam,
    lr: f64,
    context: &str,
) -> Result<bool> {
    if objective.is_empty() {
        return Ok(false);
    }
    let grad = parameter_gradient(params, |p| objective.eval(p))?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("{context} gradient"),
            ledger: format!("{grad:?}"),
        });
    }
    adam.update(params, &grad, lr);
    Ok(true)
}

/// Runs one plan step: computes the direction's losses, then one Adam update per
/// component that has at least one active (non-zero weighted) term.
pub fn run_step(
    step: &PlanStep,
    models: &mut ModelBundle,
    opt: &mut OptimizerState,
    w: &LossWeights,
    sched: &TrainingSchedule,
    lr: f64,
    source: &dyn ImageSource,
) -> Result<StepOutcome> {
    match step.direction {
        Direction::Paired => supervised_step(step, models, opt, w, lr, source),
        Direction::Rmr | Direction::Mrm => cycle_step(step, models, opt, w, sched, lr, source),
    }
}

fn supervised_step(
    step: &PlanStep,
    models: &mut ModelBundle,
    opt: &mut OptimizerState,
    w: &LossWeights,
    lr: f64,
    source: &dyn ImageSource,
) -> Result<StepOutcome> {
    let id = &step.sample_ids[0];
    let rs = source.load(id, Domain::Rs)?;
    let map = source.load(id, Domain::Map)?;

    let fake_map = models.g_rm.forward(&rs);
    let fake_rs = models.g_mr.forward(&map);
    let eps = w.eps_log;
    let dm_real = models.d_m.score(&map);
    let dr_real = models.d_r.score(&rs);
    let parts = vec![
        content_sup_r2m(&fake_map, &map, w)?,
        content_sup_m2r(&fake_rs, &rs, w)?,
        LossBreakdown::single(
            "adv_m",
            LossKind::Adversarial,
            adversarial_loss(&[dm_real], &[models.d_m.score(&fake_map)], eps)?,
        ),
        LossBreakdown::single(
            "adv_r",
            LossKind::Adversarial,
            adversarial_loss(&[dr_real], &[models.d_r.score(&fake_rs)], eps)?,
        ),
        LossBreakdown::single("idt_rm", LossKind::Identity, identity_loss(&models.g_rm.forward(&map), &map)?),
        LossBreakdown::single("idt_mr", LossKind::Identity, identity_loss(&models.g_mr.forward(&rs), &rs)?),
    ];
    let loss = total_loss(&parts, w);
    if !loss.is_finite() {
        return Err(non_finite(&format!("supervised step {id}"), &parts, w));
    }

    let snapshot = models.clone();
    let mut updated = Vec::new();

    // generator remote sensing -> map
    {
        let mut obj = Objective::new();
        let (g, input, truth, wc) = (snapshot.g_rm.clone_box(), rs.clone(), map.clone(), *w);
        obj.add(w.lambda_ctn, move |p| Ok(content_sup_r2m(&g.forward_with(p, &input), &truth, &wc)?.total));
        let (g, d, input) = (snapshot.g_rm.clone_box(), snapshot.d_m.clone_box(), rs.clone());
        obj.add(w.lambda_adv, move |p| adversarial_loss(&[dm_real], &[d.score(&g.forward_with(p, &input))], eps));
        let (g, target) = (snapshot.g_rm.clone_box(), map.clone());
        obj.add(w.lambda_idt, move |p| identity_loss(&g.forward_with(p, &target), &target));
        if apply(obj, models.g_rm.params_mut(), &mut opt.g_rm, lr, "g_rm")? {
            updated.push(Component::GRm);
        }
    }
    // generator map -> remote sensing
    {
        let mut obj = Objective::new();
        let (g, input, truth, wc) = (snapshot.g_mr.clone_box(), map.clone(), rs.clone(), *w);
        obj.add(w.lambda_ctn, move |p| Ok(content_sup_m2r(&g.forward_with(p, &input), &truth, &wc)?.total));
        let (g, d, input) = (snapshot.g_mr.clone_box(), snapshot.d_r.clone_box(), map.clone());
        obj.add(w.lambda_adv, move |p| adversarial_loss(&[dr_real], &[d.score(&g.forward_with(p, &input))], eps));
        let (g, target) = (snapshot.g_mr.clone_box(), rs.clone());
        obj.add(w.lambda_idt, move |p| identity_loss(&g.forward_with(p, &target), &target));
        if apply(obj, models.g_mr.params_mut(), &mut opt.g_mr, lr, "g_mr")? {
            updated.push(Component::GMr);
        }
    }
    if discriminator_update(&snapshot, models, opt, w, lr, Domain::Map, &map, &fake_map)? {
        updated.push(Component::DM);
    }
    if discriminator_update(&snapshot, models, opt, w, lr, Domain::Rs, &rs, &fake_rs)? {
        updated.push(Component::DR);
    }
    Ok(StepOutcome { loss, updated })
}

/// Discriminators ascend the adversarial loss on the pre-update fakes.
#[allow(clippy::too_many_arguments)]
fn discriminator_update(
    snapshot: &ModelBundle,
    models: &mut ModelBundle,
    opt: &mut OptimizerState,
    w: &LossWeights,
    lr: f64,
    domain: Domain,
    real: &ImageTile,
    fake: &ImageTile,
) -> Result<bool> {
    let (d, params, adam, name) = match domain {
        Domain::Map => (snapshot.d_m.clone_box(), models.d_m.params_mut(), &mut opt.d_m, "d_m"),
        Domain::Rs => (snapshot.d_r.clone_box(), models.d_r.params_mut(), &mut opt.d_r, "d_r"),
    };
    let (real, fake, eps) = (real.clone(), fake.clone(), w.eps_log);
    let mut obj = Objective::new();
    obj.add(-w.lambda_adv, move |p| {
        adversarial_loss(&[d.score_with(p, &real)], &[d.score_with(p, &fake)], eps)
    });
    apply(obj, params, adam, lr, name)
}

fn cycle_step(
    step: &PlanStep,
    models: &mut ModelBundle,
    opt: &mut OptimizerState,
    w: &LossWeights,
    sched: &TrainingSchedule,
    lr: f64,
    source: &dyn ImageSource,
) -> Result<StepOutcome> {
    let id = &step.sample_ids[0];
    let rmr = step.direction == Direction::Rmr;
    let (src_domain, other_domain) = if rmr {
        (Domain::Rs, Domain::Map)
    } else {
        (Domain::Map, Domain::Rs)
    };
    let x = source.load(id, src_domain)?;
    let partner = match step.sample_ids.get(1) {
        Some(pid) => Some(source.load(pid, other_domain)?),
        None => None,
    };

    // first and second step generators, and the discriminator judging the first step
    let (first, second, disc) = if rmr {
        (&models.g_rm, &models.g_mr, &models.d_m)
    } else {
        (&models.g_mr, &models.g_rm, &models.d_r)
    };
    let mid = first.forward(&x);
    let recon = second.forward(&mid);
    let cycle = move |recon: &ImageTile, orig: &ImageTile, w: &LossWeights| {
        if rmr {
            content_cycle_rmr(recon, orig, w)
        } else {
            content_cycle_mrm(recon, orig, w)
        }
    };
    let eps = w.eps_log;
    // Without an unpaired partner the real term is log(1) = 0.
    let d_real = partner.as_ref().map_or(1.0, |p| disc.score(p));
    let (first_name, second_name, adv_name) = if rmr {
        ("idt_rm", "idt_mr", "adv_m")
    } else {
        ("idt_mr", "idt_rm", "adv_r")
    };

    let mut parts = vec![
        cycle(&recon, &x, w)?,
        LossBreakdown::single(
            adv_name,
            LossKind::Adversarial,
            adversarial_loss(&[d_real], &[disc.score(&mid)], eps)?,
        ),
    ];
    if let Some(p) = &partner {
        parts.push(LossBreakdown::single(first_name, LossKind::Identity, identity_loss(&first.forward(p), p)?));
    }
    parts.push(LossBreakdown::single(second_name, LossKind::Identity, identity_loss(&second.forward(&x), &x)?));
    let loss = total_loss(&parts, w);
    if !loss.is_finite() {
        return Err(non_finite(&format!("{:?} cycle step {id}", step.direction), &parts, w));
    }

    let snapshot = models.clone();
    let (s_first, s_second, s_disc) = if rmr {
        (&snapshot.g_rm, &snapshot.g_mr, &snapshot.d_m)
    } else {
        (&snapshot.g_mr, &snapshot.g_rm, &snapshot.d_r)
    };
    let frozen = step.freeze_first_step;
    let wc = *w;

    // first-step generator
    let mut obj = Objective::new();
    if !(frozen && sched.freeze_mode == FreezeMode::AllTerms) {
        if !frozen {
            let (g1, g2, x) = (s_first.clone_box(), s_second.clone_box(), x.clone());
            obj.add(w.lambda_ctn, move |p| Ok(cycle(&g2.forward(&g1.forward_with(p, &x)), &x, &wc)?.total));
        }
        let (g1, d, x) = (s_first.clone_box(), s_disc.clone_box(), x.clone());
        obj.add(w.lambda_adv, move |p| adversarial_loss(&[d_real], &[d.score(&g1.forward_with(p, &x))], eps));
        if let Some(pt) = &partner {
            let (g1, pt) = (s_first.clone_box(), pt.clone());
            obj.add(w.lambda_idt, move |p| identity_loss(&g1.forward_with(p, &pt), &pt));
        }
    }
    let mut updated = Vec::new();
    let (first_mut, first_adam, first_comp) = if rmr {
        (models.g_rm.params_mut(), &mut opt.g_rm, Component::GRm)
    } else {
        (models.g_mr.params_mut(), &mut opt.g_mr, Component::GMr)
    };
    if apply(obj, first_mut, first_adam, lr, "first-step generator")? {
        updated.push(first_comp);
    }

    // second-step generator sees the pre-update intermediate image
    let mut obj = Objective::new();
    let (g2, mid_c, x_c) = (s_second.clone_box(), mid.clone(), x.clone());
    obj.add(w.lambda_ctn, move |p| Ok(cycle(&g2.forward_with(p, &mid_c), &x_c, &wc)?.total));
    let (g2, x_c) = (s_second.clone_box(), x.clone());
    obj.add(w.lambda_idt, move |p| identity_loss(&g2.forward_with(p, &x_c), &x_c));
    let (second_mut, second_adam, second_comp) = if rmr {
        (models.g_mr.params_mut(), &mut opt.g_mr, Component::GMr)
    } else {
        (models.g_rm.params_mut(), &mut opt.g_rm, Component::GRm)
    };
    if apply(obj, second_mut, second_adam, lr, "second-step generator")? {
        updated.push(second_comp);
    }

    if let Some(pt) = &partner {
        let domain = other_domain;
        if discriminator_update(&snapshot, models, opt, w, lr, domain, pt, &mid)? {
            updated.push(if rmr { Component::DM } else { Component::DR });
        }
    }
    updated.sort();
    Ok(StepOutcome { loss, updated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub stage: Stage,
    pub direction: Direction,
    pub sample_ids: Vec<String>,
    pub freeze: bool,
    pub lr: f64,
    pub total: f64,
    /// Weighted ledger entries keyed `label.term`.
    pub ledger: BTreeMap<String, f64>,
    pub updated: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    pub freeze: bool,
    pub steps: usize,
    pub unsupervised_steps: usize,
    pub mean_total: f64,
    /// Mean weighted contribution of each ledger entry over the epoch.
    pub mean_ledger: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochSummary>,
    pub final_params: Checkpoint,
}

impl TrainingLog {
    /// One JSON object per step.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn train(
    manifest: &DatasetManifest,
    models: &mut ModelBundle,
    w: &LossWeights,
    sched: &TrainingSchedule,
    seed: u64,
    source: &dyn ImageSource,
) -> Result<TrainingLog> {
    train_with_observer(manifest, models, w, sched, seed, source, |_, _| {})
}

/// Like [`train`], calling `observe` after every step with the updated models.
pub fn train_with_observer<F>(
    manifest: &DatasetManifest,
    models: &mut ModelBundle,
    w: &LossWeights,
    sched: &TrainingSchedule,
    seed: u64,
    source: &dyn ImageSource,
    mut observe: F,
) -> Result<TrainingLog>
where
    F: FnMut(&StepLog, &ModelBundle),
{
    sched.validate()?;
    w.validate()?;
    manifest.validate()?;
    let mut opt = OptimizerState::for_models(models, sched);
    let mut steps = Vec::new();
    let mut epochs = Vec::with_capacity(sched.epochs);
    for epoch in 0..sched.epochs {
        let plan = build_epoch_plan(manifest, epoch, sched, seed)?;
        let lr = sched.learning_rate(epoch);
        let mut sum_total = 0.0;
        let mut sum_ledger: BTreeMap<String, f64> = BTreeMap::new();
        let mut unsup = 0;
        for (i, step) in plan.steps.iter().enumerate() {
            let out = run_step(step, models, &mut opt, w, sched, lr, source)?;
            let ledger: BTreeMap<String, f64> = out
                .loss
                .terms
                .iter()
                .filter(|(_, t)| t.weight != 0.0)
                .map(|(k, t)| (k.clone(), t.contribution()))
                .collect();
            for (k, v) in &ledger {
                *sum_ledger.entry(k.clone()).or_insert(0.0) += v;
            }
            sum_total += out.loss.total;
            if step.stage == Stage::Unsupervised {
                unsup += 1;
            }
            let log = StepLog {
                epoch,
                step: i,
                stage: step.stage,
                direction: step.direction,
                sample_ids: step.sample_ids.clone(),
                freeze: step.freeze_first_step,
                lr,
                total: out.loss.total,
                ledger,
                updated: out.updated,
            };
            observe(&log, models);
            steps.push(log);
        }
        let n = plan.steps.len().max(1) as f64;
        epochs.push(EpochSummary {
            epoch,
            lr,
            freeze: sched.freeze_active(epoch),
            steps: plan.steps.len(),
            unsupervised_steps: unsup,
            mean_total: sum_total / n,
            mean_ledger: sum_ledger.into_iter().map(|(k, v)| (k, v / n)).collect(),
        });
    }
    Ok(TrainingLog {
        seed,
        steps,
        epochs,
        final_params: models.checkpoint(),
    })
}
