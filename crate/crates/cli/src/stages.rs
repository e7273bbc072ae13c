//! The pipeline stages. Each reads the artifacts of earlier stages from the
//! output directory and writes its own next to them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use regrowth::cluster::{build_features, cluster_fires, cluster_map_svg, clusters_csv, early_precip, minmax_normalize, umap_embed};
use regrowth::convlstm::{log_csv, train, ConvLstmModel, ModelConfig, INPUT_CHANNELS};
use regrowth::eval::{eval_k_errors, histogram, HISTOGRAM_MAX};
use regrowth::logistic::FireRecovery;
use regrowth::nn::Checkpoint;
use regrowth::pipeline::{combine, fit_fire, forecast_fire, forecast_series, qualifying, tile_series, FireInputs, PipelineError, Regressors, TilePrediction};
use regrowth::preprocess::{
    filter_erratic, partition_subgrids, prepare_fire, split_train_val, ChannelScaling, PrepConfig, SampleTensor, Subgrid, Transform, SUBGRID,
};
use regrowth::raster::{parse_catalog, synth_generate, write_catalog, FireRecord, RasterStack, NDVI};

use crate::config::RunConfig;
use crate::manifest::{self, InputHasher, Lock};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    Train,
    Forecast,
    FitLogistic,
    TuckerFit,
    PredictK,
    Eval,
    Cluster,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Preprocess,
        Stage::Train,
        Stage::Forecast,
        Stage::FitLogistic,
        Stage::TuckerFit,
        Stage::PredictK,
        Stage::Eval,
        Stage::Cluster,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::Forecast => "forecast",
            Stage::FitLogistic => "fit-logistic",
            Stage::TuckerFit => "tucker-fit",
            Stage::PredictK => "predict-k",
            Stage::Eval => "eval",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }

    /// Config keys the stage's outputs depend on.
    fn config_keys(self) -> &'static [&'static str] {
        match self {
            Stage::Synth => &["synth."],
            Stage::Preprocess => &["seed", "preprocess."],
            Stage::Train => &["seed", "train."],
            Stage::Forecast => &["forecast."],
            Stage::FitLogistic | Stage::PredictK | Stage::Report => &[],
            Stage::TuckerFit => &["tucker."],
            Stage::Eval => &["eval."],
            Stage::Cluster => &["seed", "cluster."],
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

/// Where every artifact lives.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
    pub catalog: PathBuf,
    pub stacks: PathBuf,
    pub checkpoint: PathBuf,
}

impl Layout {
    pub fn new(cfg: &RunConfig) -> Self {
        Self { out: cfg.paths.out_dir.clone(), catalog: cfg.paths.catalog(), stacks: cfg.paths.stack_dir(), checkpoint: cfg.paths.checkpoint() }
    }

    pub fn raw(&self, id: &str) -> PathBuf {
        self.stacks.join(format!("{id}.rst"))
    }

    pub fn reference(&self, id: &str) -> PathBuf {
        self.stacks.join(format!("{id}.ref.rst"))
    }

    pub fn prepared(&self, id: &str) -> PathBuf {
        self.out.join("prepared").join(format!("{id}.rst"))
    }

    pub fn forecast(&self, id: &str) -> PathBuf {
        self.out.join("forecasts").join(format!("{id}.rst"))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub const TRUTH_CSV: &str = "truth.csv";
pub const SCALING_CSV: &str = "scaling.csv";
pub const SPLIT_CSV: &str = "split.csv";
pub const PREPROCESS_REPORT: &str = "preprocess_report.txt";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const FORECAST_MAE: &str = "forecast_mae.csv";
pub const LOGISTIC_TILES: &str = "logistic_tiles.csv";
pub const LOGISTIC_FIRES: &str = "logistic_fires.csv";
pub const TUCKER_CKP: &str = "tucker.ckp";
pub const TUCKER_OBJECTIVE: &str = "tucker_objective.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const EVAL_ERRORS: &str = "eval_errors.csv";
pub const EVAL_SUMMARY: &str = "eval_summary.csv";
pub const EVAL_HIST: &str = "eval_hist.svg";
pub const CLUSTERS: &str = "clusters.csv";
pub const REPORT: &str = "report.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Val,
    Holdout,
    Excluded,
}

impl Role {
    fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Holdout => "holdout",
            Role::Excluded => "excluded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRow {
    pub fire_id: String,
    pub role: Role,
    pub start_month: usize,
    pub reason: String,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    layout: Layout,
    inputs: InputHasher,
}

impl<'a> Ctx<'a> {
    fn read(&mut self, path: &Path, producer: &'static str) -> Result<Vec<u8>, CliError> {
        match fs::read(path) {
            Ok(bytes) => {
                self.inputs.add(path, &bytes);
                Ok(bytes)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::Missing { path: path.to_path_buf(), stage: producer }),
            Err(e) => Err(CliError::io(path, e)),
        }
    }

    fn text(&mut self, path: &Path, producer: &'static str) -> Result<String, CliError> {
        let bytes = self.read(path, producer)?;
        String::from_utf8(bytes).map_err(|_| CliError::invalid(format!("{} is not UTF-8", path.display())))
    }

    fn stack(&mut self, path: &Path, producer: &'static str) -> Result<RasterStack, CliError> {
        let bytes = self.read(path, producer)?;
        RasterStack::from_bytes(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    fn checkpoint(&mut self, path: &Path, producer: &'static str) -> Result<Checkpoint, CliError> {
        let bytes = self.read(path, producer)?;
        Checkpoint::from_bytes(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
    }

    fn catalog(&mut self) -> Result<Vec<FireRecord>, CliError> {
        let path = self.layout.catalog.clone();
        Ok(parse_catalog(&self.text(&path, "synth")?)?)
    }

    fn split(&mut self) -> Result<Vec<SplitRow>, CliError> {
        let path = self.layout.file(SPLIT_CSV);
        let t = Table::parse(&self.text(&path, "preprocess")?, &path)?;
        let mut rows = vec![];
        for r in 0..t.len() {
            let role = match t.get(r, "role")? {
                "train" => Role::Train,
                "val" => Role::Val,
                "holdout" => Role::Holdout,
                "excluded" => Role::Excluded,
                other => return Err(CliError::invalid(format!("{}: unknown role {other:?}", path.display()))),
            };
            rows.push(SplitRow { fire_id: t.get(r, "fire_id")?.to_string(), role, start_month: t.num(r, "start_month")?, reason: t.get(r, "reason")?.to_string() });
        }
        Ok(rows)
    }

    fn table(&mut self, name: &str, producer: &'static str) -> Result<Table, CliError> {
        let path = self.layout.file(name);
        Table::parse(&self.text(&path, producer)?, &path)
    }
}

fn ids(split: &[SplitRow], roles: &[Role]) -> Vec<String> {
    split.iter().filter(|r| roles.contains(&r.role)).map(|r| r.fire_id.clone()).collect()
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// A small header-indexed view of a CSV file.
pub struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let bad = |e: csv::Error| CliError::invalid(format!("{}: {e}", path.display()));
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(bad)?.iter().map(str::to_string).collect();
        let mut rows = vec![];
        for rec in rdr.records() {
            rows.push(rec.map_err(bad)?.iter().map(str::to_string).collect());
        }
        Ok(Self { path: path.to_path_buf(), headers, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, row: usize, col: &str) -> Result<&str, CliError> {
        let i = self
            .headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| CliError::invalid(format!("{}: no column {col}", self.path.display())))?;
        Ok(self.rows[row].get(i).map(String::as_str).unwrap_or(""))
    }

    pub fn num<T: FromStr>(&self, row: usize, col: &str) -> Result<T, CliError> {
        let v = self.get(row, col)?;
        v.parse().map_err(|_| CliError::invalid(format!("{} line {}: bad {col} {v:?}", self.path.display(), row + 2)))
    }
}

/// Runs one stage under the directory lock and appends its manifest line.
pub fn run_stage(cfg: &RunConfig, stage: Stage) -> Result<String, CliError> {
    let layout = Layout::new(cfg);
    let _lock = Lock::acquire(&layout.out)?;
    let started = Instant::now();
    let inputs = InputHasher::new(&layout.out);
    let mut ctx = Ctx { cfg, layout, inputs };
    let summary = match stage {
        Stage::Synth => synth(&mut ctx),
        Stage::Preprocess => preprocess(&mut ctx),
        Stage::Train => train_stage(&mut ctx),
        Stage::Forecast => forecast(&mut ctx),
        Stage::FitLogistic => fit_logistic(&mut ctx),
        Stage::TuckerFit => tucker_fit(&mut ctx),
        Stage::PredictK => predict_k(&mut ctx),
        Stage::Eval => eval(&mut ctx),
        Stage::Cluster => cluster(&mut ctx),
        Stage::Report => report(&mut ctx),
    }?;
    let Ctx { layout, inputs, .. } = ctx;
    manifest::append(&layout.out, stage.name(), inputs.finish(), cfg.hash_of(stage.config_keys()), started.elapsed())?;
    Ok(summary)
}

fn synth(ctx: &mut Ctx) -> Result<String, CliError> {
    let fires = synth_generate(&ctx.cfg.synth, ctx.cfg.synth.seed)?;
    let l = &ctx.layout;
    let records: Vec<FireRecord> = fires.iter().map(|f| f.record.clone()).collect();
    if let Some(dir) = l.catalog.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    write_catalog(&records, &l.catalog)?;
    let mut truth = String::from("fire_id,start_month,mean_k_true,burned_pixels\n");
    for f in &fires {
        write(&l.raw(&f.record.id), f.stack.to_bytes()?)?;
        write(&l.reference(&f.record.id), f.reference.to_bytes()?)?;
        let burned = f.truth.burned.iter().filter(|&&b| b).count();
        let _ = writeln!(truth, "{},{},{},{burned}", f.record.id, f.truth.start_month, f.truth.mean_k());
    }
    write(&l.file(TRUTH_CSV), truth)?;
    Ok(format!("synth: {} fires written to {}", fires.len(), l.stacks.display()))
}

fn transform_row(t: &Transform) -> (&'static str, f32, f32) {
    match *t {
        Transform::Identity => ("identity", 0.0, 1.0),
        Transform::Affine { offset, scale } => ("affine", offset, scale),
        Transform::LogAffine { offset, scale } => ("log_affine", offset, scale),
        Transform::Binarize => ("binarize", 0.0, 1.0),
    }
}

fn preprocess(ctx: &mut Ctx) -> Result<String, CliError> {
    let cfg = ctx.cfg;
    let catalog = ctx.catalog()?;
    let mut rows: Vec<SplitRow> = vec![];
    let mut prepared = vec![];
    let mut report = String::new();
    for rec in &catalog {
        let start_month = rec.containment_month.month_index();
        if !rec.is_included() {
            rows.push(SplitRow { fire_id: rec.id.clone(), role: Role::Excluded, start_month, reason: format!("{} acres below the size cutoff", rec.acres) });
            continue;
        }
        let raw = ctx.stack(&ctx.layout.raw(&rec.id), "synth")?;
        let reference = ctx.stack(&ctx.layout.reference(&rec.id), "synth")?;
        let prep = prepare_fire(&raw, &reference, start_month, &PrepConfig { knn_k: cfg.preprocess.knn_k })
            .map_err(|e| CliError::invalid(format!("fire {}: {e}", rec.id)))?;
        if prep.guarded > 0 {
            let _ = writeln!(report, "{}: {} cells re-imputed after the reference guard", rec.id, prep.guarded);
        }
        prepared.push((rec.id.clone(), start_month, prep));
    }

    let pairs: Vec<(String, &RasterStack)> = prepared.iter().map(|(id, _, p)| (id.clone(), &p.stack)).collect();
    let outcome = filter_erratic(&pairs, &cfg.preprocess.erratic)?;
    let month_of = |id: &str| prepared.iter().find(|p| p.0 == id).map_or(0, |p| p.1);
    for (id, why) in &outcome.excluded {
        let _ = writeln!(report, "{id}: excluded, {why}");
        rows.push(SplitRow { fire_id: id.clone(), role: Role::Excluded, start_month: month_of(id), reason: why.clone() });
    }

    let kept = &outcome.included;
    let holdout = cfg.preprocess.holdout;
    if kept.len() < holdout + 2 {
        return Err(CliError::invalid(format!("{} usable fires cannot cover a holdout of {holdout} plus training", kept.len())));
    }
    let outer = split_train_val(kept, (kept.len() - holdout) as f64 / kept.len() as f64, cfg.seed)?;
    let inner = split_train_val(&outer.train, cfg.preprocess.split_fraction, cfg.seed)?;
    if let Some(w) = &inner.warning {
        let _ = writeln!(report, "warning: {w}");
        eprintln!("warning: {w}");
    }
    for id in kept {
        let role = if inner.train.contains(id) {
            Role::Train
        } else if inner.val.contains(id) {
            Role::Val
        } else {
            Role::Holdout
        };
        rows.push(SplitRow { fire_id: id.clone(), role, start_month: month_of(id), reason: String::new() });
    }
    rows.sort_by_key(|r| catalog.iter().position(|c| c.id == r.fire_id));

    let mut scaling = String::from("fire_id,channel,transform,offset,scale\n");
    for (id, _, prep) in &prepared {
        if kept.contains(id) {
            write(&ctx.layout.prepared(id), prep.stack.to_bytes()?)?;
            for (ch, t) in &prep.scaling.transforms {
                let (kind, offset, scale) = transform_row(t);
                let _ = writeln!(scaling, "{id},{ch},{kind},{offset},{scale}");
            }
        }
    }
    let mut split = String::from("fire_id,role,start_month,reason\n");
    for r in &rows {
        let _ = writeln!(split, "{},{},{},\"{}\"", r.fire_id, r.role.name(), r.start_month, r.reason.replace('"', "'"));
    }
    write(&ctx.layout.file(SCALING_CSV), scaling)?;
    write(&ctx.layout.file(SPLIT_CSV), split)?;
    let count = |role| rows.iter().filter(|r| r.role == role).count();
    let summary = format!(
        "preprocess: {} train, {} val, {} holdout, {} excluded",
        count(Role::Train),
        count(Role::Val),
        count(Role::Holdout),
        count(Role::Excluded)
    );
    let _ = writeln!(report, "{summary}");
    write(&ctx.layout.file(PREPROCESS_REPORT), report)?;
    Ok(summary)
}

fn samples(ctx: &mut Ctx, fires: &[String]) -> Result<SampleTensor, CliError> {
    let mut out: Option<SampleTensor> = None;
    for id in fires {
        let stack = ctx.stack(&ctx.layout.prepared(id), "preprocess")?;
        let s = out.get_or_insert_with(|| SampleTensor::new(stack.t_len(), SUBGRID, SUBGRID, stack.n_channels()));
        for sub in partition_subgrids(&stack)? {
            s.push(id, &sub)?;
        }
    }
    Ok(out.unwrap_or_else(|| SampleTensor::new(0, SUBGRID, SUBGRID, INPUT_CHANNELS)))
}

fn train_stage(ctx: &mut Ctx) -> Result<String, CliError> {
    let cfg = ctx.cfg;
    let split = ctx.split()?;
    let train_set = samples(ctx, &ids(&split, &[Role::Train]))?;
    let mut val_set = samples(ctx, &ids(&split, &[Role::Val]))?;
    if val_set.is_empty() {
        val_set = SampleTensor::new(train_set.t_len, SUBGRID, SUBGRID, train_set.channels);
    }
    let model = ConvLstmModel::new(ModelConfig { in_channels: INPUT_CHANNELS, filters: cfg.train.filters }, cfg.seed);
    let outcome = train(model, &train_set, &val_set, &cfg.train_config(), |r| {
        eprintln!("epoch {:>3}  lr {:.2e}  train {:.5}  val {}", r.epoch, r.lr, r.train_mae, r.val_mae.map_or("-".to_string(), |v| format!("{v:.5}")));
    })?;
    write(&ctx.layout.checkpoint, outcome.best.to_checkpoint(false).to_bytes()?)?;
    write(&ctx.layout.file(TRAIN_LOG), log_csv(&outcome.log))?;
    let best = &outcome.log[outcome.best_epoch];
    Ok(format!(
        "train: {} samples, best epoch {} (train {:.5}, val {})",
        train_set.len(),
        outcome.best_epoch,
        best.train_mae,
        best.val_mae.map_or("-".into(), |v| format!("{v:.5}"))
    ))
}

fn scaling_of(t: &Table, fire: &str) -> Result<ChannelScaling, CliError> {
    let mut transforms = vec![];
    for r in 0..t.len() {
        if t.get(r, "fire_id")? != fire {
            continue;
        }
        let (offset, scale): (f32, f32) = (t.num(r, "offset")?, t.num(r, "scale")?);
        let tr = match t.get(r, "transform")? {
            "identity" => Transform::Identity,
            "affine" => Transform::Affine { offset, scale },
            "log_affine" => Transform::LogAffine { offset, scale },
            "binarize" => Transform::Binarize,
            other => return Err(CliError::invalid(format!("unknown transform {other:?}"))),
        };
        transforms.push((t.get(r, "channel")?.to_string(), tr));
    }
    if transforms.is_empty() {
        return Err(CliError::invalid(format!("no scaling recorded for fire {fire}")));
    }
    Ok(ChannelScaling { transforms })
}

fn forecast(ctx: &mut Ctx) -> Result<String, CliError> {
    let split = ctx.split()?;
    let scaling = ctx.table(SCALING_CSV, "preprocess")?;
    let ck_path = ctx.layout.checkpoint.clone();
    let mut model = ConvLstmModel::<f32>::from_checkpoint(&ctx.checkpoint(&ck_path, "train")?)?;
    let mut mae_csv = String::from("fire_id,step,mae\n");
    let mut done = 0;
    for row in split.iter().filter(|r| r.role == Role::Holdout) {
        let id = &row.fire_id;
        let prepared = ctx.stack(&ctx.layout.prepared(id), "preprocess")?;
        let reference = ctx.stack(&ctx.layout.reference(id), "synth")?;
        let sc = scaling_of(&scaling, id)?;
        let inputs = FireInputs { fire_id: id, prepared: &prepared, reference: &reference, scaling: &sc, start_month: row.start_month };
        let (tiles, result) = match forecast_fire(&mut model, &inputs, ctx.cfg.observed) {
            Ok(v) => v,
            Err(PipelineError::NoQualifying(_)) => {
                eprintln!("forecast: {id} has no qualifying subgrid, skipped");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let t_len = prepared.t_len();
        let mut out = RasterStack::new(t_len, prepared.height(), prepared.width(), &[NDVI]);
        out.missing_mut().fill(true);
        for (b, tile) in tiles.iter().enumerate() {
            let series = forecast_series(&result, b);
            for t in 0..t_len {
                for r in 0..SUBGRID {
                    for c in 0..SUBGRID {
                        let (rr, cc) = (tile.row0 + r, tile.col0 + c);
                        out.set(t, rr, cc, 0, series[(t * SUBGRID + r) * SUBGRID + c]);
                        out.set_missing(t, rr, cc, 0, false);
                    }
                }
            }
        }
        write(&ctx.layout.forecast(id), out.to_bytes()?)?;
        for (step, mae) in result.frame_mae.iter().flatten().enumerate() {
            let _ = writeln!(mae_csv, "{id},{},{mae}", ctx.cfg.observed + step);
        }
        done += 1;
    }
    write(&ctx.layout.file(FORECAST_MAE), mae_csv)?;
    Ok(format!("forecast: {done} held-out fires"))
}

fn fit_logistic(ctx: &mut Ctx) -> Result<String, CliError> {
    let split = ctx.split()?;
    let mut tiles_csv = String::from("fire_id,row0,col0,k,L,n_pixels,n_degenerate\n");
    let mut fires_csv = String::from("fire_id,k_fit,L_fit,n_pixels\n");
    let mut n = 0;
    for id in ids(&split, &[Role::Train, Role::Val, Role::Holdout]) {
        let stack = ctx.stack(&ctx.layout.prepared(&id), "preprocess")?;
        let fit = match fit_fire(&id, &stack) {
            Ok(f) => f,
            Err(PipelineError::NoQualifying(_)) => {
                eprintln!("fit-logistic: {id} has no usable subgrid, skipped");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        for t in &fit.tiles {
            let _ = writeln!(tiles_csv, "{id},{},{},{},{},{},{}", t.row0, t.col0, t.fit.mean_k, t.fit.mean_l, t.fit.n_pixels, t.fit.n_degenerate);
        }
        let r = &fit.recovery;
        let _ = writeln!(fires_csv, "{id},{},{},{}", r.mean_k, r.mean_l, r.n_pixels);
        n += 1;
    }
    write(&ctx.layout.file(LOGISTIC_TILES), tiles_csv)?;
    write(&ctx.layout.file(LOGISTIC_FIRES), fires_csv)?;
    Ok(format!("fit-logistic: {n} fires"))
}

fn tucker_fit(ctx: &mut Ctx) -> Result<String, CliError> {
    let split = ctx.split()?;
    let tiles = ctx.table(LOGISTIC_TILES, "fit-logistic")?;
    let mut series: Vec<Vec<f32>> = vec![];
    let mut targets = vec![];
    for id in ids(&split, &[Role::Train, Role::Val]) {
        let rows: Vec<usize> = (0..tiles.len()).filter(|&r| tiles.get(r, "fire_id").is_ok_and(|f| f == id)).collect();
        if rows.is_empty() {
            continue;
        }
        let subs = partition_subgrids(&ctx.stack(&ctx.layout.prepared(&id), "preprocess")?)?;
        for r in rows {
            let (row0, col0): (usize, usize) = (tiles.num(r, "row0")?, tiles.num(r, "col0")?);
            let sub = subs
                .iter()
                .find(|s| s.row0 == row0 && s.col0 == col0)
                .ok_or_else(|| CliError::invalid(format!("{id}: no subgrid at ({row0}, {col0})")))?;
            series.push(tile_series(sub)?);
            targets.push((tiles.num(r, "k")?, tiles.num(r, "L")?));
        }
    }
    let refs: Vec<&[f32]> = series.iter().map(Vec::as_slice).collect();
    let (regs, [ok, ol]) = Regressors::fit_series(&refs, &targets, &ctx.cfg.tucker)?;
    write(&ctx.layout.file(TUCKER_CKP), regs.to_checkpoint().to_bytes()?)?;
    let mut obj = String::from("sweep,objective_k,objective_L\n");
    for i in 0..ok.len().max(ol.len()) {
        let cell = |v: &Vec<f64>| v.get(i).map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(obj, "{i},{},{}", cell(&ok), cell(&ol));
    }
    write(&ctx.layout.file(TUCKER_OBJECTIVE), obj)?;
    Ok(format!("tucker-fit: {} tiles, {} sweeps for k", series.len(), ok.len().saturating_sub(1)))
}

fn predict_k(ctx: &mut Ctx) -> Result<String, CliError> {
    let split = ctx.split()?;
    let path = ctx.layout.file(TUCKER_CKP);
    let regs = Regressors::from_checkpoint(&ctx.checkpoint(&path, "tucker-fit")?)?;
    let mut out = String::from("fire_id,k_hat,L_hat,n_pixels\n");
    let mut n = 0;
    for id in ids(&split, &[Role::Holdout]) {
        let prepared = ctx.stack(&ctx.layout.prepared(&id), "preprocess")?;
        let subs = partition_subgrids(&prepared)?;
        let tiles = qualifying(&subs);
        if tiles.is_empty() {
            continue;
        }
        let fc = ctx.stack(&ctx.layout.forecast(&id), "forecast")?;
        let mut preds = vec![];
        for tile in tiles {
            let window = fc.window(tile.row0, tile.col0, SUBGRID, SUBGRID)?;
            if window.missing().iter().any(|&m| m) {
                return Err(CliError::invalid(format!("forecast of {id} lacks the subgrid at ({}, {}); rerun forecast", tile.row0, tile.col0)));
            }
            let sub = Subgrid { row0: tile.row0, col0: tile.col0, stack: window, burn_fraction: tile.burn_fraction };
            let (k, l) = regs.predict(&tile_series(&sub)?)?;
            let n_pixels = tile.burned()?.iter().filter(|&&b| b).count();
            preds.push(TilePrediction { row0: tile.row0, col0: tile.col0, k, l, n_pixels });
        }
        let p = combine(&id, preds)?;
        let _ = writeln!(out, "{id},{},{},{}", p.k_hat, p.l_hat, p.n_pixels);
        n += 1;
    }
    write(&ctx.layout.file(PREDICTIONS), out)?;
    Ok(format!("predict-k: {n} fires"))
}

fn pairs(t: &Table, value: &str) -> Result<Vec<(String, f64)>, CliError> {
    (0..t.len()).map(|r| Ok((t.get(r, "fire_id")?.to_string(), t.num(r, value)?))).collect()
}

fn eval(ctx: &mut Ctx) -> Result<String, CliError> {
    let predicted = pairs(&ctx.table(PREDICTIONS, "predict-k")?, "k_hat")?;
    let baseline = pairs(&ctx.table(LOGISTIC_FIRES, "fit-logistic")?, "k_fit")?;
    let mut report = eval_k_errors(&predicted, &baseline)?;
    if report.bin_width != ctx.cfg.bin_width {
        let errs: Vec<f64> = report.errors.iter().map(|e| e.1).collect();
        report.bin_width = ctx.cfg.bin_width;
        report.bins = histogram(&errs, ctx.cfg.bin_width, HISTOGRAM_MAX);
    }
    write(&ctx.layout.file(EVAL_ERRORS), report.errors_csv())?;
    write(&ctx.layout.file(EVAL_SUMMARY), report.summary_csv())?;
    write(&ctx.layout.file(EVAL_HIST), report.histogram_svg())?;
    Ok(format!("eval: {} fires, P50 {:.4}  P75 {:.4}  P90 {:.4}", report.errors.len(), report.p50, report.p75, report.p90))
}

fn cluster(ctx: &mut Ctx) -> Result<String, CliError> {
    let cfg = ctx.cfg;
    let fits = ctx.table(LOGISTIC_FIRES, "fit-logistic")?;
    let catalog = ctx.catalog()?;
    let mut recoveries = vec![];
    let mut precip = vec![];
    for r in 0..fits.len() {
        let id = fits.get(r, "fire_id")?.to_string();
        let raw = ctx.stack(&ctx.layout.raw(&id), "synth")?;
        precip.push((id.clone(), early_precip(&raw)?));
        recoveries.push(FireRecovery { fire_id: id, mean_k: fits.num(r, "k_fit")?, mean_l: fits.num(r, "L_fit")?, n_pixels: fits.num(r, "n_pixels")? });
    }
    let features = build_features(&recoveries, &catalog, &precip)?;
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.vector().to_vec()).collect();
    let (normalized, _) = minmax_normalize(&rows)?;
    let ks: Vec<usize> = cfg.cluster.ks.iter().copied().filter(|&k| k <= features.len()).collect();
    if ks.len() < cfg.cluster.ks.len() {
        eprintln!("cluster: {} fires, skipping cluster counts above that", features.len());
    }
    let assignment = cluster_fires(&features, &normalized, &ks, cfg.seed)?;
    let embedding = umap_embed(&normalized, &cfg.umap_config())?;
    write(&ctx.layout.file(CLUSTERS), clusters_csv(&features, &assignment, Some(&embedding)))?;
    for (i, k) in assignment.ks.iter().enumerate() {
        write(&ctx.layout.file(&format!("cluster_k{k}.svg")), cluster_map_svg(&features, &assignment, i))?;
    }
    Ok(format!("cluster: {} fires, k in {:?}", features.len(), assignment.ks))
}

fn report(ctx: &mut Ctx) -> Result<String, CliError> {
    let summary = ctx.table(EVAL_SUMMARY, "eval")?;
    let split = ctx.split()?;
    let mut md = String::from("# Run report\n\n");
    let count = |role| split.iter().filter(|r| r.role == role).count();
    let _ = writeln!(
        md,
        "Fires: {} train, {} validation, {} held out, {} excluded.\n",
        count(Role::Train),
        count(Role::Val),
        count(Role::Holdout),
        count(Role::Excluded)
    );
    for r in split.iter().filter(|r| r.role == Role::Excluded) {
        let _ = writeln!(md, "- {} excluded: {}", r.fire_id, r.reason);
    }
    md.push_str("\n## Held-out growth-rate error\n\n| statistic | value | reference |\n|---|---|---|\n");
    for r in 0..summary.len() {
        let stat = summary.get(r, "statistic")?;
        let reference = match stat {
            "p50" => "0.12",
            "p75" => "0.24",
            "p90" => "0.48",
            "n" => "",
            _ => continue,
        };
        let _ = writeln!(md, "| {stat} | {} | {reference} |", summary.get(r, "value")?);
    }
    let _ = writeln!(md, "\nHistogram: `{EVAL_HIST}`, per-fire errors: `{EVAL_ERRORS}`.");

    let log_path = ctx.layout.file(TRAIN_LOG);
    if log_path.exists() {
        let log = Table::parse(&ctx.text(&log_path, "train")?, &log_path)?;
        if let Some(last) = log.len().checked_sub(1) {
            let mut best: Option<(usize, f64)> = None;
            for r in 0..log.len() {
                if let Ok(v) = log.num::<f64>(r, "val_mae") {
                    if best.is_none_or(|b| v < b.1) {
                        best = Some((r, v));
                    }
                }
            }
            let _ = writeln!(md, "\n## Training\n\n{} epochs, final train MAE {}.", last + 1, log.get(last, "train_mae")?);
            if let Some((e, v)) = best {
                let _ = writeln!(md, "Best validation MAE {v:.5} at epoch {e}.");
            }
        }
    }
    let mae_path = ctx.layout.file(FORECAST_MAE);
    if mae_path.exists() {
        let t = Table::parse(&ctx.text(&mae_path, "forecast")?, &mae_path)?;
        let mut per_step: Vec<(usize, f64, usize)> = vec![];
        for r in 0..t.len() {
            let (step, mae): (usize, f64) = (t.num(r, "step")?, t.num(r, "mae")?);
            match per_step.iter_mut().find(|s| s.0 == step) {
                Some(s) => {
                    s.1 += mae;
                    s.2 += 1;
                }
                None => per_step.push((step, mae, 1)),
            }
        }
        if !per_step.is_empty() {
            md.push_str("\n## Forecast MAE by frame\n\n| frame | mean MAE |\n|---|---|\n");
            for (step, sum, n) in per_step {
                let _ = writeln!(md, "| {step} | {:.4} |", sum / n as f64);
            }
        }
    }
    let clusters_path = ctx.layout.file(CLUSTERS);
    if clusters_path.exists() {
        let text = ctx.text(&clusters_path, "cluster")?;
        let labels = regrowth::cluster::parse_cluster_labels(&text).map_err(CliError::invalid)?;
        md.push_str("\n## Clusters\n\n");
        for (k, l) in labels {
            let mut sizes = vec![0usize; k];
            for &x in &l {
                if x < k {
                    sizes[x] += 1;
                }
            }
            let _ = writeln!(md, "- k = {k}: sizes {sizes:?}, map `cluster_k{k}.svg`");
        }
    }
    write(&ctx.layout.file(REPORT), &md)?;
    Ok(format!("report: {}", ctx.layout.file(REPORT).display()))
}
