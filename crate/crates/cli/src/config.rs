use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use regrowth::cluster::{UmapConfig, DEFAULT_KS};
use regrowth::convlstm::{TrainConfig, DEFAULT_FILTERS, OBSERVED_FRAMES};
use regrowth::kv::{KvError, KvMap};
use regrowth::nn::LrSchedule;
use regrowth::preprocess::{ErraticRule, DEFAULT_KNN_K};
use regrowth::raster::SynthConfig;
use regrowth::tucker::TuckerConfig;

/// Fires kept out of training and scored by `eval`.
pub const DEFAULT_HOLDOUT: usize = 15;
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub catalog: Option<PathBuf>,
    pub stack_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Paths {
    pub fn catalog(&self) -> PathBuf {
        self.catalog.clone().unwrap_or_else(|| self.out_dir.join("catalog.csv"))
    }

    pub fn stack_dir(&self) -> PathBuf {
        self.stack_dir.clone().unwrap_or_else(|| self.out_dir.join("stacks"))
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("model.ckp"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessKnobs {
    pub knn_k: usize,
    pub erratic: ErraticRule,
    pub split_fraction: f64,
    pub holdout: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainKnobs {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub filters: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterKnobs {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub epochs: usize,
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessKnobs,
    pub train: TrainKnobs,
    pub observed: usize,
    pub tucker: TuckerConfig,
    pub cluster: ClusterKnobs,
    pub bin_width: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = LrSchedule::default();
        let umap = UmapConfig::default();
        Self {
            seed: DEFAULT_SEED,
            paths: Paths { out_dir: PathBuf::from("run"), catalog: None, stack_dir: None, checkpoint: None },
            synth: SynthConfig::default(),
            preprocess: PreprocessKnobs {
                knn_k: DEFAULT_KNN_K,
                erratic: ErraticRule::default(),
                split_fraction: 0.8,
                holdout: DEFAULT_HOLDOUT,
            },
            train: TrainKnobs {
                epochs: TrainConfig::default().epochs,
                batch: TrainConfig::default().batch_size,
                lr0: schedule.initial,
                decay: schedule.decay,
                decay_every: schedule.every,
                filters: DEFAULT_FILTERS,
            },
            observed: OBSERVED_FRAMES,
            tucker: TuckerConfig::default(),
            cluster: ClusterKnobs { n_neighbors: umap.n_neighbors, min_dist: umap.min_dist, epochs: umap.epochs, ks: DEFAULT_KS.to_vec() },
            bin_width: regrowth::eval::BIN_WIDTH,
        }
    }
}

fn invalid(key: &str, message: &str) -> KvError {
    KvError::Invalid { key: key.to_string(), message: message.to_string() }
}

fn take_path(kv: &mut KvMap, key: &str, target: &mut Option<PathBuf>) -> Result<(), KvError> {
    let mut s = String::new();
    kv.take(key, &mut s)?;
    if !s.is_empty() {
        *target = Some(PathBuf::from(s));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, KvError> {
        let mut kv = KvMap::parse(text)?;
        let mut c = Self::default();
        kv.take("seed", &mut c.seed)?;

        let mut p = kv.section("paths");
        let mut out = c.paths.out_dir.display().to_string();
        p.take("out_dir", &mut out)?;
        c.paths.out_dir = PathBuf::from(out);
        take_path(&mut p, "catalog", &mut c.paths.catalog)?;
        take_path(&mut p, "stack_dir", &mut c.paths.stack_dir)?;
        take_path(&mut p, "checkpoint", &mut c.paths.checkpoint)?;
        p.finish()?;

        c.synth = SynthConfig::from_kv(kv.section("synth"))?;

        let mut p = kv.section("preprocess");
        p.take("knn_k", &mut c.preprocess.knn_k)?;
        p.take("max_step", &mut c.preprocess.erratic.max_step)?;
        p.take("max_mean", &mut c.preprocess.erratic.max_mean)?;
        p.take("min_mean", &mut c.preprocess.erratic.min_mean)?;
        p.take("split_fraction", &mut c.preprocess.split_fraction)?;
        p.take("holdout", &mut c.preprocess.holdout)?;
        p.finish()?;

        let mut t = kv.section("train");
        t.take("epochs", &mut c.train.epochs)?;
        t.take("batch", &mut c.train.batch)?;
        t.take("lr0", &mut c.train.lr0)?;
        t.take("decay", &mut c.train.decay)?;
        t.take("decay_every", &mut c.train.decay_every)?;
        let mut filters = c.train.filters.to_vec();
        t.take_list("filters", &mut filters)?;
        c.train.filters = filters.try_into().map_err(|_| invalid("train.filters", "need three layer widths"))?;
        t.finish()?;

        let mut f = kv.section("forecast");
        f.take("observed", &mut c.observed)?;
        f.finish()?;

        c.tucker = TuckerConfig::from_kv(kv.section("tucker"))?;

        let mut u = kv.section("cluster");
        u.take("n_neighbors", &mut c.cluster.n_neighbors)?;
        u.take("min_dist", &mut c.cluster.min_dist)?;
        u.take("epochs", &mut c.cluster.epochs)?;
        u.take_list("ks", &mut c.cluster.ks)?;
        u.finish()?;

        let mut e = kv.section("eval");
        e.take("bin_width", &mut c.bin_width)?;
        e.finish()?;

        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, crate::CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::CliError::io(path, e))?;
        Self::from_text(&text).map_err(|e| crate::CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), KvError> {
        if !(0.0..=1.0).contains(&self.preprocess.split_fraction) {
            return Err(invalid("preprocess.split_fraction", "must be in [0, 1]"));
        }
        if self.preprocess.knn_k == 0 {
            return Err(invalid("preprocess.knn_k", "must be positive"));
        }
        if self.train.batch == 0 || self.train.filters.contains(&0) {
            return Err(invalid("train", "batch and filters must be positive"));
        }
        if !(self.train.lr0 > 0.0) {
            return Err(invalid("train.lr0", "must be positive"));
        }
        if self.observed < OBSERVED_FRAMES || self.observed >= self.synth.t_len {
            return Err(invalid("forecast.observed", "must be at least 5 and below the series length"));
        }
        if self.cluster.ks.is_empty() || self.cluster.ks.contains(&0) {
            return Err(invalid("cluster.ks", "need positive cluster counts"));
        }
        if !(self.bin_width > 0.0) {
            return Err(invalid("eval.bin_width", "must be positive"));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch,
            schedule: LrSchedule { initial: self.train.lr0, decay: self.train.decay, every: self.train.decay_every },
            seed: self.seed,
        }
    }

    pub fn umap_config(&self) -> UmapConfig {
        UmapConfig { n_neighbors: self.cluster.n_neighbors, min_dist: self.cluster.min_dist, epochs: self.cluster.epochs, seed: self.seed }
    }

    pub fn horizon(&self) -> usize {
        self.synth.t_len - self.observed
    }

    /// Hash of the settings whose keys match one of `keys`; a key ending
    /// in `.` selects a whole section.
    pub fn hash_of(&self, keys: &[&str]) -> String {
        let picked: String = self
            .render()
            .lines()
            .filter(|l| {
                let key = l.split(" = ").next().unwrap_or("");
                keys.iter().any(|k| if k.ends_with('.') { key.starts_with(k) } else { key == *k })
            })
            .map(|l| format!("{l}\n"))
            .collect();
        crate::manifest::sha256_hex(picked.as_bytes())
    }

    /// Every effective setting as sorted `key = value` lines; feeds the
    /// config hash and parses back to the same configuration.
    pub fn render(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut lines = vec![
            format!("seed = {}", self.seed),
            format!("paths.out_dir = {}", self.paths.out_dir.display()),
            format!("paths.catalog = {}", opt(&self.paths.catalog)),
            format!("paths.stack_dir = {}", opt(&self.paths.stack_dir)),
            format!("paths.checkpoint = {}", opt(&self.paths.checkpoint)),
            format!("synth.n_fires = {}", self.synth.n_fires),
            format!("synth.height = {}", self.synth.height),
            format!("synth.width = {}", self.synth.width),
            format!("synth.t_len = {}", self.synth.t_len),
            format!("synth.sigma = {:?}", self.synth.sigma),
            format!("synth.dropout = {:?}", self.synth.dropout),
            format!("synth.seed = {}", self.synth.seed),
            format!("preprocess.knn_k = {}", self.preprocess.knn_k),
            format!("preprocess.max_step = {:?}", self.preprocess.erratic.max_step),
            format!("preprocess.max_mean = {:?}", self.preprocess.erratic.max_mean),
            format!("preprocess.min_mean = {:?}", self.preprocess.erratic.min_mean),
            format!("preprocess.split_fraction = {:?}", self.preprocess.split_fraction),
            format!("preprocess.holdout = {}", self.preprocess.holdout),
            format!("train.epochs = {}", self.train.epochs),
            format!("train.batch = {}", self.train.batch),
            format!("train.lr0 = {:?}", self.train.lr0),
            format!("train.decay = {:?}", self.train.decay),
            format!("train.decay_every = {}", self.train.decay_every),
            format!("train.filters = {}", join(&self.train.filters)),
            format!("forecast.observed = {}", self.observed),
            format!("tucker.ranks = {}", join(&self.tucker.ranks)),
            format!("tucker.lambda = {:?}", self.tucker.lambda),
            format!("tucker.max_sweeps = {}", self.tucker.max_sweeps),
            format!("tucker.tolerance = {:?}", self.tucker.tolerance),
            format!("tucker.seed = {}", self.tucker.seed),
            format!("tucker.restarts = {}", self.tucker.restarts),
            format!("cluster.n_neighbors = {}", self.cluster.n_neighbors),
            format!("cluster.min_dist = {:?}", self.cluster.min_dist),
            format!("cluster.epochs = {}", self.cluster.epochs),
            format!("cluster.ks = {}", join(&self.cluster.ks)),
            format!("eval.bin_width = {:?}", self.bin_width),
        ];
        lines.sort();
        let mut out = String::new();
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_module_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train.filters, [32, 128, 64]);
        assert_eq!((c.train.epochs, c.train.batch), (100, 8));
        assert_eq!(c.tucker.ranks, [4, 3, 3]);
        assert_eq!(c.cluster.ks, vec![3, 5, 10]);
        assert_eq!(c.preprocess.knn_k, 8);
        assert_eq!(c.horizon(), 20);
    }

    #[test]
    fn parses_sections() {
        let c = RunConfig::from_text("seed = 3\ntrain.filters = 4,8,4\nsynth.n_fires = 6\ntucker.ranks = 2,2,2\ncluster.ks = 2,3\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.train.filters, [4, 8, 4]);
        assert_eq!(c.synth.n_fires, 6);
        assert_eq!(c.tucker.ranks, [2, 2, 2]);
        assert_eq!(c.cluster.ks, vec![2, 3]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert_eq!(RunConfig::from_text("train.epochz = 3").unwrap_err(), KvError::UnknownKey("epochz".into()));
        assert_eq!(RunConfig::from_text("colour = red").unwrap_err(), KvError::UnknownKey("colour".into()));
        assert!(RunConfig::from_text("train.filters = 1,2").is_err());
        assert!(RunConfig::from_text("preprocess.split_fraction = 1.5").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::from_text("paths.catalog = /tmp/cat.csv\ntrain.lr0 = 0.002\n").unwrap();
        assert_eq!(RunConfig::from_text(&c.render()).unwrap(), c);
        c.paths.catalog = None;
        assert_eq!(RunConfig::from_text(&c.render()).unwrap(), c);
    }

    #[test]
    fn section_hash_tracks_only_its_section() {
        let a = RunConfig::default();
        let b = RunConfig::from_text("cluster.ks = 2,4").unwrap();
        assert_eq!(a.hash_of(&["seed", "train."]), b.hash_of(&["seed", "train."]));
        assert_ne!(a.hash_of(&["cluster."]), b.hash_of(&["cluster."]));
        let c = RunConfig::from_text("seed = 99").unwrap();
        assert_ne!(a.hash_of(&["seed", "train."]), c.hash_of(&["seed", "train."]));
        assert_eq!(a.hash_of(&["synth."]), c.hash_of(&["synth."]));
    }
}
