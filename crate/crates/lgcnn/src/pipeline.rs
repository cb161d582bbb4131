//! Record sets to a prepared archive, shared by the CLI and the tests.

use lgcnn_core::data::{
    normalize, preprocess, synth_faults, windowize, PreprocessConfig, RecordSet, Split, StatsMode,
    SynthConfig, DEFAULT_DROP,
};
use serde::Serialize;

use crate::archive::{Archive, DatasetMeta};
use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrepareOptions {
    pub window: usize,
    /// `None` drops the two default valves when the data uses `xmv_*`
    /// naming and nothing otherwise.
    pub drop: Option<Vec<String>>,
    pub train_onset: usize,
    pub test_onset: usize,
    pub stats: String,
}

impl PrepareOptions {
    /// Defaults for the reference process: fault onsets at samples 20 and 160.
    pub fn raw() -> Self {
        PrepareOptions {
            window: 20,
            drop: None,
            train_onset: 20,
            test_onset: 160,
            stats: StatsMode::PerVariable.name().into(),
        }
    }

    /// Synthetic runs have no pre-fault prefix.
    pub fn synthetic() -> Self {
        PrepareOptions {
            train_onset: 0,
            test_onset: 0,
            ..Self::raw()
        }
    }

    pub fn effective_drop(&self, variables: &[String]) -> Vec<String> {
        match &self.drop {
            Some(list) => list.clone(),
            None if variables.iter().any(|v| v.starts_with("xmv_")) => {
                DEFAULT_DROP.iter().map(|s| s.to_string()).collect()
            }
            None => Vec::new(),
        }
    }
}

pub fn prepare(
    train: &RecordSet,
    test: &RecordSet,
    opts: &PrepareOptions,
    source: &str,
) -> AppResult<Archive> {
    if train.records.is_empty() {
        return Err(AppError::input("no training records"));
    }
    if !test.records.is_empty() && test.variables != train.variables {
        return Err(AppError::input("train and test files list different variables"));
    }
    let mode = StatsMode::parse(&opts.stats)?;
    let drop = opts.effective_drop(&train.variables);
    let strs: Vec<&str> = drop.iter().map(String::as_str).collect();
    let tr = preprocess(train, &PreprocessConfig::new(&strs, opts.train_onset))?;
    let mut te_set = RecordSet::new(tr.variables.clone());
    if !test.records.is_empty() {
        te_set = preprocess(test, &PreprocessConfig::new(&strs, opts.test_onset))?;
    }
    let mut tr_img = windowize(&tr, opts.window, Split::Train)?;
    let mut te_img = windowize(&te_set, opts.window, Split::Test)?;
    let stats = normalize(&mut tr_img, &mut te_img, mode)?;
    let classes = tr_img
        .labels
        .iter()
        .chain(&te_img.labels)
        .max()
        .map_or(0, |m| m + 1);
    let meta = DatasetMeta {
        source: source.into(),
        window: opts.window,
        stride: opts.window,
        height: opts.window,
        width: tr.width(),
        classes,
        variables: tr.variables.clone(),
        drop,
        train_onset: opts.train_onset,
        test_onset: opts.test_onset,
        stats_mode: mode.name().into(),
        norm_mean: stats.mean,
        norm_std: stats.std,
        train_images: tr_img.len(),
        test_images: te_img.len(),
    };
    Ok(Archive {
        meta,
        train: tr_img,
        test: te_img,
    })
}

/// Generator settings plus the number of test runs per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub runs: usize,
    pub test_runs: usize,
    pub len: usize,
    pub test_len: usize,
    pub vars: usize,
    pub seed: u64,
    pub phi: f64,
    pub loading: f64,
    pub shift: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let d = SynthConfig::default();
        SyntheticSpec {
            classes: d.classes,
            runs: d.runs_per_class,
            test_runs: d.runs_per_class,
            len: d.samples_per_run,
            test_len: d.samples_per_run,
            vars: d.variables,
            seed: d.seed,
            phi: d.phi,
            loading: d.loading,
            shift: d.shift,
        }
    }
}

impl SyntheticSpec {
    /// Parses `key=value` pairs; unknown keys are errors.
    pub fn parse(pairs: &[String]) -> AppResult<Self> {
        let mut s = SyntheticSpec::default();
        let mut test_runs = None;
        let mut test_len = None;
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| AppError::input(format!("expected key=value, got `{pair}`")))?;
            let bad = || AppError::input(format!("bad value for `{k}`: `{v}`"));
            let int = || v.parse::<usize>().map_err(|_| bad());
            let real = || v.parse::<f64>().map_err(|_| bad());
            match k {
                "classes" => s.classes = int()?,
                "runs" => s.runs = int()?,
                "test_runs" => test_runs = Some(int()?),
                "len" => s.len = int()?,
                "test_len" => test_len = Some(int()?),
                "vars" => s.vars = int()?,
                "seed" => s.seed = v.parse().map_err(|_| bad())?,
                "phi" => s.phi = real()?,
                "loading" => s.loading = real()?,
                "shift" => s.shift = real()?,
                _ => return Err(AppError::input(format!("unknown synthetic key `{k}`"))),
            }
        }
        s.test_runs = test_runs.unwrap_or(s.runs);
        s.test_len = test_len.unwrap_or(s.len);
        Ok(s)
    }

    fn config(&self, runs: usize, len: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            classes: self.classes,
            runs_per_class: runs,
            samples_per_run: len,
            variables: self.vars,
            seed,
            phi: self.phi,
            loading: self.loading,
            shift: self.shift,
        }
    }

    /// Train and test records. The test split is drawn from seed + 1.
    pub fn generate(&self) -> AppResult<(RecordSet, RecordSet)> {
        let train = synth_faults(&self.config(self.runs, self.len, self.seed))?;
        let test = synth_faults(&self.config(self.test_runs, self.test_len, self.seed.wrapping_add(1)))?;
        Ok((train, test))
    }

    pub fn describe(&self) -> String {
        format!(
            "synthetic classes={} runs={} test_runs={} len={} test_len={} vars={} seed={} phi={} loading={} shift={}",
            self.classes, self.runs, self.test_runs, self.len, self.test_len, self.vars, self.seed, self.phi, self.loading, self.shift
        )
    }
}
