//! Experiment configuration as flat `key = value` text.
//!
//! Lines are `key = value`; `#` starts a comment. `include = path` splices in
//! another file (relative to the including file). `profile = desk|repro|paper`
//! selects the base defaults before any other key applies. Lists are
//! comma-separated.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::ddpg::DdpgConfig;
use crate::envs::PointMassConfig;
use crate::intrinsic::{IntrinsicConfig, IntrinsicKind};
use crate::polter::{KlMode, PolterConfig, SnapshotSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: String,
    // environment
    pub episode_len: usize,
    pub dt: f64,
    pub force_gain: f64,
    pub damping: f64,
    pub max_speed: f64,
    pub target_sigma: f64,
    pub target_range: f64,
    // algorithm
    pub algorithm: IntrinsicKind,
    pub polter: bool,
    pub alpha: f64,
    pub kl_mode: KlMode,
    pub polter_sigma: f64,
    pub schedule: Vec<u64>,
    /// Empty: snapshot ensemble. Otherwise a reference actor file used as a
    /// fixed single-member ensemble.
    pub polter_target: String,
    // protocol
    pub pretrain_steps: u64,
    pub finetune_steps: u64,
    pub checkpoint_every: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    // agent
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub noise_std: f64,
    pub noise_clip: f64,
    pub seed_frames: u64,
    pub update_every: u64,
    pub replay_capacity: usize,
    // intrinsic
    pub intr_hidden: Vec<usize>,
    pub intr_learning_rate: f64,
    pub rnd_rep_dim: usize,
    pub icm_embed_dim: usize,
    pub ensemble_size: usize,
    pub apt_k: usize,
    pub apt_eps: f64,
    pub normalize_intrinsic: bool,
    pub normalizer_decay: f64,
    // finetuning
    pub finetune_keep_replay: bool,
    pub finetune_carry_critic: bool,
    pub finetune_seed_frames: u64,
    pub save_replay: bool,
    pub expert_return: f64,
    // reference policy
    pub oracle_steps: u64,
    pub oracle_learning_rate: f64,
    pub oracle_threshold: f64,
    // analysis and output
    pub kl_probes: usize,
    pub entropy_window: usize,
    pub entropy_bins: usize,
    pub entropy_fractions: Vec<f64>,
    /// `all`, `windows` (only entropy windows) or `none`.
    pub trajectory_dump: String,
    pub log_every: u64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// 200k pretraining steps, 20k finetuning steps, schedule ×0.1.
    pub fn desk() -> Self {
        let d = DdpgConfig::default();
        let i = IntrinsicConfig::default();
        let p = PolterConfig::default();
        let e = PointMassConfig::default();
        Self {
            profile: "desk".into(),
            episode_len: e.episode_len,
            dt: e.dt,
            force_gain: e.force_gain,
            damping: e.damping,
            max_speed: e.max_speed,
            target_sigma: 0.2,
            target_range: 0.8,
            algorithm: IntrinsicKind::Rnd,
            polter: false,
            alpha: p.alpha,
            kl_mode: p.kl_mode,
            polter_sigma: p.sigma,
            schedule: SnapshotSchedule::desk().entries().to_vec(),
            polter_target: String::new(),
            pretrain_steps: 200_000,
            finetune_steps: 20_000,
            checkpoint_every: 10_000,
            eval_every: 2_000,
            eval_episodes: 10,
            seeds: (0..10).collect(),
            hidden: d.hidden,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            tau: d.tau,
            gamma: d.gamma,
            n_step: d.n_step,
            noise_std: d.noise_std,
            noise_clip: d.noise_clip,
            seed_frames: d.seed_frames,
            update_every: d.update_every,
            replay_capacity: d.replay_capacity,
            intr_hidden: i.hidden,
            intr_learning_rate: i.learning_rate,
            rnd_rep_dim: i.rnd_rep_dim,
            icm_embed_dim: i.icm_embed_dim,
            ensemble_size: i.ensemble_size,
            apt_k: i.apt_k,
            apt_eps: i.apt_eps,
            normalize_intrinsic: i.normalize,
            normalizer_decay: i.normalizer_decay,
            finetune_keep_replay: false,
            finetune_carry_critic: true,
            finetune_seed_frames: d.seed_frames,
            save_replay: false,
            expert_return: e.episode_len as f64,
            oracle_steps: 200_000,
            oracle_learning_rate: 3e-4,
            oracle_threshold: 0.1,
            kl_probes: 20,
            entropy_window: 5_000,
            entropy_bins: 16,
            entropy_fractions: vec![0.05, 0.25, 0.5, 1.0],
            trajectory_dump: "windows".into(),
            log_every: 1,
            output_dir: "runs".into(),
        }
    }

    /// 2M pretraining steps, 100k finetuning, full schedule, batch 1024.
    pub fn paper() -> Self {
        Self {
            profile: "paper".into(),
            schedule: SnapshotSchedule::paper().entries().to_vec(),
            pretrain_steps: 2_000_000,
            finetune_steps: 100_000,
            eval_every: 10_000,
            batch_size: 1024,
            entropy_window: 50_000,
            ..Self::desk()
        }
    }

    /// The desk profile with 64-unit agent and intrinsic networks, sized so
    /// the full five-variant, ten-seed reproduction fits one CPU overnight.
    pub fn repro() -> Self {
        Self {
            profile: "repro".into(),
            hidden: vec![64, 64],
            intr_hidden: vec![64, 64],
            ..Self::desk()
        }
    }

    pub fn profile(name: &str) -> Result<Self, HarnessError> {
        match name {
            "desk" => Ok(Self::desk()),
            "repro" => Ok(Self::repro()),
            "paper" => Ok(Self::paper()),
            other => Err(HarnessError::Config(format!(
                "unknown profile '{other}' (expected desk, repro or paper)"
            ))),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let pairs = read_pairs(path.as_ref(), &mut HashSet::new(), 0)?;
        Self::from_pairs(&pairs)
    }

    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self, HarnessError> {
        let pairs = parse_pairs(text, base, "<inline>", &mut HashSet::new(), 0)?;
        Self::from_pairs(&pairs)
    }

    /// Applies ordered pairs on top of the profile they select (desk by default).
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, HarnessError> {
        let profile = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "profile")
            .map(|(_, v)| v.as_str())
            .unwrap_or("desk");
        let mut cfg = Self::profile(profile)?;
        cfg.apply(pairs.iter().filter(|(k, _)| k != "profile"))?;
        Ok(cfg)
    }

    /// Overrides individual keys (e.g. from the command line).
    pub fn apply<'a, I>(&mut self, pairs: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = &'a (String, String)>,
    {
        let mut obj = match serde_json::to_value(&*self)? {
            Value::Object(m) => m,
            _ => unreachable!("config serializes to an object"),
        };
        for (k, v) in pairs {
            let slot = obj
                .get_mut(k)
                .ok_or_else(|| HarnessError::Config(format!("unknown config key '{k}'")))?;
            *slot = parse_value(k, v, slot)?;
        }
        *self = serde_json::from_value(Value::Object(obj))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.validate()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.ddpg()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.intrinsic()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.polter_config()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.schedule_checked()?;
        if self.episode_len == 0 || !(self.dt > 0.0) || !(self.max_speed > 0.0) {
            return bad("episode_len, dt and max_speed must be positive".into());
        }
        if self.checkpoint_every == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("checkpoint_every, eval_every and eval_episodes must be positive".into());
        }
        if self.log_every == 0 {
            return bad("log_every must be positive".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if !matches!(self.trajectory_dump.as_str(), "all" | "windows" | "none") {
            return bad(format!(
                "trajectory_dump must be all, windows or none, got '{}'",
                self.trajectory_dump
            ));
        }
        if self
            .entropy_fractions
            .iter()
            .any(|&f| !(f > 0.0 && f <= 1.0))
        {
            return bad("entropy_fractions must lie in (0, 1]".into());
        }
        if self.entropy_bins == 0 || self.kl_probes == 0 || self.entropy_window == 0 {
            return bad("entropy_bins, entropy_window and kl_probes must be positive".into());
        }
        if !(self.oracle_learning_rate > 0.0) || self.oracle_steps == 0 {
            return bad("oracle_learning_rate and oracle_steps must be positive".into());
        }
        if !(self.expert_return > 0.0) {
            return bad("expert_return must be positive".into());
        }
        if self.algorithm == IntrinsicKind::Apt && self.batch_size * self.n_step <= self.apt_k {
            return bad("apt needs more particles than apt_k".into());
        }
        Ok(())
    }

    fn schedule_checked(&self) -> Result<SnapshotSchedule, HarnessError> {
        SnapshotSchedule::new(self.schedule.clone())
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn snapshot_schedule(&self) -> SnapshotSchedule {
        self.schedule_checked().expect("validated config")
    }

    pub fn ddpg(&self) -> DdpgConfig {
        DdpgConfig {
            hidden: self.hidden.clone(),
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            tau: self.tau,
            gamma: self.gamma,
            n_step: self.n_step,
            noise_std: self.noise_std,
            noise_clip: self.noise_clip,
            seed_frames: self.seed_frames,
            update_every: self.update_every,
            replay_capacity: self.replay_capacity,
        }
    }

    pub fn intrinsic(&self) -> IntrinsicConfig {
        IntrinsicConfig {
            kind: self.algorithm,
            hidden: self.intr_hidden.clone(),
            learning_rate: self.intr_learning_rate,
            rnd_rep_dim: self.rnd_rep_dim,
            icm_embed_dim: self.icm_embed_dim,
            ensemble_size: self.ensemble_size,
            apt_k: self.apt_k,
            apt_eps: self.apt_eps,
            normalize: self.normalize_intrinsic,
            normalizer_decay: self.normalizer_decay,
        }
    }

    pub fn polter_config(&self) -> PolterConfig {
        PolterConfig {
            alpha: self.alpha,
            sigma: self.polter_sigma,
            kl_mode: self.kl_mode,
        }
    }

    pub fn pointmass(&self) -> PointMassConfig {
        PointMassConfig {
            dt: self.dt,
            force_gain: self.force_gain,
            damping: self.damping,
            max_speed: self.max_speed,
            episode_len: self.episode_len,
        }
    }

    /// Human label such as `rnd+polter`.
    pub fn variant_label(&self) -> String {
        let mut s = self.algorithm.name().to_string();
        if self.polter {
            s.push_str(if self.polter_target.is_empty() {
                "+polter"
            } else {
                "+polter*"
            });
        }
        s
    }

    /// Sorted `key = value` lines; parsing them back yields the same config.
    pub fn to_kv_string(&self) -> String {
        let obj = match serde_json::to_value(self).expect("config serializes") {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        let mut out = String::new();
        for (k, v) in &obj {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&render_value(v));
            out.push('\n');
        }
        out
    }

    /// Hex digest of everything except `output_dir` and `seeds`.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        c.seeds.clear();
        let digest = Sha256::digest(c.to_kv_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn write_resolved(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        fs::write(path, self.to_kv_string())?;
        Ok(())
    }
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(render_value).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn parse_scalar(key: &str, raw: &str, like: &Value) -> Result<Value, HarnessError> {
    let err =
        |what: &str| HarnessError::Config(format!("key '{key}': cannot parse '{raw}' as {what}"));
    let t = raw.trim();
    match like {
        Value::Bool(_) => match t.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Ok(Value::Bool(true)),
            "false" | "0" | "no" | "off" => Ok(Value::Bool(false)),
            _ => Err(err("a boolean")),
        },
        Value::Number(n) => {
            let cleaned = t.replace('_', "");
            if n.is_f64() {
                let f: f64 = cleaned.parse().map_err(|_| err("a number"))?;
                serde_json::Number::from_f64(f)
                    .map(Value::Number)
                    .ok_or_else(|| err("a finite number"))
            } else if let Ok(u) = cleaned.parse::<u64>() {
                Ok(Value::from(u))
            } else {
                // allow 2e5 style for integers
                let f: f64 = cleaned.parse().map_err(|_| err("an integer"))?;
                if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 {
                    Ok(Value::from(f as u64))
                } else {
                    Err(err("a non-negative integer"))
                }
            }
        }
        _ => Ok(Value::String(t.to_string())),
    }
}

fn parse_value(key: &str, raw: &str, like: &Value) -> Result<Value, HarnessError> {
    match like {
        Value::Array(items) => {
            let t = raw.trim();
            if t.is_empty() {
                return Ok(Value::Array(Vec::new()));
            }
            let elem_like = items.first().cloned().unwrap_or_else(|| Value::from(0u64));
            let parts = t
                .split(',')
                .map(|p| {
                    // integer-looking elements stay integers even in float lists
                    if elem_like.is_f64() && !p.contains(['.', 'e', 'E']) {
                        parse_scalar(key, p, &Value::from(0u64))
                    } else {
                        parse_scalar(key, p, &elem_like)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Array(parts))
        }
        Value::Object(_) | Value::Null => Err(HarnessError::Config(format!(
            "key '{key}' cannot be set from text"
        ))),
        _ => parse_scalar(key, raw, like),
    }
}

const MAX_INCLUDE_DEPTH: usize = 16;

fn read_pairs(
    path: &Path,
    seen: &mut HashSet<PathBuf>,
    depth: usize,
) -> Result<Vec<(String, String)>, HarnessError> {
    let canonical = path
        .canonicalize()
        .map_err(|e| HarnessError::Config(format!("cannot open config {}: {e}", path.display())))?;
    if !seen.insert(canonical.clone()) {
        return Err(HarnessError::Config(format!(
            "include cycle through {}",
            path.display()
        )));
    }
    let text = fs::read_to_string(&canonical)?;
    let base = canonical.parent().unwrap_or(Path::new("."));
    let out = parse_pairs(&text, base, &path.display().to_string(), seen, depth)?;
    seen.remove(&canonical);
    Ok(out)
}

fn parse_pairs(
    text: &str,
    base: &Path,
    origin: &str,
    seen: &mut HashSet<PathBuf>,
    depth: usize,
) -> Result<Vec<(String, String)>, HarnessError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(HarnessError::Config("includes nested too deeply".into()));
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("{origin}:{}: expected 'key = value'", n + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(HarnessError::Config(format!(
                "{origin}:{}: empty key",
                n + 1
            )));
        }
        if k == "include" {
            out.extend(read_pairs(&base.join(v), seen, depth + 1)?);
        } else {
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

/// Parses `key=value` strings given on the command line.
pub fn parse_overrides(items: &[String]) -> Result<Vec<(String, String)>, HarnessError> {
    items
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| HarnessError::Config(format!("override '{s}' is not key=value")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_roundtrips() {
        let mut c = ExperimentConfig::desk();
        c.alpha = 0.37;
        c.hidden = vec![64, 32];
        c.polter_target = "ref/actor.bin".into();
        let text = c.to_kv_string();
        let back = ExperimentConfig::from_str_with_base(&text, Path::new(".")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn profile_and_overrides() {
        let text =
            "# paper scale\nprofile = paper\nalpha = 2\nseeds = 3,4\nkl_mode = mean_action\n";
        let c = ExperimentConfig::from_str_with_base(text, Path::new(".")).unwrap();
        assert_eq!(c.pretrain_steps, 2_000_000);
        assert_eq!(c.alpha, 2.0);
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.kl_mode, KlMode::MeanAction);
        assert_eq!(c.schedule, SnapshotSchedule::paper().entries());
    }

    #[test]
    fn integers_accept_underscores_and_exponents() {
        let c = ExperimentConfig::from_str_with_base(
            "pretrain_steps = 2e5\nfinetune_steps = 20_000",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.pretrain_steps, 200_000);
        assert_eq!(c.finetune_steps, 20_000);
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        for text in [
            "nope = 1",
            "alpha = fast",
            "polter = maybe",
            "kl_mode = other",
            "alpha = -1",
        ] {
            let e = ExperimentConfig::from_str_with_base(text, Path::new(".")).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }

    #[test]
    fn includes_resolve_relative_and_detect_cycles() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("base.cfg"), "alpha = 3\nbatch_size = 64\n").unwrap();
        fs::write(
            dir.path().join("run.cfg"),
            "include = base.cfg\nalpha = 4\n",
        )
        .unwrap();
        let c = ExperimentConfig::from_file(dir.path().join("run.cfg")).unwrap();
        assert_eq!(c.alpha, 4.0);
        assert_eq!(c.batch_size, 64);

        fs::write(dir.path().join("a.cfg"), "include = b.cfg\n").unwrap();
        fs::write(dir.path().join("b.cfg"), "include = a.cfg\n").unwrap();
        assert!(ExperimentConfig::from_file(dir.path().join("a.cfg")).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_and_seeds() {
        let a = ExperimentConfig::desk();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.seeds = vec![7];
        assert_eq!(a.content_hash(), b.content_hash());
        b.alpha = 0.5;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
