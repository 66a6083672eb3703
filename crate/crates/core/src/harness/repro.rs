//! The PointMass reproduction: reference policy, five pretraining variants
//! over all seeds, KL curves, finetuning curves and visitation entropy,
//! collapsed into one JSON summary plus pass/fail checks on it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    cmd_entropy, cmd_eval_kl, run_finetune, run_pretraining, train_oracle, ExperimentConfig,
    FinetuneSource, HarnessError, OracleSummary,
};
use crate::analysis::standard_error;
use crate::intrinsic::IntrinsicKind;

/// One pretraining variant of the reproduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Rnd,
    RndPolter,
    RndPolterStar,
    Apt,
    AptPolter,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Rnd,
        Variant::RndPolter,
        Variant::RndPolterStar,
        Variant::Apt,
        Variant::AptPolter,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Rnd => "rnd",
            Variant::RndPolter => "rnd+polter",
            Variant::RndPolterStar => "rnd+polter*",
            Variant::Apt => "apt",
            Variant::AptPolter => "apt+polter",
        }
    }

    fn dir_name(self) -> &'static str {
        match self {
            Variant::Rnd => "rnd",
            Variant::RndPolter => "rnd_polter",
            Variant::RndPolterStar => "rnd_polter_star",
            Variant::Apt => "apt",
            Variant::AptPolter => "apt_polter",
        }
    }

    fn is_rnd(self) -> bool {
        matches!(
            self,
            Variant::Rnd | Variant::RndPolter | Variant::RndPolterStar
        )
    }

    /// The base config specialized to this variant.
    pub fn config(self, base: &ExperimentConfig, oracle_actor: &Path) -> ExperimentConfig {
        let mut c = base.clone();
        c.algorithm = if self.is_rnd() {
            IntrinsicKind::Rnd
        } else {
            IntrinsicKind::Apt
        };
        c.polter = !matches!(self, Variant::Rnd | Variant::Apt);
        c.polter_target = if self == Variant::RndPolterStar {
            oracle_actor.display().to_string()
        } else {
            String::new()
        };
        c
    }
}

/// `(step, value)` series of one seed.
pub type Curve = Vec<(u64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: String,
    /// KL to the reference policy per checkpoint, one curve per seed.
    pub kl: Vec<Curve>,
    /// Finetuning evaluation returns, one curve per seed.
    pub finetune: Vec<Curve>,
    /// Joint visitation entropy per checkpoint fraction, one curve per seed.
    pub entropy: Vec<Curve>,
    pub position_entropy: Vec<Curve>,
    /// Final actor digest of each seed's pretraining run.
    pub actor_digests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproSummary {
    pub config_hash: String,
    pub config: String,
    pub seeds: Vec<u64>,
    pub oracle: OracleSummary,
    pub variants: Vec<VariantResult>,
    pub scratch: Vec<Curve>,
}

impl ReproSummary {
    pub fn variant(&self, v: Variant) -> Option<&VariantResult> {
        self.variants.iter().find(|r| r.variant == v.label())
    }
}

/// Cross-seed mean and standard error at each step of aligned curves.
pub fn band(curves: &[Curve]) -> Vec<(u64, f64, f64)> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(i, &(step, _))| {
            let v: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (step, m, standard_error(&v))
        })
        .collect()
}

/// Reproduction directory for a base config.
pub fn results_dir(root: &Path, base: &ExperimentConfig) -> PathBuf {
    root.join(format!("repro_{}", base.content_hash()))
}

fn variant_dir(dir: &Path, v: Variant, seed: u64) -> PathBuf {
    dir.join(v.dir_name()).join(format!("seed{seed}"))
}

/// Runs (or resumes) the reproduction under `results_dir(root, base)` and
/// writes `summary.json` there. Completed pieces are reused.
pub fn run_reproduction(
    base: &ExperimentConfig,
    root: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<ReproSummary, HarnessError> {
    base.validate()?;
    let dir = results_dir(root, base);
    fs::create_dir_all(&dir)?;
    base.write_resolved(dir.join("config.cfg"))?;
    let summary_path = dir.join("summary.json");
    if let Some(s) = load_summary(&summary_path) {
        if s.config_hash == base.content_hash() {
            return Ok(s);
        }
    }

    progress("reference policy");
    let oracle = train_oracle(base, 0, &dir.join("oracle"))?;
    progress(&format!(
        "reference policy mean distance {:.4} (converged: {})",
        oracle.mean_distance, oracle.converged
    ));

    let mut variants = Vec::new();
    for v in Variant::ALL {
        let cfg = v.config(base, &oracle.actor_path);
        let mut res = VariantResult {
            variant: v.label().into(),
            kl: Vec::new(),
            finetune: Vec::new(),
            entropy: Vec::new(),
            position_entropy: Vec::new(),
            actor_digests: Vec::new(),
        };
        for &seed in &base.seeds {
            progress(&format!("{} seed {seed}: pretraining", v.label()));
            let run_dir = variant_dir(&dir, v, seed);
            let pre = run_pretraining(&cfg, seed, &run_dir)?;
            res.actor_digests.push(pre.info.actor_digest.clone());
            if v.is_rnd() {
                let kl = cmd_eval_kl(&run_dir, &oracle.actor_path)?;
                res.kl
                    .push(kl.iter().map(|r| (r.step, r.kl_mean)).collect());
                progress(&format!("{} seed {seed}: finetuning", v.label()));
                let source = FinetuneSource::Checkpoint {
                    run_dir: run_dir.clone(),
                    step: cfg.pretrain_steps,
                };
                let f = run_finetune(&cfg, &source, seed, &run_dir.join("finetune"))?;
                res.finetune
                    .push(f.rows.iter().map(|r| (r.step, r.eval_return)).collect());
            } else {
                let e = cmd_entropy(&run_dir)?;
                res.entropy
                    .push(e.iter().map(|r| (r.step, r.entropy)).collect());
                res.position_entropy
                    .push(e.iter().map(|r| (r.step, r.position_entropy)).collect());
            }
        }
        variants.push(res);
    }

    let mut scratch = Vec::new();
    for &seed in &base.seeds {
        progress(&format!("scratch seed {seed}: finetuning"));
        let f = run_finetune(
            base,
            &FinetuneSource::Scratch,
            seed,
            &dir.join("scratch").join(format!("seed{seed}")),
        )?;
        scratch.push(f.rows.iter().map(|r| (r.step, r.eval_return)).collect());
    }

    let summary = ReproSummary {
        config_hash: base.content_hash(),
        config: base.to_kv_string(),
        seeds: base.seeds.clone(),
        oracle,
        variants,
        scratch,
    };
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn load_summary(path: &Path) -> Option<ReproSummary> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

/// Outcome of one reproduction check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn missing(name: &str, what: &str) -> Check {
    Check {
        name: name.into(),
        pass: false,
        detail: format!("summary lacks {what}"),
    }
}

/// KL curves: RND+POLTER below RND at the final checkpoint, and standard-error
/// bands separated at ≥ 70% of checkpoints in the second half of pretraining.
pub fn check_kl_curves(s: &ReproSummary, pretrain_steps: u64) -> Check {
    let name = "kl_to_reference";
    let (Some(p), Some(b)) = (s.variant(Variant::RndPolter), s.variant(Variant::Rnd)) else {
        return missing(name, "rnd curves");
    };
    let (pb, bb) = (band(&p.kl), band(&b.kl));
    if pb.is_empty() || pb.len() != bb.len() {
        return missing(name, "aligned KL curves");
    }
    let last = pb.len() - 1;
    let final_lower = pb[last].1 < bb[last].1;
    let second: Vec<usize> = (0..pb.len())
        .filter(|&i| 2 * pb[i].0 > pretrain_steps)
        .collect();
    let separated = second
        .iter()
        .filter(|&&i| pb[i].1 + pb[i].2 < bb[i].1 - bb[i].2)
        .count();
    let frac = separated as f64 / second.len().max(1) as f64;
    Check {
        name: name.into(),
        pass: final_lower && !second.is_empty() && frac >= 0.7,
        detail: format!(
            "final KL {:.4}±{:.4} (polter) vs {:.4}±{:.4} (rnd); separated at {separated}/{} second-half checkpoints ({:.0}%)",
            pb[last].1,
            pb[last].2,
            bb[last].1,
            bb[last].2,
            second.len(),
            100.0 * frac
        ),
    }
}

/// Finetuning: RND+POLTER mean return ≥ RND at every evaluation after the
/// first quarter; RND+POLTER* ≥ RND+POLTER minus one standard error there.
pub fn check_finetune_curves(s: &ReproSummary, finetune_steps: u64) -> Check {
    let name = "finetune_returns";
    let (Some(p), Some(b), Some(star)) = (
        s.variant(Variant::RndPolter),
        s.variant(Variant::Rnd),
        s.variant(Variant::RndPolterStar),
    ) else {
        return missing(name, "rnd finetune curves");
    };
    let (pb, bb, sb) = (band(&p.finetune), band(&b.finetune), band(&star.finetune));
    if pb.is_empty() || pb.len() != bb.len() || pb.len() != sb.len() {
        return missing(name, "aligned finetune curves");
    }
    let late: Vec<usize> = (0..pb.len())
        .filter(|&i| 4 * pb[i].0 > finetune_steps)
        .collect();
    let polter_fail: Vec<u64> = late
        .iter()
        .filter(|&&i| pb[i].1 < bb[i].1)
        .map(|&i| pb[i].0)
        .collect();
    let star_fail: Vec<u64> = late
        .iter()
        .filter(|&&i| sb[i].1 < pb[i].1 - pb[i].2)
        .map(|&i| pb[i].0)
        .collect();
    let fmt = |b: &[(u64, f64, f64)]| {
        late.iter()
            .map(|&i| format!("{:.1}", b[i].1))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Check {
        name: name.into(),
        pass: !late.is_empty() && polter_fail.is_empty() && star_fail.is_empty(),
        detail: format!(
            "late means rnd+polter [{}] rnd [{}] rnd+polter* [{}]; polter below rnd at {polter_fail:?}; polter* short at {star_fail:?}",
            fmt(&pb),
            fmt(&bb),
            fmt(&sb)
        ),
    }
}

/// Visitation entropy: APT+POLTER ≤ APT (seed mean) at every checkpoint fraction.
pub fn check_entropy(s: &ReproSummary) -> Check {
    let name = "apt_entropy";
    let (Some(p), Some(b)) = (s.variant(Variant::AptPolter), s.variant(Variant::Apt)) else {
        return missing(name, "apt entropy");
    };
    let (pb, bb) = (band(&p.entropy), band(&b.entropy));
    if pb.is_empty() || pb.len() != bb.len() {
        return missing(name, "aligned entropy rows");
    }
    let rows: Vec<String> = pb
        .iter()
        .zip(&bb)
        .map(|(x, y)| format!("{}: {:.4} vs {:.4}", x.0, x.1, y.1))
        .collect();
    Check {
        name: name.into(),
        pass: pb.iter().zip(&bb).all(|(x, y)| x.1 <= y.1),
        detail: format!("apt+polter vs apt entropy (nats) {}", rows.join(", ")),
    }
}
