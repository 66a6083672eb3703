use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schedule::ScheduleCursor;
use super::PolterError;
use crate::nn::Mlp;

/// A frozen actor copy and the schedule entry it was taken for.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    /// Schedule entry that triggered the snapshot.
    pub entry: u64,
    /// Environment step at which the copy was actually taken.
    pub step: u64,
    actor: Mlp<f32>,
}

impl EnsembleMember {
    pub fn actor(&self) -> &Mlp<f32> {
        &self.actor
    }
}

/// Uniform mixture of frozen actor snapshots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsemblePolicy {
    members: Vec<EnsembleMember>,
    fixed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    entry: u64,
    step: u64,
    weight: f64,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    k: usize,
    fixed: bool,
    members: Vec<ManifestEntry>,
}

impl EnsemblePolicy {
    pub fn new() -> Self {
        Self::default()
    }

    /// A single permanent member (e.g. a reference policy); never grows.
    pub fn fixed(actor: Mlp<f32>) -> Self {
        Self {
            members: vec![EnsembleMember {
                entry: 0,
                step: 0,
                actor,
            }],
            fixed: true,
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.fixed
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn actors(&self) -> impl Iterator<Item = &Mlp<f32>> {
        self.members.iter().map(|m| &m.actor)
    }

    /// Mixture weight of every member, `1/k`.
    pub fn weight(&self) -> f64 {
        if self.members.is_empty() {
            0.0
        } else {
            1.0 / self.members.len() as f64
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        vec![self.weight(); self.members.len()]
    }

    /// `(entry, step)` of every member in insertion order.
    pub fn snapshot_steps(&self) -> Vec<(u64, u64)> {
        self.members.iter().map(|m| (m.entry, m.step)).collect()
    }

    fn push(&mut self, entry: u64, step: u64, actor: &Mlp<f32>) {
        self.members.push(EnsembleMember {
            entry,
            step,
            actor: actor.clone(),
        });
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), PolterError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let w = self.weight();
        let mut members = Vec::with_capacity(self.k());
        for m in &self.members {
            let file = format!("member_{}.bin", m.entry);
            m.actor.save(dir.join(&file))?;
            members.push(ManifestEntry {
                entry: m.entry,
                step: m.step,
                weight: w,
                file,
            });
        }
        let manifest = Manifest {
            k: self.k(),
            fixed: self.fixed,
            members,
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, PolterError> {
        let dir = dir.as_ref();
        let manifest: Manifest =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.k != manifest.members.len() {
            return Err(PolterError::Manifest(format!(
                "k = {} but {} members listed",
                manifest.k,
                manifest.members.len()
            )));
        }
        let mut members = Vec::with_capacity(manifest.k);
        for m in manifest.members {
            members.push(EnsembleMember {
                entry: m.entry,
                step: m.step,
                actor: Mlp::load(dir.join(&m.file))?,
            });
        }
        Ok(Self {
            members,
            fixed: manifest.fixed,
        })
    }
}

/// At an episode boundary at env step `step`: one copy of `actor` per schedule
/// entry `≤ step` not yet consumed. Returns the consumed entries.
pub fn maybe_snapshot(
    ensemble: &mut EnsemblePolicy,
    cursor: &mut ScheduleCursor,
    step: u64,
    actor: &Mlp<f32>,
) -> Vec<u64> {
    let due = cursor.take_due(step);
    if !ensemble.fixed {
        for &entry in &due {
            ensemble.push(entry, step, actor);
        }
    }
    due
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::polter::SnapshotSchedule;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn actor(seed: u64) -> Mlp<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::with_hidden(4, &[8], 2, Activation::Relu, Activation::Tanh, &mut rng).unwrap()
    }

    #[test]
    fn before_first_entry_nothing_happens() {
        let mut e = EnsemblePolicy::new();
        let mut c = ScheduleCursor::new(SnapshotSchedule::desk());
        assert!(maybe_snapshot(&mut e, &mut c, 2_400, &actor(0)).is_empty());
        assert_eq!(e.k(), 0);
        assert_eq!(e.weight(), 0.0);
    }

    #[test]
    fn third_entry_gives_uniform_thirds() {
        let mut e = EnsemblePolicy::new();
        let mut c = ScheduleCursor::new(SnapshotSchedule::desk());
        for step in (0..=10_000).step_by(200) {
            maybe_snapshot(&mut e, &mut c, step, &actor(step));
        }
        assert_eq!(e.k(), 3);
        assert_eq!(e.weights(), vec![1.0 / 3.0; 3]);
        assert_eq!(
            e.snapshot_steps(),
            vec![(2_500, 2_600), (5_000, 5_000), (10_000, 10_000)]
        );
    }

    #[test]
    fn members_are_deep_copies() {
        let mut e = EnsemblePolicy::new();
        let mut c = ScheduleCursor::new(SnapshotSchedule::new(vec![0]).unwrap());
        let mut a = actor(1);
        maybe_snapshot(&mut e, &mut c, 0, &a);
        let frozen = a.clone();
        a.layers_mut()[0].weights_mut()[0] += 1.0;
        assert!(e.members()[0].actor().bit_eq(&frozen));
    }

    #[test]
    fn fixed_ensemble_never_grows() {
        let mut e = EnsemblePolicy::fixed(actor(2));
        let mut c = ScheduleCursor::new(SnapshotSchedule::desk());
        maybe_snapshot(&mut e, &mut c, 200_000, &actor(3));
        assert_eq!(e.k(), 1);
        assert!(e.members()[0].actor().bit_eq(&actor(2)));
    }

    #[test]
    fn manifest_roundtrip() {
        let mut e = EnsemblePolicy::new();
        let mut c = ScheduleCursor::new(SnapshotSchedule::new(vec![10, 20]).unwrap());
        maybe_snapshot(&mut e, &mut c, 12, &actor(4));
        maybe_snapshot(&mut e, &mut c, 24, &actor(5));
        let dir = tempfile::tempdir().unwrap();
        e.save(dir.path()).unwrap();
        let back = EnsemblePolicy::load(dir.path()).unwrap();
        assert_eq!(back, e);
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(text.contains("member_20.bin"));
    }
}
