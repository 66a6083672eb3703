//! Ring-buffer replay with episode-aware n-step windows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::DdpgError;
use crate::nn::Matrix;

/// One environment step. `done` marks true termination only; time-limit
/// truncation is signalled by starting a new episode in the buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_obs: Vec<f32>,
    pub done: bool,
}

/// A minibatch of n-step windows.
///
/// Sample `b` starts at `(obs[b], action[b])` and spans `steps[b]` transitions
/// (fewer than `n` only if the window hits a terminal transition). The inner
/// transitions are stored flat in `inner_*`, sample `b` occupying rows
/// `offsets[b] .. offsets[b] + steps[b]`, so rewards can be recomputed per step.
#[derive(Debug, Clone, PartialEq)]
pub struct NStepBatch {
    pub obs: Matrix<f32>,
    pub action: Matrix<f32>,
    /// `s_{t+m}` for a window of `m` steps.
    pub next_obs: Matrix<f32>,
    /// `γ^m (1 - d)`: weight of the bootstrap value.
    pub bootstrap_discount: Vec<f32>,
    pub steps: Vec<usize>,
    pub offsets: Vec<usize>,
    pub inner_obs: Matrix<f32>,
    pub inner_action: Matrix<f32>,
    pub inner_next_obs: Matrix<f32>,
    /// Rewards stored in the buffer, one per inner row.
    pub inner_reward: Vec<f32>,
    /// Ring-buffer slots of the window starts (for diagnostics and tests).
    pub slots: Vec<usize>,
}

impl NStepBatch {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `Σ_{i<m} γ^i r_{t+i}` for per-inner-row rewards laid out like `inner_reward`.
    pub fn discounted_returns(&self, inner_rewards: &[f32], gamma: f32) -> Vec<f32> {
        self.offsets
            .iter()
            .zip(&self.steps)
            .map(|(&off, &m)| {
                let mut acc = 0.0f32;
                let mut g = 1.0f32;
                for &r in &inner_rewards[off..off + m] {
                    acc += g * r;
                    g *= gamma;
                }
                acc
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    n_step: usize,
    gamma: f32,
    obs: Vec<f32>,
    action: Vec<f32>,
    reward: Vec<f32>,
    next_obs: Vec<f32>,
    done: Vec<bool>,
    episode: Vec<u64>,
    /// Slot the next push writes to.
    head: usize,
    len: usize,
    current_episode: u64,
    pushed: u64,
}

const MAX_REJECTIONS_PER_SAMPLE: usize = 1000;
const REPLAY_MAGIC: &[u8; 8] = b"PLTRRPL\0";

impl ReplayBuffer {
    pub fn new(
        capacity: usize,
        obs_dim: usize,
        act_dim: usize,
        n_step: usize,
        gamma: f32,
    ) -> Result<Self, DdpgError> {
        if capacity == 0 || n_step == 0 || obs_dim == 0 || act_dim == 0 {
            return Err(DdpgError::Config(format!(
                "replay needs positive capacity/n_step/dims, got {capacity}/{n_step}/{obs_dim}/{act_dim}"
            )));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            n_step,
            gamma,
            obs: vec![0.0; capacity * obs_dim],
            action: vec![0.0; capacity * act_dim],
            reward: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            done: vec![false; capacity],
            episode: vec![0; capacity],
            head: 0,
            len: 0,
            current_episode: 0,
            pushed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_step(&self) -> usize {
        self.n_step
    }

    pub fn gamma(&self) -> f32 {
        self.gamma
    }

    /// Total transitions ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    /// Marks an episode boundary; later pushes belong to a new episode.
    pub fn start_episode(&mut self) {
        if self.len > 0 {
            self.current_episode += 1;
        }
    }

    pub fn push(&mut self, t: &Transition) -> Result<(), DdpgError> {
        if t.obs.len() != self.obs_dim
            || t.next_obs.len() != self.obs_dim
            || t.action.len() != self.act_dim
        {
            return Err(DdpgError::Config(format!(
                "transition dims ({}, {}, {}) do not match buffer ({}, {})",
                t.obs.len(),
                t.action.len(),
                t.next_obs.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let i = self.head;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
        self.action[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
        self.reward[i] = t.reward;
        self.done[i] = t.done;
        self.episode[i] = self.current_episode;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        self.pushed += 1;
        if t.done {
            self.current_episode += 1;
        }
        Ok(())
    }

    /// Slot of the `j`-th oldest stored transition.
    #[inline]
    fn slot(&self, j: usize) -> usize {
        (self.head + self.capacity - self.len + j) % self.capacity
    }

    /// Stored transition at logical position `j` (0 = oldest).
    pub fn get(&self, j: usize) -> Option<Transition> {
        (j < self.len).then(|| {
            let i = self.slot(j);
            Transition {
                obs: self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
                action: self.action[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
                reward: self.reward[i],
                next_obs: self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
                done: self.done[i],
            }
        })
    }

    /// Window length starting at logical position `j`, or `None` if the
    /// window would cross an episode boundary or run past the newest entry.
    fn window(&self, j: usize) -> Option<usize> {
        let ep = self.episode[self.slot(j)];
        for q in 0..self.n_step {
            if j + q >= self.len {
                return None;
            }
            let i = self.slot(j + q);
            if self.episode[i] != ep {
                return None;
            }
            if self.done[i] {
                return Some(q + 1);
            }
        }
        Some(self.n_step)
    }

    /// Uniform sample of valid n-step windows (rejection sampling over starts).
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<NStepBatch, DdpgError> {
        if self.len == 0 || batch_size == 0 {
            return Err(DdpgError::Replay(format!(
                "cannot sample {batch_size} windows from {} transitions",
                self.len
            )));
        }
        let mut starts = Vec::with_capacity(batch_size);
        let mut rejections = 0usize;
        while starts.len() < batch_size {
            let j = rng.gen_range(0..self.len);
            match self.window(j) {
                Some(m) => starts.push((j, m)),
                None => {
                    rejections += 1;
                    if rejections > MAX_REJECTIONS_PER_SAMPLE * batch_size {
                        return Err(DdpgError::Replay(
                            "no valid n-step window in the buffer".into(),
                        ));
                    }
                }
            }
        }
        Ok(self.gather(&starts))
    }

    fn gather(&self, starts: &[(usize, usize)]) -> NStepBatch {
        let (od, ad) = (self.obs_dim, self.act_dim);
        let b = starts.len();
        let total: usize = starts.iter().map(|&(_, m)| m).sum();
        let mut obs = Vec::with_capacity(b * od);
        let mut action = Vec::with_capacity(b * ad);
        let mut next_obs = Vec::with_capacity(b * od);
        let mut disc = Vec::with_capacity(b);
        let mut steps = Vec::with_capacity(b);
        let mut offsets = Vec::with_capacity(b);
        let mut slots = Vec::with_capacity(b);
        let mut in_obs = Vec::with_capacity(total * od);
        let mut in_act = Vec::with_capacity(total * ad);
        let mut in_next = Vec::with_capacity(total * od);
        let mut in_rew = Vec::with_capacity(total);
        for &(j, m) in starts {
            let first = self.slot(j);
            let last = self.slot(j + m - 1);
            slots.push(first);
            obs.extend_from_slice(&self.obs[first * od..(first + 1) * od]);
            action.extend_from_slice(&self.action[first * ad..(first + 1) * ad]);
            next_obs.extend_from_slice(&self.next_obs[last * od..(last + 1) * od]);
            let terminal = self.done[last];
            disc.push(if terminal {
                0.0
            } else {
                self.gamma.powi(m as i32)
            });
            offsets.push(in_rew.len());
            steps.push(m);
            for q in 0..m {
                let i = self.slot(j + q);
                in_obs.extend_from_slice(&self.obs[i * od..(i + 1) * od]);
                in_act.extend_from_slice(&self.action[i * ad..(i + 1) * ad]);
                in_next.extend_from_slice(&self.next_obs[i * od..(i + 1) * od]);
                in_rew.push(self.reward[i]);
            }
        }
        let mat = |rows, cols, data| Matrix::from_vec(rows, cols, data).expect("sized above");
        NStepBatch {
            obs: mat(b, od, obs),
            action: mat(b, ad, action),
            next_obs: mat(b, od, next_obs),
            bootstrap_discount: disc,
            steps,
            offsets,
            inner_obs: mat(total, od, in_obs),
            inner_action: mat(total, ad, in_act),
            inner_next_obs: mat(total, od, in_next),
            inner_reward: in_rew,
            slots,
        }
    }

    /// Replaces every stored reward with `f(next_obs)` (task relabelling).
    pub fn relabel_rewards(&mut self, f: impl Fn(&[f32]) -> f32) {
        for i in 0..self.len {
            let s = self.slot(i);
            self.reward[s] = f(&self.next_obs[s * self.obs_dim..(s + 1) * self.obs_dim]);
        }
    }

    /// Raw little-endian dump of the stored transitions, oldest first.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DdpgError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(REPLAY_MAGIC)?;
        for v in [
            self.capacity as u64,
            self.obs_dim as u64,
            self.act_dim as u64,
            self.n_step as u64,
            self.len as u64,
            self.current_episode,
            self.pushed,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.gamma.to_le_bytes())?;
        for j in 0..self.len {
            let i = self.slot(j);
            for &x in self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
                .iter()
                .chain(&self.action[i * self.act_dim..(i + 1) * self.act_dim])
                .chain(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim])
                .chain(std::iter::once(&self.reward[i]))
            {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&[self.done[i] as u8])?;
            w.write_all(&self.episode[i].to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DdpgError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != REPLAY_MAGIC {
            return Err(DdpgError::Replay("not a replay dump".into()));
        }
        let mut u64s = [0u64; 7];
        for v in u64s.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = u64::from_le_bytes(b);
        }
        let [capacity, obs_dim, act_dim, n_step, len, current_episode, pushed] = u64s;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let gamma = f32::from_le_bytes(b4);
        if len > capacity {
            return Err(DdpgError::Replay(
                "replay dump longer than its capacity".into(),
            ));
        }
        let mut buf = Self::new(
            capacity as usize,
            obs_dim as usize,
            act_dim as usize,
            n_step as usize,
            gamma,
        )?;
        let (od, ad) = (obs_dim as usize, act_dim as usize);
        let read_f32s = |dst: &mut [f32], r: &mut BufReader<File>| -> Result<(), DdpgError> {
            for x in dst.iter_mut() {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                *x = f32::from_le_bytes(b);
            }
            Ok(())
        };
        for j in 0..len as usize {
            read_f32s(&mut buf.obs[j * od..(j + 1) * od], &mut r)?;
            read_f32s(&mut buf.action[j * ad..(j + 1) * ad], &mut r)?;
            read_f32s(&mut buf.next_obs[j * od..(j + 1) * od], &mut r)?;
            read_f32s(std::slice::from_mut(&mut buf.reward[j]), &mut r)?;
            let mut d = [0u8; 1];
            r.read_exact(&mut d)?;
            buf.done[j] = d[0] != 0;
            let mut e = [0u8; 8];
            r.read_exact(&mut e)?;
            buf.episode[j] = u64::from_le_bytes(e);
        }
        buf.len = len as usize;
        buf.head = buf.len % buf.capacity;
        buf.current_episode = current_episode;
        buf.pushed = pushed;
        Ok(buf)
    }

    /// Order-sensitive digest of the stored contents (for reproducibility checks).
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x100000001b3);
        };
        for j in 0..self.len {
            let i = self.slot(j);
            for &x in self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
                .iter()
                .chain(&self.action[i * self.act_dim..(i + 1) * self.act_dim])
                .chain(&self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim])
                .chain(std::iter::once(&self.reward[i]))
            {
                eat(x.to_bits() as u64);
            }
            eat(self.done[i] as u64);
            eat(self.episode[i]);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(x: f32, r: f32, done: bool) -> Transition {
        Transition {
            obs: vec![x],
            action: vec![0.0],
            reward: r,
            next_obs: vec![x + 1.0],
            done,
        }
    }

    #[test]
    fn capacity_is_never_exceeded_and_oldest_goes_first() {
        let mut buf = ReplayBuffer::new(3, 1, 1, 1, 0.99).unwrap();
        for i in 0..5 {
            buf.push(&tr(i as f32, 0.0, false)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).unwrap().obs, vec![2.0]);
        assert_eq!(buf.get(2).unwrap().obs, vec![4.0]);
    }

    #[test]
    fn windows_stay_inside_episodes() {
        let mut buf = ReplayBuffer::new(100, 1, 1, 3, 0.9).unwrap();
        for ep in 0..4 {
            buf.start_episode();
            for t in 0..5 {
                buf.push(&tr((ep * 10 + t) as f32, 1.0, false)).unwrap();
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = buf.sample(500, &mut rng).unwrap();
        for b in 0..batch.len() {
            assert_eq!(batch.steps[b], 3);
            let start = batch.obs.get(b, 0);
            // inner observations are consecutive steps of the same episode
            for q in 0..3 {
                let o = batch.inner_obs.get(batch.offsets[b] + q, 0);
                assert_eq!(o, start + q as f32);
                assert_eq!((o / 10.0).floor(), (start / 10.0).floor());
            }
            assert_eq!(batch.next_obs.get(b, 0), start + 3.0);
            // starts at t = 3, 4 of an episode cannot hold a full window
            assert!(start % 10.0 <= 2.0);
        }
    }

    #[test]
    fn terminal_truncates_window_and_bootstrap() {
        let mut buf = ReplayBuffer::new(10, 1, 1, 3, 0.5).unwrap();
        buf.push(&tr(0.0, 1.0, false)).unwrap();
        buf.push(&tr(1.0, 2.0, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = buf.sample(50, &mut rng).unwrap();
        for b in 0..batch.len() {
            assert_eq!(batch.bootstrap_discount[b], 0.0);
            let rets = batch.discounted_returns(&batch.inner_reward, 0.5);
            if batch.obs.get(b, 0) == 0.0 {
                assert_eq!(batch.steps[b], 2);
                assert_eq!(rets[b], 1.0 + 0.5 * 2.0);
            } else {
                assert_eq!(batch.steps[b], 1);
                assert_eq!(rets[b], 2.0);
            }
        }
    }

    #[test]
    fn too_short_buffer_reports_no_window() {
        let mut buf = ReplayBuffer::new(10, 1, 1, 3, 0.9).unwrap();
        buf.push(&tr(0.0, 0.0, false)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(buf.sample(4, &mut rng), Err(DdpgError::Replay(_))));
    }

    #[test]
    fn dump_roundtrip_preserves_contents_and_sampling() {
        let mut buf = ReplayBuffer::new(4, 1, 1, 2, 0.9).unwrap();
        for i in 0..6 {
            if i == 3 {
                buf.start_episode();
            }
            buf.push(&tr(i as f32, i as f32, false)).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.bin");
        buf.save(&path).unwrap();
        let back = ReplayBuffer::load(&path).unwrap();
        assert_eq!(back.digest(), buf.digest());
        let s1 = buf.sample(16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let s2 = back.sample(16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(s1.obs, s2.obs);
        assert_eq!(s1.inner_reward, s2.inner_reward);
    }

    #[test]
    fn n_step_return_by_hand() {
        let mut buf = ReplayBuffer::new(10, 1, 1, 3, 0.99).unwrap();
        for i in 0..3 {
            buf.push(&tr(i as f32, 1.0, false)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = buf.sample(1, &mut rng).unwrap();
        let ret = batch.discounted_returns(&batch.inner_reward, 0.99)[0];
        assert!((ret - (1.0 + 0.99 + 0.9801)).abs() < 1e-6);
        assert!((batch.bootstrap_discount[0] - 0.970299).abs() < 1e-6);
    }
}
