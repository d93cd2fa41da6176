//! Toy task-distribution environments.
//!
//! A one-dimensional point mass under damped acceleration control realizes
//! distributions whose tasks share dynamics and differ only in a band
//! reward over position or velocity. A second adapter exposes any tabular
//! task distribution to the neural agent through one-hot observations.
//!
//! Dynamics constants are fixed so closed-form oracles exist:
//! `v' = (1 - damping) v + dt * clamp(a, -1, 1)`, `x' = x + dt * v'`,
//! with `dt = 0.05` and `damping = 0.05` (terminal speed 1).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tdlab_tabular::TaskDistribution;

pub const DT: f64 = 0.05;
pub const DAMPING: f64 = 0.05;

/// Band reward specification: 1 inside `[lower, upper]`, Gaussian falloff
/// outside calibrated so the value at distance `margin` is `value_at_margin`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToleranceSpec {
    pub lower: f64,
    pub upper: f64,
    pub margin: f64,
    pub value_at_margin: f64,
}

impl ToleranceSpec {
    pub fn new(lower: f64, upper: f64, margin: f64) -> Self {
        assert!(lower <= upper, "lower <= upper");
        assert!(margin >= 0.0, "margin >= 0");
        Self {
            lower,
            upper,
            margin,
            value_at_margin: 0.1,
        }
    }
}

/// Smooth band reward in [0, 1].
pub fn tolerance(x: f64, spec: &ToleranceSpec) -> f64 {
    let d = if x < spec.lower {
        spec.lower - x
    } else if x > spec.upper {
        x - spec.upper
    } else {
        return 1.0;
    };
    if spec.margin == 0.0 {
        return 0.0;
    }
    let sigma = spec.margin / (2.0 * (1.0 / spec.value_at_margin).ln()).sqrt();
    (-0.5 * (d / sigma) * (d / sigma)).exp()
}

/// Emit the base reward only every `n`-th step (indices n-1, 2n-1, ...).
pub fn sparsify(rewards: &[f64], n: usize) -> Vec<f64> {
    assert!(n >= 1, "sparse rate >= 1");
    rewards
        .iter()
        .enumerate()
        .map(|(t, &r)| if (t + 1) % n == 0 { r } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandVariant {
    /// Reward depends on velocity.
    Speed,
    /// Reward depends on position.
    PositionBand,
}

/// A family of point-mass tasks sharing dynamics and differing in reward
/// bands. Observations are `(position, velocity)`; no task identity leaks
/// into the observation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PointTaskDistribution {
    pub variant: BandVariant,
    pub train: Vec<ToleranceSpec>,
    pub test: Vec<ToleranceSpec>,
    pub episode_len: usize,
    /// Initial position drawn uniformly from this range.
    pub x0_range: (f64, f64),
    /// Initial velocity drawn uniformly from this range.
    pub v0_range: (f64, f64),
    /// Emit rewards every n-th step (1 = dense).
    pub sparse_rate: usize,
}

impl PointTaskDistribution {
    pub fn validate(&self) {
        assert!(!self.train.is_empty(), "need at least one training task");
        assert!(self.episode_len >= 1);
        assert!(self.sparse_rate >= 1);
        for (i, a) in self.train.iter().enumerate() {
            for b in &self.test {
                assert!(
                    a.lower != b.lower || a.upper != b.upper,
                    "train task {i} duplicated in the test split"
                );
            }
        }
    }

    /// Two mirrored position bands: a pair of tasks whose optimal behaviors
    /// are opposite while any reward-blind policy sees only their average.
    pub fn opposite_bands() -> Self {
        let band = |lo: f64, hi: f64| ToleranceSpec::new(lo, hi, 0.6438);
        Self {
            variant: BandVariant::PositionBand,
            train: vec![band(0.3, 0.9), band(-0.9, -0.3)],
            test: vec![],
            episode_len: 200,
            x0_range: (-0.7, 0.7),
            v0_range: (-0.1, 0.1),
            sparse_rate: 1,
        }
    }

    /// Target-speed intervals scaled to the point mass, four for training
    /// and two held out.
    pub fn speed_bands() -> Self {
        let beta = 0.06;
        let band = |alpha: f64| ToleranceSpec::new(alpha - beta, alpha + beta, 0.15);
        Self {
            variant: BandVariant::Speed,
            train: vec![band(0.15), band(0.45), band(0.60), band(0.90)],
            test: vec![band(0.30), band(0.75)],
            episode_len: 200,
            x0_range: (0.0, 0.0),
            v0_range: (-0.05, 0.05),
            sparse_rate: 1,
        }
    }

    pub fn spec(&self, split: Split, task: usize) -> &ToleranceSpec {
        match split {
            Split::Train => &self.train[task],
            Split::Test => &self.test[task],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// A stepping environment bound to one task of a distribution.
pub trait TaskEnv {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn n_tasks(&self, split: Split) -> usize;
    fn episode_len(&self) -> usize;
    /// Start an episode of the given task; deterministic in `seed`.
    fn reset(&mut self, split: Split, task: usize, seed: u64) -> Vec<f64>;
    /// Returns (next observation, emitted reward, done).
    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool);
}

/// Point-mass environment over a `PointTaskDistribution`.
#[derive(Debug, Clone)]
pub struct PointEnv {
    dist: PointTaskDistribution,
    spec: ToleranceSpec,
    x: f64,
    v: f64,
    t: usize,
}

impl PointEnv {
    pub fn new(dist: PointTaskDistribution) -> Self {
        dist.validate();
        let spec = dist.train[0];
        Self {
            dist,
            spec,
            x: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn distribution(&self) -> &PointTaskDistribution {
        &self.dist
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.x, self.v]
    }
}

impl TaskEnv for PointEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn n_tasks(&self, split: Split) -> usize {
        match split {
            Split::Train => self.dist.train.len(),
            Split::Test => self.dist.test.len(),
        }
    }

    fn episode_len(&self) -> usize {
        self.dist.episode_len
    }

    fn reset(&mut self, split: Split, task: usize, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.spec = *self.dist.spec(split, task);
        self.x = uniform_in(&mut rng, self.dist.x0_range);
        self.v = uniform_in(&mut rng, self.dist.v0_range);
        self.t = 0;
        self.obs()
    }

    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool) {
        assert_eq!(action.len(), 1, "scalar acceleration");
        let a = action[0].clamp(-1.0, 1.0);
        self.v = (1.0 - DAMPING) * self.v + DT * a;
        self.x += DT * self.v;
        let measured = match self.dist.variant {
            BandVariant::Speed => self.v,
            BandVariant::PositionBand => self.x,
        };
        let base = tolerance(measured, &self.spec);
        let emitted = if (self.t + 1) % self.dist.sparse_rate == 0 {
            base
        } else {
            0.0
        };
        self.t += 1;
        (self.obs(), emitted, self.t >= self.dist.episode_len)
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

/// One-hot view of a tabular task distribution for the neural agent.
///
/// Observations are one-hot state indicators; the continuous action vector
/// is discretized by argmax over per-action logit slots.
pub struct TabularAdapterEnv {
    dist: TaskDistribution,
    episode_len: usize,
    task: usize,
    state: usize,
    t: usize,
    rng: ChaCha8Rng,
}

impl TabularAdapterEnv {
    pub fn new(dist: TaskDistribution, episode_len: usize) -> Self {
        use rand::SeedableRng;
        Self {
            dist,
            episode_len,
            task: 0,
            state: 0,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dist.n_states()];
        v[self.state] = 1.0;
        v
    }

    fn sample(&mut self, probs: &[f64]) -> usize {
        let mut u: f64 = self.rng.gen();
        for (i, &p) in probs.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return i;
            }
        }
        probs.len() - 1
    }
}

impl TaskEnv for TabularAdapterEnv {
    fn obs_dim(&self) -> usize {
        self.dist.n_states()
    }

    fn action_dim(&self) -> usize {
        self.dist.n_actions()
    }

    fn n_tasks(&self, split: Split) -> usize {
        match split {
            Split::Train => self.dist.n_tasks(),
            Split::Test => 0,
        }
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, split: Split, task: usize, seed: u64) -> Vec<f64> {
        use rand::SeedableRng;
        assert!(matches!(split, Split::Train), "tabular adapter has no test split");
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.task = task;
        let initial = self.dist.base().initial().to_vec();
        self.state = self.sample(&initial);
        self.t = 0;
        self.one_hot()
    }

    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool) {
        assert_eq!(action.len(), self.dist.n_actions());
        let a = action
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
            .unwrap()
            .0;
        let reward = self.dist.reward(self.task, self.state, a);
        let row = self.dist.base().p(self.state, a).to_vec();
        self.state = self.sample(&row);
        self.t += 1;
        (self.one_hot(), reward, self.t >= self.episode_len)
    }
}
