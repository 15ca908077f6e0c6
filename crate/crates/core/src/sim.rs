//! Synthetic session generator: a reflected Gaussian random walk on the unit
//! interval drives Poisson spiking through scaled Beta tuning curves. Three
//! neuron kinds exist: uniform firers, location-sensitive cells shared by
//! both contexts, and context-dependent cells that are location-sensitive in
//! exactly one context and uniform in the other.
//!
//! With zero context-dependent neurons the task and free-running conditional
//! firing laws are identical by construction, which makes such datasets exact
//! nulls for the divergence test.

use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::data::{Context, Direction, SessionDataset};
use crate::error::{Error, Result};
use crate::rng::{derived_rng, Rng, Stream};

/// Beta density on [0,1]. Endpoints return the uniform value for the flat
/// curve and 0 otherwise (all tuned neurons here have alpha, beta > 1).
pub fn beta_pdf(y: f64, alpha: f64, beta: f64) -> f64 {
    if alpha == 1.0 && beta == 1.0 {
        return if (0.0..=1.0).contains(&y) { 1.0 } else { 0.0 };
    }
    if y <= 0.0 || y >= 1.0 {
        return 0.0;
    }
    ((alpha - 1.0) * y.ln() + (beta - 1.0) * (1.0 - y).ln() - ln_beta(alpha, beta)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    /// Uniform firing everywhere, both contexts.
    Random,
    /// Location-sensitive in both contexts.
    LocationSensitive,
    /// Location-sensitive during task only.
    TaskOnly,
    /// Location-sensitive during free running only.
    FrOnly,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub kind: NeuronKind,
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
}

impl NeuronSpec {
    pub fn uniform(scale: f64) -> Self {
        NeuronSpec {
            kind: NeuronKind::Random,
            alpha: 1.0,
            beta: 1.0,
            scale,
        }
    }

    /// Location-sensitive neuron with a Beta curve of the given mean and
    /// variance.
    pub fn tuned(kind: NeuronKind, mu: f64, variance: f64, scale: f64) -> Result<Self> {
        if !(0.0 < mu && mu < 1.0) {
            return Err(Error::Config(format!("tuning mean {mu} outside (0,1)")));
        }
        let nu = mu * (1.0 - mu) / variance - 1.0;
        if nu <= 0.0 {
            return Err(Error::Config(format!(
                "tuning variance {variance} too large for mean {mu}"
            )));
        }
        Ok(NeuronSpec {
            kind,
            alpha: mu * nu,
            beta: (1.0 - mu) * nu,
            scale,
        })
    }

    pub fn sensitive_in(&self, context: Context) -> bool {
        match self.kind {
            NeuronKind::Random => false,
            NeuronKind::LocationSensitive => true,
            NeuronKind::TaskOnly => context == Context::Task,
            NeuronKind::FrOnly => context == Context::FreeRunning,
        }
    }

    /// Poisson rate at location `y` in the given context.
    pub fn rate(&self, y: f64, context: Context) -> f64 {
        if self.sensitive_in(context) {
            self.scale * beta_pdf(y, self.alpha, self.beta)
        } else {
            self.scale
        }
    }
}

/// One Poisson draw for a neuron at location `y`.
pub fn fire(neuron: &NeuronSpec, y: f64, context: Context, rng: &mut Rng) -> u32 {
    let rate = neuron.rate(y, context);
    if rate <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(rate).expect("positive rate").sample(rng);
    draw as u32
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WalkParams {
    pub drift: f64,
    pub sigma: f64,
    pub max_steps: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            drift: 0.001,
            sigma: 0.03,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TuningParams {
    pub variance: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
}

impl Default for TuningParams {
    fn default() -> Self {
        TuningParams {
            variance: 0.01,
            mu_lo: 0.15,
            mu_hi: 0.85,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub n_random: usize,
    pub n_both: usize,
    /// Context-dependent neurons, split evenly into task-only and fr-only.
    pub n_context: usize,
    pub scale: f64,
    /// Subdatasets generated per context.
    pub n_subdatasets: usize,
    #[serde(default)]
    pub walk: WalkParams,
    #[serde(default)]
    pub tuning: TuningParams,
    pub n_classes: usize,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_random: 0,
            n_both: 10,
            n_context: 0,
            scale: 0.5,
            n_subdatasets: 10,
            walk: WalkParams::default(),
            tuning: TuningParams::default(),
            n_classes: 3,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_context % 2 != 0 {
            return Err(Error::Config(format!(
                "n_context must be even (task/fr halves), got {}",
                self.n_context
            )));
        }
        if self.n_random + self.n_both + self.n_context == 0 {
            return Err(Error::Config("simulation needs at least one neuron".into()));
        }
        if self.n_subdatasets == 0 {
            return Err(Error::Config("n_subdatasets must be positive".into()));
        }
        if self.scale <= 0.0 {
            return Err(Error::Config("scale must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("n_classes must be at least 2".into()));
        }
        Ok(())
    }

    pub fn n_neurons(&self) -> usize {
        self.n_random + self.n_both + self.n_context
    }
}

/// Evenly spaced tuning means on [lo, hi]; a single neuron sits at the
/// midpoint.
fn spaced_means(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => (0..n)
            .map(|i| lo + i as f64 * (hi - lo) / (n - 1) as f64)
            .collect(),
    }
}

/// Build the neuron population for a spec: uniform firers first, then the
/// shared location-sensitive cells, then the task-only and fr-only halves.
pub fn build_neurons(spec: &SimSpec) -> Result<Vec<NeuronSpec>> {
    spec.validate()?;
    let mut neurons = Vec::with_capacity(spec.n_neurons());
    for _ in 0..spec.n_random {
        neurons.push(NeuronSpec::uniform(spec.scale));
    }
    let t = &spec.tuning;
    for mu in spaced_means(spec.n_both, t.mu_lo, t.mu_hi) {
        neurons.push(NeuronSpec::tuned(
            NeuronKind::LocationSensitive,
            mu,
            t.variance,
            spec.scale,
        )?);
    }
    let half = spec.n_context / 2;
    for (kind, count) in [(NeuronKind::TaskOnly, half), (NeuronKind::FrOnly, half)] {
        for mu in spaced_means(count, t.mu_lo, t.mu_hi) {
            neurons.push(NeuronSpec::tuned(kind, mu, t.variance, spec.scale)?);
        }
    }
    Ok(neurons)
}

/// Reflected Gaussian random walk on [0,1]: starts at 0 with positive
/// drift, reflects at 1 and reverses drift, and terminates when it returns
/// to 0 or below. Returns positions and the drift-sign direction labels.
pub fn random_walk(params: &WalkParams, rng: &mut Rng) -> Result<(Vec<f64>, Vec<Direction>)> {
    if params.sigma < 0.0 {
        return Err(Error::Config("walk sigma must be non-negative".into()));
    }
    let normal = Normal::new(0.0, params.sigma)
        .map_err(|e| Error::Config(format!("walk parameters: {e}")))?;
    let mut x = 0.0f64;
    let mut ascending = true;
    let mut positions = vec![0.0];
    let mut directions = vec![Direction::Forward];
    for _ in 0..params.max_steps {
        let drift = if ascending { params.drift } else { -params.drift };
        x += drift + normal.sample(rng);
        if x >= 1.0 {
            x = (2.0 - x).clamp(0.0, 1.0);
            ascending = false;
        }
        if x <= 0.0 {
            if ascending {
                x = (-x).min(1.0);
            } else {
                return Ok((positions, directions));
            }
        }
        positions.push(x);
        directions.push(if ascending {
            Direction::Forward
        } else {
            Direction::Backward
        });
    }
    Err(Error::Config(format!(
        "random walk did not terminate within {} steps",
        params.max_steps
    )))
}

/// Equal-thirds (or n-ths) location bin.
pub fn discretize(y: f64, n_classes: usize) -> u8 {
    (((y * n_classes as f64) as usize).min(n_classes - 1)) as u8
}

/// Ground-truth discretized tuning curve: the rate at each bin center.
pub fn discretized_truth(neuron: &NeuronSpec, context: Context, n_classes: usize) -> Vec<f64> {
    (0..n_classes)
        .map(|j| neuron.rate((j as f64 + 0.5) / n_classes as f64, context))
        .collect()
}

/// Per-neuron ground truth attached to every generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeuronTruth {
    pub kind: NeuronKind,
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
    pub curve_task: Vec<f64>,
    pub curve_fr: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n_classes: usize,
    pub neurons: Vec<NeuronTruth>,
}

fn truth_for(neurons: &[NeuronSpec], n_classes: usize) -> GroundTruth {
    GroundTruth {
        n_classes,
        neurons: neurons
            .iter()
            .map(|n| NeuronTruth {
                kind: n.kind,
                alpha: n.alpha,
                beta: n.beta,
                scale: n.scale,
                curve_task: discretized_truth(n, Context::Task, n_classes),
                curve_fr: discretized_truth(n, Context::FreeRunning, n_classes),
            })
            .collect(),
    }
}

/// Generate a full two-context session: `n_subdatasets` walks per context,
/// directions labeled by the walk's drift sign.
pub fn generate(spec: &SimSpec) -> Result<(SessionDataset, GroundTruth)> {
    let neurons = build_neurons(spec)?;
    let mut times = Vec::new();
    let mut contexts = Vec::new();
    let mut subdatasets = Vec::new();
    let mut locations = Vec::new();
    let mut dirs = Vec::new();
    let mut spikes = Vec::new();
    let mut subdataset_id = 0u32;
    let mut t = 0u64;
    for (ctx_i, context) in Context::ALL.into_iter().enumerate() {
        for s in 0..spec.n_subdatasets {
            let walk_idx = (ctx_i * spec.n_subdatasets + s) as u64;
            let mut walk_rng = derived_rng(spec.seed, Stream::Simulate, walk_idx * 2);
            let mut fire_rng = derived_rng(spec.seed, Stream::Simulate, walk_idx * 2 + 1);
            let (ys, walk_dirs) = random_walk(&spec.walk, &mut walk_rng)?;
            for (y, d) in ys.iter().zip(walk_dirs) {
                times.push(t);
                contexts.push(context);
                subdatasets.push(subdataset_id);
                locations.push(discretize(*y, spec.n_classes));
                dirs.push(d);
                for neuron in &neurons {
                    spikes.push(fire(neuron, *y, context, &mut fire_rng));
                }
                t += 1;
            }
            subdataset_id += 1;
        }
    }
    let ds = SessionDataset::new(
        times,
        contexts,
        subdatasets,
        locations,
        dirs,
        spikes,
        neurons.len(),
        spec.n_classes,
    )?;
    Ok((ds, truth_for(&neurons, spec.n_classes)))
}

/// The tuning-recovery population: 4 location-insensitive neurons and 6
/// location-sensitive ones with evenly spaced curves.
pub fn recovery_neurons(scale: f64, tuning: &TuningParams) -> Result<Vec<NeuronSpec>> {
    let mut neurons: Vec<NeuronSpec> = (0..4).map(|_| NeuronSpec::uniform(scale)).collect();
    for mu in spaced_means(6, tuning.mu_lo, tuning.mu_hi) {
        neurons.push(NeuronSpec::tuned(
            NeuronKind::LocationSensitive,
            mu,
            tuning.variance,
            scale,
        )?);
    }
    Ok(neurons)
}

/// Constant-speed traversal from 0 to 1 in each context, one subdataset per
/// context, all points labeled forward.
pub fn generate_constant_speed(
    neurons: &[NeuronSpec],
    n_points: usize,
    n_classes: usize,
    seed: u64,
) -> Result<(SessionDataset, GroundTruth)> {
    if n_points < 2 || neurons.is_empty() {
        return Err(Error::Config(
            "constant-speed run needs >= 2 points and >= 1 neuron".into(),
        ));
    }
    let mut times = Vec::new();
    let mut contexts = Vec::new();
    let mut subdatasets = Vec::new();
    let mut locations = Vec::new();
    let mut dirs = Vec::new();
    let mut spikes = Vec::new();
    let mut t = 0u64;
    for (ctx_i, context) in Context::ALL.into_iter().enumerate() {
        let mut fire_rng = derived_rng(seed, Stream::Simulate, ctx_i as u64);
        for k in 0..n_points {
            let y = k as f64 / (n_points - 1) as f64;
            times.push(t);
            contexts.push(context);
            subdatasets.push(ctx_i as u32);
            locations.push(discretize(y, n_classes));
            dirs.push(Direction::Forward);
            for neuron in neurons {
                spikes.push(fire(neuron, y, context, &mut fire_rng));
            }
            t += 1;
        }
    }
    let ds = SessionDataset::new(
        times,
        contexts,
        subdatasets,
        locations,
        dirs,
        spikes,
        neurons.len(),
        n_classes,
    )?;
    Ok((ds, truth_for(neurons, n_classes)))
}
