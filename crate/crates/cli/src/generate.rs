//! Seeded synthetic session streams.

use aas_core::SessionSnapshot;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::session::{SessionFile, SessionHeader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Every channel moves a fixed fraction toward its own target each step.
    Appetition,
    /// Two views driven by one latent walk through per-view maps.
    LatentDriver,
    /// Many channels with near-perfect recall and small jitter.
    DiffuseDizziness,
    /// Geometric decay of every recall score.
    Degradation,
    /// Random walks with planted groups of identical channels.
    Clones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub scenario: Scenario,
    pub channels: usize,
    pub steps: usize,
    pub seed: u64,
    pub epsilon: f64,
    /// Latent driver only: use the same map for paired soul and body channels.
    pub shared_maps: bool,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Appetition,
            channels: 6,
            steps: 24,
            seed: 0,
            epsilon: aas_core::KernelConfig::DEFAULT_EPSILON,
            shared_maps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub file: SessionFile,
    /// Groups of identical channels, ascending; empty unless the scenario plants them.
    pub planted: Vec<Vec<usize>>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    let m = spec.channels;
    let min = match spec.scenario {
        Scenario::LatentDriver => 2,
        Scenario::Clones => 3,
        _ => 1,
    };
    if m < min {
        return Err(CliError::validation(format!("{:?} needs at least {min} channels", spec.scenario)));
    }
    if spec.steps == 0 {
        return Err(CliError::validation("steps must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut weights = normalize(&raw);
    let mut ids: Vec<String> = (0..m).map(|i| format!("c{i}")).collect();
    let mut planted = Vec::new();
    let mut meta = vec![String::new(); m];

    let rows: Vec<(Vec<f64>, Vec<f64>)> = match spec.scenario {
        Scenario::Appetition => {
            let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..0.6)).collect();
            let g: Vec<f64> = (0..m).map(|_| rng.gen_range(0.7..1.0)).collect();
            let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.02..0.15)).collect();
            let r: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.3)).collect();
            (0..spec.steps)
                .map(|_| {
                    let row = (x.clone(), r.clone());
                    for i in 0..m {
                        x[i] = ((1.0 - eta[i]) * x[i] + eta[i] * g[i]).clamp(0.0, 1.0);
                    }
                    row
                })
                .collect()
        }
        Scenario::LatentDriver => {
            let half = m / 2;
            let soul_maps: Vec<f64> = (0..half).map(|_| rng.gen_range(0.5..2.0)).collect();
            let body_maps: Vec<f64> = (half..m)
                .map(|j| {
                    let own = rng.gen_range(0.5..2.0);
                    if spec.shared_maps {
                        soul_maps[(j - half) % half]
                    } else {
                        own
                    }
                })
                .collect();
            let exps: Vec<f64> = soul_maps.iter().chain(&body_maps).copied().collect();
            ids = (0..m).map(|i| if i < half { format!("s{i}") } else { format!("b{}", i - half) }).collect();
            meta = (0..m).map(|i| if i < half { "soul".into() } else { "body".into() }).collect();
            let mut z: f64 = rng.gen_range(0.2..0.8);
            (0..spec.steps)
                .map(|_| {
                    let row = (exps.iter().map(|a| z.powf(*a)).collect(), vec![0.0; m]);
                    z = (z + rng.gen_range(-0.05..0.05)).clamp(0.1, 1.0);
                    row
                })
                .collect()
        }
        Scenario::DiffuseDizziness => {
            let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.93..0.99)).collect();
            let r: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.2)).collect();
            (0..spec.steps)
                .map(|_| {
                    let row = (x.clone(), r.clone());
                    for v in &mut x {
                        *v = (*v + rng.gen_range(-0.005..0.005)).clamp(0.9, 1.0);
                    }
                    row
                })
                .collect()
        }
        Scenario::Degradation => {
            let mut x: Vec<f64> = (0..m).map(|_| rng.gen_range(0.4..0.9)).collect();
            let decay: Vec<f64> = (0..m).map(|_| rng.gen_range(0.85..0.95)).collect();
            let r: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.3)).collect();
            (0..spec.steps)
                .map(|_| {
                    let row = (x.clone(), r.clone());
                    for (v, d) in x.iter_mut().zip(&decay) {
                        *v *= d;
                    }
                    row
                })
                .collect()
        }
        Scenario::Clones => {
            // Entities own a trajectory; some entities are copied onto several channels.
            let mut sizes = Vec::new();
            let mut left = m;
            for _ in 0..(m / 4).max(1) {
                let size = rng.gen_range(2..=3usize).min(left);
                if size < 2 {
                    break;
                }
                sizes.push(size);
                left -= size;
            }
            sizes.extend(std::iter::repeat_n(1, left));
            let mut slots: Vec<usize> = (0..m).collect();
            slots.shuffle(&mut rng);
            let mut owner = vec![0usize; m];
            let mut next = 0;
            for (e, &size) in sizes.iter().enumerate() {
                let mut members: Vec<usize> = slots[next..next + size].to_vec();
                members.sort_unstable();
                for &c in &members {
                    owner[c] = e;
                }
                if size > 1 {
                    planted.push(members);
                }
                next += size;
            }
            planted.sort();
            let n = sizes.len();
            let entity_w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            weights = normalize(&owner.iter().map(|&e| entity_w[e]).collect::<Vec<_>>());
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.9)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.3)).collect();
            (0..spec.steps)
                .map(|_| {
                    let row = (owner.iter().map(|&e| x[e]).collect(), owner.iter().map(|&e| r[e]).collect());
                    for v in &mut x {
                        *v = (*v + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0);
                    }
                    row
                })
                .collect()
        }
    };

    let snapshots = rows
        .into_iter()
        .enumerate()
        .map(|(t, (x, r))| {
            let channels = x
                .iter()
                .zip(&r)
                .map(|(&x, &r)| aas_core::kernel::ChannelState::new(x, r))
                .collect::<aas_core::Result<Vec<_>>>()?;
            SessionSnapshot::new(t as u64, channels, weights.clone(), meta.clone())
        })
        .collect::<aas_core::Result<Vec<_>>>()?;
    Ok(Generated { file: SessionFile { header: SessionHeader::new(ids, weights, spec.epsilon), snapshots }, planted })
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}
