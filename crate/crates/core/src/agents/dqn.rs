//! Deep Q-learning with a target network and epsilon-greedy exploration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp, Optimizer, OptimizerKind};
use super::replay::{ReplayBuffer, Transition};
use super::AgentError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnHyperparams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub target_update_every: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
    pub grad_clip: f64,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
}

impl Default for DqnHyperparams {
    fn default() -> DqnHyperparams {
        DqnHyperparams {
            gamma: 0.99,
            learning_rate: 1e-3,
            batch_size: 64,
            buffer_capacity: 10_000,
            warmup: 500,
            target_update_every: 200,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 5000,
            grad_clip: 10.0,
            hidden: vec![64, 64],
            optimizer: OptimizerKind::Sgd,
        }
    }
}

/// Linear epsilon schedule from start to end over `epsilon_decay_steps`.
pub fn epsilon_at(hp: &DqnHyperparams, env_steps: u64) -> f64 {
    if env_steps >= hp.epsilon_decay_steps {
        return hp.epsilon_end;
    }
    let frac = env_steps as f64 / hp.epsilon_decay_steps as f64;
    hp.epsilon_start + (hp.epsilon_end - hp.epsilon_start) * frac
}

/// With probability `epsilon` pick uniformly, otherwise the greedy action.
/// Ties break toward the lowest index so evaluation is deterministic.
pub fn epsilon_greedy(q_values: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    if rng.gen_range(0.0..1.0) < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        greedy(q_values)
    }
}

pub fn greedy(q_values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in q_values.iter().enumerate().skip(1) {
        if q > q_values[best] {
            best = i;
        }
    }
    best
}

/// Mean squared TD error over a sampled batch and its gradient with respect
/// to the online network.
pub fn dqn_loss_and_grad(
    online: &Mlp,
    target: &Mlp,
    batch: &[&Transition],
    gamma: f64,
) -> Result<(f64, Gradients), AgentError> {
    let mut grads = Gradients::zeros_like(online);
    let mut loss = 0.0;
    let n = batch.len() as f64;
    for t in batch {
        let cache = online.forward_cached(&t.obs)?;
        let q = cache.activations.last().unwrap();
        let boot = if t.terminal {
            0.0
        } else {
            let next_q = target.forward(&t.next_obs)?;
            gamma * next_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        };
        let td = q[t.action] - (t.reward + boot);
        loss += td * td / n;
        let mut dout = vec![0.0; q.len()];
        dout[t.action] = 2.0 * td / n;
        grads.add(&online.backward(&cache, &dout));
    }
    Ok((loss, grads))
}

/// Online network, target copy, replay buffer and schedules in one place.
pub struct DqnAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub buffer: ReplayBuffer,
    pub hp: DqnHyperparams,
    optimizer: Optimizer,
    pub env_steps: u64,
    pub updates: u64,
}

impl DqnAgent {
    pub fn new(obs_dim: usize, n_actions: usize, hp: DqnHyperparams, rng: &mut ChaCha8Rng) -> DqnAgent {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&hp.hidden);
        sizes.push(n_actions);
        let online = Mlp::new(sizes, rng);
        DqnAgent {
            target: online.clone(),
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            optimizer: Optimizer::new(hp.optimizer),
            online,
            hp,
            env_steps: 0,
            updates: 0,
        }
    }

    /// Resume from restored parameters; replay and schedules start fresh.
    pub fn from_policy(online: Mlp, hp: DqnHyperparams) -> DqnAgent {
        DqnAgent {
            target: online.clone(),
            buffer: ReplayBuffer::new(hp.buffer_capacity),
            optimizer: Optimizer::new(hp.optimizer),
            online,
            hp,
            env_steps: 0,
            updates: 0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(&self.hp, self.env_steps)
    }

    /// Behavior action for `obs`, advancing the exploration schedule.
    pub fn act(&mut self, obs: &[f64], rng: &mut impl Rng) -> Result<usize, AgentError> {
        let q = self.online.forward(obs)?;
        let a = epsilon_greedy(&q, self.epsilon(), rng);
        self.env_steps += 1;
        Ok(a)
    }

    /// Greedy action, schedule untouched. Used for evaluation.
    pub fn act_greedy(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(greedy(&self.online.forward(obs)?))
    }

    pub fn record(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One gradient step on a sampled batch. Errs with `UNDERFULL_BUFFER`
    /// until warmup transitions have accumulated.
    pub fn update(&mut self, rng: &mut impl Rng) -> Result<f64, AgentError> {
        if self.buffer.len() < self.hp.warmup.max(self.hp.batch_size) {
            return Err(AgentError::UnderfullBuffer {
                len: self.buffer.len(),
                warmup: self.hp.warmup.max(self.hp.batch_size),
            });
        }
        let idx = self.buffer.sample_indices(self.hp.batch_size, rng);
        let batch: Vec<&Transition> = idx.iter().map(|&i| self.buffer.get(i)).collect();
        let (loss, mut grads) = dqn_loss_and_grad(&self.online, &self.target, &batch, self.hp.gamma)?;
        grads.clip(self.hp.grad_clip);
        self.optimizer.step(&mut self.online, &grads, self.hp.learning_rate);
        self.updates += 1;
        if self.updates % self.hp.target_update_every == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny_net(rng: &mut ChaCha8Rng) -> Mlp {
        Mlp::new(vec![3, 5, 4], rng)
    }

    fn random_transition(rng: &mut ChaCha8Rng, terminal: bool) -> Transition {
        Transition {
            obs: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: rng.gen_range(0..4),
            reward: rng.gen_range(-1.0..1.0),
            next_obs: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminal,
        }
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        let hp = DqnHyperparams::default();
        assert_eq!(epsilon_at(&hp, 0), 1.0);
        assert!((epsilon_at(&hp, 2500) - 0.525).abs() < 1e-12);
        assert_eq!(epsilon_at(&hp, 5000), 0.05);
        assert_eq!(epsilon_at(&hp, 100_000), 0.05);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        assert_eq!(greedy(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(greedy(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn epsilon_greedy_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = [0.0, 5.0, 1.0];
        let mut picked_best = 0;
        let trials = 10_000;
        for _ in 0..trials {
            if epsilon_greedy(&q, 0.3, &mut rng) == 1 {
                picked_best += 1;
            }
        }
        // Expect 0.7 + 0.3/3 = 0.8 of draws on the greedy arm.
        let frac = picked_best as f64 / trials as f64;
        assert!((frac - 0.8).abs() < 0.02, "greedy fraction {frac}");
    }

    #[test]
    fn underfull_buffer_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = DqnAgent::new(3, 4, DqnHyperparams::default(), &mut rng);
        agent.record(random_transition(&mut rng, false));
        assert!(matches!(
            agent.update(&mut rng),
            Err(AgentError::UnderfullBuffer { len: 1, .. })
        ));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let target = tiny_net(&mut rng);
        // Resample until no hidden preactivation is near the rectifier kink
        // for any batch input.
        let batch: Vec<Transition> = (0..6)
            .map(|i| random_transition(&mut rng, i % 3 == 0))
            .collect();
        let online = loop {
            let candidate = tiny_net(&mut rng);
            let near_kink = batch.iter().any(|t| {
                let cache = candidate.forward_cached(&t.obs).unwrap();
                cache.preactivations[0].iter().any(|z| z.abs() < 1e-3)
            });
            if !near_kink {
                break candidate;
            }
        };
        let refs: Vec<&Transition> = batch.iter().collect();
        let (_, grads) = dqn_loss_and_grad(&online, &target, &refs, 0.99).unwrap();
        let loss_of = |m: &Mlp| dqn_loss_and_grad(m, &target, &refs, 0.99).unwrap().0;
        let h = 1e-5;
        for layer in 0..online.weights.len() {
            for i in (0..online.weights[layer].len()).step_by(3) {
                let mut plus = online.clone();
                plus.weights[layer][i] += h;
                let mut minus = online.clone();
                minus.weights[layer][i] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let an = grads.weights[layer][i];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < 1e-4,
                    "layer {layer} w[{i}]: fd {fd} vs backprop {an}"
                );
            }
        }
    }

    #[test]
    fn terminal_transition_ignores_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let online = tiny_net(&mut rng);
        let target_a = tiny_net(&mut rng);
        let target_b = tiny_net(&mut rng);
        let t = random_transition(&mut rng, true);
        let refs = [&t];
        let (la, _) = dqn_loss_and_grad(&online, &target_a, &refs, 0.99).unwrap();
        let (lb, _) = dqn_loss_and_grad(&online, &target_b, &refs, 0.99).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn update_reduces_loss_on_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hp = DqnHyperparams {
            warmup: 64,
            batch_size: 64,
            ..DqnHyperparams::default()
        };
        let mut agent = DqnAgent::new(3, 4, hp, &mut rng);
        for _ in 0..64 {
            agent.record(random_transition(&mut rng, true));
        }
        let first = agent.update(&mut rng).unwrap();
        for _ in 0..200 {
            agent.update(&mut rng).unwrap();
        }
        let last = agent.update(&mut rng).unwrap();
        assert!(last < first, "loss did not drop: {first} -> {last}");
    }

    #[test]
    fn target_refresh_cadence() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let hp = DqnHyperparams {
            warmup: 64,
            batch_size: 64,
            target_update_every: 5,
            ..DqnHyperparams::default()
        };
        let mut agent = DqnAgent::new(3, 4, hp, &mut rng);
        for _ in 0..64 {
            agent.record(random_transition(&mut rng, false));
        }
        let probe = vec![0.3, -0.2, 0.9];
        let before = agent.target.forward(&probe).unwrap();
        for _ in 0..4 {
            agent.update(&mut rng).unwrap();
        }
        assert_eq!(agent.target.forward(&probe).unwrap(), before);
        agent.update(&mut rng).unwrap();
        assert_eq!(
            agent.target.forward(&probe).unwrap(),
            agent.online.forward(&probe).unwrap()
        );
    }
}
