//! Monte Carlo policy gradient with a batch-mean return baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp, Optimizer, OptimizerKind};
use super::AgentError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReinforceHyperparams {
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    pub grad_clip: f64,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
}

impl Default for ReinforceHyperparams {
    fn default() -> ReinforceHyperparams {
        ReinforceHyperparams {
            gamma: 0.99,
            learning_rate: 1e-3,
            episodes_per_update: 8,
            grad_clip: 10.0,
            hidden: vec![64, 64],
            optimizer: OptimizerKind::Sgd,
        }
    }
}

/// One complete rollout.
#[derive(Debug, Clone, Default)]
pub struct Episode {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn push(&mut self, obs: Vec<f64>, action: usize, reward: f64) {
        self.observations.push(obs);
        self.actions.push(action);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Discounted returns G_t = r_t + gamma * G_{t+1}, computed right to left.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (slot, r) in out.iter_mut().zip(rewards.iter()).rev() {
        acc = r + gamma * acc;
        *slot = acc;
    }
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Sample an action index from the softmax over `logits`.
pub fn sample_policy(logits: &[f64], rng: &mut impl Rng) -> usize {
    let probs = softmax(logits);
    let mut u = rng.gen_range(0.0..1.0);
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Surrogate loss -1/E * sum_e sum_t (G_t - b) log pi(a_t | s_t) and its
/// gradient, where b is the mean return of the batch's first steps.
pub fn reinforce_loss_and_grad(
    policy: &Mlp,
    episodes: &[Episode],
    gamma: f64,
) -> Result<(f64, Gradients), AgentError> {
    if episodes.is_empty() || episodes.iter().all(|e| e.is_empty()) {
        return Err(AgentError::EmptyBatch);
    }
    let baseline = episodes
        .iter()
        .filter(|e| !e.is_empty())
        .map(|e| compute_returns(&e.rewards, gamma)[0])
        .sum::<f64>()
        / episodes.iter().filter(|e| !e.is_empty()).count() as f64;
    let scale = 1.0 / episodes.len() as f64;
    let mut grads = Gradients::zeros_like(policy);
    let mut loss = 0.0;
    for episode in episodes {
        let returns = compute_returns(&episode.rewards, gamma);
        for t in 0..episode.len() {
            let cache = policy.forward_cached(&episode.observations[t])?;
            let logits = cache.activations.last().unwrap();
            let probs = softmax(logits);
            let advantage = returns[t] - baseline;
            let a = episode.actions[t];
            loss -= scale * advantage * probs[a].ln();
            // d(-adv * log softmax_a)/dlogits = adv * (softmax - onehot_a)
            let mut dout: Vec<f64> = probs.iter().map(|p| scale * advantage * p).collect();
            dout[a] -= scale * advantage;
            grads.add(&policy.backward(&cache, &dout));
        }
    }
    Ok((loss, grads))
}

/// Policy network plus its optimizer and hyperparameters.
pub struct ReinforceAgent {
    pub policy: Mlp,
    pub hp: ReinforceHyperparams,
    optimizer: Optimizer,
}

impl ReinforceAgent {
    pub fn new(
        obs_dim: usize,
        n_actions: usize,
        hp: ReinforceHyperparams,
        rng: &mut ChaCha8Rng,
    ) -> ReinforceAgent {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&hp.hidden);
        sizes.push(n_actions);
        ReinforceAgent {
            policy: Mlp::new(sizes, rng),
            optimizer: Optimizer::new(hp.optimizer),
            hp,
        }
    }

    pub fn from_policy(policy: Mlp, hp: ReinforceHyperparams) -> ReinforceAgent {
        ReinforceAgent {
            policy,
            optimizer: Optimizer::new(hp.optimizer),
            hp,
        }
    }

    /// Stochastic action for rollouts.
    pub fn act(&self, obs: &[f64], rng: &mut impl Rng) -> Result<usize, AgentError> {
        Ok(sample_policy(&self.policy.forward(obs)?, rng))
    }

    /// Mode of the policy, used for evaluation.
    pub fn act_greedy(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(super::dqn::greedy(&self.policy.forward(obs)?))
    }

    /// One ascent step over a batch of episodes. Returns the surrogate loss.
    pub fn update(&mut self, episodes: &[Episode]) -> Result<f64, AgentError> {
        let (loss, mut grads) = reinforce_loss_and_grad(&self.policy, episodes, self.hp.gamma)?;
        grads.clip(self.hp.grad_clip);
        self.optimizer.step(&mut self.policy, &grads, self.hp.learning_rate);
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// O(T^2) brute-force oracle for discounted returns.
    fn returns_oracle(rewards: &[f64], gamma: f64) -> Vec<f64> {
        (0..rewards.len())
            .map(|t| {
                rewards[t..]
                    .iter()
                    .enumerate()
                    .map(|(k, r)| gamma.powi(k as i32) * r)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn returns_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let len = rng.gen_range(1..40);
            let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let gamma = rng.gen_range(0.0..1.0);
            let fast = compute_returns(&rewards, gamma);
            let slow = returns_oracle(&rewards, gamma);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn returns_edge_cases() {
        assert!(compute_returns(&[], 0.9).is_empty());
        assert_eq!(compute_returns(&[3.0], 0.9), vec![3.0]);
        // gamma = 0 reduces to the rewards themselves.
        assert_eq!(compute_returns(&[1.0, 2.0, 3.0], 0.0), vec![1.0, 2.0, 3.0]);
        // gamma = 1 is a suffix sum.
        assert_eq!(compute_returns(&[1.0, 2.0, 3.0], 1.0), vec![6.0, 5.0, 3.0]);
    }

    #[test]
    fn softmax_is_shift_invariant_distribution() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        let q = softmax(&[101.0, 102.0, 103.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(p[2] > p[1] && p[1] > p[0]);
    }

    #[test]
    fn sample_policy_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let logits = [0.0, (2.0f64).ln(), 0.0]; // probs 0.25, 0.5, 0.25
        let mut counts = [0u32; 3];
        for _ in 0..10_000 {
            counts[sample_policy(&logits, &mut rng)] += 1;
        }
        assert!((counts[1] as f64 / 10_000.0 - 0.5).abs() < 0.02);
        assert!((counts[0] as f64 / 10_000.0 - 0.25).abs() < 0.02);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = Mlp::new(vec![2, 4, 3], &mut rng);
        assert!(matches!(
            reinforce_loss_and_grad(&policy, &[], 0.99),
            Err(AgentError::EmptyBatch)
        ));
        assert!(matches!(
            reinforce_loss_and_grad(&policy, &[Episode::default()], 0.99),
            Err(AgentError::EmptyBatch)
        ));
    }

    fn random_episode(rng: &mut ChaCha8Rng, len: usize) -> Episode {
        let mut e = Episode::default();
        for _ in 0..len {
            e.push(
                (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                rng.gen_range(0..3),
                rng.gen_range(-1.0..1.0),
            );
        }
        e
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let episodes: Vec<Episode> = (0..3).map(|_| random_episode(&mut rng, 5)).collect();
        let policy = loop {
            let candidate = Mlp::new(vec![2, 5, 3], &mut rng);
            let near_kink = episodes.iter().flat_map(|e| e.observations.iter()).any(|o| {
                let cache = candidate.forward_cached(o).unwrap();
                cache.preactivations[0].iter().any(|z| z.abs() < 1e-3)
            });
            if !near_kink {
                break candidate;
            }
        };
        let (_, grads) = reinforce_loss_and_grad(&policy, &episodes, 0.95).unwrap();
        let loss_of = |m: &Mlp| reinforce_loss_and_grad(m, &episodes, 0.95).unwrap().0;
        let h = 1e-5;
        for layer in 0..policy.weights.len() {
            for i in (0..policy.weights[layer].len()).step_by(2) {
                let mut plus = policy.clone();
                plus.weights[layer][i] += h;
                let mut minus = policy.clone();
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
    fn baseline_centers_single_episode_batch() {
        // With one episode the baseline equals its own first return, so the
        // first step's advantage is exactly zero.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = Mlp::new(vec![2, 4, 3], &mut rng);
        let mut e = Episode::default();
        e.push(vec![0.1, 0.2], 1, 1.0);
        let (loss, grads) = reinforce_loss_and_grad(&policy, &[e], 0.99).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter_flat().all(|g| g == 0.0));
    }

    #[test]
    fn update_shifts_policy_toward_rewarded_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let hp = ReinforceHyperparams {
            learning_rate: 0.05,
            hidden: vec![8],
            ..ReinforceHyperparams::default()
        };
        let mut agent = ReinforceAgent::new(2, 3, hp, &mut rng);
        let obs = vec![0.4, -0.6];
        // Two-episode batches: action 2 pays, action 0 costs.
        for _ in 0..200 {
            let mut good = Episode::default();
            good.push(obs.clone(), 2, 1.0);
            let mut bad = Episode::default();
            bad.push(obs.clone(), 0, -1.0);
            agent.update(&[good, bad]).unwrap();
        }
        let probs = softmax(&agent.policy.forward(&obs).unwrap());
        assert!(probs[2] > 0.8, "probs {probs:?}");
    }
}
