use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::buffer::Transition;
use super::config::TrainConfig;
use super::nets::{concat_rows, stack, task_features, unit_actions, Architecture, ACTION_DIM};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp, SquashedSample};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
    /// Mean `−log π` of the sampled batch actions.
    pub entropy: f64,
}

/// Soft actor-critic with twin critics, target critics and a learned temperature.
#[derive(Debug, Clone)]
pub struct Sac {
    pub actor: Mlp,
    pub critic1: Mlp,
    pub critic2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub log_alpha: f64,
    actor_opt: Adam,
    critic1_opt: Adam,
    critic2_opt: Adam,
    alpha_opt: Adam,
    gamma: f64,
    tau: f64,
    entropy_target: f64,
    reward_scale: f64,
}

/// Column-stacked network inputs of a batch.
pub(crate) struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array1<f64>,
    pub s_next: Array2<f64>,
    pub not_done: Array1<f64>,
}

impl Batch {
    pub fn task(batch: &[Transition]) -> Self {
        Batch {
            s: stack(batch.iter().map(|t| task_features(&t.s))),
            a: unit_actions(batch.iter().map(|t| &t.a)),
            r: batch.iter().map(|t| t.r).collect(),
            s_next: stack(batch.iter().map(|t| task_features(&t.s_next))),
            not_done: batch.iter().map(|t| if t.done { 0.0 } else { 1.0 }).collect(),
        }
    }
}

fn column(y: &Array2<f64>) -> Array1<f64> {
    y.column(0).to_owned()
}

pub(crate) fn check_finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss(what))
    }
}

impl Sac {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let actor = Architecture::Actor.build(&cfg.hidden, rng)?;
        let critic1 = Architecture::Critic.build(&cfg.hidden, rng)?;
        let critic2 = Architecture::Critic.build(&cfg.hidden, rng)?;
        Ok(Self::from_nets(actor, critic1, critic2, cfg.init_alpha.ln(), cfg))
    }

    pub fn from_nets(actor: Mlp, critic1: Mlp, critic2: Mlp, log_alpha: f64, cfg: &TrainConfig) -> Self {
        Sac {
            actor_opt: Adam::new(actor.num_params(), cfg.lr),
            critic1_opt: Adam::new(critic1.num_params(), cfg.lr),
            critic2_opt: Adam::new(critic2.num_params(), cfg.lr),
            alpha_opt: Adam::new(1, cfg.lr),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha,
            gamma: cfg.gamma,
            tau: cfg.tau,
            entropy_target: cfg.entropy_target,
            reward_scale: cfg.reward_scale,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// TD targets `r + γ (1 − d) (min Q̄(s′, a′) − α log π(a′|s′))`.
    pub(crate) fn critic_targets<R: Rng + ?Sized>(&self, b: &Batch, rng: &mut R) -> Result<Array1<f64>> {
        let head = self.actor.forward(b.s_next.view())?.into_output();
        let next = SquashedSample::draw(head.view(), rng);
        let x = concat_rows(b.s_next.view(), next.action.view());
        let q1 = column(self.target1.forward(x.view())?.output());
        let q2 = column(self.target2.forward(x.view())?.output());
        let alpha = self.alpha();
        let soft = ndarray::Zip::from(&q1).and(&q2).and(&next.log_prob).map_collect(|&a, &b, &lp| a.min(b) - alpha * lp);
        Ok(&b.r * self.reward_scale + &(&b.not_done * &soft * self.gamma))
    }

    /// Half mean squared TD error and its parameter gradient for one critic.
    pub fn critic_loss_and_grad(critic: &Mlp, s: &Array2<f64>, a: &Array2<f64>, y: &Array1<f64>) -> Result<(f64, Vec<f64>)> {
        let x = concat_rows(s.view(), a.view());
        let cache = critic.forward(x.view())?;
        let q = column(cache.output());
        let n = q.len() as f64;
        let diff = &q - y;
        let loss = 0.5 * diff.mapv(|d| d * d).sum() / n;
        let upstream = (diff / n).insert_axis(Axis(1));
        let (g, _) = critic.backward(&cache, upstream.view());
        Ok((loss, g))
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[Transition], rng: &mut R) -> Result<SacLosses> {
        let b = Batch::task(batch);
        let n = batch.len() as f64;

        let y = self.critic_targets(&b, rng)?;
        let (l1, g1) = Self::critic_loss_and_grad(&self.critic1, &b.s, &b.a, &y)?;
        let (l2, g2) = Self::critic_loss_and_grad(&self.critic2, &b.s, &b.a, &y)?;
        check_finite(l1 + l2, "critic")?;
        self.critic1_opt.step(self.critic1.params_mut(), &g1);
        self.critic2_opt.step(self.critic2.params_mut(), &g2);

        // actor: minimize α log π − min Q over reparameterized samples
        let actor_cache = self.actor.forward(b.s.view())?;
        let sample = SquashedSample::draw(actor_cache.output().view(), rng);
        let x = concat_rows(b.s.view(), sample.action.view());
        let c1 = self.critic1.forward(x.view())?;
        let c2 = self.critic2.forward(x.view())?;
        let (q1, q2) = (column(c1.output()), column(c2.output()));
        let alpha = self.alpha();
        let mut up1 = Array2::zeros((batch.len(), 1));
        let mut up2 = Array2::zeros((batch.len(), 1));
        let mut actor_loss = 0.0;
        for i in 0..batch.len() {
            let lp = sample.log_prob[i];
            if q1[i] <= q2[i] {
                up1[[i, 0]] = -1.0 / n;
                actor_loss += alpha * lp - q1[i];
            } else {
                up2[[i, 0]] = -1.0 / n;
                actor_loss += alpha * lp - q2[i];
            }
        }
        actor_loss /= n;
        check_finite(actor_loss, "actor")?;
        let (_, dx1) = self.critic1.backward(&c1, up1.view());
        let (_, dx2) = self.critic2.backward(&c2, up2.view());
        let obs_dim = b.s.ncols();
        let d_action = &dx1.slice(s![.., obs_dim..obs_dim + ACTION_DIM]) + &dx2.slice(s![.., obs_dim..obs_dim + ACTION_DIM]);
        let d_logp = Array1::from_elem(batch.len(), alpha / n);
        let head_grad = sample.backward(d_action.view(), d_logp.view());
        let (ga, _) = self.actor.backward(&actor_cache, head_grad.view());
        self.actor_opt.step(self.actor.params_mut(), &ga);

        // temperature: J(α) = −log α · (log π + H̄)
        let mean_lp = sample.log_prob.mean().unwrap_or(0.0);
        let alpha_loss = -self.log_alpha * (mean_lp + self.entropy_target);
        let mut la = [self.log_alpha];
        self.alpha_opt.step(&mut la, &[-(mean_lp + self.entropy_target)]);
        self.log_alpha = la[0].clamp(-20.0, 5.0);

        self.target1.soft_update(&self.critic1, self.tau);
        self.target2.soft_update(&self.critic2, self.tau);

        Ok(SacLosses {
            critic: l1 + l2,
            actor: actor_loss,
            alpha: alpha_loss,
            entropy: -mean_lp,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::check::relative_error;
    use crate::sim::{RLAction, Violations};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![16, 16],
            lr: 1e-3,
            ..TrainConfig::default()
        }
    }

    fn terminal(r: f64) -> Transition {
        Transition {
            s: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.05, 0.0],
            a: RLAction::new(0.01, 0.0, 500.0, 500.0),
            r,
            s_next: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.11, 0.05, 0.0],
            done: true,
            mask: Violations::default(),
        }
    }

    #[test]
    fn terminal_bootstrap_is_reward_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut sac = Sac::new(&cfg(), &mut rng).unwrap();
        let batch = vec![terminal(0.0); 8];
        let y = sac.critic_targets(&Batch::task(&batch), &mut rng).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let b = Batch::task(&batch);
        for _ in 0..1500 {
            sac.update(&batch, &mut rng).unwrap();
        }
        let x = concat_rows(b.s.view(), b.a.view());
        let q = sac.critic1.forward(x.view()).unwrap().into_output();
        assert!(q[[0, 0]].abs() < 1e-2, "{}", q[[0, 0]]);
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sac = Sac::new(&cfg(), &mut rng).unwrap();
        let batch: Vec<Transition> = (0..6)
            .map(|i| Transition {
                s: [i as f64, -2.0, 0.0, 0.0, 0.0, 0.0, 0.05 * i as f64, 0.04, 0.0],
                r: -10.0 * i as f64,
                done: i % 2 == 0,
                ..terminal(0.0)
            })
            .collect();
        let b = Batch::task(&batch);
        let y = sac.critic_targets(&b, &mut rng).unwrap();
        let (_, g) = Sac::critic_loss_and_grad(&sac.critic1, &b.s, &b.a, &y).unwrap();
        let mut probe = sac.critic1.clone();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..probe.num_params() {
            let p0 = probe.params()[i];
            probe.params_mut()[i] = p0 + h;
            let lp = Sac::critic_loss_and_grad(&probe, &b.s, &b.a, &y).unwrap().0;
            probe.params_mut()[i] = p0 - h;
            let lm = Sac::critic_loss_and_grad(&probe, &b.s, &b.a, &y).unwrap().0;
            probe.params_mut()[i] = p0;
            worst = worst.max(relative_error(g[i], (lp - lm) / (2.0 * h), 1e-6));
        }
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn temperature_rises_when_entropy_is_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut sac = Sac::new(&cfg(), &mut rng).unwrap();
        // a very narrow policy: log-std pinned low through the output bias
        let n = sac.actor.num_params();
        for j in 0..ACTION_DIM {
            sac.actor.params_mut()[n - ACTION_DIM + j] = -8.0;
        }
        let before = sac.log_alpha;
        let batch = vec![terminal(-1.0); 16];
        let l = sac.update(&batch, &mut rng).unwrap();
        assert!(l.entropy < -4.0, "{l:?}");
        assert!(sac.log_alpha > before);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut sac = Sac::new(&cfg(), &mut rng).unwrap();
            let batch: Vec<Transition> = (0..8).map(|i| Transition { r: i as f64, done: false, ..terminal(0.0) }).collect();
            for _ in 0..5 {
                sac.update(&batch, &mut rng).unwrap();
            }
            sac.actor.params().to_vec()
        };
        assert_eq!(run(), run());
    }
}
