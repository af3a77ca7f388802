use ndarray::{s, Array1, Array2};
use rand::Rng;

use super::buffer::{ReplayBuffer, Transition};
use super::config::TrainConfig;
use super::nets::{concat_rows, safety_features, stack, unit_actions, Architecture, ACTION_DIM};
use super::sac::check_finite;
use crate::error::Result;
use crate::nn::{mean_action, Adam, Mlp};
use crate::sim::Observation;

const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SafetyLosses {
    /// Binary cross-entropy of the risk critic.
    pub critic: f64,
    /// Mean predicted risk of the recovery actions.
    pub recovery: f64,
}

/// Risk critic `Q_risk(s_w, a)` and the recovery policy that minimizes it.
#[derive(Debug, Clone)]
pub struct SafetyModels {
    pub critic: Mlp,
    pub target: Mlp,
    pub recovery: Mlp,
    critic_opt: Adam,
    recovery_opt: Adam,
    gamma_safe: f64,
    tau: f64,
}

impl SafetyModels {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let critic = Architecture::SafetyCritic.build(&cfg.hidden, rng)?;
        let recovery = Architecture::Recovery.build(&cfg.hidden, rng)?;
        Ok(Self::from_nets(critic, recovery, cfg))
    }

    pub fn from_nets(critic: Mlp, recovery: Mlp, cfg: &TrainConfig) -> Self {
        SafetyModels {
            critic_opt: Adam::new(critic.num_params(), cfg.lr),
            recovery_opt: Adam::new(recovery.num_params(), cfg.lr),
            target: critic.clone(),
            critic,
            recovery,
            gamma_safe: cfg.gamma_safe,
            tau: cfg.tau,
        }
    }

    /// Risk of each row of (wrench features, unit action).
    pub fn risk(&self, s_w: &Array2<f64>, a: &Array2<f64>) -> Result<Array1<f64>> {
        let x = concat_rows(s_w.view(), a.view());
        Ok(self.critic.forward(x.view())?.into_output().column(0).to_owned())
    }

    pub fn risk_one(&self, obs: &Observation, unit_action: &[f64; 4]) -> Result<f64> {
        let f = safety_features(&obs.task());
        let mut x = [0.0; 10];
        x[..6].copy_from_slice(&f);
        x[6..].copy_from_slice(unit_action);
        Ok(self.critic.forward_one(&x)?[0])
    }

    /// Deterministic recovery action in unit coordinates.
    pub fn recovery_action(&self, obs: &Observation) -> Result<[f64; 4]> {
        let head = self.recovery.forward_one(&safety_features(&obs.task()))?;
        Ok(std::array::from_fn(|j| head[j].tanh()))
    }

    /// Risk targets `c + (1 − c)(1 − d) γ_safe Q̄_risk(s′, π_rec(s′))`.
    pub fn targets(&self, batch: &[Transition]) -> Result<Array1<f64>> {
        let s_next = stack(batch.iter().map(|t| safety_features(&t.s_next)));
        let a_next = mean_action(self.recovery.forward(s_next.view())?.output().view());
        let x = concat_rows(s_next.view(), a_next.view());
        let q_next = self.target.forward(x.view())?.into_output();
        Ok(batch
            .iter()
            .zip(q_next.column(0))
            .map(|(t, &q)| {
                let c = t.cost();
                let carry = if t.done { 0.0 } else { 1.0 };
                c + (1.0 - c) * carry * self.gamma_safe * q
            })
            .collect())
    }

    pub fn update(&mut self, batch: &[Transition]) -> Result<SafetyLosses> {
        let n = batch.len() as f64;
        let y = self.targets(batch)?;
        let s_w = stack(batch.iter().map(|t| safety_features(&t.s)));
        let a = unit_actions(batch.iter().map(|t| &t.a));

        let x = concat_rows(s_w.view(), a.view());
        let cache = self.critic.forward(x.view())?;
        let q = cache.output().column(0).to_owned();
        let mut bce = 0.0;
        let mut up = Array2::zeros((batch.len(), 1));
        for i in 0..batch.len() {
            let p = q[i].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            bce -= y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln();
            up[[i, 0]] = (p - y[i]) / (p * (1.0 - p)) / n;
        }
        let critic_loss = check_finite(bce / n, "safety critic")?;
        let (g, _) = self.critic.backward(&cache, up.view());
        self.critic_opt.step(self.critic.params_mut(), &g);

        let rec_cache = self.recovery.forward(s_w.view())?;
        let a_rec = mean_action(rec_cache.output().view());
        let xr = concat_rows(s_w.view(), a_rec.view());
        let qc = self.critic.forward(xr.view())?;
        let rec_loss = check_finite(qc.output().mean().unwrap_or(0.0), "recovery")?;
        let (_, dx) = self.critic.backward(&qc, Array2::from_elem((batch.len(), 1), 1.0 / n).view());
        let obs_dim = s_w.ncols();
        let d_a = dx.slice(s![.., obs_dim..obs_dim + ACTION_DIM]);
        let mut head_grad = Array2::zeros((batch.len(), 2 * ACTION_DIM));
        head_grad
            .slice_mut(s![.., ..ACTION_DIM])
            .assign(&(&d_a * &a_rec.mapv(|v| 1.0 - v * v)));
        let (gr, _) = self.recovery.backward(&rec_cache, head_grad.view());
        self.recovery_opt.step(self.recovery.params_mut(), &gr);

        self.target.soft_update(&self.critic, self.tau);
        Ok(SafetyLosses {
            critic: critic_loss,
            recovery: rec_loss,
        })
    }

    /// Offline pretraining on `data` for `steps` gradient steps.
    pub fn pretrain<R: Rng + ?Sized>(
        &mut self,
        data: &ReplayBuffer,
        cfg: &TrainConfig,
        steps: usize,
        rng: &mut R,
    ) -> Result<SafetyLosses> {
        let mut last = SafetyLosses::default();
        for _ in 0..steps {
            let batch = data.sample_safety(cfg.batch_size, cfg.violation_fraction, rng);
            last = self.update(&batch)?;
        }
        Ok(last)
    }

    /// Risk of every transition's own action.
    pub fn score(&self, ts: &[Transition]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ts.len());
        for chunk in ts.chunks(4096) {
            let s_w = stack(chunk.iter().map(|t| safety_features(&t.s)));
            let a = unit_actions(chunk.iter().map(|t| &t.a));
            out.extend(self.risk(&s_w, &a)?);
        }
        Ok(out)
    }
}

/// Area under the ROC curve of `scores` for binary `labels`, with ties
/// counted half. `None` if either class is missing.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}
