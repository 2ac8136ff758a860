//! Parameter update rules, learning-rate schedules, and the noised/trimmed
//! training step.
//!
//! The step order is fixed: noise the labels, compute per-example losses
//! under the noised labels, trim by loss rank, then backpropagate the mean
//! gradient of the kept examples and apply the optimizer rule. With
//! `rho = 0` and `eps = 0` the step reduces bit-for-bit to plain mini-batch
//! SGD on the full batch.

use crate::array::RealArray;
use crate::data::MiniBatch;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::softmax_cross_entropy;
use crate::regularize::{effective_trim_ratio, inject_label_noise, trim_batch, TrimNoiseConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[serde(rename = "rmsprop")]
    RmsProp,
    Adam,
}

/// Optimizer buffers and hyperparameters, shaped to one model's flattened
/// parameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Heavy-ball coefficient for SGD.
    pub momentum: f64,
    /// Squared-gradient decay for RMSprop.
    pub rms_decay: f64,
    /// Adam first/second moment factors.
    pub betas: (f64, f64),
    pub epsilon: f64,
    /// L2 coefficient added to the gradient as `lambda * w`; 0 disables it.
    pub weight_decay: f64,
    buf1: Vec<f64>,
    buf2: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, param_count: usize, momentum: f64, weight_decay: f64) -> Self {
        OptimizerState {
            kind,
            momentum,
            rms_decay: 0.95,
            betas: (0.9, 0.999),
            epsilon: 1e-8,
            weight_decay,
            buf1: vec![0.0; param_count],
            buf2: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check(&self, params: &[f64], grads: &[f64], op: &'static str) -> Result<()> {
        if params.len() != self.buf1.len() || grads.len() != params.len() {
            return Err(Error::Dimension {
                op,
                lhs: format!("{} params / {} grads", params.len(), grads.len()),
                rhs: format!("state sized for {}", self.buf1.len()),
            });
        }
        Ok(())
    }

    /// Applies the state's update rule in place.
    pub fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, grads, self, lr),
            OptimizerKind::RmsProp => rmsprop_step(params, grads, self, lr),
            OptimizerKind::Adam => adam_step(params, grads, self, lr),
        }
    }
}

/// Heavy-ball SGD: `v <- mu v + g; w <- w - lr v`, with `g` first augmented
/// by `lambda w` when weight decay is on.
pub fn sgd_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, lr: f64) -> Result<()> {
    state.check(params, grads, "sgd_step")?;
    let (mu, lambda) = (state.momentum, state.weight_decay);
    for ((w, &g), v) in params.iter_mut().zip(grads).zip(&mut state.buf1) {
        let g = if lambda > 0.0 { g + lambda * *w } else { g };
        *v = mu * *v + g;
        *w -= lr * *v;
    }
    state.step += 1;
    Ok(())
}

/// RMSprop: `s <- d s + (1 - d) g^2; w <- w - lr g / (sqrt(s) + eps)`.
pub fn rmsprop_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    state.check(params, grads, "rmsprop_step")?;
    let (d, eps, lambda) = (state.rms_decay, state.epsilon, state.weight_decay);
    for ((w, &g), s) in params.iter_mut().zip(grads).zip(&mut state.buf2) {
        let g = if lambda > 0.0 { g + lambda * *w } else { g };
        *s = d * *s + (1.0 - d) * g * g;
        *w -= lr * g / (s.sqrt() + eps);
    }
    state.step += 1;
    Ok(())
}

/// Bias-corrected Adam with betas `(0.9, 0.999)` and `eps = 1e-8`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut OptimizerState, lr: f64) -> Result<()> {
    state.check(params, grads, "adam_step")?;
    state.step += 1;
    let (b1, b2) = state.betas;
    let (eps, lambda) = (state.epsilon, state.weight_decay);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (i, (w, &g)) in params.iter_mut().zip(grads).enumerate() {
        let g = if lambda > 0.0 { g + lambda * *w } else { g };
        state.buf1[i] = b1 * state.buf1[i] + (1.0 - b1) * g;
        state.buf2[i] = b2 * state.buf2[i] + (1.0 - b2) * g * g;
        let m_hat = state.buf1[i] / c1;
        let v_hat = state.buf2[i] / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Sigmoid,
}

/// Learning-rate schedule over the whole run. Sigmoid annealing decays from
/// `eta0` to `eta0 / 100` along a logistic curve in training progress, with
/// both endpoints clamped exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
    pub steepness: f64,
}

impl LrSchedule {
    pub fn constant(eta0: f64) -> Self {
        LrSchedule {
            kind: ScheduleKind::Constant,
            eta0,
            steepness: 10.0,
        }
    }

    pub fn sigmoid(eta0: f64) -> Self {
        LrSchedule {
            kind: ScheduleKind::Sigmoid,
            eta0,
            steepness: 10.0,
        }
    }
}

/// Iteration/epoch bookkeeping; `theta` is completed iterations over total
/// iterations and reaches 1 exactly at run end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainClock {
    pub iteration: usize,
    pub epoch: usize,
    pub total_iterations: usize,
}

impl TrainClock {
    pub fn new(total_iterations: usize) -> Result<Self> {
        if total_iterations == 0 {
            return Err(Error::Clock("total_iterations must be positive".into()));
        }
        Ok(TrainClock {
            iteration: 0,
            epoch: 0,
            total_iterations,
        })
    }

    pub fn theta(&self) -> f64 {
        self.iteration as f64 / self.total_iterations as f64
    }

    pub fn advance(&mut self) {
        self.iteration += 1;
    }
}

/// The learning rate in force at the clock's progress.
pub fn lr_at(schedule: &LrSchedule, clock: &TrainClock) -> f64 {
    let theta = clock.theta();
    match schedule.kind {
        ScheduleKind::Constant => schedule.eta0,
        ScheduleKind::Sigmoid => {
            let eta_end = schedule.eta0 / 100.0;
            if theta <= 0.0 {
                return schedule.eta0;
            }
            if theta >= 1.0 {
                return eta_end;
            }
            let z = -schedule.steepness * (theta - 0.5);
            let sig = 1.0 / (1.0 + (-z).exp());
            eta_end + (schedule.eta0 - eta_end) * sig
        }
    }
}

/// What one training step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Mean loss over the kept examples, under the noised labels.
    pub trimmed_mean_loss: f64,
    pub kept_count: usize,
    pub lr: f64,
}

/// One noised/trimmed training step, in the fixed order: noise, loss, trim,
/// backprop over the kept mean, optimizer update.
pub fn trimsgd_train_step(
    model: &mut Model,
    batch: &MiniBatch,
    config: &TrimNoiseConfig,
    opt: &mut OptimizerState,
    schedule: &LrSchedule,
    clock: &TrainClock,
    rng: &mut Rng,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Input("empty mini-batch".into()));
    }
    let noised = inject_label_noise(&batch.labels, config.rho, model.num_classes(), rng)?;
    let (logits, cache) = model.forward_cached(&batch.inputs)?;
    let (losses, logit_grads) = softmax_cross_entropy(&logits, &noised.labels)?;

    let eps_eff = effective_trim_ratio(config, clock.theta())?;
    let trim = trim_batch(&losses, eps_eff)?;
    let kept_count = trim.kept.len();
    if kept_count == 0 {
        return Err(Error::State("trim kept no examples".into()));
    }

    // Mean over the kept set via a recomputed logit-gradient mask: kept rows
    // scaled by 1 / kept_count, removed rows zero. One forward per step.
    let classes = model.num_classes();
    let inv = 1.0 / kept_count as f64;
    let mut masked = RealArray::zeros(vec![batch.len(), classes]);
    for &i in &trim.kept {
        let src = &logit_grads.data()[i * classes..(i + 1) * classes];
        let dst = &mut masked.data_mut()[i * classes..(i + 1) * classes];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = s * inv;
        }
    }

    let grads = model.backward(&cache, &masked)?;
    let lr = lr_at(schedule, clock);
    let mut params = model.flatten_params();
    opt.apply(params.data_mut(), grads.data(), lr)?;
    model.set_params(&params)?;

    let trimmed_mean_loss =
        trim.kept.iter().map(|&i| losses.values()[i]).sum::<f64>() * inv;
    Ok(StepReport {
        trimmed_mean_loss,
        kept_count,
        lr,
    })
}

/// The plain path: mean gradient over the whole batch under the original
/// labels, then the optimizer rule. [`trimsgd_train_step`] with zero noise
/// and zero trim must match this bit-for-bit.
pub fn baseline_train_step(
    model: &mut Model,
    batch: &MiniBatch,
    opt: &mut OptimizerState,
    schedule: &LrSchedule,
    clock: &TrainClock,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Input("empty mini-batch".into()));
    }
    let (logits, cache) = model.forward_cached(&batch.inputs)?;
    let (losses, mut logit_grads) = softmax_cross_entropy(&logits, &batch.labels)?;

    let inv = 1.0 / batch.len() as f64;
    for g in logit_grads.data_mut() {
        *g *= inv;
    }
    let grads = model.backward(&cache, &logit_grads)?;
    let lr = lr_at(schedule, clock);
    let mut params = model.flatten_params();
    opt.apply(params.data_mut(), grads.data(), lr)?;
    model.set_params(&params)?;

    Ok(StepReport {
        trimmed_mean_loss: losses.mean(),
        kept_count: batch.len(),
        lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Arch, InputShape};
    use crate::nn::testutil::random_array;
    use crate::regularize::TrimSchedule;

    fn clock_at(iteration: usize, total: usize) -> TrainClock {
        TrainClock {
            iteration,
            epoch: 0,
            total_iterations: total,
        }
    }

    #[test]
    fn sigmoid_schedule_endpoints_are_exact() {
        let s = LrSchedule::sigmoid(0.01);
        assert_eq!(lr_at(&s, &clock_at(0, 100)), 0.01);
        assert_eq!(lr_at(&s, &clock_at(100, 100)), 0.0001);
    }

    #[test]
    fn sigmoid_midpoint_is_halfway() {
        let s = LrSchedule::sigmoid(0.01);
        let eta_end = 0.0001;
        let want = eta_end + (0.01 - eta_end) / 2.0;
        assert!((lr_at(&s, &clock_at(50, 100)) - want).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_monotone_and_in_range() {
        let s = LrSchedule::sigmoid(0.05);
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let lr = lr_at(&s, &clock_at(i, 1000));
            assert!(lr <= prev);
            assert!(lr >= 0.05 / 100.0 && lr <= 0.05);
            prev = lr;
        }
    }

    #[test]
    fn constant_schedule_is_flat() {
        let s = LrSchedule::constant(0.3);
        assert_eq!(lr_at(&s, &clock_at(7, 10)), 0.3);
    }

    #[test]
    fn sgd_scalar_examples() {
        // plain step
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 1, 0.0, 0.0);
        let mut w = [1.0];
        sgd_step(&mut w, &[2.0], &mut state, 0.1).unwrap();
        assert_eq!(w[0], 0.8);

        // two momentum steps with identical gradients
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 1, 0.9, 0.0);
        let mut w = [5.0];
        sgd_step(&mut w, &[1.0], &mut state, 1.0).unwrap();
        sgd_step(&mut w, &[1.0], &mut state, 1.0).unwrap();
        assert!((w[0] - (5.0 - 2.9)).abs() < 1e-15);

        // decay-only step
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 1, 0.0, 5e-4);
        let mut w = [1.0];
        sgd_step(&mut w, &[0.0], &mut state, 0.1).unwrap();
        assert!((w[0] - 0.99995).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_examples() {
        let mut state = OptimizerState::new(OptimizerKind::RmsProp, 2, 0.0, 0.0);
        let mut w = [1.0, -2.0];
        rmsprop_step(&mut w, &[0.0, 0.0], &mut state, 0.001).unwrap();
        assert_eq!(w, [1.0, -2.0]);

        let mut state = OptimizerState::new(OptimizerKind::RmsProp, 1, 0.0, 0.0);
        let mut w = [0.0];
        rmsprop_step(&mut w, &[1.0], &mut state, 0.001).unwrap();
        let expected = -0.001 / (0.05f64.sqrt() + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((w[0] - (-0.004472)).abs() < 1e-6);

        // fixed point: with constant gradient the step magnitude tends to lr
        let mut state = OptimizerState::new(OptimizerKind::RmsProp, 1, 0.0, 0.0);
        let mut w = [0.0];
        let mut prev = 0.0;
        for _ in 0..400 {
            prev = w[0];
            rmsprop_step(&mut w, &[2.0], &mut state, 0.001).unwrap();
        }
        assert!(((prev - w[0]).abs() - 0.001).abs() < 1e-6);
    }

    #[test]
    fn adam_examples() {
        let mut state = OptimizerState::new(OptimizerKind::Adam, 1, 0.0, 0.0);
        let mut w = [3.0];
        adam_step(&mut w, &[0.0], &mut state, 0.001).unwrap();
        assert_eq!(w, [3.0]);

        // first-step magnitude is about lr regardless of gradient scale
        for &g in &[0.01, 1.0, 250.0] {
            let mut state = OptimizerState::new(OptimizerKind::Adam, 1, 0.0, 0.0);
            let mut w = [0.0];
            adam_step(&mut w, &[g], &mut state, 0.002).unwrap();
            assert!((w[0].abs() - 0.002).abs() < 1e-6, "g={g} step={}", w[0]);
        }
    }

    #[test]
    fn adam_matches_independent_reference() {
        // scalar re-implementation straight from the update equations
        let mut rng = Rng::from_seed(55);
        let grads: Vec<f64> = (0..200).map(|_| rng.range_f64(-2.0, 2.0)).collect();
        let lr = 0.01;

        let mut state = OptimizerState::new(OptimizerKind::Adam, 1, 0.0, 0.0);
        let mut w = [0.5];
        let (mut m, mut v, mut w_ref) = (0.0, 0.0, 0.5);
        for (t, &g) in grads.iter().enumerate() {
            adam_step(&mut w, &[g], &mut state, lr).unwrap();

            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            w_ref -= lr * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((w[0] - w_ref).abs() < 1e-12, "diverged at step {t}");
        }
    }

    #[test]
    fn mismatched_buffers_are_rejected() {
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 3, 0.0, 0.0);
        let mut w = [0.0; 2];
        assert!(matches!(
            sgd_step(&mut w, &[0.0; 2], &mut state, 0.1),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn clock_theta_reaches_one() {
        let mut clock = TrainClock::new(4).unwrap();
        let mut last = -1.0;
        for _ in 0..4 {
            assert!(clock.theta() >= last);
            last = clock.theta();
            clock.advance();
        }
        assert_eq!(clock.theta(), 1.0);
        assert!(TrainClock::new(0).is_err());
    }

    fn toy_batch(n: usize, d: usize, classes: usize, seed: u64) -> MiniBatch {
        let mut rng = Rng::from_seed(seed);
        let inputs = random_array(&[n, d], &mut rng);
        MiniBatch {
            indices: (0..n).collect(),
            inputs,
            labels: (0..n).map(|i| i % classes + 1).collect(),
        }
    }

    #[test]
    fn zero_noise_zero_trim_matches_baseline_bitwise() {
        let batch = toy_batch(8, 12, 4, 3);
        let config = TrimNoiseConfig::new(0.0, 0.0, TrimSchedule::Linear).unwrap();
        let schedule = LrSchedule::sigmoid(0.05);
        let clock = clock_at(3, 10);

        let mut m_trim = Model::build(Arch::Nn2, InputShape::Flat(12), 4, 7).unwrap();
        let mut m_base = m_trim.clone();
        let mut opt_trim = OptimizerState::new(OptimizerKind::Sgd, m_trim.param_count(), 0.9, 0.0);
        let mut opt_base = opt_trim.clone();
        let mut rng = Rng::from_seed(40);

        let r1 = trimsgd_train_step(
            &mut m_trim,
            &batch,
            &config,
            &mut opt_trim,
            &schedule,
            &clock,
            &mut rng,
        )
        .unwrap();
        let r2 =
            baseline_train_step(&mut m_base, &batch, &mut opt_base, &schedule, &clock).unwrap();

        assert_eq!(r1.kept_count, r2.kept_count);
        let p1 = m_trim.flatten_params();
        let p2 = m_base.flatten_params();
        assert!(p1
            .data()
            .iter()
            .zip(p2.data())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn trimmed_update_is_mean_of_kept_per_example_gradients() {
        // Batch of 4 where one deliberately mislabeled example dominates the
        // loss: with eps = 0.5 the update must equal the mean gradient of
        // the two median examples.
        let mut batch = toy_batch(4, 6, 3, 11);
        batch.labels = vec![1, 2, 3, 1];
        let model = Model::build(Arch::Nn2, InputShape::Flat(6), 3, 21).unwrap();

        // rank by loss to find the kept pair
        let (logits, _) = model.forward_cached(&batch.inputs).unwrap();
        let (losses, _) = softmax_cross_entropy(&logits, &batch.labels).unwrap();
        let trim = trim_batch(&losses, 0.5).unwrap();
        assert_eq!(trim.kept.len(), 2);

        // per-example gradients, summed by hand
        let mut mean_grad = model.zero_grads();
        for &i in &trim.kept {
            let single = RealArray::from_vec(
                vec![1, 6],
                batch.inputs.data()[i * 6..(i + 1) * 6].to_vec(),
            )
            .unwrap();
            let (lg, cache) = {
                let (logits, cache) = model.forward_cached(&single).unwrap();
                let (_, lg) = softmax_cross_entropy(&logits, &batch.labels[i..i + 1]).unwrap();
                (lg, cache)
            };
            let g = model.backward(&cache, &lg).unwrap();
            mean_grad = mean_grad.add(&g).unwrap();
        }
        for v in mean_grad.data_mut() {
            *v /= 2.0;
        }

        // actual step with lr 1 and no momentum: delta = -mean_grad
        let mut stepped = model.clone();
        let config = TrimNoiseConfig::new(0.0, 0.5, TrimSchedule::Constant).unwrap();
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, model.param_count(), 0.0, 0.0);
        let schedule = LrSchedule::constant(1.0);
        let report = trimsgd_train_step(
            &mut stepped,
            &batch,
            &config,
            &mut opt,
            &schedule,
            &clock_at(0, 1),
            &mut Rng::from_seed(0),
        )
        .unwrap();
        assert_eq!(report.kept_count, 2);

        let before = model.flatten_params();
        let after = stepped.flatten_params();
        for ((b, a), g) in before.data().iter().zip(after.data()).zip(mean_grad.data()) {
            assert!((b - a - g).abs() < 1e-10);
        }
    }
}
