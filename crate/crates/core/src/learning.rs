//! Per-UAV online linear classifier.
//!
//! Each UAV owns a [`BidModel`]: a linear decision function over standardised
//! `[distance, mass, soc]` features, trained one sample at a time with SGD on
//! the modified Huber loss plus an L2 penalty on the weights.
//!
//! Features are standardised with fixed constants for both bidding and
//! updating, so a model is only ever evaluated in the space it was trained in.

use thiserror::Error;

use crate::fulfilment::OrderBounds;

/// Default cap on seed-initialisation steps.
pub const INIT_MAX_STEPS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LearningError {
    #[error("decision hyperplane is degenerate (zero weight vector)")]
    DegenerateHyperplane,
    #[error("initialisation did not separate the seed samples within {0} steps")]
    InitNotSeparated(u64),
}

/// Raw task features as seen by a UAV at bidding time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub distance: f64,
    pub mass: f64,
    pub soc: f64,
}

impl FeatureVector {
    pub fn new(distance: f64, mass: f64, soc: f64) -> Self {
        Self { distance, mass, soc }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.distance, self.mass, self.soc]
    }

    /// Whether every component lies inside the order bounds and `[0, 100]` SoC.
    pub fn in_distribution(&self, bounds: &OrderBounds) -> bool {
        (bounds.distance_min..=bounds.distance_max).contains(&self.distance)
            && (bounds.mass_min..=bounds.mass_max).contains(&self.mass)
            && (0.0..=100.0).contains(&self.soc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mu: [f64; 3],
    pub sigma: [f64; 3],
}

impl Default for Standardizer {
    fn default() -> Self {
        Self { mu: [3500.0, 2.75, 50.0], sigma: [1443.38, 1.298, 28.87] }
    }
}

impl Standardizer {
    pub fn is_valid(&self) -> bool {
        self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) && self.mu.iter().all(|m| m.is_finite())
    }
}

pub fn standardize(x: &FeatureVector, s: &Standardizer) -> [f64; 3] {
    let raw = x.as_array();
    std::array::from_fn(|i| (raw[i] - s.mu[i]) / s.sigma[i])
}

/// Learning-rate schedule of the SGD updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LearningSchedule {
    /// `eta0 / (1 + eta0·alpha·t)`.
    #[default]
    Decay,
    /// `1 / (alpha·(t0 + t))`, with `t0` chosen so that the first rate is
    /// `alpha^(-1/4)`. Ignores `eta0`.
    Optimal,
}

impl LearningSchedule {
    pub fn as_str(&self) -> &'static str {
        match self {
            LearningSchedule::Decay => "decay",
            LearningSchedule::Optimal => "optimal",
        }
    }
}

impl std::str::FromStr for LearningSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decay" => Ok(LearningSchedule::Decay),
            "optimal" => Ok(LearningSchedule::Optimal),
            other => Err(format!("unknown learning schedule `{other}`")),
        }
    }
}

/// Linear decision function `f(x) = w·x + b` with its SGD schedule state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidModel {
    pub w: [f64; 3],
    pub b: f64,
    /// L2 regularisation strength.
    pub alpha: f64,
    /// Initial learning rate.
    pub eta0: f64,
    /// SGD steps taken so far, seed initialisation included.
    pub steps: u64,
    pub schedule: LearningSchedule,
}

impl BidModel {
    pub fn zeroed(alpha: f64, eta0: f64) -> Self {
        Self { w: [0.0; 3], b: 0.0, alpha, eta0, steps: 0, schedule: LearningSchedule::Decay }
    }

    pub fn with_schedule(self, schedule: LearningSchedule) -> Self {
        Self { schedule, ..self }
    }

    /// Learning rate for step `t`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        match self.schedule {
            LearningSchedule::Decay => self.eta0 / (1.0 + self.eta0 * self.alpha * t as f64),
            LearningSchedule::Optimal => {
                let first = self.alpha.sqrt().recip().sqrt();
                let t0 = 1.0 / (first * self.alpha);
                1.0 / (self.alpha * (t0 + t as f64))
            }
        }
    }

    pub fn weight_norm(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Outcome of one delivery attempt, features captured at takeoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelledSample {
    pub features: FeatureVector,
    /// `true` iff the destination was reached.
    pub label: bool,
}

pub fn decision_value(model: &BidModel, x_std: &[f64; 3]) -> f64 {
    model.w.iter().zip(x_std).map(|(w, x)| w * x).sum::<f64>() + model.b
}

/// `true` means bid; the boundary `f = 0` bids.
pub fn bid_decision(model: &BidModel, x_std: &[f64; 3]) -> bool {
    decision_value(model, x_std) >= 0.0
}

/// Signed distance of `x_std` from the decision hyperplane.
pub fn bid_confidence(model: &BidModel, x_std: &[f64; 3]) -> Result<f64, LearningError> {
    let norm = model.weight_norm();
    if norm == 0.0 {
        return Err(LearningError::DegenerateHyperplane);
    }
    Ok(decision_value(model, x_std) / norm)
}

fn signed_label(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

pub fn modified_huber_loss(y: bool, f: f64) -> f64 {
    let z = signed_label(y) * f;
    if z >= -1.0 {
        (1.0 - z).max(0.0).powi(2)
    } else {
        -4.0 * z
    }
}

/// Derivative of the modified Huber loss with respect to `f`.
pub fn modified_huber_dloss(y: bool, f: f64) -> f64 {
    let s = signed_label(y);
    let z = s * f;
    if z >= 1.0 {
        0.0
    } else if z >= -1.0 {
        -2.0 * s * (1.0 - z)
    } else {
        -4.0 * s
    }
}

/// Regularised objective `L(y, f) + alpha·|w|²/2` for a single sample.
pub fn regularized_objective(y: bool, x_std: &[f64; 3], model: &BidModel) -> f64 {
    let sq: f64 = model.w.iter().map(|v| v * v).sum();
    modified_huber_loss(y, decision_value(model, x_std)) + model.alpha * 0.5 * sq
}

/// Gradient of [`regularized_objective`] with respect to `(w, b)`. The bias is
/// not regularised.
pub fn loss_gradient(y: bool, x_std: &[f64; 3], model: &BidModel) -> ([f64; 3], f64) {
    let dldf = modified_huber_dloss(y, decision_value(model, x_std));
    let grad_w = std::array::from_fn(|i| dldf * x_std[i] + model.alpha * model.w[i]);
    (grad_w, dldf)
}

pub fn sgd_step(model: &BidModel, sample: &LabelledSample, s: &Standardizer) -> BidModel {
    let x_std = standardize(&sample.features, s);
    let (grad_w, grad_b) = loss_gradient(sample.label, &x_std, model);
    let eta = model.learning_rate(model.steps);
    let mut next = *model;
    for (w, g) in next.w.iter_mut().zip(grad_w) {
        *w -= eta * g;
    }
    next.b -= eta * grad_b;
    next.steps += 1;
    next
}

/// The two assumed samples every UAV starts from: an easy task on a full
/// battery succeeds, the hardest task on an empty battery fails.
pub fn seed_samples(bounds: &OrderBounds) -> [LabelledSample; 2] {
    [
        LabelledSample { features: FeatureVector::new(bounds.distance_min, bounds.mass_min, 100.0), label: true },
        LabelledSample { features: FeatureVector::new(bounds.distance_max, bounds.mass_max, 0.0), label: false },
    ]
}

/// Trains a fresh model on the seed samples, alternating between them until
/// both are classified correctly.
pub fn init_model(
    alpha: f64,
    eta0: f64,
    bounds: &OrderBounds,
    s: &Standardizer,
    max_steps: u64,
) -> Result<BidModel, LearningError> {
    init_model_with(BidModel::zeroed(alpha, eta0), bounds, s, max_steps)
}

/// [`init_model`] starting from an arbitrary untrained model, e.g. one with
/// a non-default schedule.
pub fn init_model_with(
    start: BidModel,
    bounds: &OrderBounds,
    s: &Standardizer,
    max_steps: u64,
) -> Result<BidModel, LearningError> {
    let seeds = seed_samples(bounds);
    let mut model = start;
    let separated = |m: &BidModel| seeds.iter().all(|smp| bid_decision(m, &standardize(&smp.features, s)) == smp.label);
    while !separated(&model) {
        if model.steps >= max_steps {
            return Err(LearningError::InitNotSeparated(max_steps));
        }
        let sample = &seeds[(model.steps % 2) as usize];
        model = sgd_step(&model, sample, s);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn model(w: [f64; 3], b: f64) -> BidModel {
        BidModel { w, b, ..BidModel::zeroed(0.01, 0.01) }
    }

    #[test]
    fn standardize_examples() {
        let s = Standardizer::default();
        assert_eq!(standardize(&FeatureVector::new(3500.0, 2.75, 50.0), &s), [0.0; 3]);
        let ones = standardize(&FeatureVector::new(4943.38, 4.048, 78.87), &s);
        for v in ones {
            close(v, 1.0, 1e-12);
        }
        let low = standardize(&FeatureVector::new(1000.0, 0.5, 0.0), &s);
        close(low[0], -1.7320, 1e-4);
        close(low[1], -1.7334, 1e-4);
        close(low[2], -1.7319, 1e-4);
    }

    #[test]
    fn decision_examples() {
        assert_eq!(decision_value(&model([0.0, 0.0, 1.0], 0.0), &[9.0, 9.0, 0.5]), 0.5);
        assert_eq!(decision_value(&model([0.0; 3], -1.0), &[3.0, -2.0, 1.0]), -1.0);
        assert_eq!(decision_value(&model([1.0, 2.0, 3.0], 0.5), &[1.0; 3]), 6.5);
    }

    #[test]
    fn bid_decision_boundary() {
        let m = model([0.0, 0.0, 1.0], 0.0);
        assert!(bid_decision(&m, &[0.0, 0.0, 0.0]));
        assert!(!bid_decision(&m, &[0.0, 0.0, -1e-9]));
        assert!(bid_decision(&m, &[0.0, 0.0, 3.2]));
    }

    #[test]
    fn confidence_examples() {
        // f = 3*2 + 4*1 = 10, |w| = 5
        close(bid_confidence(&model([3.0, 4.0, 0.0], 0.0), &[2.0, 1.0, 0.0]).unwrap(), 2.0, 1e-12);
        close(bid_confidence(&model([0.0, 0.0, 1.0], 0.0), &[0.3, 0.1, 0.7]).unwrap(), 0.7, 1e-12);
        assert_eq!(bid_confidence(&model([0.0; 3], 1.0), &[1.0; 3]), Err(LearningError::DegenerateHyperplane));
    }

    #[test]
    fn loss_examples() {
        assert_eq!(modified_huber_loss(true, 1.0), 0.0);
        assert_eq!(modified_huber_loss(true, -2.0), 8.0);
        assert_eq!(modified_huber_loss(false, 0.5), 2.25);
    }

    #[test]
    fn gradient_examples() {
        let mut m = model([0.0; 3], 2.0);
        m.alpha = 0.0;
        let (gw, gb) = loss_gradient(true, &[1.0, 0.5, -0.2], &m);
        assert_eq!((gw, gb), ([0.0; 3], 0.0));

        let m = model([0.0; 3], 0.0);
        let (gw, gb) = loss_gradient(true, &[0.0; 3], &m);
        assert_eq!(gb, -2.0);
        assert_eq!(gw, [0.0; 3]);
    }

    #[test]
    fn first_sgd_step_moves_bias() {
        let m = BidModel::zeroed(0.01, 0.01);
        let sample = LabelledSample { features: FeatureVector::new(3500.0, 2.75, 50.0), label: true };
        let next = sgd_step(&m, &sample, &Standardizer::default());
        close(next.b, 0.02, 1e-15);
        assert_eq!(next.w, [0.0; 3]);
        assert_eq!(next.steps, 1);
    }

    #[test]
    fn zero_gradient_step_only_counts() {
        let mut m = model([0.0, 0.0, 2.0], 0.0);
        m.alpha = 0.0;
        // z = f = 2*1 = 2 >= 1
        let sample = LabelledSample { features: FeatureVector::new(3500.0, 2.75, 78.87), label: true };
        let next = sgd_step(&m, &sample, &Standardizer::default());
        assert_eq!((next.w, next.b), (m.w, m.b));
        assert_eq!(next.steps, m.steps + 1);
    }

    #[test]
    fn repeated_steps_separate_a_pair() {
        let s = Standardizer::default();
        let pos = LabelledSample { features: FeatureVector::new(2000.0, 1.0, 90.0), label: true };
        let neg = LabelledSample { features: FeatureVector::new(5000.0, 4.0, 20.0), label: false };
        let mut m = BidModel::zeroed(0.01, 0.01);
        for _ in 0..200 {
            m = sgd_step(&m, &pos, &s);
            m = sgd_step(&m, &neg, &s);
        }
        assert!(bid_decision(&m, &standardize(&pos.features, &s)));
        assert!(!bid_decision(&m, &standardize(&neg.features, &s)));
    }

    #[test]
    fn learning_rate_decays_from_eta0() {
        let m = BidModel::zeroed(0.01, 0.01);
        assert_eq!(m.learning_rate(0), 0.01);
        let mut prev = m.learning_rate(0);
        for t in 1..10_000 {
            let eta = m.learning_rate(t);
            assert!(eta < prev);
            prev = eta;
        }
    }

    #[test]
    fn init_model_separates_seeds() {
        let s = Standardizer::default();
        let bounds = OrderBounds::default();
        let m = init_model(0.01, 0.01, &bounds, &s, INIT_MAX_STEPS).unwrap();
        assert!(m.steps > 0 && m.steps < INIT_MAX_STEPS);
        assert!(bid_decision(&m, &standardize(&FeatureVector::new(1000.0, 0.5, 100.0), &s)));
        assert!(!bid_decision(&m, &standardize(&FeatureVector::new(6000.0, 5.0, 0.0), &s)));
    }

    #[test]
    fn init_model_reports_cap() {
        let err = init_model(0.01, 0.01, &OrderBounds::default(), &Standardizer::default(), 0);
        assert_eq!(err, Err(LearningError::InitNotSeparated(0)));
    }

    #[test]
    fn loss_is_c1_at_branch_points() {
        for y in [true, false] {
            let s = if y { 1.0 } else { -1.0 };
            for z0 in [-1.0, 1.0] {
                let f0 = z0 * s;
                let h = 1e-7;
                let left = modified_huber_loss(y, f0 - h);
                let right = modified_huber_loss(y, f0 + h);
                close(left, modified_huber_loss(y, f0), 1e-6);
                close(right, modified_huber_loss(y, f0), 1e-6);
                let d_left = (modified_huber_loss(y, f0) - left) / h;
                let d_right = (right - modified_huber_loss(y, f0)) / h;
                close(d_left, d_right, 1e-5);
                close(d_left, modified_huber_dloss(y, f0), 1e-5);
            }
        }
    }

    proptest! {
        #[test]
        fn decision_and_confidence_scale_invariant(
            w in prop::array::uniform3(-5.0f64..5.0),
            b in -5.0f64..5.0,
            x in prop::array::uniform3(-3.0f64..3.0),
            c in 0.01f64..100.0,
        ) {
            prop_assume!(w.iter().any(|v| v.abs() > 1e-3));
            let m = model(w, b);
            let scaled = model(w.map(|v| v * c), b * c);
            if decision_value(&m, &x).abs() > 1e-9 {
                prop_assert_eq!(bid_decision(&m, &x), bid_decision(&scaled, &x));
            }
            let a = bid_confidence(&m, &x).unwrap();
            let s = bid_confidence(&scaled, &x).unwrap();
            prop_assert!((a - s).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn step_count_increments_once(
            w in prop::array::uniform3(-2.0f64..2.0),
            b in -2.0f64..2.0,
            d in 1000.0f64..6000.0,
            m in 0.5f64..5.0,
            soc in 0.0f64..100.0,
            y: bool,
            steps in 0u64..10_000,
        ) {
            let mut bm = model(w, b);
            bm.steps = steps;
            let sample = LabelledSample { features: FeatureVector::new(d, m, soc), label: y };
            prop_assert_eq!(sgd_step(&bm, &sample, &Standardizer::default()).steps, steps + 1);
        }
    }
}
