//! Linear function approximation: a softmax-linear policy, a linear state
//! value function, their closed-form gradients, and a central-difference
//! gradient checker.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::sample_index;

/// State features.
pub trait FeatureMap: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes the feature vector of `s` into `out` (length `dim`).
    fn encode_into(&self, s: usize, out: &mut [f64]);

    fn encode(&self, s: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(s, &mut out);
        out
    }
}

/// Indicator features, one coordinate per state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneHot {
    n_states: usize,
}

impl OneHot {
    pub fn new(n_states: usize) -> Self {
        OneHot { n_states }
    }
}

impl FeatureMap for OneHot {
    fn dim(&self) -> usize {
        self.n_states
    }

    fn encode_into(&self, s: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[s] = 1.0;
    }
}

/// Dense row-major matrix of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += k * y;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `v(s, w) = w . phi(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearValueFn {
    pub w: Vec<f64>,
}

impl LinearValueFn {
    pub fn zeros(dim: usize) -> Self {
        LinearValueFn { w: vec![0.0; dim] }
    }

    /// Plain linear estimate. Terminal states are handled by the callers
    /// (the TD target drops the bootstrap there), so no terminal check here.
    pub fn value(&self, fm: &dyn FeatureMap, s: usize) -> f64 {
        let phi = fm.encode(s);
        dot(&self.w, &phi)
    }

    /// Gradient of `value` with respect to `w`, which is just `phi(s)`.
    pub fn grad(&self, fm: &dyn FeatureMap, s: usize) -> Vec<f64> {
        fm.encode(s)
    }

    /// `w += k * g`.
    pub fn add_scaled(&mut self, k: f64, g: &[f64]) {
        for (w, x) in self.w.iter_mut().zip(g) {
            *w += k * x;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `pi(a|s, theta) = softmax_a(theta[a] . phi(s))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    pub theta: Matrix,
}

impl SoftmaxPolicy {
    pub fn zeros(n_actions: usize, dim: usize) -> Self {
        SoftmaxPolicy {
            theta: Matrix::zeros(n_actions, dim),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.theta.rows()
    }

    pub fn dim(&self) -> usize {
        self.theta.cols()
    }

    pub fn scores(&self, fm: &dyn FeatureMap, s: usize) -> Vec<f64> {
        let phi = fm.encode(s);
        (0..self.n_actions())
            .map(|a| dot(self.theta.row(a), &phi))
            .collect()
    }

    pub fn probs(&self, fm: &dyn FeatureMap, s: usize) -> Vec<f64> {
        softmax(&self.scores(fm, s))
    }

    /// `grad_theta log pi(a|s)`: row `b` is `(1[b = a] - pi(b|s)) phi(s)`.
    pub fn log_prob_grad(&self, fm: &dyn FeatureMap, s: usize, a: usize) -> Matrix {
        let phi = fm.encode(s);
        let probs = softmax(
            &(0..self.n_actions())
                .map(|b| dot(self.theta.row(b), &phi))
                .collect::<Vec<_>>(),
        );
        let mut g = Matrix::zeros(self.n_actions(), self.dim());
        for (b, p) in probs.iter().enumerate() {
            let coef = if b == a { 1.0 - p } else { -p };
            for (c, x) in phi.iter().enumerate() {
                g.set(b, c, coef * x);
            }
        }
        g
    }

    pub fn sample<R: Rng + ?Sized>(&self, fm: &dyn FeatureMap, s: usize, rng: &mut R) -> usize {
        sample_index(&self.probs(fm, s), rng)
    }

    /// Most probable action, lowest index among ties.
    pub fn greedy_action(&self, fm: &dyn FeatureMap, s: usize) -> usize {
        crate::qlearning::argmax(&self.scores(fm, s))
    }

    pub fn greedy_policy(&self, fm: &dyn FeatureMap, n_states: usize) -> Vec<usize> {
        (0..n_states).map(|s| self.greedy_action(fm, s)).collect()
    }
}

/// Softmax with max subtraction; exact for any finite scores.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// Worst per-coordinate relative error between `grad` and central
/// differences of `f` at `x`, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_check<F>(mut f: F, grad: &[f64], x: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::param("func_approx", format!("step {h} must be positive")));
    }
    if grad.len() != x.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, parameters {}",
            grad.len(),
            x.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::numeric(
                "func_approx",
                format!("function evaluation at coordinate {i} is not finite"),
            ));
        }
        let numeric = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((grad[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_policy(na: usize, dim: usize, seed: u64) -> SoftmaxPolicy {
        let mut rng = rng_from_seed(seed);
        let data = (0..na * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        SoftmaxPolicy {
            theta: Matrix::from_vec(na, dim, data).unwrap(),
        }
    }

    /// Feature map with dense non-indicator features, to exercise gradients
    /// beyond the one-hot case.
    struct Dense {
        table: Vec<Vec<f64>>,
    }

    impl FeatureMap for Dense {
        fn dim(&self) -> usize {
            self.table[0].len()
        }
        fn encode_into(&self, s: usize, out: &mut [f64]) {
            out.copy_from_slice(&self.table[s]);
        }
    }

    fn dense(ns: usize, dim: usize, seed: u64) -> Dense {
        let mut rng = rng_from_seed(seed);
        Dense {
            table: (0..ns)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        }
    }

    #[test]
    fn value_examples() {
        let fm = OneHot::new(2);
        assert_eq!(LinearValueFn::zeros(2).value(&fm, 1), 0.0);
        let v = LinearValueFn { w: vec![0.5, 2.0] };
        assert_eq!(v.value(&fm, 1), 2.0);

        let fm = dense(5, 4, 1);
        let v = LinearValueFn { w: vec![0.3, -1.2, 2.5, 0.7] };
        for s in 0..5 {
            let mut naive = 0.0;
            for i in 0..4 {
                naive += v.w[i] * fm.table[s][i];
            }
            assert!((v.value(&fm, s) - naive).abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_at_zero() {
        let p = SoftmaxPolicy::zeros(3, 2);
        for x in p.probs(&OneHot::new(2), 0) {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_softmax_is_stable() {
        let mut p = SoftmaxPolicy::zeros(3, 1);
        p.theta.set(1, 0, 1000.0);
        let probs = p.probs(&OneHot::new(1), 0);
        assert!(probs.iter().all(|x| x.is_finite()));
        assert!(probs[1] >= 1.0 - 1e-9);
    }

    // Reference probabilities computed with mpmath at 50 digits from the exact
    // binary values of the listed scores.
    #[test]
    fn softmax_matches_extended_precision_reference() {
        let cases: [(&[f64], &[f64]); 3] = [
            (
                &[0.3, -1.7, 2.25, 0.0],
                &[
                    0.1122984667002952,
                    0.01519794479792177,
                    0.7893108382155852,
                    0.08319275028619784,
                ],
            ),
            (
                &[-40.5, -41.0, -39.875],
                &[
                    0.2877882840197299,
                    0.1745524177640535,
                    0.5376592982162166,
                ],
            ),
            (
                &[12.0, 11.999999, -3.5],
                &[
                    0.5000002036151736,
                    0.49999970361522045,
                    9.276960590938237e-8,
                ],
            ),
        ];
        for (scores, expected) in cases {
            let p = SoftmaxPolicy {
                theta: Matrix::from_vec(scores.len(), 1, scores.to_vec()).unwrap(),
            };
            let got = p.probs(&OneHot::new(1), 0);
            for (g, e) in got.iter().zip(expected) {
                assert!((g - e).abs() <= 1e-10, "{got:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn log_grad_uniform_case() {
        let p = SoftmaxPolicy::zeros(2, 3);
        let g = p.log_prob_grad(&OneHot::new(3), 1, 0);
        assert_eq!(g.row(0), &[0.0, 0.5, 0.0]);
        assert_eq!(g.row(1), &[0.0, -0.5, 0.0]);
    }

    #[test]
    fn log_grad_vanishes_when_saturated() {
        let mut p = SoftmaxPolicy::zeros(2, 1);
        p.theta.set(0, 0, 40.0);
        let g = p.log_prob_grad(&OneHot::new(1), 0, 0);
        assert!(g.as_slice().iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn log_grad_matches_finite_differences() {
        for seed in 0..10 {
            let (na, dim) = (3, 4);
            let p = random_policy(na, dim, seed);
            let fm = dense(4, dim, 100 + seed);
            let (s, a) = (seed as usize % 4, seed as usize % na);
            let g = p.log_prob_grad(&fm, s, a);
            let err = finite_diff_check(
                |x| {
                    let q = SoftmaxPolicy {
                        theta: Matrix::from_vec(na, dim, x.to_vec()).unwrap(),
                    };
                    q.probs(&fm, s)[a].ln()
                },
                g.as_slice(),
                p.theta.as_slice(),
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn value_grad_examples() {
        let fm = OneHot::new(4);
        let v = LinearValueFn::zeros(4);
        assert_eq!(v.grad(&fm, 2), vec![0.0, 0.0, 1.0, 0.0]);
        let other = LinearValueFn { w: vec![1.0, -3.0, 2.0, 9.0] };
        assert_eq!(v.grad(&fm, 2), other.grad(&fm, 2));

        let fm = dense(3, 4, 7);
        let err = finite_diff_check(
            |x| LinearValueFn { w: x.to_vec() }.value(&fm, 1),
            &other.grad(&fm, 1),
            &other.w,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn checker_examples() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let ok = finite_diff_check(f, &[2.0, 4.0], &[1.0, 2.0], 1e-5).unwrap();
        assert!(ok <= 1e-8, "{ok}");
        let bad = finite_diff_check(f, &[4.0, 8.0], &[1.0, 2.0], 1e-5).unwrap();
        assert!((bad - 0.5).abs() < 1e-6, "{bad}");
        assert!(finite_diff_check(f, &[2.0, 4.0], &[1.0, 2.0], 0.0).is_err());
        assert!(matches!(
            finite_diff_check(|_| f64::NAN, &[0.0], &[0.0], 1e-5),
            Err(Error::Numeric { .. })
        ));
    }

    proptest! {
        #[test]
        fn probs_are_a_distribution(theta in prop::collection::vec(-50.0f64..50.0, 8), s in 0usize..2) {
            let p = SoftmaxPolicy { theta: Matrix::from_vec(4, 2, theta).unwrap() };
            let probs = p.probs(&OneHot::new(2), s);
            prop_assert!(probs.iter().all(|x| *x >= 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn expected_score_is_zero(seed in any::<u64>(), s in 0usize..4) {
            let p = random_policy(3, 5, seed);
            let fm = dense(4, 5, seed ^ 1);
            let probs = p.probs(&fm, s);
            let mut total = Matrix::zeros(3, 5);
            for a in 0..3 {
                total.add_scaled(probs[a], &p.log_prob_grad(&fm, s, a)).unwrap();
            }
            prop_assert!(total.as_slice().iter().all(|x| x.abs() <= 1e-10));
        }

        #[test]
        fn softmax_is_shift_invariant(seed in any::<u64>(), shift in prop::collection::vec(-10.0f64..10.0, 3)) {
            let p = random_policy(4, 3, seed);
            let fm = dense(2, 3, seed ^ 2);
            let mut moved = p.clone();
            for a in 0..4 {
                for c in 0..3 {
                    moved.theta.set(a, c, p.theta.get(a, c) + shift[c]);
                }
            }
            for s in 0..2 {
                for (x, y) in p.probs(&fm, s).iter().zip(moved.probs(&fm, s)) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn value_is_linear(
            w1 in prop::collection::vec(-5.0f64..5.0, 4),
            w2 in prop::collection::vec(-5.0f64..5.0, 4),
            a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0usize..3,
        ) {
            let fm = dense(3, 4, 11);
            let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
            let lhs = LinearValueFn { w: mix }.value(&fm, s);
            let rhs = a * LinearValueFn { w: w1 }.value(&fm, s) + b * LinearValueFn { w: w2 }.value(&fm, s);
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }
    }
}
