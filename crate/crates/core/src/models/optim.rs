use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Gradient over dense parameters plus a sparse set of embedding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T> {
    pub dense: Vec<T>,
    pub rows: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> Gradient<T> {
    pub fn zeros(dense: usize) -> Self {
        Gradient {
            dense: vec![T::zero(); dense],
            rows: BTreeMap::new(),
        }
    }

    pub fn add_to_row(&mut self, row: usize, values: &[T], scale: T) {
        let entry = self
            .rows
            .entry(row)
            .or_insert_with(|| vec![T::zero(); values.len()]);
        for (e, &v) in entry.iter_mut().zip(values) {
            *e += v * scale;
        }
    }

    pub fn accumulate(&mut self, other: &Gradient<T>) {
        for (a, &b) in self.dense.iter_mut().zip(&other.dense) {
            *a += b;
        }
        for (&r, values) in &other.rows {
            self.add_to_row(r, values, T::one());
        }
    }

    pub fn scale(&mut self, c: T) {
        self.dense.iter_mut().for_each(|g| *g *= c);
        self.rows.values_mut().flatten().for_each(|g| *g *= c);
    }

    pub fn global_norm(&self) -> T {
        let dense = self.dense.iter().fold(T::zero(), |acc, &g| acc + g * g);
        self.rows
            .values()
            .flatten()
            .fold(dense, |acc, &g| acc + g * g)
            .sqrt()
    }

    /// Rescales so that the global L2 norm is at most `max_norm`; returns the norm before.
    pub fn clip(&mut self, max_norm: T) -> T {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Storage for the sparse rows a [`Gradient`] refers to.
pub trait RowParams<T> {
    fn row_mut(&mut self, row: usize) -> &mut [T];
}

/// For models without sparse rows.
pub struct NoRows;

impl<T> RowParams<T> for NoRows {
    fn row_mut(&mut self, row: usize) -> &mut [T] {
        panic!("gradient refers to sparse row {row} but the model has none")
    }
}

/// Row-major matrix with a fixed row width.
pub struct DenseRows<'a, T> {
    pub data: &'a mut [T],
    pub width: usize,
}

impl<T> RowParams<T> for DenseRows<'_, T> {
    fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.width..(row + 1) * self.width]
    }
}

/// Adam. Sparse embedding rows keep their own moments and are updated only on steps where
/// they receive a gradient, with bias correction from the global step count.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: i32,
    m: Vec<T>,
    v: Vec<T>,
    row_moments: HashMap<usize, (Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, dense: usize) -> Self {
        Adam {
            lr: T::from_f64_lossy(config.learning_rate),
            beta1: T::from_f64_lossy(config.beta1),
            beta2: T::from_f64_lossy(config.beta2),
            eps: T::from_f64_lossy(config.epsilon),
            t: 0,
            m: vec![T::zero(); dense],
            v: vec![T::zero(); dense],
            row_moments: HashMap::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Applies one update to the dense parameters and the rows named by the gradient.
    pub fn step(&mut self, params: &mut [T], grad: &Gradient<T>, rows: &mut dyn RowParams<T>) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (k, p) in params.iter_mut().enumerate() {
            update(p, &mut self.m[k], &mut self.v[k], grad.dense[k]);
        }
        for (&r, g) in &grad.rows {
            let (m, v) = self
                .row_moments
                .entry(r)
                .or_insert_with(|| (vec![T::zero(); g.len()], vec![T::zero(); g.len()]));
            let p = rows.row_mut(r);
            for k in 0..g.len() {
                update(&mut p[k], &mut m[k], &mut v[k], g[k]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_step_moves_each_parameter_by_the_learning_rate() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 2);
        let mut p = vec![1.0, -1.0];
        let mut g = Gradient::zeros(2);
        g.dense = vec![0.3, -7.0];
        let mut table = vec![0.0; 5];
        g.add_to_row(4, &[2.0], 1.0);
        adam.step(
            &mut p,
            &g,
            &mut DenseRows {
                data: &mut table,
                width: 1,
            },
        );
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-9);
        assert!((table[4] + 1e-3).abs() < 1e-9);
        assert_eq!(&table[..4], &[0.0; 4]);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut adam = Adam::<f64>::new(
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            1,
        );
        let mut p = vec![3.0];
        for _ in 0..2000 {
            let mut g = Gradient::zeros(1);
            g.dense[0] = 2.0 * (p[0] - 0.5);
            adam.step(&mut p, &g, &mut NoRows);
        }
        assert!((p[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut g = Gradient::<f64>::zeros(2);
        g.dense = vec![3.0, 0.0];
        g.add_to_row(0, &[4.0], 1.0);
        assert_eq!(g.clip(1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        assert!((g.dense[0] - 0.6).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn post_clip_norm_is_bounded(
            dense in proptest::collection::vec(-50.0f64..50.0, 1..20),
            rows in proptest::collection::vec((0usize..6, proptest::collection::vec(-50.0f64..50.0, 3)), 0..6),
        ) {
            let mut g = Gradient::<f64>::zeros(dense.len());
            g.dense = dense;
            for (r, v) in &rows {
                g.add_to_row(*r, v, 1.0);
            }
            let before = g.global_norm();
            let reported = g.clip(5.0);
            prop_assert!((reported - before).abs() <= 1e-12 * before.max(1.0));
            if before > 5.0 {
                prop_assert!(g.global_norm() <= 5.0 + 1e-9);
            } else {
                prop_assert!((g.global_norm() - before).abs() <= 1e-12);
            }
        }
    }
}
