use ndarray::Zip;

use crate::params::ParamStore;
use crate::tape::Gradients;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter that has a gradient.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, lr: f64, cfg: &Adam) {
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (id, g) in grads.iter() {
        let i = id.index();
        let (b1, b2, eps) = (cfg.beta1, cfg.beta2, cfg.eps);
        Zip::from(&mut store.m[i])
            .and(&mut store.v[i])
            .and(g)
            .for_each(|m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
            });
        let (m, v) = (&store.m[i], &store.v[i]);
        let value = &mut store.values[i];
        Zip::from(value).and(m).and(v).for_each(|w, &m, &v| {
            *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
        });
    }
}

/// Rescales gradients so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Linear decay from `lr0` to zero over `total_steps`.
pub fn lr_schedule(lr0: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    lr0 * (1.0 - step as f64 / total_steps as f64).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{Mat, Tape};
    use ndarray::array;

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.register("w", array![[1.0, -1.0]]).unwrap();
        let mut g = Gradients::default();
        g.insert(id, array![[0.3, -5.0]]);
        adam_step(&mut store, &g, 0.1, &Adam::default());
        let w = store.value(id);
        assert!((w[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((w[[0, 1]] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        let id = store.register("w", array![[3.0, -2.0]]).unwrap();
        for step in 0..2000 {
            let mut t = Tape::new();
            let w = t.param(&store, id);
            let sq = t.mul(w, w);
            let l = t.sum(sq);
            let g = t.backward(l);
            adam_step(&mut store, &g, lr_schedule(0.05, step, 2000), &Adam::default());
        }
        assert!(store.value(id).iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn clipping() {
        let mut store = ParamStore::new();
        let id = store.register("w", Mat::zeros((1, 2))).unwrap();
        let mut g = Gradients::default();
        g.insert(id, array![[3.0, 4.0]]);
        assert_eq!(clip_gradients(&mut g, 1.0), 5.0);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        assert_eq!(clip_gradients(&mut g, 2.0), g.global_norm());
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_schedule(1e-4, 0, 100), 1e-4);
        assert!((lr_schedule(1e-4, 50, 100) - 5e-5).abs() < 1e-18);
        assert_eq!(lr_schedule(1e-4, 100, 100), 0.0);
        assert_eq!(lr_schedule(1e-4, 150, 100), 0.0);
    }
}
