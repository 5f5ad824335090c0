use serde::{Deserialize, Serialize};

/// Reduce-on-plateau learning rate schedule.
///
/// A loss counts as an improvement when it beats the best seen so far by more
/// than `threshold`. When `patience` consecutive epochs fail to improve, the
/// rate is multiplied by `factor` (floored at `min_lr`) and the counter restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    pub best: f64,
    pub bad_epochs: usize,
    pub reductions: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            min_lr,
            threshold: 1e-5,
            best: f64::INFINITY,
            bad_epochs: 0,
            reductions: 0,
        }
    }

    /// Returns the learning rate for the next epoch and whether `val_loss`
    /// improved.
    pub fn step(&mut self, val_loss: f64) -> (f64, bool) {
        let improved = val_loss < self.best - self.threshold;
        if improved {
            self.best = val_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                let next = (self.lr * self.factor).max(self.min_lr);
                if next < self.lr {
                    self.reductions += 1;
                }
                self.lr = next;
                self.bad_epochs = 0;
            }
        }
        (self.lr, improved)
    }
}

/// True when the best loss in `history` is more than `patience` epochs old.
/// Epochs are 1-based positions in `history`; ties keep the earliest best.
pub fn early_stop_check(history: &[f64], patience: usize) -> bool {
    if history.is_empty() {
        return false;
    }
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v < history[best] {
            best = i;
        }
    }
    history.len() - 1 - best > patience
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decreasing_losses_never_reduce() {
        let mut s = PlateauScheduler::new(1e-4, 0.1, 5, 1e-7);
        for i in 0..50 {
            let (lr, improved) = s.step(1.0 - 0.01 * i as f64);
            assert_eq!(lr, 1e-4);
            assert!(improved);
        }
    }

    #[test]
    fn constant_loss_six_epochs_reduces_once() {
        let mut s = PlateauScheduler::new(1e-4, 0.1, 5, 1e-7);
        let lrs: Vec<f64> = (0..6).map(|_| s.step(0.5).0).collect();
        assert_eq!(s.reductions, 1);
        assert_eq!(lrs[4], 1e-4);
        assert!((lrs[5] - 1e-5).abs() < 1e-20);
    }

    #[test]
    fn hand_traced_sequence() {
        let mut s = PlateauScheduler::new(1e-4, 0.1, 5, 1e-7);
        let losses = [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.85];
        let mut reduced_at = Vec::new();
        let mut lr = 1e-4;
        for (epoch, &l) in losses.iter().enumerate() {
            let (next, _) = s.step(l);
            if next < lr {
                reduced_at.push(epoch + 1);
            }
            lr = next;
        }
        assert_eq!(reduced_at, vec![7]);
        assert_eq!(s.bad_epochs, 0);
        assert_eq!(s.best, 0.85);
    }

    #[test]
    fn min_lr_floor() {
        let mut s = PlateauScheduler::new(1e-6, 0.1, 1, 1e-7);
        s.step(1.0);
        assert_eq!(s.step(1.0).0, 1e-7);
        assert_eq!(s.step(1.0).0, 1e-7);
        assert_eq!(s.reductions, 1);
    }

    #[test]
    fn early_stop_boundaries() {
        assert!(!early_stop_check(&[5.0, 4.0, 3.0, 2.0], 0));
        let mut h = vec![3.0, 2.0, 1.0];
        h.extend(std::iter::repeat(1.5).take(10));
        assert_eq!(h.len(), 13);
        assert!(!early_stop_check(&h, 10));
        h.push(1.5);
        assert!(early_stop_check(&h, 10));
    }
}
