//! Triangular cyclic learning rate and early stopping.

/// Triangular cyclic schedule: the rate climbs linearly from `base_lr` to
/// `max_lr` over `step_size` optimizer steps, descends back over the next
/// `step_size`, and repeats. No cyclical momentum. The cycle position is
/// derived with integer arithmetic, so `lr(step) == lr(step + 2*step_size)`
/// holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicLr {
    pub base_lr: f64,
    pub max_lr: f64,
    pub step_size: usize,
}

impl CyclicLr {
    pub fn new(base_lr: f64, max_lr: f64, step_size: usize) -> Self {
        CyclicLr {
            base_lr,
            max_lr,
            step_size: step_size.max(1),
        }
    }

    pub fn lr(&self, global_step: usize) -> f64 {
        let period = 2 * self.step_size;
        let pos = (global_step % period) as f64 / self.step_size as f64;
        let ramp = 1.0 - (pos - 1.0).abs();
        self.base_lr + (self.max_lr - self.base_lr) * ramp
    }
}

/// One early-stopping transition: an improvement (strictly below the best
/// by more than 1e-12) resets the stale counter; otherwise it grows, and
/// training stops once it reaches `patience`.
pub fn early_stop_update(
    best: f64,
    current_val_loss: f64,
    stale_epochs: usize,
    patience: usize,
) -> (bool, f64, usize) {
    if current_val_loss < best - 1e-12 {
        (false, current_val_loss, 0)
    } else {
        let stale = stale_epochs + 1;
        (stale >= patience, best, stale)
    }
}

/// Stateful wrapper over [`early_stop_update`].
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub best: f64,
    pub stale: usize,
    pub patience: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            best: f64::INFINITY,
            stale: 0,
            patience: patience.max(1),
        }
    }

    /// Feeds one validation loss; returns `(stop, improved)`.
    pub fn update(&mut self, val_loss: f64) -> (bool, bool) {
        let improved = val_loss < self.best - 1e-12;
        let (stop, best, stale) = early_stop_update(self.best, val_loss, self.stale, self.patience);
        self.best = best;
        self.stale = stale;
        (stop, improved)
    }
}
