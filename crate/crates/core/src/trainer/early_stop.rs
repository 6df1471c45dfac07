/// Tracks the best validation loss; signals a stop after `patience`
/// consecutive epochs without strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    since_best: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> Verdict {
        self.epoch += 1;
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Verdict {
            improved,
            stop: self.since_best >= self.patience,
        }
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }

    /// 1-based epoch of the best loss; 0 before any observation.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Replays a loss sequence through [`EarlyStopping`]: returns the 1-based
/// epoch after which training stops (if it stops) and the best epoch.
pub fn early_stop_controller(val_losses: &[f64], patience: usize) -> (Option<usize>, usize) {
    let mut es = EarlyStopping::new(patience);
    for (i, &l) in val_losses.iter().enumerate() {
        if es.observe(l).stop {
            return (Some(i + 1), es.best_epoch());
        }
    }
    (None, es.best_epoch())
}
