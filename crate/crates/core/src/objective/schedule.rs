use serde::{Deserialize, Serialize};

/// What the scheduler decided after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauAction {
    Continue,
    Reduced,
    Stop,
}

/// Cuts the learning rate when validation loss stops improving.
///
/// After `max_reductions` cuts, the next plateau ends training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub max_reductions: usize,
    pub reductions: usize,
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_delta: f64, max_reductions: usize) -> Self {
        Self {
            lr,
            factor,
            patience,
            min_delta,
            max_reductions,
            reductions: 0,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> PlateauAction {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best - self.min_delta,
        };
        if improved {
            self.best = Some(val_loss);
            self.bad_epochs = 0;
            return PlateauAction::Continue;
        }
        self.bad_epochs += 1;
        if self.bad_epochs < self.patience {
            return PlateauAction::Continue;
        }
        self.bad_epochs = 0;
        if self.reductions == self.max_reductions {
            return PlateauAction::Stop;
        }
        self.lr *= self.factor;
        self.reductions += 1;
        PlateauAction::Reduced
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_plateaus_give_three_reductions() {
        let mut s = PlateauScheduler::new(0.1, 0.1, 3, 1e-4, 3);
        let mut lrs = vec![s.lr];
        let mut stopped_at = None;
        for epoch in 0..100 {
            match s.observe(1.0) {
                PlateauAction::Reduced => lrs.push(s.lr),
                PlateauAction::Stop => {
                    stopped_at = Some(epoch);
                    break;
                }
                PlateauAction::Continue => {}
            }
        }
        let want = [0.1, 0.01, 0.001, 0.0001];
        assert_eq!(lrs.len(), 4);
        for (a, b) in lrs.iter().zip(want) {
            assert!((a - b).abs() < 1e-15 * b.max(1.0));
        }
        assert_eq!(s.reductions, 3);
        // first epoch sets the best, then four plateaus of three epochs
        assert_eq!(stopped_at, Some(12));
    }

    #[test]
    fn improvement_resets_patience() {
        let mut s = PlateauScheduler::new(0.1, 0.1, 2, 1e-4, 3);
        assert_eq!(s.observe(1.0), PlateauAction::Continue);
        assert_eq!(s.observe(1.0), PlateauAction::Continue);
        assert_eq!(s.observe(0.5), PlateauAction::Continue);
        assert_eq!(s.observe(0.49995), PlateauAction::Continue);
        assert_eq!(s.observe(0.5), PlateauAction::Reduced);
        assert_eq!(s.reductions, 1);
    }
}
