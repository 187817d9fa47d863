/// Dev-set early stopping. An epoch counts as an improvement when dev
/// accuracy rises, or holds while dev loss falls.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best_acc: f64,
    best_loss: f64,
    stale: usize,
    best_epoch: usize,
    best_params: Option<Vec<f64>>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_acc: f64::NEG_INFINITY,
            best_loss: f64::INFINITY,
            stale: 0,
            best_epoch: 0,
            best_params: None,
        }
    }

    /// Records one epoch; returns `true` once training should stop.
    pub fn observe(&mut self, epoch: usize, acc: f64, loss: f64, params: &[f64]) -> bool {
        if acc > self.best_acc || (acc == self.best_acc && loss < self.best_loss) {
            self.best_acc = acc;
            self.best_loss = loss;
            self.best_epoch = epoch;
            self.best_params = Some(params.to_vec());
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            self.stale >= self.patience
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn into_best(self) -> Option<Vec<f64>> {
        self.best_params
    }
}
