use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{Adam, LossMode, LossWeightTable};
use crate::dataset::{CollocationGrid, LabelledSet};
use crate::error::{Error, Result};
use crate::mlp::{
    init_params, loss_gradients, mode_loss_terms, Checkpoint, NetworkConfig, Normalization,
    PreparedBatch,
};
use crate::power_system::ReducedSystem;

/// Collocation count used for `k` when the mode has no collocation points.
pub const DEFAULT_N_F: usize = 1025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub mode: LossMode,
    pub max_epochs: usize,
    pub lr_init: f64,
    /// Learning rate at the final epoch as a fraction of `lr_init`; the
    /// decay in between is exponential.
    pub lr_final_ratio: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            mode: LossMode::Pinn,
            max_epochs: 1000,
            lr_init: 0.025,
            lr_final_ratio: 10f64.powf(-1.5),
            patience: 200,
            seed: 0,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::Config(format!("lr_init must be positive, got {}", self.lr_init)));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "lr_final_ratio must be in (0, 1], got {}",
                self.lr_final_ratio
            )));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate of 1-based `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let frac = if self.max_epochs > 1 {
            (epoch - 1) as f64 / (self.max_epochs - 1) as f64
        } else {
            1.0
        };
        self.lr_init * self.lr_final_ratio.powf(frac)
    }
}

/// One CSV row of the training report. Loss columns are weighted sums over
/// states; `validation` is the weighted data loss on the validation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_x: f64,
    pub loss_dt: f64,
    pub loss_f: f64,
    pub total: f64,
    pub validation: f64,
    pub lr: f64,
    /// Gradient, update and validation pass.
    pub ms_per_epoch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Diverged { term: String, state: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: LossMode,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned checkpoint; 0 is the initialisation.
    pub best_epoch: usize,
    pub best_validation: f64,
    pub stop_reason: StopReason,
}

impl TrainReport {
    pub fn validation_series(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.validation).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        for e in &self.epochs {
            w.serialize(e).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Epoch rows of a CSV written by [`TrainReport::write_csv`].
pub fn read_epochs_csv(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e.to_string())))
        .collect()
}

/// Training, collocation and validation inputs of one run.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub data: &'a LabelledSet,
    pub collocation: &'a CollocationGrid,
    pub validation: &'a LabelledSet,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters with the lowest validation loss seen.
    pub best: Checkpoint,
    pub weights: LossWeightTable,
}

/// Loss weights of a run: `k` uses the actual collocation count in PINN
/// mode and [`DEFAULT_N_F`] otherwise.
pub fn weights_for(mode: LossMode, n_x: usize, n_f: usize, sys: &ReducedSystem) -> LossWeightTable {
    let n_f = if mode == LossMode::Pinn { n_f } else { DEFAULT_N_F };
    LossWeightTable::two_area(n_x, n_f, sys.n_gen(), sys.n_load())
}

/// Adam on the mode's weighted loss with exponential learning
/// rate decay and early stopping on the validation loss. `sys` is the
/// post-trip system whose vector field enters the derivative terms.
pub fn train(
    settings: &TrainSettings,
    net: &NetworkConfig,
    inputs: TrainingData<'_>,
    sys: &ReducedSystem,
) -> Result<TrainOutcome> {
    let weights = weights_for(settings.mode, inputs.data.len(), inputs.collocation.n_f(), sys);
    train_with_weights(settings, net, inputs, sys, weights)
}

/// As [`train`] with an explicit weight table.
pub fn train_with_weights(
    settings: &TrainSettings,
    net: &NetworkConfig,
    inputs: TrainingData<'_>,
    sys: &ReducedSystem,
    weights: LossWeightTable,
) -> Result<TrainOutcome> {
    settings.validate()?;
    net.validate()?;

    if net.output_dim != sys.state_dim() || net.input_dim != 2 {
        return Err(Error::Shape(format!(
            "network maps {} -> {}, the system needs 2 -> {}",
            net.input_dim,
            net.output_dim,
            sys.state_dim()
        )));
    }
    let norm = Normalization::from_labels(&inputs.data.x);
    let batch = PreparedBatch::new(inputs.data, &inputs.collocation.points, &norm, sys)?;
    let val_batch = PreparedBatch::new(inputs.validation, &[], &norm, sys)?;
    let validation_loss = |p: &_| -> Result<f64> {
        let t = mode_loss_terms(p, &norm, &val_batch, LossMode::Nn, &weights, sys)?;
        Ok(t.weighted(&weights).0)
    };

    let mut params = init_params(net, settings.seed)?;
    let mut opt = Adam::new(&params);
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_validation = validation_loss(&params)?;
    let mut epochs = Vec::with_capacity(settings.max_epochs);
    let mut stop_reason = StopReason::MaxEpochs;
    let w_mode = weights.for_mode(settings.mode);

    for epoch in 1..=settings.max_epochs {
        let started = Instant::now();
        let lr = settings.learning_rate(epoch);
        let step = loss_gradients(&params, &norm, &batch, settings.mode, &weights, sys)
            .and_then(|(terms, grads)| {
                opt.step(&mut params, &grads, lr);
                Ok((terms, validation_loss(&params)?))
            });
        let (terms, validation) = match step {
            Ok(r) => r,
            Err(Error::Divergence { term, state }) => {
                stop_reason = StopReason::Diverged {
                    term: term.into(),
                    state,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        let (loss_x, loss_dt, loss_f) = terms.weighted(&w_mode);
        let rec = EpochRecord {
            epoch,
            loss_x,
            loss_dt,
            loss_f,
            total: loss_x + loss_dt + loss_f,
            validation,
            lr,
            ms_per_epoch: started.elapsed().as_secs_f64() * 1e3,
        };
        debug!("{} epoch {epoch}: total {:.6e} validation {:.6e}", settings.mode, rec.total, validation);
        epochs.push(rec);
        if validation < best_validation {
            best_validation = validation;
            best_epoch = epoch;
            best = params.clone();
        } else if epoch - best_epoch >= settings.patience {
            stop_reason = StopReason::Patience;
            break;
        }
    }
    info!(
        "{} seed {}: {} epochs, best validation {:.6e} at epoch {best_epoch} ({stop_reason:?})",
        settings.mode,
        settings.seed,
        epochs.len(),
        best_validation
    );
    Ok(TrainOutcome {
        report: TrainReport {
            mode: settings.mode,
            seed: settings.seed,
            epochs,
            best_epoch,
            best_validation,
            stop_reason,
        },
        best: Checkpoint {
            config: *net,
            normalization: norm,
            seed: settings.seed,
            epoch: best_epoch,
            params: best,
        },
        weights,
    })
}
