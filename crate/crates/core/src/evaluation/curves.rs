use crate::training::EpochRecord;

/// Relative drop of the best validation loss after `pivot` against the best
/// up to and including `pivot`. Positive when training kept improving.
/// `None` if either side of the pivot has no epochs.
pub fn improvement_after(epochs: &[EpochRecord], pivot: usize) -> Option<f64> {
    let best = |keep: &dyn Fn(usize) -> bool| {
        epochs
            .iter()
            .filter(|e| keep(e.epoch))
            .map(|e| e.validation)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
    };
    let before = best(&|e| e <= pivot)?;
    let after = best(&|e| e > pivot)?;
    (before > 0.0).then(|| (before - after) / before)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: &[f64]) -> Vec<EpochRecord> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| EpochRecord {
                epoch: k + 1,
                loss_x: 0.0,
                loss_dt: 0.0,
                loss_f: 0.0,
                total: 0.0,
                validation: v,
                lr: 0.0,
                ms_per_epoch: 0.0,
            })
            .collect()
    }

    #[test]
    fn compares_best_on_each_side() {
        let c = curve(&[4.0, 2.0, 3.0, 1.5, 1.0]);
        assert_eq!(improvement_after(&c, 2), Some(0.5));
        assert_eq!(improvement_after(&c, 5), None);
        // A spike before the pivot does not count as the pivot value.
        let flat = curve(&[1.0, 9.0, 1.0, 1.0]);
        assert_eq!(improvement_after(&flat, 2), Some(0.0));
    }
}
