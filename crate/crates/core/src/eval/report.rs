use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, argmax, confusion_proportional, roc_auc_ovr};
use super::EvalError;
use crate::nn::History;

pub const AUC_METHOD: &str = "macro one-vs-rest, Mann-Whitney rank statistic with average ranks for ties";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub split: String,
    pub n_samples: usize,
    pub accuracy: f64,
    pub auc_macro: f64,
    pub auc_per_class: Vec<Option<f64>>,
    pub auc_method: String,
    /// classes left out of the macro AUC
    pub degenerate_classes: Vec<usize>,
    pub class_names: Vec<String>,
    /// row-normalized, `confusion[true][predicted]`
    pub confusion: Vec<Vec<f64>>,
    pub support: Vec<u64>,
    pub zero_support_rows: Vec<usize>,
}

impl EvalReport {
    /// Build a report from per-sample probability rows.
    pub fn from_probabilities(
        model: impl Into<String>,
        split: impl Into<String>,
        probabilities: &[Vec<f64>],
        labels: &[usize],
        class_names: Vec<String>,
    ) -> Result<Self, EvalError> {
        let predictions: Vec<usize> = probabilities.iter().map(|r| argmax(r)).collect();
        let acc = accuracy(&predictions, labels)?;
        let auc = roc_auc_ovr(probabilities, labels)?;
        let conf = confusion_proportional(&predictions, labels, class_names.len())?;
        Ok(Self {
            model: model.into(),
            split: split.into(),
            n_samples: labels.len(),
            accuracy: acc,
            auc_macro: auc.macro_auc,
            auc_per_class: auc.per_class,
            auc_method: AUC_METHOD.into(),
            degenerate_classes: auc.degenerate,
            class_names,
            confusion: conf.matrix,
            support: conf.support,
            zero_support_rows: conf.zero_support,
        })
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for n in &self.class_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            s.push_str(name);
            for &v in row {
                s.push(',');
                s.push_str(&fmt_sig9(v));
            }
            s.push('\n');
        }
        s
    }
}

/// Nine significant digits in scientific form, e.g. `1.23456789e-3`.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

pub fn log_curves(history: &History) -> Result<Vec<CurveRow>, EvalError> {
    let n = history.train_loss.len();
    for len in [history.train_accuracy.len(), history.val_loss.len(), history.val_accuracy.len(), history.stopped_epoch] {
        if len != n {
            return Err(EvalError::LengthMismatch { left: n, right: len });
        }
    }
    Ok((0..n)
        .map(|i| CurveRow {
            epoch: i + 1,
            train_loss: history.train_loss[i],
            train_acc: history.train_accuracy[i],
            val_loss: history.val_loss[i],
            val_acc: history.val_accuracy[i],
        })
        .collect())
}

pub const CURVE_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.epoch,
            fmt_sig9(r.train_loss),
            fmt_sig9(r.train_acc),
            fmt_sig9(r.val_loss),
            fmt_sig9(r.val_acc)
        );
    }
    s
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<CurveRow>, EvalError> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(EvalError::Schema("missing curve header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(EvalError::Schema(format!("bad curve row: {l}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| EvalError::Schema(format!("bad number {s}")));
            Ok(CurveRow {
                epoch: f[0].parse().map_err(|_| EvalError::Schema(format!("bad epoch {}", f[0])))?,
                train_loss: num(f[1])?,
                train_acc: num(f[2])?,
                val_loss: num(f[3])?,
                val_acc: num(f[4])?,
            })
        })
        .collect()
}

pub const HEATMAP_CELL: usize = 32;

/// Binary PPM (P6) of a row-normalized matrix: each cell a 32x32 gray block,
/// intensity `round(255 * value)`.
pub fn confusion_ppm(matrix: &[Vec<f64>]) -> Vec<u8> {
    let k = matrix.len();
    let side = k * HEATMAP_CELL;
    let mut out = format!("P6\n{side} {side}\n255\n").into_bytes();
    out.reserve(side * side * 3);
    for row in matrix {
        let line: Vec<u8> = row
            .iter()
            .flat_map(|&v| {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                std::iter::repeat_n(g, HEATMAP_CELL * 3)
            })
            .collect();
        for _ in 0..HEATMAP_CELL {
            out.extend_from_slice(&line);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(n: usize) -> History {
        History {
            train_loss: (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect(),
            train_accuracy: (0..n).map(|i| i as f64 / 7.0).collect(),
            val_loss: (0..n).map(|i| std::f64::consts::PI * i as f64).collect(),
            val_accuracy: vec![0.123456789123; n],
            stopped_epoch: n,
            best_epoch: n,
        }
    }

    #[test]
    fn curves_round_trip_at_nine_digits() {
        let rows = log_curves(&history(5)).unwrap();
        assert_eq!(rows.len(), 5);
        let csv = curves_csv(&rows);
        let back = parse_curves_csv(&csv).unwrap();
        assert_eq!(back.len(), 5);
        assert_eq!(curves_csv(&back), csv);
        for (a, b) in rows.iter().zip(&back) {
            assert!(((a.val_acc - b.val_acc) / a.val_acc).abs() < 5e-9);
        }
    }

    #[test]
    fn curve_length_mismatch() {
        let mut h = history(3);
        h.val_loss.pop();
        assert!(matches!(log_curves(&h), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn ppm_layout() {
        let img = confusion_ppm(&[vec![1.0, 0.0], vec![0.25, 0.75]]);
        let header = b"P6\n64 64\n255\n";
        assert_eq!(&img[..header.len()], header);
        let px = &img[header.len()..];
        assert_eq!(px.len(), 64 * 64 * 3);
        assert_eq!(px[0], 255);
        assert_eq!(px[32 * 3], 0);
        assert_eq!(px[(40 * 64 + 5) * 3], 64);
        assert_eq!(px[(63 * 64 + 63) * 3], 191);
    }

    #[test]
    fn report_from_probabilities() {
        let probs = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4], vec![0.3, 0.7]];
        let r = EvalReport::from_probabilities("m", "test", &probs, &[0, 1, 1, 1], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion, vec![vec![1.0, 0.0], vec![1.0 / 3.0, 2.0 / 3.0]]);
        assert_eq!(r.auc_per_class[0], Some(1.0));
        assert!(r.confusion_csv().starts_with("true\\predicted,a,b\na,1.00000000e0,0.00000000e0\n"));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    }
}
