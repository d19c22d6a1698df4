//! One-vs-rest classification rates against a ground truth.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Percentages for one class; `tp + fn_ == 100` and `fp + tn == 100`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRates {
    pub class: String,
    pub tp: f64,
    pub fn_: f64,
    pub fp: f64,
    pub tn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub classes: Vec<ClassRates>,
    pub average: ClassRates,
}

impl QualityReport {
    pub const CSV_HEADER: &'static str = "class,true_positive,false_negative,false_positive,true_negative";

    /// Rows cover the classes present in the ground truth. Every ground-truth
    /// point must have a prediction.
    pub fn compute(predictions: &[(u64, String)], truth: &[(u64, String)]) -> Result<Self> {
        let predicted: HashMap<u64, &str> = predictions.iter().map(|(id, c)| (*id, c.as_str())).collect();
        let pairs: Vec<(&str, &str)> = truth
            .iter()
            .map(|(id, actual)| {
                predicted
                    .get(id)
                    .map(|p| (actual.as_str(), *p))
                    .ok_or_else(|| Error::Config(format!("no prediction for point {id}")))
            })
            .collect::<Result<_>>()?;
        let labels: BTreeSet<&str> = pairs.iter().map(|p| p.0).collect();

        let classes: Vec<ClassRates> = labels
            .iter()
            .map(|&c| {
                let (mut tp, mut pos, mut fp, mut neg) = (0u64, 0u64, 0u64, 0u64);
                for &(actual, guess) in &pairs {
                    if actual == c {
                        pos += 1;
                        tp += u64::from(guess == c);
                    } else {
                        neg += 1;
                        fp += u64::from(guess == c);
                    }
                }
                let tp = pct(tp, pos);
                let fp = if neg == 0 { 0.0 } else { pct(fp, neg) };
                ClassRates {
                    class: c.to_string(),
                    tp,
                    fn_: 100.0 - tp,
                    fp,
                    tn: 100.0 - fp,
                }
            })
            .collect();

        let n = classes.len().max(1) as f64;
        let mean = |f: fn(&ClassRates) -> f64| classes.iter().map(f).sum::<f64>() / n;
        let average = ClassRates {
            class: "average".into(),
            tp: mean(|r| r.tp),
            fn_: mean(|r| r.fn_),
            fp: mean(|r| r.fp),
            tn: mean(|r| r.tn),
        };
        Ok(Self { classes, average })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in self.classes.iter().chain(std::iter::once(&self.average)) {
            let _ = writeln!(s, "{},{:.4},{:.4},{:.4},{:.4}", r.class, r.tp, r.fn_, r.fp, r.tn);
        }
        s
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 * 100.0 / whole as f64
    }
}
