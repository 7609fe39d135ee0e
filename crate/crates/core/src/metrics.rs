//! Continual-learning metrics over accuracy matrices.
//!
//! `R[i][j]` is the accuracy on task `j` after training task `i`, defined for
//! `j ≤ i`. On disk the matrix is a CSV with header
//! `after_task,acc_task_0,...,acc_task_{n-1}` and empty cells above the
//! diagonal; values use Rust's shortest round-trip float formatting so a
//! reload is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyMatrix {
    n_tasks: usize,
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new(n_tasks: usize) -> Self {
        Self {
            n_tasks,
            rows: Vec::new(),
        }
    }

    /// Builds a matrix from complete lower-triangular rows.
    pub fn from_rows(n_tasks: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new(n_tasks);
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn completed(&self) -> usize {
        self.rows.len()
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.n_tasks
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.rows.get(i)?.get(j).copied()
    }

    /// Appends the row for the next task; it must hold exactly one accuracy
    /// per task trained so far.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let i = self.rows.len();
        if i >= self.n_tasks {
            return Err(Error::InvalidArgument(format!("matrix already has {} rows", self.n_tasks)));
        }
        if row.len() != i + 1 {
            return Err(Error::DimensionMismatch {
                expected: i + 1,
                actual: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("after_task");
        for j in 0..self.n_tasks {
            write!(out, ",acc_task_{j}").unwrap();
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            write!(out, "{i}").unwrap();
            for j in 0..self.n_tasks {
                out.push(',');
                if let Some(v) = row.get(j) {
                    write!(out, "{v}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty file")?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"after_task") {
            return Err("header must start with after_task".into());
        }
        for (j, c) in cols[1..].iter().enumerate() {
            if *c != format!("acc_task_{j}") {
                return Err(format!("unexpected column {c:?}"));
            }
        }
        let mut m = Self::new(cols.len() - 1);
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != cols.len() {
                return Err(format!("row {i}: expected {} cells", cols.len()));
            }
            if cells[0] != i.to_string() {
                return Err(format!("row {i}: after_task is {:?}", cells[0]));
            }
            let mut row = Vec::new();
            for (j, cell) in cells[1..].iter().enumerate() {
                match (j <= i, cell.is_empty()) {
                    (true, false) => row.push(cell.parse::<f64>().map_err(|e| format!("row {i}: {e}"))?),
                    (false, true) => {}
                    (true, true) => return Err(format!("row {i}: missing accuracy for task {j}")),
                    (false, false) => return Err(format!("row {i}: value above the diagonal")),
                }
            }
            m.push_row(row).map_err(|e| format!("row {i}: {e}"))?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|message| Error::Corrupt {
            path: path.to_path_buf(),
            message,
        })
    }
}

/// `BWF_i = mean over j < i of (R[j][j] − R[i][j])`; 0 for `i = 0`.
pub fn backward_forgetting(r: &AccuracyMatrix, i: usize) -> Result<f64> {
    if i >= r.completed() {
        return Err(Error::InvalidArgument(format!(
            "task {i} not trained ({} rows)",
            r.completed()
        )));
    }
    if i == 0 {
        return Ok(0.0);
    }
    let sum: f64 = (0..i).map(|j| r.rows[j][j] - r.rows[i][j]).sum();
    Ok(sum / i as f64)
}

/// Forgetting after the last task.
pub fn final_backward_forgetting(r: &AccuracyMatrix) -> Result<f64> {
    complete(r)?;
    backward_forgetting(r, r.n_tasks - 1)
}

/// Mean of the last row of a complete matrix.
pub fn final_average_accuracy(r: &AccuracyMatrix) -> Result<f64> {
    complete(r)?;
    Ok(mean(&r.rows[r.n_tasks - 1]))
}

/// Mean of every completed row.
pub fn accuracy_curve(r: &AccuracyMatrix) -> Vec<f64> {
    r.rows.iter().map(|row| mean(row)).collect()
}

fn complete(r: &AccuracyMatrix) -> Result<()> {
    if r.n_tasks == 0 || !r.is_complete() {
        return Err(Error::InvalidArgument(format!(
            "accuracy matrix incomplete: {} of {} rows",
            r.completed(),
            r.n_tasks
        )));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class_id: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Per-class correct fractions from `(true, predicted)` pairs, sorted by
/// ascending accuracy (then class id). Classes in `expected` that received no
/// predictions are returned separately.
pub fn per_class_report(
    predictions: &[(usize, usize)],
    expected: &[usize],
) -> (Vec<ClassAccuracy>, Vec<usize>) {
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for &(truth, pred) in predictions {
        let e = counts.entry(truth).or_default();
        e.1 += 1;
        if truth == pred {
            e.0 += 1;
        }
    }
    let mut report: Vec<ClassAccuracy> = counts
        .into_iter()
        .map(|(class_id, (correct, total))| ClassAccuracy {
            class_id,
            correct,
            total,
            accuracy: correct as f64 / total as f64,
        })
        .collect();
    report.sort_by(|a, b| a.accuracy.total_cmp(&b.accuracy).then(a.class_id.cmp(&b.class_id)));
    let mut missing: Vec<usize> = expected
        .iter()
        .copied()
        .filter(|c| !report.iter().any(|r| r.class_id == *c))
        .collect();
    missing.sort_unstable();
    missing.dedup();
    (report, missing)
}

/// Summary written next to the accuracy matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub acc: f64,
    pub bwf: f64,
    pub curve: Vec<f64>,
    pub per_class: Vec<ClassAccuracy>,
}

impl MetricsReport {
    pub fn from_matrix(r: &AccuracyMatrix, per_class: Vec<ClassAccuracy>) -> Result<Self> {
        Ok(Self {
            acc: final_average_accuracy(r)?,
            bwf: final_backward_forgetting(r)?,
            curve: accuracy_curve(r),
            per_class,
        })
    }
}

/// A fraction rendered as a percentage with two decimals, e.g. `0.5 → "50.00"`.
pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_task() -> AccuracyMatrix {
        AccuracyMatrix::from_rows(3, vec![vec![0.9], vec![0.8, 0.7], vec![0.6, 0.5, 0.4]]).unwrap()
    }

    #[test]
    fn hand_values() {
        let r = three_task();
        assert!((final_backward_forgetting(&r).unwrap() - 0.25).abs() < 1e-15);
        assert!((final_average_accuracy(&r).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(backward_forgetting(&r, 0).unwrap(), 0.0);
        let two = AccuracyMatrix::from_rows(2, vec![vec![0.8], vec![0.6, 0.7]]).unwrap();
        let curve = accuracy_curve(&two);
        assert_eq!(curve[0], 0.8);
        assert!((curve[1] - 0.65).abs() < 1e-15);
        let single = AccuracyMatrix::from_rows(1, vec![vec![0.3]]).unwrap();
        assert_eq!(final_average_accuracy(&single).unwrap(), 0.3);
        assert_eq!(final_backward_forgetting(&single).unwrap(), 0.0);
    }

    #[test]
    fn backward_transfer_is_negative() {
        let r = AccuracyMatrix::from_rows(2, vec![vec![0.5], vec![0.7, 0.9]]).unwrap();
        assert!(final_backward_forgetting(&r).unwrap() < 0.0);
    }

    #[test]
    fn incomplete_and_invalid() {
        let mut r = AccuracyMatrix::new(3);
        r.push_row(vec![0.5]).unwrap();
        assert!(final_average_accuracy(&r).is_err());
        assert!(r.push_row(vec![0.5]).is_err());
        assert!(r.push_row(vec![0.5, 1.5]).is_err());
        assert_eq!(accuracy_curve(&r), vec![0.5]);
    }

    #[test]
    fn csv_layout() {
        let csv = three_task().to_csv();
        assert_eq!(
            csv,
            "after_task,acc_task_0,acc_task_1,acc_task_2\n0,0.9,,\n1,0.8,0.7,\n2,0.6,0.5,0.4\n"
        );
        assert_eq!(AccuracyMatrix::parse_csv(&csv).unwrap(), three_task());
        assert!(AccuracyMatrix::parse_csv("after_task,acc_task_0\n0,\n").is_err());
        assert!(AccuracyMatrix::parse_csv("after_task,acc_task_0,acc_task_1\n0,0.1,0.2\n").is_err());
    }

    #[test]
    fn per_class_counts() {
        let preds = [(0, 0), (0, 0), (0, 0), (0, 1), (1, 1), (1, 1)];
        let (report, missing) = per_class_report(&preds, &[0, 1, 2]);
        assert_eq!(report[0].class_id, 0);
        assert_eq!(report[0].accuracy, 0.75);
        assert_eq!(report[1].accuracy, 1.0);
        assert_eq!(missing, vec![2]);
        let weighted: f64 = report.iter().map(|c| c.accuracy * c.total as f64).sum::<f64>() / 6.0;
        assert!((weighted - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn percent_has_two_decimals() {
        assert_eq!(percent(0.5), "50.00");
        assert_eq!(percent(0.12345), "12.35");
    }

    fn matrix() -> impl Strategy<Value = AccuracyMatrix> {
        (1usize..12).prop_flat_map(|n| {
            prop::collection::vec(0.0f64..=1.0, n * (n + 1) / 2).prop_map(move |v| {
                let mut it = v.into_iter();
                let rows = (0..n).map(|i| it.by_ref().take(i + 1).collect()).collect();
                AccuracyMatrix::from_rows(n, rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(r in matrix()) {
            prop_assert_eq!(AccuracyMatrix::parse_csv(&r.to_csv()).unwrap(), r);
        }

        #[test]
        fn forgetting_ignores_constant_shift(r in matrix(), c in -0.5f64..0.5) {
            // shifted values may leave [0, 1], so compare on raw rows
            let n = r.n_tasks();
            let raw = |rows: &[Vec<f64>]| {
                if n == 1 { return 0.0; }
                (0..n - 1).map(|j| rows[j][j] - rows[n - 1][j]).sum::<f64>() / (n - 1) as f64
            };
            let shifted: Vec<Vec<f64>> = r.rows().iter().map(|row| row.iter().map(|v| v + c).collect()).collect();
            prop_assert!((raw(&shifted) - final_backward_forgetting(&r).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn accuracy_is_monotone_in_last_row(r in matrix(), j in 0usize..12, bump in 0.0f64..1.0) {
            let n = r.n_tasks();
            let j = j % n;
            let mut rows = r.rows().to_vec();
            rows[n - 1][j] = (rows[n - 1][j] + bump).min(1.0);
            let higher = AccuracyMatrix::from_rows(n, rows).unwrap();
            prop_assert!(final_average_accuracy(&higher).unwrap() >= final_average_accuracy(&r).unwrap());
        }
    }
}
