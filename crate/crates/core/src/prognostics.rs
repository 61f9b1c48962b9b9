//! Correlations between markers and OOD accuracy, the standard-error gap
//! rule for comparing two models, and scoring of its predictions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::markers::{MarkerReport, MarkerValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    pub r: f64,
    /// Two-sided p-value of the t statistic with `n − 2` degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Pearson> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} vs {} values",
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 points, got {n}"
        )));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantSeries);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(Pearson { r, p_value, n })
}

/// Significance stars: `p ≤ 0.05` one, `≤ 0.01` two, `≤ 0.001` three, `≤ 0.0001` four.
pub fn stars(p: f64) -> u8 {
    [0.05, 0.01, 0.001, 0.0001]
        .iter()
        .filter(|&&t| p <= t)
        .count() as u8
}

/// One training run: its ID markers and its OOD accuracy per setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub markers: BTreeMap<String, MarkerValue>,
    pub ood_accuracies: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn new(
        run_id: impl Into<String>,
        report: &MarkerReport,
        ood_accuracies: BTreeMap<String, f64>,
    ) -> Self {
        RunRecord {
            run_id: run_id.into(),
            markers: report.markers.clone(),
            ood_accuracies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub marker: String,
    pub setting: String,
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub stars: u8,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub cells: Vec<CorrelationCell>,
    pub warnings: Vec<String>,
}

/// One cell per (marker, OOD setting) pair with at least three runs carrying
/// both values. Runs lacking either value are left out of that cell and
/// reported; cells with fewer than three runs or a constant series are
/// omitted with a warning.
pub fn build_table(records: &[RunRecord]) -> CorrelationTable {
    let markers: BTreeSet<&String> = records.iter().flat_map(|r| r.markers.keys()).collect();
    let settings: BTreeSet<&String> = records
        .iter()
        .flat_map(|r| r.ood_accuracies.keys())
        .collect();
    let mut table = CorrelationTable::default();
    for setting in &settings {
        for marker in &markers {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for rec in records {
                if let (Some(m), Some(&acc)) =
                    (rec.markers.get(*marker), rec.ood_accuracies.get(*setting))
                {
                    if m.value.is_finite() && acc.is_finite() {
                        xs.push(m.value);
                        ys.push(acc);
                    }
                }
            }
            let missing = records.len() - xs.len();
            if missing > 0 {
                table.warnings.push(format!(
                    "{marker} / {setting}: {missing} run(s) without both values"
                ));
            }
            match pearson(&xs, &ys) {
                Ok(c) => table.cells.push(CorrelationCell {
                    marker: (*marker).clone(),
                    setting: (*setting).clone(),
                    r: c.r,
                    p_value: c.p_value,
                    n: c.n,
                    stars: stars(c.p_value),
                }),
                Err(e) => table
                    .warnings
                    .push(format!("{marker} / {setting}: cell omitted, {e}")),
            }
        }
    }
    table
}

impl CorrelationTable {
    pub fn get(&self, marker: &str, setting: &str) -> Option<&CorrelationCell> {
        self.cells
            .iter()
            .find(|c| c.marker == marker && c.setting == setting)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("marker,setting,r,p,stars,n\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{},{}\n",
                csv_field(&c.marker),
                csv_field(&c.setting),
                c.r,
                c.p_value,
                c.stars,
                c.n
            ));
        }
        out
    }

    /// Rows are settings and columns markers; missing cells are `null`.
    pub fn heatmap(&self) -> Heatmap {
        let rows: Vec<String> = self
            .cells
            .iter()
            .map(|c| c.setting.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let cols: Vec<String> = self
            .cells
            .iter()
            .map(|c| c.marker.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let grid = |f: &dyn Fn(&CorrelationCell) -> f64| -> Vec<Vec<Option<f64>>> {
            rows.iter()
                .map(|s| cols.iter().map(|m| self.get(m, s).map(f)).collect())
                .collect()
        };
        let r = grid(&|c| c.r);
        let p = grid(&|c| c.p_value);
        let stars = rows
            .iter()
            .map(|s| {
                cols.iter()
                    .map(|m| self.get(m, s).map(|c| c.stars))
                    .collect()
            })
            .collect();
        Heatmap {
            rows,
            cols,
            r,
            p,
            stars,
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub r: Vec<Vec<Option<f64>>>,
    pub p: Vec<Vec<Option<f64>>>,
    pub stars: Vec<Vec<Option<u8>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Direction used when none is configured: capacity dimension and utility
/// are higher-better, NC1 lower-better. Other markers have no default.
pub fn default_direction(marker: &str) -> Option<Direction> {
    match marker {
        "d_eff" | "psi_eff" => Some(Direction::HigherBetter),
        "nc1" => Some(Direction::LowerBetter),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    A,
    B,
    NoVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub marker: String,
    pub direction: Direction,
    /// `m(A) − m(B)`.
    pub delta: f64,
    pub se_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub gaps: Vec<Gap>,
}

fn lookup(markers: &BTreeMap<String, MarkerValue>, name: &str) -> Result<(f64, f64)> {
    let m = markers
        .get(name)
        .ok_or_else(|| Error::MissingMarker(name.to_string()))?;
    let se = m
        .stderr
        .ok_or_else(|| Error::MissingStderr(name.to_string()))?;
    Ok((m.value, se))
}

/// A wins when every rule's gap favors A by more than the summed standard
/// errors; B by the mirrored condition; otherwise no verdict.
pub fn predict_with(
    a: &BTreeMap<String, MarkerValue>,
    b: &BTreeMap<String, MarkerValue>,
    rules: &[(String, Direction)],
) -> Result<Verdict> {
    if rules.is_empty() {
        return Err(Error::InvalidArgument("no decision markers".into()));
    }
    let mut gaps = Vec::with_capacity(rules.len());
    for (name, direction) in rules {
        let (va, sa) = lookup(a, name)?;
        let (vb, sb) = lookup(b, name)?;
        gaps.push(Gap {
            marker: name.clone(),
            direction: *direction,
            delta: va - vb,
            se_sum: sa + sb,
        });
    }
    let favored = |g: &Gap| match g.direction {
        Direction::HigherBetter => g.delta,
        Direction::LowerBetter => -g.delta,
    };
    let outcome = if gaps.iter().all(|g| favored(g) > g.se_sum) {
        Outcome::A
    } else if gaps.iter().all(|g| -favored(g) > g.se_sum) {
        Outcome::B
    } else {
        Outcome::NoVerdict
    };
    Ok(Verdict { outcome, gaps })
}

/// The default rule on `d_eff` and `psi_eff`, both higher-better.
pub fn predict_pair(a: &MarkerReport, b: &MarkerReport) -> Result<Verdict> {
    let rules = [
        ("d_eff".to_string(), Direction::HigherBetter),
        ("psi_eff".to_string(), Direction::HigherBetter),
    ];
    predict_with(&a.markers, &b.markers, &rules)
}

pub fn single_marker_predict(
    a: &BTreeMap<String, MarkerValue>,
    b: &BTreeMap<String, MarkerValue>,
    marker: &str,
    direction: Direction,
) -> Result<Verdict> {
    predict_with(a, b, &[(marker.to_string(), direction)])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    /// Wrong predictions, ties included.
    pub incorrect: usize,
    pub ties: usize,
    pub total: usize,
    pub no_verdict: usize,
    /// `correct / total`; absent when no pair had a verdict.
    pub accuracy: Option<f64>,
}

/// OOD accuracies of the two models of one comparison on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub model: String,
    pub dataset: String,
    pub acc_a: f64,
    pub acc_b: f64,
}

/// Scores verdicts (keyed by model) against OOD accuracies. A prediction is
/// correct when the predicted side's accuracy is strictly higher; equal
/// accuracies count as incorrect and are also tallied as ties.
pub fn score_predictions(
    verdicts: &BTreeMap<String, Verdict>,
    ood: &[PairOutcome],
) -> Result<Score> {
    let mut s = Score::default();
    for o in ood {
        let v = verdicts
            .get(&o.model)
            .ok_or_else(|| Error::InvalidArgument(format!("no verdict for model {}", o.model)))?;
        let (win, lose) = match v.outcome {
            Outcome::A => (o.acc_a, o.acc_b),
            Outcome::B => (o.acc_b, o.acc_a),
            Outcome::NoVerdict => {
                s.no_verdict += 1;
                continue;
            }
        };
        s.total += 1;
        if win > lose {
            s.correct += 1;
        } else {
            s.incorrect += 1;
            if win == lose {
                s.ties += 1;
            }
        }
    }
    s.accuracy = (s.total > 0).then(|| s.correct as f64 / s.total as f64);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(value: f64, se: f64) -> MarkerValue {
        MarkerValue {
            value,
            stderr: Some(se),
        }
    }

    fn set(d: (f64, f64), p: (f64, f64)) -> BTreeMap<String, MarkerValue> {
        [
            ("d_eff".to_string(), mv(d.0, d.1)),
            ("psi_eff".to_string(), mv(p.0, p.1)),
        ]
        .into()
    }

    fn default_rules() -> Vec<(String, Direction)> {
        vec![
            ("d_eff".into(), Direction::HigherBetter),
            ("psi_eff".into(), Direction::HigherBetter),
        ]
    }

    #[test]
    fn perfect_lines() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = pearson(&x, &up).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert_eq!(c.p_value, 0.0);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 5.0, 4.0]).unwrap().r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_rejected() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::ConstantSeries)
        ));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn star_boundaries() {
        assert_eq!(stars(0.05), 1);
        assert_eq!(stars(0.0500001), 0);
        assert_eq!(stars(0.01), 2);
        assert_eq!(stars(0.001), 3);
        assert_eq!(stars(0.0001), 4);
        assert_eq!(stars(0.0), 4);
    }

    #[test]
    fn pair_rule_cases() {
        let a = set((10.0, 0.1), (0.5, 0.01));
        let b = set((8.0, 0.1), (0.4, 0.01));
        assert_eq!(
            predict_with(&a, &b, &default_rules()).unwrap().outcome,
            Outcome::A
        );
        assert_eq!(
            predict_with(&b, &a, &default_rules()).unwrap().outcome,
            Outcome::B
        );
        let opposite = set((8.0, 0.1), (0.6, 0.01));
        assert_eq!(
            predict_with(&a, &opposite, &default_rules())
                .unwrap()
                .outcome,
            Outcome::NoVerdict
        );
        let small = set((10.15, 0.1), (5.0, 0.01));
        let base = set((10.0, 0.1), (0.0, 0.01));
        assert_eq!(
            predict_with(&small, &base, &default_rules())
                .unwrap()
                .outcome,
            Outcome::NoVerdict
        );
    }

    #[test]
    fn single_marker_cases() {
        let a: BTreeMap<_, _> = [("nc1".to_string(), mv(1.0, 0.05))].into();
        let b: BTreeMap<_, _> = [("nc1".to_string(), mv(2.0, 0.05))].into();
        assert_eq!(
            single_marker_predict(&a, &b, "nc1", Direction::LowerBetter)
                .unwrap()
                .outcome,
            Outcome::A
        );
        assert_eq!(
            single_marker_predict(&a, &a, "nc1", Direction::LowerBetter)
                .unwrap()
                .outcome,
            Outcome::NoVerdict
        );
        let c: BTreeMap<_, _> = [("nc1".to_string(), mv(1.5, 0.25))].into();
        let d: BTreeMap<_, _> = [("nc1".to_string(), mv(1.0, 0.25))].into();
        assert_eq!(
            single_marker_predict(&c, &d, "nc1", Direction::HigherBetter)
                .unwrap()
                .outcome,
            Outcome::NoVerdict
        );
        assert!(matches!(
            single_marker_predict(&a, &b, "d_eff", Direction::HigherBetter),
            Err(Error::MissingMarker(_))
        ));
        let no_se: BTreeMap<_, _> = [(
            "nc1".to_string(),
            MarkerValue {
                value: 1.0,
                stderr: None,
            },
        )]
        .into();
        assert!(matches!(
            single_marker_predict(&no_se, &b, "nc1", Direction::LowerBetter),
            Err(Error::MissingStderr(_))
        ));
    }

    #[test]
    fn scoring_cases() {
        let verdicts: BTreeMap<String, Verdict> = [
            (
                "m".to_string(),
                Verdict {
                    outcome: Outcome::A,
                    gaps: vec![],
                },
            ),
            (
                "n".to_string(),
                Verdict {
                    outcome: Outcome::NoVerdict,
                    gaps: vec![],
                },
            ),
        ]
        .into();
        let pair = |model: &str, a, b| PairOutcome {
            model: model.into(),
            dataset: "d".into(),
            acc_a: a,
            acc_b: b,
        };
        let s = score_predictions(&verdicts, &[pair("m", 0.7, 0.6)]).unwrap();
        assert_eq!((s.correct, s.total, s.accuracy), (1, 1, Some(1.0)));
        let s = score_predictions(&verdicts, &[pair("n", 0.7, 0.6)]).unwrap();
        assert_eq!((s.total, s.no_verdict, s.accuracy), (0, 1, None));
        let s = score_predictions(&verdicts, &[pair("m", 0.6, 0.6)]).unwrap();
        assert_eq!((s.incorrect, s.ties), (1, 1));
    }

    #[test]
    fn table_needs_three_runs() {
        let rec = |id: &str, d: f64, acc: f64| RunRecord {
            run_id: id.into(),
            markers: [
                ("d_eff".to_string(), mv(d, 0.1)),
                ("flat".to_string(), mv(1.0, 0.1)),
            ]
            .into(),
            ood_accuracies: [("ood".to_string(), acc)].into(),
        };
        let t = build_table(&[rec("a", 1.0, 0.5), rec("b", 2.0, 0.6)]);
        assert!(t.cells.is_empty());
        assert!(!t.warnings.is_empty());
        let t = build_table(&[rec("a", 1.0, 0.5), rec("b", 2.0, 0.6), rec("c", 3.0, 0.8)]);
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.cells[0].marker, "d_eff");
        assert!(t.warnings.iter().any(|w| w.contains("flat")));
        let h = t.heatmap();
        assert_eq!(h.cols, vec!["d_eff".to_string()]);
        assert!(t
            .to_csv()
            .starts_with("marker,setting,r,p,stars,n\nd_eff,ood,"));
    }
}
