//! Validity, efficiency and retrieval metrics, plus cross-run aggregation.

use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalOutput, PredictionInterval};
use crate::error::{Error, Result};

/// Default potency cutoffs used for retrieval classification.
pub const DEFAULT_CUTOFFS: [f64; 5] = [5.0, 6.0, 7.0, 8.0, 9.0];

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Length { left: a, right: b });
    }
    Ok(())
}

pub fn rmse(y_true: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y_true.len(), y_hat.len())?;
    if y_true.is_empty() {
        return Err(Error::Invalid("rmse of an empty sequence".into()));
    }
    let sse: f64 = y_true.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

/// Fraction of `y_true` inside the closed intervals.
pub fn coverage(intervals: &[PredictionInterval], y_true: &[f64]) -> Result<f64> {
    check_lengths(intervals.len(), y_true.len())?;
    if y_true.is_empty() {
        return Err(Error::Invalid("coverage of an empty sequence".into()));
    }
    let hit = intervals.iter().zip(y_true).filter(|(iv, &y)| iv.contains(y)).count();
    Ok(hit as f64 / y_true.len() as f64)
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub cl: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub points: Vec<CurvePoint>,
    /// Squared Pearson correlation of (cl, coverage); absent when undefined.
    pub r_squared: Option<f64>,
}

/// `per_level[i]` holds the intervals for `grid[i]`.
pub fn calibration_curve(per_level: &[Vec<PredictionInterval>], y_true: &[f64], grid: &[f64]) -> Result<CalibrationCurve> {
    check_lengths(grid.len(), per_level.len())?;
    let points = grid
        .iter()
        .zip(per_level)
        .map(|(&cl, ivs)| Ok(CurvePoint { cl, coverage: coverage(ivs, y_true)? }))
        .collect::<Result<Vec<_>>>()?;
    let cls: Vec<f64> = points.iter().map(|p| p.cl).collect();
    let covs: Vec<f64> = points.iter().map(|p| p.coverage).collect();
    Ok(CalibrationCurve {
        r_squared: pearson(&cls, &covs).map(|r| r * r),
        points,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of finite widths. Statistics are `None` when every interval is
/// unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthStats {
    pub cl: f64,
    pub n_finite: usize,
    pub fraction_unbounded: f64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

pub fn width_stats(intervals: &[PredictionInterval], cl: f64) -> Result<WidthStats> {
    if intervals.is_empty() {
        return Err(Error::Invalid("width stats of an empty sequence".into()));
    }
    let mut widths: Vec<f64> = intervals.iter().filter(|iv| !iv.is_unbounded()).map(|iv| iv.width()).collect();
    widths.sort_by(f64::total_cmp);
    let n = widths.len();
    let fraction_unbounded = (intervals.len() - n) as f64 / intervals.len() as f64;
    let stat = |f: &dyn Fn(&[f64]) -> f64| if n == 0 { None } else { Some(f(&widths)) };
    Ok(WidthStats {
        cl,
        n_finite: n,
        fraction_unbounded,
        mean: stat(&|w| w.iter().sum::<f64>() / w.len() as f64),
        median: stat(&|w| quantile(w, 0.5)),
        q1: stat(&|w| quantile(w, 0.25)),
        q3: stat(&|w| quantile(w, 0.75)),
        min: stat(&|w| w[0]),
        max: stat(&|w| w[w.len() - 1]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenCategory {
    Uncertain,
    TruePositive,
    FalsePositive,
    FalseNegative,
    TrueNegative,
}

/// Strict comparisons throughout: an interval touching the cutoff spans it.
pub fn screen_classify(interval: &PredictionInterval, y_true: f64, cutoff: f64) -> ScreenCategory {
    let active = y_true > cutoff;
    if interval.lower > cutoff {
        if active {
            ScreenCategory::TruePositive
        } else {
            ScreenCategory::FalsePositive
        }
    } else if interval.upper < cutoff {
        if active {
            ScreenCategory::FalseNegative
        } else {
            ScreenCategory::TrueNegative
        }
    } else {
        ScreenCategory::Uncertain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCounts {
    pub cutoff: f64,
    pub n_test: usize,
    pub uncertain: usize,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    /// 100 * TP / n_test.
    pub tp_percent: f64,
    /// 100 * TP / (TP + FP); absent with no positive calls.
    pub tp_percent_of_calls: Option<f64>,
}

impl RetrievalCounts {
    pub fn total(&self) -> usize {
        self.uncertain + self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }
}

pub fn screen_counts(intervals: &[PredictionInterval], y_true: &[f64], cutoffs: &[f64]) -> Result<Vec<RetrievalCounts>> {
    check_lengths(intervals.len(), y_true.len())?;
    if y_true.is_empty() {
        return Err(Error::Invalid("retrieval over an empty test set".into()));
    }
    Ok(cutoffs
        .iter()
        .map(|&cutoff| {
            let mut c = RetrievalCounts {
                cutoff,
                n_test: y_true.len(),
                uncertain: 0,
                true_positive: 0,
                false_positive: 0,
                false_negative: 0,
                true_negative: 0,
                tp_percent: 0.0,
                tp_percent_of_calls: None,
            };
            for (iv, &y) in intervals.iter().zip(y_true) {
                match screen_classify(iv, y, cutoff) {
                    ScreenCategory::Uncertain => c.uncertain += 1,
                    ScreenCategory::TruePositive => c.true_positive += 1,
                    ScreenCategory::FalsePositive => c.false_positive += 1,
                    ScreenCategory::FalseNegative => c.false_negative += 1,
                    ScreenCategory::TrueNegative => c.true_negative += 1,
                }
            }
            c.tp_percent = 100.0 * c.true_positive as f64 / c.n_test as f64;
            let calls = c.true_positive + c.false_positive;
            c.tp_percent_of_calls = (calls > 0).then(|| 100.0 * c.true_positive as f64 / calls as f64);
            c
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceErrorPair {
    pub id: String,
    pub sigma: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: String,
    pub n_calibration: usize,
    pub n_test: usize,
    pub rmse: f64,
    pub curve: CalibrationCurve,
    pub widths: Vec<WidthStats>,
    /// Retrieval at `retrieval_cl`.
    pub retrieval_cl: f64,
    pub retrieval: Vec<RetrievalCounts>,
    pub variance_error: Vec<VarianceErrorPair>,
    pub variance_error_r: Option<f64>,
}

/// Evaluate a pipeline's test output. `output.levels` must hold the grid in
/// order and include `retrieval_cl`.
pub fn evaluate(
    model: &str,
    output: &ConformalOutput,
    ids: &[String],
    y_true: &[f64],
    retrieval_cl: f64,
    cutoffs: &[f64],
) -> Result<EvaluationReport> {
    let pred = &output.test_prediction;
    check_lengths(ids.len(), y_true.len())?;
    check_lengths(pred.len(), y_true.len())?;
    let grid: Vec<f64> = output.levels.iter().map(|l| l.cl).collect();
    let per_level: Vec<Vec<PredictionInterval>> = output.levels.iter().map(|l| l.intervals.clone()).collect();
    let curve = calibration_curve(&per_level, y_true, &grid)?;
    let widths = output
        .levels
        .iter()
        .map(|l| width_stats(&l.intervals, l.cl))
        .collect::<Result<Vec<_>>>()?;
    let at = output
        .at_level(retrieval_cl)
        .ok_or_else(|| Error::Invalid(format!("no intervals at retrieval level {retrieval_cl}")))?;
    let retrieval = screen_counts(&at.intervals, y_true, cutoffs)?;
    let variance_error: Vec<VarianceErrorPair> = ids
        .iter()
        .zip(&pred.stds)
        .zip(pred.means.iter().zip(y_true))
        .map(|((id, &sigma), (&m, &y))| VarianceErrorPair {
            id: id.clone(),
            sigma,
            abs_error: (y - m).abs(),
        })
        .collect();
    let sig: Vec<f64> = variance_error.iter().map(|p| p.sigma).collect();
    let err: Vec<f64> = variance_error.iter().map(|p| p.abs_error).collect();
    Ok(EvaluationReport {
        model: model.to_string(),
        n_calibration: output.calibration.n(),
        n_test: y_true.len(),
        rmse: rmse(y_true, &pred.means)?,
        curve,
        widths,
        retrieval_cl,
        retrieval,
        variance_error_r: pearson(&sig, &err),
        variance_error,
    })
}

/// Mean and population standard deviation over the runs that define a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }

    fn of_options(values: impl Iterator<Item = Option<f64>>) -> Option<Self> {
        Self::of(&values.flatten().collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub cl: f64,
    pub coverage: MeanStd,
    pub mean_width: Option<MeanStd>,
    pub median_width: Option<MeanStd>,
    pub fraction_unbounded: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub cutoff: f64,
    pub uncertain: MeanStd,
    pub true_positive: MeanStd,
    pub false_positive: MeanStd,
    pub false_negative: MeanStd,
    pub true_negative: MeanStd,
    pub tp_percent: MeanStd,
    pub tp_percent_of_calls: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub model: String,
    pub n_runs: usize,
    pub rmse: MeanStd,
    pub r_squared: Option<MeanStd>,
    pub levels: Vec<LevelSummary>,
    pub retrieval_cl: f64,
    pub retrieval: Vec<RetrievalSummary>,
    pub variance_error_r: Option<MeanStd>,
}

pub fn aggregate_runs(reports: &[EvaluationReport]) -> Result<AggregateSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Invalid("no reports to aggregate".into()))?;
    let grid: Vec<f64> = first.curve.points.iter().map(|p| p.cl).collect();
    let cutoffs: Vec<f64> = first.retrieval.iter().map(|r| r.cutoff).collect();
    for r in reports {
        let g: Vec<f64> = r.curve.points.iter().map(|p| p.cl).collect();
        let c: Vec<f64> = r.retrieval.iter().map(|x| x.cutoff).collect();
        if g != grid || c != cutoffs || r.widths.len() != grid.len() || r.retrieval_cl != first.retrieval_cl {
            return Err(Error::Invalid(format!("report for {} uses a different grid", r.model)));
        }
    }
    let all = |f: &dyn Fn(&EvaluationReport) -> f64| {
        MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
    };
    let levels = grid
        .iter()
        .enumerate()
        .map(|(i, &cl)| LevelSummary {
            cl,
            coverage: all(&|r| r.curve.points[i].coverage),
            mean_width: MeanStd::of_options(reports.iter().map(|r| r.widths[i].mean)),
            median_width: MeanStd::of_options(reports.iter().map(|r| r.widths[i].median)),
            fraction_unbounded: all(&|r| r.widths[i].fraction_unbounded),
        })
        .collect();
    let retrieval = cutoffs
        .iter()
        .enumerate()
        .map(|(i, &cutoff)| RetrievalSummary {
            cutoff,
            uncertain: all(&|r| r.retrieval[i].uncertain as f64),
            true_positive: all(&|r| r.retrieval[i].true_positive as f64),
            false_positive: all(&|r| r.retrieval[i].false_positive as f64),
            false_negative: all(&|r| r.retrieval[i].false_negative as f64),
            true_negative: all(&|r| r.retrieval[i].true_negative as f64),
            tp_percent: all(&|r| r.retrieval[i].tp_percent),
            tp_percent_of_calls: MeanStd::of_options(reports.iter().map(|r| r.retrieval[i].tp_percent_of_calls)),
        })
        .collect();
    Ok(AggregateSummary {
        model: first.model.clone(),
        n_runs: reports.len(),
        rmse: all(&|r| r.rmse),
        r_squared: MeanStd::of_options(reports.iter().map(|r| r.curve.r_squared)),
        levels,
        retrieval_cl: first.retrieval_cl,
        retrieval,
        variance_error_r: MeanStd::of_options(reports.iter().map(|r| r.variance_error_r)),
    })
}
