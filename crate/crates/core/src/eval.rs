//! Score metrics and report generation for benchmark tables.
//!
//! Two percentage metrics drive everything here. For a game with raw scores
//! `random`, `human`, `agent`, and (optionally) `baseline`:
//!
//! * improvement = (agent − baseline) / (max{human, baseline} − random) · 100
//! * normalized  = (agent − random) / |human − random| · 100
//!
//! [`summarize`] folds a table of rows into an [`EvalReport`] with per-game
//! entries plus mean/median aggregates; rows with degenerate denominators are
//! excluded with warnings instead of failing the whole report. The module
//! also owns log post-processing: a trailing [`moving_average`] and the
//! learning-curve rows the CLI writes as CSV.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Raw scores for one game. `baseline` is optional: plain normalized-score
/// tables have no comparison column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub game: String,
    pub random: f64,
    pub human: f64,
    pub agent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
}

impl ScoreRow {
    pub fn new(
        game: impl Into<String>,
        random: f64,
        human: f64,
        agent: f64,
        baseline: Option<f64>,
    ) -> Self {
        Self { game: game.into(), random, human, agent, baseline }
    }
}

/// Relative improvement of the agent over the baseline, as a percentage.
///
/// Returns `None` when the row has no baseline or when the denominator
/// `max{human, baseline} − random` is zero; such rows are excluded (with a
/// warning) by [`summarize`] rather than treated as errors.
pub fn improvement(row: &ScoreRow) -> Option<f64> {
    let baseline = row.baseline?;
    let denom = row.human.max(baseline) - row.random;
    if denom == 0.0 {
        return None;
    }
    Some((row.agent - baseline) / denom * 100.0)
}

/// Human-normalized score as a percentage: 0% is random play, 100% is human.
///
/// Returns `None` when `human == random` (degenerate denominator).
pub fn normalized_score(row: &ScoreRow) -> Option<f64> {
    normalized_value(row.agent, row)
}

/// Normalizes an arbitrary raw score against the row's random/human anchors.
/// Used to place the baseline column on the same scale as the agent column.
pub fn normalized_value(score: f64, row: &ScoreRow) -> Option<f64> {
    let denom = (row.human - row.random).abs();
    if denom == 0.0 {
        return None;
    }
    Some((score - row.random) / denom * 100.0)
}

/// Per-game slice of an [`EvalReport`]. Percentages are `None` where the
/// metric was undefined for that row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameEntry {
    pub game: String,
    pub agent_normalized: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_normalized: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub improvement: Option<f64>,
}

/// Aggregates over the ingested rows. Mean/median cover exactly the rows
/// whose normalized score was defined; `excluded` counts the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub games: usize,
    pub excluded: usize,
    pub agent_mean: f64,
    pub agent_median: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_median: Option<f64>,
    /// Count of rows with improvement > 0; `None` when no row had a baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub games_improved: Option<usize>,
}

/// Full report: one entry per ingested game plus the summary block and any
/// exclusion warnings accumulated along the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub games: Vec<GameEntry>,
    pub summary: EvalSummary,
    pub warnings: Vec<String>,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Mean accumulated in sorted order, so the result is a function of the
/// multiset of values: permuting the input table cannot flip the last ulp.
fn mean(values: &[f64]) -> f64 {
    sorted(values).iter().sum::<f64>() / values.len() as f64
}

/// Median with the even-count convention: midpoint of the two central values.
fn median(values: &[f64]) -> f64 {
    let sorted = sorted(values);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Builds an [`EvalReport`] from a score table.
///
/// Mean and median are taken over the rows with a defined normalized score
/// (per column); the median of an even count is the midpoint average.
/// Degenerate rows are excluded with a warning. Errors only on an empty
/// table. The result is invariant under row order.
pub fn summarize(rows: &[ScoreRow]) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(CoreError::InvalidArgument("empty score table".into()));
    }

    let mut games = Vec::with_capacity(rows.len());
    let mut warnings = Vec::new();
    let mut agent_values = Vec::new();
    let mut baseline_values = Vec::new();
    let mut any_baseline = false;
    let mut improved = 0usize;
    let mut excluded = 0usize;

    for row in rows {
        let agent_normalized = normalized_score(row);
        let baseline_normalized = row.baseline.and_then(|b| normalized_value(b, row));
        let improvement = improvement(row);

        if agent_normalized.is_none() {
            excluded += 1;
            warnings.push(format!(
                "{}: human == random ({}); normalized score undefined, row excluded",
                row.game, row.human
            ));
        }
        if row.baseline.is_some() && improvement.is_none() {
            warnings.push(format!(
                "{}: max(human, baseline) == random; improvement undefined, row excluded",
                row.game
            ));
        }

        if let Some(v) = agent_normalized {
            agent_values.push(v);
        }
        if let Some(v) = baseline_normalized {
            baseline_values.push(v);
        }
        if row.baseline.is_some() {
            any_baseline = true;
        }
        if improvement.is_some_and(|v| v > 0.0) {
            improved += 1;
        }

        games.push(GameEntry {
            game: row.game.clone(),
            agent_normalized,
            baseline_normalized,
            improvement,
        });
    }

    if agent_values.is_empty() {
        return Err(CoreError::InvalidArgument(
            "no row has a defined normalized score".into(),
        ));
    }

    let summary = EvalSummary {
        games: rows.len(),
        excluded,
        agent_mean: mean(&agent_values),
        agent_median: median(&agent_values),
        baseline_mean: if baseline_values.is_empty() { None } else { Some(mean(&baseline_values)) },
        baseline_median: if baseline_values.is_empty() {
            None
        } else {
            Some(median(&baseline_values))
        },
        games_improved: if any_baseline { Some(improved) } else { None },
    };

    Ok(EvalReport { games, summary, warnings })
}

/// Trailing moving average. Entry `i` averages the last `min(window, i+1)`
/// points, so the warm-up region uses whatever prefix is available.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(CoreError::InvalidArgument("moving-average window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= window {
            sum -= series[i - window];
        }
        let len = window.min(i + 1);
        out.push(sum / len as f64);
    }
    Ok(out)
}

/// One line of a smoothed learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub raw: f64,
    pub smoothed: f64,
}

/// Pairs a raw series with its moving average, keyed by step.
pub fn learning_curve(steps: &[u64], raw: &[f64], window: usize) -> Result<Vec<CurvePoint>> {
    if steps.len() != raw.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "curve has {} steps but {} values",
            steps.len(),
            raw.len()
        )));
    }
    let smoothed = moving_average(raw, window)?;
    Ok(steps
        .iter()
        .zip(raw.iter().zip(smoothed))
        .map(|(&step, (&raw, smoothed))| CurvePoint { step, raw, smoothed })
        .collect())
}

/// Writes curve points as CSV with header `step,raw,smoothed`.
pub fn write_curve_csv<W: Write>(writer: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for point in points {
        w.serialize(point).map_err(|e| CoreError::Serde(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Result of parsing a score CSV: the good rows plus per-line diagnostics
/// for the rows that failed to parse.
#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub rows: Vec<ScoreRow>,
    pub diagnostics: Vec<String>,
}

/// Parses a score table from CSV with header `game,random,human,agent` and
/// an optional trailing `baseline` column.
///
/// Malformed rows are skipped and reported with their line numbers in
/// `diagnostics`; missing required columns or a table with zero parseable
/// rows are hard errors.
pub fn ingest_scores<R: Read>(reader: R) -> Result<IngestOutcome> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| CoreError::Parse { line: 1, msg: e.to_string() })?
        .clone();

    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = ["game", "random", "human", "agent"];
    let mut indices = [0usize; 4];
    for (slot, name) in indices.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| CoreError::Parse {
            line: 1,
            msg: format!("missing required column '{name}' (header: {headers:?})"),
        })?;
    }
    let [game_idx, random_idx, human_idx, agent_idx] = indices;
    let baseline_idx = col("baseline");

    let mut rows: Vec<ScoreRow> = Vec::new();
    let mut diagnostics = Vec::new();

    for record in csv_reader.records() {
        let record = record.map_err(|e| CoreError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);

        let field = |idx: usize| -> std::result::Result<&str, String> {
            record.get(idx).ok_or_else(|| format!("line {line}: missing column {idx}"))
        };
        let number = |idx: usize, name: &str| -> std::result::Result<f64, String> {
            let raw = field(idx)?;
            raw.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("line {line}: non-numeric {name} value '{raw}'"))
        };

        let parsed = (|| {
            let game = field(game_idx)?.trim().to_string();
            if game.is_empty() {
                return Err(format!("line {line}: empty game name"));
            }
            let baseline = match baseline_idx {
                Some(idx) if !field(idx)?.trim().is_empty() => Some(number(idx, "baseline")?),
                _ => None,
            };
            Ok(ScoreRow {
                game,
                random: number(random_idx, "random")?,
                human: number(human_idx, "human")?,
                agent: number(agent_idx, "agent")?,
                baseline,
            })
        })();

        match parsed {
            Ok(row) => {
                if rows.iter().any(|r| r.game == row.game) {
                    diagnostics.push(format!(
                        "line {line}: duplicate game '{}' (first occurrence kept)",
                        row.game
                    ));
                } else {
                    rows.push(row);
                }
            }
            Err(msg) => diagnostics.push(msg),
        }
    }

    if rows.is_empty() {
        return Err(CoreError::InvalidArgument(
            "score table is empty (no parseable rows)".into(),
        ));
    }
    Ok(IngestOutcome { rows, diagnostics })
}

/// Convenience wrapper over [`ingest_scores`] for a file path.
pub fn ingest_scores_path(path: &Path) -> Result<IngestOutcome> {
    let file = std::fs::File::open(path)?;
    ingest_scores(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(random: f64, human: f64, agent: f64, baseline: Option<f64>) -> ScoreRow {
        ScoreRow::new("test", random, human, agent, baseline)
    }

    #[test]
    fn improvement_zero_when_agent_matches_baseline() {
        let r = row(3.0, 10.0, 7.5, Some(7.5));
        assert_eq!(improvement(&r), Some(0.0));
        // Holds regardless of the other fields.
        let r = row(-50.0, 2.0, -1.0, Some(-1.0));
        assert_eq!(improvement(&r), Some(0.0));
    }

    #[test]
    fn improvement_matches_hand_computed_example() {
        // Scores where agent beats a baseline that itself trails the human.
        let r = row(-18.6, -15.5, -10.07, Some(-18.1));
        let got = improvement(&r).unwrap();
        let expected = (-10.07 - (-18.1)) / (-15.5 - (-18.6)) * 100.0;
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 259.03).abs() < 0.005, "got {got}");
    }

    #[test]
    fn improvement_is_100_at_the_better_anchor() {
        // Agent = max{human, baseline} with baseline = random < human.
        let r = row(1.0, 5.0, 5.0, Some(1.0));
        assert!((improvement(&r).unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn improvement_degenerate_and_missing_cases() {
        assert_eq!(improvement(&row(0.0, 10.0, 5.0, None)), None);
        // max(human, baseline) == random -> undefined.
        assert_eq!(improvement(&row(4.0, 4.0, 9.0, Some(2.0))), None);
    }

    #[test]
    fn normalized_matches_published_spot_checks() {
        let freeway = row(0.0, 29.6, 31.3, None);
        let got = normalized_score(&freeway).unwrap();
        assert!((got - 105.74).abs() < 0.005, "freeway {got}");

        let pong = row(-20.7, 9.3, 19.4, None);
        let got = normalized_score(&pong).unwrap();
        assert!((got - 40.1 / 30.0 * 100.0).abs() < 1e-9);
        assert!((got - 133.67).abs() < 0.005, "pong {got}");
    }

    #[test]
    fn normalized_anchors_and_degenerate_case() {
        let r = row(2.0, 12.0, 12.0, None);
        assert!((normalized_score(&r).unwrap() - 100.0).abs() < 1e-12);
        let r = row(2.0, 12.0, 2.0, None);
        assert!(normalized_score(&r).unwrap().abs() < 1e-12);
        assert_eq!(normalized_score(&row(3.0, 3.0, 8.0, None)), None);
    }

    #[test]
    fn normalized_is_affine_invariant() {
        let base = row(-20.7, 9.3, 19.4, None);
        let reference = normalized_score(&base).unwrap();
        for &(scale, shift) in &[(2.0, 5.0), (0.25, -13.0), (117.0, 0.0)] {
            let mapped = row(
                scale * base.random + shift,
                scale * base.human + shift,
                scale * base.agent + shift,
                None,
            );
            let got = normalized_score(&mapped).unwrap();
            assert!(
                (got - reference).abs() < 1e-9,
                "scale {scale} shift {shift}: {got} vs {reference}"
            );
        }
    }

    #[test]
    fn summarize_means_medians_and_counts() {
        let rows = vec![
            ScoreRow::new("a", 0.0, 10.0, 5.0, Some(4.0)),  // 50%, baseline 40%, improved
            ScoreRow::new("b", 0.0, 10.0, 20.0, Some(25.0)), // 200%, baseline 250%, not improved
            ScoreRow::new("c", 0.0, 10.0, 10.0, Some(1.0)), // 100%, baseline 10%, improved
            ScoreRow::new("d", 0.0, 10.0, 0.0, Some(0.0)),  // 0%, baseline 0%, tie
        ];
        let report = summarize(&rows).unwrap();
        let s = &report.summary;
        assert_eq!(s.games, 4);
        assert_eq!(s.excluded, 0);
        assert!((s.agent_mean - 87.5).abs() < 1e-12);
        // Even count: midpoint of 50 and 100.
        assert!((s.agent_median - 75.0).abs() < 1e-12);
        assert!((s.baseline_mean.unwrap() - 75.0).abs() < 1e-12);
        assert!((s.baseline_median.unwrap() - 25.0).abs() < 1e-12);
        assert_eq!(s.games_improved, Some(2));
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn summarize_is_order_invariant() {
        let rows = vec![
            ScoreRow::new("a", 0.0, 10.0, 5.0, Some(4.0)),
            ScoreRow::new("b", 1.0, 4.0, 9.0, Some(2.0)),
            ScoreRow::new("c", -3.0, 7.0, 0.5, Some(6.0)),
            ScoreRow::new("d", 0.0, 2.0, 2.0, Some(2.0)),
            ScoreRow::new("e", 5.0, 1.0, 3.0, Some(0.0)),
        ];
        let forward = summarize(&rows).unwrap();
        let mut reversed_rows = rows.clone();
        reversed_rows.reverse();
        let reversed = summarize(&reversed_rows).unwrap();
        assert_eq!(forward.summary, reversed.summary);
    }

    #[test]
    fn summarize_excludes_degenerate_rows_with_warnings() {
        let rows = vec![
            ScoreRow::new("good", 0.0, 10.0, 5.0, None),
            ScoreRow::new("flat", 3.0, 3.0, 9.0, None),
        ];
        let report = summarize(&rows).unwrap();
        assert_eq!(report.summary.games, 2);
        assert_eq!(report.summary.excluded, 1);
        assert!((report.summary.agent_mean - 50.0).abs() < 1e-12);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("flat"));
        assert_eq!(report.summary.games_improved, None);
    }

    #[test]
    fn summarize_rejects_empty_table() {
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn moving_average_examples() {
        let constant = vec![3.5; 9];
        assert_eq!(moving_average(&constant, 4).unwrap(), constant);

        let ramp = [0.0, 4.0, 8.0, 12.0];
        assert_eq!(moving_average(&ramp, 4).unwrap(), vec![0.0, 2.0, 4.0, 6.0]);

        assert!(moving_average(&ramp, 0).is_err());
    }

    #[test]
    fn moving_average_matches_direct_convolution() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(97);
        let series: Vec<f64> = (0..64).map(|_| rng.random_range(-10.0..10.0)).collect();
        for window in [1usize, 2, 3, 4, 7, 64, 100] {
            let fast = moving_average(&series, window).unwrap();
            for (i, &got) in fast.iter().enumerate() {
                let lo = i + 1 - window.min(i + 1);
                let direct: f64 =
                    series[lo..=i].iter().sum::<f64>() / (i - lo + 1) as f64;
                assert!(
                    (got - direct).abs() < 1e-9,
                    "window {window} index {i}: {got} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn ingest_parses_wellformed_table() {
        let csv = "game,random,human,agent,baseline\n\
                   Pong,-20.7,9.3,19.4,18.9\n\
                   Freeway,0,29.6,31.3,30.3\n";
        let out = ingest_scores(csv.as_bytes()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.rows[0].game, "Pong");
        assert_eq!(out.rows[0].baseline, Some(18.9));
        assert_eq!(out.rows[1].agent, 31.3);
    }

    #[test]
    fn ingest_without_baseline_column() {
        let csv = "game,random,human,agent\nPong,-20.7,9.3,19.4\n";
        let out = ingest_scores(csv.as_bytes()).unwrap();
        assert_eq!(out.rows[0].baseline, None);
    }

    #[test]
    fn ingest_isolates_bad_rows_with_line_numbers() {
        let csv = "game,random,human,agent\n\
                   Pong,-20.7,9.3,19.4\n\
                   Broken,0,abc,3\n\
                   Freeway,0,29.6,31.3\n";
        let out = ingest_scores(csv.as_bytes()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.diagnostics.len(), 1);
        assert!(out.diagnostics[0].contains("line 3"), "{}", out.diagnostics[0]);
        assert!(out.diagnostics[0].contains("non-numeric"));
    }

    #[test]
    fn ingest_rejects_missing_columns_and_empty_tables() {
        let missing = "game,random,agent\nPong,0,1\n";
        let err = ingest_scores(missing.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("human"), "{err}");

        let empty = "game,random,human,agent\n";
        assert!(ingest_scores(empty.as_bytes()).is_err());
    }

    #[test]
    fn curve_pairs_raw_and_smoothed() {
        let steps = [100u64, 200, 300, 400];
        let raw = [0.0, 4.0, 8.0, 12.0];
        let points = learning_curve(&steps, &raw, 4).unwrap();
        assert_eq!(points.len(), 4);
        assert_eq!(points[3], CurvePoint { step: 400, raw: 12.0, smoothed: 6.0 });

        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &points).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,raw,smoothed\n"));
        assert!(text.contains("400,12.0,6.0"));
    }
}
