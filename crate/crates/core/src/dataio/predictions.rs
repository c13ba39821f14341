use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::TemporalSegment;
use crate::error::{Error, Result};
use crate::metrics::{ArAnCurve, DenseCaption, DenseCaptionSet};

/// One ranked segment; proposals omit the sentence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence: Option<String>,
    pub confidence: f64,
}

/// Video id to its predictions, most confident first.
pub type PredictionFile = BTreeMap<String, Vec<PredictionRecord>>;

fn check_schema(file: &PredictionFile) -> Result<()> {
    for (video, recs) in file {
        for r in recs {
            if !(0.0 <= r.t_start && r.t_start < r.t_end && r.t_end <= 1.0) {
                return Err(Error::Format(format!(
                    "video `{video}`: prediction [{}, {}] is not an ordered segment inside [0, 1]",
                    r.t_start, r.t_end
                )));
            }
            if !r.confidence.is_finite() {
                return Err(Error::Format(format!("video `{video}`: non-finite confidence")));
            }
        }
    }
    Ok(())
}

/// Serializes after checking the schema, and checks the text parses back to
/// the same records.
pub fn predictions_to_json(file: &PredictionFile) -> Result<String> {
    check_schema(file)?;
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    let back: PredictionFile = serde_json::from_str(&text)?;
    if &back != file {
        return Err(Error::Format("prediction file does not survive a JSON round trip".into()));
    }
    Ok(text)
}

pub fn write_predictions(path: &Path, file: &PredictionFile) -> Result<()> {
    std::fs::write(path, predictions_to_json(file)?).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<PredictionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PredictionFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    check_schema(&file)?;
    Ok(file)
}

/// Segments per video in file order.
pub fn ranked_segments(file: &PredictionFile) -> BTreeMap<String, Vec<TemporalSegment>> {
    file.iter()
        .map(|(k, recs)| {
            let segs = recs
                .iter()
                .map(|r| TemporalSegment {
                    t_start: r.t_start,
                    t_end: r.t_end,
                })
                .collect();
            (k.clone(), segs)
        })
        .collect()
}

/// Captioned predictions; records without a sentence are rejected.
pub fn dense_captions(file: &PredictionFile) -> Result<DenseCaptionSet> {
    file.iter()
        .map(|(k, recs)| {
            let caps = recs
                .iter()
                .map(|r| {
                    let sentence = r
                        .sentence
                        .clone()
                        .ok_or_else(|| Error::Format(format!("video `{k}`: prediction without a sentence")))?;
                    Ok(DenseCaption {
                        t_start: r.t_start,
                        t_end: r.t_end,
                        sentence,
                        confidence: r.confidence,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((k.clone(), caps))
        })
        .collect()
}

pub fn curve_to_csv(curve: &ArAnCurve) -> String {
    let mut s = String::from("an,ar\n");
    for (an, ar) in &curve.points {
        writeln!(s, "{an},{ar:?}").expect("write to string");
    }
    writeln!(s, "# auc={:?}", curve.auc).expect("write to string");
    s
}

pub fn curve_from_csv(text: &str) -> Result<ArAnCurve> {
    let mut lines = text.lines();
    if lines.next() != Some("an,ar") {
        return Err(Error::Format("curve CSV must start with header `an,ar`".into()));
    }
    let mut points = Vec::new();
    let mut auc = None;
    for line in lines {
        if let Some(v) = line.strip_prefix("# auc=") {
            auc = Some(v.parse().map_err(|_| Error::Format(format!("bad AUC line `{line}`")))?);
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
            .ok_or_else(|| Error::Format(format!("bad curve row `{line}`")))?;
        points.push(parsed);
    }
    let auc = auc.ok_or_else(|| Error::Format("curve CSV lacks the `# auc=` line".into()))?;
    Ok(ArAnCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let c = ArAnCurve {
            points: vec![(1, 0.1), (2, 1.0 / 3.0), (3, 0.55)],
            auc: 0.123456789012345,
        };
        let text = curve_to_csv(&c);
        assert!(text.starts_with("an,ar\n") && text.ends_with("# auc=0.123456789012345\n"));
        let back = curve_from_csv(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(curve_to_csv(&back), text);
    }

    #[test]
    fn schema_check_rejects_bad_segments() {
        let mut f = PredictionFile::new();
        f.insert(
            "v".into(),
            vec![PredictionRecord {
                t_start: 0.5,
                t_end: 0.5,
                sentence: None,
                confidence: 1.0,
            }],
        );
        assert!(predictions_to_json(&f).is_err());
    }
}
