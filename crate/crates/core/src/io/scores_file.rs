//! Text score tables: a provenance line, a class-label line, then one line
//! per row with an id and the per-class raw scores. Scores are printed with
//! 17 significant digits so they reload to the same f64.

use std::path::Path;

use crate::classify::ScoreMatrix;
use crate::error::{CpdError, Result};
use crate::io::{read_all, write_atomic};
use crate::matrix::Matrix;

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> CpdError {
    CpdError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

pub fn save_scores(path: &Path, scores: &ScoreMatrix, ids: &[String]) -> Result<()> {
    if ids.len() != scores.scores.rows() {
        return Err(CpdError::ShapeMismatch {
            left: format!("{} score rows", scores.scores.rows()),
            right: format!("{} ids", ids.len()),
        });
    }
    let mut out = String::new();
    out.push_str("provenance ");
    out.push_str(&scores.provenance);
    out.push('\n');
    out.push_str("classes");
    for &c in &scores.class_labels {
        out.push_str(&format!(" {c}"));
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(scores.scores.iter_rows()) {
        out.push_str(id);
        for &v in row {
            out.push_str(&format!(" {v:.17e}"));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_scores(path: &Path) -> Result<(ScoreMatrix, Vec<String>)> {
    let bytes = read_all(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| parse_err(path, 1, "score file is not valid UTF-8"))?;
    let mut lines = text.lines().enumerate();

    let (_, prov_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "missing provenance line"))?;
    let provenance = prov_line
        .strip_prefix("provenance ")
        .ok_or_else(|| parse_err(path, 1, "first line must start with 'provenance '"))?
        .to_string();

    let (_, class_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing class line"))?;
    let rest = class_line
        .strip_prefix("classes")
        .ok_or_else(|| parse_err(path, 2, "second line must start with 'classes'"))?;
    let mut class_labels = Vec::new();
    for field in rest.split_whitespace() {
        class_labels.push(
            field
                .parse::<u32>()
                .map_err(|_| parse_err(path, 2, format!("bad class label {field:?}")))?,
        );
    }
    if class_labels.is_empty() {
        return Err(parse_err(path, 2, "class line lists no classes"));
    }

    let mut scores = Matrix::new(class_labels.len());
    let mut ids = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .ok_or_else(|| parse_err(path, line_no, "missing row id"))?;
        let mut row = Vec::with_capacity(class_labels.len());
        for field in fields {
            row.push(field.parse::<f64>().map_err(|_| {
                parse_err(path, line_no, format!("bad score value {field:?}"))
            })?);
        }
        if row.len() != class_labels.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {} scores, found {}", class_labels.len(), row.len()),
            ));
        }
        ids.push(id.to_string());
        scores.push_row(&row);
    }
    Ok((
        ScoreMatrix {
            class_labels,
            scores,
            provenance,
        },
        ids,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tsv");
        let sm = ScoreMatrix {
            class_labels: vec![0, 2, 5],
            scores: Matrix::from_flat(
                2,
                3,
                vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0, f64::MIN_POSITIVE, -4.75],
            )
            .unwrap(),
            provenance: "conv3_spatial_st_tdd".into(),
        };
        let ids = vec!["vid_a".to_string(), "vid_b".to_string()];
        save_scores(&path, &sm, &ids).unwrap();
        let (back, back_ids) = load_scores(&path).unwrap();
        assert_eq!(back.scores.data(), sm.scores.data());
        assert_eq!(back.class_labels, sm.class_labels);
        assert_eq!(back.provenance, sm.provenance);
        assert_eq!(back_ids, ids);
    }
}
