//! Unweighted mean of aligned probability matrices.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::thresholding::{MatrixKind, PredictionMatrix};

/// Averages members entry by entry. Rows follow the first member's order.
///
/// For each entry the member values are sorted and folded with a running
/// mean, so the result is bitwise independent of member order and a set of
/// identical members reproduces that member exactly.
pub fn mean_ensemble(members: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    let first = members.first().ok_or(Error::NoMembers)?;
    for m in members {
        m.require_kind(MatrixKind::Probabilities)?;
    }
    let order = first.technique_order();
    let ids: HashSet<&str> = first.ids().iter().map(String::as_str).collect();
    let mut row_maps = Vec::with_capacity(members.len());
    for (k, m) in members.iter().enumerate() {
        if m.technique_order() != order {
            return Err(Error::TechniqueMismatch(format!(
                "member {k} has a different technique_order"
            )));
        }
        if m.n_rows() != ids.len() || m.ids().iter().any(|id| !ids.contains(id.as_str())) {
            return Err(Error::IdMismatch(format!("member {k} covers a different id set")));
        }
        row_maps.push(m.row_index());
    }

    let mut values = Vec::with_capacity(first.n_rows() * first.n_cols());
    let mut scratch = Vec::with_capacity(members.len());
    for id in first.ids() {
        let rows: Vec<&[f64]> = members
            .iter()
            .zip(&row_maps)
            .map(|(m, idx)| m.row(idx[id.as_str()]))
            .collect();
        for c in 0..first.n_cols() {
            scratch.clear();
            scratch.extend(rows.iter().map(|r| r[c]));
            values.push(running_mean(&mut scratch));
        }
    }
    Ok(PredictionMatrix::from_raw(
        MatrixKind::Probabilities,
        first.ids().to_vec(),
        order.to_vec(),
        values,
    ))
}

fn running_mean(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mut mean = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        mean += (x - mean) / (k + 1) as f64;
    }
    mean
}
