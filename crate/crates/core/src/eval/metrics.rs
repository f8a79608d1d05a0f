use crate::error::{Error, Result};
use crate::fusion::ProbMatrix;

/// 1-based rank of `label` among the `label_space` columns of `row`. Higher
/// probability ranks first; equal probabilities rank the lower column first.
fn rank_within(row: &[f64], label: usize, label_space: &[usize]) -> usize {
    let target = row[label];
    1 + label_space
        .iter()
        .filter(|&&c| row[c] > target || (row[c] == target && c < label))
        .count()
}

fn check_label_space(p: &ProbMatrix, label_space: &[usize]) -> Result<Vec<bool>> {
    if label_space.is_empty() {
        return Err(Error::InvalidParameter("label space is empty".into()));
    }
    let mut member = vec![false; p.cols()];
    for &c in label_space {
        if c >= p.cols() {
            return Err(Error::InvalidParameter(format!(
                "label-space column {c} out of range for {} classes",
                p.cols()
            )));
        }
        if std::mem::replace(&mut member[c], true) {
            return Err(Error::InvalidParameter(format!(
                "label-space column {c} listed twice"
            )));
        }
    }
    Ok(member)
}

/// Top-k accuracy for several `ks` at once, restricted to samples whose true
/// label lies in `label_space` and ranking only the `label_space` columns.
/// Returns the accuracies and the number of eligible samples.
pub fn topk_accuracies(
    p: &ProbMatrix,
    labels: &[usize],
    label_space: &[usize],
    ks: &[usize],
) -> Result<(Vec<f64>, usize)> {
    if labels.len() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            p.rows()
        )));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0) {
        return Err(Error::InvalidParameter(format!("k must be >= 1, got {k}")));
    }
    let member = check_label_space(p, label_space)?;
    let mut hits = vec![0usize; ks.len()];
    let mut eligible = 0usize;
    for (row, &label) in p.iter_rows().zip(labels) {
        if !member.get(label).copied().unwrap_or(false) {
            continue;
        }
        eligible += 1;
        let rank = rank_within(row, label, label_space);
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank <= k {
                *h += 1;
            }
        }
    }
    if eligible == 0 {
        return Err(Error::EmptyEvaluation(
            "no test sample has its true label in the label space".into(),
        ));
    }
    Ok((
        hits.iter().map(|&h| h as f64 / eligible as f64).collect(),
        eligible,
    ))
}

pub fn topk_accuracy(
    p: &ProbMatrix,
    labels: &[usize],
    label_space: &[usize],
    k: usize,
) -> Result<f64> {
    topk_accuracies(p, labels, label_space, &[k]).map(|(a, _)| a[0])
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties counting
/// one half. Sort-based, O((P + Q) log(P + Q)), with exact integer counting.
pub fn auroc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "AUROC needs both classes, got {} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    if pos.iter().chain(neg).any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("AUROC scores contain NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the pair count, so ties stay integral.
    let mut twice_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p_grp, mut n_grp) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p_grp += 1;
            } else {
                n_grp += 1;
            }
            j += 1;
        }
        twice_wins += 2 * p_grp * neg_below + p_grp * n_grp;
        neg_below += n_grp;
        i = j;
    }
    let pairs = pos.len() as u128 * neg.len() as u128;
    Ok(twice_wins as f64 / (2 * pairs) as f64)
}

/// Open-set detection scores: per sample, the largest probability over the
/// closed-set columns. Samples labelled with a closed class are positives,
/// samples labelled with an open class negatives.
pub fn openset_scores(
    p: &ProbMatrix,
    labels: &[usize],
    closed_columns: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if labels.len() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            p.rows()
        )));
    }
    let member = check_label_space(p, closed_columns)?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (row, &label) in p.iter_rows().zip(labels) {
        let score = closed_columns
            .iter()
            .map(|&c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        if member.get(label).copied().unwrap_or(false) {
            pos.push(score);
        } else {
            neg.push(score);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyEvaluation(format!(
            "open-set evaluation needs closed and open samples, found {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    Ok((pos, neg))
}
