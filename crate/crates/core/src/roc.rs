//! ROC area and threshold calibration.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RocError {
    #[error("both classes must be present (positives = {positives}, negatives = {negatives})")]
    SingleClassData { positives: usize, negatives: usize },
    #[error("length mismatch: {scores} scores, {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
}

fn check(p: &[f64], labels: &[bool]) -> Result<(usize, usize), RocError> {
    if p.len() != labels.len() {
        return Err(RocError::LengthMismatch { scores: p.len(), labels: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(RocError::SingleClassData { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Area under the ROC curve, `P(p_pos > p_neg) + 0.5 P(tie)`, via the
/// Mann-Whitney rank sum with midranks for ties.
pub fn auroc(p: &[f64], labels: &[bool]) -> Result<f64, RocError> {
    let (n_pos, n_neg) = check(p, labels)?;
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));

    // Twice the positive rank sum, kept integral so the result is exact.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && p[order[j + 1]] == p[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share the midrank (i + j + 2) / 2
        let twice_midrank = (i + j + 2) as u64;
        let pos_in_block = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += twice_midrank * pos_in_block;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (n_pos * (n_pos + 1)) as u64;
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Youden's J (`TPR - FPR`) of the rule `p > threshold`.
pub fn youden_j(p: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in p.iter().zip(labels) {
        if l {
            pos += 1;
            tp += (s > threshold) as usize;
        } else {
            neg += 1;
            fp += (s > threshold) as usize;
        }
    }
    tp as f64 / pos.max(1) as f64 - fp as f64 / neg.max(1) as f64
}

/// Midpoints between adjacent distinct sorted scores.
pub fn candidate_thresholds(p: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = p.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s.windows(2).map(|w| midpoint(w[0], w[1])).collect()
}

/// A cut in `[lo, hi)`, so `p > t` separates the two scores. For adjacent
/// floats the midpoint rounds onto `hi`; `lo` is used instead.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi { m } else { lo }
}

/// Threshold maximizing an objective over the interior midpoints plus the
/// two extreme cuts (just below the lowest score: flag everything; at the
/// highest score: flag nothing). Ties go to the higher threshold.
fn best_threshold(p: &[f64], objective: impl Fn(f64) -> f64) -> f64 {
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = (f64::NEG_INFINITY, hi);
    let candidates = std::iter::once(lo.next_down()).chain(candidate_thresholds(p)).chain(std::iter::once(hi));
    for t in candidates {
        let v = objective(t);
        if v >= best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// The cut on `p` maximizing Youden's J.
pub fn choose_threshold(p: &[f64], labels: &[bool]) -> Result<f64, RocError> {
    check(p, labels)?;
    Ok(best_threshold(p, |t| youden_j(p, labels, t)))
}

/// The cut on `p` maximizing F1 of `p > t`.
pub fn choose_threshold_f1(p: &[f64], labels: &[bool]) -> Result<f64, RocError> {
    check(p, labels)?;
    Ok(best_threshold(p, |t| {
        let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
        for (&s, &l) in p.iter().zip(labels) {
            match (s > t, l) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_count(p: &[f64], labels: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if p[i] > p[j] {
                        wins += 1.0;
                    } else if p[i] == p[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auroc_examples() {
        let l = [false, false, true, true];
        assert_eq!(auroc(&[0.1, 0.2, 0.3, 0.4], &l).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 4], &l).unwrap(), 0.5);
        let p = [0.1, 0.4, 0.35, 0.8];
        assert_eq!(pair_count(&p, &l), 0.75);
        assert_eq!(auroc(&p, &l).unwrap(), 0.75);
    }

    #[test]
    fn auroc_single_class() {
        assert_eq!(
            auroc(&[0.1, 0.2], &[true, true]),
            Err(RocError::SingleClassData { positives: 2, negatives: 0 })
        );
        assert!(choose_threshold(&[0.1], &[false]).is_err());
    }

    #[test]
    fn threshold_separated() {
        let p = [0.05, 0.1, 0.29, 0.71, 0.8, 0.95];
        let l = [false, false, false, true, true, true];
        let t = choose_threshold(&p, &l).unwrap();
        assert!(t > 0.3 && t < 0.7, "{t}");
        assert_eq!(youden_j(&p, &l, t), 1.0);
    }

    #[test]
    fn threshold_matches_exhaustive_scan() {
        let p = [0.1, 0.4, 0.35, 0.8];
        let l = [false, false, true, true];
        // exhaustive: J over every midpoint, highest J, highest t on ties
        let mids = [0.225, 0.375, 0.6];
        let js: Vec<f64> = mids.iter().map(|&t| youden_j(&p, &l, t)).collect();
        assert_eq!(js, vec![0.5, 0.0, 0.5]);
        let t = choose_threshold(&p, &l).unwrap();
        assert!((t - 0.6).abs() < 1e-12, "{t}");
    }

    #[test]
    fn midpoint_separates_adjacent_scores() {
        let lo = 0.3f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(t >= lo && t < hi);
        let p = [lo, hi];
        assert_eq!(youden_j(&p, &[false, true], choose_threshold(&p, &[false, true]).unwrap()), 1.0);
    }

    #[test]
    fn extreme_cuts_are_candidates() {
        // scores anti-correlated with labels: every interior cut has J < 0
        let p = [0.0, 0.5, 0.6, 0.0];
        let l = [true, false, false, true];
        let t = choose_threshold(&p, &l).unwrap();
        assert_eq!(t, 0.6);
        assert_eq!(youden_j(&p, &l, t), 0.0);
        // flagging everything is the F1-best rule here
        let t = choose_threshold_f1(&p, &l).unwrap();
        assert!(t < 0.0);
        assert!(p.iter().all(|&v| v > t));
    }

    #[test]
    fn f1_threshold() {
        let p = [0.1, 0.2, 0.3, 0.6, 0.7, 0.9];
        let l = [false, false, true, false, true, true];
        let t = choose_threshold_f1(&p, &l).unwrap();
        assert!((t - 0.25).abs() < 1e-12, "{t}");
    }
}
