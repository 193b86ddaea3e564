//! External clustering metrics: best-map accuracy, normalized mutual
//! information, and purity.
//!
//! Accuracy maximizes agreement over one-to-one mappings between predicted
//! and true labels, solved as an assignment problem on the contingency
//! matrix. NMI normalizes mutual information by the geometric mean of the
//! two entropies (natural logs). All three metrics are invariant under
//! relabeling of the predicted side.

use ndarray::Array2;
use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;

use crate::error::{Error, Result};

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "label lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Invalid("empty label vectors".into()));
    }
    Ok(pred.len())
}

/// Dense contingency counts, `(max_pred + 1) x (max_true + 1)`.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<Array2<u64>> {
    let n = check_lengths(pred, truth)?;
    let rows = pred.iter().copied().max().unwrap_or(0) + 1;
    let cols = truth.iter().copied().max().unwrap_or(0) + 1;
    let mut table = Array2::zeros((rows, cols));
    for i in 0..n {
        table[[pred[i], truth[i]]] += 1;
    }
    Ok(table)
}

/// Best-map clustering accuracy: the optimal one-to-one assignment between
/// predicted and true labels on the contingency matrix.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let n = check_lengths(pred, truth)?;
    let table = contingency(pred, truth)?;
    let side = table.nrows().max(table.ncols());
    let mut weights = Matrix::new(side, side, 0i64);
    for ((r, c), &count) in table.indexed_iter() {
        weights[(r, c)] = count as i64;
    }
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / n as f64)
}

/// Normalized mutual information with sqrt normalization:
/// `I(pred; true) / sqrt(H(pred) H(true))`. Defined as 1 when both
/// entropies vanish (single-cluster vs single-class), 0 when exactly one
/// does.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let n = check_lengths(pred, truth)? as f64;
    let table = contingency(pred, truth)?;
    let row_sums: Vec<f64> = table
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&c| c as f64).sum())
        .collect();
    let col_sums: Vec<f64> = table
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|&v| v as f64).sum())
        .collect();

    let entropy = |sums: &[f64]| -> f64 {
        sums.iter()
            .filter(|&&s| s > 0.0)
            .map(|&s| {
                let p = s / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = entropy(&row_sums);
    let h_true = entropy(&col_sums);
    if h_pred == 0.0 && h_true == 0.0 {
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return Ok(0.0);
    }

    let mut mi = 0.0;
    for ((r, c), &count) in table.indexed_iter() {
        if count > 0 {
            let joint = count as f64 / n;
            mi += joint * (n * count as f64 / (row_sums[r] * col_sums[c])).ln();
        }
    }
    Ok((mi / (h_pred * h_true).sqrt()).clamp(0.0, 1.0))
}

/// Fraction of samples in the majority true class of their predicted cluster.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let n = check_lengths(pred, truth)? as f64;
    let table = contingency(pred, truth)?;
    let majority: u64 = table
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    /// Brute-force oracle: maximum agreement over every injective mapping of
    /// the square-padded label set (feasible for small k).
    pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
        let table = contingency(pred, truth).unwrap();
        let side = table.nrows().max(table.ncols());
        let mut perm: Vec<usize> = (0..side).collect();
        let mut best = 0u64;
        permute(&mut perm, 0, &mut |p| {
            let mut total = 0u64;
            for (r, &c) in p.iter().enumerate() {
                if r < table.nrows() && c < table.ncols() {
                    total += table[[r, c]];
                }
            }
            best = best.max(total);
        });
        best as f64 / pred.len() as f64
    }

    fn permute(xs: &mut Vec<usize>, at: usize, visit: &mut impl FnMut(&[usize])) {
        if at == xs.len() {
            visit(xs);
            return;
        }
        for i in at..xs.len() {
            xs.swap(at, i);
            permute(xs, at + 1, visit);
            xs.swap(at, i);
        }
    }

    #[test]
    fn accuracy_perfect_and_permuted() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(clustering_accuracy(&truth, &truth).unwrap(), 1.0);
        let flipped = vec![1, 1, 0, 0, 2, 2];
        assert_eq!(clustering_accuracy(&flipped, &truth).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_hand_case() {
        let pred = vec![0, 1, 1];
        let truth = vec![0, 0, 1];
        assert_abs_diff_eq!(
            clustering_accuracy(&pred, &truth).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn accuracy_matches_brute_force_on_random_instances() {
        let mut rng = SeededRng::new(77);
        for _ in 0..200 {
            let k = 2 + rng.index(5);
            let n = k + rng.index(40);
            let pred: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
            let truth: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
            let fast = clustering_accuracy(&pred, &truth).unwrap();
            let slow = brute_force_accuracy(&pred, &truth);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn nmi_perfect_constant_and_balanced() {
        let truth = vec![0, 0, 1, 1];
        assert_abs_diff_eq!(nmi(&truth, &truth).unwrap(), 1.0, epsilon = 1e-12);
        let constant = vec![0, 0, 0, 0];
        assert_abs_diff_eq!(nmi(&constant, &truth).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(purity(&constant, &truth).unwrap(), 0.5, epsilon = 1e-12);
        // Both sides constant: both entropies zero.
        assert_abs_diff_eq!(nmi(&constant, &constant).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn purity_hand_case() {
        // Clusters {a,a,b} and {b,b}: majorities 2 and 2 over 5 samples.
        let pred = vec![0, 0, 0, 1, 1];
        let truth = vec![0, 0, 1, 1, 1];
        assert_abs_diff_eq!(purity(&pred, &truth).unwrap(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn errors_on_mismatch_and_empty() {
        assert!(clustering_accuracy(&[0, 1], &[0]).is_err());
        assert!(nmi(&[], &[]).is_err());
        assert!(purity(&[0], &[0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn purity_at_least_accuracy_and_permutation_invariance(
            labels in proptest::collection::vec((0usize..5, 0usize..5), 2..60),
            swap_a in 0usize..5, swap_b in 0usize..5,
        ) {
            let pred: Vec<usize> = labels.iter().map(|&(p, _)| p).collect();
            let truth: Vec<usize> = labels.iter().map(|&(_, t)| t).collect();
            let acc = clustering_accuracy(&pred, &truth).unwrap();
            let pur = purity(&pred, &truth).unwrap();
            let mi = nmi(&pred, &truth).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert!((0.0..=1.0).contains(&pur));
            prop_assert!((0.0..=1.0).contains(&mi));
            prop_assert!(pur >= acc - 1e-12);

            // Relabel predicted side by a transposition: metrics unchanged.
            let relabeled: Vec<usize> = pred.iter().map(|&p| {
                if p == swap_a { swap_b } else if p == swap_b { swap_a } else { p }
            }).collect();
            prop_assert!((clustering_accuracy(&relabeled, &truth).unwrap() - acc).abs() < 1e-12);
            prop_assert!((purity(&relabeled, &truth).unwrap() - pur).abs() < 1e-12);
            prop_assert!((nmi(&relabeled, &truth).unwrap() - mi).abs() < 1e-12);
        }
    }
}
