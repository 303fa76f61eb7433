use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A partial assignment between rows and columns of a score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    /// `(row, col)` pairs sorted by row; rows and cols are pairwise distinct.
    pub pairs: Vec<(usize, usize)>,
    pub objective: f64,
}

/// Maximum-weight matching with exactly `r` edges on a nonnegative score
/// matrix: maximizes `sum Delta_rs Z_rs` over binary `Delta` with `r` ones, at
/// most one per row and per column.
///
/// Solved exactly by successive shortest augmenting paths on the
/// min-cost-flow formulation (edge cost `-Z`); after `t` augmentations the
/// matching is optimal among all matchings of size `t`.
pub fn assign_fixed_cardinality(z: &Matrix, r: usize) -> Result<AssignmentResult> {
    let (n, m) = z.shape();
    if r > n.min(m) {
        return Err(Error::CardinalityTooLarge {
            requested: r,
            rows: n,
            cols: m,
        });
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "assignment scores must be finite and nonnegative, found {bad}"
        )));
    }

    let mut row_match: Vec<Option<usize>> = vec![None; n];
    let mut col_match: Vec<Option<usize>> = vec![None; m];

    // Node ids: rows 0..n, cols n..n+m.
    #[derive(Clone, Copy)]
    enum Pred {
        Source,
        Node(usize),
    }

    for _ in 0..r {
        let total = n + m;
        let mut dist = vec![f64::INFINITY; total];
        let mut pred: Vec<Option<Pred>> = vec![None; total];
        for i in 0..n {
            if row_match[i].is_none() {
                dist[i] = 0.0;
                pred[i] = Some(Pred::Source);
            }
        }
        // Bellman-Ford on the residual graph; at most `total` rounds.
        for _ in 0..total {
            let mut changed = false;
            for i in 0..n {
                if !dist[i].is_finite() {
                    continue;
                }
                for j in 0..m {
                    if row_match[i] == Some(j) {
                        continue;
                    }
                    let cand = dist[i] - z[(i, j)];
                    if cand < dist[n + j] - 1e-15 {
                        dist[n + j] = cand;
                        pred[n + j] = Some(Pred::Node(i));
                        changed = true;
                    }
                }
            }
            for j in 0..m {
                if let Some(i) = col_match[j] {
                    if !dist[n + j].is_finite() {
                        continue;
                    }
                    let cand = dist[n + j] + z[(i, j)];
                    if cand < dist[i] - 1e-15 {
                        dist[i] = cand;
                        pred[i] = Some(Pred::Node(n + j));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let end = (0..m)
            .filter(|&j| col_match[j].is_none() && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]))
            .expect("r <= min(rows, cols) guarantees an augmenting path");

        // Walk back alternating col <- row <- col ... flipping edges.
        let mut col = end;
        loop {
            let Some(Pred::Node(row)) = pred[n + col] else {
                unreachable!("column reached without a row predecessor");
            };
            let prev = pred[row].expect("row on path has a predecessor");
            row_match[row] = Some(col);
            col_match[col] = Some(row);
            match prev {
                Pred::Source => break,
                Pred::Node(prev_col_node) => col = prev_col_node - n,
            }
        }
    }

    let pairs: Vec<(usize, usize)> = row_match
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|j| (i, j)))
        .collect();
    let objective = pairs.iter().map(|&(i, j)| z[(i, j)]).sum();
    Ok(AssignmentResult { pairs, objective })
}
