//! Agreement between two labelings of the same points.

use std::collections::HashMap;

use crate::error::{DriftError, Result};

struct Contingency {
    n: usize,
    cells: Vec<usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn dense(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(DriftError::Dimension(format!(
            "labelings have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (da, ka) = dense(a);
    let (db, kb) = dense(b);
    let mut cells = vec![0usize; ka * kb];
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for (&i, &j) in da.iter().zip(&db) {
        cells[i * kb + j] += 1;
        rows[i] += 1;
        cols[j] += 1;
    }
    Ok(Contingency {
        n: a.len(),
        cells,
        rows,
        cols,
    })
}

fn pairs(count: usize) -> f64 {
    let c = count as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index (Hubert & Arabie), at most 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.n < 2 {
        return Err(DriftError::Invalid("ARI needs at least 2 points".into()));
    }
    let index: f64 = t.cells.iter().map(|&c| pairs(c)).sum();
    let sum_a: f64 = t.rows.iter().map(|&c| pairs(c)).sum();
    let sum_b: f64 = t.cols.iter().map(|&c| pairs(c)).sum();
    let expected = sum_a * sum_b / pairs(t.n);
    let max_index = (sum_a + sum_b) / 2.0;
    if max_index == expected {
        // both labelings are all-one-cluster or both all-singletons
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with geometric-mean normalization, in [0, 1].
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.n == 0 {
        return Err(DriftError::Invalid("NMI of empty labelings".into()));
    }
    let n = t.n as f64;
    let ha = entropy(&t.rows, n);
    let hb = entropy(&t.cols, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let kb = t.cols.len();
    let mut mi = 0.0;
    for (i, &ra) in t.rows.iter().enumerate() {
        for (j, &cb) in t.cols.iter().enumerate() {
            let nij = t.cells[i * kb + j];
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (ra as f64 * cb as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}
