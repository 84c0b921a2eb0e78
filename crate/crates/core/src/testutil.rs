// SPDX-License-Identifier: MIT OR Apache-2.0

//! Brute-force enumeration of conditional null laws, shared by unit tests.

use crate::series::SeriesKind;

/// Every series of length `len` with sum `total`, with its conditional
/// probability: uniform over arrangements for binary, multinomial with equal
/// cell probabilities for counts.
pub(crate) fn enumerate(kind: SeriesKind, len: usize, total: u64) -> Vec<(Vec<u64>, f64)> {
    let mut out = Vec::new();
    let mut cur = vec![0u64; len];
    let cap = match kind {
        SeriesKind::Binary => 1,
        SeriesKind::Count => total,
    };
    fill(&mut cur, 0, total, cap, &mut out);
    let weights: Vec<f64> = out
        .iter()
        .map(|v| match kind {
            SeriesKind::Binary => 1.0,
            SeriesKind::Count => {
                let mut w = 1.0f64;
                let mut n = 0u64;
                for &x in v {
                    for k in 1..=x {
                        n += 1;
                        w *= n as f64 / k as f64;
                    }
                }
                w / (len as f64).powi(total as i32)
            }
        })
        .collect();
    let norm: f64 = match kind {
        SeriesKind::Binary => weights.len() as f64,
        SeriesKind::Count => 1.0,
    };
    out.into_iter().zip(weights).map(|(v, w)| (v, w / norm)).collect()
}

fn fill(cur: &mut Vec<u64>, pos: usize, left: u64, cap: u64, out: &mut Vec<Vec<u64>>) {
    if pos + 1 == cur.len() {
        if left <= cap {
            cur[pos] = left;
            out.push(cur.clone());
        }
        return;
    }
    for x in 0..=left.min(cap) {
        cur[pos] = x;
        fill(cur, pos + 1, left - x, cap, out);
    }
}
