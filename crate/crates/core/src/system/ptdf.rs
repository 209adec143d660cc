use nalgebra::DMatrix;

use super::Line;
use crate::{Error, Result};

/// DC power-flow transfer factors, lines × nodes, relative to `slack`.
///
/// Column `n` holds the line flows caused by injecting one unit at `n` and
/// withdrawing it at the slack; the slack column is identically zero.
pub fn compute_ptdf(node_count: usize, lines: &[Line], slack: usize) -> Result<Vec<Vec<f64>>> {
    if slack >= node_count {
        return Err(Error::Invalid(format!("slack node {slack} out of range")));
    }
    let mut b = Vec::with_capacity(lines.len());
    for (l, line) in lines.iter().enumerate() {
        if line.from >= node_count || line.to >= node_count || line.from == line.to {
            return Err(Error::Invalid(format!("line {l} has invalid endpoints")));
        }
        match line.susceptance {
            Some(x) if x > 0.0 && x.is_finite() => b.push(x),
            _ => return Err(Error::Invalid(format!("line {l} needs a positive susceptance"))),
        }
    }
    check_connected(node_count, lines)?;
    if node_count == 1 {
        return Ok(Vec::new());
    }

    let mut bus = DMatrix::<f64>::zeros(node_count, node_count);
    for (line, &x) in lines.iter().zip(&b) {
        let (i, j) = (line.from, line.to);
        bus[(i, i)] += x;
        bus[(j, j)] += x;
        bus[(i, j)] -= x;
        bus[(j, i)] -= x;
    }
    let keep: Vec<usize> = (0..node_count).filter(|&k| k != slack).collect();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| bus[(keep[r], keep[c])]);
    let inv = reduced.try_inverse().ok_or(Error::Singular)?;

    // angle sensitivity: X[node][inj] with zero row/column at the slack
    let angle = |node: usize, inj: usize| -> f64 {
        match (keep.iter().position(|&k| k == node), keep.iter().position(|&k| k == inj)) {
            (Some(r), Some(c)) => inv[(r, c)],
            _ => 0.0,
        }
    };
    let ptdf = lines
        .iter()
        .zip(&b)
        .map(|(line, &x)| (0..node_count).map(|n| x * (angle(line.from, n) - angle(line.to, n))).collect())
        .collect();
    Ok(ptdf)
}

fn check_connected(node_count: usize, lines: &[Line]) -> Result<()> {
    let mut seen = vec![false; node_count];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for l in lines {
            let next = if l.from == u {
                l.to
            } else if l.to == u {
                l.from
            } else {
                continue;
            };
            if !seen[next] {
                seen[next] = true;
                stack.push(next);
            }
        }
    }
    match seen.iter().position(|s| !s) {
        Some(k) => Err(Error::Disconnected(format!("node {k} unreachable from node 0"))),
        None => Ok(()),
    }
}
