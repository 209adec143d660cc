//! Plain-text problem dump for reproducing a solve with any other tool.
//!
//! ```text
//! # comments and blank lines are ignored
//! qp <n> <m> <n_eq>
//! c0 <value>
//! P <nnz>
//! <row> <col> <value>      (nnz lines, upper triangle)
//! q
//! <value>                  (n lines)
//! A <nnz>
//! <row> <col> <value>      (nnz lines)
//! b
//! <value>                  (m lines)
//! end
//! ```
//!
//! Values are written in shortest round-trip form, so a dump read back is
//! bit-identical to the problem that produced it.

use std::fmt::Write as _;

use super::{QpProblem, Triplet};
use crate::{Error, Result};

/// Hard cap on declared sizes so a corrupt header cannot trigger a huge
/// allocation.
const MAX_DIM: usize = 10_000_000;

impl QpProblem {
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "qp {} {} {}", self.n, self.m(), self.n_eq);
        let _ = writeln!(s, "c0 {:?}", self.c0);
        let _ = writeln!(s, "P {}", self.p.len());
        for (i, j, v) in &self.p {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        s.push_str("q\n");
        for v in &self.q {
            let _ = writeln!(s, "{v:?}");
        }
        let _ = writeln!(s, "A {}", self.a.len());
        for (i, j, v) in &self.a {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        s.push_str("b\n");
        for v in &self.b {
            let _ = writeln!(s, "{v:?}");
        }
        s.push_str("end\n");
        s
    }

    pub fn from_dump(text: &str) -> Result<QpProblem> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Parse(format!("unexpected end of dump, expected {what}")));

        let (ln, head) = next("header")?;
        let f: Vec<&str> = head.split_whitespace().collect();
        if f.len() != 4 || f[0] != "qp" {
            return Err(Error::Parse(format!("line {ln}: expected `qp <n> <m> <n_eq>`")));
        }
        let n = count(f[1], ln)?;
        let m = count(f[2], ln)?;
        let n_eq = count(f[3], ln)?;

        let (ln, c) = next("c0")?;
        let c0 = match c.split_whitespace().collect::<Vec<_>>()[..] {
            ["c0", v] => number(v, ln)?,
            _ => return Err(Error::Parse(format!("line {ln}: expected `c0 <value>`"))),
        };

        let p = triplets(&mut next, "P")?;
        section(&mut next, "q")?;
        let q = values(&mut next, n)?;
        let a = triplets(&mut next, "A")?;
        section(&mut next, "b")?;
        let b = values(&mut next, m)?;
        section(&mut next, "end")?;

        let qp = QpProblem { n, p, q, c0, a, b, n_eq };
        qp.validate()?;
        Ok(qp)
    }
}

fn count(s: &str, ln: usize) -> Result<usize> {
    let v: usize = s.parse().map_err(|_| Error::Parse(format!("line {ln}: {s:?} is not a count")))?;
    if v > MAX_DIM {
        return Err(Error::Parse(format!("line {ln}: size {v} exceeds {MAX_DIM}")));
    }
    Ok(v)
}

fn number(s: &str, ln: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| Error::Parse(format!("line {ln}: {s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("line {ln}: non-finite value {s:?}")));
    }
    Ok(v)
}

type Next<'a> = dyn FnMut(&str) -> Result<(usize, &'a str)> + 'a;

fn section<'a>(next: &mut Next<'a>, name: &str) -> Result<()> {
    let (ln, l) = next(name)?;
    if l != name {
        return Err(Error::Parse(format!("line {ln}: expected `{name}`, found {l:?}")));
    }
    Ok(())
}

fn triplets<'a>(next: &mut Next<'a>, name: &str) -> Result<Vec<Triplet>> {
    let (ln, l) = next(name)?;
    let f: Vec<&str> = l.split_whitespace().collect();
    if f.len() != 2 || f[0] != name {
        return Err(Error::Parse(format!("line {ln}: expected `{name} <nnz>`")));
    }
    let nnz = count(f[1], ln)?;
    let mut out = Vec::with_capacity(nnz.min(1 << 16));
    for _ in 0..nnz {
        let (ln, l) = next("triplet")?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {ln}: expected `<row> <col> <value>`")));
        }
        out.push((count(f[0], ln)?, count(f[1], ln)?, number(f[2], ln)?));
    }
    Ok(out)
}

fn values<'a>(next: &mut Next<'a>, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len.min(1 << 16));
    for _ in 0..len {
        let (ln, l) = next("value")?;
        out.push(number(l, ln)?);
    }
    Ok(out)
}
