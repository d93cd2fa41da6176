//! Plain-text serialization of task distributions.
//!
//! Layout (comment lines start with `#`, blank lines are skipped):
//!
//! ```text
//! taskdist v1
//! <n_states> <n_actions> <gamma> <n_tasks>
//! # one dynamics line per (s, a), ordered s-major: n_states probabilities
//! ...
//! # initial distribution: n_states values
//! # task weights: n_tasks values
//! # then per task, one reward line per state: n_actions values
//! ```
//!
//! Reals are written with 17 significant digits so tables round-trip.

use std::fmt::Write as _;
use std::path::Path;

use crate::distribution::TaskDistribution;
use crate::error::{Result, TabularError};
use crate::mdp::TabularMdp;

const MAGIC: &str = "taskdist v1";

pub fn to_string(dist: &TaskDistribution) -> String {
    let base = dist.base();
    let (s_n, a_n, m_n) = (base.n_states(), base.n_actions(), dist.n_tasks());
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "{s_n} {a_n} {:.17e} {m_n}", base.gamma());
    let _ = writeln!(out, "# dynamics rows, one per (s, a)");
    for s in 0..s_n {
        for a in 0..a_n {
            let _ = writeln!(out, "{}", join(base.p(s, a)));
        }
    }
    let _ = writeln!(out, "# initial");
    let _ = writeln!(out, "{}", join(base.initial()));
    let _ = writeln!(out, "# weights");
    let _ = writeln!(out, "{}", join(dist.weights()));
    for m in 0..m_n {
        let _ = writeln!(out, "# task {m} rewards, one row per state");
        let r = dist.task_reward(m);
        for s in 0..s_n {
            let _ = writeln!(out, "{}", join(&r[s * a_n..][..a_n]));
        }
    }
    out
}

fn join(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.17e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_file(dist: &TaskDistribution, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(dist))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_data(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }
}

fn parse_row(line: &str, lineno: usize, expect: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> =
        line.split_whitespace().map(|t| t.parse::<f64>()).collect();
    let vals = vals.map_err(|e| TabularError::Parse {
        line: lineno,
        msg: format!("bad real: {e}"),
    })?;
    if vals.len() != expect {
        return Err(TabularError::Parse {
            line: lineno,
            msg: format!("expected {expect} values, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn from_str(text: &str) -> Result<TaskDistribution> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (ln, magic) = lines.next_data().ok_or(TabularError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    if magic != MAGIC {
        return Err(TabularError::Parse {
            line: ln,
            msg: format!("expected header '{MAGIC}', found '{magic}'"),
        });
    }
    let (ln, header) = lines.next_data().ok_or(TabularError::Parse {
        line: ln,
        msg: "missing size header".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 {
        return Err(TabularError::Parse {
            line: ln,
            msg: "size header needs: n_states n_actions gamma n_tasks".into(),
        });
    }
    let parse_usize = |t: &str, what: &str| {
        t.parse::<usize>().map_err(|e| TabularError::Parse {
            line: ln,
            msg: format!("bad {what}: {e}"),
        })
    };
    let s_n = parse_usize(toks[0], "n_states")?;
    let a_n = parse_usize(toks[1], "n_actions")?;
    let gamma: f64 = toks[2].parse().map_err(|e| TabularError::Parse {
        line: ln,
        msg: format!("bad gamma: {e}"),
    })?;
    let m_n = parse_usize(toks[3], "n_tasks")?;

    let mut need = |what: &str| -> Result<(usize, &str)> {
        lines.next_data().ok_or(TabularError::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    };
    let mut dynamics = Vec::with_capacity(s_n * a_n * s_n);
    for s in 0..s_n {
        for a in 0..a_n {
            let (ln, row) = need(&format!("dynamics row (s={s}, a={a})"))?;
            dynamics.extend(parse_row(row, ln, s_n)?);
        }
    }
    let (ln_i, row) = need("initial distribution")?;
    let initial = parse_row(row, ln_i, s_n)?;
    let (ln_w, row) = need("task weights")?;
    let weights = parse_row(row, ln_w, m_n)?;
    let mut rewards = Vec::with_capacity(m_n);
    for m in 0..m_n {
        let mut table = Vec::with_capacity(s_n * a_n);
        for s in 0..s_n {
            let (ln, row) = need(&format!("reward row (task {m}, state {s})"))?;
            table.extend(parse_row(row, ln, a_n)?);
        }
        rewards.push(table);
    }
    let base = TabularMdp::new(s_n, a_n, dynamics, vec![0.0; s_n * a_n], gamma, initial)?;
    TaskDistribution::new(base, rewards, weights)
}

pub fn read_file(path: &Path) -> Result<TaskDistribution> {
    from_str(&std::fs::read_to_string(path)?)
}
