use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use seqmc::diagnostics::{ChainTrace, StepMeta};

use crate::Usage;

pub const META_COLUMNS: [&str; 5] = ["proposals_tried", "accepted_index", "legs", "epsilon", "divergent"];

pub fn write_trace(out: &mut impl Write, trace: &ChainTrace) -> std::io::Result<()> {
    let d = trace.dim();
    let header: Vec<String> = (0..d)
        .map(|j| format!("x{j}"))
        .chain(META_COLUMNS.iter().map(|s| s.to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for (i, m) in trace.meta().iter().enumerate() {
        line.clear();
        for x in trace.row(i) {
            line.push_str(&format!("{x:?},"));
        }
        line.push_str(&format!(
            "{},{},{},{:?},{}",
            m.proposals_tried,
            m.accepted_index,
            m.legs,
            m.epsilon,
            u8::from(m.divergent)
        ));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn field<T: std::str::FromStr>(raw: &str, line: u64, col: &str) -> anyhow::Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("line {line}: column {col}: cannot parse {raw:?}"))
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace(path: &Path) -> anyhow::Result<ChainTrace> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening trace {}", path.display()))?;
    let header: Vec<String> = rd
        .headers()
        .with_context(|| format!("line 1: reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    let n = header.len();
    if n <= META_COLUMNS.len() || header[n - META_COLUMNS.len()..] != META_COLUMNS {
        bail!(
            "line 1: header must be x0..x<d-1> followed by {}",
            META_COLUMNS.join(",")
        );
    }
    let d = n - META_COLUMNS.len();
    for (j, h) in header[..d].iter().enumerate() {
        if *h != format!("x{j}") {
            bail!("line 1: column {} should be x{j}, found {h:?}", j + 1);
        }
    }
    let mut trace = ChainTrace::new(d);
    let mut x = vec![0.0; d];
    for rec in rd.records() {
        let rec = rec.map_err(|e| match e.position() {
            Some(p) => anyhow::anyhow!("line {}: {e}", p.line()),
            None => anyhow::anyhow!("{e}"),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = field(&rec[j], line, &header[j])?;
        }
        let divergent = match rec[d + 4].trim() {
            "0" => false,
            "1" => true,
            other => bail!("line {line}: column divergent: expected 0 or 1, found {other:?}"),
        };
        let meta = StepMeta {
            proposals_tried: field(&rec[d], line, "proposals_tried")?,
            accepted_index: field(&rec[d + 1], line, "accepted_index")?,
            legs: field(&rec[d + 2], line, "legs")?,
            epsilon: field(&rec[d + 3], line, "epsilon")?,
            divergent,
        };
        trace.push(&x, meta)?;
    }
    if trace.is_empty() {
        return Err(Usage(format!("trace {} has no rows", path.display())).into());
    }
    Ok(trace)
}
