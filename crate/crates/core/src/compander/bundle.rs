//! Versioned CSV bundle for randomized designs.
//!
//! ```text
//! # randquant-design v1
//! # mode=variable
//! # delta=1
//! # lambda=0.05
//! # distortion=...
//! # rate=...
//! # seed=7
//! # half_window=667
//! # first_index=-2310
//! map,abscissa,value
//! g,-3,-2.71...
//! w,-1.73...,-2.9...
//! ```
//!
//! Reals are written in shortest round-trip form, so a reloaded design
//! evaluates to the same cost.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{QuantError, Result};
use crate::grid::{ScalarGrid, YLattice};

use super::cost::RateMode;
use super::design::RandomizedDesign;
use super::map::{Expander, MonotoneMap};

const MAGIC: &str = "randquant-design v1";

pub fn write_design(design: &RandomizedDesign, out: &mut impl Write) -> Result<()> {
    writeln!(out, "# {MAGIC}")?;
    match design.mode {
        RateMode::Fixed { levels } => {
            writeln!(out, "# mode=fixed")?;
            writeln!(out, "# delta={}", design.delta)?;
            writeln!(out, "# levels={levels}")?;
        }
        RateMode::Variable { lambda } => {
            writeln!(out, "# mode=variable")?;
            writeln!(out, "# delta={}", design.delta)?;
            writeln!(out, "# lambda={lambda}")?;
        }
    }
    writeln!(out, "# distortion={}", design.distortion)?;
    writeln!(out, "# rate={}", design.rate)?;
    writeln!(out, "# seed={}", design.seed)?;
    writeln!(out, "# converged={}", design.converged)?;
    writeln!(out, "# half_window={}", design.expander.lattice().half_window)?;
    writeln!(out, "# first_index={}", design.expander.first_index())?;
    writeln!(out, "map,abscissa,value")?;
    let g = design.compressor.grid();
    for (x, v) in g.abscissae().zip(g.values()) {
        writeln!(out, "g,{x},{v}")?;
    }
    for (y, v) in design.expander.abscissae().zip(design.expander.values()) {
        writeln!(out, "w,{y},{v}")?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> QuantError {
    QuantError::Format(msg.into())
}

/// Parses a bundle. Distortion, rate and cost are taken from the header;
/// re-evaluate against the source to check them.
pub fn read_design(input: impl Read) -> Result<RandomizedDesign> {
    let mut header = BTreeMap::new();
    let mut gx = Vec::new();
    let mut gv = Vec::new();
    let mut wv = Vec::new();
    let mut saw_magic = false;
    for (no, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let lineno = no + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if rest == MAGIC {
                saw_magic = true;
            } else if let Some((k, v)) = rest.split_once('=') {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if line == "map,abscissa,value" {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(format!("line {lineno}: expected 3 columns")));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("line {lineno}: bad number {s:?}")));
        match cols[0] {
            "g" => {
                gx.push(parse(cols[1])?);
                gv.push(parse(cols[2])?);
            }
            "w" => wv.push(parse(cols[2])?),
            other => return Err(bad(format!("line {lineno}: unknown map {other:?}"))),
        }
    }
    if !saw_magic {
        return Err(bad(format!("missing '# {MAGIC}' header")));
    }
    let get = |k: &str| header.get(k).ok_or_else(|| bad(format!("missing header field {k}")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse::<f64>().map_err(|_| bad(format!("bad header field {k}"))) };
    let delta = num("delta")?;
    let mode = match get("mode")?.as_str() {
        "fixed" => RateMode::Fixed {
            levels: get("levels")?.parse().map_err(|_| bad("bad header field levels"))?,
        },
        "variable" => RateMode::Variable { lambda: num("lambda")? },
        other => return Err(bad(format!("unknown mode {other:?}"))),
    };
    let half_window: usize = get("half_window")?.parse().map_err(|_| bad("bad header field half_window"))?;
    let first_index: i64 = get("first_index")?.parse().map_err(|_| bad("bad header field first_index"))?;
    if gx.len() < 3 {
        return Err(bad("compressor needs at least 3 rows"));
    }
    let domain = ScalarGrid::new(gx[0], gx[gx.len() - 1], gv)?;
    let compressor = MonotoneMap::new(domain)?;
    let expander = Expander::new(YLattice { delta, half_window }, first_index, wv)?;
    let distortion = num("distortion")?;
    let rate = num("rate")?;
    Ok(RandomizedDesign {
        compressor,
        expander,
        delta,
        mode,
        distortion,
        rate,
        lagrangian_cost: distortion + mode.lambda() * rate,
        converged: header.get("converged").map(|v| v == "true").unwrap_or(true),
        iterations: 0,
        seed: header.get("seed").and_then(|v| v.parse().ok()).unwrap_or(0),
    })
}
