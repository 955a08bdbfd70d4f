//! Text format for a solved policy and its value table.
//!
//! ```text
//! invlab-policy 1
//! c = 1
//! c_h = 1
//! c_p = 3
//! q = 0.7
//! n = 50
//! x0 = 0
//! unchecked = false
//! demand = {"family":"uniform","a":0,"b":1}
//! demand_points = 512
//! grid_lo = -2
//! grid_step = 0.00390625
//! grid_len = 706
//! n0 = 0
//! principal_lower = 0.6029...
//! limit_upper = 0.75
//! expected_cost = ...
//! [policy]
//! k,mode,level
//! 1,active,0.39...
//! 2,passive,
//! [values]
//! x,v_0,v_1,...,v_n
//! -2,0,...
//! ```
//!
//! Floats are written in shortest round-trip form, so loading reproduces
//! every value bit for bit.

use std::fmt::Write as _;

use crate::demand::{DemandModel, DemandSpec};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solver::{LevelBounds, PeriodRule, PolicyTable, Solution, StateGrid, ValueGrid};

pub const SCHEMA_VERSION: u32 = 1;
const MAGIC: &str = "invlab-policy";

/// Contents of a policy file.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub params: ModelParams,
    pub demand: DemandSpec,
    pub demand_points: usize,
    pub policy: PolicyTable,
    pub values: ValueGrid,
    pub expected_cost: f64,
}

impl PolicyFile {
    pub fn new(sol: &Solution, demand: &DemandModel) -> Self {
        PolicyFile {
            params: sol.params,
            demand: demand.spec().clone(),
            demand_points: demand.points(),
            policy: sol.policy.clone(),
            values: sol.values.clone(),
            expected_cost: sol.expected_cost,
        }
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let g = &self.values.grid;
        let mut s = String::new();
        let demand = serde_json::to_string(&self.demand).expect("demand spec serializes");
        let _ = writeln!(s, "{MAGIC} {SCHEMA_VERSION}");
        let _ = writeln!(s, "c = {}", p.c);
        let _ = writeln!(s, "c_h = {}", p.c_h);
        let _ = writeln!(s, "c_p = {}", p.c_p);
        let _ = writeln!(s, "q = {}", p.q);
        let _ = writeln!(s, "n = {}", p.n);
        let _ = writeln!(s, "x0 = {}", p.x0);
        let _ = writeln!(s, "unchecked = {}", p.unchecked);
        let _ = writeln!(s, "demand = {demand}");
        let _ = writeln!(s, "demand_points = {}", self.demand_points);
        let _ = writeln!(s, "grid_lo = {}", g.lo);
        let _ = writeln!(s, "grid_step = {}", g.step);
        let _ = writeln!(s, "grid_len = {}", g.len);
        let _ = writeln!(s, "n0 = {}", self.policy.n0);
        let _ = writeln!(s, "principal_lower = {}", self.policy.bounds.principal_lower);
        let _ = writeln!(s, "limit_upper = {}", self.policy.bounds.limit_upper);
        let _ = writeln!(s, "state_lo = {}", self.policy.state_lo);
        let _ = writeln!(s, "state_hi = {}", self.policy.state_hi);
        let _ = writeln!(s, "expected_cost = {}", self.expected_cost);
        s.push_str("[policy]\nk,mode,level\n");
        for (i, rule) in self.policy.rules.iter().enumerate() {
            match rule {
                PeriodRule::Active { level } => {
                    let _ = writeln!(s, "{},active,{}", i + 1, level);
                }
                PeriodRule::Passive => {
                    let _ = writeln!(s, "{},passive,", i + 1);
                }
            }
        }
        s.push_str("[values]\nx");
        for k in 0..self.values.rows.len() {
            let _ = write!(s, ",v_{k}");
        }
        s.push('\n');
        for (i, x) in g.abscissae().enumerate() {
            let _ = write!(s, "{x}");
            for row in &self.values.rows {
                let _ = write!(s, ",{}", row[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, first) = lines.next().ok_or_else(|| fmt_err(1, "empty file"))?;
        match first.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == SCHEMA_VERSION.to_string() => {}
            _ => return Err(fmt_err(1, format!("expected header `{MAGIC} {SCHEMA_VERSION}`"))),
        }

        let mut header = std::collections::HashMap::new();
        let mut section_line = 0;
        for (no, line) in lines.by_ref() {
            if line == "[policy]" {
                section_line = no;
                break;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| fmt_err(no, "expected `key = value`"))?;
            header.insert(k.to_string(), (no, v.to_string()));
        }
        if section_line == 0 {
            return Err(fmt_err(text.lines().count(), "missing [policy] section"));
        }
        let get = |key: &str| -> Result<&(usize, String)> {
            header
                .get(key)
                .ok_or_else(|| fmt_err(section_line, format!("missing header key `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            let (no, v) = get(key)?;
            v.parse().map_err(|_| fmt_err(*no, format!("`{key}` is not a number")))
        };
        let int = |key: &str| -> Result<usize> {
            let (no, v) = get(key)?;
            v.parse().map_err(|_| fmt_err(*no, format!("`{key}` is not an integer")))
        };
        let unchecked = {
            let (no, v) = get("unchecked")?;
            v.parse::<bool>()
                .map_err(|_| fmt_err(*no, "`unchecked` is not a boolean"))?
        };
        let params = ModelParams {
            c: num("c")?,
            c_h: num("c_h")?,
            c_p: num("c_p")?,
            q: num("q")?,
            n: int("n")?,
            x0: num("x0")?,
            unchecked,
        };
        let demand: DemandSpec = {
            let (no, v) = get("demand")?;
            serde_json::from_str(v).map_err(|e| fmt_err(*no, format!("bad demand descriptor: {e}")))?
        };
        let grid = StateGrid {
            lo: num("grid_lo")?,
            step: num("grid_step")?,
            len: int("grid_len")?,
        };

        let (no, cols) = lines.next().ok_or_else(|| fmt_err(section_line, "missing policy header"))?;
        if cols != "k,mode,level" {
            return Err(fmt_err(no, "expected `k,mode,level`"));
        }
        let mut rules = Vec::with_capacity(params.n);
        for _ in 0..params.n {
            let (no, line) = lines.next().ok_or_else(|| fmt_err(no, "policy section ends early"))?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 || f[0] != (rules.len() + 1).to_string() {
                return Err(fmt_err(no, "malformed policy row"));
            }
            rules.push(match f[1] {
                "active" => PeriodRule::Active {
                    level: f[2].parse().map_err(|_| fmt_err(no, "bad level"))?,
                },
                "passive" => PeriodRule::Passive,
                other => return Err(fmt_err(no, format!("unknown mode `{other}`"))),
            });
        }
        let (no, marker) = lines.next().ok_or_else(|| fmt_err(0, "missing [values] section"))?;
        if marker != "[values]" {
            return Err(fmt_err(no, "expected [values]"));
        }
        let (no, cols) = lines.next().ok_or_else(|| fmt_err(no, "missing value header"))?;
        if cols.split(',').count() != params.n + 2 {
            return Err(fmt_err(no, "value header has the wrong width"));
        }
        let mut rows = vec![Vec::with_capacity(grid.len); params.n + 1];
        for i in 0..grid.len {
            let (no, line) = lines.next().ok_or_else(|| fmt_err(no, "value section ends early"))?;
            let mut fields = line.split(',');
            let x: f64 = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| fmt_err(no, "bad abscissa"))?;
            if x != grid.abscissa(i) {
                return Err(fmt_err(no, "abscissa does not match the grid"));
            }
            for row in rows.iter_mut() {
                let v: f64 = fields
                    .next()
                    .and_then(|f| f.parse().ok())
                    .ok_or_else(|| fmt_err(no, "bad value"))?;
                row.push(v);
            }
            if fields.next().is_some() {
                return Err(fmt_err(no, "too many columns"));
            }
        }
        Ok(PolicyFile {
            params,
            demand,
            demand_points: int("demand_points")?,
            policy: PolicyTable {
                n0: int("n0")?,
                rules,
                bounds: LevelBounds {
                    principal_lower: num("principal_lower")?,
                    limit_upper: num("limit_upper")?,
                },
                state_lo: num("state_lo")?,
                state_hi: num("state_hi")?,
            },
            values: ValueGrid { grid, rows },
            expected_cost: num("expected_cost")?,
        })
    }
}

fn fmt_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Format {
        line,
        reason: reason.into(),
    }
}
