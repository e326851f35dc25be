//! Curve tables and convergence sweeps: how closely ASAU tracks the exact
//! `max(a x, b x)` it smooths.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::activation::{asau_forward, exact_max2, AsauParams};
use crate::error::{Error, Result};

/// Evenly spaced evaluation grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            lo: -5.0,
            hi: 5.0,
            step: 1e-3,
        }
    }
}

impl Grid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let g = Self { lo, hi, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step.is_finite()) {
            return Err(Error::param("grid bounds and step must be finite"));
        }
        if self.lo >= self.hi {
            return Err(Error::param(format!(
                "grid lower bound {} must be below upper bound {}",
                self.lo, self.hi
            )));
        }
        if self.step <= 0.0 {
            return Err(Error::param(format!("grid step must be positive, got {}", self.step)));
        }
        if (self.hi - self.lo) / self.step > 1e8 {
            return Err(Error::param("grid has more than 1e8 points"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        // Tolerate the rounding in (hi - lo) / step so that hi itself is kept.
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub params: AsauParams,
    pub values: Vec<f64>,
}

/// One ASAU family evaluated on a shared grid next to its exact target.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub x_grid: Vec<f64>,
    pub series: Vec<Series>,
    pub target_values: Vec<f64>,
}

/// Canonical series label, e.g. `a=0;b=1;alpha=1;beta=10`. It is parsed back
/// by [`CurveTable::from_csv`].
pub fn series_label(p: &AsauParams) -> String {
    format!("a={};b={};alpha={};beta={}", p.a, p.b, p.alpha, p.beta)
}

fn parse_label(label: &str, line: usize) -> Result<AsauParams> {
    if label.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::parse(
            line,
            format!("series label {label:?} contains whitespace"),
        ));
    }
    let mut vals = [None; 4];
    for part in label.split(';') {
        let (key, val) = part
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("malformed series label {label:?}")))?;
        let slot = match key {
            "a" => 0,
            "b" => 1,
            "alpha" => 2,
            "beta" => 3,
            other => return Err(Error::parse(line, format!("unknown label key {other:?}"))),
        };
        let v: f64 = val
            .parse()
            .map_err(|_| Error::parse(line, format!("bad number {val:?} in label")))?;
        if vals[slot].replace(v).is_some() {
            return Err(Error::parse(line, format!("duplicate key {key:?} in label")));
        }
    }
    match vals {
        [Some(a), Some(b), Some(alpha), Some(beta)] => {
            AsauParams::new(a, b, alpha, beta).map_err(|e| Error::parse(line, e.to_string()))
        }
        _ => Err(Error::parse(line, format!("series label {label:?} is missing keys"))),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl CurveTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,target");
        for s in &self.series {
            out.push(',');
            out.push_str(&s.label);
        }
        out.push('\n');
        for (i, x) in self.x_grid.iter().enumerate() {
            let _ = write!(out, "{},{}", fmt17(*x), fmt17(self.target_values[i]));
            for s in &self.series {
                let _ = write!(out, ",{}", fmt17(s.values[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty CSV"))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "x" || cols[1] != "target" {
            return Err(Error::parse(
                1,
                "header must start with x,target and name at least one series",
            ));
        }
        let mut series = cols[2..]
            .iter()
            .map(|label| {
                Ok(Series {
                    label: label.to_string(),
                    params: parse_label(label, 1)?,
                    values: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (a, b) = (series[0].params.a, series[0].params.b);
        if series.iter().any(|s| s.params.a != a || s.params.b != b) {
            return Err(Error::parse(1, "series disagree on (a, b)"));
        }

        let mut x_grid = Vec::new();
        let mut target_values = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::parse(
                    lineno,
                    format!("expected {} fields, found {}", cols.len(), fields.len()),
                ));
            }
            let mut nums = fields.iter().map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("bad number {f:?}")))
            });
            let x = nums.next().unwrap()?;
            if let Some(prev) = x_grid.last() {
                if x.is_nan() || x <= *prev {
                    return Err(Error::parse(lineno, "x column must be strictly increasing"));
                }
            }
            x_grid.push(x);
            target_values.push(nums.next().unwrap()?);
            for s in series.iter_mut() {
                s.values.push(nums.next().unwrap()?);
            }
        }
        if x_grid.is_empty() {
            return Err(Error::parse(2, "CSV has no data rows"));
        }
        Ok(Self {
            x_grid,
            series,
            target_values,
        })
    }
}

/// Evaluates every parameter set on `grid`. All sets must share `(a, b)` so
/// the table has a single exact target.
pub fn build_curve_table(grid: Grid, params_list: &[AsauParams]) -> Result<CurveTable> {
    grid.validate()?;
    let first = params_list
        .first()
        .ok_or_else(|| Error::Empty("parameter list".into()))?;
    for p in params_list {
        p.validate()?;
        if p.a != first.a || p.b != first.b {
            return Err(Error::param(format!(
                "all series must share (a, b); found ({}, {}) and ({}, {})",
                first.a, first.b, p.a, p.b
            )));
        }
    }
    let x_grid = grid.points();
    let target_values = x_grid.iter().map(|&x| exact_max2(first.a * x, first.b * x)).collect();
    let series = params_list
        .iter()
        .map(|p| Series {
            label: series_label(p),
            params: *p,
            values: x_grid.iter().map(|&x| asau_forward(x, p)).collect(),
        })
        .collect();
    Ok(CurveTable {
        x_grid,
        series,
        target_values,
    })
}

/// Largest absolute gap between ASAU and `max(a x, b x)` over the grid.
pub fn sup_error(p: &AsauParams, grid: Grid) -> f64 {
    (0..grid.len())
        .map(|i| {
            let x = grid.lo + i as f64 * grid.step;
            (asau_forward(x, p) - exact_max2(p.a * x, p.b * x)).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base: AsauParams,
    pub betas: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub grid: Grid,
}

impl SweepReport {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.sup_errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,sup_error\n");
        for (b, e) in self.betas.iter().zip(&self.sup_errors) {
            let _ = writeln!(out, "{},{}", fmt17(*b), fmt17(*e));
        }
        out
    }
}

pub fn beta_sweep(base: AsauParams, betas: &[f64], grid: Grid) -> Result<SweepReport> {
    grid.validate()?;
    base.validate()?;
    if betas.is_empty() {
        return Err(Error::Empty("beta list".into()));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::param("every beta must be finite and positive"));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("betas must be strictly increasing"));
    }
    let sup_errors = betas
        .iter()
        .map(|&beta| sup_error(&base.with_beta(beta), grid))
        .collect();
    Ok(SweepReport {
        base,
        betas: betas.to_vec(),
        sup_errors,
        grid,
    })
}
