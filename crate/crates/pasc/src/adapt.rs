//! Adaptive method selection over an offline performance table, plus the
//! position-mismatch detector that gates the semantic pipeline at run time.
//!
//! The table holds measured distortion (MSE) per method, SNR, and bit budget.
//! `select` picks the best entry meeting a distortion target under either a
//! complexity-first or a bandwidth-first objective; `recommend_new` proposes
//! the next configuration worth measuring.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffmask::{mask_diff, zero_ratio};
use crate::error::{Error, Result};
use crate::image::Image;

/// Mask threshold used by the mismatch detector.
pub const DETECT_EPS: f64 = 0.4;
/// A masked difference with at most this fraction of zero pixels indicates a
/// stale or wrong position (boundary counts as mismatch).
pub const DETECT_ZERO_FLOOR: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Pasc { eps: f64 },
    Jscc,
    Baseline,
}

impl Method {
    /// Relative decoding-complexity order: transform baseline < plain
    /// semantic codec < semantic codec with view synthesis and fusion.
    pub fn complexity_rank(&self) -> u8 {
        match self {
            Method::Baseline => 0,
            Method::Jscc => 1,
            Method::Pasc { .. } => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Pasc { eps } => write!(f, "PASC[eps={eps}]"),
            Method::Jscc => write!(f, "JSCC"),
            Method::Baseline => write!(f, "BASELINE"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "JSCC" {
            return Ok(Method::Jscc);
        }
        if s == "BASELINE" {
            return Ok(Method::Baseline);
        }
        if let Some(rest) = s.strip_prefix("PASC[eps=").and_then(|r| r.strip_suffix(']')) {
            let eps: f64 = rest
                .parse()
                .map_err(|_| Error::Policy(format!("bad method string `{s}`")))?;
            return Ok(Method::Pasc { eps });
        }
        Err(Error::Policy(format!("bad method string `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRecord {
    pub method: Method,
    pub snr_db: f64,
    pub bits: usize,
    /// Measured reconstruction MSE at this operating point.
    pub metric: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyObjective {
    /// Cheapest decoder among the qualifying entries.
    ComplexityFirst,
    /// Fewest transmitted bits among the qualifying entries.
    BandwidthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub record: PerformanceRecord,
    /// False when no entry met the target and the best effort was returned.
    pub satisfied: bool,
}

fn at_snr<'a>(table: &'a [PerformanceRecord], snr_db: f64) -> Vec<&'a PerformanceRecord> {
    table
        .iter()
        .filter(|r| (r.snr_db - snr_db).abs() < 1e-6)
        .collect()
}

fn objective_key(r: &PerformanceRecord, objective: PolicyObjective) -> (u64, u64, f64) {
    match objective {
        PolicyObjective::ComplexityFirst => (r.method.complexity_rank() as u64, r.bits as u64, r.metric),
        PolicyObjective::BandwidthFirst => (r.bits as u64, r.method.complexity_rank() as u64, r.metric),
    }
}

/// Picks the record at `snr_db` whose metric meets `target` and minimizes the
/// objective; falls back to the lowest-metric record (with `satisfied:
/// false`) when nothing qualifies.
pub fn select(
    table: &[PerformanceRecord],
    snr_db: f64,
    target: f64,
    objective: PolicyObjective,
) -> Result<Decision> {
    let here = at_snr(table, snr_db);
    if here.is_empty() {
        return Err(Error::Policy(format!("no performance records at {snr_db} dB")));
    }
    let qualifying: Vec<&&PerformanceRecord> = here.iter().filter(|r| r.metric <= target).collect();
    if let Some(best) = qualifying.iter().min_by(|a, b| {
        let (a0, a1, a2) = objective_key(a, objective);
        let (b0, b1, b2) = objective_key(b, objective);
        (a0, a1).cmp(&(b0, b1)).then(a2.total_cmp(&b2))
    }) {
        return Ok(Decision {
            record: ***best,
            satisfied: true,
        });
    }
    let fallback = here
        .iter()
        .min_by(|a, b| a.metric.total_cmp(&b.metric))
        .expect("non-empty");
    Ok(Decision {
        record: **fallback,
        satisfied: false,
    })
}

/// A hook for an external policy (e.g. a learned one). A returned record is
/// honored only if it exists in the table and meets the target; anything else
/// falls back to [`select`].
pub trait Advisor {
    fn advise(
        &self,
        table: &[PerformanceRecord],
        snr_db: f64,
        target: f64,
        objective: PolicyObjective,
    ) -> Option<PerformanceRecord>;
}

pub fn select_with_advisor(
    table: &[PerformanceRecord],
    snr_db: f64,
    target: f64,
    objective: PolicyObjective,
    advisor: &dyn Advisor,
) -> Result<Decision> {
    if let Some(r) = advisor.advise(table, snr_db, target, objective) {
        let known = table.iter().any(|t| t == &r);
        if known && (r.snr_db - snr_db).abs() < 1e-6 && r.metric <= target {
            return Ok(Decision {
                record: r,
                satisfied: true,
            });
        }
    }
    select(table, snr_db, target, objective)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub method: Method,
    pub bits: usize,
}

const EPS_LADDER: [f64; 2] = [0.4, 1.0];
const MIN_BITS: usize = 64;

/// Proposes the next semantic-codec configuration worth measuring at this
/// SNR: if a semantic entry already meets the target, try half its bit
/// budget; otherwise try the next unexplored mask threshold at the geometric
/// midpoint of the measured budgets.
pub fn recommend_new(table: &[PerformanceRecord], snr_db: f64, target: f64) -> Result<Recommendation> {
    let here = at_snr(table, snr_db);
    if here.is_empty() {
        return Err(Error::Policy(format!("no performance records at {snr_db} dB")));
    }
    let qualifying_pasc = here
        .iter()
        .filter(|r| matches!(r.method, Method::Pasc { .. }) && r.metric <= target)
        .min_by_key(|r| r.bits);
    if let Some(r) = qualifying_pasc {
        let bits = r.bits / 2;
        if bits < MIN_BITS {
            return Err(Error::NoRecommendation);
        }
        return Ok(Recommendation {
            method: r.method,
            bits,
        });
    }
    let tried: Vec<f64> = here
        .iter()
        .filter_map(|r| match r.method {
            Method::Pasc { eps } => Some(eps),
            _ => None,
        })
        .collect();
    let next_eps = EPS_LADDER
        .iter()
        .find(|e| !tried.iter().any(|t| (*t - **e).abs() < 1e-9))
        .ok_or(Error::NoRecommendation)?;
    // geometric midpoint of the distinct budgets, snapped to a power of two
    let mut budgets: Vec<usize> = here.iter().map(|r| r.bits).collect();
    budgets.sort_unstable();
    budgets.dedup();
    let mean_log2 = budgets.iter().map(|&b| (b as f64).log2()).sum::<f64>() / budgets.len() as f64;
    let bits = (2f64.powf(mean_log2.round()) as usize).max(MIN_BITS);
    Ok(Recommendation {
        method: Method::Pasc { eps: *next_eps },
        bits,
    })
}

/// True when the camera image and the position-synthesized image disagree so
/// broadly that the difference is no longer sparse — i.e. the reported
/// position is likely stale or wrong.
pub fn detect_mismatch(p: &Image, p_syn: &Image) -> Result<bool> {
    let d = mask_diff(p, p_syn, DETECT_EPS)?;
    Ok(zero_ratio(&d) <= DETECT_ZERO_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Position checks out: transmit the masked difference.
    UsePasc,
    /// Mismatch detected: fall back to sending the full image.
    UseFallback,
}

pub fn route(p: &Image, p_syn: &Image) -> Result<Route> {
    Ok(if detect_mismatch(p, p_syn)? {
        Route::UseFallback
    } else {
        Route::UsePasc
    })
}

// --------------------------------------------------------------- table file

/// Writes the table as CSV: `method,snr_db,bits,metric`.
pub fn save_table(table: &[PerformanceRecord], path: &Path) -> Result<()> {
    let mut out = String::from("method,snr_db,bits,metric\n");
    for r in table {
        out.push_str(&format!("{},{},{},{}\n", r.method, r.snr_db, r.bits, r.metric));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<Vec<PerformanceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    parse_table(&text)
}

pub fn parse_table(text: &str) -> Result<Vec<PerformanceRecord>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("method")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Load(format!("table line {}: expected 4 fields", ln + 1)));
        }
        let bad = |what: &str| Error::Load(format!("table line {}: bad {what}", ln + 1));
        out.push(PerformanceRecord {
            method: fields[0].parse()?,
            snr_db: fields[1].parse().map_err(|_| bad("snr"))?,
            bits: fields[2].parse().map_err(|_| bad("bits"))?,
            metric: fields[3].parse().map_err(|_| bad("metric"))?,
        });
    }
    Ok(out)
}

/// Reference operating table measured on the default desk-scale setup.
pub fn reference_table() -> Vec<PerformanceRecord> {
    parse_table(include_str!("../data/perf_table.csv")).expect("bundled table parses")
}
