//! Sensor-angle conditioning: resonance between observation angles and the
//! zero-free gaps between rational multiples of π.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::eigensystem::EigenBasis;
use crate::error::{Error, Result};
use crate::forward::decay_cutoff;

/// `|sin(k Δθ)|` below this counts as a resonance.
pub const RESONANCE_TOL: f64 = 1e-12;

/// Witness `k (θ1 - θ2) ≈ j π`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resonance {
    pub k: u32,
    pub j: i64,
}

/// Smallest `k ≤ k_max` with `|sin(k (θ1 - θ2))| < 1e-12`, if any.
pub fn is_resonant(theta1: f64, theta2: f64, k_max: u32) -> Option<Resonance> {
    let d = theta1 - theta2;
    (1..=k_max).find_map(|k| {
        let x = k as f64 * d;
        (x.sin().abs() < RESONANCE_TOL).then(|| Resonance {
            k,
            j: (x / PI).round() as i64,
        })
    })
}

/// All resonant pairs among a set of angles, as `(i, j, witness)`.
pub fn resonant_pairs(angles: &[f64], k_max: u32) -> Vec<(usize, usize, Resonance)> {
    let mut out = Vec::new();
    for i in 0..angles.len() {
        for j in i + 1..angles.len() {
            if let Some(r) = is_resonant(angles[i], angles[j], k_max) {
                out.push((i, j, r));
            }
        }
    }
    out
}

/// Reduced fraction `num/den`, compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// Which denominators enter the scan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorRule {
    /// Every `2 ≤ b < b_max`.
    #[default]
    All,
    /// Prime `b < b_max` only.
    Primes,
}

impl DenominatorRule {
    fn admits(self, b: u64) -> bool {
        match self {
            DenominatorRule::All => b >= 2,
            DenominatorRule::Primes => is_prime(b),
        }
    }
}

/// Interval `(left, right)` of angles, in units of π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub left: Fraction,
    pub right: Fraction,
}

impl Gap {
    pub fn length_pi(&self) -> f64 {
        let num = self.right.num as i128 * self.left.den as i128 - self.left.num as i128 * self.right.den as i128;
        num as f64 / (self.left.den as f64 * self.right.den as f64)
    }

    pub fn length_rad(&self) -> f64 {
        self.length_pi() * PI
    }

    pub fn length_deg(&self) -> f64 {
        self.length_pi() * 180.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub b_max: u64,
    pub rule: DenominatorRule,
    /// Sorted reduced fractions in `(0, 1)`.
    pub fractions: Vec<Fraction>,
    /// Maximal zero-free intervals, from `0` to `1`.
    pub gaps: Vec<Gap>,
    pub query: Fraction,
    /// Largest fraction strictly below the query.
    pub below: Option<Fraction>,
    /// Smallest fraction strictly above the query.
    pub above: Option<Fraction>,
}

impl GapReport {
    /// `(below, query)`, the zero-free stretch ending at the query.
    pub fn gap_below(&self) -> Option<Gap> {
        self.below.map(|left| Gap {
            left,
            right: self.query,
        })
    }

    /// `(query, above)`.
    pub fn gap_above(&self) -> Option<Gap> {
        self.above.map(|right| Gap {
            left: self.query,
            right,
        })
    }

    /// Widest gap (first one on ties).
    pub fn widest(&self) -> Gap {
        *self
            .gaps
            .iter()
            .fold(None::<&Gap>, |best, g| match best {
                Some(b) if b.length_pi() >= g.length_pi() => Some(b),
                _ => Some(g),
            })
            .expect("at least one gap")
    }

    /// One row per fraction: position and the gaps on either side.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "fraction,position_pi,position_rad,left_gap_rad,right_gap_rad,left_gap_deg,right_gap_deg")?;
        for (i, f) in self.fractions.iter().enumerate() {
            let (l, r) = (self.gaps[i], self.gaps[i + 1]);
            writeln!(
                out,
                "{f},{},{},{},{},{},{}",
                f.value(),
                f.value() * PI,
                l.length_rad(),
                r.length_rad(),
                l.length_deg(),
                r.length_deg()
            )?;
        }
        Ok(())
    }
}

/// Reduced fractions `a/b ∈ (0, 1)` with admitted `b < b_max`, and the
/// intervals between them.
pub fn gap_report(b_max: u64, rule: DenominatorRule, query: Fraction) -> Result<GapReport> {
    if b_max < 2 {
        return Err(Error::Domain(format!("b_max must be >= 2, got {b_max}")));
    }
    if query.num == 0 || query.num >= query.den {
        return Err(Error::Domain(format!("query {query} must lie in (0, 1)")));
    }
    let mut fractions: Vec<Fraction> = (2..b_max)
        .filter(|&b| rule.admits(b))
        .flat_map(|b| (1..b).filter(move |&a| gcd(a, b) == 1).map(move |a| Fraction { num: a, den: b }))
        .collect();
    fractions.sort();
    let zero = Fraction { num: 0, den: 1 };
    let one = Fraction { num: 1, den: 1 };
    let mut gaps = Vec::with_capacity(fractions.len() + 1);
    let mut left = zero;
    for &f in fractions.iter().chain(std::iter::once(&one)) {
        gaps.push(Gap { left, right: f });
        left = f;
    }
    let below = fractions.iter().rev().find(|f| **f < query).copied();
    let above = fractions.iter().find(|f| **f > query).copied();
    Ok(GapReport {
        b_max,
        rule,
        fractions,
        gaps,
        query,
        below,
        above,
    })
}

/// Number of modes with `e^{-λ_n dt} ≥ δ/10`.
pub fn usable_mode_count(dt: f64, delta: f64, basis: &EigenBasis) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(basis.count_up_to(decay_cutoff(dt, delta)))
}
