//! Scenarios, deterministic strategies and the local side of the Bell
//! functional.

use num::bigint::{BigInt, BigUint};
use num::traits::{One, Zero};
use serde::Serialize;
use std::fmt;

use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use crate::strategies::count_zero_sum_convolution;

/// Largest settings count representable by the bit-vector strategy storage.
pub const MAX_SETTINGS: usize = 64;

/// An `n`-party, `m`-setting experiment on a GHZ state of visibility `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub n: usize,
    pub m: usize,
    pub v: Rational,
    /// Asymptotic closed forms are only claimed for prime `m`.
    pub m_prime: bool,
}

impl Scenario {
    pub fn v_f64(&self) -> f64 {
        rational::to_f64(&self.v)
    }
}

pub fn validate_scenario(n: usize, m: usize, v: Rational) -> Result<Scenario> {
    if n < 2 {
        return Err(Error::validation("n", format!("n < 2 (got {n})")));
    }
    if m < 2 {
        return Err(Error::validation("m", format!("m < 2 (got {m})")));
    }
    if v < Rational::zero() || v > Rational::one() {
        return Err(Error::validation(
            "v",
            format!("v outside [0, 1] (got {})", rational::display(&v)),
        ));
    }
    Ok(Scenario {
        n,
        m,
        v,
        m_prime: is_prime(m),
    })
}

pub fn is_prime(m: usize) -> bool {
    if m < 2 {
        return false;
    }
    (2..).take_while(|d| d * d <= m).all(|d| !m.is_multiple_of(d))
}

/// One member `(x, y)` of the inequality family for an `(n, m)` scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BellParams {
    pub n: usize,
    pub m: usize,
    pub x: Rational,
    pub y: Rational,
}

impl BellParams {
    pub fn new(n: usize, m: usize, x: Rational, y: Rational) -> Self {
        BellParams { n, m, x, y }
    }
}

/// Local deterministic strategy: bit `i` of `parties[k]` is set iff party `k`
/// outputs +1 for setting `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DeterministicStrategy {
    m: usize,
    parties: Vec<u64>,
}

impl DeterministicStrategy {
    pub fn new(m: usize, parties: Vec<u64>) -> Result<Self> {
        if m == 0 || m > MAX_SETTINGS {
            return Err(Error::validation(
                "m",
                format!("settings count must be in 1..={MAX_SETTINGS}, got {m}"),
            ));
        }
        let mask = settings_mask(m);
        if let Some(k) = parties.iter().position(|&bits| bits & !mask != 0) {
            return Err(Error::validation(
                "strategy",
                format!("party {k} has indicator bits beyond m = {m}"),
            ));
        }
        Ok(DeterministicStrategy { m, parties })
    }

    /// Builds a strategy from 0/1 indicator rows, one row per party.
    pub fn from_indicators(rows: &[&[u8]]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        let mut parties = Vec::with_capacity(rows.len());
        for (k, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::validation(
                    "strategy",
                    format!("party {k} has {} settings, expected {m}", row.len()),
                ));
            }
            let mut bits = 0u64;
            for (i, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 => bits |= 1 << i,
                    other => {
                        return Err(Error::validation(
                            "strategy",
                            format!("indicator entries must be 0 or 1, got {other}"),
                        ))
                    }
                }
            }
            parties.push(bits);
        }
        DeterministicStrategy::new(m, parties)
    }

    pub fn all_ones(n: usize, m: usize) -> Self {
        DeterministicStrategy {
            m,
            parties: vec![settings_mask(m); n],
        }
    }

    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn parties(&self) -> usize {
        self.parties.len()
    }

    pub fn bits(&self) -> &[u64] {
        &self.parties
    }

    pub fn indicator(&self, party: usize, setting: usize) -> bool {
        self.parties[party] >> setting & 1 == 1
    }

    /// Per-party number of +1 outputs (alpha, beta, gamma, ...).
    pub fn counts(&self) -> Vec<u32> {
        self.parties.iter().map(|b| b.count_ones()).collect()
    }

    pub(crate) fn check_shape(&self, n: usize, m: usize) -> Result<()> {
        if self.parties.len() != n || self.m != m {
            return Err(Error::DimensionMismatch {
                expected_parties: n,
                expected_settings: m,
                got_parties: self.parties.len(),
                got_settings: self.m,
            });
        }
        Ok(())
    }
}

impl fmt::Display for DeterministicStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, bits) in self.parties.iter().enumerate() {
            if k > 0 {
                f.write_str("|")?;
            }
            for i in 0..self.m {
                f.write_str(if bits >> i & 1 == 1 { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

pub(crate) fn settings_mask(m: usize) -> u64 {
    if m >= 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

/// Product of all counts and the sum over parties of the product of the
/// other parties' counts.
pub(crate) fn count_products(counts: &[u32]) -> (BigUint, BigUint) {
    let product = counts
        .iter()
        .fold(BigUint::one(), |acc, &c| acc * BigUint::from(c));
    let omitted = (0..counts.len())
        .map(|skip| {
            counts
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != skip)
                .fold(BigUint::one(), |acc, (_, &c)| acc * BigUint::from(c))
        })
        .fold(BigUint::zero(), |acc, t| acc + t);
    (product, omitted)
}

pub(crate) fn big(u: BigUint) -> Rational {
    Rational::from_integer(BigInt::from(u))
}

/// Exact left-hand side of the local non-violation condition:
/// `(alpha beta gamma ...) y - S x - sum over parties of the product of the
/// other parties' counts`. The closed form holds for every strategy, including
/// ones where some party never outputs +1.
pub fn bell_value_deterministic(
    s: &DeterministicStrategy,
    params: &BellParams,
) -> Result<Rational> {
    s.check_shape(params.n, params.m)?;
    let zero_sum = count_zero_sum_convolution(s, params.m)?;
    let (product, omitted) = count_products(&s.counts());
    Ok(big(product) * &params.y - big(zero_sum) * &params.x - big(omitted))
}
