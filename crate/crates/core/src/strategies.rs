//! Zero-sum counting, constraint lines and deterministic strategy enumeration.
//!
//! A strategy with per-party counts `c_k > 0` and zero-sum count `S` yields
//! the line `y <= p + q x` with `p = sum 1/c_k` and `q = S / prod c_k`.
//! Two enumerators feed the envelope: the full product space of nonzero
//! indicator vectors (small scale) and regular arrangements (prefix sets for
//! every party but `A`, a cyclic interval for `A`).

use num::bigint::{BigInt, BigUint};
use num::traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{big, count_products, settings_mask, DeterministicStrategy, MAX_SETTINGS};
use crate::rational::Rational;

pub const DEFAULT_BUDGET: u64 = 100_000_000;

/// Exhaustive keys pack sorted counts into 7-bit fields of a `u128`.
const MAX_EXHAUSTIVE_PARTIES: usize = 18;

const REGULAR_HINT: &str = "use regular arrangements (--mode regular) for this size";

// ---------------------------------------------------------------------------
// Zero-sum counting

/// Reference count of index tuples, one +1 index per party, whose sum is
/// divisible by `m`. Direct nested iteration; exponential in `n`.
pub fn count_zero_sum_naive(s: &DeterministicStrategy, m: usize) -> Result<BigUint> {
    s.check_shape(s.parties(), m)?;
    let sets: Vec<Vec<usize>> = s
        .bits()
        .iter()
        .map(|&b| (0..m).filter(|&i| b >> i & 1 == 1).collect())
        .collect();
    if sets.iter().any(|set| set.is_empty()) {
        return Ok(BigUint::zero());
    }
    let mut cursor = vec![0usize; sets.len()];
    let mut hits = BigUint::zero();
    loop {
        let sum: usize = cursor.iter().zip(&sets).map(|(&c, set)| set[c]).sum();
        if sum.is_multiple_of(m) {
            hits += 1u32;
        }
        // odometer, last party fastest
        let mut k = sets.len();
        loop {
            if k == 0 {
                return Ok(hits);
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < sets[k].len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}

/// Same count as [`count_zero_sum_naive`] via iterated cyclic convolution of
/// the indicator vectors over `Z_m`; entry 0 of the final convolution.
pub fn count_zero_sum_convolution(s: &DeterministicStrategy, m: usize) -> Result<BigUint> {
    s.check_shape(s.parties(), m)?;
    let dist = residue_distribution(s.bits(), m);
    Ok(dist.into_iter().next().unwrap_or_default())
}

/// Number of index tuples with each residue of the index sum.
pub(crate) fn residue_distribution(sets: &[u64], m: usize) -> Vec<BigUint> {
    match residue_distribution_u128(sets, m) {
        Some(d) => d.into_iter().map(BigUint::from).collect(),
        None => residue_distribution_big(sets, m),
    }
}

fn residue_distribution_u128(sets: &[u64], m: usize) -> Option<Vec<u128>> {
    let mut dist = vec![0u128; m];
    dist[0] = 1;
    let mut next = vec![0u128; m];
    for &set in sets {
        next.iter_mut().for_each(|e| *e = 0);
        for i in (0..m).filter(|&i| set >> i & 1 == 1) {
            for (r, &d) in dist.iter().enumerate() {
                let slot = &mut next[(r + i) % m];
                *slot = slot.checked_add(d)?;
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Some(dist)
}

fn residue_distribution_big(sets: &[u64], m: usize) -> Vec<BigUint> {
    let mut dist = vec![BigUint::zero(); m];
    dist[0] = BigUint::one();
    for &set in sets {
        let mut next = vec![BigUint::zero(); m];
        for i in (0..m).filter(|&i| set >> i & 1 == 1) {
            for (r, d) in dist.iter().enumerate() {
                next[(r + i) % m] += d;
            }
        }
        dist = next;
    }
    dist
}

/// Residue distribution for parties that all use prefix sets `{0, .., c-1}`.
/// Each step is a cyclic window sum, so the cost is `O(n m)`.
fn prefix_distribution(counts: &[u32], m: usize) -> Vec<BigUint> {
    match prefix_distribution_u128(counts, m) {
        Some(d) => d.into_iter().map(BigUint::from).collect(),
        None => {
            let sets: Vec<u64> = counts.iter().map(|&c| settings_mask(c as usize)).collect();
            residue_distribution_big(&sets, m)
        }
    }
}

fn prefix_distribution_u128(counts: &[u32], m: usize) -> Option<Vec<u128>> {
    let mut dist = vec![0u128; m];
    dist[0] = 1;
    let mut next = vec![0u128; m];
    for &c in counts {
        let c = c as usize;
        // window = sum of dist[(r - j) mod m] for j < c
        let mut window = 0u128;
        for j in 0..c {
            window = window.checked_add(dist[(m - j) % m])?;
        }
        for r in 0..m {
            next[r] = window;
            window = window.checked_add(dist[(r + 1) % m])? - dist[(r + 1 + m - c) % m];
        }
        std::mem::swap(&mut dist, &mut next);
    }
    Some(dist)
}

// ---------------------------------------------------------------------------
// Constraint lines

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LineSource {
    Strategy(DeterministicStrategy),
    Regular(RegularArrangement),
    Family(String),
}

impl fmt::Display for LineSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LineSource::Strategy(s) => write!(f, "strategy:{s}"),
            LineSource::Regular(r) => write!(f, "regular:{r}"),
            LineSource::Family(tag) => write!(f, "family:{tag}"),
        }
    }
}

/// `y <= p + q x`, with the strategy (or family) that generated it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintLine {
    pub p: Rational,
    pub q: Rational,
    pub source: LineSource,
}

impl ConstraintLine {
    pub fn new(p: Rational, q: Rational, source: LineSource) -> Self {
        ConstraintLine { p, q, source }
    }

    pub fn at(&self, x: &Rational) -> Rational {
        &self.p + &self.q * x
    }

    pub fn key(&self) -> (Rational, Rational) {
        (self.p.clone(), self.q.clone())
    }
}

/// `p = sum 1/c_k = (sum of (n-1)-products) / prod c_k`, `q = S / prod c_k`.
pub(crate) fn line_params(counts: &[u32], zero_sum: &BigUint) -> (Rational, Rational) {
    let (product, omitted) = count_products(counts);
    let product = BigInt::from(product);
    let p = Rational::new(omitted.into(), product.clone());
    let q = Rational::new(zero_sum.clone().into(), product);
    (p, q)
}

pub fn line_from_strategy(s: &DeterministicStrategy, m: usize) -> Result<ConstraintLine> {
    s.check_shape(s.parties(), m)?;
    let counts = s.counts();
    if let Some(party) = counts.iter().position(|&c| c == 0) {
        return Err(Error::VacuousConstraint { party });
    }
    let zero_sum = count_zero_sum_convolution(s, m)?;
    let (p, q) = line_params(&counts, &zero_sum);
    Ok(ConstraintLine::new(p, q, LineSource::Strategy(s.clone())))
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration

/// Every strategy whose parties all output +1 at least once, in lexicographic
/// order of the per-party bit patterns (party 0 most significant).
#[derive(Debug, Clone)]
pub struct ExhaustiveStrategies {
    n: usize,
    m: usize,
    total: u64,
}

/// `(2^m - 1)^n`, saturating.
pub fn exhaustive_size(n: usize, m: usize) -> u128 {
    if m >= 128 {
        return u128::MAX;
    }
    let base = (1u128 << m) - 1;
    (0..n)
        .try_fold(1u128, |acc, _| acc.checked_mul(base))
        .unwrap_or(u128::MAX)
}

pub fn enumerate_all(n: usize, m: usize, budget: u64) -> Result<ExhaustiveStrategies> {
    check_dims(n, m)?;
    let required = exhaustive_size(n, m);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded {
            required,
            budget: budget as u128,
            hint: REGULAR_HINT,
        });
    }
    Ok(ExhaustiveStrategies {
        n,
        m,
        total: required as u64,
    })
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n < 1 {
        return Err(Error::validation("n", "need at least one party"));
    }
    if !(1..=MAX_SETTINGS).contains(&m) {
        return Err(Error::validation(
            "m",
            format!("settings count must be in 1..={MAX_SETTINGS}"),
        ));
    }
    Ok(())
}

impl ExhaustiveStrategies {
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> StrategyIter {
        self.range(0, self.total)
    }

    /// Strategies with ordinal in `start..end`.
    pub fn range(&self, start: u64, end: u64) -> StrategyIter {
        let end = end.min(self.total);
        let start = start.min(end);
        let base = settings_mask(self.m);
        let mut digits = vec![1u64; self.n];
        let mut rest = start;
        for d in digits.iter_mut().rev() {
            *d = rest % base + 1;
            rest /= base;
        }
        StrategyIter {
            m: self.m,
            digits,
            remaining: end - start,
        }
    }

    /// Splits the ordinal range into `parts` contiguous, disjoint chunks that
    /// cover every strategy exactly once.
    pub fn chunks(&self, parts: usize) -> Vec<StrategyIter> {
        let parts = parts.max(1) as u64;
        (0..parts)
            .map(|k| self.range(self.total * k / parts, self.total * (k + 1) / parts))
            .collect()
    }
}

pub struct StrategyIter {
    m: usize,
    digits: Vec<u64>,
    remaining: u64,
}

impl Iterator for StrategyIter {
    type Item = DeterministicStrategy;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = DeterministicStrategy::new(self.m, self.digits.clone()).ok();
        let top = settings_mask(self.m);
        for d in self.digits.iter_mut().rev() {
            if *d < top {
                *d += 1;
                break;
            }
            *d = 1;
        }
        out
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

/// Distinct `(sorted counts, S)` class of strategies, with the first witness
/// met in enumeration order. The Bell functional and the constraint line of
/// a strategy depend only on this class.
#[derive(Debug, Clone)]
pub struct StrategyClass {
    pub counts: Vec<u32>,
    pub zero_sum: BigUint,
    pub witness: LineSource,
}

impl StrategyClass {
    pub fn line(&self) -> ConstraintLine {
        let (p, q) = line_params(&self.counts, &self.zero_sum);
        ConstraintLine::new(p, q, self.witness.clone())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExhaustiveOptions {
    pub budget: u64,
    /// Restrict to non-decreasing party patterns. Lines are invariant under
    /// party permutation, so the line set is unchanged; witnesses differ.
    pub symmetry_prefilter: bool,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        ExhaustiveOptions {
            budget: DEFAULT_BUDGET,
            symmetry_prefilter: false,
        }
    }
}

type ClassKey = (u128, u64);

fn pack_counts(counts: &mut [u32]) -> u128 {
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts.iter().fold(0u128, |acc, &c| acc << 7 | c as u128)
}

/// Walks every strategy (or every non-decreasing one with the prefilter) and
/// groups them by `(sorted counts, S)`. Work is split over party 0's pattern
/// and merged in order, so witnesses are deterministic.
pub fn exhaustive_classes(
    n: usize,
    m: usize,
    opts: ExhaustiveOptions,
) -> Result<Vec<StrategyClass>> {
    let space = enumerate_all(n, m, opts.budget)?;
    if n > MAX_EXHAUSTIVE_PARTIES {
        return Err(Error::BudgetExceeded {
            required: space.len() as u128,
            budget: opts.budget as u128,
            hint: REGULAR_HINT,
        });
    }
    let top = settings_mask(m);
    let per_first: Vec<HashMap<ClassKey, Vec<u64>>> = (1..=top)
        .into_par_iter()
        .map(|first| {
            let mut walker = Walker {
                n,
                m,
                top,
                prefilter: opts.symmetry_prefilter,
                bits: vec![0; n],
                dists: vec![vec![0u64; m]; n],
                classes: HashMap::new(),
            };
            let mut base = vec![0u64; m];
            base[0] = 1;
            walker.descend(0, first, &base);
            walker.classes
        })
        .collect();

    let mut merged: HashMap<ClassKey, Vec<u64>> = HashMap::new();
    for chunk in per_first {
        let mut chunk: Vec<_> = chunk.into_iter().collect();
        chunk.sort_by(|a, b| a.1.cmp(&b.1));
        for (key, bits) in chunk {
            merged.entry(key).or_insert(bits);
        }
    }
    let mut classes: Vec<StrategyClass> = merged.into_values().map(|bits| {
            let s = DeterministicStrategy::new(m, bits).expect("walker emits valid patterns");
            let mut counts = s.counts();
            counts.sort_unstable_by(|a, b| b.cmp(a));
            let zero_sum = count_zero_sum_convolution(&s, m).expect("shape checked");
            StrategyClass {
                counts,
                zero_sum,
                witness: LineSource::Strategy(s),
            }
        })
        .collect();
    classes.sort_by(|a, b| (&a.counts, &a.zero_sum).cmp(&(&b.counts, &b.zero_sum)));
    Ok(classes)
}

struct Walker {
    n: usize,
    m: usize,
    top: u64,
    prefilter: bool,
    bits: Vec<u64>,
    dists: Vec<Vec<u64>>,
    classes: HashMap<ClassKey, Vec<u64>>,
}

impl Walker {
    /// Places `pattern` for `party` on top of residue distribution `incoming`.
    fn descend(&mut self, party: usize, pattern: u64, incoming: &[u64]) {
        let m = self.m;
        self.bits[party] = pattern;
        if party + 1 == self.n {
            // S = sum over i in the last set of incoming[-i mod m]
            let zero_sum: u64 = (0..m)
                .filter(|&i| pattern >> i & 1 == 1)
                .map(|i| incoming[(m - i) % m])
                .sum();
            let mut counts = [0u32; MAX_EXHAUSTIVE_PARTIES];
            let counts = &mut counts[..self.n];
            for (c, b) in counts.iter_mut().zip(&self.bits) {
                *c = b.count_ones();
            }
            let key = (pack_counts(counts), zero_sum);
            if !self.classes.contains_key(&key) {
                self.classes.insert(key, self.bits.clone());
            }
            return;
        }
        let mut out = std::mem::take(&mut self.dists[party]);
        out.iter_mut().for_each(|e| *e = 0);
        for i in (0..m).filter(|&i| pattern >> i & 1 == 1) {
            for (r, &d) in incoming.iter().enumerate() {
                out[(r + i) % m] += d;
            }
        }
        let start = if self.prefilter { pattern } else { 1 };
        for next in start..=self.top {
            self.descend(party + 1, next, &out);
        }
        self.dists[party] = out;
    }
}

/// Deduplicated lines from every strategy with all counts positive.
pub fn exhaustive_lines(
    n: usize,
    m: usize,
    opts: ExhaustiveOptions,
) -> Result<Vec<ConstraintLine>> {
    Ok(dedup_lines(
        exhaustive_classes(n, m, opts)?
            .iter()
            .map(StrategyClass::line),
    ))
}

/// Merges exact duplicate `(p, q)` pairs, keeping the first provenance seen.
/// Output is ordered by `(p, q)`.
pub fn dedup_lines(lines: impl IntoIterator<Item = ConstraintLine>) -> Vec<ConstraintLine> {
    let mut by_key: BTreeMap<(Rational, Rational), LineSource> = BTreeMap::new();
    for line in lines {
        by_key.entry((line.p, line.q)).or_insert(line.source);
    }
    by_key
        .into_iter()
        .map(|((p, q), source)| ConstraintLine::new(p, q, source))
        .collect()
}

// ---------------------------------------------------------------------------
// Regular arrangements

/// Prefix sets `{0, .., c-1}` for every party but `A` (`counts[0]`), whose
/// set is the cyclic interval `shift, .., shift + counts[0] - 1 (mod m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RegularArrangement {
    pub counts: Vec<u32>,
    pub shift: usize,
}

impl fmt::Display for RegularArrangement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let counts: Vec<String> = self.counts.iter().map(u32::to_string).collect();
        write!(f, "counts={};i0={}", counts.join(","), self.shift)
    }
}

pub fn strategy_of(r: &RegularArrangement, n: usize, m: usize) -> Result<DeterministicStrategy> {
    if r.counts.len() != n {
        return Err(Error::validation(
            "arrangement",
            format!("{} counts for {n} parties", r.counts.len()),
        ));
    }
    if let Some(&c) = r.counts.iter().find(|&&c| c < 1 || c as usize > m) {
        return Err(Error::validation(
            "arrangement",
            format!("count {c} outside [1, {m}]"),
        ));
    }
    if r.shift >= m {
        return Err(Error::validation(
            "arrangement",
            format!("shift {} >= m = {m}", r.shift),
        ));
    }
    let mut parties: Vec<u64> = r
        .counts
        .iter()
        .map(|&c| settings_mask(c as usize))
        .collect();
    parties[0] = (0..r.counts[0] as usize).fold(0u64, |acc, k| acc | 1 << ((r.shift + k) % m));
    DeterministicStrategy::new(m, parties)
}

/// Non-increasing count vectors of length `n`: the single balanced vector
/// per total `n..=n m`, or every multiset of counts in `1..=m`.
pub fn count_patterns(
    n: usize,
    m: usize,
    balanced_only: bool,
) -> Box<dyn Iterator<Item = Vec<u32>>> {
    if balanced_only {
        Box::new((n..=n * m).map(move |total| {
            let (base, extra) = (total / n, total % n);
            (0..n)
                .map(|k| (base + usize::from(k < extra)) as u32)
                .collect()
        }))
    } else {
        Box::new(Multisets::new(n, m as u32))
    }
}

/// Number of arrangements [`enumerate_regular`] yields.
pub fn regular_size(n: usize, m: usize, balanced_only: bool) -> u128 {
    let patterns = if balanced_only {
        (n * (m - 1) + 1) as u128
    } else {
        binomial((n + m - 1) as u128, n as u128)
    };
    patterns.saturating_mul(m as u128)
}

fn binomial(a: u128, b: u128) -> u128 {
    let b = b.min(a - b);
    (0..b)
        .try_fold(1u128, |acc, k| acc.checked_mul(a - k).map(|v| v / (k + 1)))
        .unwrap_or(u128::MAX)
}

pub fn enumerate_regular(
    n: usize,
    m: usize,
    balanced_only: bool,
) -> impl Iterator<Item = RegularArrangement> {
    count_patterns(n, m, balanced_only).flat_map(move |counts| {
        (0..m).map(move |shift| RegularArrangement {
            counts: counts.clone(),
            shift,
        })
    })
}

/// Non-increasing sequences of length `n` over `1..=max`, lexicographically
/// decreasing from `(max, .., max)`.
struct Multisets {
    current: Option<Vec<u32>>,
}

impl Multisets {
    fn new(n: usize, max: u32) -> Self {
        Multisets {
            current: (n > 0 && max > 0).then(|| vec![max; n]),
        }
    }
}

impl Iterator for Multisets {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        let out = self.current.take()?;
        let mut next = out.clone();
        if let Some(k) = next.iter().rposition(|&c| c > 1) {
            let v = next[k] - 1;
            next[k..].iter_mut().for_each(|c| *c = v);
            self.current = Some(next);
        }
        Some(out)
    }
}

/// Count patterns handled per batch when streaming regular arrangements.
const PATTERN_BATCH: usize = 1 << 14;

/// `S` for every shift of one count pattern, indexed by shift.
#[derive(Debug, Clone)]
pub(crate) enum ZeroSums {
    Small(Vec<u128>),
    Big(Vec<BigUint>),
}

impl ZeroSums {
    /// Shifting `A` by `i0` moves every index sum by `i0`, so
    /// `S(i0) = dist[-i0 mod m]` for the prefix-box distribution.
    pub(crate) fn of_pattern(counts: &[u32], m: usize) -> Self {
        match prefix_distribution_u128(counts, m) {
            Some(d) => ZeroSums::Small((0..m).map(|s| d[(m - s) % m]).collect()),
            None => {
                let d = prefix_distribution(counts, m);
                ZeroSums::Big((0..m).map(|s| d[(m - s) % m].clone()).collect())
            }
        }
    }

    pub(crate) fn exact(&self, shift: usize) -> BigUint {
        match self {
            ZeroSums::Small(v) => BigUint::from(v[shift]),
            ZeroSums::Big(v) => v[shift].clone(),
        }
    }

    pub(crate) fn approx(&self, shift: usize) -> f64 {
        match self {
            ZeroSums::Small(v) => v[shift] as f64,
            ZeroSums::Big(v) => crate::rational::to_f64(&big(v[shift].clone())),
        }
    }

    fn cmp(&self, a: usize, b: usize) -> std::cmp::Ordering {
        match self {
            ZeroSums::Small(v) => v[a].cmp(&v[b]),
            ZeroSums::Big(v) => v[a].cmp(&v[b]),
        }
    }

    fn is_zero(&self, shift: usize) -> bool {
        match self {
            ZeroSums::Small(v) => v[shift] == 0,
            ZeroSums::Big(v) => v[shift].is_zero(),
        }
    }

    fn len(&self) -> usize {
        match self {
            ZeroSums::Small(v) => v.len(),
            ZeroSums::Big(v) => v.len(),
        }
    }

    /// First shift of each distinct `S`, ascending.
    pub(crate) fn distinct(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for s in 0..self.len() {
            if out.iter().all(|&t| self.cmp(s, t).is_ne()) {
                out.push(s);
            }
        }
        out
    }

    /// First shifts attaining the smallest `S`, the smallest positive `S`
    /// and the largest `S`, ascending and without repeats. All lines of one
    /// pattern pass through `(0, p)`, so only the flattest and steepest can
    /// reach the lower envelope, and a linear functional in `S` peaks at
    /// one of these.
    pub(crate) fn extremes(&self) -> Vec<usize> {
        let mut min = 0;
        let mut max = 0;
        let mut min_pos: Option<usize> = None;
        for s in 1..self.len() {
            if self.cmp(s, min).is_lt() {
                min = s;
            }
            if self.cmp(s, max).is_gt() {
                max = s;
            }
        }
        for s in 0..self.len() {
            if !self.is_zero(s) && min_pos.is_none_or(|t| self.cmp(s, t).is_lt()) {
                min_pos = Some(s);
            }
        }
        let mut out: Vec<usize> = [Some(min), min_pos, Some(max)]
            .into_iter()
            .flatten()
            .collect();
        out.sort_unstable();
        out.dedup_by(|a, b| self.cmp(*a, *b).is_eq());
        out
    }
}

/// Streams count patterns in enumeration order, `PATTERN_BATCH` at a time,
/// with `S` for every shift.
pub(crate) fn for_each_pattern_batch(
    n: usize,
    m: usize,
    balanced_only: bool,
    mut sink: impl FnMut(Vec<(Vec<u32>, ZeroSums)>) -> Result<()>,
) -> Result<()> {
    check_dims(n, m)?;
    let mut patterns = count_patterns(n, m, balanced_only);
    loop {
        let batch: Vec<Vec<u32>> = patterns.by_ref().take(PATTERN_BATCH).collect();
        if batch.is_empty() {
            return Ok(());
        }
        let rows = batch
            .into_par_iter()
            .map(|counts| {
                let sums = ZeroSums::of_pattern(&counts, m);
                (counts, sums)
            })
            .collect();
        sink(rows)?;
    }
}

fn classes_of<'a>(
    counts: &'a [u32],
    sums: &'a ZeroSums,
    shifts: Vec<usize>,
) -> impl Iterator<Item = StrategyClass> + 'a {
    shifts.into_iter().map(move |shift| StrategyClass {
        counts: counts.to_vec(),
        zero_sum: sums.exact(shift),
        witness: LineSource::Regular(RegularArrangement {
            counts: counts.to_vec(),
            shift,
        }),
    })
}

/// Classes for every regular arrangement: one per distinct `S` of each count
/// pattern, witnessed by the first shift attaining it.
pub fn regular_classes(n: usize, m: usize, balanced_only: bool) -> Result<Vec<StrategyClass>> {
    let mut out = Vec::new();
    for_each_pattern_batch(n, m, balanced_only, |rows| {
        for (counts, sums) in &rows {
            out.extend(classes_of(counts, sums, sums.distinct()));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Like [`regular_classes`] but keeps only the extreme `S` of each pattern
/// (see `ZeroSums::extremes`), handing them over batch by batch. Envelopes
/// and local maxima over these equal those over all regular classes.
pub fn regular_extreme_classes(
    n: usize,
    m: usize,
    balanced_only: bool,
    mut sink: impl FnMut(Vec<StrategyClass>) -> Result<()>,
) -> Result<()> {
    for_each_pattern_batch(n, m, balanced_only, |rows| {
        let mut batch = Vec::with_capacity(rows.len() * 2);
        for (counts, sums) in &rows {
            batch.extend(classes_of(counts, sums, sums.extremes()));
        }
        sink(batch)
    })
}

pub fn regular_lines(n: usize, m: usize, balanced_only: bool) -> Result<Vec<ConstraintLine>> {
    Ok(dedup_lines(
        regular_classes(n, m, balanced_only)?
            .iter()
            .map(StrategyClass::line),
    ))
}

/// Bell functional pieces of a class: `(prod counts, S, sum of (n-1)-products)`
/// as exact rationals.
pub(crate) fn class_terms(class: &StrategyClass) -> (Rational, Rational, Rational) {
    let (product, omitted) = count_products(&class.counts);
    (big(product), big(class.zero_sum.clone()), big(omitted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn strat(rows: &[&[u8]]) -> DeterministicStrategy {
        DeterministicStrategy::from_indicators(rows).unwrap()
    }

    fn both(s: &DeterministicStrategy) -> (BigUint, BigUint) {
        let m = s.settings();
        (
            count_zero_sum_naive(s, m).unwrap(),
            count_zero_sum_convolution(s, m).unwrap(),
        )
    }

    #[test]
    fn naive_counts() {
        assert_eq!(
            both(&strat(&[&[1, 1, 1], &[1, 1, 1]])),
            (3u32.into(), 3u32.into())
        );
        assert_eq!(
            both(&strat(&[&[1, 0, 0], &[1, 0, 0]])),
            (1u32.into(), 1u32.into())
        );
        assert_eq!(
            both(&strat(&[&[1, 1, 0], &[1, 1, 0], &[1, 1, 0]])),
            (2u32.into(), 2u32.into())
        );
    }

    #[test]
    fn convolution_all_ones_large() {
        let s = DeterministicStrategy::all_ones(8, 5);
        assert_eq!(
            count_zero_sum_convolution(&s, 5).unwrap(),
            BigUint::from(78125u32)
        );
        // beyond u128
        let s = DeterministicStrategy::all_ones(30, 64);
        let expected = num::pow(BigUint::from(64u32), 29);
        assert_eq!(count_zero_sum_convolution(&s, 64).unwrap(), expected);
    }

    #[test]
    fn lines_from_strategies() {
        let l = line_from_strategy(&strat(&[&[1, 1], &[1, 1]]), 2).unwrap();
        assert_eq!((l.p, l.q), (int(1), ratio(1, 2)));
        for (n, m) in [(2, 3), (4, 5), (6, 7)] {
            let l = line_from_strategy(&DeterministicStrategy::all_ones(n, m), m).unwrap();
            assert_eq!((l.p, l.q), (ratio(n as i64, m as i64), ratio(1, m as i64)));
        }
        let err = line_from_strategy(&strat(&[&[1, 1], &[0, 0]]), 2).unwrap_err();
        assert!(matches!(err, Error::VacuousConstraint { party: 1 }));
    }

    #[test]
    fn family_ii_line() {
        for (n, m) in [(5usize, 3usize), (7, 7), (12, 5)] {
            let mut parties = vec![0b11u64; m];
            parties.extend(std::iter::repeat_n(1u64, n - m));
            let s = DeterministicStrategy::new(m, parties).unwrap();
            let l = line_from_strategy(&s, m).unwrap();
            assert_eq!(l.p, int(n as i64) - ratio(m as i64, 2));
            assert_eq!(l.q, ratio(1, 1 << (m - 1)));
        }
    }

    #[test]
    fn exhaustive_counts_and_order() {
        assert_eq!(enumerate_all(2, 2, DEFAULT_BUDGET).unwrap().len(), 9);
        assert_eq!(enumerate_all(3, 3, DEFAULT_BUDGET).unwrap().len(), 343);
        assert_eq!(
            enumerate_all(5, 5, DEFAULT_BUDGET).unwrap().len(),
            28_629_151
        );
        let all: Vec<_> = enumerate_all(2, 2, DEFAULT_BUDGET)
            .unwrap()
            .iter()
            .collect();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0].bits(), &[1, 1]);
        assert_eq!(all[1].bits(), &[1, 2]);
        assert_eq!(all[8].bits(), &[3, 3]);
        assert!(all.windows(2).all(|w| w[0].bits() < w[1].bits()));
    }

    #[test]
    fn exhaustive_budget() {
        let err = enumerate_all(5, 5, 1000).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert!(err.to_string().contains("regular"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn chunks_partition() {
        let space = enumerate_all(3, 3, DEFAULT_BUDGET).unwrap();
        let whole: Vec<_> = space.iter().collect();
        for parts in [1, 2, 7, 343, 500] {
            let joined: Vec<_> = space.chunks(parts).into_iter().flatten().collect();
            assert_eq!(joined, whole);
        }
    }

    #[test]
    fn regular_structure_counts() {
        let twos: Vec<_> = enumerate_regular(2, 3, true)
            .filter(|r| r.counts.iter().sum::<u32>() == 4)
            .collect();
        assert_eq!(twos.len(), 3);
        assert!(twos.iter().all(|r| r.counts == vec![2, 2]));
        assert_eq!(enumerate_regular(3, 3, true).count(), 21);
        assert_eq!(regular_size(3, 3, true), 21);
        let full: Vec<_> = enumerate_regular(5, 5, false).collect();
        assert_eq!(full.len() as u128, regular_size(5, 5, false));
        assert_eq!(full.len(), 126 * 5);
        assert!(full
            .iter()
            .all(|r| r.counts.windows(2).all(|w| w[0] >= w[1])));
    }

    #[test]
    fn regular_materialization() {
        let r = RegularArrangement {
            counts: vec![2, 2],
            shift: 2,
        };
        let s = strategy_of(&r, 2, 3).unwrap();
        assert_eq!(s, strat(&[&[1, 0, 1], &[1, 1, 0]]));
        let r = RegularArrangement {
            counts: vec![2, 3, 1],
            shift: 0,
        };
        assert_eq!(strategy_of(&r, 3, 4).unwrap().bits(), &[0b11, 0b111, 0b1]);
        let r = RegularArrangement {
            counts: vec![1, 1, 1],
            shift: 0,
        };
        assert_eq!(
            strategy_of(&r, 3, 3).unwrap(),
            strat(&[&[1, 0, 0], &[1, 0, 0], &[1, 0, 0]])
        );
        assert!(strategy_of(
            &RegularArrangement {
                counts: vec![4, 1],
                shift: 0
            },
            2,
            3
        )
        .is_err());
        assert!(strategy_of(
            &RegularArrangement {
                counts: vec![1, 1],
                shift: 3
            },
            2,
            3
        )
        .is_err());
    }

    #[test]
    fn regular_fast_path_matches_materialized() {
        for (n, m) in [(2, 3), (3, 4), (4, 5), (3, 7)] {
            let fast: Vec<_> = regular_lines(n, m, false)
                .unwrap()
                .iter()
                .map(ConstraintLine::key)
                .collect();
            let slow = dedup_lines(
                enumerate_regular(n, m, false)
                    .map(|r| line_from_strategy(&strategy_of(&r, n, m).unwrap(), m).unwrap()),
            );
            let slow: Vec<_> = slow.iter().map(ConstraintLine::key).collect();
            assert_eq!(fast, slow, "n={n} m={m}");
        }
    }

    #[test]
    fn prefilter_keeps_line_set() {
        for (n, m) in [(3, 3), (3, 4), (4, 3)] {
            let plain = exhaustive_lines(n, m, ExhaustiveOptions::default()).unwrap();
            let reduced = exhaustive_lines(
                n,
                m,
                ExhaustiveOptions {
                    symmetry_prefilter: true,
                    ..Default::default()
                },
            )
            .unwrap();
            let a: Vec<_> = plain.iter().map(ConstraintLine::key).collect();
            let b: Vec<_> = reduced.iter().map(ConstraintLine::key).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn exhaustive_classes_cover_space() {
        // every strategy's (counts, S) class appears, witnesses are valid members
        let classes = exhaustive_classes(3, 3, ExhaustiveOptions::default()).unwrap();
        for s in enumerate_all(3, 3, DEFAULT_BUDGET).unwrap().iter() {
            let mut counts = s.counts();
            counts.sort_unstable_by(|a, b| b.cmp(a));
            let zs = count_zero_sum_naive(&s, 3).unwrap();
            assert!(classes
                .iter()
                .any(|c| c.counts == counts && c.zero_sum == zs));
        }
        for c in &classes {
            let LineSource::Strategy(w) = &c.witness else {
                panic!()
            };
            assert_eq!(count_zero_sum_naive(w, 3).unwrap(), c.zero_sum);
        }
    }

    #[test]
    fn dedup_keeps_first() {
        let a = ConstraintLine::new(int(1), int(0), LineSource::Family("a".into()));
        let b = ConstraintLine::new(int(1), int(0), LineSource::Family("b".into()));
        let c = ConstraintLine::new(int(0), int(1), LineSource::Family("c".into()));
        let out = dedup_lines([a, b, c]);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].source, LineSource::Family("a".into()));
    }
}
