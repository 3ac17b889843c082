//! Feasible `(x, y)` region: lower envelope of the constraint lines, the
//! threshold-optimal vertex for a visibility, and local-bound certificates.
//!
//! The Bell inequality has local bound 0 iff `(x, y)` lies on or below every
//! line `y = p + q x`. The feasible region's upper boundary is the lower
//! envelope, a concave piecewise-linear function. The threshold denominator
//! `D = m y - (1 - v) x` is linear, so its maximum over the region sits on an
//! envelope vertex.

use num::traits::{One, Signed, Zero};
use serde::Serialize;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{BellParams, Scenario};
use crate::rational::{self, int, Rational};
use crate::strategies::{
    class_terms, dedup_lines, exhaustive_classes, exhaustive_lines, exhaustive_size,
    regular_extreme_classes, regular_lines, regular_size, ConstraintLine, ExhaustiveOptions,
    LineSource, StrategyClass,
};

#[derive(Debug, Clone)]
pub struct Envelope {
    /// Surviving lines, strictly decreasing slope.
    pub lines: Vec<ConstraintLine>,
    /// `vertices[k]` is where `lines[k]` meets `lines[k + 1]`.
    pub vertices: Vec<(Rational, Rational)>,
}

fn crossing_x(a: &ConstraintLine, b: &ConstraintLine) -> Rational {
    (&b.p - &a.p) / (&a.q - &b.q)
}

pub fn build_envelope(lines: &[ConstraintLine]) -> Result<Envelope> {
    if lines.is_empty() {
        return Err(Error::EmptyLineSet);
    }
    let mut sorted = dedup_lines(lines.iter().cloned());
    // steepest first; among equal slopes the lowest intercept wins
    sorted.sort_by(|a, b| b.q.cmp(&a.q).then_with(|| a.p.cmp(&b.p)));
    sorted.dedup_by(|later, kept| later.q == kept.q);

    let mut hull: Vec<ConstraintLine> = Vec::with_capacity(sorted.len());
    for line in sorted {
        while hull.len() >= 2 {
            let (prev, mid) = (&hull[hull.len() - 2], &hull[hull.len() - 1]);
            if crossing_x(prev, mid) >= crossing_x(mid, &line) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(line);
    }
    let vertices = hull
        .windows(2)
        .map(|w| {
            let x = crossing_x(&w[0], &w[1]);
            let y = w[0].at(&x);
            (x, y)
        })
        .collect();
    Ok(Envelope {
        lines: hull,
        vertices,
    })
}

impl Envelope {
    /// `min over surviving lines of p + q x`.
    pub fn value_at(&self, x: &Rational) -> Rational {
        self.lines
            .iter()
            .map(|l| l.at(x))
            .min()
            .expect("envelope is never empty")
    }

    /// True when `line` is nowhere below the envelope.
    pub fn dominates(&self, line: &ConstraintLine) -> bool {
        let first = &self.lines[0];
        let last = self.lines.last().expect("nonempty");
        if line.q > first.q || line.q < last.q {
            return false;
        }
        if self.vertices.is_empty() {
            return line.q != first.q || line.p >= first.p;
        }
        self.vertices.iter().all(|(x, y)| line.at(x) >= *y)
    }

    pub fn contains(&self, x: &Rational, y: &Rational) -> bool {
        *y <= self.value_at(x)
    }

    pub fn keys(&self) -> Vec<(Rational, Rational)> {
        let mut keys: Vec<_> = self.lines.iter().map(ConstraintLine::key).collect();
        keys.sort();
        keys
    }
}

/// Smallest intercept among zero-slope lines: the largest `y` usable at `v = 1`.
pub fn y_max(e: &Envelope) -> Result<Rational> {
    let last = e.lines.last().ok_or(Error::EmptyLineSet)?;
    if last.q.is_zero() {
        Ok(last.p.clone())
    } else {
        Err(Error::NoZeroSlopeLine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Optimum {
    /// Index into [`Envelope::vertices`].
    Vertex(usize),
    /// Single-line envelope; `x` reported as 0.
    Line(usize),
}

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub params: BellParams,
    /// `m y - (1 - v) x` at the optimum.
    pub denominator: Rational,
    pub eta_star: Rational,
    pub eta_star_f64: f64,
    pub optimum: Optimum,
    pub violation_possible: bool,
}

fn denominator(m: &Rational, noise: &Rational, x: &Rational, y: &Rational) -> Rational {
    m * y - noise * x
}

pub fn eta_star_of(
    n: usize,
    m: usize,
    v: &Rational,
    x: &Rational,
    y: &Rational,
) -> Result<Rational> {
    let d = denominator(&int(m as i64), &(Rational::one() - v), x, y);
    if !d.is_positive() {
        return Err(Error::NoViolation {
            denominator: rational::display(&d),
        });
    }
    Ok(int(2 * n as i64) / d)
}

/// Maximises `m y - (1 - v) x` over the envelope and returns
/// `eta* = 2 n / D`. Ties go to the smallest `x`, then the smallest `y`.
pub fn optimize_for_visibility(e: &Envelope, scenario: &Scenario) -> Result<ThresholdResult> {
    let m = int(scenario.m as i64);
    let noise = Rational::one() - &scenario.v;
    let unbounded = || Error::Unbounded {
        v: rational::display(&scenario.v),
    };

    let (x, y, optimum) = if e.vertices.is_empty() {
        let line = &e.lines[0];
        if &m * &line.q != noise {
            return Err(unbounded());
        }
        (Rational::zero(), line.p.clone(), Optimum::Line(0))
    } else {
        let first = &e.lines[0];
        let last = e.lines.last().expect("nonempty");
        // D must not grow along either unbounded ray
        if &m * &first.q < noise || &m * &last.q > noise {
            return Err(unbounded());
        }
        let mut best: Option<(usize, Rational)> = None;
        for (k, (x, y)) in e.vertices.iter().enumerate() {
            let d = denominator(&m, &noise, x, y);
            if best.as_ref().is_none_or(|(_, b)| d > *b) {
                best = Some((k, d));
            }
        }
        let (k, _) = best.expect("at least one vertex");
        let (x, y) = e.vertices[k].clone();
        (x, y, Optimum::Vertex(k))
    };

    let d = denominator(&m, &noise, &x, &y);
    if !d.is_positive() {
        return Err(Error::NoViolation {
            denominator: rational::display(&d),
        });
    }
    let eta_star = int(2 * scenario.n as i64) / &d;
    Ok(ThresholdResult {
        params: BellParams::new(scenario.n, scenario.m, x, y),
        eta_star_f64: rational::to_f64(&eta_star),
        violation_possible: eta_star <= Rational::one(),
        denominator: d,
        eta_star,
        optimum,
    })
}

#[derive(Debug, Clone)]
pub struct VisibilityInterval {
    /// Exclusive when 0, otherwise inclusive; adjacent intervals share ends.
    pub v_lo: Rational,
    pub v_hi: Rational,
    pub optimum: Optimum,
    pub x: Rational,
    pub y: Rational,
}

#[derive(Debug, Clone)]
pub struct VisibilityBreakpoints {
    pub n: usize,
    pub m: usize,
    pub intervals: Vec<VisibilityInterval>,
}

impl VisibilityBreakpoints {
    pub fn interval_for(&self, v: &Rational) -> Option<&VisibilityInterval> {
        self.intervals
            .iter()
            .find(|iv| iv.v_lo <= *v && *v <= iv.v_hi)
    }

    pub fn eta_star_at(&self, v: &Rational) -> Result<Rational> {
        let iv = self.interval_for(v).ok_or_else(|| Error::Unbounded {
            v: rational::display(v),
        })?;
        eta_star_of(self.n, self.m, v, &iv.x, &iv.y)
    }
}

/// The vertex between slopes `q_hi > q_lo` is optimal exactly when
/// `q_lo <= (1 - v)/m <= q_hi`, i.e. `v` in `[1 - m q_hi, 1 - m q_lo]`.
pub fn visibility_sweep(e: &Envelope, scenario: &Scenario) -> VisibilityBreakpoints {
    let m = int(scenario.m as i64);
    let (zero, one) = (Rational::zero(), Rational::one());
    let mut intervals = Vec::new();
    if e.vertices.is_empty() {
        intervals.push(VisibilityInterval {
            v_lo: zero,
            v_hi: one,
            optimum: Optimum::Line(0),
            x: Rational::zero(),
            y: e.lines[0].p.clone(),
        });
    } else {
        for (k, (x, y)) in e.vertices.iter().enumerate() {
            let lo = (&one - &m * &e.lines[k].q).max(zero.clone());
            let hi = (&one - &m * &e.lines[k + 1].q).min(one.clone());
            if lo < hi {
                intervals.push(VisibilityInterval {
                    v_lo: lo,
                    v_hi: hi,
                    optimum: Optimum::Vertex(k),
                    x: x.clone(),
                    y: y.clone(),
                });
            }
        }
    }
    VisibilityBreakpoints {
        n: scenario.n,
        m: scenario.m,
        intervals,
    }
}

// ---------------------------------------------------------------------------
// Line collection and local-bound certificates

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineMode {
    Exhaustive,
    /// Every count multiset with all shifts.
    Regular,
    /// Count vectors differing pairwise by at most one.
    RegularBalanced,
}

impl LineMode {
    /// Results from regular arrangements assume those strategies generate the
    /// complete envelope.
    pub fn conjecture_conditional(self) -> bool {
        !matches!(self, LineMode::Exhaustive)
    }

    /// Exhaustive iff `(2^m - 1)^n <= budget`; otherwise every regular
    /// multiset when that fits the budget, else balanced patterns only.
    pub fn auto(n: usize, m: usize, budget: u64) -> LineMode {
        if exhaustive_size(n, m) <= budget as u128 {
            LineMode::Exhaustive
        } else if regular_size(n, m, false) <= budget as u128 {
            LineMode::Regular
        } else {
            LineMode::RegularBalanced
        }
    }
}

impl fmt::Display for LineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LineMode::Exhaustive => "exhaustive",
            LineMode::Regular => "regular",
            LineMode::RegularBalanced => "regular-balanced",
        })
    }
}

pub fn collect_lines(
    n: usize,
    m: usize,
    mode: LineMode,
    budget: u64,
) -> Result<Vec<ConstraintLine>> {
    match mode {
        LineMode::Exhaustive => exhaustive_lines(
            n,
            m,
            ExhaustiveOptions {
                budget,
                symmetry_prefilter: false,
            },
        ),
        LineMode::Regular => regular_lines(n, m, false),
        LineMode::RegularBalanced => regular_lines(n, m, true),
    }
}

fn collect_classes(n: usize, m: usize, mode: LineMode, budget: u64) -> Result<Vec<StrategyClass>> {
    match mode {
        LineMode::Exhaustive => exhaustive_classes(
            n,
            m,
            ExhaustiveOptions {
                budget,
                symmetry_prefilter: false,
            },
        ),
        LineMode::Regular | LineMode::RegularBalanced => {
            let mut out = Vec::new();
            regular_extreme_classes(n, m, mode == LineMode::RegularBalanced, |batch| {
                out.extend(batch);
                Ok(())
            })?;
            Ok(out)
        }
    }
}

/// Lower envelope of the lines of `mode`. Regular modes are streamed and
/// pruned batch by batch, so memory stays proportional to the envelope.
pub fn mode_envelope(n: usize, m: usize, mode: LineMode, budget: u64) -> Result<Envelope> {
    match mode {
        LineMode::Exhaustive => build_envelope(&collect_lines(n, m, mode, budget)?),
        LineMode::Regular | LineMode::RegularBalanced => {
            let mut kept: Vec<ConstraintLine> = Vec::new();
            regular_extreme_classes(n, m, mode == LineMode::RegularBalanced, |batch| {
                let lines = std::mem::take(&mut kept)
                    .into_iter()
                    .chain(batch.iter().map(StrategyClass::line));
                kept = build_envelope(&dedup_lines(lines))?.lines;
                Ok(())
            })?;
            build_envelope(&kept)
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalBoundCertificate {
    pub params: BellParams,
    pub mode: LineMode,
    /// Largest deterministic value over strategies with every count positive.
    /// Strategies with a silent party score at most 0.
    pub max_value: Rational,
    pub witness: LineSource,
    pub classes_checked: usize,
}

impl LocalBoundCertificate {
    pub fn holds(&self) -> bool {
        !self.max_value.is_positive()
    }

    pub fn conjecture_conditional(&self) -> bool {
        self.mode.conjecture_conditional()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.holds() {
            Ok(self)
        } else {
            Err(Error::VerificationFailed {
                property: "local bound <= 0".into(),
                witness: format!(
                    "{} scores {} at (x, y) = ({}, {})",
                    self.witness,
                    rational::display(&self.max_value),
                    rational::display(&self.params.x),
                    rational::display(&self.params.y)
                ),
            })
        }
    }
}

/// Strategy classes for one `(n, m, mode)`; reused across many parameter
/// points.
pub struct LocalBoundChecker {
    n: usize,
    m: usize,
    mode: LineMode,
    terms: Vec<(Rational, Rational, Rational, LineSource)>,
}

impl LocalBoundChecker {
    pub fn new(n: usize, m: usize, mode: LineMode, budget: u64) -> Result<Self> {
        let terms = collect_classes(n, m, mode, budget)?
            .into_iter()
            .map(|c| {
                let (product, zero_sum, omitted) = class_terms(&c);
                (product, zero_sum, omitted, c.witness)
            })
            .collect();
        Ok(LocalBoundChecker { n, m, mode, terms })
    }

    pub fn check(&self, params: &BellParams) -> Result<LocalBoundCertificate> {
        if params.n != self.n || params.m != self.m {
            return Err(Error::DimensionMismatch {
                expected_parties: self.n,
                expected_settings: self.m,
                got_parties: params.n,
                got_settings: params.m,
            });
        }
        let mut best: Option<(Rational, &LineSource)> = None;
        for (product, zero_sum, omitted, witness) in &self.terms {
            let value = product * &params.y - zero_sum * &params.x - omitted;
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, witness));
            }
        }
        let (max_value, witness) = best.expect("at least one strategy class");
        Ok(LocalBoundCertificate {
            params: params.clone(),
            mode: self.mode,
            max_value,
            witness: witness.clone(),
            classes_checked: self.terms.len(),
        })
    }
}

/// Maximum deterministic Bell value at `params` over all strategies
/// (exhaustive) or regular arrangements only (conjecture-conditional).
pub fn verify_local_bound(
    params: &BellParams,
    mode: LineMode,
    budget: u64,
) -> Result<LocalBoundCertificate> {
    LocalBoundChecker::new(params.n, params.m, mode, budget)?.check(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_scenario;
    use crate::rational::ratio;
    use crate::strategies::DEFAULT_BUDGET;

    fn line(p: Rational, q: Rational) -> ConstraintLine {
        ConstraintLine::new(p, q, LineSource::Family("t".into()))
    }

    #[test]
    fn two_lines_one_vertex() {
        let e = build_envelope(&[line(int(1), int(0)), line(int(0), int(1))]).unwrap();
        assert_eq!(e.lines.len(), 2);
        assert_eq!(e.vertices, vec![(int(1), int(1))]);
    }

    #[test]
    fn parallel_lines_dominated() {
        let e = build_envelope(&[line(int(1), int(0)), line(int(2), int(0))]).unwrap();
        assert_eq!(e.keys(), vec![(int(1), int(0))]);
        assert!(e.vertices.is_empty());
    }

    #[test]
    fn line_through_vertex_is_dropped() {
        let e = build_envelope(&[
            line(int(0), int(1)),
            line(int(1), int(0)),
            line(ratio(1, 2), ratio(1, 2)),
        ])
        .unwrap();
        assert_eq!(e.lines.len(), 2);
        let e = build_envelope(&[
            line(int(0), int(1)),
            line(int(1), int(0)),
            line(ratio(1, 4), ratio(1, 2)),
        ])
        .unwrap();
        assert_eq!(e.lines.len(), 3);
        assert!(e.vertices.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(build_envelope(&[]), Err(Error::EmptyLineSet)));
    }

    #[test]
    fn y_max_needs_flat_line() {
        let e = build_envelope(&[line(int(0), int(1))]).unwrap();
        assert!(matches!(y_max(&e), Err(Error::NoZeroSlopeLine)));
    }

    #[test]
    fn y_max_small_scenarios() {
        // only S = 0 strategies are a={0}, b={1} and its mirror: p = 2
        let e = build_envelope(&collect_lines(2, 2, LineMode::Exhaustive, DEFAULT_BUDGET).unwrap())
            .unwrap();
        assert_eq!(y_max(&e).unwrap(), int(2));
        let e = build_envelope(&collect_lines(3, 5, LineMode::Exhaustive, DEFAULT_BUDGET).unwrap())
            .unwrap();
        assert_eq!(y_max(&e).unwrap(), ratio(3, 2));
    }

    #[test]
    fn threshold_noiseless_three_five() {
        let e = build_envelope(&collect_lines(3, 5, LineMode::Exhaustive, DEFAULT_BUDGET).unwrap())
            .unwrap();
        let r = optimize_for_visibility(&e, &validate_scenario(3, 5, int(1)).unwrap()).unwrap();
        assert_eq!(r.eta_star, ratio(4, 5));
        assert_eq!(r.params.y, ratio(3, 2));
        assert_eq!(r.optimum, Optimum::Vertex(e.vertices.len() - 1));
        assert!(r.violation_possible);
    }

    #[test]
    fn zero_visibility_never_violates() {
        let e = build_envelope(&collect_lines(3, 3, LineMode::Exhaustive, DEFAULT_BUDGET).unwrap())
            .unwrap();
        let r = optimize_for_visibility(&e, &validate_scenario(3, 3, int(0)).unwrap()).unwrap();
        assert!(!r.violation_possible);
        assert!(r.eta_star > int(1));
    }

    #[test]
    fn sweep_two_lines() {
        let e = build_envelope(&[line(int(1), int(0)), line(int(0), int(1))]).unwrap();
        let b = visibility_sweep(&e, &validate_scenario(2, 2, int(1)).unwrap());
        assert_eq!(b.intervals.len(), 1);
        assert_eq!(
            (b.intervals[0].v_lo.clone(), b.intervals[0].v_hi.clone()),
            (int(0), int(1))
        );
        assert_eq!(
            (b.intervals[0].x.clone(), b.intervals[0].y.clone()),
            (int(1), int(1))
        );
    }

    #[test]
    fn sweep_single_flat_line() {
        let e = build_envelope(&[line(int(2), int(0))]).unwrap();
        let b = visibility_sweep(&e, &validate_scenario(2, 3, int(1)).unwrap());
        assert_eq!(b.intervals.len(), 1);
        assert_eq!(b.intervals[0].optimum, Optimum::Line(0));
        let r = optimize_for_visibility(&e, &validate_scenario(2, 3, int(1)).unwrap()).unwrap();
        assert_eq!(r.params.x, int(0));
        assert!(
            optimize_for_visibility(&e, &validate_scenario(2, 3, ratio(1, 2)).unwrap()).is_err()
        );
    }

    #[test]
    fn local_bound_three_three() {
        let e = build_envelope(&collect_lines(3, 3, LineMode::Exhaustive, DEFAULT_BUDGET).unwrap())
            .unwrap();
        let checker = LocalBoundChecker::new(3, 3, LineMode::Exhaustive, DEFAULT_BUDGET).unwrap();
        for (x, y) in &e.vertices {
            let cert = checker
                .check(&BellParams::new(3, 3, x.clone(), y.clone()))
                .unwrap();
            assert_eq!(cert.max_value, int(0));
            assert!(cert.holds());
            let raised = checker
                .check(&BellParams::new(3, 3, x.clone(), y + ratio(1, 100)))
                .unwrap();
            assert!(!raised.holds());
            assert!(raised.into_result().is_err());
        }
    }

    #[test]
    fn auto_mode_thresholds() {
        assert_eq!(LineMode::auto(3, 3, DEFAULT_BUDGET), LineMode::Exhaustive);
        assert_eq!(LineMode::auto(8, 11, DEFAULT_BUDGET), LineMode::Regular);
        assert_eq!(
            LineMode::auto(30, 13, DEFAULT_BUDGET),
            LineMode::RegularBalanced
        );
        assert!(LineMode::Regular.conjecture_conditional());
    }

    #[test]
    fn streamed_regular_envelope_matches_full_set() {
        for (n, m) in [(3, 5), (4, 7), (5, 4), (6, 6), (7, 5)] {
            for (mode, balanced) in [(LineMode::Regular, false), (LineMode::RegularBalanced, true)] {
                let all = regular_lines(n, m, balanced).unwrap();
                let full = build_envelope(&all).unwrap();
                let streamed = mode_envelope(n, m, mode, DEFAULT_BUDGET).unwrap();
                assert_eq!(full.keys(), streamed.keys(), "n={n} m={m} {mode}");
                let checker = LocalBoundChecker::new(n, m, mode, DEFAULT_BUDGET).unwrap();
                for (x, y) in full.vertices.iter().chain([(ratio(-3, 2), int(1))].iter()) {
                    let params = BellParams::new(n, m, x.clone(), y.clone());
                    let brute = all
                        .iter()
                        .map(|l| {
                            let c = crate::strategies::StrategyClass {
                                counts: match &l.source {
                                    LineSource::Regular(r) => r.counts.clone(),
                                    _ => unreachable!(),
                                },
                                zero_sum: Default::default(),
                                witness: l.source.clone(),
                            };
                            let (product, _, omitted) = class_terms(&c);
                            &product * &params.y - &product * &l.q * &params.x - omitted
                        })
                        .max()
                        .unwrap();
                    assert_eq!(checker.check(&params).unwrap().max_value, brute);
                }
            }
        }
    }
}
