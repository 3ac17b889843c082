//! Closed forms for large `n` and `m`.
//!
//! For prime `m` a strategy with `S = 0` has at most `n + m - 2` outputs +1
//! in total, so the largest usable `y` at `v = 1` is `sum 1/c` over the most
//! even split of `n + m - 2` into `n` positive counts. In the noisy regime
//! `m << n` the optimum sits on `y = n + 1 - m/2` and the smallest feasible
//! `x` is decided by two strategy families.

use num::traits::Signed;
use serde::Serialize;
use std::fmt;

use crate::envelope::{collect_lines, LineMode};
use crate::error::{Error, Result};
use crate::model::is_prime;
use crate::rational::{int, ratio, to_f64, Rational};
use crate::strategies::{
    for_each_pattern_batch, line_params, ConstraintLine, LineSource, RegularArrangement,
    DEFAULT_BUDGET,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionBound {
    pub n: usize,
    pub m: usize,
    /// Non-increasing, differing pairwise by at most one, summing to `m + n - 2`.
    pub counts: Vec<u32>,
    pub y_max: Rational,
    /// The bound is only established for prime `m`.
    pub m_prime: bool,
}

pub fn ymax_partition(n: usize, m: usize) -> Result<PartitionBound> {
    if n == 0 {
        return Err(Error::validation("n", "need at least one party"));
    }
    let total = (m + n).checked_sub(2).filter(|&t| t >= n).ok_or_else(|| {
        Error::validation(
            "m",
            format!(
                "cannot split m + n - 2 = {} into {n} positive counts",
                (m + n) as i64 - 2
            ),
        )
    })?;
    let (base, extra) = (total / n, total % n);
    let counts: Vec<u32> = (0..n)
        .map(|k| (base + usize::from(k < extra)) as u32)
        .collect();
    let y_max = counts.iter().map(|&c| ratio(1, c as i64)).sum();
    Ok(PartitionBound {
        n,
        m,
        counts,
        y_max,
        m_prime: is_prime(m),
    })
}

/// `2 n / (m y_max)` with the exact partition form of `y_max`.
pub fn eta_star_noiseless(n: usize, m: usize) -> Result<Rational> {
    let bound = ymax_partition(n, m)?;
    Ok(int(2 * n as i64) / (int(m as i64) * bound.y_max))
}

/// `2/n + 2/m - 4/(m n)`; equals [`eta_star_noiseless`] when `n | m - 2`.
pub fn eta_star_even_split(n: usize, m: usize) -> Rational {
    let (n, m) = (n as i64, m as i64);
    ratio(2, n) + ratio(2, m) - ratio(4, m * n)
}

/// `n + 1 - m/2`, the flat-line height for `m - 2` parties with two outputs
/// +1 and the rest with one.
pub fn noisy_ymax(n: usize, m: usize) -> Result<Rational> {
    if n < m {
        return Err(Error::validation(
            "n",
            format!("noisy regime needs n >= m (got n = {n}, m = {m})"),
        ));
    }
    Ok(int(n as i64 + 1) - ratio(m as i64, 2))
}

/// Family (i): every party outputs +1 for every setting.
pub fn family_i_line(n: usize, m: usize) -> ConstraintLine {
    ConstraintLine::new(
        ratio(n as i64, m as i64),
        ratio(1, m as i64),
        LineSource::Family("(i)".into()),
    )
}

/// Family (ii): `m` parties output +1 on settings {0, 1}, the rest on {0}.
pub fn family_ii_line(n: usize, m: usize) -> ConstraintLine {
    ConstraintLine::new(
        int(n as i64) - ratio(m as i64, 2),
        Rational::new(1.into(), num::pow(num::BigInt::from(2), m - 1)),
        LineSource::Family("(ii)".into()),
    )
}

/// Abscissae where lines (i) and (ii) reach `y = noisy_ymax`:
/// `x1 = m y_max - n` and `x2 = 2^(m-1)`.
pub fn candidate_lines(n: usize, m: usize) -> Result<(Rational, Rational)> {
    let y = noisy_ymax(n, m)?;
    let x1 = int(m as i64) * &y - int(n as i64);
    let line = family_ii_line(n, m);
    let x2 = (y - &line.p) / &line.q;
    Ok((x1, x2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Achiever {
    #[serde(rename = "(i)")]
    FamilyI,
    #[serde(rename = "(ii)")]
    FamilyII,
    #[serde(rename = "(i)+(ii)")]
    Both,
    #[serde(rename = "other")]
    Other,
}

impl fmt::Display for Achiever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Achiever::FamilyI => "(i)",
            Achiever::FamilyII => "(ii)",
            Achiever::Both => "(i)+(ii)",
            Achiever::Other => "other",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConjectureReport {
    pub n: usize,
    pub m: usize,
    pub y_max: Rational,
    pub x1: Rational,
    pub x2: Rational,
    /// Largest `(y_max - p) / q` over positive-slope lines.
    pub x_min: Rational,
    pub holds: bool,
    pub achieved_by: Achiever,
    pub mode: LineMode,
    /// No zero-slope line cuts below `y_max`.
    pub y_max_feasible: bool,
    /// `x_min == max(x1, x2)`.
    pub matches_candidates: bool,
}

impl ConjectureReport {
    pub fn nm(&self) -> Rational {
        int((self.n * self.m) as i64)
    }

    /// Threshold at `(x_min, y_max)` for visibility `v`.
    pub fn eta_star(&self, v: &Rational) -> Result<Rational> {
        crate::envelope::eta_star_of(self.n, self.m, v, &self.x_min, &self.y_max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConjectureOptions {
    pub budget: u64,
    /// Use every strategy instead of regular arrangements when the budget allows.
    pub escalate_exhaustive: bool,
}

impl Default for ConjectureOptions {
    fn default() -> Self {
        ConjectureOptions {
            budget: DEFAULT_BUDGET,
            escalate_exhaustive: false,
        }
    }
}

/// Relative slack for the floating-point screen; survivors are re-ranked
/// exactly.
const SCREEN_TOL: f64 = 1e-9;

/// Lines that may attain `x_min` or cut below `y_max`, kept by a
/// floating-point screen.
struct Screen {
    y: f64,
    best: f64,
    near_best: Vec<(f64, ConstraintLine)>,
    low_flat: Vec<ConstraintLine>,
}

impl Screen {
    fn new(y: &Rational) -> Self {
        Screen {
            y: to_f64(y),
            best: f64::NEG_INFINITY,
            near_best: Vec::new(),
            low_flat: Vec::new(),
        }
    }

    fn slack(&self) -> f64 {
        SCREEN_TOL * self.best.abs().max(1.0)
    }

    /// `p`, `q` approximate `line()`, which is only built for survivors.
    fn observe(&mut self, p: f64, q: f64, line: impl FnOnce() -> ConstraintLine) {
        if q == 0.0 {
            if p <= self.y + SCREEN_TOL * self.y.abs().max(1.0) {
                self.low_flat.push(line());
            }
            return;
        }
        let x = (self.y - p) / q;
        if x < self.best - self.slack() {
            return;
        }
        self.near_best.push((x, line()));
        if x > self.best {
            self.best = x;
            if self.near_best.len() > 256 {
                let floor = self.best - self.slack();
                self.near_best.retain(|(v, _)| *v >= floor);
            }
        }
    }
}

pub fn check_conjecture(n: usize, m: usize, opts: ConjectureOptions) -> Result<ConjectureReport> {
    let y_max = noisy_ymax(n, m)?;
    let (x1, x2) = candidate_lines(n, m)?;
    let mode = match LineMode::auto(n, m, opts.budget) {
        LineMode::Exhaustive if !opts.escalate_exhaustive => LineMode::Regular,
        other => other,
    };
    let mut screen = Screen::new(&y_max);
    match mode {
        LineMode::Exhaustive => {
            for line in collect_lines(n, m, mode, opts.budget)? {
                screen.observe(to_f64(&line.p), to_f64(&line.q), || line.clone());
            }
        }
        LineMode::Regular | LineMode::RegularBalanced => {
            for_each_pattern_batch(n, m, mode == LineMode::RegularBalanced, |rows| {
                for (counts, sums) in &rows {
                    let p: f64 = counts.iter().map(|&c| 1.0 / c as f64).sum();
                    let product: f64 = counts.iter().map(|&c| c as f64).product();
                    for shift in sums.extremes() {
                        screen.observe(p, sums.approx(shift) / product, || {
                            let (p, q) = line_params(counts, &sums.exact(shift));
                            let source = LineSource::Regular(RegularArrangement {
                                counts: counts.clone(),
                                shift,
                            });
                            ConstraintLine::new(p, q, source)
                        });
                    }
                }
                Ok(())
            })?;
        }
    }

    let y_max_feasible = screen.low_flat.iter().all(|l| l.p >= y_max);
    let mut x_min: Option<Rational> = None;
    let mut maximisers: Vec<&ConstraintLine> = Vec::new();
    for (_, line) in screen.near_best.iter().filter(|(_, l)| l.q.is_positive()) {
        let x = (&y_max - &line.p) / &line.q;
        match x_min.as_ref().map(|best| x.cmp(best)) {
            None | Some(std::cmp::Ordering::Greater) => {
                x_min = Some(x);
                maximisers = vec![line];
            }
            Some(std::cmp::Ordering::Equal) => maximisers.push(line),
            Some(std::cmp::Ordering::Less) => {}
        }
    }
    let x_min = x_min.ok_or(Error::EmptyLineSet)?;
    let (key_i, key_ii) = (family_i_line(n, m).key(), family_ii_line(n, m).key());
    let has_i = maximisers.iter().any(|l| l.key() == key_i);
    let has_ii = maximisers.iter().any(|l| l.key() == key_ii);
    let achieved_by = match (has_i, has_ii) {
        (true, true) => Achiever::Both,
        (true, false) => Achiever::FamilyI,
        (false, true) => Achiever::FamilyII,
        (false, false) => Achiever::Other,
    };
    let nm = int((n * m) as i64);
    Ok(ConjectureReport {
        n,
        m,
        matches_candidates: x_min == x1.clone().max(x2.clone()),
        holds: x_min <= nm,
        y_max,
        x1,
        x2,
        x_min,
        achieved_by,
        mode,
        y_max_feasible,
    })
}

/// `2 / (m v)`: the noisy-regime approximation when `x_min <= n m`, `m << n`.
pub fn eta_star_noisy_asymptotic(m: usize, v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::validation(
            "v",
            format!("v outside (0, 1] (got {v})"),
        ));
    }
    Ok(2.0 / (m as f64 * v))
}

/// Whether `n` divides `m - 2`, the case where the even split is exact.
pub fn divides_m_minus_two(n: usize, m: usize) -> bool {
    m >= 2 && (m - 2).is_multiple_of(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_examples() {
        let b = ymax_partition(3, 5).unwrap();
        assert_eq!(
            (b.counts.clone(), b.y_max.clone(), b.m_prime),
            (vec![2, 2, 2], ratio(3, 2), true)
        );
        assert_eq!(b.y_max, ratio(9, 6));
        let b = ymax_partition(8, 11).unwrap();
        assert_eq!(b.counts, vec![3, 2, 2, 2, 2, 2, 2, 2]);
        assert_eq!(b.y_max, ratio(23, 6));
        assert_eq!(ymax_partition(5, 11).unwrap().y_max, ratio(11, 6));
        assert!(!ymax_partition(3, 4).unwrap().m_prime);
        assert!(ymax_partition(3, 1).is_err());
    }

    #[test]
    fn noiseless_thresholds() {
        assert_eq!(eta_star_noiseless(3, 5).unwrap(), ratio(4, 5));
        assert_eq!(eta_star_even_split(3, 5), ratio(4, 5));
        assert_eq!(eta_star_noiseless(8, 11).unwrap(), ratio(96, 253));
        let far = eta_star_noiseless(4, 100_003).unwrap();
        assert!(far - ratio(1, 2) < ratio(1, 10_000));
    }

    #[test]
    fn noisy_ymax_examples() {
        assert_eq!(noisy_ymax(10, 4).unwrap(), int(9));
        assert_eq!(noisy_ymax(7, 7).unwrap(), ratio(9, 2));
        assert_eq!(noisy_ymax(199, 5).unwrap(), ratio(395, 2));
        assert!(noisy_ymax(3, 5).is_err());
    }

    #[test]
    fn candidates() {
        assert_eq!(candidate_lines(10, 4).unwrap(), (int(26), int(8)));
        assert_eq!(candidate_lines(9, 2).unwrap().1, int(2));
        assert_eq!(candidate_lines(199, 7).unwrap().1, int(64));
    }

    #[test]
    fn conjecture_ten_four() {
        let r = check_conjecture(10, 4, ConjectureOptions::default()).unwrap();
        assert_eq!(r.x_min, int(26));
        assert!(r.holds);
        assert_eq!(r.achieved_by, Achiever::FamilyI);
        assert!(r.matches_candidates && r.y_max_feasible);
    }

    #[test]
    fn conjecture_regime_boundary() {
        let r = check_conjecture(8, 7, ConjectureOptions::default()).unwrap();
        assert_eq!(r.x2, int(64));
        assert_eq!(r.x_min, int(64));
        assert!(!r.holds);
        assert_eq!(r.achieved_by, Achiever::FamilyII);
    }

    #[test]
    fn conjecture_exhaustive_escalation() {
        let opts = ConjectureOptions {
            escalate_exhaustive: true,
            ..Default::default()
        };
        let ex = check_conjecture(5, 3, opts).unwrap();
        let rg = check_conjecture(5, 3, ConjectureOptions::default()).unwrap();
        assert_eq!(ex.mode, LineMode::Exhaustive);
        assert_eq!(ex.x_min, rg.x_min);
    }

    #[test]
    fn noisy_asymptote() {
        assert!((eta_star_noisy_asymptotic(10, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((eta_star_noisy_asymptotic(20, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!(eta_star_noisy_asymptotic(5, 0.0).is_err());
    }
}
