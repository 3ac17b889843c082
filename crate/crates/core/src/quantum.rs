//! Noisy GHZ state `v |GHZ><GHZ| + (1 - v) I / 2^n` under equatorial
//! measurements `cos(phi) X + sin(phi) Y`, with per-party detection
//! efficiency `eta` (non-detections are reported as -1).
//!
//! Closed forms are the source of truth; the dense density-matrix model is an
//! independent cross-check limited to small `n`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const MAX_DENSE_PARTIES: usize = 8;
pub const DEFAULT_TERM_BUDGET: u64 = 10_000_000;

/// Visibility-level view of a scenario for the floating-point side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumScenario {
    pub n: usize,
    pub m: usize,
    pub v: f64,
}

impl QuantumScenario {
    pub fn new(n: usize, m: usize, v: f64) -> Self {
        QuantumScenario { n, m, v }
    }
}

impl From<&crate::model::Scenario> for QuantumScenario {
    fn from(s: &crate::model::Scenario) -> Self {
        QuantumScenario::new(s.n, s.m, s.v_f64())
    }
}

/// Per-party, per-setting azimuths.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementAngles {
    pub phi: Vec<Vec<f64>>,
}

impl MeasurementAngles {
    /// `phi_i = 2 pi i / m + pi / n` for every party, so the offsets of any
    /// index tuple add up to `pi`.
    pub fn equatorial(n: usize, m: usize) -> Self {
        Self::with_offset(n, m, PI / n as f64)
    }

    pub fn with_offset(n: usize, m: usize, offset: f64) -> Self {
        let row: Vec<f64> = (0..m)
            .map(|i| 2.0 * PI * i as f64 / m as f64 + offset)
            .collect();
        MeasurementAngles { phi: vec![row; n] }
    }

    pub fn angle(&self, party: usize, setting: usize) -> f64 {
        self.phi[party][setting]
    }
}

/// Identical detection probability for every party.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyModel {
    pub eta: f64,
}

impl EfficiencyModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::validation(
                "eta",
                format!("eta outside [0, 1] (got {eta})"),
            ));
        }
        Ok(EfficiencyModel { eta })
    }

    /// Observed all-plus probability for `k` parties: every party must click.
    pub fn observed(&self, k: usize, ideal: f64) -> f64 {
        self.eta.powi(k as i32) * ideal
    }
}

/// `(1 - v cos(2 pi (i + j + k + ...) / m)) / 2^n` for the default angles.
pub fn joint_probability(scenario: &QuantumScenario, settings: &[usize]) -> f64 {
    let residue = settings.iter().sum::<usize>() % scenario.m;
    let phase = 2.0 * PI * residue as f64 / scenario.m as f64;
    (1.0 - scenario.v * phase.cos()) / f64::powi(2.0, scenario.n as i32)
}

/// Every `(n - 1)`-party all-plus probability is `1 / 2^(n-1)`: the GHZ state
/// has no `(n - 1)`-body correlations in the equatorial plane.
pub fn marginal_probability(
    scenario: &QuantumScenario,
    parties: &[usize],
    settings: &[usize],
) -> Result<f64> {
    check_subset(scenario.n, parties, settings)?;
    Ok(1.0 / f64::powi(2.0, scenario.n as i32 - 1))
}

fn check_subset(n: usize, parties: &[usize], settings: &[usize]) -> Result<()> {
    if parties.len() + 1 != n {
        return Err(Error::validation(
            "subset",
            format!(
                "only (n-1)-party marginals are supported, got {} of {n}",
                parties.len()
            ),
        ));
    }
    if settings.len() != parties.len() {
        return Err(Error::validation(
            "settings",
            "one setting per listed party",
        ));
    }
    let mut seen = vec![false; n];
    for &p in parties {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::validation(
                "subset",
                format!("bad or repeated party {p}"),
            ));
        }
    }
    Ok(())
}

/// Dense `2^n x 2^n` density matrix of the noisy GHZ state, row-major.
#[derive(Debug, Clone)]
pub struct DenseGhz {
    n: usize,
    dim: usize,
    rho: Vec<Complex64>,
}

impl DenseGhz {
    pub fn new(n: usize, v: f64) -> Result<Self> {
        if n > MAX_DENSE_PARTIES {
            return Err(Error::DenseTooLarge {
                n,
                max: MAX_DENSE_PARTIES,
            });
        }
        let dim = 1usize << n;
        let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
        let noise = (1.0 - v) / dim as f64;
        for k in 0..dim {
            rho[k * dim + k] += noise;
        }
        // |GHZ> = (|0..0> + |1..1>) / sqrt 2
        let top = dim - 1;
        for &(r, c) in &[(0, 0), (0, top), (top, 0), (top, top)] {
            rho[r * dim + c] += 0.5 * v;
        }
        Ok(DenseGhz { n, dim, rho })
    }

    pub fn parties(&self) -> usize {
        self.n
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|k| self.rho[k * self.dim + k]).sum()
    }

    /// `<psi| rho |psi>` for a product of single-qubit eigenvectors of the
    /// equatorial observables: `(|0> + s e^{i phi} |1>) / sqrt 2`, with
    /// `s = +1` for outcome +1 and `s = -1` for outcome -1.
    pub fn outcome_probability(&self, phis: &[f64], plus: &[bool]) -> f64 {
        debug_assert_eq!(phis.len(), self.n);
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let local: Vec<[Complex64; 2]> = phis
            .iter()
            .zip(plus)
            .map(|(&phi, &up)| {
                let sign = if up { 1.0 } else { -1.0 };
                [
                    Complex64::new(amp, 0.0),
                    Complex64::from_polar(sign * amp, phi),
                ]
            })
            .collect();
        // qubit 0 is the most significant bit of the basis index
        let psi: Vec<Complex64> = (0..self.dim)
            .map(|b| {
                (0..self.n).fold(Complex64::new(1.0, 0.0), |acc, q| {
                    acc * local[q][(b >> (self.n - 1 - q)) & 1]
                })
            })
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for (r, pr) in psi.iter().enumerate() {
            let row = &self.rho[r * self.dim..(r + 1) * self.dim];
            let inner: Complex64 = row.iter().zip(&psi).map(|(a, b)| a * b).sum();
            total += pr.conj() * inner;
        }
        total.re
    }

    /// All parties output +1 for the given settings.
    pub fn joint(&self, angles: &MeasurementAngles, settings: &[usize]) -> f64 {
        let phis: Vec<f64> = settings
            .iter()
            .enumerate()
            .map(|(p, &s)| angles.angle(p, s))
            .collect();
        self.outcome_probability(&phis, &vec![true; self.n])
    }

    /// All listed parties output +1; the one omitted party is traced out by
    /// summing over its two outcomes.
    pub fn marginal(
        &self,
        angles: &MeasurementAngles,
        parties: &[usize],
        settings: &[usize],
    ) -> Result<f64> {
        check_subset(self.n, parties, settings)?;
        let omitted = (0..self.n)
            .find(|p| !parties.contains(p))
            .expect("one party omitted");
        let mut phis = vec![0.0; self.n];
        for (&p, &s) in parties.iter().zip(settings) {
            phis[p] = angles.angle(p, s);
        }
        phis[omitted] = angles.angle(omitted, 0);
        let mut plus = vec![true; self.n];
        let up = self.outcome_probability(&phis, &plus);
        plus[omitted] = false;
        Ok(up + self.outcome_probability(&phis, &plus))
    }
}

pub fn joint_probability_dense(
    scenario: &QuantumScenario,
    angles: &MeasurementAngles,
    settings: &[usize],
) -> Result<f64> {
    Ok(DenseGhz::new(scenario.n, scenario.v)?.joint(angles, settings))
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    /// Term-by-term sum with a cap on `m^n`.
    Direct {
        term_budget: u64,
    },
    ClosedForm,
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode::Direct {
            term_budget: DEFAULT_TERM_BUDGET,
        }
    }
}

fn term_count(n: usize, m: usize) -> u128 {
    (0..n)
        .try_fold(1u128, |acc, _| acc.checked_mul(m as u128))
        .unwrap_or(u128::MAX)
}

/// Quantum value of the Bell functional with efficiency-scaled probabilities.
/// `x`, `y` are the inequality parameters.
pub fn bell_value_quantum(
    scenario: &QuantumScenario,
    x: f64,
    y: f64,
    eta: f64,
    mode: EvalMode,
) -> Result<f64> {
    let (n, m) = (scenario.n, scenario.m);
    let eff = EfficiencyModel::new(eta)?;
    match mode {
        EvalMode::ClosedForm => {
            let scale = eta * m as f64 / 2.0;
            Ok(
                (y - (1.0 - scenario.v) * x / m as f64) * scale.powi(n as i32)
                    - n as f64 * scale.powi(n as i32 - 1),
            )
        }
        EvalMode::Direct { term_budget } => {
            let required = term_count(n, m);
            if required > term_budget as u128 {
                return Err(Error::BudgetExceeded {
                    required,
                    budget: term_budget as u128,
                    hint: "use closed-form mode",
                });
            }
            let mut acc = CompensatedSum::default();
            let mut settings = vec![0usize; n];
            loop {
                let sum: usize = settings.iter().sum();
                let weight = if sum.is_multiple_of(m) { y - x } else { y };
                acc.add(eff.observed(n, joint_probability(scenario, &settings)) * weight);
                if !advance(&mut settings, m) {
                    break;
                }
            }
            let parties: Vec<Vec<usize>> = (0..n)
                .map(|skip| (0..n).filter(|&p| p != skip).collect())
                .collect();
            let mut sub = vec![0usize; n - 1];
            for subset in &parties {
                loop {
                    acc.add(-eff.observed(n - 1, marginal_probability(scenario, subset, &sub)?));
                    if !advance(&mut sub, m) {
                        break;
                    }
                }
            }
            Ok(acc.value())
        }
    }
}

fn advance(digits: &mut [usize], m: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < m {
            return true;
        }
        *d = 0;
    }
    false
}

/// Root in `eta` of the direct-mode Bell value on `(0, 1]`.
pub fn threshold_from_oracle(scenario: &QuantumScenario, x: f64, y: f64) -> Result<f64> {
    let d = scenario.m as f64 * y - (1.0 - scenario.v) * x;
    if d <= 0.0 {
        return Err(Error::NoViolation {
            denominator: d.to_string(),
        });
    }
    let f = |eta: f64| bell_value_quantum(scenario, x, y, eta, EvalMode::default());
    if f(1.0)? < 0.0 {
        return Err(Error::NoRootInUnitInterval);
    }
    bisect(f, 0.0, 1.0)
}

/// Bisection for a function negative just above `lo` and non-negative at
/// `hi`.
pub fn bisect(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(v_separable, v_two_setting)`: the state is fully separable iff
/// `v <= 1/(1 + 2^(n-1))`, and violates a two-setting full-correlation
/// inequality for `v > 2^(-(n-1)/2)`.
pub fn reference_visibility_bounds(n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::validation("n", format!("n < 2 (got {n})")));
    }
    let half = f64::powi(2.0, n as i32 - 1);
    Ok((1.0 / (1.0 + half), 2f64.powf(-((n - 1) as f64) / 2.0)))
}
