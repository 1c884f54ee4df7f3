//! Linearized analysis of the reduced model: load-flow-to-velocity and
//! orifice-to-velocity transfer functions, flow coefficients at an operating
//! point, static flow-pressure curves and the root locus of the position loop.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::csvfmt::{self, fmt_sig};
use crate::frfest::FrfData;
use crate::params::PlantParameters;
use crate::valve;
use crate::Error;

/// Rational function of `s` with real coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

/// Evaluates a polynomial with ascending coefficients (Horner).
pub fn poly_eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

fn poly_eval_derivative(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, (i, &c)| {
            acc * s + c * i as f64
        })
}

/// Roots of a polynomial with ascending coefficients, from the eigenvalues
/// of its companion matrix followed by a few Newton corrections.
pub fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0);
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let companion = DMatrix::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -coeffs[deg - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .map(|&r| {
            let mut r = r;
            for _ in 0..3 {
                let d = poly_eval_derivative(&coeffs[..=deg], r);
                if d.norm() == 0.0 {
                    break;
                }
                let step = poly_eval(&coeffs[..=deg], r) / d;
                if !step.re.is_finite() || !step.im.is_finite() {
                    break;
                }
                r -= step;
            }
            r
        })
        .collect()
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Self {
        debug_assert!(den.iter().any(|&c| c != 0.0));
        Self { num, den }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    /// Response at `f` Hz.
    pub fn at_hz(&self, f: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, 2.0 * PI * f))
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            num: self.num.iter().map(|c| c * k).collect(),
            den: self.den.clone(),
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly_roots(&self.den)
    }

    /// Frequency (Hz) and magnitude of the largest `|H(j 2 pi f)|` in
    /// `[f_lo, f_hi]`, located on a log grid and refined by golden-section
    /// search.
    pub fn peak(&self, f_lo: f64, f_hi: f64) -> (f64, f64) {
        let n = 2000;
        let ratio = (f_hi / f_lo).ln();
        let grid = |i: usize| f_lo * (ratio * i as f64 / (n - 1) as f64).exp();
        let mag = |f: f64| self.at_hz(f).norm();
        let best = (0..n)
            .max_by(|&a, &b| mag(grid(a)).total_cmp(&mag(grid(b))))
            .unwrap();
        let (mut a, mut b) = (grid(best.saturating_sub(1)), grid((best + 1).min(n - 1)));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if mag(c) > mag(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let f = 0.5 * (a + b);
        (f, mag(f))
    }
}

/// Linearized reduced model from load flow to rod velocity,
/// `(1/Abar) / (s^2/wc^2 + 2 zeta s/wc + 1)`.
pub fn reduced_tf(p: &PlantParameters) -> TransferFunction {
    let d = p.derive();
    TransferFunction::new(
        vec![1.0 / d.abar],
        vec![1.0, 2.0 * d.zeta / d.omega_c, 1.0 / (d.omega_c * d.omega_c)],
    )
}

/// Operating point of the valve in the positive working range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub z_hat: f64,
    pub pl_hat: f64,
}

impl OperatingPoint {
    pub fn new(z_hat: f64, pl_hat: f64) -> Self {
        Self { z_hat, pl_hat }
    }

    /// Operating point given as fractions of `alpha` and `PS`.
    pub fn relative(z_frac: f64, pl_frac: f64, p: &PlantParameters) -> Self {
        Self::new(z_frac * p.alpha, pl_frac * p.ps)
    }

    fn check(&self, p: &PlantParameters) -> Result<(), Error> {
        if !(self.pl_hat < p.ps) {
            return Err(Error::Domain(format!(
                "operating load pressure {} must stay below PS = {}",
                self.pl_hat, p.ps
            )));
        }
        if !(self.z_hat >= 0.0 && self.z_hat <= p.alpha) || !(self.pl_hat >= 0.0) {
            return Err(Error::Domain(format!(
                "operating point must satisfy 0 <= z_hat <= alpha and PL_hat >= 0, got ({}, {})",
                self.z_hat, self.pl_hat
            )));
        }
        Ok(())
    }
}

/// How the flow coefficients are computed from the load-flow equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowMode {
    /// `Cq = K sqrt(PS - PL)`, `Cqp = K z / (2 sqrt(PS - PL))`.
    #[default]
    Literal,
    /// Exact partial derivatives of the aggregated load flow, which carry an
    /// extra factor `1/sqrt(2)`.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCoefficients {
    /// Flow gain, dQL/dz.
    pub cq: f64,
    /// Flow-pressure coefficient, -dQL/dPL (non-negative).
    pub cqp: f64,
}

pub fn flow_coefficients(
    op: &OperatingPoint,
    p: &PlantParameters,
    mode: FlowMode,
) -> Result<FlowCoefficients, Error> {
    op.check(p)?;
    let k = p.valve_gain();
    let root = (p.ps - op.pl_hat).sqrt();
    let scale = match mode {
        FlowMode::Literal => 1.0,
        FlowMode::Consistent => std::f64::consts::FRAC_1_SQRT_2,
    };
    Ok(FlowCoefficients {
        cq: scale * k * root,
        cqp: scale * k * op.z_hat / (2.0 * root),
    })
}

/// `Cq z - Cqp PL`.
#[inline]
pub fn linearized_load_flow(coeffs: &FlowCoefficients, z: f64, pl: f64) -> f64 {
    coeffs.cq * z - coeffs.cqp * pl
}

/// Orifice-to-velocity transfer function with load-pressure feedback,
/// `Cq G / (1 + Cqp (m s + sigma) G / Abar)`, as a single fraction.
pub fn closed_linear_tf(
    op: &OperatingPoint,
    p: &PlantParameters,
    mode: FlowMode,
) -> Result<TransferFunction, Error> {
    let c = flow_coefficients(op, p, mode)?;
    Ok(closed_linear_tf_from(&c, p))
}

pub fn closed_linear_tf_from(c: &FlowCoefficients, p: &PlantParameters) -> TransferFunction {
    let d = p.derive();
    let a2 = d.abar * d.abar;
    TransferFunction::new(
        vec![c.cq / d.abar],
        vec![
            1.0 + c.cqp * p.sigma / a2,
            2.0 * d.zeta / d.omega_c + c.cqp * p.m / a2,
            1.0 / (d.omega_c * d.omega_c),
        ],
    )
}

/// Evaluates `tf` at each frequency (Hz).
pub fn frf_eval(tf: &TransferFunction, freqs: &[f64]) -> FrfData {
    FrfData::new(freqs.to_vec(), freqs.iter().map(|&f| tf.at_hz(f)).collect())
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let r = (hi / lo).ln();
            (0..n)
                .map(|i| lo * (r * i as f64 / (n - 1) as f64).exp())
                .collect()
        }
    }
}

/// Static load flow over a load-pressure grid for several openings.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPressureTable {
    pub z_values: Vec<f64>,
    pub pl_grid: Vec<f64>,
    /// `flows[i][j]` is the load flow at `z_values[i]`, `pl_grid[j]`.
    pub flows: Vec<Vec<f64>>,
}

impl FlowPressureTable {
    /// Columns `PL` then `z_<value>` per opening.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut header = vec!["PL".to_string()];
        header.extend(
            self.z_values
                .iter()
                .map(|z| format!("z_{}", fmt_sig(*z, 6))),
        );
        let rows = self.pl_grid.iter().enumerate().map(|(j, &pl)| {
            let mut row = vec![pl];
            row.extend(self.flows.iter().map(|r| r[j]));
            row
        });
        csvfmt::write_table(out, &header, rows)
    }
}

pub fn flow_pressure_curves(
    z_values: &[f64],
    pl_grid: &[f64],
    p: &PlantParameters,
) -> FlowPressureTable {
    FlowPressureTable {
        z_values: z_values.to_vec(),
        pl_grid: pl_grid.to_vec(),
        flows: z_values
            .iter()
            .map(|&z| {
                pl_grid
                    .iter()
                    .map(|&pl| valve::load_flow(z, pl, p))
                    .collect()
            })
            .collect(),
    }
}

/// Characteristic polynomial of `1 + k G(s)/s`, ascending powers.
pub fn loop_polynomial(p: &PlantParameters, k: f64) -> [f64; 4] {
    let d = p.derive();
    [
        k / d.abar,
        1.0,
        2.0 * d.zeta / d.omega_c,
        1.0 / (d.omega_c * d.omega_c),
    ]
}

/// Closed-loop poles for one gain, sorted by imaginary part.
pub fn loop_poles(p: &PlantParameters, k: f64) -> [Complex64; 3] {
    let r = poly_roots(&loop_polynomial(p, k));
    let mut poles = [r[0], r[1], r[2]];
    poles.sort_by(|a, b| a.im.total_cmp(&b.im));
    poles
}

/// Closed-loop poles along a gain sweep. Consecutive entries are ordered so
/// that each column follows one continuous branch.
pub fn root_locus(p: &PlantParameters, gains: &[f64]) -> Vec<[Complex64; 3]> {
    const PERMS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut out: Vec<[Complex64; 3]> = Vec::with_capacity(gains.len());
    for &k in gains {
        let poles = loop_poles(p, k);
        let next = match out.last() {
            None => poles,
            Some(prev) => {
                let cost = |perm: &[usize; 3]| {
                    (0..3)
                        .map(|i| (poles[perm[i]] - prev[i]).norm())
                        .sum::<f64>()
                };
                let best = PERMS
                    .iter()
                    .min_by(|a, b| cost(a).total_cmp(&cost(b)))
                    .unwrap();
                [poles[best[0]], poles[best[1]], poles[best[2]]]
            }
        };
        out.push(next);
    }
    out
}

/// Stability limit of the position loop from the Routh-Hurwitz condition,
/// `k_crit = 2 zeta wc Abar = sigma Abar / m`.
pub fn critical_gain(p: &PlantParameters) -> f64 {
    let d = p.derive();
    2.0 * d.zeta * d.omega_c * d.abar
}

/// Default sweep: 200 log-spaced gains over `[1e-3, 10] * k_crit`.
pub fn default_gain_grid(p: &PlantParameters) -> Vec<f64> {
    let kc = critical_gain(p);
    logspace(1e-3 * kc, 10.0 * kc, 200)
}

fn max_real_part(p: &PlantParameters, k: f64) -> f64 {
    loop_poles(p, k)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Where the root locus crosses into the right half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    /// Grid bracket `[k_lo, k_hi]` containing the sign change.
    pub bracket: (f64, f64),
    /// Gain refined by bisection inside the bracket.
    pub gain: f64,
    /// Magnitude of the imaginary part of the crossing pair, rad/s.
    pub omega: f64,
}

/// Scans the pole sweep for the first sign change of the largest real part
/// and refines it by bisection on the same pole computation.
pub fn locate_crossing(p: &PlantParameters, gains: &[f64]) -> Option<Crossing> {
    let idx = gains
        .windows(2)
        .position(|w| max_real_part(p, w[0]) < 0.0 && max_real_part(p, w[1]) >= 0.0)?;
    let (k_lo, k_hi) = (gains[idx], gains[idx + 1]);
    let (mut a, mut b) = (k_lo, k_hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if max_real_part(p, mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * b {
            break;
        }
    }
    let gain = 0.5 * (a + b);
    let omega = loop_poles(p, gain)
        .iter()
        .max_by(|x, y| x.re.total_cmp(&y.re))
        .map(|z| z.im.abs())
        .unwrap();
    Some(Crossing {
        bracket: (k_lo, k_hi),
        gain,
        omega,
    })
}

/// Writes `k, re1, im1, re2, im2, re3, im3`.
pub fn write_root_locus_csv<W: Write>(
    out: W,
    gains: &[f64],
    poles: &[[Complex64; 3]],
) -> std::io::Result<()> {
    csvfmt::write_table(
        out,
        &["k", "re1", "im1", "re2", "im2", "re3", "im3"],
        gains
            .iter()
            .zip(poles)
            .map(|(&k, r)| [k, r[0].re, r[0].im, r[1].re, r[1].im, r[2].re, r[2].im]),
    )
}
