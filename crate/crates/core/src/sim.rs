//! Input signals, fixed-step integration and trajectory recording.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::csvfmt::{self, Table};
use crate::params::PlantParameters;
use crate::plant::{
    ExternalLoad, FullModel, FullState, ReducedModel, ReducedState, SignLaw, FULL_STATE_NAMES,
    REDUCED_STATE_NAMES,
};
use crate::valve::InputMap;
use crate::Error;

/// Commanded spool position as a function of time, in m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSignal {
    Constant {
        amplitude: f64,
    },
    /// Zero before `step_time`, `amplitude` from `step_time` on.
    Step {
        amplitude: f64,
        step_time: f64,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// Linear sweep from `f_start` down to `f_end` over `duration` seconds;
    /// after that the frequency stays at `f_end`.
    DownChirp {
        amplitude: f64,
        f_start: f64,
        f_end: f64,
        duration: f64,
    },
}

impl InputSignal {
    pub fn check(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        match *self {
            InputSignal::Constant { amplitude } if !amplitude.is_finite() => {
                bad("amplitude must be finite")
            }
            InputSignal::Step {
                amplitude,
                step_time,
            } if !amplitude.is_finite() || !step_time.is_finite() => {
                bad("step amplitude and time must be finite")
            }
            InputSignal::Sine {
                amplitude,
                frequency,
            } if !amplitude.is_finite() || !(frequency > 0.0) => {
                bad("sine needs a finite amplitude and frequency > 0")
            }
            InputSignal::DownChirp {
                amplitude,
                f_start,
                f_end,
                duration,
            } if !amplitude.is_finite()
                || !(f_start > f_end && f_end > 0.0)
                || !(duration > 0.0) =>
            {
                bad("down-chirp needs f_start > f_end > 0 and duration > 0")
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Constant { amplitude } => amplitude,
            InputSignal::Step {
                amplitude,
                step_time,
            } => {
                if t < step_time {
                    0.0
                } else {
                    amplitude
                }
            }
            InputSignal::Sine {
                amplitude,
                frequency,
            } => amplitude * (2.0 * PI * frequency * t).sin(),
            InputSignal::DownChirp { amplitude, .. } => amplitude * self.chirp_phase(t).sin(),
        }
    }

    /// Instantaneous frequency in Hz (zero for the non-periodic signals).
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        match *self {
            InputSignal::Sine { frequency, .. } => frequency,
            InputSignal::DownChirp {
                f_start,
                f_end,
                duration,
                ..
            } => {
                if t >= duration {
                    f_end
                } else {
                    f_start + (f_end - f_start) * t / duration
                }
            }
            _ => 0.0,
        }
    }

    fn chirp_phase(&self, t: f64) -> f64 {
        let InputSignal::DownChirp {
            f_start,
            f_end,
            duration,
            ..
        } = *self
        else {
            unreachable!()
        };
        let sweep = |t: f64| f_start * t + (f_end - f_start) / (2.0 * duration) * t * t;
        if t <= duration {
            2.0 * PI * sweep(t)
        } else {
            2.0 * PI * (sweep(duration) + f_end * (t - duration))
        }
    }

    /// Parses `const:A`, `step:A[:T]`, `sine:A:F` or `chirp:A:F0:F1`.
    /// A chirp sweeps over `chirp_duration` seconds.
    pub fn parse(spec: &str, chirp_duration: f64) -> Result<Self, Error> {
        let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
        let num = |i: usize| -> Result<f64, Error> {
            let s = parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("input `{spec}`: missing field {}", i + 1)))?;
            s.parse()
                .map_err(|_| Error::Parse(format!("input `{spec}`: `{s}` is not a number")))
        };
        let arity = |lo: usize, hi: usize| {
            if parts.len() < lo || parts.len() > hi {
                Err(Error::Parse(format!(
                    "input `{spec}`: wrong number of fields"
                )))
            } else {
                Ok(())
            }
        };
        let sig = match parts[0] {
            "const" => {
                arity(2, 2)?;
                InputSignal::Constant { amplitude: num(1)? }
            }
            "step" => {
                arity(2, 3)?;
                InputSignal::Step {
                    amplitude: num(1)?,
                    step_time: if parts.len() == 3 { num(2)? } else { 0.0 },
                }
            }
            "sine" => {
                arity(3, 3)?;
                InputSignal::Sine {
                    amplitude: num(1)?,
                    frequency: num(2)?,
                }
            }
            "chirp" => {
                arity(4, 4)?;
                InputSignal::DownChirp {
                    amplitude: num(1)?,
                    f_start: num(2)?,
                    f_end: num(3)?,
                    duration: chirp_duration,
                }
            }
            other => return Err(Error::Parse(format!("unknown input kind `{other}`"))),
        };
        sig.check()?;
        Ok(sig)
    }
}

impl fmt::Display for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputSignal::Constant { amplitude } => write!(f, "const:{amplitude}"),
            InputSignal::Step {
                amplitude,
                step_time,
            } => write!(f, "step:{amplitude}:{step_time}"),
            InputSignal::Sine {
                amplitude,
                frequency,
            } => write!(f, "sine:{amplitude}:{frequency}"),
            InputSignal::DownChirp {
                amplitude,
                f_start,
                f_end,
                duration,
            } => write!(f, "chirp:{amplitude}:{f_start}:{f_end} over {duration} s"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    Full,
    #[default]
    Reduced,
}

impl ModelKind {
    /// CSV column names, `t` first.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            ModelKind::Full => &[
                "t", "nu", "nu_dot", "PA", "PB", "x", "x_dot", "z", "QA", "QB",
            ],
            ModelKind::Reduced => &["t", "PL", "x_dot", "x", "z", "QL"],
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "full" => Ok(ModelKind::Full),
            "reduced" => Ok(ModelKind::Reduced),
            _ => Err(Error::Parse(format!("unknown model `{s}`"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Full => "full",
            ModelKind::Reduced => "reduced",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Explicit forward Euler.
    #[default]
    Euler,
    /// Classical fourth-order Runge-Kutta, for convergence cross-checks.
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub model: ModelKind,
    pub t_end: f64,
    pub dt: f64,
    /// Replace the dead-zone/saturation map by the saturation alone.
    pub bypass_input_nonlinearity: bool,
    pub integrator: Integrator,
    pub sign_law: SignLaw,
    pub initial_full: FullState,
    pub initial_reduced: ReducedState,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            model: ModelKind::Reduced,
            t_end: 1.0,
            dt: 1e-4,
            bypass_input_nonlinearity: false,
            integrator: Integrator::Euler,
            sign_law: SignLaw::Tanh,
            initial_full: FullState::default(),
            initial_reduced: ReducedState::default(),
        }
    }
}

impl SimOptions {
    pub fn new(model: ModelKind, t_end: f64, dt: f64) -> Self {
        Self {
            model,
            t_end,
            dt,
            ..Default::default()
        }
    }

    pub fn bypass(mut self, on: bool) -> Self {
        self.bypass_input_nonlinearity = on;
        self
    }

    pub fn integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    fn input_map(&self) -> InputMap {
        if self.bypass_input_nonlinearity {
            InputMap::SaturationOnly
        } else {
            InputMap::DeadZoneSaturation
        }
    }

    /// Number of integration steps, `floor(t_end / dt)` with a guard
    /// against ratios like 0.3 / 1e-4 landing a hair below an integer.
    pub fn steps(&self) -> usize {
        let r = self.t_end / self.dt;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * n.max(1.0) {
            n as usize
        } else {
            r.floor() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub model: ModelKind,
    pub params_hash: u64,
    pub input: String,
    pub bypass_input_nonlinearity: bool,
    pub integrator: Integrator,
}

/// Uniformly sampled simulation record, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub columns: Vec<String>,
    pub data: Vec<Vec<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(&self.data[idx])
    }

    pub fn time(&self) -> &[f64] {
        &self.data[0]
    }

    /// Values of every column at record `k`.
    pub fn row(&self, k: usize) -> Vec<f64> {
        self.data.iter().map(|c| c[k]).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let n = self.len();
        let mut row = vec![0.0; self.columns.len()];
        let rows = (0..n).map(|k| {
            for (slot, col) in row.iter_mut().zip(&self.data) {
                *slot = col[k];
            }
            row.clone()
        });
        csvfmt::write_table(out, &self.columns, rows)
    }

    /// Reads a trajectory CSV written by [`write_csv`](Self::write_csv). The
    /// model is recognised from the header; metadata that is not stored in
    /// the file is left empty.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, Error> {
        let Table { header, rows } = csvfmt::read_table(input)?;
        let model = [ModelKind::Full, ModelKind::Reduced]
            .into_iter()
            .find(|m| m.columns().iter().eq(header.iter()))
            .ok_or_else(|| Error::Parse(format!("unrecognised trajectory header {header:?}")))?;
        let mut data = vec![Vec::with_capacity(rows.len()); header.len()];
        for row in rows {
            for (col, v) in data.iter_mut().zip(row) {
                col.push(v);
            }
        }
        let dt = if data[0].len() > 1 {
            data[0][1] - data[0][0]
        } else {
            0.0
        };
        Ok(Self {
            dt,
            columns: header,
            data,
            meta: TrajectoryMeta {
                model,
                params_hash: 0,
                input: String::new(),
                bypass_input_nonlinearity: false,
                integrator: Integrator::Euler,
            },
        })
    }
}

fn first_non_finite<const N: usize>(x: &[f64; N]) -> Option<usize> {
    x.iter().position(|v| !v.is_finite())
}

fn add_scaled<const N: usize>(x: &[f64; N], k: &[f64; N], h: f64) -> [f64; N] {
    std::array::from_fn(|i| x[i] + h * k[i])
}

/// Advances `x` by one step of size `dt` from time `t`.
fn step<const N: usize>(
    method: Integrator,
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    t: f64,
    dt: f64,
    x: &[f64; N],
) -> [f64; N] {
    match method {
        Integrator::Euler => add_scaled(x, &f(t, x), dt),
        Integrator::Rk4 => {
            let k1 = f(t, x);
            let k2 = f(t + 0.5 * dt, &add_scaled(x, &k1, 0.5 * dt));
            let k3 = f(t + 0.5 * dt, &add_scaled(x, &k2, 0.5 * dt));
            let k4 = f(t + dt, &add_scaled(x, &k3, dt));
            std::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        }
    }
}

/// Runs the recurrence and calls `record(k, t_k, x_k)` for every record.
fn run<const N: usize>(
    opts: &SimOptions,
    names: &[&'static str; N],
    x0: [f64; N],
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    mut record: impl FnMut(f64, &[f64; N]),
) -> Result<(), Error> {
    let steps = opts.steps();
    let mut x = x0;
    if let Some(i) = first_non_finite(&x) {
        return Err(Error::NonFinite {
            step: 0,
            time: 0.0,
            component: names[i],
        });
    }
    record(0.0, &x);
    for k in 0..steps {
        let t = k as f64 * opts.dt;
        x = step(opts.integrator, &f, t, opts.dt, &x);
        if let Some(i) = first_non_finite(&x) {
            return Err(Error::NonFinite {
                step: k + 1,
                time: (k + 1) as f64 * opts.dt,
                component: names[i],
            });
        }
        record((k + 1) as f64 * opts.dt, &x);
    }
    Ok(())
}

/// Integrates the selected model from its initial state.
pub fn integrate(
    p: &PlantParameters,
    sig: &InputSignal,
    load: &ExternalLoad,
    opts: &SimOptions,
) -> Result<Trajectory, Error> {
    if !(opts.dt > 0.0) || !(opts.t_end >= opts.dt) {
        return Err(Error::Domain(format!(
            "need dt > 0 and t_end >= dt, got dt = {}, t_end = {}",
            opts.dt, opts.t_end
        )));
    }
    sig.check()?;
    let n = opts.steps() + 1;
    let columns = opts.model.columns();
    let mut data: Vec<Vec<f64>> = (0..columns.len()).map(|_| Vec::with_capacity(n)).collect();

    match opts.model {
        ModelKind::Full => {
            let model = FullModel {
                params: *p,
                input_map: opts.input_map(),
                sign_law: opts.sign_law,
            };
            let f = |t: f64, x: &[f64; 6]| {
                model
                    .derivative(&FullState::from_array(*x), sig.sample(t), load.at(t))
                    .to_array()
            };
            run(
                opts,
                &FULL_STATE_NAMES,
                opts.initial_full.to_array(),
                f,
                |t, x| {
                    let out = model.outputs(&FullState::from_array(*x));
                    let vals = [t, x[0], x[1], x[2], x[3], x[4], x[5], out.z, out.qa, out.qb];
                    for (col, v) in data.iter_mut().zip(vals) {
                        col.push(v);
                    }
                },
            )?;
        }
        ModelKind::Reduced => {
            let model = ReducedModel {
                params: *p,
                input_map: opts.input_map(),
                sign_law: opts.sign_law,
            };
            let f = |t: f64, x: &[f64; 3]| {
                model
                    .derivative(&ReducedState::from_array(*x), sig.sample(t), load.at(t))
                    .to_array()
            };
            run(
                opts,
                &REDUCED_STATE_NAMES,
                opts.initial_reduced.to_array(),
                f,
                |t, x| {
                    let out = model.outputs(&ReducedState::from_array(*x), sig.sample(t));
                    let vals = [t, x[0], x[1], x[2], out.z, out.ql];
                    for (col, v) in data.iter_mut().zip(vals) {
                        col.push(v);
                    }
                },
            )?;
        }
    }

    Ok(Trajectory {
        dt: opts.dt,
        columns: columns.iter().map(|c| c.to_string()).collect(),
        data,
        meta: TrajectoryMeta {
            model: opts.model,
            params_hash: p.fingerprint(),
            input: sig.to_string(),
            bypass_input_nonlinearity: opts.bypass_input_nonlinearity,
            integrator: opts.integrator,
        },
    })
}

/// One independent simulation of a batch.
#[derive(Debug, Clone)]
pub struct SimJob {
    pub params: PlantParameters,
    pub input: InputSignal,
    pub load: ExternalLoad,
    pub options: SimOptions,
}

/// Runs independent simulations on separate threads; results keep the job
/// order.
pub fn integrate_batch(jobs: &[SimJob]) -> Vec<Result<Trajectory, Error>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|j| scope.spawn(move || integrate(&j.params, &j.input, &j.load, &j.options)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}
