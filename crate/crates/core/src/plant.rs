//! State equations of the full-order and reduced models.
//!
//! Full-order state: spool displacement and velocity, both chamber pressures,
//! rod position and velocity. Rod position is carried explicitly because the
//! chamber volumes depend on it.
//!
//! Reduced state: load pressure, rod velocity and (as a pure output
//! integrator) rod position.

use std::fmt;
use std::sync::Arc;

use crate::params::PlantParameters;
use crate::valve::{self, InputMap, SpoolState};

pub const FULL_STATE_NAMES: [&str; 6] = ["nu", "nu_dot", "PA", "PB", "x", "x_dot"];
pub const REDUCED_STATE_NAMES: [&str; 3] = ["PL", "x_dot", "x"];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FullState {
    pub nu: f64,
    pub nu_dot: f64,
    pub pa: f64,
    pub pb: f64,
    pub x: f64,
    pub x_dot: f64,
}

impl FullState {
    pub fn to_array(self) -> [f64; 6] {
        [self.nu, self.nu_dot, self.pa, self.pb, self.x, self.x_dot]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            nu: a[0],
            nu_dot: a[1],
            pa: a[2],
            pb: a[3],
            x: a[4],
            x_dot: a[5],
        }
    }

    pub fn spool(&self) -> SpoolState {
        SpoolState {
            nu: self.nu,
            nu_dot: self.nu_dot,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReducedState {
    pub pl: f64,
    pub x_dot: f64,
    pub x: f64,
}

impl ReducedState {
    pub fn to_array(self) -> [f64; 3] {
        [self.pl, self.x_dot, self.x]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            pl: a[0],
            x_dot: a[1],
            x: a[2],
        }
    }
}

/// External force acting against the rod, as a function of time.
#[derive(Clone, Default)]
pub enum ExternalLoad {
    #[default]
    Zero,
    Constant(f64),
    /// `force` from `time` on, zero before.
    Step {
        force: f64,
        time: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ExternalLoad {
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        match self {
            ExternalLoad::Zero => 0.0,
            ExternalLoad::Constant(f) => *f,
            ExternalLoad::Step { force, time } => {
                if t >= *time {
                    *force
                } else {
                    0.0
                }
            }
            ExternalLoad::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for ExternalLoad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExternalLoad::Zero => f.write_str("Zero"),
            ExternalLoad::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            ExternalLoad::Step { force, time } => f
                .debug_struct("Step")
                .field("force", force)
                .field("time", time)
                .finish(),
            ExternalLoad::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Direction law of the velocity-dependent friction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SignLaw {
    /// `tanh(tanh_slope * x_dot)`.
    #[default]
    Tanh,
    /// Discontinuous `sign(x_dot)`, with `sign(0) = 0`.
    Sign,
}

fn stribeck_level(x_dot: f64, p: &PlantParameters) -> f64 {
    p.fc + (p.fs - p.fc) * (-(x_dot.abs() / p.chi).powf(p.delta)).exp()
}

/// Stribeck friction force with the smooth tanh direction law.
#[inline]
pub fn friction(x_dot: f64, p: &PlantParameters) -> f64 {
    friction_with(x_dot, p, SignLaw::Tanh)
}

pub fn friction_with(x_dot: f64, p: &PlantParameters, law: SignLaw) -> f64 {
    let dir = match law {
        SignLaw::Tanh => (p.tanh_slope * x_dot).tanh(),
        SignLaw::Sign => {
            if x_dot == 0.0 {
                0.0
            } else {
                x_dot.signum()
            }
        }
    };
    dir * stribeck_level(x_dot, p) + p.sigma * x_dot
}

/// `df/dx_dot` of [`friction_with`]. For the sign law the Dirac part at zero
/// velocity is dropped.
pub fn friction_slope(x_dot: f64, p: &PlantParameters, law: SignLaw) -> f64 {
    let level = stribeck_level(x_dot, p);
    let a = x_dot.abs();
    // d(level)/dv, zero at v = 0 by continuity of the product below
    let dlevel = if a > 0.0 {
        -(p.fs - p.fc)
            * (-(a / p.chi).powf(p.delta)).exp()
            * p.delta
            * (a / p.chi).powf(p.delta - 1.0)
            / p.chi
            * x_dot.signum()
    } else {
        0.0
    };
    let (dir, ddir) = match law {
        SignLaw::Tanh => {
            let th = (p.tanh_slope * x_dot).tanh();
            (th, p.tanh_slope * (1.0 - th * th))
        }
        SignLaw::Sign => (if a > 0.0 { x_dot.signum() } else { 0.0 }, 0.0),
    };
    let mixed = if a > 0.0 { dir * dlevel } else { 0.0 };
    ddir * level + mixed + p.sigma
}

/// Chamber volumes `(VA, VB)`; the rod position only counts within the
/// half-stroke.
#[inline]
pub fn chamber_volumes(x: f64, p: &PlantParameters) -> (f64, f64) {
    let xs = x.clamp(-p.h_stroke, p.h_stroke);
    (p.va0 + p.aa * xs, p.vb0 - p.ab * xs)
}

#[inline]
fn volume_slope(x: f64, p: &PlantParameters) -> f64 {
    if x.abs() < p.h_stroke {
        1.0
    } else {
        0.0
    }
}

/// Full-order model: parameters plus the choices that shape the right-hand
/// side.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FullModel {
    pub params: PlantParameters,
    pub input_map: InputMap,
    pub sign_law: SignLaw,
}

/// Signals computed alongside the full-order derivative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FullOutputs {
    pub z: f64,
    pub qa: f64,
    pub qb: f64,
}

impl FullModel {
    pub fn new(params: PlantParameters) -> Self {
        Self {
            params,
            ..Default::default()
        }
    }

    pub fn outputs(&self, s: &FullState) -> FullOutputs {
        let p = &self.params;
        let z = self.input_map.apply(s.nu, p);
        let (qa, qb) = valve::port_flows(z, s.pa, s.pb, p);
        FullOutputs { z, qa, qb }
    }

    pub fn derivative(&self, s: &FullState, u: f64, fl: f64) -> FullState {
        let p = &self.params;
        let FullOutputs { qa, qb, .. } = self.outputs(s);
        let (va, vb) = chamber_volumes(s.x, p);
        let (dnu, dnu_dot) = valve::spool_derivative(s.spool(), u, p);
        let leak = p.cl * (s.pa - s.pb);
        FullState {
            nu: dnu,
            nu_dot: dnu_dot,
            pa: p.e / va * (qa - p.aa * s.x_dot - leak),
            pb: p.e / vb * (qb + p.ab * s.x_dot + leak),
            x: s.x_dot,
            x_dot: (s.pa * p.aa - s.pb * p.ab - friction_with(s.x_dot, p, self.sign_law) - fl)
                / p.m,
        }
    }

    /// Analytic Jacobian `d(derivative)/d(state)` in
    /// [`FULL_STATE_NAMES`] order. Valid away from the branch points of the
    /// orifice map, `z = 0` and the stroke limits.
    pub fn jacobian(&self, s: &FullState) -> [[f64; 6]; 6] {
        let p = &self.params;
        let z = self.input_map.apply(s.nu, p);
        let dz = self.input_map.slope(s.nu, p);
        let (qa, qb) = valve::port_flows(z, s.pa, s.pb, p);
        let [dqa_dz, dqa_dpa, dqb_dz, dqb_dpb] = valve::port_flow_partials(z, s.pa, s.pb, p);
        let (va, vb) = chamber_volumes(s.x, p);
        let dv = volume_slope(s.x, p);
        let w2 = p.omega0 * p.omega0;

        let ga = qa - p.aa * s.x_dot - p.cl * (s.pa - s.pb);
        let gb = qb + p.ab * s.x_dot - p.cl * (s.pb - s.pa);
        let ea = p.e / va;
        let eb = p.e / vb;

        [
            [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            [-w2, -2.0 * p.xi * p.omega0, 0.0, 0.0, 0.0, 0.0],
            [
                ea * dqa_dz * dz,
                0.0,
                ea * (dqa_dpa - p.cl),
                ea * p.cl,
                -ea / va * ga * p.aa * dv,
                -ea * p.aa,
            ],
            [
                eb * dqb_dz * dz,
                0.0,
                eb * p.cl,
                eb * (dqb_dpb - p.cl),
                eb / vb * gb * p.ab * dv,
                eb * p.ab,
            ],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            [
                0.0,
                0.0,
                p.aa / p.m,
                -p.ab / p.m,
                0.0,
                -friction_slope(s.x_dot, p, self.sign_law) / p.m,
            ],
        ]
    }
}

/// Reduced model: aggregated load flow, load pressure and rod velocity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReducedModel {
    pub params: PlantParameters,
    pub input_map: InputMap,
    pub sign_law: SignLaw,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReducedOutputs {
    pub z: f64,
    pub ql: f64,
}

impl ReducedModel {
    pub fn new(params: PlantParameters) -> Self {
        Self {
            params,
            ..Default::default()
        }
    }

    /// `u_star` is the spool position, taken to follow the command instantly.
    pub fn outputs(&self, s: &ReducedState, u_star: f64) -> ReducedOutputs {
        let p = &self.params;
        let z = self.input_map.apply(u_star, p);
        ReducedOutputs {
            z,
            ql: valve::load_flow(z, s.pl, p),
        }
    }

    pub fn derivative(&self, s: &ReducedState, u_star: f64, fl: f64) -> ReducedState {
        let p = &self.params;
        let ReducedOutputs { ql, .. } = self.outputs(s, u_star);
        let abar = p.abar();
        ReducedState {
            pl: 4.0 * p.e / p.vt() * (ql - abar * s.x_dot - p.cl * s.pl),
            x_dot: (s.pl * abar - friction_with(s.x_dot, p, self.sign_law) - fl) / p.m,
            x: s.x_dot,
        }
    }

    /// Analytic Jacobian in [`REDUCED_STATE_NAMES`] order.
    pub fn jacobian(&self, s: &ReducedState, u_star: f64) -> [[f64; 3]; 3] {
        let p = &self.params;
        let z = self.input_map.apply(u_star, p);
        let (_, dql_dpl) = valve::load_flow_partials(z, s.pl, p);
        let abar = p.abar();
        let c = 4.0 * p.e / p.vt();
        [
            [c * (dql_dpl - p.cl), -c * abar, 0.0],
            [
                abar / p.m,
                -friction_slope(s.x_dot, p, self.sign_law) / p.m,
                0.0,
            ],
            [0.0, 1.0, 0.0],
        ]
    }
}

/// Full-order right-hand side with the dead-zone/saturation input map and
/// tanh friction.
pub fn full_derivative(s: &FullState, u: f64, fl: f64, p: &PlantParameters) -> FullState {
    FullModel::new(*p).derivative(s, u, fl)
}

/// Reduced right-hand side with the dead-zone/saturation input map and tanh
/// friction.
pub fn reduced_derivative(
    s: &ReducedState,
    u_star: f64,
    fl: f64,
    p: &PlantParameters,
) -> ReducedState {
    ReducedModel::new(*p).derivative(s, u_star, fl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> PlantParameters {
        PlantParameters::default()
    }

    #[test]
    fn friction_reference_values() {
        let p = p();
        assert_eq!(friction(0.0, &p), 0.0);
        // tanh(8) ~ 1: 600 + 300 e^-1 + 2000 * 0.02
        let expect = 8f64.tanh() * (600.0 + 300.0 * (-1f64).exp()) + 40.0;
        assert_relative_eq!(friction(0.02, &p), expect, max_relative = 1e-12);
        assert_relative_eq!(friction(0.02, &p), 750.4, epsilon = 0.1);
        assert_relative_eq!(friction(1.0, &p), 2600.0, epsilon = 0.01);
    }

    #[test]
    fn friction_sign_law_as_printed() {
        let p = p();
        assert_eq!(friction_with(0.0, &p, SignLaw::Sign), 0.0);
        // just above zero velocity the full stiction level acts
        assert_relative_eq!(
            friction_with(1e-12, &p, SignLaw::Sign),
            900.0,
            epsilon = 1e-3
        );
        assert_relative_eq!(
            friction_with(0.02, &p, SignLaw::Sign),
            600.0 + 300.0 * (-1f64).exp() + 40.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn friction_slope_matches_differences() {
        let p = p();
        for law in [SignLaw::Tanh, SignLaw::Sign] {
            for v in [-0.3, -0.01, 0.001, 0.004, 0.05, 1.2] {
                let h = 1e-7 * f64::abs(v);
                let fd =
                    (friction_with(v + h, &p, law) - friction_with(v - h, &p, law)) / (2.0 * h);
                assert_relative_eq!(friction_slope(v, &p, law), fd, max_relative = 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn friction_is_odd(v in -2.0f64..2.0) {
            let p = p();
            prop_assert_eq!(friction(-v, &p), -friction(v, &p));
            prop_assert_eq!(friction_with(-v, &p, SignLaw::Sign), -friction_with(v, &p, SignLaw::Sign));
        }

        #[test]
        fn volumes_stay_positive(x in -5.0f64..5.0) {
            let (va, vb) = chamber_volumes(x, &p());
            prop_assert!(va > 0.0 && vb > 0.0);
        }
    }

    #[test]
    fn chamber_volume_reference_points() {
        let p = p();
        assert_eq!(chamber_volumes(0.0, &p), (1.2e-3, 1.15e-3));
        let (va, vb) = chamber_volumes(0.1, &p);
        assert_relative_eq!(va, 1.7e-3, max_relative = 1e-12);
        assert_relative_eq!(vb, 6.8e-4, max_relative = 1e-12);
        let (va, vb) = chamber_volumes(0.5, &p);
        assert_eq!((va, vb), chamber_volumes(0.2, &p));
        assert_relative_eq!(va, 2.2e-3, max_relative = 1e-12);
        assert_relative_eq!(vb, 2.1e-4, max_relative = 1e-9);
    }

    #[test]
    fn full_equilibrium_at_rest() {
        let d = full_derivative(&FullState::default(), 0.0, 0.0, &p());
        assert_eq!(d, FullState::default());
    }

    #[test]
    fn full_pressure_force_only() {
        let s = FullState {
            pa: 2e6,
            pb: 1e6,
            ..Default::default()
        };
        let d = full_derivative(&s, 0.0, 0.0, &p());
        assert_relative_eq!(d.x_dot, 265.0, max_relative = 1e-12);
        assert_eq!(d.pa, 0.0);
        assert_eq!(d.pb, 0.0);
    }

    #[test]
    fn full_chamber_filling() {
        let p = p();
        let s = FullState {
            nu: 5e-4,
            pa: 4e6,
            ..Default::default()
        };
        let m = FullModel::new(p);
        let out = m.outputs(&s);
        assert_relative_eq!(out.z, 2e-4, max_relative = 1e-12);
        assert_relative_eq!(out.qa, 3.0893e-4, max_relative = 1e-4);
        let d = m.derivative(&s, 0.0, 0.0);
        assert_relative_eq!(d.pa, 1e8 / 1.2e-3 * out.qa, max_relative = 1e-12);
        assert_relative_eq!(d.pa, 2.574e7, max_relative = 1e-3);
    }

    #[test]
    fn full_pressures_frozen_without_flow_and_motion() {
        let p = p();
        for (pa, pb) in [(0.0, 0.0), (3e6, 7e6), (9e6, 1e5)] {
            let s = FullState {
                pa,
                pb,
                x: 0.05,
                ..Default::default()
            };
            let d = full_derivative(&s, 0.0, 0.0, &p);
            assert_eq!((d.pa, d.pb), (0.0, 0.0));
        }
    }

    #[test]
    fn reduced_equilibrium_at_rest() {
        let d = reduced_derivative(&ReducedState::default(), 0.0, 0.0, &p());
        assert_eq!(d, ReducedState::default());
    }

    #[test]
    fn reduced_full_opening_from_rest() {
        let p = p();
        let d = reduced_derivative(&ReducedState::default(), 1.3e-3, 0.0, &p);
        assert_relative_eq!(d.pl, 4e8 / 2.35e-3 * 1.410_06e-3, max_relative = 1e-5);
        assert_relative_eq!(d.pl, 2.400e8, max_relative = 1e-3);
        assert_eq!(d.x_dot, 0.0);
        assert_eq!(d.x, 0.0);
    }

    #[test]
    fn reduced_force_balance_at_steady_motion() {
        // Find the steady velocity at full opening by bisection on the
        // flow balance, then check the force balance residual.
        let p = p();
        let abar = p.abar();
        let residual_flow = |v: f64| {
            let pl = friction(v, &p) / abar;
            valve::load_flow(p.alpha, pl, &p) - abar * v
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if residual_flow(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        let s = ReducedState {
            pl: friction(v, &p) / abar,
            x_dot: v,
            x: 0.0,
        };
        let d = reduced_derivative(&s, 1.3e-3, 0.0, &p);
        assert!(d.x_dot.abs() < 1e-9, "{d:?}");
        assert!(d.pl.abs() < 1e-3, "{d:?}");
        assert!((s.pl * abar - friction(v, &p)).abs() < 1e-9);
    }

    #[test]
    fn external_load_variants() {
        assert_eq!(ExternalLoad::Zero.at(3.0), 0.0);
        assert_eq!(ExternalLoad::Constant(5.0).at(3.0), 5.0);
        let step = ExternalLoad::Step {
            force: 100.0,
            time: 1.0,
        };
        assert_eq!(step.at(0.5), 0.0);
        assert_eq!(step.at(1.0), 100.0);
        let c = ExternalLoad::Custom(Arc::new(|t| 2.0 * t));
        assert_eq!(c.at(4.0), 8.0);
        assert_eq!(format!("{c:?}"), "Custom(..)");
    }

    #[test]
    fn load_force_decelerates() {
        let p = p();
        let d0 = full_derivative(&FullState::default(), 0.0, 0.0, &p);
        let d1 = full_derivative(&FullState::default(), 0.0, 200.0, &p);
        assert_relative_eq!(d1.x_dot - d0.x_dot, -10.0, max_relative = 1e-12);
    }
}
