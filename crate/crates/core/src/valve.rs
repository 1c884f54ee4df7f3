//! Directional control valve: spool position loop, the orifice nonlinearity
//! and the orifice flow equations.

use crate::params::PlantParameters;

/// Spool displacement and velocity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpoolState {
    pub nu: f64,
    pub nu_dot: f64,
}

/// Second-order closed spool position loop with unity DC gain.
///
/// Returns `(d nu/dt, d nu_dot/dt)` for the commanded spool position `u`.
#[inline]
pub fn spool_derivative(s: SpoolState, u: f64, p: &PlantParameters) -> (f64, f64) {
    let w2 = p.omega0 * p.omega0;
    (
        s.nu_dot,
        w2 * u - 2.0 * p.xi * p.omega0 * s.nu_dot - w2 * s.nu,
    )
}

/// Dead-zone followed by saturation, mapping spool displacement to the
/// effective orifice opening `z`. Odd, continuous and bounded by `alpha`.
#[inline]
pub fn orifice_state(nu: f64, p: &PlantParameters) -> f64 {
    let a = nu.abs();
    if a >= p.alpha + p.beta {
        p.alpha.copysign(nu)
    } else if a < p.beta {
        0.0
    } else {
        nu - p.beta.copysign(nu)
    }
}

/// Slope `dz/dnu` of [`orifice_state`]; 0 or 1, taking the left-closed
/// branch at the breakpoints.
#[inline]
pub fn orifice_state_slope(nu: f64, p: &PlantParameters) -> f64 {
    let a = nu.abs();
    if a >= p.alpha + p.beta || a < p.beta {
        0.0
    } else {
        1.0
    }
}

/// How the spool displacement (or reduced-model input) becomes the orifice
/// state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum InputMap {
    /// Dead-zone and saturation in series.
    #[default]
    DeadZoneSaturation,
    /// Only the opening limit `|z| <= alpha`; used when the input
    /// nonlinearity is to be excluded, e.g. for FRF measurements.
    SaturationOnly,
}

impl InputMap {
    #[inline]
    pub fn apply(self, nu: f64, p: &PlantParameters) -> f64 {
        match self {
            InputMap::DeadZoneSaturation => orifice_state(nu, p),
            InputMap::SaturationOnly => nu.clamp(-p.alpha, p.alpha),
        }
    }

    #[inline]
    pub fn slope(self, nu: f64, p: &PlantParameters) -> f64 {
        match self {
            InputMap::DeadZoneSaturation => orifice_state_slope(nu, p),
            InputMap::SaturationOnly => {
                if nu.abs() < p.alpha {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Square root of a pressure difference; negative radicands stall the flow.
#[inline]
pub(crate) fn sqrt_drop(dp: f64) -> f64 {
    dp.max(0.0).sqrt()
}

/// Per-port orifice flows `(QA, QB)` in m^3/s. Positive flow enters the
/// chamber.
pub fn port_flows(z: f64, pa: f64, pb: f64, p: &PlantParameters) -> (f64, f64) {
    let k = p.valve_gain();
    if z > 0.0 {
        (z * k * sqrt_drop(p.ps - pa), -z * k * sqrt_drop(pb - p.pt))
    } else if z < 0.0 {
        (z * k * sqrt_drop(pa - p.pt), -z * k * sqrt_drop(p.ps - pb))
    } else {
        (0.0, 0.0)
    }
}

/// Partial derivatives of [`port_flows`]:
/// `(dQA/dz, dQA/dPA, dQB/dz, dQB/dPB)`.
///
/// Derivatives of a clamped (zero) radicand are reported as zero.
pub fn port_flow_partials(z: f64, pa: f64, pb: f64, p: &PlantParameters) -> [f64; 4] {
    let k = p.valve_gain();
    let half_inv = |r: f64| if r > 0.0 { 0.5 / r } else { 0.0 };
    if z > 0.0 {
        let ra = sqrt_drop(p.ps - pa);
        let rb = sqrt_drop(pb - p.pt);
        [
            k * ra,
            -z * k * half_inv(ra),
            -k * rb,
            -z * k * half_inv(rb),
        ]
    } else if z < 0.0 {
        let ra = sqrt_drop(pa - p.pt);
        let rb = sqrt_drop(p.ps - pb);
        [k * ra, z * k * half_inv(ra), -k * rb, z * k * half_inv(rb)]
    } else {
        // One-sided derivatives differ at z = 0; take the average slope.
        let up = port_flow_partials(f64::MIN_POSITIVE, pa, pb, p);
        let dn = port_flow_partials(-f64::MIN_POSITIVE, pa, pb, p);
        [0.5 * (up[0] + dn[0]), 0.0, 0.5 * (up[2] + dn[2]), 0.0]
    }
}

/// Aggregated load flow of the reduced model,
/// `QL = z K sqrt((PS - sign(z) PL) / 2)`.
pub fn load_flow(z: f64, pl: f64, p: &PlantParameters) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let k = p.valve_gain();
    z * k * sqrt_drop(0.5 * (p.ps - z.signum() * pl))
}

/// `(dQL/dz, dQL/dPL)` of [`load_flow`].
pub fn load_flow_partials(z: f64, pl: f64, p: &PlantParameters) -> (f64, f64) {
    let k = p.valve_gain();
    let s = if z == 0.0 { 1.0 } else { z.signum() };
    let r = sqrt_drop(0.5 * (p.ps - s * pl));
    let dz = k * r;
    let dpl = if r > 0.0 && z != 0.0 {
        -z.abs() * k / (4.0 * r)
    } else {
        0.0
    };
    (dz, dpl)
}

/// Chamber pressures implied by a load pressure in the aggregated circuit.
#[inline]
pub fn chamber_pressures(pl: f64, p: &PlantParameters) -> (f64, f64) {
    (0.5 * (p.ps + pl), 0.5 * (p.ps - pl))
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
    fn spool_rest_and_tracking() {
        let p = p();
        assert_eq!(spool_derivative(SpoolState::default(), 0.0, &p), (0.0, 0.0));
        for u in [-2e-3, 1e-4, 7e-3] {
            let s = SpoolState { nu: u, nu_dot: 0.0 };
            let (a, b) = spool_derivative(s, u, &p);
            assert_eq!(a, 0.0);
            assert!(b.abs() < 1e-9, "{b}");
        }
        let (a, b) = spool_derivative(SpoolState::default(), 1e-3, &p);
        assert_eq!(a, 0.0);
        assert_relative_eq!(b, 1440.0, max_relative = 1e-12);
    }

    #[test]
    fn spool_step_settles_with_unity_gain() {
        let p = p();
        let u0 = 8e-4;
        let dt = 1e-6;
        let t_settle = 5.0 / (p.xi * p.omega0);
        let n = (t_settle / dt).ceil() as usize;
        let mut s = SpoolState::default();
        let mut worst_after = 0.0f64;
        for i in 0..(2 * n) {
            let (d0, d1) = spool_derivative(s, u0, &p);
            s.nu += dt * d0;
            s.nu_dot += dt * d1;
            if i >= n {
                worst_after = worst_after.max((s.nu - u0).abs() / u0);
            }
        }
        assert!(worst_after < 0.01, "{worst_after}");
    }

    #[test]
    fn orifice_state_branches() {
        let p = p();
        assert_eq!(orifice_state(2e-4, &p), 0.0);
        assert_relative_eq!(orifice_state(5e-4, &p), 2e-4, max_relative = 1e-12);
        assert_eq!(orifice_state(1.5e-3, &p), 1e-3);
        assert_eq!(orifice_state(-1.5e-3, &p), -1e-3);
        assert_eq!(orifice_state(0.0, &p), 0.0);
        // at the saturation breakpoint both branches agree
        assert_relative_eq!(orifice_state(1.3e-3 - 1e-15, &p), 1e-3, max_relative = 1e-9);
    }

    #[test]
    fn orifice_state_dense_grid_properties() {
        let p = p();
        let n = 20_001;
        let span = 3e-3;
        let h = 2.0 * span / (n - 1) as f64;
        let mut prev = orifice_state(-span, &p);
        for i in 1..n {
            let nu = -span + i as f64 * h;
            let z = orifice_state(nu, &p);
            assert!(z.abs() <= p.alpha);
            assert_eq!(orifice_state(-nu, &p), -z);
            let slope = (z - prev) / h;
            // slope in {0, 1} except in the one cell straddling a breakpoint
            assert!(
                (-1e-9..=1.0 + 1e-9).contains(&slope),
                "slope {slope} at {nu}"
            );
            assert!((z - prev).abs() <= h * (1.0 + 1e-9));
            prev = z;
        }
    }

    #[test]
    fn saturation_only_map_skips_dead_zone() {
        let p = p();
        assert_eq!(InputMap::SaturationOnly.apply(2e-4, &p), 2e-4);
        assert_eq!(InputMap::SaturationOnly.apply(-5e-3, &p), -1e-3);
        assert_eq!(InputMap::DeadZoneSaturation.apply(2e-4, &p), 0.0);
    }

    #[test]
    fn port_flows_closed_orifice() {
        let p = p();
        assert_eq!(port_flows(0.0, 3e6, 8e6, &p), (0.0, 0.0));
    }

    #[test]
    fn port_flows_reference_points() {
        let p = p();
        let (qa, qb) = port_flows(5e-4, 4e6, 0.0, &p);
        assert_relative_eq!(qa, 7.7232e-4, max_relative = 1e-4);
        assert_eq!(qb, 0.0);
        let (qa, qb) = port_flows(-5e-4, 4e6, 4e6, &p);
        assert_relative_eq!(qa, -6.3059e-4, max_relative = 1e-4);
        assert_relative_eq!(qb, 7.7232e-4, max_relative = 1e-4);
    }

    #[test]
    fn port_flows_negative_radicand_stalls() {
        let p = p();
        // PA above supply while filling: no flow instead of NaN
        let (qa, _) = port_flows(5e-4, 1.2e7, 1e6, &p);
        assert_eq!(qa, 0.0);
        let (_, qb) = port_flows(5e-4, 1e6, -1e5, &p);
        assert_eq!(qb, 0.0);
    }

    #[test]
    fn load_flow_reference_points() {
        let p = p();
        assert_relative_eq!(load_flow(1e-3, 0.0, &p), 1.41006e-3, max_relative = 1e-5);
        assert_eq!(load_flow(1e-3, p.ps, &p), 0.0);
        assert_relative_eq!(load_flow(-1e-3, 0.0, &p), -1.41006e-3, max_relative = 1e-5);
        assert_eq!(load_flow(0.0, 3e6, &p), 0.0);
    }

    #[test]
    fn load_flow_decreases_with_load_pressure() {
        let p = p();
        for i in 1..=10 {
            let z = p.alpha * i as f64 / 10.0;
            let h = 1e3;
            let mut pl = -p.ps + 2.0 * h;
            while pl < p.ps - 2.0 * h {
                let d = (load_flow(z, pl + h, &p) - load_flow(z, pl - h, &p)) / (2.0 * h);
                assert!(d <= 0.0, "z={z} pl={pl} d={d}");
                pl += 2.5e5;
            }
        }
    }

    #[test]
    fn chamber_pressures_reference_points() {
        let p = p();
        assert_eq!(chamber_pressures(0.0, &p), (5e6, 5e6));
        assert_eq!(chamber_pressures(p.ps, &p), (1e7, 0.0));
        assert_eq!(chamber_pressures(-4e6, &p), (3e6, 7e6));
    }

    #[test]
    fn load_flow_partials_match_differences() {
        let p = p();
        let (z, pl) = (6e-4, 2.5e6);
        let (dz, dpl) = load_flow_partials(z, pl, &p);
        let hz = 1e-9;
        let hp = 10.0;
        let fz = (load_flow(z + hz, pl, &p) - load_flow(z - hz, pl, &p)) / (2.0 * hz);
        let fp = (load_flow(z, pl + hp, &p) - load_flow(z, pl - hp, &p)) / (2.0 * hp);
        assert_relative_eq!(dz, fz, max_relative = 1e-7);
        assert_relative_eq!(dpl, fp, max_relative = 1e-7);
        let (dz, dpl) = load_flow_partials(-z, -pl, &p);
        assert_relative_eq!(dz, fz, max_relative = 1e-7);
        assert_relative_eq!(dpl, fp, max_relative = 1e-7);
    }

    proptest! {
        #[test]
        fn load_flow_is_odd(z in -1e-3f64..1e-3, pl in -1e7f64..1e7) {
            let p = p();
            prop_assert_eq!(load_flow(-z, -pl, &p), -load_flow(z, pl, &p));
        }

        #[test]
        fn chamber_pressures_reconstruct_load(pl in -1e7f64..1e7) {
            let p = p();
            let (pa, pb) = chamber_pressures(pl, &p);
            prop_assert!(((pa - pb) - pl).abs() <= 1e-9 * p.ps);
            prop_assert!(((pa + pb) - p.ps).abs() <= 1e-9 * p.ps);
        }

        #[test]
        fn orifice_state_bounded_and_odd(nu in -1.0f64..1.0) {
            let p = p();
            let z = orifice_state(nu, &p);
            prop_assert!(z.abs() <= p.alpha);
            prop_assert_eq!(orifice_state(-nu, &p), -z);
        }
    }
}
