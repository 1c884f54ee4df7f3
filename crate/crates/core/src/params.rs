//! Physical parameter set of the valve/cylinder drive and the constants
//! derived from it.
//!
//! All quantities are SI. [`PlantParameters::default`] returns the reference
//! parameter set used throughout the crate (supply pressure 100 bar, 20 kg
//! moving mass, slightly unequal piston areas).

use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use crate::Error;

/// Parameters of the DCV, the hydraulic circuit and the rod mechanics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParameters {
    /// Saturation level of the orifice state, m.
    pub alpha: f64,
    /// Dead-zone size, m.
    pub beta: f64,
    /// Eigenfrequency of the spool position loop, rad/s.
    pub omega0: f64,
    /// Damping ratio of the spool position loop.
    pub xi: f64,
    /// Discharge coefficient.
    pub cd: f64,
    /// Orifice area gradient (width), m.
    pub w: f64,
    /// Oil density, kg/m^3.
    pub rho: f64,
    /// Bulk modulus, Pa.
    pub e: f64,
    /// Supply pressure, Pa.
    pub ps: f64,
    /// Tank pressure, Pa.
    pub pt: f64,
    /// Internal leakage coefficient. Multiplies a pressure difference and
    /// yields a volumetric flow, so it is effectively m^3/(s Pa).
    pub cl: f64,
    /// Effective piston area of chamber A, m^2.
    pub aa: f64,
    /// Effective piston area of chamber B, m^2.
    pub ab: f64,
    /// Chamber A volume at x = 0, m^3.
    pub va0: f64,
    /// Chamber B volume at x = 0, m^3.
    pub vb0: f64,
    /// Moving mass, kg.
    pub m: f64,
    /// Coulomb friction level, N.
    pub fc: f64,
    /// Stiction friction level, N.
    pub fs: f64,
    /// Viscous friction coefficient, kg/s.
    pub sigma: f64,
    /// Stribeck velocity, m/s.
    pub chi: f64,
    /// Stribeck shape exponent.
    pub delta: f64,
    /// Cylinder half-stroke, m.
    pub h_stroke: f64,
    /// Slope of the tanh replacing sign(x_dot) in the friction law, s/m.
    pub tanh_slope: f64,
}

impl Default for PlantParameters {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta: 3e-4,
            omega0: 1200.0,
            xi: 0.7,
            cd: 0.65,
            w: 0.02,
            rho: 850.0,
            e: 1e8,
            ps: 1e7,
            pt: 0.0,
            cl: 0.0,
            aa: 5e-3,
            ab: 4.7e-3,
            va0: 1.2e-3,
            vb0: 1.15e-3,
            m: 20.0,
            fc: 600.0,
            fs: 900.0,
            sigma: 2000.0,
            chi: 0.02,
            delta: 0.8,
            h_stroke: 0.2,
            tanh_slope: 400.0,
        }
    }
}

/// A single violated parameter constraint, e.g. `m > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.constraint)
    }
}

/// Constants computed from a valid parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Valve gain, m^3/s per m of opening per sqrt(Pa).
    pub k: f64,
    /// Average effective piston area, m^2.
    pub abar: f64,
    /// Total actuator volume, m^3.
    pub vt: f64,
    /// Cylinder eigenfrequency, rad/s.
    pub omega_c: f64,
    /// Cylinder damping ratio.
    pub zeta: f64,
}

/// Field names accepted by the config file, in declaration order.
pub const FIELD_NAMES: [&str; 23] = [
    "alpha",
    "beta",
    "omega0",
    "xi",
    "Cd",
    "w",
    "rho",
    "E",
    "PS",
    "PT",
    "CL",
    "AA",
    "AB",
    "VA0",
    "VB0",
    "m",
    "Fc",
    "Fs",
    "sigma",
    "chi",
    "delta",
    "h_stroke",
    "tanh_slope",
];

impl PlantParameters {
    /// Collects every violated invariant. An empty list means the set is
    /// usable by every model in the crate.
    pub fn validate(&self) -> Vec<Violation> {
        let finite = self.values().iter().all(|v| v.is_finite());
        let checks: [(bool, &'static str); 25] = [
            (finite, "all parameters finite"),
            (self.alpha > 0.0, "alpha > 0"),
            (self.beta >= 0.0, "beta >= 0"),
            (self.omega0 > 0.0, "omega0 > 0"),
            (self.xi > 0.0, "xi > 0"),
            (self.cd > 0.0, "Cd > 0"),
            (self.w > 0.0, "w > 0"),
            (self.rho > 0.0, "rho > 0"),
            (self.e > 0.0, "E > 0"),
            (self.ps > self.pt, "PS > PT"),
            (self.pt >= 0.0, "PT >= 0"),
            (self.cl >= 0.0, "CL >= 0"),
            (self.aa >= self.ab, "AA >= AB"),
            (self.ab > 0.0, "AB > 0"),
            (self.va0 > 0.0, "VA0 > 0"),
            (self.vb0 > 0.0, "VB0 > 0"),
            (self.m > 0.0, "m > 0"),
            (self.fs >= self.fc, "Fs >= Fc"),
            (self.fc > 0.0, "Fc > 0"),
            (self.sigma > 0.0, "sigma > 0"),
            (self.chi > 0.0, "chi > 0"),
            (self.delta != 0.0, "delta != 0"),
            (self.h_stroke > 0.0, "h_stroke > 0"),
            (self.tanh_slope > 0.0, "tanh_slope > 0"),
            // Chamber B must keep a positive volume over the whole stroke.
            (
                self.vb0 - self.ab * self.h_stroke > 0.0
                    && self.va0 - self.aa * self.h_stroke > 0.0,
                "VA0 - AA*h_stroke > 0 and VB0 - AB*h_stroke > 0",
            ),
        ];
        checks
            .iter()
            .filter(|(ok, _)| !ok)
            .map(|&(_, constraint)| Violation { constraint })
            .collect()
    }

    /// Like [`validate`](Self::validate) but as a `Result`.
    pub fn validated(self) -> Result<Self, Error> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidParameters(violations))
        }
    }

    pub fn derive(&self) -> DerivedConstants {
        let k = self.valve_gain();
        let abar = self.abar();
        let vt = self.vt();
        let omega_c = 2.0 * abar * (self.e / (vt * self.m)).sqrt();
        let zeta = self.sigma / (4.0 * abar) * (vt / (self.e * self.m)).sqrt();
        DerivedConstants {
            k,
            abar,
            vt,
            omega_c,
            zeta,
        }
    }

    /// K = Cd w sqrt(2 / rho)
    #[inline]
    pub fn valve_gain(&self) -> f64 {
        self.cd * self.w * (2.0 / self.rho).sqrt()
    }

    #[inline]
    pub fn abar(&self) -> f64 {
        0.5 * (self.aa + self.ab)
    }

    #[inline]
    pub fn vt(&self) -> f64 {
        self.va0 + self.vb0
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        let idx = FIELD_NAMES.iter().position(|&k| k == key)?;
        Some(self.values()[idx])
    }

    /// Sets a field by its config-file name. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "alpha" => &mut self.alpha,
            "beta" => &mut self.beta,
            "omega0" => &mut self.omega0,
            "xi" => &mut self.xi,
            "Cd" => &mut self.cd,
            "w" => &mut self.w,
            "rho" => &mut self.rho,
            "E" => &mut self.e,
            "PS" => &mut self.ps,
            "PT" => &mut self.pt,
            "CL" => &mut self.cl,
            "AA" => &mut self.aa,
            "AB" => &mut self.ab,
            "VA0" => &mut self.va0,
            "VB0" => &mut self.vb0,
            "m" => &mut self.m,
            "Fc" => &mut self.fc,
            "Fs" => &mut self.fs,
            "sigma" => &mut self.sigma,
            "chi" => &mut self.chi,
            "delta" => &mut self.delta,
            "h_stroke" => &mut self.h_stroke,
            "tanh_slope" => &mut self.tanh_slope,
            _ => return false,
        };
        *slot = value;
        true
    }

    /// Field values in [`FIELD_NAMES`] order.
    pub fn values(&self) -> [f64; 23] {
        [
            self.alpha,
            self.beta,
            self.omega0,
            self.xi,
            self.cd,
            self.w,
            self.rho,
            self.e,
            self.ps,
            self.pt,
            self.cl,
            self.aa,
            self.ab,
            self.va0,
            self.vb0,
            self.m,
            self.fc,
            self.fs,
            self.sigma,
            self.chi,
            self.delta,
            self.h_stroke,
            self.tanh_slope,
        ]
    }

    /// Stable 64-bit fingerprint of the bit patterns of all fields.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        for v in self.values() {
            v.to_bits().hash(&mut hasher);
        }
        hasher.finish()
    }

    /// Parses the flat `key = value` config format. Keys that are not
    /// mentioned keep their default values.
    pub fn from_config_str(text: &str) -> Result<Self, Error> {
        let mut p = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| Error::Config {
                line: line_no,
                message: format!("`{}` is not a number", value.trim()),
            })?;
            if !p.set(key, value) {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("unknown parameter `{key}`"),
                });
            }
        }
        Ok(p)
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_config_str(&text)
    }

    /// Renders the parameters in the config-file format.
    pub fn to_config_string(&self) -> String {
        FIELD_NAMES
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k} = {v:e}\n"))
            .collect()
    }
}
