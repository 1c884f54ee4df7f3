//! Frequency response functions: the shared [`FrfData`] container, the H1
//! estimator from input/output records and frequency-domain smoothing.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::csvfmt;
use crate::sim::{InputSignal, Trajectory};
use crate::Error;

/// Complex response on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrfData {
    pub freqs: Vec<f64>,
    pub response: Vec<Complex64>,
    /// Magnitude-squared coherence per frequency, when estimated.
    pub coherence: Option<Vec<f64>>,
    /// Frequencies dropped by the estimator because the input carried no
    /// usable power there.
    pub rejected: Vec<f64>,
}

impl FrfData {
    pub fn new(freqs: Vec<f64>, response: Vec<Complex64>) -> Self {
        debug_assert_eq!(freqs.len(), response.len());
        Self {
            freqs,
            response,
            coherence: None,
            rejected: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.response
            .iter()
            .map(|h| 20.0 * h.norm().log10())
            .collect()
    }

    /// Phase in degrees, unwrapped along the frequency grid.
    pub fn phase_deg(&self) -> Vec<f64> {
        unwrap_deg(self.response.iter().map(|h| h.arg().to_degrees()))
    }

    /// Writes `f_hz, mag_db, phase_deg` and, if present, `coherence`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mag = self.magnitude_db();
        let phase = self.phase_deg();
        match &self.coherence {
            Some(coh) => csvfmt::write_table(
                out,
                &["f_hz", "mag_db", "phase_deg", "coherence"],
                (0..self.len()).map(|i| [self.freqs[i], mag[i], phase[i], coh[i]]),
            ),
            None => csvfmt::write_table(
                out,
                &["f_hz", "mag_db", "phase_deg"],
                (0..self.len()).map(|i| [self.freqs[i], mag[i], phase[i]]),
            ),
        }
    }

    /// Indices of the bins with `lo <= f <= hi`.
    fn band(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.freqs[i] >= lo && self.freqs[i] <= hi)
    }

    /// Frequency and magnitude (dB) of the largest magnitude in `[lo, hi]`.
    pub fn peak_in_band(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let mag = self.magnitude_db();
        self.band(lo, hi)
            .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
            .map(|i| (self.freqs[i], mag[i]))
    }

    /// Mean magnitude in dB over `[lo, hi]`.
    pub fn mean_db_in_band(&self, lo: f64, hi: f64) -> Option<f64> {
        let mag = self.magnitude_db();
        let v: Vec<f64> = self.band(lo, hi).map(|i| mag[i]).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Least-squares slope of magnitude (dB) against log10 frequency over
    /// `[lo, hi]`, in dB per decade.
    pub fn slope_db_per_decade(&self, lo: f64, hi: f64) -> Option<f64> {
        let mag = self.magnitude_db();
        let pts: Vec<(f64, f64)> = self
            .band(lo, hi)
            .map(|i| (self.freqs[i].log10(), mag[i]))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// Removes 360 degree jumps between consecutive samples.
pub fn unwrap_deg(phase: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for ph in phase {
        if let Some(last) = prev {
            let mut d = ph - last;
            while d > 180.0 {
                d -= 360.0;
                offset -= 360.0;
            }
            while d < -180.0 {
                d += 360.0;
                offset += 360.0;
            }
        }
        prev = Some(ph);
        out.push(ph + offset);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            // periodic Hann, the usual choice for spectral averaging
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Config {
    /// Samples per segment.
    pub segment_length: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
    /// Bins whose input auto-spectrum falls below this fraction of its
    /// maximum are rejected.
    pub relative_floor: f64,
}

impl Default for H1Config {
    fn default() -> Self {
        Self {
            segment_length: 1 << 14,
            overlap: 0.5,
            window: Window::Hann,
            relative_floor: 1e-10,
        }
    }
}

/// H1 estimate `S_uy / S_uu` from Welch-averaged cross and auto spectra of
/// the input `u` and output `y`, sampled every `dt` seconds. Each segment
/// has its mean removed before windowing. The DC bin is never returned.
pub fn h1_estimate(u: &[f64], y: &[f64], dt: f64, cfg: &H1Config) -> Result<FrfData, Error> {
    let n = cfg.segment_length;
    if u.len() != y.len() {
        return Err(Error::Domain(format!(
            "input and output lengths differ ({} vs {})",
            u.len(),
            y.len()
        )));
    }
    if n < 4 || u.len() < 2 * n {
        return Err(Error::Domain(format!(
            "need at least two segments of {n} samples (>= 4), got {} samples",
            u.len()
        )));
    }
    if !(0.0..1.0).contains(&cfg.overlap) || !(dt > 0.0) {
        return Err(Error::Domain("overlap must be in [0, 1) and dt > 0".into()));
    }
    let hop = (((1.0 - cfg.overlap) * n as f64).round() as usize).max(1);
    let win = cfg.window.coefficients(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut suu = vec![0.0; bins];
    let mut syy = vec![0.0; bins];
    let mut suy = vec![Complex64::new(0.0, 0.0); bins];
    let mut bu = vec![Complex64::new(0.0, 0.0); n];
    let mut by = vec![Complex64::new(0.0, 0.0); n];

    let load = |buf: &mut [Complex64], seg: &[f64]| {
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
    };

    let mut start = 0;
    while start + n <= u.len() {
        load(&mut bu, &u[start..start + n]);
        load(&mut by, &y[start..start + n]);
        fft.process(&mut bu);
        fft.process(&mut by);
        for k in 0..bins {
            suu[k] += bu[k].norm_sqr();
            syy[k] += by[k].norm_sqr();
            suy[k] += bu[k].conj() * by[k];
        }
        start += hop;
    }

    let max_uu = suu[1..].iter().cloned().fold(0.0, f64::max);
    let floor = cfg.relative_floor * max_uu;
    let df = 1.0 / (n as f64 * dt);
    let mut out = FrfData {
        freqs: Vec::with_capacity(bins),
        response: Vec::with_capacity(bins),
        coherence: Some(Vec::with_capacity(bins)),
        rejected: Vec::new(),
    };
    let coh = out.coherence.as_mut().unwrap();
    for k in 1..bins {
        let f = k as f64 * df;
        if !(suu[k] > floor) || !(suu[k] > 0.0) {
            out.rejected.push(f);
            continue;
        }
        let h = suy[k] / suu[k];
        if !h.re.is_finite() || !h.im.is_finite() {
            out.rejected.push(f);
            continue;
        }
        out.freqs.push(f);
        out.response.push(h);
        coh.push(if syy[k] > 0.0 {
            (suy[k].norm_sqr() / (suu[k] * syy[k])).min(1.0)
        } else {
            0.0
        });
    }
    Ok(out)
}

/// Centred moving average of the complex response (and coherence) over
/// `2 * half_width + 1` neighbouring bins, truncated at the ends of the grid.
pub fn smooth(frf: &FrfData, half_width: usize) -> FrfData {
    if half_width == 0 {
        return frf.clone();
    }
    let n = frf.len();
    let window = |i: usize| i.saturating_sub(half_width)..(i + half_width + 1).min(n);
    let response = (0..n)
        .map(|i| {
            let r = window(i);
            let len = r.len() as f64;
            frf.response[r].iter().sum::<Complex64>() / len
        })
        .collect();
    let coherence = frf.coherence.as_ref().map(|c| {
        (0..n)
            .map(|i| {
                let r = window(i);
                let len = r.len() as f64;
                c[r].iter().sum::<f64>() / len
            })
            .collect()
    });
    FrfData {
        freqs: frf.freqs.clone(),
        response,
        coherence,
        rejected: frf.rejected.clone(),
    }
}

/// H1 estimate from `signal` to the trajectory column `output`, followed by
/// [`smooth`]. The input record is regenerated as `signal(k dt)`, so a
/// trajectory read back from CSV gives the same result as the one in memory.
pub fn trajectory_frf(
    tr: &Trajectory,
    signal: &InputSignal,
    output: &str,
    cfg: &H1Config,
    half_width: usize,
) -> Result<FrfData, Error> {
    let y = tr
        .column(output)
        .ok_or_else(|| Error::Domain(format!("trajectory has no column `{output}`")))?;
    let u: Vec<f64> = (0..y.len())
        .map(|k| signal.sample(k as f64 * tr.dt))
        .collect();
    Ok(smooth(&h1_estimate(&u, y, tr.dt, cfg)?, half_width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn cfg(n: usize) -> H1Config {
        H1Config {
            segment_length: n,
            ..Default::default()
        }
    }

    #[test]
    fn identity_system() {
        let u = noise(8192, 1);
        let frf = h1_estimate(&u, &u, 1e-3, &cfg(512)).unwrap();
        assert_eq!(frf.len(), 256);
        assert!(frf.rejected.is_empty());
        for h in &frf.response {
            assert!((h - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        for c in frf.coherence.as_ref().unwrap() {
            assert_relative_eq!(*c, 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(frf.freqs[0], 1.0 / (512.0 * 1e-3), max_relative = 1e-12);
    }

    #[test]
    fn static_gain() {
        let u = noise(4096, 2);
        let y: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        for window in [Window::Hann, Window::Rectangular] {
            let frf = h1_estimate(&u, &y, 1.0, &H1Config { window, ..cfg(256) }).unwrap();
            for h in &frf.response {
                assert!((h - Complex64::new(2.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pure_delay_phase() {
        // y[k] = u[k - 1] gives a phase of -360 f dt degrees
        let u = noise(16384, 3);
        let mut y = vec![0.0; u.len()];
        y[1..].copy_from_slice(&u[..u.len() - 1]);
        let dt = 1e-3;
        let frf = h1_estimate(&u, &y, dt, &cfg(1024)).unwrap();
        let ph = frf.phase_deg();
        for (f, p) in frf.freqs.iter().zip(ph).filter(|(f, _)| **f < 200.0) {
            assert!((p + 360.0 * f * dt).abs() < 1.0, "f={f} p={p}");
        }
    }

    #[test]
    fn uncorrelated_output_has_low_coherence() {
        let u = noise(65536, 4);
        let y = noise(65536, 5);
        let frf = h1_estimate(&u, &y, 1.0, &cfg(256)).unwrap();
        let coh = frf.coherence.unwrap();
        let mean = coh.iter().sum::<f64>() / coh.len() as f64;
        assert!(mean < 0.05, "{mean}");
    }

    #[test]
    fn silent_bins_are_rejected() {
        // a pure tone leaves almost every other bin without input power
        let n = 256;
        let u: Vec<f64> = (0..8 * n)
            .map(|k| (2.0 * PI * 16.0 * k as f64 / n as f64).sin())
            .collect();
        let frf = h1_estimate(
            &u,
            &u,
            1.0,
            &H1Config {
                window: Window::Rectangular,
                ..cfg(n)
            },
        )
        .unwrap();
        assert_eq!(frf.freqs.len(), 1);
        assert_relative_eq!(frf.freqs[0], 16.0 / n as f64, max_relative = 1e-12);
        assert_eq!(frf.rejected.len(), n / 2 - 1);
    }

    #[test]
    fn bad_inputs() {
        let u = noise(1000, 6);
        assert!(h1_estimate(&u, &u[..999], 1.0, &cfg(64)).is_err());
        assert!(h1_estimate(&u, &u, 1.0, &cfg(600)).is_err());
        assert!(h1_estimate(
            &u,
            &u,
            1.0,
            &H1Config {
                overlap: 1.0,
                ..cfg(64)
            }
        )
        .is_err());
        assert!(h1_estimate(&u, &u, 0.0, &cfg(64)).is_err());
    }

    fn flat(n: usize, value: Complex64) -> FrfData {
        FrfData::new((1..=n).map(|i| i as f64).collect(), vec![value; n])
    }

    #[test]
    fn smoothing_identity_and_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frf = FrfData::new(
            (1..=50).map(|i| i as f64).collect(),
            (0..50)
                .map(|_| Complex64::new(rng.random(), rng.random()))
                .collect(),
        );
        assert_eq!(smooth(&frf, 0), frf);
        let c = flat(40, Complex64::new(3.0, -1.0));
        for hw in [1, 2, 7, 100] {
            let s = smooth(&c, hw);
            for h in &s.response {
                assert!((h - Complex64::new(3.0, -1.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothing_reduces_noise_variance() {
        // Oracle: averaging 2w+1 independent samples divides the variance by
        // 2w+1. Checked on interior bins of a long noisy flat response.
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frf = FrfData::new(
            (1..=n).map(|i| i as f64).collect(),
            (0..n)
                .map(|_| {
                    Complex64::new(
                        1.0 + rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    )
                })
                .collect(),
        );
        let var = |r: &[Complex64]| {
            let m = r.iter().sum::<Complex64>() / r.len() as f64;
            r.iter().map(|h| (h - m).norm_sqr()).sum::<f64>() / r.len() as f64
        };
        let v0 = var(&frf.response);
        for hw in [1usize, 2, 5] {
            let s = smooth(&frf, hw);
            let v = var(&s.response[hw..n - hw]);
            let ratio = v / v0;
            let expect = 1.0 / (2 * hw + 1) as f64;
            assert!((ratio / expect - 1.0).abs() < 0.03, "hw={hw} ratio={ratio}");
        }
    }

    #[test]
    fn band_helpers() {
        // |H| = 1/f: -20 dB/decade, peak at the lowest bin
        let freqs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let resp = freqs.iter().map(|f| Complex64::new(1.0 / f, 0.0)).collect();
        let frf = FrfData::new(freqs, resp);
        assert_relative_eq!(
            frf.slope_db_per_decade(10.0, 1000.0).unwrap(),
            -20.0,
            epsilon = 1e-9
        );
        let (f, m) = frf.peak_in_band(5.0, 50.0).unwrap();
        assert_eq!(f, 5.0);
        assert_relative_eq!(m, -20.0 * 5f64.log10(), epsilon = 1e-12);
        assert!(frf.mean_db_in_band(2000.0, 3000.0).is_none());
        assert!(frf.slope_db_per_decade(10.0, 10.5).is_none());
    }

    #[test]
    fn unwrap_removes_jumps() {
        let p = unwrap_deg([170.0, -170.0, -10.0, 170.0, -175.0]);
        assert_eq!(p, vec![170.0, 190.0, 350.0, 530.0, 545.0]);
    }

    #[test]
    fn csv_columns() {
        let mut frf = flat(3, Complex64::new(0.0, 10.0));
        let mut buf = Vec::new();
        frf.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "f_hz,mag_db,phase_deg\n1,20,90\n2,20,90\n3,20,90\n"
        );
        frf.coherence = Some(vec![1.0, 0.5, 0.25]);
        let mut buf = Vec::new();
        frf.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("f_hz,mag_db,phase_deg,coherence\n1,20,90,1\n"));
    }
}
