//! Sealed-box speaker module from Thiele-Small parameters, via an
//! equivalent acoustic circuit.

pub mod special;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use special::{bessel_j1, struve_h1};

/// Thiele-Small parameters. Masses in grams, volume in liters, N0 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TspSet {
    pub r_evc: f64,
    pub f0: f64,
    pub s_d: f64,
    pub v_as: f64,
    pub c_ms: f64,
    pub m_md: f64,
    pub m_ms: f64,
    pub bl: f64,
    pub q_ms: f64,
    pub q_es: f64,
    pub q_ts: f64,
    pub n0: f64,
    pub spl0: f64,
    pub k_rm: f64,
    pub e_rm: f64,
    pub k_xm: f64,
    pub e_xm: f64,
}

impl Default for TspSet {
    /// A 3-inch full-range driver measured by the delta-mass method.
    fn default() -> Self {
        TspSet {
            r_evc: 6.291,
            f0: 101.221,
            s_d: 0.002827,
            v_as: 1.255,
            c_ms: 0.001106,
            m_md: 2.150,
            m_ms: 2.236,
            bl: 3.265,
            q_ms: 4.531,
            q_es: 0.839,
            q_ts: 0.708,
            n0: 0.150,
            spl0: 83.778,
            k_rm: 0.010251,
            e_rm: 0.503,
            k_xm: 0.040639,
            e_xm: 0.392,
        }
    }
}

impl TspSet {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("R_evc", self.r_evc),
            ("F0", self.f0),
            ("S_d", self.s_d),
            ("V_as", self.v_as),
            ("C_ms", self.c_ms),
            ("M_md", self.m_md),
            ("M_ms", self.m_ms),
            ("BL", self.bl),
            ("Q_ms", self.q_ms),
            ("Q_es", self.q_es),
            ("Q_ts", self.q_ts),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let combined = self.q_ms * self.q_es / (self.q_ms + self.q_es);
        if (combined - self.q_ts).abs() > 0.05 * self.q_ts {
            return Err(Error::invalid(format!(
                "Q_ts {} inconsistent with Q_ms, Q_es (expected ≈ {combined:.4})",
                self.q_ts
            )));
        }
        Ok(())
    }

    /// Mechanical suspension resistance `2π F0 M_ms / Q_ms` in kg/s.
    pub fn r_ms(&self) -> f64 {
        2.0 * PI * self.f0 * self.m_ms * 1e-3 / self.q_ms
    }

    pub fn piston_radius(&self) -> f64 {
        (self.s_d / PI).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Air {
    pub rho0: f64,
    pub c: f64,
}

impl Default for Air {
    fn default() -> Self {
        Air {
            rho0: 1.204,
            c: 343.0,
        }
    }
}

/// Frequency-independent elements of the acoustic circuit (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitElements {
    pub current: f64,
    pub p_ag: f64,
    pub r_avc: f64,
    pub r_as: f64,
    pub c_as: f64,
    pub m_ad: f64,
    /// Infinite for an infinite box.
    pub c_ab: f64,
}

/// `v_box_cc` may be `f64::INFINITY` (infinite baffle).
pub fn circuit_elements(
    tsp: &TspSet,
    v_eg: f64,
    v_box_cc: f64,
    air: &Air,
) -> Result<CircuitElements> {
    tsp.validate()?;
    if !(v_eg > 0.0) || !(v_box_cc > 0.0) {
        return Err(Error::invalid(format!(
            "V_eg and V_box must be positive, got {v_eg} V, {v_box_cc} cc"
        )));
    }
    let sd2 = tsp.s_d * tsp.s_d;
    let current = v_eg / tsp.r_evc;
    let v_box = v_box_cc * 1e-6;
    let k_box = air.rho0 * air.c * air.c * sd2 / v_box;
    Ok(CircuitElements {
        current,
        p_ag: tsp.bl * current / tsp.s_d,
        r_avc: (tsp.bl / tsp.s_d).powi(2) / tsp.r_evc,
        r_as: tsp.r_ms() / sd2,
        c_as: tsp.c_ms * sd2,
        m_ad: tsp.m_md * 1e-3 / sd2,
        c_ab: if k_box == 0.0 {
            f64::INFINITY
        } else {
            sd2 / k_box
        },
    })
}

/// Radiation mass and resistance of a baffled piston of area `s_d`.
pub fn radiation_impedance(omega: f64, s_d: f64, air: &Air) -> Result<(f64, f64)> {
    if !(omega > 0.0) {
        return Err(Error::invalid(format!(
            "angular frequency must be positive, got {omega}"
        )));
    }
    let a = (s_d / PI).sqrt();
    let ka = omega / air.c * a;
    let z0 = air.rho0 * air.c / s_d;
    let x_ar = z0 * struve_h1(2.0 * ka) / ka;
    let r_ar = z0 * (1.0 - bessel_j1(2.0 * ka) / ka);
    Ok((x_ar / omega, r_ar))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub freq_hz: f64,
    /// Diaphragm displacement, m.
    pub excursion: Complex64,
    /// Volume velocity, m³/s.
    pub volume_velocity: Complex64,
    /// On-axis pressure, Pa.
    pub pressure: Complex64,
    pub spl_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeakerSetup {
    pub v_eg: f64,
    pub v_box_cc: f64,
    pub distance_m: f64,
}

impl Default for SpeakerSetup {
    fn default() -> Self {
        SpeakerSetup {
            v_eg: 2.828,
            v_box_cc: 800.0,
            distance_m: 1.0,
        }
    }
}

pub fn response(
    tsp: &TspSet,
    setup: &SpeakerSetup,
    freqs: &[f64],
    air: &Air,
) -> Result<Vec<ResponsePoint>> {
    if !(setup.distance_m > 0.0) {
        return Err(Error::invalid(format!(
            "distance must be positive, got {}",
            setup.distance_m
        )));
    }
    let el = circuit_elements(tsp, setup.v_eg, setup.v_box_cc, air)?;
    let r = setup.distance_m;
    let path = (r * r + tsp.s_d / PI).sqrt() - r;
    freqs
        .iter()
        .map(|&f| {
            if !(f > 0.0) {
                return Err(Error::invalid(format!(
                    "frequency must be positive, got {f}"
                )));
            }
            let omega = 2.0 * PI * f;
            let (m_ar, r_ar) = radiation_impedance(omega, tsp.s_d, air)?;
            let jw = Complex64::new(0.0, omega);
            let compliance = |c: f64| {
                if c.is_infinite() {
                    Complex64::new(0.0, 0.0)
                } else {
                    1.0 / (jw * c)
                }
            };
            let z = Complex64::new(el.r_avc + el.r_as + r_ar, 0.0)
                + jw * (el.m_ad + m_ar)
                + compliance(el.c_as)
                + compliance(el.c_ab);
            let u = el.p_ag / z;
            let x = u / (jw * tsp.s_d);
            let p =
                u * (2.0 * air.rho0 * air.c / tsp.s_d) * (omega / (2.0 * air.c) * path).sin().abs();
            Ok(ResponsePoint {
                freq_hz: f,
                excursion: x,
                volume_velocity: u,
                pressure: p,
                spl_db: 20.0 * (p.norm() / 20e-6).log10(),
            })
        })
        .collect()
}

/// `n` log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Passband level the roll-off is measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloffReference {
    /// Maximum SPL over the table.
    #[default]
    Peak,
    /// SPL interpolated at this frequency.
    Frequency(f64),
}

fn interp_log(freqs: &[f64], vals: &[f64], f: f64) -> Option<f64> {
    let i = freqs.iter().position(|&x| x >= f)?;
    if freqs[i] == f || i == 0 {
        return (freqs[i] == f).then_some(vals[i]);
    }
    let t = (f.ln() - freqs[i - 1].ln()) / (freqs[i].ln() - freqs[i - 1].ln());
    Some(vals[i - 1] + t * (vals[i] - vals[i - 1]))
}

/// Lowest frequency where the level first climbs to `reference − drop_db`,
/// interpolated linearly in log frequency. `freqs` must be increasing.
pub fn find_rolloff(
    freqs: &[f64],
    spl_db: &[f64],
    reference: RolloffReference,
    drop_db: f64,
) -> Result<f64> {
    if freqs.len() != spl_db.len() || freqs.len() < 2 {
        return Err(Error::shape(
            "need at least two matching frequency/level points",
        ));
    }
    let ref_level = match reference {
        RolloffReference::Peak => spl_db.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        RolloffReference::Frequency(f) => interp_log(freqs, spl_db, f)
            .ok_or_else(|| Error::invalid(format!("reference {f} Hz outside the table")))?,
    };
    let target = ref_level - drop_db;
    match spl_db.iter().position(|&v| v >= target) {
        Some(0) | None => Err(Error::NoCrossing(format!(
            "level never rises through {target:.2} dB within the table"
        ))),
        Some(i) => {
            let (l0, l1) = (spl_db[i - 1], spl_db[i]);
            let t = (target - l0) / (l1 - l0);
            Ok((freqs[i - 1].ln() + t * (freqs[i].ln() - freqs[i - 1].ln())).exp())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseSummary {
    pub rolloff_hz: f64,
    pub peak_excursion_hz: f64,
    pub peak_excursion_mm: f64,
    pub peak_volume_velocity_hz: f64,
    pub peak_volume_velocity: f64,
    pub peak_spl_db: f64,
}

pub fn summarize(
    table: &[ResponsePoint],
    reference: RolloffReference,
    drop_db: f64,
) -> Result<ResponseSummary> {
    let freqs: Vec<f64> = table.iter().map(|p| p.freq_hz).collect();
    let spl: Vec<f64> = table.iter().map(|p| p.spl_db).collect();
    let argmax = |f: &dyn Fn(&ResponsePoint) -> f64| {
        table
            .iter()
            .max_by(|a, b| f(a).total_cmp(&f(b)))
            .map(|p| (p.freq_hz, f(p)))
            .unwrap_or((f64::NAN, f64::NAN))
    };
    let (xf, xm) = argmax(&|p| p.excursion.norm());
    let (uf, um) = argmax(&|p| p.volume_velocity.norm());
    Ok(ResponseSummary {
        rolloff_hz: find_rolloff(&freqs, &spl, reference, drop_db)?,
        peak_excursion_hz: xf,
        peak_excursion_mm: xm * 1e3,
        peak_volume_velocity_hz: uf,
        peak_volume_velocity: um,
        peak_spl_db: argmax(&|p| p.spl_db).1,
    })
}
