//! Air-to-ground and vehicle-to-vehicle channel models.
//!
//! All dB quantities are converted to linear power gains once, in
//! [`assemble_gains`]; SINR and rate computations are linear SI throughout.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::FeasibleAction;
use crate::error::{Error, Result};
use crate::mobility::{relative_speed, Point2, UavState, VehicleState};
use crate::rng::complex_normal;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Hz
    pub carrier_frequency: f64,
    /// Hz
    pub bandwidth_per_channel: f64,
    /// W/Hz, linear
    pub noise_psd: f64,
    /// dB
    pub alpha_los: f64,
    /// dB
    pub alpha_nlos: f64,
    pub env_a: f64,
    pub env_b: f64,
    /// m/s
    pub light_speed: f64,
    /// CSI feedback delay, seconds.
    pub t_delay: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            carrier_frequency: 5.9e9,
            bandwidth_per_channel: 2e6,
            noise_psd: dbm_to_watts(-174.0),
            alpha_los: 1.0,
            alpha_nlos: 20.0,
            env_a: 12.08,
            env_b: 0.11,
            light_speed: SPEED_OF_LIGHT,
            t_delay: 0.010,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("bandwidth_per_channel", self.bandwidth_per_channel),
            ("noise_psd", self.noise_psd),
            ("env_a", self.env_a),
            ("env_b", self.env_b),
            ("light_speed", self.light_speed),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("channel.{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [("alpha_los", self.alpha_los), ("alpha_nlos", self.alpha_nlos), ("t_delay", self.t_delay)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("channel.{name} must be non-negative, got {value}")));
            }
        }
        Ok(())
    }

    /// Thermal noise power over one channel, `N_0 B`, in watts.
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth_per_channel
    }

    /// Argument of the Gauss-Markov correlation `J0(2π f_c s_rel T_delay / c)`.
    pub fn aging_argument(&self, s_rel: f64) -> f64 {
        2.0 * PI * self.carrier_frequency * s_rel * self.t_delay / self.light_speed
    }

    pub fn aging_correlation(&self, s_rel: f64) -> f64 {
        if self.t_delay == 0.0 || s_rel == 0.0 {
            1.0
        } else {
            bessel_j0(self.aging_argument(s_rel))
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Zero-order Bessel function of the first kind.
///
/// Uses Bessel's integral `J0(x) = (1/π) ∫_0^π cos(x sin θ) dθ` evaluated with
/// the trapezoid rule. The integrand is smooth and π-periodic, so the rule
/// converges geometrically; the aliasing error is bounded by `2|J_{2N}(x)|`,
/// which the node count below keeps far under 1e-15. Very large arguments
/// fall back to the Hankel asymptotic expansion.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x == 0.0 {
        return 1.0;
    }
    if x > 2.0e4 {
        return j0_asymptotic(x);
    }
    let nodes = (x / 2.0 + 7.0 * x.cbrt() + 20.0).ceil() as usize;
    let h = PI / nodes as f64;
    let sum: f64 = (0..nodes).map(|j| (x * (j as f64 * h).sin()).cos()).sum();
    sum / nodes as f64
}

fn j0_asymptotic(x: f64) -> f64 {
    // Hankel expansion for order zero: J0 ~ sqrt(2/(πx)) (P cos χ − Q sin χ),
    // χ = x − π/4, with b_k = Π_{j≤k} −(2j−1)²/(8 j x) feeding P (even k) and Q (odd k).
    let mut p = 1.0;
    let mut q = 0.0;
    let mut b = 1.0;
    for k in 1..16u32 {
        let odd = f64::from(2 * k - 1);
        b *= -(odd * odd) / (8.0 * f64::from(k) * x);
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * b;
        } else {
            q += sign * b;
        }
        if b.abs() < 1e-18 {
            break;
        }
    }
    let chi = x - PI / 4.0;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Elevation-angle sigmoid for the probability of a line-of-sight air-ground path.
pub fn los_probability(uav: &UavState, vehicle: &VehicleState, params: &ChannelParams) -> f64 {
    let horizontal = uav.horizontal_position.distance(&vehicle.position);
    los_probability_at(uav.altitude, horizontal, params)
}

/// [`los_probability`] from altitude and horizontal distance. A vehicle
/// directly below the UAV sees a 90 degree elevation.
pub fn los_probability_at(altitude: f64, horizontal: f64, params: &ChannelParams) -> f64 {
    let theta = altitude.atan2(horizontal);
    let degrees = theta.to_degrees();
    1.0 / (1.0 + params.env_a * (-params.env_b * (degrees - params.env_a)).exp())
}

/// Free-space term `20 log10(4π f_c d / c)` in dB.
pub fn free_space_db(distance: f64, params: &ChannelParams) -> f64 {
    20.0 * (4.0 * PI * params.carrier_frequency * distance / params.light_speed).log10()
}

/// LoS-probability-weighted V2U path loss in dB. The weighting is applied to
/// the dB values directly.
pub fn v2u_path_loss(uav: &UavState, vehicle: &VehicleState, params: &ChannelParams) -> Result<f64> {
    let horizontal = uav.horizontal_position.distance(&vehicle.position);
    let distance = uav.altitude.hypot(horizontal);
    let pr_los = los_probability_at(uav.altitude, horizontal, params);
    v2u_path_loss_with(distance, pr_los, params)
}

pub fn v2u_path_loss_with(distance: f64, pr_los: f64, params: &ChannelParams) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidGeometry(format!("UAV link distance must be positive, got {distance}")));
    }
    let fs = free_space_db(distance, params);
    let los = fs + params.alpha_los;
    let nlos = fs + params.alpha_nlos;
    Ok(pr_los * los + (1.0 - pr_los) * nlos)
}

/// Ground vehicle-to-vehicle path loss in dB.
pub fn v2v_path_loss(tx: &VehicleState, rx: &VehicleState) -> Result<f64> {
    v2v_path_loss_at(tx.position.distance(&rx.position))
}

pub fn v2v_path_loss_at(distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::InvalidGeometry(format!("V2V distance must be positive, got {distance}")));
    }
    Ok(44.23 + 16.7 * distance.log10())
}

/// First-order Gauss-Markov aging of a reported fading coefficient over the
/// feedback delay: `g = ρ ĝ + δ`, `δ ~ CN(0, 1 − ρ²)`, `ρ = J0(2π f_c s_rel T_delay / c)`.
pub fn age_fading<R: Rng + ?Sized>(g_hat: Complex64, s_rel: f64, params: &ChannelParams, rng: &mut R) -> Complex64 {
    age_with_correlation(g_hat, params.aging_correlation(s_rel), rng)
}

pub fn age_with_correlation<R: Rng + ?Sized>(g_hat: Complex64, rho: f64, rng: &mut R) -> Complex64 {
    if rho == 1.0 {
        return g_hat;
    }
    g_hat * rho + complex_normal(rng, 1.0 - rho * rho)
}

/// Per-slot link geometry: distances, LoS probabilities and relative speeds
/// for every link family, resolved from vehicle roles.
#[derive(Debug, Clone)]
pub struct LinkGeometry {
    /// V2U transmitter m → UAV path loss, dB.
    pub pl_u_m: Vec<f64>,
    /// V2V transmitter k → UAV path loss, dB.
    pub pl_u_k: Vec<f64>,
    /// V2V pair k path loss, dB.
    pub pl_v_k: Vec<f64>,
    /// V2U transmitter m → V2V receiver k path loss, dB, `[m, k]`.
    pub pl_v_mk: Array2<f64>,
    /// Gauss-Markov correlation of the desired V2V links.
    pub rho_v_k: Vec<f64>,
    /// Gauss-Markov correlation of the interfering V2U→V2V links, `[m, k]`.
    pub rho_v_mk: Array2<f64>,
}

impl LinkGeometry {
    pub fn resolve(
        uav: &UavState,
        v2u_tx: &[&VehicleState],
        v2v: &[(&VehicleState, &VehicleState)],
        params: &ChannelParams,
        s_rel_floor: f64,
    ) -> Result<Self> {
        let m = v2u_tx.len();
        let k = v2v.len();
        let pl_u_m = v2u_tx.iter().map(|v| v2u_path_loss(uav, v, params)).collect::<Result<Vec<_>>>()?;
        let pl_u_k = v2v.iter().map(|(tx, _)| v2u_path_loss(uav, tx, params)).collect::<Result<Vec<_>>>()?;
        let pl_v_k = v2v.iter().map(|(tx, rx)| v2v_path_loss(tx, rx)).collect::<Result<Vec<_>>>()?;
        let rho_v_k = v2v
            .iter()
            .map(|(tx, rx)| params.aging_correlation(relative_speed(tx, rx, s_rel_floor)))
            .collect();
        let mut pl_v_mk = Array2::zeros((m, k));
        let mut rho_v_mk = Array2::zeros((m, k));
        for (mi, tx) in v2u_tx.iter().enumerate() {
            for (ki, (_, rx)) in v2v.iter().enumerate() {
                pl_v_mk[[mi, ki]] = v2v_path_loss(tx, rx)?;
                rho_v_mk[[mi, ki]] = params.aging_correlation(relative_speed(tx, rx, s_rel_floor));
            }
        }
        Ok(Self { pl_u_m, pl_u_k, pl_v_k, pl_v_mk, rho_v_k, rho_v_mk })
    }

    /// Re-evaluates the UAV-facing families for a new UAV position; the
    /// ground families are unchanged.
    pub fn with_uav(
        &self,
        uav: &UavState,
        v2u_tx: &[&VehicleState],
        v2v_tx: &[&VehicleState],
        params: &ChannelParams,
    ) -> Result<Self> {
        let mut next = self.clone();
        next.pl_u_m = v2u_tx.iter().map(|v| v2u_path_loss(uav, v, params)).collect::<Result<Vec<_>>>()?;
        next.pl_u_k = v2v_tx.iter().map(|v| v2u_path_loss(uav, v, params)).collect::<Result<Vec<_>>>()?;
        Ok(next)
    }

    pub fn m_links(&self) -> usize {
        self.pl_u_m.len()
    }

    pub fn k_links(&self) -> usize {
        self.pl_v_k.len()
    }
}

/// Small-scale fading for one slot. UAV-facing coefficients are measured
/// directly; V2V coefficients exist both as reported (`*_hat`) and as aged
/// across the feedback delay.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingState {
    pub g_u_m: Vec<Complex64>,
    pub g_u_k: Vec<Complex64>,
    pub g_v_k_hat: Vec<Complex64>,
    /// `[m, k]`
    pub g_v_mk_hat: Array2<Complex64>,
    pub g_v_k: Vec<Complex64>,
    /// `[m, k]`
    pub g_v_mk: Array2<Complex64>,
}

impl FadingState {
    /// Draws i.i.d. CN(0,1) coefficients and ages the V2V families with the
    /// per-link correlations from `geometry`.
    pub fn draw<R: Rng + ?Sized>(geometry: &LinkGeometry, rng: &mut R) -> Self {
        let m = geometry.m_links();
        let k = geometry.k_links();
        let g_u_m: Vec<_> = (0..m).map(|_| complex_normal(rng, 1.0)).collect();
        let g_u_k: Vec<_> = (0..k).map(|_| complex_normal(rng, 1.0)).collect();
        let g_v_k_hat: Vec<_> = (0..k).map(|_| complex_normal(rng, 1.0)).collect();
        let g_v_mk_hat = Array2::from_shape_simple_fn((m, k), || complex_normal(rng, 1.0));
        let g_v_k = g_v_k_hat
            .iter()
            .zip(&geometry.rho_v_k)
            .map(|(&g, &rho)| age_with_correlation(g, rho, rng))
            .collect();
        let mut g_v_mk = g_v_mk_hat.clone();
        for ((mi, ki), g) in g_v_mk.indexed_iter_mut() {
            *g = age_with_correlation(*g, geometry.rho_v_mk[[mi, ki]], rng);
        }
        Self { g_u_m, g_u_k, g_v_k_hat, g_v_mk_hat, g_v_k, g_v_mk }
    }
}

/// Linear power gains for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkGains {
    pub h_u_m: Vec<f64>,
    pub h_u_k: Vec<f64>,
    pub h_v_k: Vec<f64>,
    /// `[m, k]`
    pub h_v_mk: Array2<f64>,
    pub h_v_k_hat: Vec<f64>,
    /// `[m, k]`
    pub h_v_mk_hat: Array2<f64>,
    /// Linear V2V path losses and correlations, kept for outage sampling.
    pub pl_v_k_linear: Vec<f64>,
    pub pl_v_mk_linear: Array2<f64>,
    pub rho_v_k: Vec<f64>,
    pub rho_v_mk: Array2<f64>,
}

impl LinkGains {
    pub fn m_links(&self) -> usize {
        self.h_u_m.len()
    }

    pub fn k_links(&self) -> usize {
        self.h_u_k.len()
    }
}

fn gain(g: Complex64, pl_db: f64) -> f64 {
    g.norm_sqr() / db_to_linear(pl_db)
}

/// Combines path loss and fading: every gain is `|g|² / PL_linear`.
pub fn assemble_gains(geometry: &LinkGeometry, fading: &FadingState) -> Result<LinkGains> {
    let m = geometry.m_links();
    let k = geometry.k_links();
    if fading.g_u_m.len() != m
        || fading.g_u_k.len() != k
        || fading.g_v_k.len() != k
        || fading.g_v_k_hat.len() != k
        || fading.g_v_mk.dim() != (m, k)
        || fading.g_v_mk_hat.dim() != (m, k)
    {
        return Err(Error::InvalidArgument(format!("fading dimensions do not match M={m}, K={k}")));
    }
    let zip = |g: &[Complex64], pl: &[f64]| g.iter().zip(pl).map(|(&g, &pl)| gain(g, pl)).collect::<Vec<_>>();
    let zip2 = |g: &Array2<Complex64>| {
        Array2::from_shape_fn((m, k), |(mi, ki)| gain(g[[mi, ki]], geometry.pl_v_mk[[mi, ki]]))
    };
    Ok(LinkGains {
        h_u_m: zip(&fading.g_u_m, &geometry.pl_u_m),
        h_u_k: zip(&fading.g_u_k, &geometry.pl_u_k),
        h_v_k: zip(&fading.g_v_k, &geometry.pl_v_k),
        h_v_mk: zip2(&fading.g_v_mk),
        h_v_k_hat: zip(&fading.g_v_k_hat, &geometry.pl_v_k),
        h_v_mk_hat: zip2(&fading.g_v_mk_hat),
        pl_v_k_linear: geometry.pl_v_k.iter().map(|&d| db_to_linear(d)).collect(),
        pl_v_mk_linear: geometry.pl_v_mk.mapv(db_to_linear),
        rho_v_k: geometry.rho_v_k.clone(),
        rho_v_mk: geometry.rho_v_mk.clone(),
    })
}

/// SINR of V2U link `m` under the true gains.
pub fn v2u_sinr(m: usize, gains: &LinkGains, action: &FeasibleAction, params: &ChannelParams) -> f64 {
    let interference: f64 = action
        .sharers_of(m)
        .map(|k| action.p_k[k] * gains.h_u_k[k])
        .sum();
    action.p_m[m] * gains.h_u_m[m] / (interference + params.noise_power())
}

/// SINR of V2V link `k` under the aged gains.
pub fn v2v_sinr(k: usize, gains: &LinkGains, action: &FeasibleAction, params: &ChannelParams) -> f64 {
    v2v_sinr_with(k, &gains.h_v_k, &gains.h_v_mk, action, params)
}

pub fn v2v_sinr_with(
    k: usize,
    h_v_k: &[f64],
    h_v_mk: &Array2<f64>,
    action: &FeasibleAction,
    params: &ChannelParams,
) -> f64 {
    let interference: f64 = action
        .channels_of(k)
        .map(|m| action.p_m[m] * h_v_mk[[m, k]])
        .sum();
    action.p_k[k] * h_v_k[k] / (interference + params.noise_power())
}

/// Shannon rate in bits/s over one channel.
pub fn v2u_rate(sinr: f64, params: &ChannelParams) -> f64 {
    params.bandwidth_per_channel * (1.0 + sinr).log2()
}

/// Centroid of a set of horizontal positions.
pub fn centroid<'a>(points: impl IntoIterator<Item = &'a Point2>) -> Point2 {
    let mut n = 0.0;
    let mut acc = Point2::default();
    for p in points {
        acc.x += p.x;
        acc.y += p.y;
        n += 1.0;
    }
    if n > 0.0 {
        acc.x /= n;
        acc.y /= n;
    }
    acc
}
