//! Rotary-wing UAV propulsion power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModelParams {
    /// Blade profile power in hover, W.
    pub p0_hover_blade: f64,
    /// Induced power in hover, W.
    pub p1_hover_induced: f64,
    /// Blade angular velocity, rad/s.
    pub omega: f64,
    pub rotor_radius: f64,
    /// Induced rotor velocity, m/s.
    pub v0_induced: f64,
    pub d0_drag_ratio: f64,
    pub air_density: f64,
    pub rotor_solidity: f64,
    pub rotor_disc_area: f64,
    /// UAV weight, N.
    pub weight: f64,
    /// Lower bound on the horizontal speed inside the induced-power denominator, m/s.
    pub v_h_epsilon: f64,
    /// Count descent as zero vertical power instead of an energy credit.
    pub clamp_descent: bool,
}

impl Default for PowerModelParams {
    fn default() -> Self {
        Self {
            p0_hover_blade: 79.86,
            p1_hover_induced: 88.63,
            omega: 300.0,
            rotor_radius: 0.4,
            v0_induced: 4.03,
            d0_drag_ratio: 0.3,
            air_density: 1.225,
            rotor_solidity: 0.05,
            rotor_disc_area: 0.503,
            weight: 20.0,
            v_h_epsilon: 0.1,
            clamp_descent: false,
        }
    }
}

impl PowerModelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p0_hover_blade", self.p0_hover_blade),
            ("p1_hover_induced", self.p1_hover_induced),
            ("omega", self.omega),
            ("rotor_radius", self.rotor_radius),
            ("v0_induced", self.v0_induced),
            ("d0_drag_ratio", self.d0_drag_ratio),
            ("air_density", self.air_density),
            ("rotor_solidity", self.rotor_solidity),
            ("rotor_disc_area", self.rotor_disc_area),
            ("weight", self.weight),
            ("v_h_epsilon", self.v_h_epsilon),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("energy.{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Propulsion power split into its four physical contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBreakdown {
    pub blade: f64,
    pub induced: f64,
    pub parasite: f64,
    pub vertical: f64,
}

impl PowerBreakdown {
    pub fn total(&self) -> f64 {
        self.blade + self.induced + self.parasite + self.vertical
    }
}

pub fn power_breakdown(velocity: [f64; 3], params: &PowerModelParams) -> PowerBreakdown {
    let [vx, vy, vz] = velocity;
    let vh2 = vx * vx + vy * vy;
    let tip2 = params.omega * params.omega * params.rotor_radius * params.rotor_radius;
    let blade = params.p0_hover_blade * (1.0 + 3.0 * vh2 / tip2);
    let guard = params.v_h_epsilon * params.v_h_epsilon;
    let induced = params.p1_hover_induced * params.v0_induced / vh2.max(guard);
    let parasite = 0.5
        * params.d0_drag_ratio
        * params.air_density
        * params.rotor_solidity
        * params.rotor_disc_area
        * vh2.powf(1.5);
    let vz = if params.clamp_descent { vz.max(0.0) } else { vz };
    PowerBreakdown { blade, induced, parasite, vertical: params.weight * vz }
}

/// Flight power in watts for the UAV velocity `(v_x, v_y, v_z)`.
pub fn propulsion_power(velocity: [f64; 3], params: &PowerModelParams) -> f64 {
    power_breakdown(velocity, params).total()
}
