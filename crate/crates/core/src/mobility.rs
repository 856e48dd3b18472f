//! Vehicle traces and UAV kinematics.
//!
//! The highway is a 1-D axis along `x`; `y` carries the lane offset. Traces come
//! either from a CSV file (`slot,vehicle_id,x_m,y_m,speed_mps`) or from the
//! seeded platoon generator.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

pub const TRACE_HEADER: [&str; 5] = ["slot", "vehicle_id", "x_m", "y_m", "speed_mps"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub position: Point2,
    /// m/s, never negative.
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub horizontal_position: Point2,
    /// Flight altitude in meters.
    pub altitude: f64,
    /// `(v_x, v_y, v_z)` in m/s.
    pub velocity: [f64; 3],
}

/// Altitude box and per-slot adjustment limit for the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeLimits {
    pub min: f64,
    pub max: f64,
    pub max_step: f64,
}

impl Default for AltitudeLimits {
    fn default() -> Self {
        Self { min: 50.0, max: 200.0, max_step: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    slots: Vec<Vec<VehicleState>>,
    slot_duration: f64,
}

impl MobilityTrace {
    /// Builds a trace, checking that every slot carries the same vehicle ids.
    /// Vehicles within a slot are stored sorted by id.
    pub fn new(mut slots: Vec<Vec<VehicleState>>, slot_duration: f64) -> Result<Self> {
        if !(slot_duration > 0.0 && slot_duration.is_finite()) {
            return Err(invalid(format!("slot duration must be positive, got {slot_duration}")));
        }
        if slots.is_empty() {
            return Err(Error::InconsistentTrace("trace has no slots".into()));
        }
        for slot in &mut slots {
            slot.sort_by_key(|v| v.id);
        }
        let reference: Vec<u32> = slots[0].iter().map(|v| v.id).collect();
        if reference.is_empty() {
            return Err(Error::InconsistentTrace("slot 0 has no vehicles".into()));
        }
        if reference.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InconsistentTrace("duplicate vehicle id in slot 0".into()));
        }
        for (t, slot) in slots.iter().enumerate() {
            let ids: Vec<u32> = slot.iter().map(|v| v.id).collect();
            if ids != reference {
                let have: BTreeSet<u32> = ids.iter().copied().collect();
                let want: BTreeSet<u32> = reference.iter().copied().collect();
                let missing: Vec<_> = want.difference(&have).collect();
                let extra: Vec<_> = have.difference(&want).collect();
                return Err(Error::InconsistentTrace(format!(
                    "slot {t}: vehicle ids differ from slot 0 (missing {missing:?}, unexpected {extra:?})"
                )));
            }
            for v in slot {
                if !(v.position.x.is_finite() && v.position.y.is_finite()) {
                    return Err(Error::InconsistentTrace(format!(
                        "slot {t}: vehicle {} has a non-finite position",
                        v.id
                    )));
                }
                if !(v.speed >= 0.0 && v.speed.is_finite()) {
                    return Err(Error::InconsistentTrace(format!(
                        "slot {t}: vehicle {} has invalid speed {}",
                        v.id, v.speed
                    )));
                }
            }
        }
        Ok(Self { slots, slot_duration })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }

    pub fn slot(&self, t: usize) -> &[VehicleState] {
        &self.slots[t]
    }

    /// Slot `t`, or the last slot when `t` runs past the end of the trace.
    pub fn slot_clamped(&self, t: usize) -> &[VehicleState] {
        &self.slots[t.min(self.slots.len() - 1)]
    }

    pub fn ids(&self) -> Vec<u32> {
        self.slots[0].iter().map(|v| v.id).collect()
    }

    pub fn vehicle(&self, t: usize, id: u32) -> Option<&VehicleState> {
        let slot = self.slot_clamped(t);
        slot.binary_search_by_key(&id, |v| v.id).ok().map(|i| &slot[i])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let io = |e: csv::Error| Error::InvalidState(format!("trace write failed: {e}"));
        w.write_record(TRACE_HEADER).map_err(io)?;
        for (t, slot) in self.slots.iter().enumerate() {
            for v in slot {
                w.write_record(&[
                    t.to_string(),
                    v.id.to_string(),
                    v.position.x.to_string(),
                    v.position.y.to_string(),
                    v.speed.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidState(format!("trace write failed: {e}")))?;
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    slot: usize,
    vehicle_id: u32,
    x_m: f64,
    y_m: f64,
    speed_mps: f64,
}

pub fn load_trace(path: impl AsRef<Path>, slot_duration: f64) -> Result<MobilityTrace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_trace(file, slot_duration)
}

/// Parses the trace CSV. Slot indices must start at 0, be contiguous and appear
/// in ascending order.
pub fn parse_trace<R: Read>(reader: R, slot_duration: f64) -> Result<MobilityTrace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedTrace { line: 1, reason: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::MalformedTrace { line: 1, reason: "empty file".into() });
    }
    if headers.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::MalformedTrace {
            line: 1,
            reason: format!("expected header `{}`, found `{}`", TRACE_HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut slots: Vec<Vec<VehicleState>> = Vec::new();
    for record in rdr.deserialize::<TraceRow>() {
        let row = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::MalformedTrace { line, reason: e.to_string() }
        })?;
        let current = slots.len();
        if row.slot + 1 == current {
            // same slot as the previous row
        } else if row.slot == current {
            slots.push(Vec::new());
        } else if row.slot < current {
            return Err(Error::InconsistentTrace(format!("slot {} appears after slot {}", row.slot, current - 1)));
        } else {
            return Err(Error::InconsistentTrace(format!("missing slot {current} (jumped to {})", row.slot)));
        }
        slots[row.slot].push(VehicleState {
            id: row.vehicle_id,
            position: Point2::new(row.x_m, row.y_m),
            speed: row.speed_mps,
        });
    }
    if slots.is_empty() {
        return Err(Error::MalformedTrace { line: 2, reason: "trace has a header but no rows".into() });
    }
    MobilityTrace::new(slots, slot_duration)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatoonConfig {
    pub n_vehicles: usize,
    /// m/s; 50 km/h by default.
    pub mean_speed: f64,
    /// Nominal bumper-to-bumper spacing along the highway axis, meters.
    pub spacing: f64,
    pub slots: usize,
    /// Bound on each vehicle's longitudinal deviation from its platoon slot, meters.
    pub jitter: f64,
    /// Lateral distance between the two lanes used by the platoon, meters.
    pub lane_offset: f64,
    pub slot_duration: f64,
}

impl Default for PlatoonConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 30,
            mean_speed: 50.0 / 3.6,
            spacing: 25.0,
            slots: 101,
            jitter: 1.0,
            lane_offset: 3.5,
            slot_duration: 1.0,
        }
    }
}

/// Synthetic platoon: vehicle `i` starts at `-i * spacing`, alternates lanes,
/// and advances at `mean_speed` with a bounded seeded longitudinal jitter, so
/// every gap between consecutive vehicles stays within `spacing ± 2 * jitter`.
pub fn generate_platoon(cfg: &PlatoonConfig, seed: u64) -> Result<MobilityTrace> {
    if cfg.n_vehicles < 2 {
        return Err(invalid(format!("platoon needs at least 2 vehicles, got {}", cfg.n_vehicles)));
    }
    if !(cfg.spacing > 0.0) {
        return Err(invalid(format!("spacing must be positive, got {}", cfg.spacing)));
    }
    if !(cfg.mean_speed >= 0.0) {
        return Err(invalid(format!("mean speed must be non-negative, got {}", cfg.mean_speed)));
    }
    if !(cfg.jitter >= 0.0) || cfg.jitter >= cfg.spacing / 2.0 {
        return Err(invalid(format!("jitter must lie in [0, spacing/2), got {}", cfg.jitter)));
    }
    if cfg.slots == 0 {
        return Err(invalid("platoon trace needs at least one slot"));
    }

    let dt = cfg.slot_duration;
    let mut rng = rng::stream(seed, rng::TRACE_STREAM);
    let mut offsets = vec![0.0f64; cfg.n_vehicles];
    let mut slots = Vec::with_capacity(cfg.slots);
    for t in 0..cfg.slots {
        let mut slot = Vec::with_capacity(cfg.n_vehicles);
        for (i, offset) in offsets.iter_mut().enumerate() {
            let previous = *offset;
            if t > 0 && cfg.jitter > 0.0 {
                let step = rng.random_range(-0.25..=0.25) * cfg.jitter;
                *offset = (previous + step).clamp(-cfg.jitter, cfg.jitter);
            }
            let x0 = -(i as f64) * cfg.spacing;
            let x = x0 + cfg.mean_speed * (t as f64) * dt + *offset;
            let y = if i % 2 == 0 { 0.0 } else { cfg.lane_offset };
            let speed = (cfg.mean_speed + (*offset - previous) / dt).max(0.0);
            slot.push(VehicleState { id: i as u32, position: Point2::new(x, y), speed });
        }
        slots.push(slot);
    }
    MobilityTrace::new(slots, dt)
}

/// Moves the UAV one slot: horizontal advance along the highway axis, altitude
/// adjustment clamped to the altitude box, and `v_z` recorded as the realised
/// altitude change over the slot.
pub fn advance_uav(
    state: &UavState,
    horizontal_speed: f64,
    delta_h: f64,
    dt: f64,
    limits: &AltitudeLimits,
) -> Result<UavState> {
    let mut next = adjust_altitude(state, delta_h, dt, limits)?;
    next.horizontal_position.x += horizontal_speed * dt;
    next.velocity[0] = horizontal_speed;
    next.velocity[1] = 0.0;
    Ok(next)
}

/// Altitude half of [`advance_uav`]: horizontal position is left in place.
pub fn adjust_altitude(state: &UavState, delta_h: f64, dt: f64, limits: &AltitudeLimits) -> Result<UavState> {
    if !delta_h.is_finite() || delta_h.abs() > limits.max_step + 1e-12 {
        return Err(invalid(format!("altitude step {delta_h} exceeds ±{}", limits.max_step)));
    }
    if !(dt > 0.0) {
        return Err(invalid(format!("slot duration must be positive, got {dt}")));
    }
    let altitude = (state.altitude + delta_h).clamp(limits.min, limits.max);
    let mut next = *state;
    next.velocity[2] = (altitude - state.altitude) / dt;
    next.altitude = altitude;
    Ok(next)
}

/// Relative speed used for CSI aging, floored so that platoon traces still age.
pub fn relative_speed(a: &VehicleState, b: &VehicleState, floor: f64) -> f64 {
    (a.speed - b.speed).abs().max(floor)
}
