//! Per-node energy accounting.
//!
//! A GPS fix costs `E_g = T_g (P_g + P_m)` and every packet sent or received
//! costs `E_r = T_t (P_r + P_m)`. Standby and cluster-management overheads
//! are lumped into a flat miscellaneous term `E_l` booked once per run.

use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    /// Total tracking period, seconds.
    pub total_period: f64,
    /// GPS receiver power, watts.
    pub p_gps: f64,
    /// GPS hot-start activity time, seconds.
    pub t_gps: f64,
    /// MCU power, watts.
    pub p_mcu: f64,
    /// Radio power, watts.
    pub p_radio: f64,
    /// Packet air time, seconds.
    pub t_packet: f64,
    pub packet_size_bits: f64,
    pub bit_rate: f64,
    /// Standby power, watts. Folded into `misc_energy`.
    pub p_standby: f64,
    /// Miscellaneous energy per run, joules.
    pub misc_energy: f64,
    /// Multiplier on `misc_energy` for runs shorter or longer than the
    /// nominal period.
    pub misc_scale: f64,
    pub battery_capacity: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            total_period: 43_200.0,
            p_gps: 0.074,
            t_gps: 5.0,
            p_mcu: 0.0132,
            p_radio: 0.0132,
            t_packet: 0.000_31,
            packet_size_bits: 80.0,
            bit_rate: 256_000.0,
            p_standby: 1.2e-6,
            misc_energy: 54.0,
            misc_scale: 1.0,
            battery_capacity: 3996.0,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let non_negative = [
            self.p_gps,
            self.t_gps,
            self.p_mcu,
            self.p_radio,
            self.t_packet,
            self.p_standby,
            self.misc_energy,
            self.misc_scale,
            self.battery_capacity,
            self.total_period,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err("energy parameters must be finite and non-negative");
        }
        if !(self.packet_size_bits > 0.0 && self.bit_rate > 0.0) {
            return Err("packet size and bit rate must be positive");
        }
        Ok(())
    }

    /// Packet time implied by size over bit rate.
    pub fn computed_packet_time(&self) -> f64 {
        self.packet_size_bits / self.bit_rate
    }

    pub fn misc_total(&self) -> f64 {
        self.misc_energy * self.misc_scale
    }
}

/// Energy of one GPS fix, joules.
pub fn gps_energy(params: &EnergyParams) -> f64 {
    params.t_gps * (params.p_gps + params.p_mcu)
}

/// Energy of one packet transmission or reception, joules.
pub fn radio_energy(params: &EnergyParams) -> f64 {
    params.t_packet * (params.p_radio + params.p_mcu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    GpsFix,
    Transmit,
    Receive,
}

/// Activity counts for one node. Consumed energy is always derived from the
/// counts, so it is an exact integer combination of `E_g` and `E_r`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyLedger {
    pub node_id: usize,
    pub gps_fixes: u64,
    pub tx: u64,
    pub rx: u64,
    /// Set once the flat miscellaneous term has been booked.
    pub finalized: bool,
}

impl EnergyLedger {
    pub fn new(node_id: usize) -> Self {
        Self {
            node_id,
            ..Self::default()
        }
    }

    pub fn charge(&mut self, activity: Activity) {
        match activity {
            Activity::GpsFix => self.gps_fixes += 1,
            Activity::Transmit => self.tx += 1,
            Activity::Receive => self.rx += 1,
        }
    }

    /// Energy spent on GPS and radio so far, excluding the flat term.
    pub fn activity_energy(&self, params: &EnergyParams) -> f64 {
        self.gps_fixes as f64 * gps_energy(params)
            + (self.tx + self.rx) as f64 * radio_energy(params)
    }

    pub fn consumed(&self, params: &EnergyParams) -> f64 {
        let misc = if self.finalized {
            params.misc_total()
        } else {
            0.0
        };
        self.activity_energy(params) + misc
    }

    /// Battery energy still available for activities.
    pub fn remaining(&self, params: &EnergyParams) -> f64 {
        params.battery_capacity - self.consumed(params)
    }

    pub fn finalize(&mut self) {
        self.finalized = true;
    }

    pub fn over_budget(&self, params: &EnergyParams) -> bool {
        self.consumed(params) > params.battery_capacity
    }
}

/// Writes `node_id,gps_fixes,tx,rx,consumed_J`.
pub fn write_energy_report<W: Write>(
    mut out: W,
    ledgers: &[EnergyLedger],
    params: &EnergyParams,
) -> io::Result<()> {
    writeln!(out, "node_id,gps_fixes,tx,rx,consumed_J")?;
    for l in ledgers {
        writeln!(
            out,
            "{},{},{},{},{:.6}",
            l.node_id,
            l.gps_fixes,
            l.tx,
            l.rx,
            l.consumed(params)
        )?;
    }
    Ok(())
}
