use serde::{Deserialize, Serialize};

use crate::clock::{Millis, MS_PER_HOUR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatteryMode {
    Active,
    Sleep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryState {
    /// percent, 0..=100
    pub charge: f64,
    pub mode: BatteryMode,
    /// percent per simulated hour
    pub active_drain: f64,
    /// percent per simulated hour
    pub sleep_drain: f64,
    /// percent per transmitted packet
    pub tx_cost: f64,
}

impl Default for BatteryState {
    fn default() -> Self {
        Self {
            charge: 100.0,
            mode: BatteryMode::Active,
            active_drain: 2.0,
            sleep_drain: 0.5,
            tx_cost: 0.01,
        }
    }
}

impl BatteryState {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=100.0).contains(&self.charge) {
            return Err(format!(
                "charge must be within [0, 100], got {}",
                self.charge
            ));
        }
        if !(self.sleep_drain >= 0.0 && self.sleep_drain < self.active_drain) {
            return Err("sleep_drain must be >= 0 and below active_drain".into());
        }
        if !(self.tx_cost >= 0.0 && self.tx_cost.is_finite()) {
            return Err("tx_cost must be >= 0".into());
        }
        Ok(())
    }

    pub fn drain_per_hour(&self) -> f64 {
        match self.mode {
            BatteryMode::Active => self.active_drain,
            BatteryMode::Sleep => self.sleep_drain,
        }
    }

    pub fn step(&self, elapsed: Millis, packets_sent: u64) -> BatteryState {
        let used = self.drain_per_hour() * elapsed as f64 / MS_PER_HOUR
            + self.tx_cost * packets_sent as f64;
        BatteryState {
            charge: (self.charge - used).clamp(0.0, 100.0),
            ..*self
        }
    }

    pub fn is_dead(&self) -> bool {
        self.charge <= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sleep_linear_drain() {
        let b = BatteryState {
            mode: BatteryMode::Sleep,
            sleep_drain: 0.5,
            ..Default::default()
        };
        let after = b.step(2 * 3_600_000, 0);
        assert!((b.charge - after.charge - 1.0).abs() < 1e-12);
    }

    #[test]
    fn active_plus_packets() {
        let b = BatteryState {
            active_drain: 2.0,
            tx_cost: 0.05,
            ..Default::default()
        };
        let after = b.step(3_600_000, 10);
        assert!((b.charge - after.charge - 2.5).abs() < 1e-12);
    }

    #[test]
    fn clamps_at_zero() {
        let b = BatteryState {
            charge: 0.3,
            active_drain: 1.0,
            ..Default::default()
        };
        let after = b.step(3_600_000, 0);
        assert_eq!(after.charge, 0.0);
        assert!(after.is_dead());
    }

    #[test]
    fn validation() {
        assert!(BatteryState::default().validate().is_ok());
        let bad = BatteryState {
            sleep_drain: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
