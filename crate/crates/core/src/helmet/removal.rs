use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WornTransition {
    Removed,
    Rewear,
}

/// Debounced limit-switch tracker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovalDetector {
    worn: bool,
    run: u32,
    debounce: u32,
}

impl RemovalDetector {
    pub fn new(worn: bool, debounce: u32) -> Result<Self, String> {
        if debounce == 0 {
            return Err("removal debounce must be >= 1".into());
        }
        Ok(Self {
            worn,
            run: 0,
            debounce,
        })
    }

    pub fn worn(&self) -> bool {
        self.worn
    }

    /// `closed` is the raw switch reading: closed means on the head.
    pub fn update(&mut self, closed: bool) -> Option<WornTransition> {
        if closed == self.worn {
            self.run = 0;
            return None;
        }
        self.run += 1;
        if self.run < self.debounce {
            return None;
        }
        self.run = 0;
        self.worn = closed;
        Some(if closed {
            WornTransition::Rewear
        } else {
            WornTransition::Removed
        })
    }
}

pub fn detect_removal(
    worn: bool,
    samples: &[bool],
    debounce: u32,
) -> Result<(bool, Vec<WornTransition>), String> {
    let mut det = RemovalDetector::new(worn, debounce)?;
    let transitions = samples.iter().filter_map(|&c| det.update(c)).collect();
    Ok((det.worn(), transitions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_for_debounce_samples_removes() {
        let (worn, tr) = detect_removal(true, &[false; 3], 3).unwrap();
        assert!(!worn);
        assert_eq!(tr, vec![WornTransition::Removed]);
    }

    #[test]
    fn chatter_is_rejected() {
        let samples: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let (worn, tr) = detect_removal(true, &samples, 2).unwrap();
        assert!(worn);
        assert!(tr.is_empty());
    }

    #[test]
    fn closed_for_debounce_samples_rewears() {
        let (worn, tr) = detect_removal(false, &[true; 3], 3).unwrap();
        assert!(worn);
        assert_eq!(tr, vec![WornTransition::Rewear]);
    }

    #[test]
    fn zero_debounce_is_rejected() {
        assert!(RemovalDetector::new(true, 0).is_err());
    }
}
