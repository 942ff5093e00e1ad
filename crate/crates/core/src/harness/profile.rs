use std::path::Path;

use serde::{Deserialize, Serialize};

/// Operator think time charged before each interaction, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanLatencyProfile {
    pub click: f64,
    pub drag: f64,
    pub handle: f64,
    /// Per numeric field typed.
    pub field: f64,
    /// Decision pause between actions.
    pub pause: f64,
}

impl Default for HumanLatencyProfile {
    fn default() -> Self {
        Self {
            click: 1.0,
            drag: 2.0,
            handle: 4.0,
            field: 5.0,
            pause: 3.0,
        }
    }
}

impl HumanLatencyProfile {
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            click: self.click * k,
            drag: self.drag * k,
            handle: self.handle * k,
            field: self.field * k,
            pause: self.pause * k,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.click, self.drag, self.handle, self.field, self.pause];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(format!("profile costs must be finite and non-negative: {self:?}"))
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        p.validate()?;
        Ok(p)
    }
}

/// One operator gesture with its think-time cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gesture {
    Click,
    Drag,
    Handle,
    Fields(u32),
    Pause,
}

impl HumanLatencyProfile {
    pub fn cost(&self, g: Gesture) -> f64 {
        match g {
            Gesture::Click => self.click,
            Gesture::Drag => self.drag,
            Gesture::Handle => self.handle,
            Gesture::Fields(n) => self.field * n as f64,
            Gesture::Pause => self.pause,
        }
    }

    pub fn total(&self, gestures: &[Gesture]) -> f64 {
        gestures.iter().map(|g| self.cost(*g)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_costs() {
        let p = HumanLatencyProfile::default();
        assert_eq!(p.total(&[Gesture::Click, Gesture::Drag, Gesture::Handle, Gesture::Fields(6), Gesture::Pause]), 40.0);
        assert!(p.validate().is_ok());
        assert!(p.scaled(-1.0).validate().is_err());
    }

    #[test]
    fn partial_file_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(&path, r#"{"click": 0.5}"#).unwrap();
        let p = HumanLatencyProfile::load(&path).unwrap();
        assert_eq!(p.click, 0.5);
        assert_eq!(p.field, 5.0);
    }
}
