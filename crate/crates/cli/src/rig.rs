//! Device config, calibration and pattern catalogs bundled together.

use fivebar_haptics::device::{
    calibrate, hover_pose, DeviceCalibration, DeviceConfig, FingerProfile,
};
use fivebar_haptics::linkage::Point;
use fivebar_haptics::pattern::{
    compile_schedule, default_slippage_catalog, default_static_catalog, load_catalog,
    pattern_trajectory, JointSchedule, PatternCatalog, PatternKind,
};

use crate::error::DomainError;

#[derive(Debug, Clone)]
pub struct Rig {
    pub cfg: DeviceConfig,
    pub finger: FingerProfile,
    pub cal: DeviceCalibration,
    pub static_catalog: PatternCatalog,
    pub slippage_catalog: PatternCatalog,
}

impl Default for Rig {
    fn default() -> Self {
        Rig::new(
            DeviceConfig::default(),
            FingerProfile::REFERENCE,
            default_static_catalog(),
            default_slippage_catalog(),
        )
        .expect("defaults calibrate")
    }
}

impl Rig {
    pub fn new(
        cfg: DeviceConfig,
        finger: FingerProfile,
        static_catalog: PatternCatalog,
        slippage_catalog: PatternCatalog,
    ) -> Result<Self, DomainError> {
        cfg.validate()?;
        let cal = calibrate(&finger, &cfg)?;
        Ok(Rig {
            cfg,
            finger,
            cal,
            static_catalog,
            slippage_catalog,
        })
    }

    pub fn load_config(path: &str) -> Result<DeviceConfig, DomainError> {
        let text = std::fs::read_to_string(path).map_err(|e| DomainError::io(path, e))?;
        Ok(DeviceConfig::from_json(&text)?)
    }

    pub fn load_catalog(path: &str) -> Result<PatternCatalog, DomainError> {
        let bytes = std::fs::read(path).map_err(|e| DomainError::io(path, e))?;
        Ok(load_catalog(&bytes)?)
    }

    pub fn recalibrate(&mut self, finger: FingerProfile) -> Result<(), DomainError> {
        self.cal = calibrate(&finger, &self.cfg)?;
        self.finger = finger;
        Ok(())
    }

    pub fn catalog(&self, kind: PatternKind) -> &PatternCatalog {
        match kind {
            PatternKind::Static => &self.static_catalog,
            PatternKind::Slippage => &self.slippage_catalog,
        }
    }

    /// Accepts `static`, `slippage` or a loaded catalog's name.
    pub fn resolve_catalog(&self, name: &str) -> Result<PatternKind, DomainError> {
        match name {
            "static" => Ok(PatternKind::Static),
            "slippage" | "dynamic" => Ok(PatternKind::Slippage),
            _ if name == self.static_catalog.name => Ok(PatternKind::Static),
            _ if name == self.slippage_catalog.name => Ok(PatternKind::Slippage),
            _ => Err(DomainError::UnknownCatalog(name.to_string())),
        }
    }

    pub fn schedule(&self, kind: PatternKind, id: u32) -> Result<JointSchedule, DomainError> {
        let catalog = self.catalog(kind);
        if !catalog.ids(kind).contains(&id) {
            return Err(DomainError::UnknownPattern {
                kind: kind.to_string(),
                id,
            });
        }
        let traj = pattern_trajectory(catalog, kind, id, &self.cal, self.cfg.control_rate_hz)?;
        Ok(compile_schedule(
            &traj,
            &self.cfg,
            &self.cal,
            self.cfg.ramp_s,
        )?)
    }

    pub fn hover_points(&self) -> [Point; 2] {
        let p = hover_pose(&self.cal, &self.cfg).point();
        [p, p]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_names_resolve() {
        let rig = Rig::default();
        assert_eq!(rig.resolve_catalog("static").unwrap(), PatternKind::Static);
        assert_eq!(
            rig.resolve_catalog("dynamic").unwrap(),
            PatternKind::Slippage
        );
        assert_eq!(
            rig.resolve_catalog("default-slippage").unwrap(),
            PatternKind::Slippage
        );
        let err = rig.resolve_catalog("nope").unwrap_err();
        assert_eq!(err.name(), "UnknownCatalog");
    }

    #[test]
    fn unknown_pattern_is_reported_before_compiling() {
        let rig = Rig::default();
        assert_eq!(
            rig.schedule(PatternKind::Static, 1).unwrap().entries.len(),
            180
        );
        let err = rig.schedule(PatternKind::Slippage, 6).unwrap_err();
        assert_eq!(err.name(), "UnknownPattern");
    }

    #[test]
    fn recalibration_moves_hover() {
        let mut rig = Rig::default();
        rig.recalibrate(FingerProfile {
            thickness_mm: 11.0,
            width_mm: 16.0,
        })
        .unwrap();
        assert_eq!(rig.cal.depth_mm, 20.0);
        assert_eq!(rig.hover_points()[0], Point::new(0.0, -17.0));
        assert!(rig
            .recalibrate(FingerProfile {
                thickness_mm: -1.0,
                width_mm: 16.0
            })
            .is_err());
        assert_eq!(rig.cal.depth_mm, 20.0);
    }
}
