//! Simulator configuration: a TOML document with one table per subsystem.
//!
//! Every key is optional. Absent keys take the documented default, so an
//! empty file yields the reference setup (50×50 array at 2.3 MHz, 1 mm pitch,
//! 15 FPS cameras). See `docs/config.md` for the full schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationConfig;
use crate::control::ControlConfig;
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::hologram::HologramConfig;
use crate::model::{
    wavelength, MediumConfig, TankConfig, TimingConfig, TransducerArray, WorkspaceConfig,
};
use crate::vision::VisionConfig;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "ACOUSTRAP_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub medium: MediumConfig,
    pub array: TransducerArray,
    pub timing: TimingConfig,
    pub workspace: WorkspaceConfig,
    pub tank: TankConfig,
    pub hologram: HologramConfig,
    pub field: FieldConfig,
    pub vision: VisionConfig,
    pub calibration: CalibrationConfig,
    pub control: ControlConfig,
}

impl SimConfig {
    pub fn wavelength(&self) -> f64 {
        // validated configs always have positive speed and frequency
        wavelength(&self.medium, &self.array).expect("validated config")
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        self.array.validate()?;
        self.timing.validate()?;
        self.tank.validate()?;
        self.workspace.validate(&self.tank)?;
        self.hologram.validate()?;
        self.vision.validate()?;
        self.calibration.validate()?;
        self.control.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys, TOML
    /// values), fills defaults and validates.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        // merging onto the defaults lets partial tables such as
        // `workspace.center = { z = 36 }` keep the other components
        let mut doc: toml::Table = Self::default()
            .to_toml_string()
            .parse()
            .expect("default config serializes to valid TOML");
        merge(&mut doc, user);
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: SimConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }
}

/// Loads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    load_config_with_overrides(path, &[])
}

pub fn load_config_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    SimConfig::from_toml_with_overrides(&text, overrides)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_override(doc: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("override `{ov}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    // Bare words that are not valid TOML values are taken as strings.
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts
        .pop()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::Parse(format!("empty override key in `{ov}`")))?;
    let mut table = doc;
    for part in parts {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Parse(format!("`{part}` in `{key}` is not a table")))?;
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn documented_defaults_match() {
        let doc = include_str!("../../../docs/config.md");
        let block = doc
            .split("```toml\n")
            .nth(1)
            .and_then(|rest| rest.split("```").next())
            .expect("defaults block");
        assert_eq!(SimConfig::from_toml_str(block).unwrap(), SimConfig::default());
        let explicit: toml::Table = block.parse().unwrap();
        let defaults: toml::Table = SimConfig::default().to_toml_string().parse().unwrap();
        assert_eq!(explicit, defaults);
    }

    #[test]
    fn empty_document_gives_reference_setup() {
        let cfg = SimConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.array.rows, 50);
        assert_eq!(cfg.array.cols, 50);
        assert_eq!(cfg.array.frequency, 2.3e6);
        assert_eq!(cfg.array.pitch, 1.0);
        assert_eq!(cfg.timing.camera_fps, 15.0);
        assert_eq!(cfg.vision.full_width, 2448);
        assert_eq!(cfg.vision.full_height, 2050);
        assert_eq!(cfg, SimConfig::default());
    }

    #[test]
    fn empty_file_loads() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.flush().unwrap();
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg.array.len(), 2500);
    }

    #[test]
    fn zero_frequency_is_rejected_with_field_name() {
        let err = SimConfig::from_toml_str("[array]\nfrequency = 0.0\n").unwrap_err();
        match err {
            Error::Config { field, .. } => assert_eq!(field, "array.frequency"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_pitch_is_rejected() {
        let err = SimConfig::from_toml_str("[array]\npitch = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("array.pitch"), "{err}");
    }

    #[test]
    fn pitch_override_scales_aperture() {
        let cfg = SimConfig::from_toml_with_overrides("", &["array.pitch=2.0".into()]).unwrap();
        assert_eq!(cfg.array.aperture(), (100.0, 100.0));
        let last = cfg.array.element_center(49, 49).unwrap();
        assert_eq!(last.x, 99.0);
    }

    #[test]
    fn zero_element_array_is_rejected() {
        assert!(SimConfig::from_toml_str("[array]\nrows = 0\n").is_err());
    }

    #[test]
    fn unknown_keys_and_bad_syntax_are_parse_errors() {
        assert!(matches!(
            SimConfig::from_toml_str("[array]\nptich = 2.0\n"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(SimConfig::from_toml_str("[array"), Err(Error::Parse(_))));
    }

    #[test]
    fn string_override_and_nested_tables() {
        let cfg = SimConfig::from_toml_with_overrides(
            "",
            &["hologram.sm_phasing=aligned".into(), "workspace.center.z=36".into()],
        )
        .unwrap();
        assert_eq!(cfg.hologram.sm_phasing, crate::hologram::SmPhasing::Aligned);
        assert_eq!(cfg.workspace.center.z, 36.0);
    }

    #[test]
    fn serialized_config_round_trips() {
        let cfg = SimConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
