use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// A charger as it appears in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargerRecord {
    pub id: String,
    pub terminal: String,
    pub power_kw: f64,
}

/// A bus as it appears in an instance file. Energies are on the usable scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: String,
    pub usable_capacity_kwh: f64,
    pub initial_energy_kwh: f64,
    pub final_min_energy_kwh: f64,
}

/// A timetabled trip as it appears in an instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripRecord {
    pub bus: String,
    pub seq: u32,
    pub sched_start_min: f64,
    pub sched_duration_min: f64,
    pub energy_kwh: f64,
    pub start_terminal: String,
    pub end_terminal: String,
}

/// The on-disk instance document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub chargers: Vec<ChargerRecord>,
    pub buses: Vec<BusRecord>,
    pub trips: Vec<TripRecord>,
}

impl InstanceFile {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, ModelError> {
        serde_json::from_reader(reader).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("instance serializes");
        text.push('\n');
        text
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<(), ModelError> {
        writer
            .write_all(self.to_json().as_bytes())
            .map_err(|e| ModelError::Io(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| ModelError::Io(format!("{}: {e}", path.as_ref().display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"chargers": [], "buses": [], "trips": [], "depots": []}"#;
        assert!(matches!(
            InstanceFile::from_json(text),
            Err(ModelError::Parse(_))
        ));

        let text = r#"{"chargers": [{"id": "L", "terminal": "T", "power_kw": 1, "x": 2}],
                       "buses": [], "trips": []}"#;
        assert!(InstanceFile::from_json(text).is_err());
    }

    #[test]
    fn missing_fields_are_rejected() {
        let text = r#"{"chargers": [{"id": "L", "terminal": "T"}], "buses": [], "trips": []}"#;
        assert!(InstanceFile::from_json(text).is_err());
    }
}
