//! Energy-model files: one TOML table per molecule listing its terms.
//!
//! ```toml
//! temperature = 500.0
//!
//! [[molecule]]
//! id = "ethanol"
//! atoms = 9
//! bonds = [{ i = 0, j = 1, rest = 1.54, k = 1500.0 }]
//! angles = [{ i = 0, center = 1, j = 2, rest = 1.911, k = 300.0 }]
//! sterics = []
//! ```

use std::path::Path;

use graphdg_core::boltzmann::{AngleTerm, BondTerm, EnergyModel, StericTerm};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BondDoc {
    i: usize,
    j: usize,
    rest: f64,
    k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AngleDoc {
    i: usize,
    center: usize,
    j: usize,
    rest: f64,
    k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StericDoc {
    i: usize,
    j: usize,
    floor: f64,
    k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoleculeDoc {
    id: String,
    atoms: usize,
    #[serde(default)]
    offset: f64,
    #[serde(default)]
    bonds: Vec<BondDoc>,
    #[serde(default)]
    angles: Vec<AngleDoc>,
    #[serde(default)]
    sterics: Vec<StericDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(rename = "molecule")]
    molecules: Vec<MoleculeDoc>,
}

/// Energy models keyed by molecule id, with the temperature the data was
/// generated at when known.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyFile {
    pub temperature: Option<f64>,
    pub molecules: Vec<(String, EnergyModel)>,
}

impl EnergyFile {
    pub fn get(&self, id: &str) -> Option<&EnergyModel> {
        self.molecules.iter().find(|(m, _)| m == id).map(|(_, e)| e)
    }

    pub fn to_toml(&self) -> String {
        let doc = FileDoc {
            temperature: self.temperature,
            molecules: self
                .molecules
                .iter()
                .map(|(id, m)| MoleculeDoc {
                    id: id.clone(),
                    atoms: m.n_atoms(),
                    offset: m.offset(),
                    bonds: m.bonds().iter().map(|t| BondDoc { i: t.i, j: t.j, rest: t.rest, k: t.k }).collect(),
                    angles: m
                        .angles()
                        .iter()
                        .map(|t| AngleDoc { i: t.i, center: t.center, j: t.j, rest: t.rest, k: t.k })
                        .collect(),
                    sterics: m
                        .sterics()
                        .iter()
                        .map(|t| StericDoc { i: t.i, j: t.j, floor: t.floor, k: t.k })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&doc).expect("energy models always serialize")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let doc: FileDoc = toml::from_str(text).map_err(|e| e.to_string())?;
        let mut molecules = Vec::with_capacity(doc.molecules.len());
        for m in doc.molecules {
            let model = EnergyModel::new(
                m.atoms,
                m.bonds.iter().map(|t| BondTerm { i: t.i, j: t.j, rest: t.rest, k: t.k }).collect(),
                m.angles.iter().map(|t| AngleTerm { i: t.i, center: t.center, j: t.j, rest: t.rest, k: t.k }).collect(),
                m.sterics.iter().map(|t| StericTerm { i: t.i, j: t.j, floor: t.floor, k: t.k }).collect(),
            )
            .map_err(|e| format!("molecule {:?}: {e}", m.id))?
            .with_offset(m.offset);
            molecules.push((m.id, model));
        }
        Ok(Self { temperature: doc.temperature, molecules })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::config(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}
