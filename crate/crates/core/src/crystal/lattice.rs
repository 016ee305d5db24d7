//! Lattice definitions and the lattice file format.
//!
//! A lattice file is TOML with exactly these keys:
//!
//! ```toml
//! name = "optional free text"
//! # rows are the a, b, c cell vectors in nm, Cartesian D1/D2/b frame
//! cell_vectors_nm = [[ax, ay, az], [bx, by, bz], [cx, cy, cz]]
//! # one row per site: fx, fy, fz, orientation_class, site_label
//! sites = [[0.0369, 0.2560, 0.4665, 0, 1], ...]
//! ```
//!
//! Unknown keys are rejected.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSite {
    pub fractional: [f64; 3],
    pub orientation_class: u8,
    pub site_label: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeDefinition {
    pub name: Option<String>,
    /// Rows are the a, b, c cell vectors (nm).
    pub cell_vectors: [[f64; 3]; 3],
    pub sites: Vec<LatticeSite>,
}

impl LatticeDefinition {
    pub fn new(cell_vectors: [[f64; 3]; 3], sites: Vec<LatticeSite>) -> Result<Self> {
        let lattice = LatticeDefinition {
            name: None,
            cell_vectors,
            sites,
        };
        lattice.validate()?;
        Ok(lattice)
    }

    /// Matrix whose columns are the cell vectors, mapping fractional to Cartesian.
    pub fn cell_matrix(&self) -> Matrix3<f64> {
        let [a, b, c] = self.cell_vectors;
        Matrix3::from_columns(&[Vector3::from(a), Vector3::from(b), Vector3::from(c)])
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_matrix().determinant().abs()
    }

    pub fn validate(&self) -> Result<()> {
        let vol = self.cell_matrix().determinant();
        if !vol.is_finite() || vol.abs() <= 1e-12 {
            return Err(Error::invalid("cell vectors are linearly dependent"));
        }
        if self.sites.is_empty() {
            return Err(Error::invalid("lattice has no sites"));
        }
        for (k, s) in self.sites.iter().enumerate() {
            if s.fractional.iter().any(|f| !(0.0..1.0).contains(f)) {
                return Err(Error::invalid(format!(
                    "site {k}: fractional coordinates {:?} outside [0, 1)",
                    s.fractional
                )));
            }
            if s.orientation_class > 3 {
                return Err(Error::invalid(format!(
                    "site {k}: orientation class {} outside 0..=3",
                    s.orientation_class
                )));
            }
        }
        Ok(())
    }

    pub fn sites_with_label(&self, label: u32) -> Vec<LatticeSite> {
        self.sites
            .iter()
            .filter(|s| s.site_label == label)
            .copied()
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::invalid(e.to_string()))?;
        for key in table.keys() {
            if !matches!(key.as_str(), "name" | "cell_vectors_nm" | "sites") {
                return Err(Error::invalid(format!("unknown key `{key}`")));
            }
        }
        let name = match table.get("name") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| Error::invalid("`name` must be a string"))?
                    .to_string(),
            ),
            None => None,
        };
        let rows = table
            .get("cell_vectors_nm")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::invalid("missing array `cell_vectors_nm`"))?;
        if rows.len() != 3 {
            return Err(Error::invalid("`cell_vectors_nm` must have three rows"));
        }
        let mut cell_vectors = [[0.0; 3]; 3];
        for (r, row) in rows.iter().enumerate() {
            let vals = number_row(row, 3)
                .map_err(|m| Error::invalid(format!("cell_vectors_nm row {r}: {m}")))?;
            cell_vectors[r].copy_from_slice(&vals);
        }
        let site_rows = table
            .get("sites")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::invalid("missing array `sites`"))?;
        let mut sites = Vec::with_capacity(site_rows.len());
        for (r, row) in site_rows.iter().enumerate() {
            let vals =
                number_row(row, 5).map_err(|m| Error::invalid(format!("sites row {r}: {m}")))?;
            let class = integer(vals[3])
                .filter(|c| (0..=3).contains(c))
                .ok_or_else(|| Error::invalid(format!("sites row {r}: bad orientation class")))?;
            let label = integer(vals[4])
                .filter(|l| *l >= 0)
                .ok_or_else(|| Error::invalid(format!("sites row {r}: bad site label")))?;
            sites.push(LatticeSite {
                fractional: [vals[0], vals[1], vals[2]],
                orientation_class: class as u8,
                site_label: label as u32,
            });
        }
        let lattice = LatticeDefinition {
            name,
            cell_vectors,
            sites,
        };
        lattice.validate()?;
        Ok(lattice)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.name {
            out.push_str(&format!("name = {:?}\n", name));
        }
        out.push_str("cell_vectors_nm = [\n");
        for row in &self.cell_vectors {
            out.push_str(&format!("  [{:?}, {:?}, {:?}],\n", row[0], row[1], row[2]));
        }
        out.push_str("]\n# fx, fy, fz, orientation_class, site_label\nsites = [\n");
        for s in &self.sites {
            out.push_str(&format!(
                "  [{:?}, {:?}, {:?}, {}, {}],\n",
                s.fractional[0],
                s.fractional[1],
                s.fractional[2],
                s.orientation_class,
                s.site_label
            ));
        }
        out.push_str("]\n");
        out
    }
}

fn number_row(row: &toml::Value, len: usize) -> std::result::Result<Vec<f64>, String> {
    let arr = row.as_array().ok_or("expected an array")?;
    if arr.len() != len {
        return Err(format!("expected {len} entries, found {}", arr.len()));
    }
    arr.iter()
        .map(|v| match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            other => Err(format!("expected a number, found {other}")),
        })
        .collect()
}

fn integer(x: f64) -> Option<i64> {
    (x.fract() == 0.0 && x.abs() < 1e9).then_some(x as i64)
}

/// Y2SiO5 (X2 phase, I2/a setting) yttrium site 1, bundled as data.
pub const Y2SIO5_LATTICE: &str = include_str!("../../data/y2sio5.lattice.toml");

pub fn y2sio5() -> LatticeDefinition {
    LatticeDefinition::parse(Y2SIO5_LATTICE).expect("bundled lattice file is valid")
}
