//! JSON file formats for spaces, sequences, densities, functions and plans.
//!
//! Files that live on a space carry a `space_ref`, a path to a space file
//! resolved relative to the referring file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ambient::{
    Density, FiniteSpace, GeodesicTemplate, Point, SpaceSequence, TestFamily, DEFAULT_FAMILY_VERSION,
};
use crate::calculus::SpaceFunction;
use crate::error::{Error, Result};
use crate::plans::{CurvePlan, DiscreteCurve, PlanRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub template: GeodesicTemplate,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub basepoint: usize,
    /// Row-major distance matrix; induced by the template when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<Vec<f64>>,
}

impl SpaceFile {
    pub fn from_space(space: &FiniteSpace) -> Self {
        SpaceFile {
            template: space.template().clone(),
            points: space.points().to_vec(),
            weights: space.weights().to_vec(),
            basepoint: space.basepoint(),
            dist: space
                .has_explicit_distances()
                .then(|| space.distance_matrix().to_vec()),
        }
    }

    pub fn into_space(self) -> Result<FiniteSpace> {
        match self.dist {
            Some(d) => FiniteSpace::with_distances(self.template, self.points, self.weights, self.basepoint, d),
            None => FiniteSpace::new(self.template, self.points, self.weights, self.basepoint),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFile {
    pub terms: Vec<PathBuf>,
    pub limit: PathBuf,
    #[serde(default = "default_family")]
    pub test_family: String,
}

fn default_family() -> String {
    DEFAULT_FAMILY_VERSION.to_string()
}

/// Point masses or density values on a referenced space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFile {
    pub space_ref: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionFile {
    pub space_ref: PathBuf,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub space_ref: PathBuf,
    pub curves: Vec<DiscreteCurve>,
    pub masses: Vec<f64>,
}

/// Reads and parses a JSON file. Missing files are reported as malformed
/// input since they come from configuration.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, to_json(value)?)?;
    Ok(())
}

/// `path` relative to the directory of `base`, unless absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    base.parent().map_or_else(|| path.to_path_buf(), |d| d.join(path))
}

pub fn load_space(path: &Path) -> Result<Arc<FiniteSpace>> {
    let file: SpaceFile = read_json(path)?;
    Ok(Arc::new(file.into_space()?))
}

pub fn load_sequence(path: &Path) -> Result<SpaceSequence> {
    let file: SequenceFile = read_json(path)?;
    let terms = file
        .terms
        .iter()
        .map(|t| load_space(&resolve(path, t)))
        .collect::<Result<Vec<_>>>()?;
    let limit = load_space(&resolve(path, &file.limit))?;
    if file.test_family != DEFAULT_FAMILY_VERSION {
        return Err(Error::Malformed(format!("unknown test family {}", file.test_family)));
    }
    let family = TestFamily::default_for(limit.template());
    SpaceSequence::new(terms, limit, family)
}

pub fn load_density(path: &Path) -> Result<Density> {
    let file: DensityFile = read_json(path)?;
    let space = load_space(&resolve(path, &file.space_ref))?;
    match (file.masses, file.values) {
        (Some(m), None) => Density::from_masses(space, &m),
        (None, Some(v)) => Density::new(space, v),
        _ => Err(Error::Malformed("a density file needs exactly one of masses and values".into())),
    }
}

pub fn load_function(path: &Path) -> Result<SpaceFunction> {
    let file: FunctionFile = read_json(path)?;
    let space = load_space(&resolve(path, &file.space_ref))?;
    SpaceFunction::new(space, file.values)
}

/// Loads a plan and normalizes its masses.
pub fn load_plan(path: &Path) -> Result<CurvePlan> {
    let file: PlanFile = read_json(path)?;
    let space = load_space(&resolve(path, &file.space_ref))?;
    CurvePlan::from_record(
        space,
        PlanRecord {
            curves: file.curves,
            masses: file.masses,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::discretize;

    #[test]
    fn space_round_trip() {
        let t = GeodesicTemplate::circle(2.0).unwrap();
        let sp = discretize(&t, 6, &|_| 0.5).unwrap();
        let file = SpaceFile::from_space(&sp);
        let text = to_json(&file).unwrap();
        let back: SpaceFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_space().unwrap(), sp);
    }

    #[test]
    fn files_resolve_relative_to_their_directory() {
        let dir = tempfile::tempdir().unwrap();
        let t = GeodesicTemplate::segment(1.0).unwrap();
        let sp = discretize(&t, 3, &|_| 1.0).unwrap();
        write_json(&dir.path().join("spaces/s.json"), &SpaceFile::from_space(&sp)).unwrap();
        let f = FunctionFile {
            space_ref: "spaces/s.json".into(),
            values: vec![0.0, 0.25, 1.0],
        };
        write_json(&dir.path().join("f.json"), &f).unwrap();
        let g = load_function(&dir.path().join("f.json")).unwrap();
        assert_eq!(g.values(), &[0.0, 0.25, 1.0]);
        let d = DensityFile {
            space_ref: "spaces/s.json".into(),
            masses: Some(vec![1.0, 0.0, 0.0]),
            values: Some(vec![1.0, 0.0, 0.0]),
        };
        write_json(&dir.path().join("d.json"), &d).unwrap();
        assert!(matches!(load_density(&dir.path().join("d.json")), Err(Error::Malformed(_))));
        assert!(matches!(load_space(&dir.path().join("missing.json")), Err(Error::Malformed(_))));
    }
}
