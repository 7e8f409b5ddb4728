use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log dose relative to a reference dose, `ln(dose / reference)`.
pub fn log_relative_dose(dose: f64, reference: f64) -> Result<f64> {
    if !(dose > 0.0 && dose.is_finite()) {
        return Err(Error::Domain(format!("dose must be positive, got {dose}")));
    }
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::Domain(format!(
            "reference dose must be positive, got {reference}"
        )));
    }
    Ok((dose / reference).ln())
}

/// The doses under study together with their model covariates.
///
/// `transformed[j]` is always `ln(raw_doses[j] / reference_dose)`. When
/// `standardize` is set the covariate fed to the model is that value centred
/// and scaled by the grid mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseGrid {
    raw_doses: Vec<f64>,
    reference_dose: f64,
    transformed: Vec<f64>,
    standardize: bool,
    covariates: Vec<f64>,
}

// Only the defining inputs are serialized; covariates are recomputed on load.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DoseGridRepr {
    raw_doses: Vec<f64>,
    reference_dose: Option<f64>,
    #[serde(default)]
    standardize: bool,
}

impl Serialize for DoseGrid {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        DoseGridRepr {
            raw_doses: self.raw_doses.clone(),
            reference_dose: Some(self.reference_dose),
            standardize: self.standardize,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for DoseGrid {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = DoseGridRepr::deserialize(de)?;
        let reference = match repr.reference_dose {
            Some(r) => r,
            None => repr.raw_doses.last().copied().unwrap_or(f64::NAN),
        };
        DoseGrid::with_options(repr.raw_doses, reference, repr.standardize).map_err(serde::de::Error::custom)
    }
}

impl DoseGrid {
    /// Grid with the reference dose set to `reference`, no standardization.
    pub fn new(raw_doses: Vec<f64>, reference: f64) -> Result<Self> {
        Self::with_options(raw_doses, reference, false)
    }

    /// Grid whose reference dose is the maximum planned dose.
    pub fn with_max_reference(raw_doses: Vec<f64>) -> Result<Self> {
        let reference = raw_doses
            .last()
            .copied()
            .ok_or_else(|| Error::config("raw_doses", "dose grid is empty"))?;
        Self::new(raw_doses, reference)
    }

    pub fn with_options(raw_doses: Vec<f64>, reference: f64, standardize: bool) -> Result<Self> {
        if raw_doses.is_empty() {
            return Err(Error::config("raw_doses", "dose grid is empty"));
        }
        if raw_doses.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("raw_doses", "doses must be strictly increasing"));
        }
        let transformed = raw_doses
            .iter()
            .map(|&d| log_relative_dose(d, reference))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::config("raw_doses", e.to_string()))?;
        let covariates = if standardize && transformed.len() > 1 {
            let n = transformed.len() as f64;
            let mean = transformed.iter().sum::<f64>() / n;
            let var = transformed.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            transformed.iter().map(|t| (t - mean) / sd).collect()
        } else {
            transformed.clone()
        };
        Ok(Self {
            raw_doses,
            reference_dose: reference,
            transformed,
            standardize,
            covariates,
        })
    }

    /// The nine-dose grid 60, 75, …, 180 mg referenced to 180 mg.
    pub fn default_nine_dose() -> Self {
        Self::with_max_reference((0..9).map(|i| 60.0 + 15.0 * i as f64).collect()).expect("static grid is valid")
    }

    pub fn len(&self) -> usize {
        self.raw_doses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_doses.is_empty()
    }

    pub fn raw_doses(&self) -> &[f64] {
        &self.raw_doses
    }

    pub fn reference_dose(&self) -> f64 {
        self.reference_dose
    }

    pub fn transformed(&self) -> &[f64] {
        &self.transformed
    }

    pub fn is_standardized(&self) -> bool {
        self.standardize
    }

    /// Model covariate for dose level `level` (0-based).
    pub fn covariate(&self, level: usize) -> f64 {
        self.covariates[level]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }
}
