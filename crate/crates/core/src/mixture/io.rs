use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{Cholesky, SymmetricMatrix};
use crate::stats::RunningStats;

use super::{novelty_threshold, Backend, GaussianComponent, IgmnConfig, IgmnError, MixtureModel, Result, Shape};

pub const MODEL_FORMAT: &str = "figmn-model";
pub const MODEL_VERSION: u64 = 1;

/// On-disk form of a [`MixtureModel`].
///
/// Reals are written with the shortest decimal that parses back to the same
/// bits, so a save/load cycle is lossless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u64,
    pub config: IgmnConfig,
    pub dim: usize,
    pub sigma_ini: Vec<f64>,
    pub points_seen: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_stats: Option<RunningStats>,
    pub components: Vec<ComponentRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<SymmetricMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<SymmetricMatrix>,
    /// `ln |C|`
    pub log_det_c: f64,
    pub sp: f64,
    pub v: f64,
    #[serde(default)]
    pub clamped: u32,
}

impl ModelFile {
    /// Parses a model file, checking the format tag and version before the
    /// body.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| IgmnError::MalformedFile(e.to_string()))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(MODEL_FORMAT) => {}
            Some(other) => return Err(IgmnError::MalformedFile(format!("unknown format tag {other:?}"))),
            None => return Err(IgmnError::MalformedFile("missing format tag".into())),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(MODEL_VERSION) => {}
            Some(v) => return Err(IgmnError::UnsupportedVersion(v)),
            None => return Err(IgmnError::MalformedFile("missing version".into())),
        }
        serde_json::from_value(value).map_err(|e| IgmnError::MalformedFile(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model file serialization cannot fail")
    }
}

impl MixtureModel {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            dim: self.dim,
            sigma_ini: self.sigma_ini.clone(),
            points_seen: self.points_seen,
            stream_stats: self.stream_stats.clone(),
            components: self
                .components
                .iter()
                .map(|c| {
                    let (lambda, cov) = match &c.shape {
                        Shape::Precision(l) => (Some(l.clone()), None),
                        Shape::Covariance { cov, .. } => (None, Some(cov.clone())),
                    };
                    ComponentRecord {
                        mu: c.mean.clone(),
                        lambda,
                        cov,
                        log_det_c: c.log_det_cov,
                        sp: c.sp,
                        v: c.age,
                        clamped: c.clamped,
                    }
                })
                .collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let malformed = |m: String| IgmnError::MalformedFile(m);
        if file.format != MODEL_FORMAT {
            return Err(malformed(format!("unknown format tag {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(IgmnError::UnsupportedVersion(file.version));
        }
        file.config.validate()?;
        let dim = file.dim;
        if dim == 0 || file.sigma_ini.len() != dim {
            return Err(malformed("sigma_ini length does not match dim".into()));
        }
        if let Some(s) = &file.stream_stats {
            if s.dim() != dim {
                return Err(malformed("stream_stats dimension does not match dim".into()));
            }
        }
        let mut components = Vec::with_capacity(file.components.len());
        for (j, rec) in file.components.into_iter().enumerate() {
            if rec.mu.len() != dim {
                return Err(malformed(format!("component {j}: mean has wrong length")));
            }
            if !(rec.sp > 0.0) || !(rec.v > 0.0) || !rec.log_det_c.is_finite() {
                return Err(malformed(format!("component {j}: invalid sp, v or log_det_c")));
            }
            let shape = match (file.config.backend, rec.lambda, rec.cov) {
                (Backend::Fast, Some(l), None) if l.order() == dim => Shape::Precision(l),
                (Backend::Reference, None, Some(cov)) if cov.order() == dim => {
                    let factor = Cholesky::factor(&cov)
                        .map_err(|e| malformed(format!("component {j}: covariance not positive definite: {e}")))?;
                    Shape::Covariance { cov, factor }
                }
                (backend, _, _) => {
                    return Err(malformed(format!(
                        "component {j}: expected a {} matrix of order {dim} for the {backend} backend",
                        if backend == Backend::Fast { "lambda" } else { "cov" }
                    )))
                }
            };
            components.push(GaussianComponent {
                mean: rec.mu,
                shape,
                log_det_cov: rec.log_det_c,
                sp: rec.sp,
                age: rec.v,
                clamped: rec.clamped,
            });
        }
        let threshold = novelty_threshold(dim, file.config.beta)?;
        Ok(MixtureModel {
            config: file.config,
            dim,
            components,
            sigma_ini: file.sigma_ini,
            stream_stats: file.stream_stats,
            points_seen: file.points_seen,
            threshold,
        })
    }

    pub fn to_json(&self) -> String {
        self.to_file().to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(ModelFile::from_json(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IgmnError::MalformedFile(e.to_string()))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::IgmnConfig;

    fn trained(backend: Backend) -> MixtureModel {
        let cfg = IgmnConfig::new(0.5, 0.05).with_backend(backend);
        let mut m = MixtureModel::new(cfg, &[1.0, 2.0, 0.5]).unwrap();
        for i in 0..40 {
            let t = i as f64 * 0.37;
            m.learn_one(&[t.sin(), 2.0 * t.cos() + 0.1 * t, (3.0 * t).sin() * 0.5]).unwrap();
        }
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for backend in [Backend::Fast, Backend::Reference] {
            let m = trained(backend);
            let text = m.to_json();
            let back = MixtureModel::from_json(&text).unwrap();
            assert_eq!(back.to_file(), m.to_file());
            assert_eq!(back.to_json(), text);
            assert_eq!(back.novelty_threshold(), m.novelty_threshold());
        }
    }

    #[test]
    fn empty_model_round_trips() {
        let m = MixtureModel::new(IgmnConfig::default(), &[1.0, 1.0]).unwrap();
        let back = MixtureModel::from_json(&m.to_json()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.to_file(), m.to_file());
    }

    #[test]
    fn schema_keys() {
        let fast: serde_json::Value = serde_json::from_str(&trained(Backend::Fast).to_json()).unwrap();
        assert_eq!(fast["format"], "figmn-model");
        assert_eq!(fast["version"], 1);
        assert!(fast["components"][0].get("lambda").is_some());
        assert!(fast["components"][0].get("cov").is_none());
        let reference: serde_json::Value = serde_json::from_str(&trained(Backend::Reference).to_json()).unwrap();
        assert!(reference["components"][0].get("cov").is_some());
        assert_eq!(reference["config"]["backend"], "reference");
    }

    #[test]
    fn wrong_version_and_garbage_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&trained(Backend::Fast).to_json()).unwrap();
        v["version"] = 2.into();
        assert!(matches!(
            MixtureModel::from_json(&v.to_string()),
            Err(IgmnError::UnsupportedVersion(2))
        ));
        v["version"] = 1.into();
        v["components"][0]["mu"] = serde_json::json!([1.0]);
        assert!(matches!(MixtureModel::from_json(&v.to_string()), Err(IgmnError::MalformedFile(_))));
        assert!(matches!(MixtureModel::from_json("{"), Err(IgmnError::MalformedFile(_))));
        assert!(matches!(
            MixtureModel::from_json(r#"{"format":"other","version":1}"#),
            Err(IgmnError::MalformedFile(_))
        ));
    }
}
