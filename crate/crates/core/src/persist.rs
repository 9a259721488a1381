//! Versioned JSON container for trained models.
//!
//! A file holds `{"format": "specreg-model", "schema_version": N, "model": ...}`.
//! Dual models embed their training inputs. Random feature maps store only
//! the seed and sizes; frequencies are regenerated on load.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{DualModel, Predictor, PrimalModel};
use crate::nystrom::NystromModel;
use crate::random_features::RfModel;
use crate::rlsc::RlscState;

pub const FORMAT_NAME: &str = "specreg-model";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SavedModel {
    Primal(PrimalModel),
    Dual(DualModel),
    Nystrom(NystromModel),
    RandomFeatures(RfModel),
    Rlsc(RlscState),
}

impl SavedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Primal(_) => "primal",
            Self::Dual(_) => "dual",
            Self::Nystrom(_) => "nystrom",
            Self::RandomFeatures(_) => "random_features",
            Self::Rlsc(_) => "rlsc",
        }
    }
}

impl Predictor for SavedModel {
    /// Real-valued outputs; for a classifier these are the per-class scores.
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self {
            Self::Primal(m) => m.predict(x),
            Self::Dual(m) => m.predict(x),
            Self::Nystrom(m) => m.predict(x),
            Self::RandomFeatures(m) => m.predict(x),
            Self::Rlsc(m) => m.scores(x),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format: String,
    schema_version: u32,
    model: M,
}

pub fn to_json(model: &SavedModel) -> Result<String> {
    let env = Envelope { format: FORMAT_NAME.to_string(), schema_version: SCHEMA_VERSION, model };
    Ok(serde_json::to_string(&env)?)
}

pub fn from_json(text: &str) -> Result<SavedModel> {
    let header: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if header.format != FORMAT_NAME {
        return Err(Error::Format(format!("expected format {FORMAT_NAME:?}, found {:?}", header.format)));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema version {} (this build reads {SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    Ok(serde_json::from_value(header.model)?)
}

pub fn save_model(path: &Path, model: &SavedModel) -> Result<()> {
    fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::random_features::sample_features;
    use crate::testutil::random_matrix;
    use std::sync::Arc;

    fn round_trip(model: SavedModel) {
        let x = random_matrix(7, 3, 99);
        let before = model.predict(x.view()).unwrap();
        let back = from_json(&to_json(&model).unwrap()).unwrap();
        assert_eq!(back.kind(), model.kind());
        let after = back.predict(x.view()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn every_model_round_trips() {
        let x = random_matrix(20, 3, 1);
        let y = random_matrix(20, 2, 2);
        let kernel = KernelSpec::Gaussian { sigma: 0.8 };
        round_trip(SavedModel::Primal(PrimalModel { weights: random_matrix(3, 2, 3) }));
        round_trip(SavedModel::Dual(DualModel::fit_krls(kernel, Arc::new(x.clone()), y.view(), 0.1).unwrap()));
        round_trip(SavedModel::Nystrom(NystromModel::fit(kernel, x.view(), y.view(), &[0, 4, 9], 0.1).unwrap()));
        let map = sample_features(3, 16, 1.0, 5).unwrap();
        round_trip(SavedModel::RandomFeatures(RfModel::fit(map, x.view(), y.view(), 0.1).unwrap()));
        let mut state = RlscState::init(3, 0.5, 0.5).unwrap();
        for i in 0..20 {
            state.update(x.row(i), 1 + i % 3).unwrap();
        }
        round_trip(SavedModel::Rlsc(state));
    }

    #[test]
    fn feature_map_is_stored_by_seed() {
        let map = sample_features(3, 200, 1.0, 5).unwrap();
        let model = SavedModel::RandomFeatures(RfModel { map, weights: Array2::zeros((200, 1)) });
        let text = to_json(&model).unwrap();
        assert!(!text.contains("omegas"));
    }

    #[test]
    fn rejects_foreign_or_future_files() {
        let text = to_json(&SavedModel::Primal(PrimalModel { weights: Array2::zeros((1, 1)) })).unwrap();
        let future = text.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(from_json(&future), Err(Error::Format(_))));
        let foreign = text.replace(FORMAT_NAME, "other");
        assert!(matches!(from_json(&foreign), Err(Error::Format(_))));
        assert!(matches!(from_json("{"), Err(Error::Json(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = SavedModel::Primal(PrimalModel { weights: random_matrix(3, 1, 8) });
        save_model(&path, &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
    }
}
