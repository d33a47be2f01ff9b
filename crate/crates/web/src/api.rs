use serde::Serialize;

use tonewood::geometry::{PlateParams, ReferencePlate, OUTLINE_DIM};
use tonewood::optimizer::{optimize_design, LossSpec, NelderMeadOptions};
use tonewood::surrogate::SurrogateModel;

type Result<T> = std::result::Result<T, String>;

fn parse(params: &str) -> Result<PlateParams> {
    let p: PlateParams = serde_json::from_str(params).map_err(|e| e.to_string())?;
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn reference_params() -> String {
    serde_json::to_string(&ReferencePlate::violin().params()).expect("params serialize")
}

pub fn outline(params: &str, density: usize) -> Result<String> {
    let geometry =
        ReferencePlate::violin().realize_with_density(&parse(params)?, density).map_err(|e| e.to_string())?;
    to_json(&geometry.boundary)
}

#[derive(Serialize)]
struct Prediction {
    freqs_hz: Vec<f64>,
    f52: f64,
    in_training_box: bool,
}

#[derive(Serialize)]
struct RatioResult {
    params: PlateParams,
    freqs_hz: Vec<f64>,
    f52: f64,
    evaluations: usize,
    /// Best loss after each evaluation.
    trace: Vec<f64>,
    boundary: Vec<[f64; 2]>,
}

pub struct Surrogate {
    model: SurrogateModel,
    reference: ReferencePlate,
}

impl Surrogate {
    pub fn new(model_json: &str) -> Result<Self> {
        let model = SurrogateModel::from_json(model_json).map_err(|e| e.to_string())?;
        Ok(Self { model, reference: ReferencePlate::violin() })
    }

    pub fn predict(&self, params: &str) -> Result<String> {
        let p = parse(params)?;
        let f = self.model.predict(&p);
        to_json(&Prediction { f52: f[4] / f[1], in_training_box: self.model.in_training_box(&p), freqs_hz: f })
    }

    pub fn optimize_ratio(&self, start: &str, alpha: f64) -> Result<String> {
        let start = parse(start)?;
        let free: Vec<usize> = (0..OUTLINE_DIM).collect();
        let run = optimize_design(
            &self.model,
            &LossSpec::RatioTarget { alpha },
            &start,
            &free,
            &NelderMeadOptions::default(),
            &mut |_| {},
        )
        .map_err(|e| e.to_string())?;
        let boundary = self.reference.realize(&run.best).map_err(|e| e.to_string())?.boundary;
        to_json(&RatioResult {
            f52: run.predicted_hz[4] / run.predicted_hz[1],
            freqs_hz: run.predicted_hz,
            evaluations: run.evaluations,
            trace: run.trace.iter().map(|t| t.best_loss).collect(),
            params: run.best,
            boundary,
        })
    }
}
