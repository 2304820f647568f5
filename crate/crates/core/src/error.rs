use thiserror::Error;

use crate::biomarker::BiomarkerError;
use crate::classifier::ClassifierError;
use crate::data_io::DataError;
use crate::dsp::DspError;
use crate::ecg::EcgError;
use crate::imu::ImuError;
use crate::pipeline::PipelineError;
use crate::regression::RegressionError;
use crate::synth::SynthError;

/// Any error the crate can raise, tagged by the stage that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("dsp: {0}")]
    Dsp(#[from] DspError),
    #[error("ecg: {0}")]
    Ecg(#[from] EcgError),
    #[error("imu: {0}")]
    Imu(#[from] ImuError),
    #[error("classifier: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("regression: {0}")]
    Regression(#[from] RegressionError),
    #[error("pipeline: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("biomarker: {0}")]
    Biomarker(#[from] BiomarkerError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
}

impl Error {
    /// Short machine-readable code for the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Data(_) => "data",
            Error::Dsp(_) => "dsp",
            Error::Ecg(_) => "ecg",
            Error::Imu(_) => "imu",
            Error::Classifier(_) => "classifier",
            Error::Regression(_) => "regression",
            Error::Pipeline(_) => "pipeline",
            Error::Biomarker(_) => "biomarker",
            Error::Synth(_) => "synth",
        }
    }
}
