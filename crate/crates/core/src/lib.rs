//! Neural Datalog through time: fact embeddings and event intensities
//! derived from a temporal deductive database, with likelihood training,
//! sampling and next-event prediction.

pub mod checkpoint;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod fixtures;
pub mod generator;
pub mod likelihood;
pub mod model;
pub mod neural;
pub mod predictor;
pub mod seed;
pub mod stats;
pub mod train;

pub use checkpoint::{parse_checkpoint, Checkpoint};
pub use data::{parse_events, read_dataset, read_sequence, write_dataset, DataError, EventSequence, Token};
pub use error::{NdttError, Result};
pub use generator::{sample_many, SamplerConfig, StopRule};
pub use likelihood::{loglik, Integral, LikelihoodOptions, LogLikReport};
pub use model::{program_hash, Model};
pub use neural::{Cell, CellValue, Frame, ModelState, Node, Session, Snapshot};
pub use train::{train, TrainConfig, TrainOutcome};
pub use ndtt_autodiff as autodiff;
pub use ndtt_logic as logic;
