//! EATFormer-style vision backbone built on `eatkit-tensor`: Multi-Scale
//! Region Aggregation, Global/Local Interaction with modulated deformable
//! attention, feed-forward blocks, four hierarchical stages and a
//! task-token classification head.

pub mod attention;
pub mod backbone;
pub mod block;
pub mod config;
mod error;
pub mod ffn;
pub mod gli;
pub mod layers;
pub mod model;
pub mod msra;
pub mod trh;
pub mod wom;

pub use attention::MdMsa;
pub use backbone::Backbone;
pub use block::EatBlock;
pub use config::{ModelConfig, StageGeometry, ValidatedConfig};
pub use error::{ModelError, Result};
pub use ffn::Ffn;
pub use gli::Gli;
pub use layers::{Init, Initializer};
pub use model::{predict_labels, Model};
pub use msra::{Msra, MsraConfig};
pub use trh::TaskHead;
pub use wom::{gli_param_count, WomMixer};
