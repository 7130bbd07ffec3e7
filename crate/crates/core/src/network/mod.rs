//! Ingestion and validation of parameter packs and reaction networks.
//!
//! Network topology and the parameter tables are data, not code: the canonical
//! Golgi and NSD networks ship as versioned JSON files curated from the model
//! lineage, and packs carry every kinetic parameter in log-space together with
//! the fixed constants that the equations need.

mod net;
mod pack;

pub use net::{
    GlycoformGroups, GolgiNetwork, GolgiReaction, KineticClass, NsdNetwork, NsdRate,
    ValidationReport,
};
pub use pack::{
    load_parameter_pack, sha256_file, Constants, EnzymeConstants, NaturalVector, NsdSinkConstants,
    ParamBlock, ParameterPack, PriorCovariance, CELLCULTURE_PARAMS, GOLGI_PARAMS, NSD_PARAMS,
};
