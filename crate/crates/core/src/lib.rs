//! Slice-conditioned generative modelling of 3D porous media.
//!
//! The crate has two halves. The analysis half works on binary voxel
//! volumes: porosity, cubical-complex cell counts and the four Minkowski
//! functionals, two-point correlation, representative elementary volume and
//! box-plot population comparison. The modelling half is a small
//! reverse-mode autodiff engine ([`tensor`]) and the slice-to-pores GAN built
//! on it ([`spgan`]): an encoder compresses a 2D slice, a 3D generator turns
//! noise plus the slice code into a volume, and a 3D discriminator scores
//! realness.

pub mod correlation;
pub mod error;
pub mod io;
pub mod morphology;
pub mod spgan;
pub mod stats;
pub mod synthdata;
pub mod tensor;
pub mod volume;

pub use correlation::{two_point_correlation, Estimator, TpcCurve};
pub use error::{Error, Result};
pub use morphology::{
    count_cells, determine_rev, minkowski, porosity, rev_curve, CellCounts, MinkowskiReport,
    MorphologyReport, RevCurve, RevParams,
};
pub use spgan::{NoisePrior, SpganConfig, SpganModel, TrainLog, TrainRecord};
pub use stats::{box_plot, compare_populations, BoxPlotStats, ComparisonReport, Metric};
pub use synthdata::{bernoulli_volume, gaussian_field_volume, FieldSpec};
pub use tensor::{Graph, Parameter, Tensor, Var};
pub use volume::{Phase, Slice2D, VolumeHeader, VoxelVolume};
