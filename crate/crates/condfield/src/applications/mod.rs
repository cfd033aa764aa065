//! Worked applications of the conditioning machinery: the high local
//! maximum of a scalar field and the large local helicity of an
//! incompressible turbulence flow.

pub mod helicity;
pub mod local_max;
