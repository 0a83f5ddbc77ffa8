//! RF precoder parameterizations, the RZF baseband precoder, instantaneous rates,
//! and the projections that turn a relaxed solution into a deployable precoder.

mod projection;
mod rzf;
mod structure;
mod variable;

pub use projection::{project_phases, project_selection, project_selection_blocks, smooth_l0};
pub(crate) use rzf::{EffectiveChannel, GainScratch};
pub use rzf::{
    instantaneous_rate, rzf_baseband, rzf_baseband_with, Normalization, PrecoderPair, RateEval,
};
pub use structure::{
    build_rf_precoder, dft_codebook, Codebook, Connectivity, RfMethod, RfStructure, StructureKind,
};
pub use variable::{
    BoxSet, ThpVariable, VariableLayout, VariableSpace, ALPHA_MAX, ALPHA_MIN, PHASE_BOUND,
};

use crate::error::Result;

/// Projects the RF parameter onto its discrete feasible set: phases onto the
/// `B`-bit grid, selection weights onto binary vectors with `S` ones (or one
/// per block for the partially-connected codebook).
pub fn project_rf(
    structure: &RfStructure,
    dims: &crate::channel::SystemDims,
    phi: &[f64],
) -> Result<Vec<f64>> {
    match structure.kind() {
        StructureKind::DpsFull | StructureKind::DpsPartial => {
            Ok(project_phases(phi, structure.phase_bits().unwrap_or(1)))
        }
        StructureKind::CodebookFull => project_selection(phi, dims.rf_chains),
        StructureKind::CodebookPartial => project_selection_blocks(phi, dims.codebook_size),
    }
}

/// Same structure with a different phase resolution; codebook structures are unchanged.
pub fn with_phase_bits(structure: &RfStructure, bits: u32) -> RfStructure {
    let mut s = structure.clone();
    if let RfMethod::Dps { phase_bits } = &mut s.method {
        *phase_bits = bits;
    }
    s
}
