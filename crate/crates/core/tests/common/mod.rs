#![allow(dead_code)]

use nalgebra::DVector;
use rand::Rng;
use thp_core::channel::{ChannelConfig, ChannelSample, GeometryChannel, SystemDims};
use thp_core::gradients::HybridRateModel;
use thp_core::precoding::{Connectivity, RfStructure, StructureKind, VariableSpace};
use thp_core::rng::{stream_rng, SimRng};

pub struct Instance {
    pub model: HybridRateModel,
    pub sample: ChannelSample,
    pub x: DVector<f64>,
}

pub fn structure_for(kind: StructureKind, dims: &SystemDims) -> RfStructure {
    match kind {
        StructureKind::DpsFull => RfStructure::dps(Connectivity::Full, 3),
        StructureKind::DpsPartial => RfStructure::dps(Connectivity::Partial, 3),
        StructureKind::CodebookFull => RfStructure::dft_codebook(Connectivity::Full, dims),
        StructureKind::CodebookPartial => RfStructure::dft_codebook(Connectivity::Partial, dims),
    }
}

/// Random dims with `K <= S <= 4`, `M <= 16`, and `S | M` for partial structures.
pub fn random_dims(rng: &mut SimRng, kind: StructureKind) -> SystemDims {
    let k = rng.random_range(1..=4);
    let s = rng.random_range(k..=4);
    let m = match kind {
        StructureKind::DpsPartial | StructureKind::CodebookPartial => s * rng.random_range(2..=16 / s),
        _ => rng.random_range(s.max(4)..=16),
    };
    let mut dims = SystemDims::new(m, s, k).unwrap();
    match kind {
        StructureKind::CodebookFull => dims = dims.with_codebook_size(rng.random_range(s..=m)),
        StructureKind::CodebookPartial => dims = dims.with_codebook_size(m / s),
        _ => {}
    }
    dims
}

pub fn random_instance(kind: StructureKind, seed: u64) -> Instance {
    let mut rng = stream_rng(seed, 99);
    let dims = random_dims(&mut rng, kind);
    instance_with_dims(kind, dims, seed)
}

pub fn instance_with_dims(kind: StructureKind, dims: SystemDims, seed: u64) -> Instance {
    let mut rng = stream_rng(seed, 98);
    let structure = structure_for(kind, &dims);
    let space = VariableSpace::new(&structure, &dims, 10.0).unwrap();
    let model = HybridRateModel::new(structure.clone(), dims, &space).unwrap();
    let channel = GeometryChannel::new(&ChannelConfig::new(dims, seed)).unwrap();
    let sample = channel.sample(&mut rng, 0);
    let mut x = Vec::new();
    for _ in 0..space.phi_len {
        x.push(if structure.is_codebook() {
            rng.random_range(0.05..0.95)
        } else {
            rng.random_range(0.0..std::f64::consts::TAU)
        });
    }
    for _ in 0..dims.users {
        x.push(rng.random_range(0.1..2.0));
    }
    x.push(10f64.powf(rng.random_range(-1.3..0.7)));
    Instance {
        model,
        sample,
        x: DVector::from_vec(x),
    }
}
