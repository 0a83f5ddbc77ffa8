use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::SystemDims;
use crate::error::{dim_err, Result, ThpError};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Every RF chain reaches every antenna.
    Full,
    /// Block-diagonal: RF chain `s` drives sub-array `s` of `M/S` antennas.
    Partial,
}

/// Codebook matrices. Columns of the default codebooks have entry modulus
/// `1/sqrt(rows)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Codebook {
    /// `C`, `M x N`.
    Full(DMatrix<C64>),
    /// `C_s`, one `(M/S) x N` matrix per RF chain.
    PerBlock(Vec<DMatrix<C64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RfMethod {
    /// Dynamic phase shifters quantized to `phase_bits` bits.
    Dps { phase_bits: u32 },
    /// Columns selected from a fixed codebook.
    Codebook(Codebook),
}

/// The four supported structure/method combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    DpsFull,
    DpsPartial,
    CodebookFull,
    CodebookPartial,
}

impl std::fmt::Display for StructureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StructureKind::DpsFull => "fully-connected DPS",
            StructureKind::DpsPartial => "partially-connected DPS",
            StructureKind::CodebookFull => "fully-connected codebook",
            StructureKind::CodebookPartial => "partially-connected codebook",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfStructure {
    pub connectivity: Connectivity,
    pub method: RfMethod,
}

/// DFT codebook with `columns` array-response columns of entry modulus `1/sqrt(rows)`.
pub fn dft_codebook(rows: usize, columns: usize) -> DMatrix<C64> {
    let scale = 1.0 / (rows as f64).sqrt();
    DMatrix::from_fn(rows, columns, |i, n| {
        C64::from_polar(scale, 2.0 * PI * (i * n) as f64 / columns as f64)
    })
}

impl RfStructure {
    pub fn dps(connectivity: Connectivity, phase_bits: u32) -> Self {
        RfStructure {
            connectivity,
            method: RfMethod::Dps { phase_bits },
        }
    }

    /// Codebook structure with DFT codebooks; partially-connected blocks share one codebook.
    pub fn dft_codebook(connectivity: Connectivity, dims: &SystemDims) -> Self {
        let n = dims.codebook_size;
        let codebook = match connectivity {
            Connectivity::Full => Codebook::Full(dft_codebook(dims.antennas, n)),
            Connectivity::Partial => {
                let block = dft_codebook(dims.subarray_len().max(1), n);
                Codebook::PerBlock(vec![block; dims.rf_chains])
            }
        };
        RfStructure {
            connectivity,
            method: RfMethod::Codebook(codebook),
        }
    }

    pub fn kind(&self) -> StructureKind {
        match (&self.method, self.connectivity) {
            (RfMethod::Dps { .. }, Connectivity::Full) => StructureKind::DpsFull,
            (RfMethod::Dps { .. }, Connectivity::Partial) => StructureKind::DpsPartial,
            (RfMethod::Codebook(_), Connectivity::Full) => StructureKind::CodebookFull,
            (RfMethod::Codebook(_), Connectivity::Partial) => StructureKind::CodebookPartial,
        }
    }

    pub fn phase_bits(&self) -> Option<u32> {
        match self.method {
            RfMethod::Dps { phase_bits } => Some(phase_bits),
            RfMethod::Codebook(_) => None,
        }
    }

    pub fn is_codebook(&self) -> bool {
        matches!(self.method, RfMethod::Codebook(_))
    }

    /// Length of the RF parameter `phi` (`theta` or `d`).
    pub fn phi_len(&self, dims: &SystemDims) -> usize {
        match self.kind() {
            StructureKind::DpsFull => dims.antennas * dims.rf_chains,
            StructureKind::DpsPartial => dims.antennas,
            StructureKind::CodebookFull => dims.codebook_size,
            StructureKind::CodebookPartial => dims.codebook_size * dims.rf_chains,
        }
    }

    /// Column count of the precoder used during optimization. The fully-connected
    /// codebook keeps all `N` weighted columns `C Diag(d)`.
    pub fn effective_columns(&self, dims: &SystemDims) -> usize {
        match self.kind() {
            StructureKind::CodebookFull => dims.codebook_size,
            _ => dims.rf_chains,
        }
    }

    pub fn validate(&self, dims: &SystemDims) -> Result<()> {
        match self.connectivity {
            Connectivity::Full => dims.validate()?,
            Connectivity::Partial => dims.validate_partial()?,
        }
        match &self.method {
            RfMethod::Dps { phase_bits } => {
                if *phase_bits == 0 || *phase_bits > 16 {
                    return Err(ThpError::Config(format!(
                        "phase_bits must be in 1..=16, got {phase_bits}"
                    )));
                }
            }
            RfMethod::Codebook(cb) => {
                let n = dims.codebook_size;
                match (cb, self.connectivity) {
                    (Codebook::Full(c), Connectivity::Full) => {
                        if c.nrows() != dims.antennas || c.ncols() != n {
                            return dim_err(format!(
                                "codebook is {}x{}, expected {}x{}",
                                c.nrows(),
                                c.ncols(),
                                dims.antennas,
                                n
                            ));
                        }
                        if n < dims.rf_chains {
                            return dim_err("codebook needs at least S columns");
                        }
                    }
                    (Codebook::PerBlock(blocks), Connectivity::Partial) => {
                        if blocks.len() != dims.rf_chains {
                            return dim_err(format!(
                                "{} codebook blocks for {} RF chains",
                                blocks.len(),
                                dims.rf_chains
                            ));
                        }
                        let rows = dims.subarray_len();
                        if blocks.iter().any(|b| b.nrows() != rows || b.ncols() != n) {
                            return dim_err(format!("every codebook block must be {rows}x{n}"));
                        }
                    }
                    _ => {
                        return Err(ThpError::Config(
                            "codebook shape does not match the connectivity".into(),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    /// RF precoder in the form used while optimizing (`M x effective_columns`).
    pub fn precoder(&self, phi: &[f64], dims: &SystemDims) -> Result<DMatrix<C64>> {
        let expected = self.phi_len(dims);
        if phi.len() != expected {
            return dim_err(format!(
                "{} expects phi of length {expected}, got {}",
                self.kind(),
                phi.len()
            ));
        }
        let m = dims.antennas;
        let s = dims.rf_chains;
        match &self.method {
            RfMethod::Dps { .. } => match self.connectivity {
                Connectivity::Full => {
                    let scale = 1.0 / (m as f64).sqrt();
                    // theta is read column-major: element j*M + i is theta_{i,j}
                    Ok(DMatrix::from_fn(m, s, |i, j| {
                        C64::from_polar(scale, phi[j * m + i])
                    }))
                }
                Connectivity::Partial => {
                    let block = dims.subarray_len();
                    let scale = 1.0 / (block as f64).sqrt();
                    let mut f = DMatrix::zeros(m, s);
                    for (i, theta) in phi.iter().enumerate() {
                        f[(i, i / block)] = C64::from_polar(scale, *theta);
                    }
                    Ok(f)
                }
            },
            RfMethod::Codebook(cb) => {
                if let Some(bad) = phi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(ThpError::Domain(format!(
                        "selection entries must lie in [0, 1], got {bad}"
                    )));
                }
                match cb {
                    Codebook::Full(c) => {
                        let mut f = c.clone();
                        for (j, mut col) in f.column_iter_mut().enumerate() {
                            col *= C64::new(phi[j], 0.0);
                        }
                        Ok(f)
                    }
                    Codebook::PerBlock(blocks) => {
                        let n = dims.codebook_size;
                        let rows = dims.subarray_len();
                        let mut f = DMatrix::zeros(m, s);
                        for (blk, cs) in blocks.iter().enumerate() {
                            let weights = &phi[blk * n..(blk + 1) * n];
                            for r in 0..rows {
                                let mut acc = C64::new(0.0, 0.0);
                                for (col, w) in weights.iter().enumerate() {
                                    acc += cs[(r, col)] * *w;
                                }
                                f[(blk * rows + r, blk)] = acc;
                            }
                        }
                        Ok(f)
                    }
                }
            }
        }
    }
}

/// Builds the physical RF precoder `F`.
///
/// For the fully-connected codebook a binary `d` selects its active columns,
/// giving an `M x S` matrix; a fractional `d` keeps the weighted `M x N` form.
pub fn build_rf_precoder(
    phi: &[f64],
    structure: &RfStructure,
    dims: &SystemDims,
) -> Result<DMatrix<C64>> {
    let f = structure.precoder(phi, dims)?;
    if structure.kind() == StructureKind::CodebookFull && phi.iter().all(|d| *d == 0.0 || *d == 1.0)
    {
        let active: Vec<usize> = (0..phi.len()).filter(|j| phi[*j] == 1.0).collect();
        return Ok(f.select_columns(active.iter()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_phases_give_flat_precoder() {
        let dims = SystemDims::new(4, 2, 2).unwrap();
        let st = RfStructure::dps(Connectivity::Full, 3);
        let f = build_rf_precoder(&[0.0; 8], &st, &dims).unwrap();
        assert!(f.iter().all(|z| (*z - C64::new(0.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn binary_selection_picks_codebook_columns() {
        let dims = SystemDims::new(4, 2, 2).unwrap().with_codebook_size(4);
        let st = RfStructure::dft_codebook(Connectivity::Full, &dims);
        let f = build_rf_precoder(&[1.0, 0.0, 1.0, 0.0], &st, &dims).unwrap();
        let RfMethod::Codebook(Codebook::Full(c)) = &st.method else {
            unreachable!()
        };
        assert_eq!(f.ncols(), 2);
        assert_eq!(f.column(0), c.column(0));
        assert_eq!(f.column(1), c.column(2));
    }

    #[test]
    fn dps_columns_have_unit_norm() {
        let dims = SystemDims::new(8, 3, 2).unwrap();
        let st = RfStructure::dps(Connectivity::Full, 3);
        let phi: Vec<f64> = (0..24).map(|i| 0.37 * i as f64 - 1.1).collect();
        let f = build_rf_precoder(&phi, &st, &dims).unwrap();
        for col in f.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-14);
        }
        let scale = 1.0 / 8f64.sqrt();
        assert!(f.iter().all(|z| (z.norm() - scale).abs() < 1e-15));
        // column-major theta layout
        assert!((f[(2, 1)].arg() - phi[8 + 2]).abs() < 1e-12);
    }

    #[test]
    fn partial_dps_is_block_diagonal() {
        let dims = SystemDims::new(8, 2, 2).unwrap();
        let st = RfStructure::dps(Connectivity::Partial, 2);
        let f = build_rf_precoder(&[0.3; 8], &st, &dims).unwrap();
        for i in 0..8 {
            for j in 0..2 {
                let on_block = i / 4 == j;
                let expected = if on_block { 0.5 } else { 0.0 };
                assert!((f[(i, j)].norm() - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn length_and_domain_errors() {
        let dims = SystemDims::new(4, 2, 2).unwrap().with_codebook_size(4);
        let dps = RfStructure::dps(Connectivity::Full, 3);
        assert!(matches!(
            build_rf_precoder(&[0.0; 7], &dps, &dims),
            Err(ThpError::Dimension(_))
        ));
        let cb = RfStructure::dft_codebook(Connectivity::Full, &dims);
        assert!(matches!(
            build_rf_precoder(&[1.2, 0.0, 0.0, 0.0], &cb, &dims),
            Err(ThpError::Domain(_))
        ));
    }

    #[test]
    fn dft_codebook_columns_are_array_responses() {
        let c = dft_codebook(8, 8);
        for col in c.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-14);
        }
        // distinct DFT columns are orthogonal
        let g = c.adjoint() * &c;
        assert!((g[(0, 3)]).norm() < 1e-12);
    }
}
