//! Confinement factors, mode volumes and cross-section conversions.
//!
//! Field grids are axisymmetric (r, z) samples with a volume weight per node,
//! typically exported from a mode solver. All integrals are plain weighted sums
//! over the nodes in storage order, so results are bit-reproducible for a given
//! grid.

use alloc::format;
use alloc::vec::Vec;

use crate::cavity::CavityMode;
use crate::linalg::compensated_sum;
use crate::units::SPEED_OF_LIGHT;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridNode {
    pub r: f64,
    pub z: f64,
    /// Volume weight 2πr·Δr·Δz, m³.
    pub weight: f64,
    /// |E_IR|², arbitrary common scale.
    pub e2_ir: f64,
    /// |E_NV|² of the collection mode, arbitrary common scale.
    pub e2_nv: f64,
    /// Dielectric constant, F/m.
    pub eps: f64,
    /// Inside the green excitation spot.
    pub in_excitation: bool,
    /// Optional |E_532|²; when every node carries it, it replaces the
    /// excitation indicator as a weight.
    pub e2_green: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldGrid {
    pub nodes: Vec<GridNode>,
}

impl FieldGrid {
    pub fn new(nodes: Vec<GridNode>) -> Result<Self> {
        let grid = FieldGrid { nodes };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("field grid has no nodes"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let values = [n.r, n.z, n.weight, n.e2_ir, n.e2_nv, n.eps];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("node {i}: non-finite entry")));
            }
            if n.weight < 0.0 || n.e2_ir < 0.0 || n.e2_nv < 0.0 || n.eps < 0.0 || n.r < 0.0 {
                return Err(Error::invalid(format!("node {i}: negative weight, intensity or radius")));
            }
            if let Some(g) = n.e2_green {
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(Error::invalid(format!("node {i}: invalid e2_green {g}")));
                }
            }
        }
        let with_green = self.nodes.iter().filter(|n| n.e2_green.is_some()).count();
        if with_green != 0 && with_green != self.nodes.len() {
            return Err(Error::invalid("e2_green must be given for all nodes or none"));
        }
        if !self.nodes.iter().any(|n| n.e2_ir > 0.0) {
            return Err(Error::DegenerateField("|E_IR|² vanishes on every node".into()));
        }
        if !self.has_green_weights() && !self.nodes.iter().any(|n| n.in_excitation && n.e2_nv > 0.0) {
            return Err(Error::DegenerateRegion(
                "no excitation node with nonzero collection-mode intensity".into(),
            ));
        }
        Ok(())
    }

    pub fn has_green_weights(&self) -> bool {
        self.nodes.first().is_some_and(|n| n.e2_green.is_some())
    }

    pub fn max_e2_ir(&self) -> f64 {
        self.nodes.iter().map(|n| n.e2_ir).fold(0.0, f64::max)
    }
}

/// V_o = Σ ε|E|²·w / max(ε|E|²), using the IR field.
pub fn mode_volume(grid: &FieldGrid) -> Result<f64> {
    let peak = grid.nodes.iter().map(|n| n.eps * n.e2_ir).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::DegenerateField("ε|E|² vanishes on every node".into()));
    }
    Ok(compensated_sum(grid.nodes.iter().map(|n| n.eps * n.e2_ir * n.weight)) / peak)
}

/// Γ⁽ᵖ⁾: the collection-mode-weighted mean of f^p over the excitation
/// region, with f = |E_IR|² / max|E_IR|² and the maximum taken over the whole
/// grid.
pub fn confinement_factor(grid: &FieldGrid, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::domain("photon order must be at least 1"));
    }
    let peak = grid.max_e2_ir();
    if !(peak > 0.0) {
        return Err(Error::DegenerateField("|E_IR|² vanishes on every node".into()));
    }
    let green = grid.has_green_weights();
    let weight = |n: &GridNode| -> f64 {
        match (green, n.e2_green) {
            (true, Some(g)) => g * n.e2_nv * n.weight,
            _ if n.in_excitation => n.e2_nv * n.weight,
            _ => 0.0,
        }
    };
    let den = compensated_sum(grid.nodes.iter().map(weight));
    if !(den > 0.0) {
        return Err(Error::DegenerateRegion("excitation region carries no weight".into()));
    }
    let num = compensated_sum(grid.nodes.iter().map(|n| {
        let f = (n.e2_ir / peak).min(1.0);
        f.powi(p as i32) * weight(n)
    }));
    Ok((num / den).clamp(0.0, 1.0))
}

/// A p-photon absorption cross section, m^(2p)·s^(p−1).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossSection {
    pub order: u32,
    pub value: f64,
}

impl CrossSection {
    pub fn new(order: u32, value: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::domain("cross-section order must be at least 1"));
        }
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::domain(format!("cross section must be positive, got {value}")));
        }
        Ok(CrossSection { order, value })
    }

    /// SI unit string for this order.
    pub fn unit(&self) -> &'static str {
        match self.order {
            1 => "m^2",
            2 => "m^4 s",
            3 => "m^6 s^2",
            _ => "m^(2p) s^(p-1)",
        }
    }
}

/// Photon flux density per intracavity photon, (c/n_g)/V_o, in m⁻²·s⁻¹.
fn flux_per_photon(mode: &CavityMode) -> f64 {
    SPEED_OF_LIGHT / mode.group_index / mode.mode_volume
}

/// ⟨K⁽ᵖ⁾⟩ = σ⁽ᵖ⁾·((c/n_g)·N/V_o)^p·Γ⁽ᵖ⁾, in Hz.
///
/// Expects N ≥ 0 and Γ⁽ᵖ⁾ ∈ [0, 1].
pub fn rate_from_cross_section(sigma: CrossSection, n_photons: f64, mode: &CavityMode, gamma_p: f64) -> f64 {
    sigma.value * (flux_per_photon(mode) * n_photons).powi(sigma.order as i32) * gamma_p
}

/// Inverts [`rate_from_cross_section`] for a per-photon^p rate coefficient.
pub fn cross_section_from_rate(k_coeff: f64, p: u32, mode: &CavityMode, gamma_p: f64) -> Result<CrossSection> {
    if !(gamma_p > 0.0) {
        return Err(Error::DivisionDegenerate(format!(
            "confinement factor must be positive, got {gamma_p}"
        )));
    }
    if gamma_p > 1.0 {
        return Err(Error::domain(format!("confinement factor {gamma_p} exceeds 1")));
    }
    if !(k_coeff > 0.0) || !k_coeff.is_finite() {
        return Err(Error::domain(format!("rate coefficient must be positive, got {k_coeff}")));
    }
    mode.validate()?;
    CrossSection::new(p, k_coeff / (flux_per_photon(mode).powi(p as i32) * gamma_p))
}

/// Median of a set of confinement factors (mean of the middle two for an
/// even count).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("median needs at least one finite value"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Axisymmetric Gaussian ring exp(−(r−r₀)²/2σ_r² − (z−z₀)²/2σ_z²).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianRing {
    pub r0: f64,
    pub z0: f64,
    pub sigma_r: f64,
    pub sigma_z: f64,
}

impl GaussianRing {
    pub fn eval(&self, r: f64, z: f64) -> f64 {
        let a = (r - self.r0) / self.sigma_r;
        let b = (z - self.z0) / self.sigma_z;
        (-0.5 * (a * a + b * b)).exp()
    }
}

/// Analytic test grid: a Gaussian-ring IR mode and NV collection mode in a
/// rectangular (r, z) window, with a cylindrical excitation spot.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RingGridSpec {
    pub r_min: f64,
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Coarse cell edge length, m.
    pub cell: f64,
    pub ir: GaussianRing,
    pub nv: GaussianRing,
    /// Excitation cylinder as (r_lo, r_hi, z_lo, z_hi).
    pub excitation: [f64; 4],
    /// Dielectric constant everywhere on the grid.
    pub eps: f64,
}

impl RingGridSpec {
    fn snap_edge(&self, x: f64, origin: f64) -> f64 {
        origin + ((x - origin) / self.cell).round() * self.cell
    }

    fn snap_center(&self, x: f64, origin: f64) -> f64 {
        origin + (((x - origin) / self.cell - 0.5).round() + 0.5) * self.cell
    }

    /// Builds the grid with each coarse cell split `refine`×`refine`.
    ///
    /// The window and the excitation boundaries snap to coarse cell edges
    /// and the IR peak snaps to a coarse cell center, so grids built at
    /// different refinements sample the same fields over the same regions.
    pub fn build(&self, refine: usize) -> Result<FieldGrid> {
        if !(self.cell > 0.0) || refine == 0 {
            return Err(Error::domain("cell size and refinement must be positive"));
        }
        if !(self.r_min >= 0.0) || !(self.r_max > self.r_min) || !(self.z_max > self.z_min) {
            return Err(Error::domain("grid window must satisfy 0 <= r_min < r_max and z_min < z_max"));
        }
        let nr = ((self.r_max - self.r_min) / self.cell).round().max(1.0) as usize * refine;
        let nz = ((self.z_max - self.z_min) / self.cell).round().max(1.0) as usize * refine;
        let h = self.cell / refine as f64;
        let ir = GaussianRing {
            r0: self.snap_center(self.ir.r0, self.r_min),
            z0: self.snap_center(self.ir.z0, self.z_min),
            ..self.ir
        };
        let [er0, er1, ez0, ez1] = self.excitation;
        let ex = [
            self.snap_edge(er0, self.r_min),
            self.snap_edge(er1, self.r_min),
            self.snap_edge(ez0, self.z_min),
            self.snap_edge(ez1, self.z_min),
        ];
        let mut nodes = Vec::with_capacity(nr * nz);
        for i in 0..nr {
            let r = self.r_min + (i as f64 + 0.5) * h;
            let weight = core::f64::consts::TAU * r * h * h;
            for j in 0..nz {
                let z = self.z_min + (j as f64 + 0.5) * h;
                nodes.push(GridNode {
                    r,
                    z,
                    weight,
                    e2_ir: ir.eval(r, z),
                    e2_nv: self.nv.eval(r, z),
                    eps: self.eps,
                    in_excitation: r > ex[0] && r < ex[1] && z > ex[2] && z < ex[3],
                    e2_green: None,
                });
            }
        }
        FieldGrid::new(nodes)
    }
}
