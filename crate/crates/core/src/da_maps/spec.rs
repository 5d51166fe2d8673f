//! Serializable description of a map. A `MapSpec` determines a `MapModel` bit-exactly.

use serde::{Deserialize, Serialize};

use crate::profiles::CutoffKind;
use crate::torus_linear::Bundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    /// A hyperbolic automorphism of 𝕋ⁿ.
    Torus { matrix: Vec<Vec<i64>>, weak_band: [f64; 2] },
    /// A diagonal model on ℝⁿ; `bundles[i]` is the role of coordinate `i`.
    Euclidean { diagonal: Vec<f64>, bundles: Vec<Bundle> },
}

/// Radial blend of the contracting-center construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendSpec {
    pub kind: CutoffKind,
    /// Inner radius as a fraction of δ (the outer radius is δ itself).
    pub inner_ratio: f64,
}

impl Default for BlendSpec {
    fn default() -> Self {
        BlendSpec { kind: CutoffKind::Logarithmic, inner_ratio: 1e-6 }
    }
}

/// Profiles of a planar mixing, both of support ε in r units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlanarProfile {
    /// Trapezoids with `2ρ + l < r₁ < ε`. sup ψ(t)·t equals the mass, so the
    /// resulting map folds once `1 − λ` is large compared with λ; use it on
    /// Euclidean models, where only the cone geometry matters.
    Trapezoid { rho: f64, l: f64, r1: f64 },
    /// Plateau profiles with a common plateau, scaled to masses `1 − λ` and
    /// `μ − 1`. The contracting slope `sup |β₁′|t` defaults to λ/5, which keeps
    /// the map a diffeomorphism (any value below λ/4 does).
    Smooth {
        #[serde(default)]
        contracting_slope: Option<f64>,
    },
}

/// A local construction centered at a fixed point, acting in eigen-coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstructionSpec {
    /// Planar mixing on a 2-dimensional center ws ⊕ wu: trapezoid profiles with
    /// parameters (ρ, l), validated against 2ρ + l < r₁ < ε (all in r = ‖·‖² units).
    PlanarMix {
        #[serde(default)]
        label: Option<String>,
        point: Vec<f64>,
        eps: f64,
        profile: PlanarProfile,
        /// Cutoff radius δ_w (in w = squared strong-coordinate norm); defaults to ε.
        #[serde(default)]
        strong_cutoff: Option<f64>,
    },
    /// Flattens the listed weak factors to Df|factor = Id at the point: plateau
    /// profile with support ε and plateau δ, blended radially to (1 ∓ r)x.
    Flatten {
        #[serde(default)]
        label: Option<String>,
        point: Vec<f64>,
        factors: Vec<Bundle>,
        /// Common target rate per factor; defaults to the factor's extreme eigenvalue.
        #[serde(default)]
        lambda: Option<f64>,
        eps: f64,
        delta: f64,
        #[serde(default)]
        blend: BlendSpec,
        #[serde(default)]
        strong_cutoff: Option<f64>,
    },
}

impl ConstructionSpec {
    pub fn point(&self) -> &[f64] {
        match self {
            ConstructionSpec::PlanarMix { point, .. } | ConstructionSpec::Flatten { point, .. } => point,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            ConstructionSpec::PlanarMix { label, .. } | ConstructionSpec::Flatten { label, .. } => label.as_deref(),
        }
    }
}

/// Basis in which a surgery's target matrix is written.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixFrame {
    #[default]
    Standard,
    /// Eigen-coordinates of the linear part (ss, ws, wu, uu order).
    Eigen,
}

/// A Franks-type surgery: near `point` the map becomes `f(p) + B(x − p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgerySpec {
    #[serde(default)]
    pub label: Option<String>,
    pub point: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub frame: MatrixFrame,
    /// Outer radius of the blend (Euclidean distance, standard coordinates).
    pub radius: f64,
    /// Declared C¹ size; defaults to ‖B − Df_p‖₂.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_surgery_blend")]
    pub blend: CutoffKind,
    /// Inner blend radius as a fraction of `radius`.
    #[serde(default = "default_surgery_inner")]
    pub inner_ratio: f64,
}

fn default_surgery_blend() -> CutoffKind {
    CutoffKind::Logarithmic
}

fn default_surgery_inner() -> f64 {
    (-30.0f64).exp()
}

/// Additive bump `a·(1 − s²/R²)²` for `s = ‖x − c‖ < R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSpec {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: Vec<f64>,
}

/// Full map description: linear part, then local constructions, then surgeries
/// (applied in order on top of everything before them), then bumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub domain: DomainSpec,
    #[serde(default)]
    pub constructions: Vec<ConstructionSpec>,
    #[serde(default)]
    pub surgeries: Vec<SurgerySpec>,
    #[serde(default)]
    pub bumps: Vec<BumpSpec>,
    /// Integer translation added to the lift (choice of lift f̃).
    #[serde(default)]
    pub lift_shift: Vec<i64>,
}

impl MapSpec {
    pub fn linear_torus(matrix: Vec<Vec<i64>>, weak_band: [f64; 2]) -> Self {
        MapSpec {
            domain: DomainSpec::Torus { matrix, weak_band },
            constructions: vec![],
            surgeries: vec![],
            bumps: vec![],
            lift_shift: vec![],
        }
    }
}
