//! Large-scale fading: path loss, correlated log-normal shadowing and the
//! per-link spatial covariance matrices.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, CMatrix};
use crate::topology::{wrap_distance, Point2D, Topology};
use crate::{db_to_linear, Error, Result};

/// Which path-loss law to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// COST-Hata derived three-slope model on horizontal distance.
    ThreeSlope,
    /// 3GPP urban microcell law on 3-D distance.
    UrbanMicro,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "three-slope" | "three_slope" | "threeslope" => Ok(ModelKind::ThreeSlope),
            "umi" | "urban-micro" | "urban_micro" | "urbanmicro" => Ok(ModelKind::UrbanMicro),
            other => Err(Error::config(format!(
                "unknown propagation model '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::ThreeSlope => "three-slope",
            ModelKind::UrbanMicro => "umi",
        })
    }
}

/// Path-loss law plus its shadowing statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargeScaleModel {
    pub kind: ModelKind,
    /// Shadowing standard deviation in dB.
    pub shadow_std_db: f64,
    /// Distance at which shadowing correlation halves, in meters.
    pub decorrelation_m: f64,
}

impl LargeScaleModel {
    pub const fn three_slope() -> Self {
        Self {
            kind: ModelKind::ThreeSlope,
            shadow_std_db: 8.0,
            decorrelation_m: 100.0,
        }
    }

    pub const fn urban_micro() -> Self {
        Self {
            kind: ModelKind::UrbanMicro,
            shadow_std_db: 4.0,
            decorrelation_m: 9.0,
        }
    }

    pub const fn of_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::ThreeSlope => Self::three_slope(),
            ModelKind::UrbanMicro => Self::urban_micro(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shadow_std_db >= 0.0) {
            return Err(Error::config(format!(
                "shadow std must be >= 0, got {}",
                self.shadow_std_db
            )));
        }
        if !(self.decorrelation_m > 0.0) {
            return Err(Error::config(format!(
                "decorrelation distance must be > 0, got {}",
                self.decorrelation_m
            )));
        }
        Ok(())
    }

    /// Correlation 2^(-d / decorrelation) between two shadowing sites.
    pub fn site_correlation(&self, distance: f64) -> f64 {
        (-distance / self.decorrelation_m).exp2()
    }
}

/// Three-slope path loss in dB for horizontal distance `d` in meters.
pub fn pathloss_three_slope(d: f64) -> f64 {
    const D0: f64 = 10.0;
    const D1: f64 = 50.0;
    if d < D0 {
        -81.2
    } else if d < D1 {
        -61.2 - 20.0 * d.log10()
    } else {
        -35.7 - 35.0 * d.log10()
    }
}

/// Urban microcell path loss in dB for 3-D distance `d3` in meters.
pub fn pathloss_umi(d3: f64) -> f64 {
    -30.5 - 36.7 * d3.log10()
}

fn correlation_matrix(points: &[Point2D], side: f64, model: &LargeScaleModel) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            model.site_correlation(wrap_distance(points[i], points[j], side))
        }
    })
}

fn correlated_field<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> nalgebra::DVector<f64> {
    let z = nalgebra::DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

/// Draws the L x U shadowing field in dB.
///
/// Three-slope: `F_lu = std/sqrt(2) (a_l + b_u)` with AP field `a` and user
/// field `b`, which gives `E{F_lu F_ji} = std^2/2 (2^(-d_ui/dc) + 2^(-d_lj/dc))`.
/// Urban microcell: each AP has an independent user-correlated field, so
/// `E{F_lu F_ji} = std^2 2^(-d_ui/dc)` for `l == j` and zero otherwise.
pub fn sample_shadowing<R: Rng + ?Sized>(
    topo: &Topology,
    model: &LargeScaleModel,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    model.validate()?;
    let l_count = topo.num_aps();
    let u_count = topo.num_ues();
    let ue_factor =
        linalg::real_psd_factor(&correlation_matrix(&topo.ue_positions, topo.side, model))?;
    match model.kind {
        ModelKind::ThreeSlope => {
            let ap_factor =
                linalg::real_psd_factor(&correlation_matrix(&topo.ap_positions, topo.side, model))?;
            let a = correlated_field(&ap_factor, rng);
            let b = correlated_field(&ue_factor, rng);
            let scale = model.shadow_std_db / std::f64::consts::SQRT_2;
            Ok(DMatrix::from_fn(l_count, u_count, |l, u| {
                scale * (a[l] + b[u])
            }))
        }
        ModelKind::UrbanMicro => {
            let mut f = DMatrix::zeros(l_count, u_count);
            for l in 0..l_count {
                let row = correlated_field(&ue_factor, rng);
                for u in 0..u_count {
                    f[(l, u)] = model.shadow_std_db * row[u];
                }
            }
            Ok(f)
        }
    }
}

/// Spatial covariance of every link.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialCovariance {
    /// `B_lu = beta_lu I_M`.
    Uncorrelated,
    /// Arbitrary Hermitian PSD `B_lu`, stored row-major by `l * U + u`.
    General(Vec<CMatrix>),
}

/// Large-scale statistics for all L x U links.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    /// Linear gains, L x U.
    pub beta: DMatrix<f64>,
    pub antennas: usize,
    pub covariance: SpatialCovariance,
}

impl LargeScale {
    /// Uncorrelated fading with the given gains.
    pub fn uncorrelated(beta: DMatrix<f64>, antennas: usize) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::config("need at least one antenna per AP"));
        }
        if beta.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::config(
                "large-scale gains must be finite and non-negative",
            ));
        }
        Ok(Self {
            beta,
            antennas,
            covariance: SpatialCovariance::Uncorrelated,
        })
    }

    /// Externally supplied covariances, `covariances[l * num_ues + u]`.
    /// The gains are derived as `tr(B_lu) / M`.
    pub fn with_covariances(
        num_aps: usize,
        num_ues: usize,
        covariances: Vec<CMatrix>,
    ) -> Result<Self> {
        if covariances.len() != num_aps * num_ues || covariances.is_empty() {
            return Err(Error::config(format!(
                "expected {} covariance matrices, got {}",
                num_aps * num_ues,
                covariances.len()
            )));
        }
        let antennas = covariances[0].nrows();
        for (k, b) in covariances.iter().enumerate() {
            if b.nrows() != antennas || b.ncols() != antennas {
                return Err(Error::config(format!(
                    "covariance {k} is not {antennas}x{antennas}"
                )));
            }
            if !linalg::is_hermitian_psd(b, 1e-9) {
                return Err(Error::Numerical(format!(
                    "covariance of link (l={}, u={}) is not Hermitian PSD",
                    k / num_ues,
                    k % num_ues
                )));
            }
        }
        let beta = DMatrix::from_fn(num_aps, num_ues, |l, u| {
            linalg::real_trace(&covariances[l * num_ues + u]) / antennas as f64
        });
        Ok(Self {
            beta,
            antennas,
            covariance: SpatialCovariance::General(covariances),
        })
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_ues(&self) -> usize {
        self.beta.ncols()
    }

    pub fn is_uncorrelated(&self) -> bool {
        matches!(self.covariance, SpatialCovariance::Uncorrelated)
    }

    /// `B_lu` as a dense matrix.
    pub fn covariance(&self, l: usize, u: usize) -> CMatrix {
        match &self.covariance {
            SpatialCovariance::Uncorrelated => {
                linalg::scaled_identity(self.antennas, self.beta[(l, u)])
            }
            SpatialCovariance::General(all) => all[l * self.num_ues() + u].clone(),
        }
    }
}

/// Combines path loss and shadowing into linear gains with `B_lu = beta_lu I_M`.
///
/// For the three-slope model shadowing only applies beyond 50 m; the urban
/// microcell law always adds it.
pub fn large_scale_gains(
    topo: &Topology,
    model: &LargeScaleModel,
    shadowing_db: &DMatrix<f64>,
    antennas: usize,
) -> Result<LargeScale> {
    let (l_count, u_count) = (topo.num_aps(), topo.num_ues());
    if shadowing_db.shape() != (l_count, u_count) {
        return Err(Error::config(format!(
            "shadowing is {:?}, topology needs ({l_count}, {u_count})",
            shadowing_db.shape()
        )));
    }
    let beta = DMatrix::from_fn(l_count, u_count, |l, u| {
        let db = match model.kind {
            ModelKind::ThreeSlope => {
                let d = topo.ap_ue_horizontal(l, u);
                let f = if d >= 50.0 { shadowing_db[(l, u)] } else { 0.0 };
                pathloss_three_slope(d) + f
            }
            ModelKind::UrbanMicro => pathloss_umi(topo.ap_ue_distance(l, u)) + shadowing_db[(l, u)],
        };
        db_to_linear(db)
    });
    LargeScale::uncorrelated(beta, antennas)
}
