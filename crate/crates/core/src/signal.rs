//! Downlink ULA signal model: steering vectors, angular dictionaries, a
//! geometry-based clustered channel synthesizer, pilots, noisy measurements
//! and the NMSE score.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{matmul, CMatrix, CVector, C64};

/// Downlink carrier (Hz) and the design frequency that sets the element spacing.
pub const DOWNLINK_FREQ_HZ: f64 = 2.17e9;
pub const DESIGN_FREQ_HZ: f64 = 2.0e9;

/// Element spacing in wavelengths: half a wavelength at 2 GHz, used at 2.17 GHz.
pub const DEFAULT_D_OVER_LAMBDA: f64 = DOWNLINK_FREQ_HZ / (2.0 * DESIGN_FREQ_HZ);

/// NMSE reported for an exact reconstruction.
pub const NMSE_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub num_antennas: usize,
    /// Element spacing divided by the downlink wavelength.
    pub d_over_lambda: f64,
}

impl ArrayGeometry {
    pub fn new(num_antennas: usize, d_over_lambda: f64) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::InvalidParameter("array needs at least one antenna".into()));
        }
        if !(d_over_lambda > 0.0 && d_over_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "antenna spacing must be positive, got {d_over_lambda}"
            )));
        }
        Ok(Self { num_antennas, d_over_lambda })
    }

    /// Half-wavelength spacing at 2 GHz, operated at 2.17 GHz.
    pub fn with_default_spacing(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, DEFAULT_D_OVER_LAMBDA)
    }
}

/// Sampled angles of departure (radians), strictly increasing.
///
/// Each point also carries the width of its cell in the grid it was built
/// from. Refinement moves points but keeps the cell widths, so the step size
/// `cell / 100` stays fixed for the life of an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    theta: Vec<f64>,
    cell: Vec<f64>,
}

impl AngularGrid {
    /// `theta_m = asin(-1 + 2m/M)`, `m = 1..=M`.
    pub fn initial(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        let theta = (1..=m)
            .map(|i| (-1.0 + 2.0 * i as f64 / m as f64).clamp(-1.0, 1.0).asin())
            .collect();
        Self::from_angles(theta)
    }

    pub fn from_angles(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        if theta.iter().any(|t| !t.is_finite() || t.abs() > FRAC_PI_2) {
            return Err(Error::InvalidParameter("grid angles must lie in [-pi/2, pi/2]".into()));
        }
        if theta.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        let cell = local_intervals(&theta);
        Ok(Self { theta, cell })
    }

    pub(crate) fn with_cells(theta: Vec<f64>, cell: Vec<f64>) -> Self {
        debug_assert_eq!(theta.len(), cell.len());
        Self { theta, cell }
    }

    pub fn angles(&self) -> &[f64] {
        &self.theta
    }

    /// Local grid interval per point.
    pub fn cells(&self) -> &[f64] {
        &self.cell
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// `min(theta[m+1] - theta[m], theta[m] - theta[m-1])`, one-sided at the ends.
/// A single-point grid gets the whole angular range.
fn local_intervals(theta: &[f64]) -> Vec<f64> {
    let m = theta.len();
    if m == 1 {
        return vec![PI];
    }
    (0..m)
        .map(|i| {
            let left = if i > 0 { theta[i] - theta[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < m { theta[i + 1] - theta[i] } else { f64::INFINITY };
            left.min(right)
        })
        .collect()
}

#[inline]
fn phase_rate(theta: f64, geom: &ArrayGeometry) -> f64 {
    2.0 * PI * geom.d_over_lambda * theta.sin()
}

/// Element `g` is `exp(-j 2 pi (d/lambda) g sin(theta))`.
pub fn steering_vector(theta: f64, geom: &ArrayGeometry) -> CVector {
    let k = phase_rate(theta, geom);
    CVector::from_fn(geom.num_antennas, |g, _| C64::from_polar(1.0, -k * g as f64))
}

/// Derivative of [`steering_vector`] with respect to `theta`.
pub fn steering_derivative(theta: f64, geom: &ArrayGeometry) -> CVector {
    let k = phase_rate(theta, geom);
    let dk = 2.0 * PI * geom.d_over_lambda * theta.cos();
    CVector::from_fn(geom.num_antennas, |g, _| {
        let gf = g as f64;
        C64::new(0.0, -dk * gf) * C64::from_polar(1.0, -k * gf)
    })
}

/// `A(theta)`: one steering column per grid point (G×M).
pub fn build_dictionary(grid: &AngularGrid, geom: &ArrayGeometry) -> CMatrix {
    let mut a = CMatrix::zeros(geom.num_antennas, grid.len());
    for (m, &t) in grid.angles().iter().enumerate() {
        a.set_column(m, &steering_vector(t, geom));
    }
    a
}

/// Column-wise derivative of the dictionary (G×M).
pub fn dictionary_derivative(grid: &AngularGrid, geom: &ArrayGeometry) -> CMatrix {
    let mut a = CMatrix::zeros(geom.num_antennas, grid.len());
    for (m, &t) in grid.angles().iter().enumerate() {
        a.set_column(m, &steering_derivative(t, geom));
    }
    a
}

/// Circularly symmetric complex Gaussian draw with variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

#[derive(Debug, Clone)]
pub struct GroundTruthChannel {
    pub h: CVector,
    pub scatterer_centers: Vec<f64>,
    /// Row `s` holds the path AoDs of scatterer `s`.
    pub path_aods: Vec<Vec<f64>>,
    pub path_gains: Vec<Vec<C64>>,
}

impl GroundTruthChannel {
    /// Assemble `h = sum_s sum_p gain[s][p] * a(aod[s][p])`.
    pub fn from_paths(
        scatterer_centers: Vec<f64>,
        path_aods: Vec<Vec<f64>>,
        path_gains: Vec<Vec<C64>>,
        geom: &ArrayGeometry,
    ) -> Result<Self> {
        if path_aods.len() != scatterer_centers.len() || path_gains.len() != path_aods.len() {
            return Err(Error::Dimension("one AoD row and one gain row per scatterer".into()));
        }
        let mut h = CVector::zeros(geom.num_antennas);
        for (aods, gains) in path_aods.iter().zip(&path_gains) {
            if aods.len() != gains.len() {
                return Err(Error::Dimension("AoD and gain rows differ in length".into()));
            }
            for (&t, &g) in aods.iter().zip(gains) {
                h.axpy(g, &steering_vector(t, geom), C64::new(1.0, 0.0));
            }
        }
        Ok(Self { h, scatterer_centers, path_aods, path_gains })
    }
}

/// Clustered multipath channel.
///
/// Scatterer centers are uniform in `[-pi/2 + A/2, pi/2 - A/2]`, path AoDs
/// uniform within `A/2` of their center, gains `CN(0, 1/(L_s L_p))` so that
/// `E||h||^2 = G`.
pub fn synthesize_channel<R: Rng + ?Sized>(
    num_scatterers: usize,
    paths_per_scatterer: usize,
    angular_spread: f64,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<GroundTruthChannel> {
    if num_scatterers == 0 || paths_per_scatterer == 0 {
        return Err(Error::InvalidParameter("need at least one scatterer and one path".into()));
    }
    if !(angular_spread > 0.0 && angular_spread < PI) {
        return Err(Error::InvalidParameter(format!(
            "angular spread must lie in (0, pi), got {angular_spread}"
        )));
    }
    let half = 0.5 * angular_spread;
    let gain_var = 1.0 / (num_scatterers * paths_per_scatterer) as f64;
    let mut centers = Vec::with_capacity(num_scatterers);
    let mut aods = Vec::with_capacity(num_scatterers);
    let mut gains = Vec::with_capacity(num_scatterers);
    for _ in 0..num_scatterers {
        let c = rng.random_range((-FRAC_PI_2 + half)..=(FRAC_PI_2 - half));
        let row: Vec<f64> = (0..paths_per_scatterer)
            .map(|_| rng.random_range((c - half)..=(c + half)))
            .collect();
        let g: Vec<C64> = (0..paths_per_scatterer).map(|_| complex_normal(rng, gain_var)).collect();
        centers.push(c);
        aods.push(row);
        gains.push(g);
    }
    GroundTruthChannel::from_paths(centers, aods, gains, geom)
}

#[derive(Debug, Clone)]
pub struct PilotMatrix {
    /// N×G.
    pub x: CMatrix,
}

/// iid `CN(0, 1)` entries rescaled so that `tr(X X^H) = N G`.
pub fn generate_pilots<R: Rng + ?Sized>(n: usize, g: usize, rng: &mut R) -> Result<PilotMatrix> {
    if n == 0 || g == 0 {
        return Err(Error::InvalidParameter("pilot matrix needs N >= 1 and G >= 1".into()));
    }
    let mut x = CMatrix::from_fn(n, g, |_, _| complex_normal(rng, 1.0));
    let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
    x *= C64::new(((n * g) as f64 / energy).sqrt(), 0.0);
    Ok(PilotMatrix { x })
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub y: CVector,
    /// Noise precision used to draw the noise (infinite when noiseless).
    pub true_eta: f64,
}

/// Noise precision for an SNR in dB.
pub fn snr_to_precision(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

/// `y = X h + n`, `n ~ CN(0, eta^-1 I)`, `eta = 10^(snr_db/10)`.
/// `snr_db = +inf` yields a noiseless measurement.
pub fn measure<R: Rng + ?Sized>(
    pilots: &PilotMatrix,
    h: &CVector,
    snr_db: f64,
    rng: &mut R,
) -> Result<Measurement> {
    if pilots.x.ncols() != h.len() {
        return Err(Error::Dimension(format!(
            "pilots have {} columns but channel has {} entries",
            pilots.x.ncols(),
            h.len()
        )));
    }
    let eta = snr_to_precision(snr_db);
    let hm = CMatrix::from_column_slice(h.len(), 1, h.as_slice());
    let mut y = CVector::from_column_slice(matmul(&pilots.x, &hm).as_slice());
    if eta.is_finite() {
        let var = 1.0 / eta;
        for v in y.iter_mut() {
            *v += complex_normal(rng, var);
        }
    }
    Ok(Measurement { y, true_eta: eta })
}

/// `(||h_hat - h||^2, ||h||^2)`; the harness sums these across trials.
pub fn squared_error(h_hat: &CVector, h: &CVector) -> Result<(f64, f64)> {
    if h_hat.len() != h.len() {
        return Err(Error::Dimension("estimate and channel differ in length".into()));
    }
    Ok(((h_hat - h).norm_squared(), h.norm_squared()))
}

/// `10 log10(||h_hat - h||^2 / ||h||^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(h_hat: &CVector, h: &CVector) -> Result<f64> {
    let (num, den) = squared_error(h_hat, h)?;
    ratio_db(num, den)
}

pub fn ratio_db(num: f64, den: f64) -> Result<f64> {
    if den <= 0.0 {
        return Err(Error::ZeroChannel);
    }
    if num <= 0.0 {
        return Ok(NMSE_FLOOR_DB);
    }
    Ok((10.0 * (num / den).log10()).max(NMSE_FLOOR_DB))
}
