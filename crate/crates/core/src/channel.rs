//! User topology, link budget, Rayleigh block fading and the received signal `Y = C X + Z`.

use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::scalar::{Cx, Real};

/// Cell radius in km; distances are uniform on `(0, CELL_RADIUS_KM]`.
pub const CELL_RADIUS_KM: f64 = 0.5;

/// Uplink path loss in dB at distance `d_km`.
pub fn path_loss_db(d_km: f64) -> f64 {
    -128.1 - 37.6 * d_km.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Users, their distances and large-scale gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T: Real> {
    pub total_users: usize,
    /// Sorted ids of the active users.
    pub active: Vec<usize>,
    pub distance_km: Vec<T>,
    /// Linear large-scale gain per user.
    pub gain: Vec<T>,
}

impl<T: Real> Topology<T> {
    /// Gains of the active users in `active` order.
    pub fn active_gains(&self) -> Vec<T> {
        self.active.iter().map(|&k| self.gain[k]).collect()
    }
}

pub fn draw_topology<T: Real>(total_users: usize, active: usize, seed: u64) -> Result<Topology<T>> {
    if active > total_users {
        return Err(Error::TooManyActive { active, total: total_users });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distance: Vec<f64> = (0..total_users)
        .map(|_| CELL_RADIUS_KM * (1.0 - rng.gen::<f64>()))
        .collect();
    let mut set = index::sample(&mut rng, total_users, active).into_vec();
    set.sort_unstable();
    Ok(Topology {
        total_users,
        active: set,
        gain: distance.iter().map(|&d| T::of(db_to_linear(path_loss_db(d)))).collect(),
        distance_km: distance.into_iter().map(T::of).collect(),
    })
}

/// Noise power, per-symbol transmit power and the effective noise variance `N0/(n0 P_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget<T: Real> {
    pub noise_power: T,
    pub tx_power: T,
    pub sigma2: T,
}

impl<T: Real> LinkBudget<T> {
    pub fn new(noise_power: T, tx_power: T, n0: usize) -> Result<Self> {
        let sigma2 = noise_power / (T::of_usize(n0) * tx_power);
        if !(sigma2 > T::zero()) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise variance {sigma2} from N0 = {noise_power}, P_t = {tx_power}"
            )));
        }
        Ok(Self { noise_power, tx_power, sigma2 })
    }

    /// Receive SNR of a user with large-scale gain `gain`.
    pub fn snr(&self, gain: T) -> T {
        self.tx_power * gain / self.noise_power
    }
}

/// Chooses `P_t` so the weakest active user sees `target_snr_db`.
pub fn calibrate_power<T: Real>(
    topology: &Topology<T>,
    noise_power: T,
    target_snr_db: f64,
    n0: usize,
) -> Result<LinkBudget<T>> {
    let worst = topology
        .active_gains()
        .into_iter()
        .fold(None, |acc: Option<T>, g| Some(acc.map_or(g, |a| a.min(g))))
        .ok_or(Error::NoActiveUsers)?;
    let tx = noise_power * T::of(db_to_linear(target_snr_db)) / worst;
    LinkBudget::new(noise_power, tx, n0)
}

fn complex_normal<T: Real, R: Rng>(rng: &mut R, variance: T) -> Cx<T> {
    let s = (variance / T::of(2.0)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Cx::new(T::of(re) * s, T::of(im) * s)
}

/// Independent Rayleigh channels `H_l` (`K_a x M`) for each of `blocks` sub-slots.
pub fn draw_channels<T: Real>(topology: &Topology<T>, antennas: usize, blocks: usize, seed: u64) -> Vec<Array2<Cx<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = topology.active_gains();
    (0..blocks)
        .map(|_| Array2::from_shape_fn((gains.len(), antennas), |(k, _)| complex_normal(&mut rng, gains[k])))
        .collect()
}

/// Row-sparse state matrix `X` (`2^J x M`): row `i-1` holds the sum of channels of the users
/// that chose codeword `i`.
pub fn state_matrix<T: Real>(size: usize, indices: &[usize], channels: &Array2<Cx<T>>) -> Result<Array2<Cx<T>>> {
    if indices.len() != channels.nrows() {
        return Err(Error::InvalidDimensions(format!(
            "{} indices for {} channel rows",
            indices.len(),
            channels.nrows()
        )));
    }
    let mut x = Array2::zeros((size, channels.ncols()));
    for (k, &i) in indices.iter().enumerate() {
        if i == 0 || i > size {
            return Err(Error::IndexOutOfRange { index: i, max: size });
        }
        x.row_mut(i - 1).zip_mut_with(&channels.row(k), |a, &b| *a = *a + b);
    }
    Ok(x)
}

/// Received sub-slot signal `Y = sum_k c_{i_k} h_k^T + Z` with `Z ~ CN(0, sigma2)`.
pub fn transmit_slot<T: Real>(
    codebook: &Codebook<T>,
    indices: &[usize],
    channels: &Array2<Cx<T>>,
    sigma2: T,
    seed: u64,
) -> Result<Array2<Cx<T>>> {
    if indices.len() != channels.nrows() {
        return Err(Error::InvalidDimensions(format!(
            "{} indices for {} channel rows",
            indices.len(),
            channels.nrows()
        )));
    }
    let m = channels.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = if sigma2 > T::zero() {
        Array2::from_shape_simple_fn((codebook.n0(), m), || complex_normal(&mut rng, sigma2))
    } else {
        Array2::zeros((codebook.n0(), m))
    };
    for (k, &i) in indices.iter().enumerate() {
        let c = codebook.codeword(i)?;
        for (r, &cr) in c.iter().enumerate() {
            for (yv, &h) in y.row_mut(r).iter_mut().zip(channels.row(k)) {
                *yv = *yv + cr * h;
            }
        }
    }
    Ok(y)
}

/// Scenario description, read from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    #[serde(rename = "K_tot")]
    pub total_users: usize,
    #[serde(rename = "K_a")]
    pub active_users: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "L")]
    pub blocks: usize,
    #[serde(rename = "J")]
    pub bits_per_block: u32,
    pub n0: usize,
    #[serde(rename = "N0_dbm")]
    pub noise_dbm: f64,
    /// Receive SNR of the weakest active user; ignored when `P_t_dbm` is set.
    pub min_snr_db: f64,
    #[serde(rename = "P_t_dbm", skip_serializing_if = "Option::is_none")]
    pub tx_power_dbm: Option<f64>,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            total_users: 500,
            active_users: 50,
            antennas: 32,
            blocks: 8,
            bits_per_block: 12,
            n0: 1024,
            noise_dbm: -110.0,
            min_snr_db: 15.0,
            tx_power_dbm: None,
            seed: 1,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn message_bits(&self) -> usize {
        self.blocks * self.bits_per_block as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.bits_per_block == 0 || self.bits_per_block > 24 {
            return fail(format!("J = {} outside [1, 24]", self.bits_per_block));
        }
        if self.n0 == 0 || self.n0 > 1 << self.bits_per_block {
            return fail(format!("n0 = {} must lie in [1, 2^J]", self.n0));
        }
        if self.active_users > self.total_users {
            return fail(format!("K_a = {} exceeds K_tot = {}", self.active_users, self.total_users));
        }
        if self.antennas == 0 || self.blocks == 0 {
            return fail("M and L must be positive".into());
        }
        Ok(())
    }
}
