//! User channels: correlated Rayleigh fading, free-space path loss, and
//! additive Gaussian CSI error at the base station.

use serde::{Deserialize, Serialize};

use crate::rng::{complex_gaussian_matrix, stream_rng};
use crate::{CMat, Error, Result};

pub fn dbm_to_linear(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

pub fn linear_to_dbm(p_mw: f64) -> f64 {
    10.0 * p_mw.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Receive antennas per user, `M_k`.
    pub user_antennas: Vec<usize>,
    /// Transmit antennas at the base station, `N`.
    pub bs_antennas: usize,
    /// BS-user distances in meters; path loss is `d^2`.
    pub distances_m: Vec<f64>,
    /// Correlation between the paired users (1,3) and (2,4).
    pub alpha: f64,
    /// Per-entry variance of the CSI error.
    pub csi_error_var: f64,
    pub noise_dbm: f64,
    pub seed: u64,
}

impl ChannelConfig {
    /// Four users with four antennas each, sixteen BS antennas, 50 m, -35 dBm noise.
    pub fn reference_correlated(alpha: f64, seed: u64) -> Self {
        Self {
            user_antennas: vec![4; 4],
            bs_antennas: 16,
            distances_m: vec![50.0; 4],
            alpha,
            csi_error_var: 0.0,
            noise_dbm: -35.0,
            seed,
        }
    }

    /// Uncorrelated users at 250, 250, 50 and 50 m.
    pub fn reference_far_near(seed: u64) -> Self {
        Self {
            distances_m: vec![250.0, 250.0, 50.0, 50.0],
            ..Self::reference_correlated(0.0, seed)
        }
    }

    pub fn users(&self) -> usize {
        self.user_antennas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users();
        if k == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if self.distances_m.len() != k {
            return Err(Error::Config(format!(
                "{} distances given for {k} users",
                self.distances_m.len()
            )));
        }
        if self.user_antennas.iter().any(|&m| m == 0) {
            return Err(Error::Config("every user needs at least one antenna".into()));
        }
        let total: usize = self.user_antennas.iter().sum();
        if total != self.bs_antennas {
            return Err(Error::Config(format!(
                "system must be critically loaded: sum of user antennas {total} != {} BS antennas",
                self.bs_antennas
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.csi_error_var >= 0.0) || !self.csi_error_var.is_finite() {
            return Err(Error::Config(format!(
                "CSI error variance {} must be nonnegative",
                self.csi_error_var
            )));
        }
        if self.distances_m.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::Config("distances must be positive".into()));
        }
        if !self.noise_dbm.is_finite() {
            return Err(Error::Config("noise power must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    /// Small-scale fading `H_k`, unscaled by path loss.
    pub h: CMat,
    /// BS-side estimate `H_k + dH_k`.
    pub h_est: CMat,
    /// `L_k`; the physical channel is `H_k / sqrt(L_k)`.
    pub path_loss: f64,
}

impl UserChannel {
    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn select(&self, estimated: bool) -> &CMat {
        if estimated {
            &self.h_est
        } else {
            &self.h
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    bs_antennas: usize,
    users: Vec<UserChannel>,
    noise_var: f64,
}

impl ChannelSet {
    pub fn new(bs_antennas: usize, users: Vec<UserChannel>, noise_var: f64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Config("channel set has no users".into()));
        }
        for (k, u) in users.iter().enumerate() {
            if u.h.ncols() != bs_antennas || u.h_est.shape() != u.h.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "user {k}: channel {:?} / estimate {:?} for {bs_antennas} BS antennas",
                    u.h.shape(),
                    u.h_est.shape()
                )));
            }
            if !(u.path_loss > 0.0) {
                return Err(Error::Config(format!("user {k}: path loss must be positive")));
            }
        }
        let total: usize = users.iter().map(UserChannel::antennas).sum();
        if total != bs_antennas {
            return Err(Error::Config(format!(
                "not critically loaded: {total} receive vs {bs_antennas} transmit antennas"
            )));
        }
        if !(noise_var > 0.0) {
            return Err(Error::Config("noise variance must be positive".into()));
        }
        Ok(Self {
            bs_antennas,
            users,
            noise_var,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn bs_antennas(&self) -> usize {
        self.bs_antennas
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn users(&self) -> &[UserChannel] {
        &self.users
    }

    pub fn user(&self, k: usize) -> &UserChannel {
        &self.users[k]
    }

    pub fn antennas(&self, k: usize) -> usize {
        self.users[k].antennas()
    }

    pub fn h(&self, k: usize, estimated: bool) -> &CMat {
        self.users[k].select(estimated)
    }

    /// Copy with `H~_k = H_k`, as seen under perfect CSI.
    pub fn with_perfect_csi(&self) -> Self {
        let mut out = self.clone();
        for u in &mut out.users {
            u.h_est = u.h.clone();
        }
        out
    }

    /// Copy whose true channels are the estimates; useful to evaluate what the
    /// base station believes.
    pub fn as_seen_by_bs(&self) -> Self {
        let mut out = self.clone();
        for u in &mut out.users {
            u.h = u.h_est.clone();
        }
        out
    }

    pub fn with_noise_var(&self, noise_var: f64) -> Result<Self> {
        Self::new(self.bs_antennas, self.users.clone(), noise_var)
    }

    pub fn with_path_losses(&self, losses: &[f64]) -> Result<Self> {
        if losses.len() != self.users.len() {
            return Err(Error::DimensionMismatch("one path loss per user".into()));
        }
        let mut users = self.users.clone();
        for (u, l) in users.iter_mut().zip(losses) {
            u.path_loss = *l;
        }
        Self::new(self.bs_antennas, users, self.noise_var)
    }
}

/// Stream id of user `k`'s fading matrix; the CSI error uses the next id.
fn fading_stream(k: usize) -> u64 {
    2 * k as u64
}

/// Draws `H_k` and `H~_k`.
///
/// With `alpha > 0` the four-user pairing `H_3 = a G_1 + sqrt(1-a^2) G_3`,
/// `H_4 = a G_2 + sqrt(1-a^2) G_4` is applied; any other user count is
/// rejected. The CSI error is redrawn per call and is exactly zero when its
/// variance is zero.
pub fn generate_channels(cfg: &ChannelConfig) -> Result<ChannelSet> {
    cfg.validate()?;
    let k = cfg.users();
    let n = cfg.bs_antennas;
    if cfg.alpha > 0.0 {
        if k != 4 {
            return Err(Error::UnsupportedTopology(format!(
                "correlated channels are defined for 4 users, got {k}"
            )));
        }
        if cfg.user_antennas[0] != cfg.user_antennas[2] || cfg.user_antennas[1] != cfg.user_antennas[3]
        {
            return Err(Error::UnsupportedTopology(
                "paired users (1,3) and (2,4) need equal antenna counts".into(),
            ));
        }
    }

    let g: Vec<CMat> = (0..k)
        .map(|u| {
            let mut rng = stream_rng(cfg.seed, fading_stream(u));
            complex_gaussian_matrix(&mut rng, cfg.user_antennas[u], n, 1.0)
        })
        .collect();

    let a = cfg.alpha;
    let b = (1.0 - a * a).max(0.0).sqrt();
    let users = (0..k)
        .map(|u| {
            let h = if a > 0.0 && u >= 2 {
                &g[u - 2] * crate::C64::new(a, 0.0) + &g[u] * crate::C64::new(b, 0.0)
            } else {
                g[u].clone()
            };
            let h_est = if cfg.csi_error_var > 0.0 {
                let mut rng = stream_rng(cfg.seed, fading_stream(u) + 1);
                &h + complex_gaussian_matrix(&mut rng, h.nrows(), n, cfg.csi_error_var)
            } else {
                h.clone()
            };
            UserChannel {
                h,
                h_est,
                path_loss: cfg.distances_m[u] * cfg.distances_m[u],
            }
        })
        .collect();

    ChannelSet::new(n, users, dbm_to_linear(cfg.noise_dbm))
}
