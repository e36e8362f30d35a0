//! JSON files for channel sets, loaded precoders and rate reports.
//!
//! Matrices are objects `{"rows": r, "cols": c, "data": [[re, im], ...]}`
//! with `data` in row-major order. A channel set file looks like
//!
//! ```json
//! {
//!   "bs_antennas": 16,
//!   "noise_var_mw": 3.16e-4,
//!   "users": [
//!     {"antennas": 4, "path_loss": 2500.0, "h": {...}, "h_est": {...}}
//!   ]
//! }
//! ```
//!
//! Precoder files hold the common group, the budget, the stream powers and
//! the loaded matrices `p_c` and `p_k`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, UserChannel};
use crate::precoder::{PowerAllocation, PrecoderSet};
use crate::rates::RateReport;
use crate::{CMat, Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(CMat::from_row_iterator(
            self.rows,
            self.cols,
            self.data.iter().map(|[re, im]| C64::new(*re, *im)),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserJson {
    pub antennas: usize,
    pub path_loss: f64,
    pub h: MatrixJson,
    pub h_est: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSetJson {
    pub bs_antennas: usize,
    pub noise_var_mw: f64,
    pub users: Vec<UserJson>,
}

impl From<&ChannelSet> for ChannelSetJson {
    fn from(ch: &ChannelSet) -> Self {
        Self {
            bs_antennas: ch.bs_antennas(),
            noise_var_mw: ch.noise_var(),
            users: ch
                .users()
                .iter()
                .map(|u| UserJson {
                    antennas: u.antennas(),
                    path_loss: u.path_loss,
                    h: MatrixJson::from_matrix(&u.h),
                    h_est: MatrixJson::from_matrix(&u.h_est),
                })
                .collect(),
        }
    }
}

impl ChannelSetJson {
    pub fn to_channels(&self) -> Result<ChannelSet> {
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let h = u.h.to_matrix()?;
                if h.nrows() != u.antennas {
                    return Err(Error::DimensionMismatch(format!(
                        "user {k} declares {} antennas but H has {} rows",
                        u.antennas,
                        h.nrows()
                    )));
                }
                Ok(UserChannel {
                    h,
                    h_est: u.h_est.to_matrix()?,
                    path_loss: u.path_loss,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ChannelSet::new(self.bs_antennas, users, self.noise_var_mw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecoderSetJson {
    pub common_members: Vec<usize>,
    pub budget_mw: f64,
    pub powers: PowerAllocation,
    pub p_c: MatrixJson,
    pub p_k: Vec<MatrixJson>,
}

impl From<&PrecoderSet> for PrecoderSetJson {
    fn from(set: &PrecoderSet) -> Self {
        Self {
            common_members: set.group().members().to_vec(),
            budget_mw: set.budget,
            powers: set.powers.clone(),
            p_c: MatrixJson::from_matrix(&set.p_c),
            p_k: set.p_k.iter().map(MatrixJson::from_matrix).collect(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_channels(path: &Path, channels: &ChannelSet) -> Result<()> {
    write_json(path, &ChannelSetJson::from(channels))
}

pub fn load_channels(path: &Path) -> Result<ChannelSet> {
    read_json::<ChannelSetJson>(path)?.to_channels()
}

pub fn save_precoders(path: &Path, set: &PrecoderSet) -> Result<()> {
    write_json(path, &PrecoderSetJson::from(set))
}

pub fn load_precoders(path: &Path) -> Result<PrecoderSetJson> {
    read_json(path)
}

pub fn save_report(path: &Path, report: &RateReport) -> Result<()> {
    write_json(path, report)
}

pub fn load_report(path: &Path) -> Result<RateReport> {
    read_json(path)
}
