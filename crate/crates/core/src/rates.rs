//! Achievable rates of the common and private streams.
//!
//! Two evaluation paths exist. [`matched_sinrs`] uses the closed forms that
//! hold when the precoders were designed on the channel they are evaluated
//! on. [`stream_sinrs`] pushes the loaded precoders through the full linear
//! receive model on the true channels, so block-diagonalization leakage and
//! off-diagonal common-stream terms caused by CSI error show up as
//! interference. With exact CSI the two agree.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::decompositions::left_pseudo_inverse;
use crate::precoder::{CommonGroup, PrecoderSet};
use crate::{CMat, Error, Result};

/// SINR ceiling applied before taking the logarithm.
pub const SINR_CAP: f64 = 1e9;

pub fn rate_from_sinr(sinr: f64) -> f64 {
    (1.0 + sinr.clamp(0.0, SINR_CAP)).log2()
}

/// Which channel knowledge the receivers use to build their detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverCsi {
    /// Detectors `E_k^+` and `U_k^H` as designed by the base station.
    #[default]
    Estimated,
    /// Zero-forcing detectors on the true effective channels.
    True,
}

/// Per-stream SINRs. `common[i]` belongs to the `i`-th group member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrTable {
    pub common: Vec<(usize, Vec<f64>)>,
    pub private: Vec<Vec<f64>>,
}

impl SinrTable {
    /// `(stream id, sinr)` pairs in a stable order: common streams by member,
    /// then private streams by user.
    pub fn labelled(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (k, v) in &self.common {
            for (l, s) in v.iter().enumerate() {
                out.push((format!("cm-u{}-s{}", k + 1, l + 1), *s));
            }
        }
        for (k, v) in self.private.iter().enumerate() {
            for (l, s) in v.iter().enumerate() {
                out.push((format!("pm-u{}-s{}", k + 1, l + 1), *s));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `R_c,l^k` for each member `k`.
    pub common_per_user: Vec<(usize, Vec<f64>)>,
    /// `R_c,l`, the minimum over members.
    pub common: Vec<f64>,
    /// `R_k,l`.
    pub private: Vec<Vec<f64>>,
    /// `v_k sum_l R_c,l + sum_l R_k,l`.
    pub user_totals: Vec<f64>,
    pub sum_rate: f64,
    pub wsr: f64,
    pub weights: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl RateReport {
    pub fn from_sinrs(table: &SinrTable, group: &CommonGroup, weights: &[f64]) -> Result<Self> {
        let common_per_user: Vec<(usize, Vec<f64>)> = table
            .common
            .iter()
            .map(|(k, s)| (*k, s.iter().map(|x| rate_from_sinr(*x)).collect()))
            .collect();
        let m = common_per_user.first().map_or(0, |(_, r)| r.len());
        let common: Vec<f64> = (0..m)
            .map(|l| {
                common_per_user
                    .iter()
                    .map(|(_, r)| r[l])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let private: Vec<Vec<f64>> = table
            .private
            .iter()
            .map(|s| s.iter().map(|x| rate_from_sinr(*x)).collect())
            .collect();
        let fractions = group.fractions();
        let wsr = wsr(&common, &private, weights, &fractions)?;
        let common_total: f64 = common.iter().sum();
        let user_totals = private
            .iter()
            .zip(&fractions)
            .map(|(r, v)| v * common_total + r.iter().sum::<f64>())
            .collect();
        let sum_rate = common_total + private.iter().flatten().sum::<f64>();
        Ok(Self {
            common_per_user,
            common,
            private,
            user_totals,
            sum_rate,
            wsr,
            weights: weights.to_vec(),
            fractions,
        })
    }
}

/// Checks `w_k >= 0`, `sum w_k = 1`.
pub fn validate_weights(weights: &[f64], num_users: usize) -> Result<()> {
    if weights.len() != num_users {
        return Err(Error::Config(format!(
            "{} weights for {num_users} users",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// `sum_k sum_l w_k v_k R_c,l + sum_k sum_l w_k R_k,l`.
pub fn wsr(common: &[f64], private: &[Vec<f64>], weights: &[f64], fractions: &[f64]) -> Result<f64> {
    validate_weights(weights, private.len())?;
    if fractions.len() != weights.len() {
        return Err(Error::DimensionMismatch("one fraction per user".into()));
    }
    let cm_weight: f64 = weights.iter().zip(fractions).map(|(w, v)| w * v).sum();
    let pm: f64 = private
        .iter()
        .zip(weights)
        .map(|(r, w)| w * r.iter().sum::<f64>())
        .sum();
    Ok(cm_weight * common.iter().sum::<f64>() + pm)
}

fn check_user(pre: &PrecoderSet, channels: &ChannelSet, k: usize) -> Result<()> {
    if k >= channels.num_users() || k >= pre.design.num_users() {
        return Err(Error::Index(format!("user {k}")));
    }
    Ok(())
}

/// SINR of common stream `l` at member `k` under matched CSI.
pub fn common_stream_sinr(pre: &PrecoderSet, channels: &ChannelSet, k: usize, l: usize) -> Result<f64> {
    check_user(pre, channels, k)?;
    let cp = pre
        .design
        .common
        .as_ref()
        .ok_or_else(|| Error::Index("no common message".into()))?;
    let rx = cp
        .receiver(k)
        .ok_or_else(|| Error::Index(format!("user {k} does not decode the common message")))?;
    if l >= cp.streams() {
        return Err(Error::Index(format!("common stream {l} of {}", cp.streams())));
    }
    let inv_l = 1.0 / channels.user(k).path_loss;
    let w = pre.design.pm_to_cm[k].as_ref().expect("member has W_k");
    let interference: f64 = w
        .row(l)
        .iter()
        .zip(&pre.powers.private[k])
        .map(|(x, p)| x.norm_sqr() * p)
        .sum();
    let signal = inv_l * rx.gains[l] * rx.gains[l] * pre.powers.common[l];
    Ok(signal / (inv_l * interference + channels.noise_var() * rx.noise_gain[l]))
}

/// `R_c,l^k`.
pub fn common_stream_rate(pre: &PrecoderSet, channels: &ChannelSet, k: usize, l: usize) -> Result<f64> {
    common_stream_sinr(pre, channels, k, l).map(rate_from_sinr)
}

/// `R_c,l = min_k R_c,l^k`; zero when no user decodes the common message.
pub fn common_rate(pre: &PrecoderSet, channels: &ChannelSet, l: usize) -> Result<f64> {
    let members = pre.group().members();
    if members.is_empty() {
        return Ok(0.0);
    }
    members
        .iter()
        .map(|&k| common_stream_rate(pre, channels, k, l))
        .try_fold(f64::INFINITY, |acc, r| r.map(|r| acc.min(r)))
}

/// SINR of private stream `l` of user `k` under matched CSI; members see no
/// common-message interference after SIC.
pub fn private_stream_sinr(pre: &PrecoderSet, channels: &ChannelSet, k: usize, l: usize) -> Result<f64> {
    check_user(pre, channels, k)?;
    let pp = &pre.design.private[k];
    if l >= pp.sigma.len() {
        return Err(Error::Index(format!("private stream {l} of user {k}")));
    }
    let inv_l = 1.0 / channels.user(k).path_loss;
    let wc = &pre.design.cm_to_pm[k];
    let interference: f64 = if pre.group().contains(k) {
        0.0
    } else {
        wc.row(l)
            .iter()
            .zip(&pre.powers.common)
            .map(|(x, p)| x.norm_sqr() * p)
            .sum()
    };
    let signal = inv_l * pp.sigma[l] * pp.sigma[l] * pre.powers.private[k][l];
    Ok(signal / (inv_l * interference + channels.noise_var()))
}

/// `R_k,l`.
pub fn private_stream_rate(pre: &PrecoderSet, channels: &ChannelSet, k: usize, l: usize) -> Result<f64> {
    private_stream_sinr(pre, channels, k, l).map(rate_from_sinr)
}

/// Closed-form SINRs for every stream.
pub fn matched_sinrs(pre: &PrecoderSet, channels: &ChannelSet) -> Result<SinrTable> {
    let m = pre.design.common_streams();
    let common = pre
        .group()
        .members()
        .iter()
        .map(|&k| {
            (0..m)
                .map(|l| common_stream_sinr(pre, channels, k, l))
                .collect::<Result<Vec<_>>>()
                .map(|v| (k, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let private = (0..channels.num_users())
        .map(|k| {
            (0..pre.design.private_streams(k))
                .map(|l| private_stream_sinr(pre, channels, k, l))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SinrTable { common, private })
}

pub fn matched_report(pre: &PrecoderSet, channels: &ChannelSet, weights: &[f64]) -> Result<RateReport> {
    RateReport::from_sinrs(&matched_sinrs(pre, channels)?, pre.group(), weights)
}

/// Detection matrices applied by each user.
#[derive(Debug, Clone)]
pub struct Detectors {
    /// Common-message detector per user; `None` for non-members.
    pub common: Vec<Option<CMat>>,
    /// Private-message detector per user.
    pub private: Vec<CMat>,
}

pub fn detectors(pre: &PrecoderSet, channels: &ChannelSet, receiver: ReceiverCsi) -> Result<Detectors> {
    let design = &pre.design;
    let k_total = design.num_users();
    let mut common = vec![None; k_total];
    let mut private = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let h = channels.h(k, false);
        match receiver {
            ReceiverCsi::Estimated => {
                if let Some(cp) = &design.common {
                    common[k] = cp.receiver(k).map(|rx| rx.detector.clone());
                }
                private.push(design.private[k].u.adjoint());
            }
            ReceiverCsi::True => {
                if let Some(cp) = &design.common {
                    if design.group.contains(k) {
                        common[k] = Some(left_pseudo_inverse(&(h * &cp.direction))?);
                    }
                }
                private.push(left_pseudo_inverse(&(h * &design.private[k].direction))?);
            }
        }
    }
    Ok(Detectors { common, private })
}

/// SINRs from the full receive model on the true channels `H_k`.
///
/// Common streams at member `k`: detector `E` applied to `y_k`; the desired
/// term is `(E H_k P_c)_{l,l}`, every other common and private contribution
/// is interference, and the noise is `sigma^2 (E E^H)_{l,l}`. Private streams:
/// members cancel the common message exactly before detection, non-members
/// treat it as interference.
pub fn stream_sinrs(pre: &PrecoderSet, channels: &ChannelSet, receiver: ReceiverCsi) -> Result<SinrTable> {
    let design = &pre.design;
    if channels.num_users() != design.num_users() || channels.bs_antennas() != pre.p_c.nrows() {
        return Err(Error::DimensionMismatch(
            "precoder and channel set disagree on the system size".into(),
        ));
    }
    let det = detectors(pre, channels, receiver)?;
    let noise = channels.noise_var();
    let k_total = channels.num_users();

    let mut common = Vec::new();
    let mut private = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let h = channels.h(k, false);
        let inv_l = 1.0 / channels.user(k).path_loss;
        let member = design.group.contains(k);

        if let (true, Some(e)) = (member, det.common[k].as_ref()) {
            let eh = e * h;
            let cm = &eh * &pre.p_c;
            let pm: Vec<CMat> = pre.p_k.iter().map(|p| &eh * p).collect();
            let sinrs = (0..cm.nrows())
                .map(|l| {
                    let signal = inv_l * cm[(l, l)].norm_sqr();
                    let mut interf = cm
                        .row(l)
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != l)
                        .map(|(_, x)| x.norm_sqr())
                        .sum::<f64>();
                    interf += pm
                        .iter()
                        .map(|b| b.row(l).iter().map(|x| x.norm_sqr()).sum::<f64>())
                        .sum::<f64>();
                    let noise_gain: f64 = e.row(l).iter().map(|x| x.norm_sqr()).sum();
                    signal / (inv_l * interf + noise * noise_gain)
                })
                .collect();
            common.push((k, sinrs));
        }

        let u = &det.private[k];
        let uh = u * h;
        let own = &uh * &pre.p_k[k];
        let cm_leak = if member || pre.p_c.ncols() == 0 {
            None
        } else {
            Some(&uh * &pre.p_c)
        };
        let others: Vec<CMat> = (0..k_total)
            .filter(|&j| j != k)
            .map(|j| &uh * &pre.p_k[j])
            .collect();
        let sinrs = (0..own.nrows())
            .map(|l| {
                let signal = inv_l * own[(l, l)].norm_sqr();
                let mut interf = own
                    .row(l)
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != l)
                    .map(|(_, x)| x.norm_sqr())
                    .sum::<f64>();
                interf += others
                    .iter()
                    .map(|b| b.row(l).iter().map(|x| x.norm_sqr()).sum::<f64>())
                    .sum::<f64>();
                if let Some(c) = &cm_leak {
                    interf += c.row(l).iter().map(|x| x.norm_sqr()).sum::<f64>();
                }
                let noise_gain: f64 = u.row(l).iter().map(|x| x.norm_sqr()).sum();
                signal / (inv_l * interf + noise * noise_gain)
            })
            .collect();
        private.push(sinrs);
    }
    Ok(SinrTable { common, private })
}

/// Rates of a precoder designed on `H~_k` but transmitted over `H_k`.
pub fn evaluate_mismatched(
    pre: &PrecoderSet,
    channels: &ChannelSet,
    weights: &[f64],
    receiver: ReceiverCsi,
) -> Result<RateReport> {
    RateReport::from_sinrs(&stream_sinrs(pre, channels, receiver)?, pre.group(), weights)
}
