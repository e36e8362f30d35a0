//! Common-message precoding by HO-GSVD over the row-space intersection of the
//! decoding users, private precoding by block diagonalization.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::decompositions::{
    condition_number, ho_gsvd, left_pseudo_inverse, null_space_basis, row_space_intersection,
    sorted_svd, vstack,
};
use crate::{CMat, Error, Result, C64};

/// Relative slack on the total power constraint.
pub const POWER_TOL: f64 = 1e-6;

/// Users that decode the common message, as sorted 0-based indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CommonGroup {
    members: Vec<usize>,
    num_users: usize,
}

impl CommonGroup {
    pub fn new(mut members: Vec<usize>, num_users: usize) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&k| k >= num_users) {
            return Err(Error::Index(format!("user {bad} in a {num_users}-user system")));
        }
        Ok(Self { members, num_users })
    }

    /// The no-common-message configuration (plain block diagonalization).
    pub fn none(num_users: usize) -> Self {
        Self {
            members: Vec::new(),
            num_users,
        }
    }

    pub fn all(num_users: usize) -> Self {
        Self {
            members: (0..num_users).collect(),
            num_users,
        }
    }

    /// Bit `k` of `mask` selects user `k`.
    pub fn from_mask(mask: u64, num_users: usize) -> Self {
        Self {
            members: (0..num_users).filter(|k| mask >> k & 1 == 1).collect(),
            num_users,
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.members.binary_search(&k).is_ok()
    }

    /// Position of user `k` within the group.
    pub fn position(&self, k: usize) -> Option<usize> {
        self.members.binary_search(&k).ok()
    }

    /// Common-message bit fractions `v_k`: equal split over members, zero otherwise.
    pub fn fractions(&self) -> Vec<f64> {
        let share = if self.members.is_empty() {
            0.0
        } else {
            1.0 / self.members.len() as f64
        };
        (0..self.num_users)
            .map(|k| if self.contains(k) { share } else { 0.0 })
            .collect()
    }

    /// Number of common streams, `min M_k` over members.
    pub fn streams(&self, channels: &ChannelSet) -> usize {
        self.members
            .iter()
            .map(|&k| channels.antennas(k))
            .min()
            .unwrap_or(0)
    }

    /// 1-based member list joined by `+`, or `none`.
    pub fn label(&self) -> String {
        if self.members.is_empty() {
            "none".to_string()
        } else {
            self.members
                .iter()
                .map(|k| (k + 1).to_string())
                .collect::<Vec<_>>()
                .join("+")
        }
    }
}

/// Per-member common-message detection terms.
#[derive(Debug, Clone)]
pub struct CommonReceiver {
    pub user: usize,
    /// `E_k^+`, `M x M_k`.
    pub detector: CMat,
    /// Diagonal of `D_k`.
    pub gains: DVector<f64>,
    /// Diagonal of `E_k^+ (E_k^+)^H`, the noise amplification per stream.
    pub noise_gain: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct CommonPrecoder {
    /// Intersection basis `G_c`, `N x M`.
    pub g_c: CMat,
    /// Shared right factor `V_c`.
    pub v_c: CMat,
    pub v_c_inv: CMat,
    /// Unloaded precoder `G_c V_c^-H`.
    pub direction: CMat,
    /// Power cost per common stream, squared row norms of `V_c^-1`.
    pub cost: DVector<f64>,
    pub receivers: Vec<CommonReceiver>,
    /// `cond(V_c)`; large values signal nearly identical member channels.
    pub cond_v: f64,
}

impl CommonPrecoder {
    pub fn streams(&self) -> usize {
        self.g_c.ncols()
    }

    pub fn receiver(&self, k: usize) -> Option<&CommonReceiver> {
        self.receivers.iter().find(|r| r.user == k)
    }
}

#[derive(Debug, Clone)]
pub struct PrivatePrecoder {
    /// Null space `N_k` of the other users' stacked channels.
    pub null_basis: CMat,
    /// Left singular vectors of `H_k N_k`; `U_k^H` is the detector.
    pub u: CMat,
    pub v: CMat,
    /// Singular values of `H_k N_k`, descending.
    pub sigma: DVector<f64>,
    /// Unloaded precoder `N_k V_k`.
    pub direction: CMat,
}

/// `G_c`, HO-GSVD of `{H_k G_c}` and the derived detection terms.
pub fn build_common_precoder(
    channels: &ChannelSet,
    group: &CommonGroup,
    use_estimated: bool,
) -> Result<CommonPrecoder> {
    if group.is_empty() {
        return Err(Error::Config(
            "the no-common-message configuration has no common precoder".into(),
        ));
    }
    if group.num_users() != channels.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "group over {} users for a {}-user channel set",
            group.num_users(),
            channels.num_users()
        )));
    }
    let m = group.streams(channels);
    let hs: Vec<&CMat> = group
        .members()
        .iter()
        .map(|&k| channels.h(k, use_estimated))
        .collect();
    let g_c = row_space_intersection(&hs, m)?.basis;
    let effective: Vec<CMat> = hs.iter().map(|h| *h * &g_c).collect();
    let hogsvd = ho_gsvd(&effective).map_err(|e| match e {
        Error::RankDeficiency { index, ratio } => Error::RankDeficiency {
            index: group.members()[index],
            ratio,
        },
        other => other,
    })?;

    let v_inv_h = hogsvd.v_inv_h();
    let direction = &g_c * &v_inv_h;
    let cost = DVector::from_iterator(
        m,
        (0..m).map(|l| hogsvd.v_inv.row(l).iter().map(|x| x.norm_sqr()).sum()),
    );
    let receivers = group
        .members()
        .iter()
        .enumerate()
        .map(|(pos, &k)| {
            let detector = left_pseudo_inverse(&hogsvd.u[pos]).map_err(|e| match e {
                Error::RankDeficiency { ratio, .. } => Error::RankDeficiency { index: k, ratio },
                other => other,
            })?;
            let noise_gain = DVector::from_iterator(
                m,
                (0..m).map(|l| detector.row(l).iter().map(|x| x.norm_sqr()).sum()),
            );
            Ok(CommonReceiver {
                user: k,
                detector,
                gains: hogsvd.sigma[pos].clone(),
                noise_gain,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CommonPrecoder {
        cond_v: condition_number(&hogsvd.v),
        g_c,
        v_c: hogsvd.v,
        v_c_inv: hogsvd.v_inv,
        direction,
        cost,
        receivers,
    })
}

/// Block-diagonalization precoders for every user.
pub fn build_private_precoders(
    channels: &ChannelSet,
    use_estimated: bool,
) -> Result<Vec<PrivatePrecoder>> {
    let k_total = channels.num_users();
    let n = channels.bs_antennas();
    (0..k_total)
        .map(|k| {
            let others: Vec<&CMat> = (0..k_total)
                .filter(|&j| j != k)
                .map(|j| channels.h(j, use_estimated))
                .collect();
            let stacked = if others.is_empty() {
                CMat::zeros(0, n)
            } else {
                vstack(&others)?
            };
            let null_basis = null_space_basis(&stacked, channels.antennas(k))
                .map_err(|e| match e {
                    Error::RankDeficiency { ratio, .. } => Error::RankDeficiency { index: k, ratio },
                    other => other,
                })?
                .basis;
            let eff = channels.h(k, use_estimated) * &null_basis;
            let svd = sorted_svd(&eff);
            let u = svd.u.expect("u requested");
            let v = svd.v_t.expect("v requested").adjoint();
            let direction = &null_basis * &v;
            Ok(PrivatePrecoder {
                null_basis,
                u,
                v,
                sigma: svd.singular_values,
                direction,
            })
        })
        .collect()
}

/// Power-independent part of the precoder: directions, detectors and the
/// interference matrices between common and private streams.
#[derive(Debug, Clone)]
pub struct PrecoderDesign {
    pub group: CommonGroup,
    pub common: Option<CommonPrecoder>,
    pub private: Vec<PrivatePrecoder>,
    /// `W_k = E_k^+ H_k N_k V_k` for members, `None` otherwise.
    pub pm_to_cm: Vec<Option<CMat>>,
    /// `W_c,k = U_k^H H_k G_c V_c^-H` for non-members; an exact zero matrix for members.
    pub cm_to_pm: Vec<CMat>,
    /// Whether directions were computed from the estimated channels.
    pub use_estimated: bool,
}

impl PrecoderDesign {
    pub fn new(channels: &ChannelSet, group: &CommonGroup, use_estimated: bool) -> Result<Self> {
        let private = build_private_precoders(channels, use_estimated)?;
        let common = if group.is_empty() {
            None
        } else {
            Some(build_common_precoder(channels, group, use_estimated)?)
        };
        let m = common.as_ref().map_or(0, CommonPrecoder::streams);
        let k_total = channels.num_users();
        let mut pm_to_cm = vec![None; k_total];
        let mut cm_to_pm = Vec::with_capacity(k_total);
        for k in 0..k_total {
            let h = channels.h(k, use_estimated);
            let mk = channels.antennas(k);
            match common.as_ref() {
                Some(cp) if group.contains(k) => {
                    let rx = cp.receiver(k).expect("member has a receiver");
                    pm_to_cm[k] = Some(&rx.detector * h * &private[k].direction);
                    cm_to_pm.push(CMat::zeros(mk, m));
                }
                Some(cp) => cm_to_pm.push(private[k].u.adjoint() * h * &cp.direction),
                None => cm_to_pm.push(CMat::zeros(mk, 0)),
            }
        }
        Ok(Self {
            group: group.clone(),
            common,
            private,
            pm_to_cm,
            cm_to_pm,
            use_estimated,
        })
    }

    pub fn common_streams(&self) -> usize {
        self.common.as_ref().map_or(0, CommonPrecoder::streams)
    }

    pub fn private_streams(&self, k: usize) -> usize {
        self.private[k].sigma.len()
    }

    pub fn num_users(&self) -> usize {
        self.private.len()
    }

    /// Power costs `c_l` of the common streams.
    pub fn common_cost(&self) -> Vec<f64> {
        self.common
            .as_ref()
            .map_or_else(Vec::new, |c| c.cost.iter().copied().collect())
    }

    /// Loads the directions with `powers`, checking `sum c_l p_c,l + sum p_k,l <= budget`.
    pub fn load(&self, powers: &PowerAllocation, budget: f64) -> Result<PrecoderSet> {
        powers.check_shape(self)?;
        let used = powers.constraint_power(&self.common_cost());
        if used > budget * (1.0 + POWER_TOL) + f64::MIN_POSITIVE {
            return Err(Error::ConstraintViolation { used, budget });
        }
        let n = self.private.first().map_or(0, |p| p.direction.nrows());
        let p_c = match &self.common {
            Some(cp) => scale_columns(&cp.direction, &powers.common),
            None => CMat::zeros(n, 0),
        };
        let p_k = self
            .private
            .iter()
            .zip(&powers.private)
            .map(|(pp, pw)| scale_columns(&pp.direction, pw))
            .collect();
        Ok(PrecoderSet {
            design: self.clone(),
            powers: powers.clone(),
            budget,
            p_c,
            p_k,
        })
    }
}

fn scale_columns(m: &CMat, powers: &[f64]) -> CMat {
    let mut out = m.clone();
    for (l, p) in powers.iter().enumerate() {
        out.column_mut(l).scale_mut(p.sqrt());
    }
    out
}

/// Stream powers in mW: common streams first, then one vector per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub common: Vec<f64>,
    pub private: Vec<Vec<f64>>,
}

impl PowerAllocation {
    pub fn zeros(design: &PrecoderDesign) -> Self {
        Self {
            common: vec![0.0; design.common_streams()],
            private: (0..design.num_users())
                .map(|k| vec![0.0; design.private_streams(k)])
                .collect(),
        }
    }

    /// Sum over private streams plus the `cost`-weighted common powers.
    pub fn constraint_power(&self, cost: &[f64]) -> f64 {
        let c: f64 = self.common.iter().zip(cost).map(|(p, c)| p * c).sum();
        c + self.private.iter().flatten().sum::<f64>()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            common: self.common.iter().map(|p| p * factor).collect(),
            private: self
                .private
                .iter()
                .map(|v| v.iter().map(|p| p * factor).collect())
                .collect(),
        }
    }

    /// Flattened `[p_c | p_1 | ... | p_K]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.common
            .iter()
            .chain(self.private.iter().flatten())
            .copied()
            .collect()
    }

    fn check_shape(&self, design: &PrecoderDesign) -> Result<()> {
        let ok = self.common.len() == design.common_streams()
            && self.private.len() == design.num_users()
            && self
                .private
                .iter()
                .enumerate()
                .all(|(k, p)| p.len() == design.private_streams(k));
        if !ok {
            return Err(Error::DimensionMismatch(
                "power allocation does not match the precoder streams".into(),
            ));
        }
        if self.to_vec().iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Domain("stream powers must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Fully loaded precoders with their design.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub design: PrecoderDesign,
    pub powers: PowerAllocation,
    pub budget: f64,
    /// `P_c = G_c V_c^-H Delta_c^1/2`.
    pub p_c: CMat,
    /// `P_k = N_k V_k Delta_k^1/2`.
    pub p_k: Vec<CMat>,
}

impl PrecoderSet {
    pub fn group(&self) -> &CommonGroup {
        &self.design.group
    }

    /// `tr(P_c P_c^H) + sum tr(P_k P_k^H)`.
    pub fn transmit_power(&self) -> f64 {
        self.p_c.norm_squared() + self.p_k.iter().map(|p| p.norm_squared()).sum::<f64>()
    }

    /// The same total through the simplified per-stream constraint.
    pub fn constraint_power(&self) -> f64 {
        self.powers.constraint_power(&self.design.common_cost())
    }
}

/// Builds the design and loads it in one step.
pub fn assemble(
    channels: &ChannelSet,
    group: &CommonGroup,
    powers: &PowerAllocation,
    budget: f64,
    use_estimated: bool,
) -> Result<PrecoderSet> {
    PrecoderDesign::new(channels, group, use_estimated)?.load(powers, budget)
}

/// `||E_k^+ (H_k G_c) V_c^-H - D_k||_F / (1 + ||D_k||_F)` per member.
pub fn diagonalization_residuals(
    design: &PrecoderDesign,
    channels: &ChannelSet,
    use_estimated: bool,
) -> Vec<(usize, f64)> {
    let Some(cp) = &design.common else {
        return Vec::new();
    };
    cp.receivers
        .iter()
        .map(|rx| {
            let eff = &rx.detector * channels.h(rx.user, use_estimated) * &cp.direction;
            let d = CMat::from_diagonal(&rx.gains.map(|g| C64::new(g, 0.0)));
            (rx.user, (&eff - &d).norm() / (1.0 + d.norm()))
        })
        .collect()
}

/// Worst `||H_j P_k||_F / (||H_j||_F ||P_k||_F)` over `j != k`.
pub fn block_leakage(set: &PrecoderSet, channels: &ChannelSet, use_estimated: bool) -> f64 {
    let mut worst = 0.0_f64;
    for (k, pk) in set.p_k.iter().enumerate() {
        let pn = pk.norm();
        if pn == 0.0 {
            continue;
        }
        for j in 0..channels.num_users() {
            if j == k {
                continue;
            }
            let h = channels.h(j, use_estimated);
            worst = worst.max((h * pk).norm() / (h.norm() * pn));
        }
    }
    worst
}
