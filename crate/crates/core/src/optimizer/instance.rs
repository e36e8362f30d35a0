use std::f64::consts::LN_2;

use crate::channel::ChannelSet;
use crate::precoder::{PowerAllocation, PrecoderDesign};
use crate::rates::{rate_from_sinr, validate_weights};
use crate::{Error, Result};

/// One stream's rate `log2(1 + s p_sig / (noise + sum_i b_i p_i))`, with
/// powers addressed by their index in the flattened allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTerm {
    pub user: usize,
    pub signal: (usize, f64),
    pub interference: Vec<(usize, f64)>,
    pub noise: f64,
}

impl RateTerm {
    pub fn interference_at(&self, p: &[f64]) -> f64 {
        self.interference.iter().map(|&(i, b)| b * p[i]).sum()
    }

    pub fn signal_at(&self, p: &[f64]) -> f64 {
        self.signal.1 * p[self.signal.0]
    }

    pub fn sinr(&self, p: &[f64]) -> f64 {
        self.signal_at(p) / (self.noise + self.interference_at(p))
    }

    pub fn rate(&self, p: &[f64]) -> f64 {
        rate_from_sinr(self.sinr(p))
    }

    /// Non-constant part of the minorant at `anchor`:
    /// `log2(noise + I + S) - I / (ln 2 (noise + I_anchor))`.
    pub fn surrogate(&self, p: &[f64], anchor: &[f64]) -> f64 {
        let i = self.interference_at(p);
        let i0 = self.interference_at(anchor);
        (self.noise + i + self.signal_at(p)).log2() - i / (LN_2 * (self.noise + i0))
    }

    /// Anchor-dependent constant completing the minorant:
    /// `-log2(noise + I_anchor) + I_anchor / (ln 2 (noise + I_anchor))`.
    pub fn surrogate_constant(&self, anchor: &[f64]) -> f64 {
        let i0 = self.interference_at(anchor);
        -(self.noise + i0).log2() + i0 / (LN_2 * (self.noise + i0))
    }

    /// `surrogate + surrogate_constant`; never above [`RateTerm::rate`], equal at the anchor.
    pub fn minorant(&self, p: &[f64], anchor: &[f64]) -> f64 {
        self.surrogate(p, anchor) + self.surrogate_constant(anchor)
    }
}

/// Scalar description of a weighted-sum-rate problem over the stream powers
/// `[p_c | p_1 | ... | p_K]` (mW).
#[derive(Debug, Clone, PartialEq)]
pub struct WsrInstance {
    pub common_streams: usize,
    pub private_sizes: Vec<usize>,
    /// Power cost per variable: `c_l` for common streams, 1 for private ones.
    pub cost: Vec<f64>,
    /// Members decoding the common message, in order.
    pub members: Vec<usize>,
    /// `common_terms[l][i]`: stream `l` at member `members[i]`.
    pub common_terms: Vec<Vec<RateTerm>>,
    /// `private_terms[k][l]`.
    pub private_terms: Vec<Vec<RateTerm>>,
    pub weights: Vec<f64>,
    pub fractions: Vec<f64>,
}

/// Index of private stream `l` of user `k` among `sizes` after `offset` common streams.
pub fn private_term_index(offset: usize, sizes: &[usize], k: usize, l: usize) -> usize {
    offset + sizes[..k].iter().sum::<usize>() + l
}

impl WsrInstance {
    /// Matched-CSI rate model of a precoder design; path losses and noise come from `channels`.
    pub fn from_design(design: &PrecoderDesign, channels: &ChannelSet, weights: &[f64]) -> Result<Self> {
        let k_total = design.num_users();
        validate_weights(weights, k_total)?;
        let m = design.common_streams();
        let sizes: Vec<usize> = (0..k_total).map(|k| design.private_streams(k)).collect();
        let noise = channels.noise_var();
        let members = design.group.members().to_vec();

        let mut common_terms = vec![Vec::with_capacity(members.len()); m];
        if let Some(cp) = &design.common {
            for &k in &members {
                let rx = cp.receiver(k).expect("member has a receiver");
                let w = design.pm_to_cm[k].as_ref().expect("member has W_k");
                let inv_l = 1.0 / channels.user(k).path_loss;
                for (l, terms) in common_terms.iter_mut().enumerate() {
                    terms.push(RateTerm {
                        user: k,
                        signal: (l, inv_l * rx.gains[l] * rx.gains[l]),
                        interference: (0..sizes[k])
                            .map(|i| (private_term_index(m, &sizes, k, i), inv_l * w[(l, i)].norm_sqr()))
                            .collect(),
                        noise: noise * rx.noise_gain[l],
                    });
                }
            }
        }

        let private_terms = (0..k_total)
            .map(|k| {
                let inv_l = 1.0 / channels.user(k).path_loss;
                let pp = &design.private[k];
                let member = design.group.contains(k);
                (0..sizes[k])
                    .map(|l| RateTerm {
                        user: k,
                        signal: (private_term_index(m, &sizes, k, l), inv_l * pp.sigma[l] * pp.sigma[l]),
                        interference: if member {
                            Vec::new()
                        } else {
                            (0..m)
                                .map(|i| (i, inv_l * design.cm_to_pm[k][(l, i)].norm_sqr()))
                                .collect()
                        },
                        noise,
                    })
                    .collect()
            })
            .collect();

        let mut cost = design.common_cost();
        cost.extend(std::iter::repeat_n(1.0, sizes.iter().sum()));
        Ok(Self {
            common_streams: m,
            private_sizes: sizes,
            cost,
            members,
            common_terms,
            private_terms,
            weights: weights.to_vec(),
            fractions: design.group.fractions(),
        })
    }

    pub fn num_vars(&self) -> usize {
        self.common_streams + self.private_sizes.iter().sum::<usize>()
    }

    pub fn num_users(&self) -> usize {
        self.private_sizes.len()
    }

    pub fn private_index(&self, k: usize, l: usize) -> usize {
        private_term_index(self.common_streams, &self.private_sizes, k, l)
    }

    /// `sum_k w_k v_k`, the weight on each common-stream rate.
    pub fn common_weight(&self) -> f64 {
        self.weights.iter().zip(&self.fractions).map(|(w, v)| w * v).sum()
    }

    pub fn constraint_power(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.cost).map(|(x, c)| x * c).sum()
    }

    pub fn to_allocation(&self, p: &[f64]) -> PowerAllocation {
        let m = self.common_streams;
        let mut offset = m;
        let private = self
            .private_sizes
            .iter()
            .map(|&s| {
                let v = p[offset..offset + s].to_vec();
                offset += s;
                v
            })
            .collect();
        PowerAllocation {
            common: p[..m].to_vec(),
            private,
        }
    }

    pub fn from_allocation(&self, powers: &PowerAllocation) -> Result<Vec<f64>> {
        let v = powers.to_vec();
        if v.len() != self.num_vars() || powers.common.len() != self.common_streams {
            return Err(Error::DimensionMismatch(
                "allocation does not match the instance".into(),
            ));
        }
        Ok(v)
    }

    /// `R_c,l` per common stream.
    pub fn common_rates(&self, p: &[f64]) -> Vec<f64> {
        self.common_terms
            .iter()
            .map(|terms| terms.iter().map(|t| t.rate(p)).fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn true_wsr(&self, p: &[f64]) -> f64 {
        let cm: f64 = self.common_rates(p).iter().sum();
        let pm: f64 = self
            .private_terms
            .iter()
            .zip(&self.weights)
            .map(|(terms, w)| w * terms.iter().map(|t| t.rate(p)).sum::<f64>())
            .sum();
        self.common_weight() * cm + pm
    }

    pub fn true_sum_rate(&self, p: &[f64]) -> f64 {
        let cm: f64 = self.common_rates(p).iter().sum();
        cm + self.private_terms.iter().flatten().map(|t| t.rate(p)).sum::<f64>()
    }

    /// Weighted sum of minorants at `p` for linearization point `anchor`.
    pub fn surrogate_wsr(&self, p: &[f64], anchor: &[f64]) -> f64 {
        let cm: f64 = self
            .common_terms
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| t.minorant(p, anchor))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        let pm: f64 = self
            .private_terms
            .iter()
            .zip(&self.weights)
            .map(|(terms, w)| w * terms.iter().map(|t| t.minorant(p, anchor)).sum::<f64>())
            .sum();
        self.common_weight() * cm + pm
    }
}

fn checked_vectors(inst: &WsrInstance, powers: &PowerAllocation, anchor: &PowerAllocation) -> Result<(Vec<f64>, Vec<f64>)> {
    let p = inst.from_allocation(powers)?;
    let a = inst.from_allocation(anchor)?;
    if p.iter().chain(&a).any(|x| !(*x >= 0.0)) {
        return Err(Error::Domain("powers must be nonnegative".into()));
    }
    Ok((p, a))
}

fn common_term<'a>(inst: &'a WsrInstance, k: usize, l: usize) -> Result<&'a RateTerm> {
    let pos = inst
        .members
        .iter()
        .position(|&j| j == k)
        .ok_or_else(|| Error::Index(format!("user {k} does not decode the common message")))?;
    inst.common_terms
        .get(l)
        .map(|terms| &terms[pos])
        .ok_or_else(|| Error::Index(format!("common stream {l}")))
}

fn private_term<'a>(inst: &'a WsrInstance, k: usize, l: usize) -> Result<&'a RateTerm> {
    inst.private_terms
        .get(k)
        .and_then(|terms| terms.get(l))
        .ok_or_else(|| Error::Index(format!("private stream {l} of user {k}")))
}

/// Non-constant part of the common-rate minorant of stream `l` at member `k`.
pub fn surrogate_common_rate(
    inst: &WsrInstance,
    powers: &PowerAllocation,
    anchor: &PowerAllocation,
    k: usize,
    l: usize,
) -> Result<f64> {
    let (p, a) = checked_vectors(inst, powers, anchor)?;
    Ok(common_term(inst, k, l)?.surrogate(&p, &a))
}

pub fn surrogate_common_constant(inst: &WsrInstance, anchor: &PowerAllocation, k: usize, l: usize) -> Result<f64> {
    let (a, _) = checked_vectors(inst, anchor, anchor)?;
    Ok(common_term(inst, k, l)?.surrogate_constant(&a))
}

/// Non-constant part of the private-rate minorant of stream `l` of user `k`.
pub fn surrogate_private_rate(
    inst: &WsrInstance,
    powers: &PowerAllocation,
    anchor: &PowerAllocation,
    k: usize,
    l: usize,
) -> Result<f64> {
    let (p, a) = checked_vectors(inst, powers, anchor)?;
    Ok(private_term(inst, k, l)?.surrogate(&p, &a))
}

pub fn surrogate_private_constant(inst: &WsrInstance, anchor: &PowerAllocation, k: usize, l: usize) -> Result<f64> {
    let (a, _) = checked_vectors(inst, anchor, anchor)?;
    Ok(private_term(inst, k, l)?.surrogate_constant(&a))
}
