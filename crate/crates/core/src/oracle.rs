//! Symbol-level transmission used to check the analytic SINR expressions.
//!
//! Gaussian symbol blocks are precoded, passed through `H_k / sqrt(L_k)`
//! plus noise, and detected exactly as a receiver would: `E_k^+` for the
//! common message, cancellation of the decoded common symbols through the
//! true channel, then `U_k^H` for the private message. Each stream's desired
//! coefficient is measured with a noiseless unit pilot sent on that stream
//! alone; its interference-plus-noise power is the mean square of what
//! remains of the detector output once the desired term is removed.

use std::path::Path;

use serde::Serialize;

use crate::channel::ChannelSet;
use crate::precoder::PrecoderSet;
use crate::rates::{detectors, ReceiverCsi, SinrTable, SINR_CAP};
use crate::rng::{complex_gaussian_matrix, stream_rng};
use crate::{CMat, Error, Result, C64};

const BLOCK: usize = 4096;

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub symbols: usize,
    pub seed: u64,
    pub receiver: ReceiverCsi,
    /// Drop the receiver noise entirely.
    pub noiseless: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            symbols: 100_000,
            seed: 0,
            receiver: ReceiverCsi::Estimated,
            noiseless: false,
        }
    }
}

/// Desired coefficient and accumulated residual power of one stream.
#[derive(Debug, Clone, Copy, Default)]
struct Residual {
    gain: C64,
    power: f64,
    n: usize,
}

impl Residual {
    fn push(&mut self, y: C64, s: C64) {
        self.power += (y - self.gain * s).norm_sqr();
        self.n += 1;
    }

    fn sinr(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let signal = self.gain.norm_sqr();
        let residual = self.power / self.n as f64;
        if residual <= signal / SINR_CAP {
            SINR_CAP
        } else {
            signal / residual
        }
    }
}

/// Measures every stream's SINR over `opts.symbols` transmissions.
pub fn symbol_oracle(pre: &PrecoderSet, channels: &ChannelSet, opts: &OracleOptions) -> Result<SinrTable> {
    let design = &pre.design;
    let k_total = channels.num_users();
    if k_total != design.num_users() || pre.p_c.nrows() != channels.bs_antennas() {
        return Err(Error::DimensionMismatch(
            "precoder and channel set disagree on the system size".into(),
        ));
    }
    let det = detectors(pre, channels, opts.receiver)?;
    let m = pre.p_c.ncols();
    let members = design.group.members().to_vec();

    let mut cm_stats = vec![vec![Residual::default(); m]; members.len()];
    let mut pm_stats: Vec<Vec<Residual>> = pre
        .p_k
        .iter()
        .map(|p| vec![Residual::default(); p.ncols()])
        .collect();

    // Stream 0 draws symbols, stream 1 + k draws user k's noise.
    let mut sym_rng = stream_rng(opts.seed, 0);
    let mut noise_rngs: Vec<_> = (0..k_total).map(|k| stream_rng(opts.seed, 1 + k as u64)).collect();
    let sigma2 = channels.noise_var();
    let scaled_h: Vec<CMat> = (0..k_total)
        .map(|k| channels.h(k, false) * C64::new(1.0 / channels.user(k).path_loss.sqrt(), 0.0))
        .collect();

    // Pilots: one unit symbol per stream through the noiseless chain.
    for (pos, &k) in members.iter().enumerate() {
        if let Some(e) = &det.common[k] {
            let out = e * &scaled_h[k] * &pre.p_c;
            for l in 0..m {
                cm_stats[pos][l].gain = out[(l, l)];
            }
        }
    }
    for k in 0..k_total {
        let out = &det.private[k] * &scaled_h[k] * &pre.p_k[k];
        for l in 0..out.nrows() {
            pm_stats[k][l].gain = out[(l, l)];
        }
    }

    let mut remaining = opts.symbols;
    while remaining > 0 {
        let b = remaining.min(BLOCK);
        remaining -= b;
        let s_c = complex_gaussian_matrix(&mut sym_rng, m, b, 1.0);
        let s_k: Vec<CMat> = pre
            .p_k
            .iter()
            .map(|p| complex_gaussian_matrix(&mut sym_rng, p.ncols(), b, 1.0))
            .collect();
        let common_tx = &pre.p_c * &s_c;
        let mut tx = common_tx.clone();
        for (p, s) in pre.p_k.iter().zip(&s_k) {
            tx += p * s;
        }

        for k in 0..k_total {
            let mut y = &scaled_h[k] * &tx;
            if !opts.noiseless {
                y += complex_gaussian_matrix(&mut noise_rngs[k], y.nrows(), b, sigma2);
            }
            let pos = members.iter().position(|&j| j == k);
            if let Some(pos) = pos {
                if let Some(e) = &det.common[k] {
                    let out = e * &y;
                    for l in 0..m {
                        for t in 0..b {
                            cm_stats[pos][l].push(out[(l, t)], s_c[(l, t)]);
                        }
                    }
                }
                // SIC with the decoded common symbols and the true channel.
                y -= &scaled_h[k] * &common_tx;
            }
            let out = &det.private[k] * &y;
            for l in 0..out.nrows() {
                for t in 0..b {
                    pm_stats[k][l].push(out[(l, t)], s_k[k][(l, t)]);
                }
            }
        }
    }

    Ok(SinrTable {
        common: members
            .iter()
            .zip(&cm_stats)
            .map(|(&k, st)| (k, st.iter().map(Residual::sinr).collect()))
            .collect(),
        private: pm_stats
            .iter()
            .map(|st| st.iter().map(Residual::sinr).collect())
            .collect(),
    })
}

#[derive(Debug, Serialize)]
struct OracleRow<'a> {
    stream: &'a str,
    analytic_sinr: f64,
    measured_sinr: f64,
}

/// Writes `stream,analytic_sinr,measured_sinr` rows.
pub fn write_oracle_csv(path: &Path, analytic: &SinrTable, measured: &SinrTable) -> Result<()> {
    let a = analytic.labelled();
    let m = measured.labelled();
    if a.len() != m.len() || a.iter().zip(&m).any(|(x, y)| x.0 != y.0) {
        return Err(Error::DimensionMismatch(
            "analytic and measured tables list different streams".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path)?;
    for ((id, an), (_, me)) in a.iter().zip(&m) {
        w.serialize(OracleRow {
            stream: id,
            analytic_sinr: *an,
            measured_sinr: *me,
        })?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channels, ChannelConfig};
    use crate::precoder::{CommonGroup, PowerAllocation, PrecoderDesign};
    use crate::rates::{matched_sinrs, stream_sinrs};

    fn loaded(mu2: f64, seed: u64, group: Vec<usize>) -> (ChannelSet, PrecoderSet) {
        let mut cfg = ChannelConfig::reference_correlated(0.8, seed);
        cfg.csi_error_var = mu2;
        let ch = generate_channels(&cfg).unwrap();
        let d = PrecoderDesign::new(&ch, &CommonGroup::new(group, 4).unwrap(), mu2 > 0.0).unwrap();
        let mut p = PowerAllocation::zeros(&d);
        for (i, x) in p.common.iter_mut().chain(p.private.iter_mut().flatten()).enumerate() {
            *x = 1.0 + (i % 5) as f64 * 3.0;
        }
        let set = d.load(&p, 1e9).unwrap();
        (ch, set)
    }

    fn assert_close(a: &SinrTable, b: &SinrTable, tol: f64) {
        for ((id, x), (_, y)) in a.labelled().iter().zip(b.labelled().iter()) {
            assert!((x - y).abs() <= tol * x, "{id}: analytic {x} measured {y}");
        }
    }

    #[test]
    fn measured_matches_closed_form() {
        let (ch, set) = loaded(0.0, 1, vec![0, 2]);
        let opts = OracleOptions {
            symbols: 20_000,
            seed: 4,
            ..Default::default()
        };
        let measured = symbol_oracle(&set, &ch, &opts).unwrap();
        assert_close(&matched_sinrs(&set, &ch).unwrap(), &measured, 0.05);
    }

    #[test]
    fn measured_matches_full_model_with_csi_error() {
        let (ch, set) = loaded(0.1, 2, vec![1, 2, 3]);
        let opts = OracleOptions {
            symbols: 20_000,
            seed: 5,
            ..Default::default()
        };
        let measured = symbol_oracle(&set, &ch, &opts).unwrap();
        let analytic = stream_sinrs(&set, &ch, ReceiverCsi::Estimated).unwrap();
        assert_close(&analytic, &measured, 0.05);
    }

    #[test]
    fn noiseless_interference_free_stream_hits_the_cap() {
        let (ch, set) = loaded(0.0, 3, vec![0]);
        let mut p = set.powers.clone();
        p.private[0].iter_mut().for_each(|x| *x = 0.0);
        let set = set.design.load(&p, 1e9).unwrap();
        let opts = OracleOptions {
            symbols: 10_000,
            noiseless: true,
            ..Default::default()
        };
        let measured = symbol_oracle(&set, &ch, &opts).unwrap();
        for s in &measured.common[0].1 {
            assert_eq!(*s, SINR_CAP);
        }
    }

    #[test]
    fn csv_has_one_row_per_stream() {
        let (ch, set) = loaded(0.0, 4, vec![0, 1]);
        let analytic = matched_sinrs(&set, &ch).unwrap();
        let dir = std::env::temp_dir().join(format!("sdrsma-oracle-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("oracle.csv");
        write_oracle_csv(&path, &analytic, &analytic).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "stream,analytic_sinr,measured_sinr");
        assert_eq!(lines.len(), 1 + 2 * 4 + 16);
        assert!(lines[1].starts_with("cm-u1-s1,"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
