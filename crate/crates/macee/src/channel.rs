//! Rayleigh channel generation and per-user decompositions.
//!
//! Each user's channel is decomposed once per coherence block; the solver
//! then works entirely in the rotated frame of its own left singular basis,
//! where the cross-user coupling factors precomputed here describe all
//! interference.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::matrix::{ComplexMatrix, SvdFactors};
use crate::scalar::Scalar;

/// One user's channel matrix (receive antennas x transmit antennas).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix<S> {
    pub user_index: usize,
    pub h: ComplexMatrix<S>,
}

/// SVD factors of one user's channel plus the cross-user coupling factors
/// `cross_factors[j] = u_k^H u_j diag_rect(sigma_j)` expressed in user k's
/// left singular basis. The own-index factor equals `diag_rect(sigma_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDecomposition<S> {
    pub user_index: usize,
    pub factors: SvdFactors<S>,
    pub cross_factors: Vec<ComplexMatrix<S>>,
}

/// The channels, decompositions and noise level for one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<S> {
    pub channels: Vec<ChannelMatrix<S>>,
    pub decompositions: Vec<ChannelDecomposition<S>>,
    pub noise_power: S,
    pub seed: u64,
}

/// Derive the seed for a numbered stream from a master seed (splitmix64
/// over a golden-ratio offset). Distinct indices give distinct seeds.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample an nr x nt matrix with i.i.d. unit-variance circularly-symmetric
/// complex Gaussian entries (real and imaginary parts each N(0, 1/2)).
///
/// Entries are drawn row-major via Box-Muller in `f64` and then converted,
/// so the realization is a pure function of the stream state regardless of
/// the scalar type.
pub fn sample_rayleigh<S: Scalar, R: Rng>(nr: usize, nt: usize, rng: &mut R) -> ComplexMatrix<S> {
    let mut entries = Vec::with_capacity(nr * nt);
    for _ in 0..nr * nt {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        let re = r * angle.cos() * std::f64::consts::FRAC_1_SQRT_2;
        let im = r * angle.sin() * std::f64::consts::FRAC_1_SQRT_2;
        entries.push(Complex::new(S::real(re), S::real(im)));
    }
    ComplexMatrix::new(nr, nt, entries).expect("sampled entries are finite")
}

/// Decompose the reference user's channel and precompute its coupling
/// factors against every user in `channels`.
pub fn decompose_all<S: Scalar>(
    channels: &[ChannelMatrix<S>],
    reference_user: usize,
) -> Result<ChannelDecomposition<S>> {
    let reference = channels.get(reference_user).ok_or_else(|| Error::Dimension {
        context: format!(
            "reference user {reference_user} out of range for {} channels",
            channels.len()
        ),
    })?;
    let nr = reference.h.rows();
    for ch in channels {
        if ch.h.rows() != nr {
            return Err(Error::Dimension {
                context: format!(
                    "user {} has {} receive antennas, expected {nr}",
                    ch.user_index,
                    ch.h.rows()
                ),
            });
        }
    }
    let factors = reference.h.svd()?;
    let u_ref_h = factors.u.adjoint();
    let mut cross_factors = Vec::with_capacity(channels.len());
    for (j, ch) in channels.iter().enumerate() {
        let f = if j == reference_user {
            factors.clone()
        } else {
            ch.h.svd()?
        };
        let rect = ComplexMatrix::diag_rect(&f.sigma, nr, ch.h.cols());
        cross_factors.push(u_ref_h.matmul(&f.u).matmul(&rect));
    }
    Ok(ChannelDecomposition {
        user_index: reference_user,
        factors,
        cross_factors,
    })
}

impl<S: Scalar> ChannelSet<S> {
    /// Draw all users' channels from the seed and decompose them.
    ///
    /// Per-user submatrices are drawn in user order, row-major, so the set
    /// is a pure function of (seed, k_users, nr, nt).
    pub fn generate(cfg: &GameConfig<S>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels: Vec<ChannelMatrix<S>> = (0..cfg.k_users)
            .map(|k| ChannelMatrix {
                user_index: k,
                h: sample_rayleigh(cfg.nr, cfg.nt, &mut rng),
            })
            .collect();
        let decompositions = (0..cfg.k_users)
            .map(|k| decompose_all(&channels, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channels,
            decompositions,
            noise_power: cfg.noise_power,
            seed,
        })
    }

    /// Build a set from explicit channel matrices (test fixtures and
    /// hand-constructed instances). The stored seed is zero.
    pub fn from_matrices(matrices: Vec<ComplexMatrix<S>>, noise_power: S) -> Result<Self> {
        let channels: Vec<ChannelMatrix<S>> = matrices
            .into_iter()
            .enumerate()
            .map(|(k, h)| ChannelMatrix { user_index: k, h })
            .collect();
        let decompositions = (0..channels.len())
            .map(|k| decompose_all(&channels, k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            channels,
            decompositions,
            noise_power,
            seed: 0,
        })
    }

    pub fn k_users(&self) -> usize {
        self.channels.len()
    }

    /// Serialize to the text fixture format: '#'-prefixed comments, one
    /// header row `k_users,nr,nt,noise_power,seed`, then one row per user of
    /// comma-separated interleaved real/imag entries in row-major order.
    pub fn to_fixture_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# macee channel fixture v1\n");
        out.push_str("# k_users,nr,nt,noise_power,seed\n");
        let nr = self.channels[0].h.rows();
        let nt = self.channels[0].h.cols();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            self.k_users(),
            nr,
            nt,
            self.noise_power,
            self.seed
        ));
        for ch in &self.channels {
            let parts: Vec<String> = ch
                .h
                .entries()
                .iter()
                .flat_map(|e| [format!("{}", e.re), format!("{}", e.im)])
                .collect();
            out.push_str(&parts.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse the fixture format written by [`ChannelSet::to_fixture_csv`].
    pub fn from_fixture_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (header_no, header) = lines.next().ok_or(Error::Fixture {
            line: 0,
            message: "missing header row".into(),
        })?;
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Fixture {
                line: header_no + 1,
                message: format!("header needs 5 fields, got {}", fields.len()),
            });
        }
        let parse_usize = |s: &str, line: usize| {
            s.trim().parse::<usize>().map_err(|e| Error::Fixture {
                line,
                message: format!("bad integer {s:?}: {e}"),
            })
        };
        let k = parse_usize(fields[0], header_no + 1)?;
        let nr = parse_usize(fields[1], header_no + 1)?;
        let nt = parse_usize(fields[2], header_no + 1)?;
        let noise: f64 = fields[3].trim().parse().map_err(|e| Error::Fixture {
            line: header_no + 1,
            message: format!("bad noise power {:?}: {e}", fields[3]),
        })?;
        let seed: u64 = fields[4].trim().parse().map_err(|e| Error::Fixture {
            line: header_no + 1,
            message: format!("bad seed {:?}: {e}", fields[4]),
        })?;

        let mut matrices = Vec::with_capacity(k);
        for user in 0..k {
            let (line_no, row) = lines.next().ok_or(Error::Fixture {
                line: header_no + 2 + user,
                message: format!("missing data row for user {user}"),
            })?;
            let values: Vec<f64> = row
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| Error::Fixture {
                        line: line_no + 1,
                        message: format!("bad entry {s:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != 2 * nr * nt {
                return Err(Error::Fixture {
                    line: line_no + 1,
                    message: format!(
                        "expected {} interleaved entries, got {}",
                        2 * nr * nt,
                        values.len()
                    ),
                });
            }
            let entries = values
                .chunks_exact(2)
                .map(|p| Complex::new(S::real(p[0]), S::real(p[1])))
                .collect();
            matrices.push(ComplexMatrix::new(nr, nt, entries)?);
        }
        let mut set = Self::from_matrices(matrices, S::real(noise))?;
        set.seed = seed;
        Ok(set)
    }
}
