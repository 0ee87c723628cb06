//! Uplink OFDMA numerology, tile allocation and hopping pilot patterns.
//!
//! A tile is 4 contiguous subcarriers by 3 OFDMA symbols with pilots on the
//! four corners. Two virtual-MIMO users split the corners diagonally:
//!
//! ```text
//!            k0   k0+1 k0+2 k0+3
//! symbol 0   A    d    d    B
//! symbol 1   d    d    d    d
//! symbol 2   B    d    d    A
//! ```
//!
//! so for user A the odd-symbol pilots are the even-symbol pilots shifted by
//! `ν = +3`, and for user B by `ν = -3`. Symbol 0 plays the even symbol and
//! symbol 2 the odd symbol of a hopping pair; symbol 1 carries no pilots.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelProfile, ToneSteering};
use crate::error::{Error, Result};
use crate::numerics::{complex_gaussian, seeded_rng, C64};

pub const TILE_WIDTH: usize = 4;
pub const TILE_SYMBOLS: usize = 3;
pub const TILES_PER_SUBCHANNEL: usize = 6;
/// Pilot offset between the two diagonal corners of a tile.
pub const TILE_NU: i64 = (TILE_WIDTH - 1) as i64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub bw_hz: f64,
    pub n_fft: usize,
    pub n_used: usize,
    pub l_cp: usize,
    pub f_c_hz: f64,
}

impl Default for SystemConfig {
    /// 10 MHz WiMAX: N = 1024, 840 used tones, CP of 128 samples, 3.5 GHz carrier.
    fn default() -> Self {
        Self {
            bw_hz: 10e6,
            n_fft: 1024,
            n_used: 840,
            l_cp: 128,
            f_c_hz: 3.5e9,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bw_hz > 0.0) || !self.bw_hz.is_finite() {
            return Err(Error::Config(format!("bw_hz must be positive, got {}", self.bw_hz)));
        }
        if self.n_fft == 0 || self.n_used == 0 || self.n_used > self.n_fft {
            return Err(Error::Config(format!(
                "need 0 < n_used <= n_fft, got n_used={} n_fft={}",
                self.n_used, self.n_fft
            )));
        }
        if self.l_cp == 0 || self.l_cp >= self.n_fft {
            return Err(Error::Config(format!("need 0 < l_cp < n_fft, got {}", self.l_cp)));
        }
        Ok(())
    }

    /// Sampling period `T = 1/BW`.
    pub fn sample_period(&self) -> f64 {
        1.0 / self.bw_hz
    }

    /// Symbol duration `T_s = (N + L_cp)/BW`.
    pub fn symbol_duration(&self) -> f64 {
        (self.n_fft + self.l_cp) as f64 / self.bw_hz
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// Noise variance for a per-tone SNR in dB with unit-power channel and symbols.
pub fn noise_var_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileAllocation {
    /// First subcarrier of each tile, ascending.
    pub tile_starts: Vec<usize>,
    pub tiles_per_user: usize,
    pub triplet_index: u64,
}

impl TileAllocation {
    /// All subcarriers of all tiles, tile by tile.
    pub fn tile_tones(&self) -> Vec<usize> {
        self.tile_starts.iter().flat_map(|&k0| k0..k0 + TILE_WIDTH).collect()
    }

    /// Inner (non-corner) subcarriers: the data tones of the pilot-bearing symbols.
    pub fn inner_tones(&self) -> Vec<usize> {
        self.tile_starts
            .iter()
            .flat_map(|&k0| k0 + 1..k0 + TILE_WIDTH - 1)
            .collect()
    }
}

/// Draws `6·n_sch` disjoint tiles from the 4-aligned grid of usable tones.
///
/// The draw is a deterministic function of `(seed, triplet_index)`.
pub fn random_tile_allocation(
    cfg: &SystemConfig,
    n_sch: usize,
    seed: u64,
    triplet_index: u64,
) -> Result<TileAllocation> {
    let tiles = TILES_PER_SUBCHANNEL * n_sch;
    let slots = cfg.n_used / TILE_WIDTH;
    if n_sch == 0 || tiles > slots {
        return Err(Error::Allocation(format!(
            "{n_sch} subchannels need {tiles} tiles but only {slots} fit in {} usable tones",
            cfg.n_used
        )));
    }
    let mut rng = seeded_rng(seed, triplet_index);
    let mut tile_starts: Vec<usize> = rand::seq::index::sample(&mut rng, slots, tiles)
        .into_iter()
        .map(|s| s * TILE_WIDTH)
        .collect();
    tile_starts.sort_unstable();
    Ok(TileAllocation {
        tile_starts,
        tiles_per_user: tiles,
        triplet_index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UserRole {
    #[default]
    A,
    B,
}

impl UserRole {
    pub fn nu(self) -> i64 {
        match self {
            UserRole::A => TILE_NU,
            UserRole::B => -TILE_NU,
        }
    }

    pub fn from_nu(nu: i64) -> Result<Self> {
        match nu {
            TILE_NU => Ok(UserRole::A),
            n if n == -TILE_NU => Ok(UserRole::B),
            _ => Err(Error::Config(format!(
                "tile geometry fixes the hopping offset to ±{TILE_NU}, got {nu}"
            ))),
        }
    }
}

/// Pilot tones of a hopping pair: `pilots_odd[i] = pilots_even[i] + nu`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PilotPattern {
    pub pilots_even: Vec<usize>,
    pub pilots_odd: Vec<usize>,
    pub nu: i64,
    pub p: usize,
}

impl PilotPattern {
    /// Generic inner-hopping pattern for non-tile experiments.
    pub fn with_offset(pilots_even: Vec<usize>, nu: i64, n_fft: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::Config("hopping offset must be non-zero".into()));
        }
        let pilots_odd = pilots_even
            .iter()
            .map(|&k| {
                let shifted = k as i64 + nu;
                if shifted < 0 || shifted >= n_fft as i64 {
                    Err(Error::Index {
                        index: shifted.max(0) as usize,
                        bound: n_fft,
                    })
                } else {
                    Ok(shifted as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let p = pilots_even.len();
        Ok(Self {
            pilots_even,
            pilots_odd,
            nu,
            p,
        })
    }
}

/// Diagonal corner pilots of every tile for one virtual-MIMO user.
pub fn pilot_pattern(alloc: &TileAllocation, role: UserRole) -> PilotPattern {
    let last = TILE_WIDTH - 1;
    let (even_off, odd_off) = match role {
        UserRole::A => (0, last),
        UserRole::B => (last, 0),
    };
    let pilots_even = alloc.tile_starts.iter().map(|k| k + even_off).collect();
    let pilots_odd = alloc.tile_starts.iter().map(|k| k + odd_off).collect();
    PilotPattern {
        pilots_even,
        pilots_odd,
        nu: role.nu(),
        p: alloc.tile_starts.len(),
    }
}

/// Gray-mapped QPSK: `00→(1+j)/√2, 01→(-1+j)/√2, 11→(-1-j)/√2, 10→(1-j)/√2`.
pub fn modulate_qpsk(bits: &[bool]) -> Result<Vec<C64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::Length(format!(
            "QPSK needs an even bit count, got {}",
            bits.len()
        )));
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    Ok(bits
        .chunks_exact(2)
        .map(|b| {
            let im = if b[0] { -a } else { a };
            let re = if b[1] { -a } else { a };
            C64::new(re, im)
        })
        .collect())
}

pub fn random_qpsk<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let bits: Vec<bool> = (0..2 * n).map(|_| rng.random()).collect();
    modulate_qpsk(&bits).expect("even bit count")
}

/// `p` unit-modulus QPSK pilot values, fixed by `seed`.
pub fn pilot_symbols(p: usize, seed: u64) -> Vec<C64> {
    random_qpsk(p, &mut seeded_rng(seed, 0))
}

/// One symbol's worth of transmitted, true and received values on a tone set.
#[derive(Debug, Clone)]
pub struct ToneObservation {
    pub symbol_index: usize,
    pub tones: Vec<usize>,
    pub tx: Vec<C64>,
    pub cfr_true: Vec<C64>,
    pub rx: Vec<C64>,
    pub noise_var: f64,
}

/// Frequency-domain received signal `rx = tx ⊙ H + w` with `w ~ CN(0, noise_var)`.
#[allow(clippy::too_many_arguments)]
pub fn observe_symbol<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    symbol_index: usize,
    tones: &[usize],
    tx: &[C64],
    gains: &[C64],
    profile: &ChannelProfile,
    noise_var: f64,
    rng: &mut R,
) -> Result<ToneObservation> {
    let steering = ToneSteering::new(&profile.delays_norm, tones, cfg.n_fft)?;
    observe_with_steering(&steering, symbol_index, tx, gains, noise_var, rng)
}

/// [`observe_symbol`] with a precomputed tone steering matrix.
pub fn observe_with_steering<R: Rng + ?Sized>(
    steering: &ToneSteering,
    symbol_index: usize,
    tx: &[C64],
    gains: &[C64],
    noise_var: f64,
    rng: &mut R,
) -> Result<ToneObservation> {
    if tx.len() != steering.tones.len() {
        return Err(Error::Dimension(format!(
            "{} transmit values for {} tones",
            tx.len(),
            steering.tones.len()
        )));
    }
    let cfr_true = steering.cfr(gains)?;
    let noise = complex_gaussian(tx.len(), noise_var, rng);
    let rx = tx
        .iter()
        .zip(&cfr_true)
        .zip(&noise)
        .map(|((x, h), w)| x * h + w)
        .collect();
    Ok(ToneObservation {
        symbol_index,
        tones: steering.tones.clone(),
        tx: tx.to_vec(),
        cfr_true,
        rx,
        noise_var,
    })
}
