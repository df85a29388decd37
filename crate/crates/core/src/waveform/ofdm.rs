//! OFDM field builders for the legacy (g), HT-style (n) and HE-style (ax)
//! generators.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dsp::ifft_in_place;
use crate::Complex;

pub(crate) const LEGACY_FFT: usize = 64;
pub(crate) const HE_FFT: usize = 256;

/// L-STF tone values for k = -24, -20, ..., 24 (k = 0 excluded), before scaling.
const LSTF_TONES: [(i32, f64); 12] = [
    (-24, 1.0),
    (-20, -1.0),
    (-16, 1.0),
    (-12, -1.0),
    (-8, -1.0),
    (-4, 1.0),
    (4, -1.0),
    (8, -1.0),
    (12, 1.0),
    (16, 1.0),
    (20, 1.0),
    (24, 1.0),
];

/// L-LTF BPSK values for k = -26..=26 (index 26 is DC).
const LLTF: [i8; 53] = [
    1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 0, 1,
    -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1,
];

/// HE-STF sign pattern on k = -112, -96, ..., 112.
const HESTF_M: [i8; 15] = [-1, -1, -1, 1, 1, 1, -1, 1, 1, 1, -1, 1, 1, -1, 1];

const LEGACY_PILOTS: [i32; 4] = [-21, -7, 7, 21];
const HE_PILOTS: [i32; 8] = [-116, -90, -48, -22, 22, 48, 90, 116];

/// 127-periodic pilot polarity sequence from the x^7 + x^4 + 1 scrambler
/// seeded with all ones.
pub(crate) fn pilot_polarity(n: usize) -> f64 {
    let mut state: u8 = 0x7f;
    let mut bit = 0;
    for _ in 0..=(n % 127) {
        bit = ((state >> 6) ^ (state >> 3)) & 1;
        state = ((state << 1) | bit) & 0x7f;
    }
    if bit == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Places `tones` on an `fft_len` grid, transforms to time domain with unit
/// mean power and returns the `fft_len` useful samples.
pub(crate) fn ofdm_body(tones: &[(i32, Complex)], fft_len: usize) -> Vec<Complex> {
    let mut grid = vec![Complex::new(0.0, 0.0); fft_len];
    let mut energy = 0.0;
    for &(k, v) in tones {
        let bin = k.rem_euclid(fft_len as i32) as usize;
        grid[bin] = v;
        energy += v.norm_sqr();
    }
    ifft_in_place(&mut grid);
    let scale = if energy > 0.0 { fft_len as f64 / energy.sqrt() } else { 0.0 };
    grid.iter().map(|&v| v * scale).collect()
}

/// Cyclic prefix of `cp_len` samples followed by the body.
pub(crate) fn with_cyclic_prefix(body: &[Complex], cp_len: usize) -> Vec<Complex> {
    let n = body.len();
    let mut out = Vec::with_capacity(n + cp_len);
    out.extend_from_slice(&body[n - cp_len..]);
    out.extend_from_slice(body);
    out
}

/// `len` samples of the periodic extension of `body`.
fn periodic(body: &[Complex], len: usize) -> Vec<Complex> {
    (0..len).map(|i| body[i % body.len()]).collect()
}

fn lstf_tones() -> Vec<(i32, Complex)> {
    LSTF_TONES
        .iter()
        .map(|&(k, s)| (k, Complex::new(s, s)))
        .collect()
}

fn lltf_tones() -> Vec<(i32, Complex)> {
    LLTF.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, &v)| (i as i32 - 26, Complex::new(v as f64, 0.0)))
        .collect()
}

/// Legacy short training field: ten 16-sample repetitions (160 samples).
pub(crate) fn legacy_stf() -> Vec<Complex> {
    periodic(&ofdm_body(&lstf_tones(), LEGACY_FFT), 160)
}

/// Legacy long training field: 32-sample guard plus two symbols (160 samples).
pub(crate) fn legacy_ltf() -> Vec<Complex> {
    let body = ofdm_body(&lltf_tones(), LEGACY_FFT);
    let mut out = Vec::with_capacity(160);
    out.extend_from_slice(&body[32..]);
    out.extend_from_slice(&body);
    out.extend_from_slice(&body);
    out
}

/// Data tone indices of a 20 MHz grid spanning `-edge..=edge` without DC and pilots.
fn data_tones(edge: i32, pilots: &[i32], dc_half_width: i32) -> Vec<i32> {
    (-edge..=edge)
        .filter(|k| k.abs() > dc_half_width && !pilots.contains(k))
        .collect()
}

/// Gray-coded, unit-average-power 16-QAM.
pub(crate) fn qam16(bits: [bool; 4]) -> Complex {
    let level = |b0: bool, b1: bool| match (b0, b1) {
        (false, false) => -3.0,
        (false, true) => -1.0,
        (true, true) => 1.0,
        (true, false) => 3.0,
    };
    Complex::new(level(bits[0], bits[1]), level(bits[2], bits[3])) / 10f64.sqrt()
}

/// Pulls bits from `payload` first, then from `rng`.
pub(crate) struct BitSource<'a, R: Rng + ?Sized> {
    payload: &'a [bool],
    pos: usize,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> BitSource<'a, R> {
    pub(crate) fn new(payload: &'a [bool], rng: &'a mut R) -> Self {
        Self { payload, pos: 0, rng }
    }

    pub(crate) fn next_bit(&mut self) -> bool {
        if self.pos < self.payload.len() {
            self.pos += 1;
            self.payload[self.pos - 1]
        } else {
            self.rng.random()
        }
    }

    fn next_nibble(&mut self) -> [bool; 4] {
        [self.next_bit(), self.next_bit(), self.next_bit(), self.next_bit()]
    }
}

/// Signalling symbol: BPSK (or QBPSK when `rotated`) on the 48 legacy data
/// tones carrying `bits` with each bit repeated twice.
pub(crate) fn signal_symbol(bits: &[bool; 24], rotated: bool, symbol_index: usize) -> Vec<Complex> {
    let tones = data_tones(26, &LEGACY_PILOTS, 0);
    let mut spec: Vec<(i32, Complex)> = tones
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let b = if bits[i / 2] { 1.0 } else { -1.0 };
            let v = if rotated { Complex::new(0.0, b) } else { Complex::new(b, 0.0) };
            (k, v)
        })
        .collect();
    spec.extend(legacy_pilots(symbol_index));
    with_cyclic_prefix(&ofdm_body(&spec, LEGACY_FFT), 16)
}

fn legacy_pilots(symbol_index: usize) -> Vec<(i32, Complex)> {
    let p = pilot_polarity(symbol_index);
    LEGACY_PILOTS
        .iter()
        .zip([1.0, 1.0, 1.0, -1.0])
        .map(|(&k, s)| (k, Complex::new(p * s, 0.0)))
        .collect()
}

/// Rate/length signalling bits with even parity and a zero tail.
pub(crate) fn signal_bits(rate_code: u8, length: u16) -> [bool; 24] {
    let mut bits = [false; 24];
    for i in 0..4 {
        bits[i] = (rate_code >> (3 - i)) & 1 == 1;
    }
    for i in 0..12 {
        bits[5 + i] = (length >> i) & 1 == 1;
    }
    bits[17] = bits[..17].iter().filter(|&&b| b).count() % 2 == 1;
    bits
}

/// One non-HT data symbol: 48 16-QAM tones plus 4 pilots, 16-sample CP.
pub(crate) fn legacy_data_symbol<R: Rng + ?Sized>(
    bits: &mut BitSource<'_, R>,
    symbol_index: usize,
) -> Vec<Complex> {
    let mut spec: Vec<(i32, Complex)> = data_tones(26, &LEGACY_PILOTS, 0)
        .into_iter()
        .map(|k| (k, qam16(bits.next_nibble())))
        .collect();
    spec.extend(legacy_pilots(symbol_index));
    with_cyclic_prefix(&ofdm_body(&spec, LEGACY_FFT), 16)
}

/// HT-LTF tone values on k = -28..=28.
fn ht_ltf_tones() -> Vec<(i32, Complex)> {
    let mut tones = vec![(-28, Complex::new(1.0, 0.0)), (-27, Complex::new(1.0, 0.0))];
    tones.extend(lltf_tones());
    tones.push((27, Complex::new(-1.0, 0.0)));
    tones.push((28, Complex::new(-1.0, 0.0)));
    tones
}

/// HT short training field (4 us) followed by one HT long training symbol.
pub(crate) fn ht_training() -> Vec<Complex> {
    let mut out = periodic(&ofdm_body(&lstf_tones(), LEGACY_FFT), 80);
    out.extend(with_cyclic_prefix(&ofdm_body(&ht_ltf_tones(), LEGACY_FFT), 16));
    out
}

/// HT data symbol: 52 16-QAM tones plus 4 pilots on k = -28..=28 with the
/// short (8-sample) guard interval.
pub(crate) fn ht_data_symbol<R: Rng + ?Sized>(
    bits: &mut BitSource<'_, R>,
    symbol_index: usize,
) -> Vec<Complex> {
    let mut spec: Vec<(i32, Complex)> = data_tones(28, &LEGACY_PILOTS, 0)
        .into_iter()
        .map(|k| (k, qam16(bits.next_nibble())))
        .collect();
    spec.extend(legacy_pilots(symbol_index));
    with_cyclic_prefix(&ofdm_body(&spec, LEGACY_FFT), 8)
}

fn he_stf_tones() -> Vec<(i32, Complex)> {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    HESTF_M
        .iter()
        .enumerate()
        .map(|(i, &m)| (i as i32 * 16 - 112, m))
        .filter(|&(k, _)| k != 0)
        .map(|(k, m)| (k, Complex::new(m as f64 * s, m as f64 * s)))
        .collect()
}

/// Fixed +/-1 pattern for the 242 HE-LTF tones.
fn he_ltf_tones() -> Vec<(i32, Complex)> {
    let mut state: u16 = 0x1d3;
    (-122..=122)
        .filter(|k: &i32| k.abs() > 1)
        .map(|k| {
            let bit = ((state >> 8) ^ (state >> 4)) & 1;
            state = ((state << 1) | bit) & 0x1ff;
            (k, Complex::new(if bit == 1 { 1.0 } else { -1.0 }, 0.0))
        })
        .collect()
}

/// HE short training field (4 us, 0.8 us periodicity) followed by one 4x
/// HE long training symbol with a 3.2 us guard (320 samples).
pub(crate) fn he_training() -> Vec<Complex> {
    let mut out = periodic(&ofdm_body(&he_stf_tones(), HE_FFT), 80);
    out.extend(with_cyclic_prefix(&ofdm_body(&he_ltf_tones(), HE_FFT), 64));
    out
}

/// HE data symbol on the 242-tone resource unit of a 256-point grid
/// (234 16-QAM tones, 8 pilots) with a 1.6 us guard (288 samples).
pub(crate) fn he_data_symbol<R: Rng + ?Sized>(
    bits: &mut BitSource<'_, R>,
    symbol_index: usize,
) -> Vec<Complex> {
    let p = pilot_polarity(symbol_index);
    let mut spec: Vec<(i32, Complex)> = data_tones(122, &HE_PILOTS, 1)
        .into_iter()
        .map(|k| (k, qam16(bits.next_nibble())))
        .collect();
    spec.extend(
        HE_PILOTS
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, Complex::new(if i % 4 == 3 { -p } else { p }, 0.0))),
    );
    with_cyclic_prefix(&ofdm_body(&spec, HE_FFT), 32)
}
