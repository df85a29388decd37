//! 802.11b-style DSSS: Barker-11 spreading at 11 Mchip/s with the long
//! preamble, DBPSK header and DQPSK payload.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::Rng;

use crate::Complex;

pub(crate) const CHIP_RATE_HZ: f64 = 11e6;
pub(crate) const BARKER: [f64; 11] = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0];

/// Sync (128 bits) plus SFD (16 bits).
pub(crate) const PREAMBLE_BITS: usize = 144;
const HEADER_BITS: usize = 48;
const SFD: u16 = 0xF3A0;

/// Self-synchronizing x^7 + x^4 + 1 scrambler.
pub(crate) struct Scrambler {
    state: u8,
}

impl Scrambler {
    /// Long-preamble initial state.
    pub(crate) fn long_preamble() -> Self {
        Self { state: 0b110_1100 }
    }

    pub(crate) fn scramble(&mut self, bit: bool) -> bool {
        let fb = ((self.state >> 3) ^ (self.state >> 6)) & 1 == 1;
        let out = bit ^ fb;
        self.state = ((self.state << 1) | out as u8) & 0x7f;
        out
    }
}

fn push_u16_lsb_first(bits: &mut Vec<bool>, v: u16, n: usize) {
    for i in 0..n {
        bits.push((v >> i) & 1 == 1);
    }
}

/// CRC-16 (CCITT polynomial, ones-complemented) over header bits.
fn crc16(bits: &[bool]) -> u16 {
    let mut reg: u16 = 0xffff;
    for &b in bits {
        let top = (reg >> 15) & 1 == 1;
        reg <<= 1;
        if top ^ b {
            reg ^= 0x1021;
        }
    }
    !reg
}

/// Unscrambled long preamble bits: 128 ones then the SFD.
pub(crate) fn preamble_bits() -> Vec<bool> {
    let mut bits = alloc::vec![true; 128];
    push_u16_lsb_first(&mut bits, SFD, 16);
    bits
}

/// 48-bit header for a 2 Mbit/s PSDU of `length_us` microseconds.
fn header_bits(length_us: u16) -> Vec<bool> {
    let mut bits = Vec::with_capacity(HEADER_BITS);
    push_u16_lsb_first(&mut bits, 0x14, 8); // SIGNAL: 2 Mbit/s
    push_u16_lsb_first(&mut bits, 0x04, 8); // SERVICE: locked clocks
    push_u16_lsb_first(&mut bits, length_us, 16);
    let crc = crc16(&bits);
    push_u16_lsb_first(&mut bits, crc, 16);
    bits
}

fn spread(symbol: Complex, chips: &mut Vec<Complex>) {
    chips.extend(BARKER.iter().map(|&c| symbol * c));
}

/// Chip sequence (one sample per chip at 11 MHz) of the long preamble
/// alone, starting from phase 0.
pub(crate) fn preamble_chips() -> Vec<Complex> {
    let mut scrambler = Scrambler::long_preamble();
    let mut chips = Vec::with_capacity(PREAMBLE_BITS * 11);
    let mut phase = 0.0;
    for bit in preamble_bits() {
        if scrambler.scramble(bit) {
            phase += 2.0 * FRAC_PI_2;
        }
        spread(Complex::from_polar(1.0, phase), &mut chips);
    }
    chips
}

/// One PPDU of `total_chips` chips: preamble, header, then DQPSK payload
/// carrying `payload` followed by random pad bits.
pub(crate) fn ppdu_chips<R: Rng + ?Sized>(
    payload: &[bool],
    total_chips: usize,
    rng: &mut R,
) -> Vec<Complex> {
    let overhead = (PREAMBLE_BITS + HEADER_BITS) * 11;
    let payload_symbols = total_chips.saturating_sub(overhead).div_ceil(11).max(1);
    let mut scrambler = Scrambler::long_preamble();
    let mut chips = Vec::with_capacity(overhead + payload_symbols * 11);
    let mut phase = 0.0;

    let dbpsk = |bit: bool, phase: &mut f64, chips: &mut Vec<Complex>, s: &mut Scrambler| {
        if s.scramble(bit) {
            *phase += 2.0 * FRAC_PI_2;
        }
        spread(Complex::from_polar(1.0, *phase), chips);
    };
    for bit in preamble_bits() {
        dbpsk(bit, &mut phase, &mut chips, &mut scrambler);
    }
    let length_us = payload_symbols.min(u16::MAX as usize) as u16;
    for bit in header_bits(length_us) {
        dbpsk(bit, &mut phase, &mut chips, &mut scrambler);
    }

    let mut next = 0usize;
    let mut next_bit = |rng: &mut R| {
        let b = if next < payload.len() { payload[next] } else { rng.random() };
        next += 1;
        b
    };
    for _ in 0..payload_symbols {
        let d0 = scrambler.scramble(next_bit(rng));
        let d1 = scrambler.scramble(next_bit(rng));
        // Gray-mapped phase increments: 00 -> 0, 01 -> pi/2, 11 -> pi, 10 -> 3pi/2
        let quarter = match (d0, d1) {
            (false, false) => 0.0,
            (false, true) => 1.0,
            (true, true) => 2.0,
            (true, false) => 3.0,
        };
        phase += quarter * FRAC_PI_2;
        spread(Complex::from_polar(1.0, phase), &mut chips);
    }
    chips.truncate(total_chips.max(overhead));
    chips
}
