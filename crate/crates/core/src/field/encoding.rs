//! Sinusoidal input lift for field queries.

use super::real::Real;

/// Frequency encoding: raw input followed by sin/cos pairs at octave
/// frequencies. Output dimension = d + d*2*levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PosEncoding {
    pub levels: usize,
}

impl PosEncoding {
    pub fn new(levels: usize) -> Self {
        PosEncoding { levels }
    }

    pub fn out_dim(&self, input_dim: usize) -> usize {
        input_dim + input_dim * 2 * self.levels
    }

    /// Layout: [x_1..x_d, sin(2^0 x)_1..d, cos(2^0 x)_1..d, ..., sin(2^{L-1} x), cos(2^{L-1} x)].
    pub fn encode<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        let d = x.len();
        out.clear();
        out.reserve(self.out_dim(d));
        out.extend_from_slice(x);
        let mut freq = T::one();
        for _ in 0..self.levels {
            let base = out.len();
            out.resize(base + 2 * d, T::zero());
            for i in 0..d {
                let (s, c) = (x[i] * freq).sin_cos();
                out[base + i] = s;
                out[base + d + i] = c;
            }
            freq = freq + freq;
        }
    }

    /// Accumulates d_loss/d_x given the encoded output (holding the sin/cos
    /// values) and the gradient at the encoding.
    pub fn backward<T: Real>(&self, encoded: &[T], d_encoded: &[T], d_x: &mut [T]) {
        let d = d_x.len();
        debug_assert_eq!(encoded.len(), self.out_dim(d));
        for i in 0..d {
            d_x[i] += d_encoded[i];
        }
        let mut freq = T::one();
        for l in 0..self.levels {
            let base = d + l * 2 * d;
            for i in 0..d {
                let s = encoded[base + i];
                let c = encoded[base + d + i];
                d_x[i] += freq * (c * d_encoded[base + i] - s * d_encoded[base + d + i]);
            }
            freq = freq + freq;
        }
    }
}
