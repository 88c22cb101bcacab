//! Small dense multilayer perceptron with explicit reverse-mode gradients.
//! Hidden layers use the rectifier; the final layer is linear (heads apply
//! softplus or sigmoid themselves).

use super::real::{axpy, dot, Real};
use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    /// Layer sizes including input and output: [in, hidden.., out].
    pub widths: Vec<usize>,
    /// Per layer: row-major weights (out x in) then biases (out).
    pub params: Vec<T>,
}

pub fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Reusable forward/backward activation storage for one evaluation.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    /// acts[0] is the input; acts[l+1] the post-activation output of layer l.
    pub acts: Vec<Vec<T>>,
    d: Vec<Vec<T>>,
}

impl<T: Real> MlpCache<T> {
    fn ensure(&mut self, widths: &[usize]) {
        self.acts.resize(widths.len(), Vec::new());
        self.d.resize(widths.len(), Vec::new());
        for (i, &w) in widths.iter().enumerate() {
            self.acts[i].resize(w, T::zero());
            self.d[i].resize(w, T::zero());
        }
    }
}

impl<T: Real> Mlp<T> {
    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2);
        Mlp {
            widths: widths.to_vec(),
            params: vec![T::zero(); param_count(widths)],
        }
    }

    /// He-uniform weight init, zero biases. `zero_last` zeroes the final
    /// layer so the head starts at its activation midpoint.
    pub fn init(widths: &[usize], rng: &mut impl Rng, zero_last: bool) -> Self {
        let mut mlp = Self::zeros(widths);
        let mut off = 0;
        let layers = widths.len() - 1;
        for l in 0..layers {
            let (nin, nout) = (widths[l], widths[l + 1]);
            let limit = (6.0 / nin as f64).sqrt();
            for w in &mut mlp.params[off..off + nin * nout] {
                let v = rng.gen_range(-limit..limit);
                *w = if zero_last && l == layers - 1 {
                    T::zero()
                } else {
                    T::fr(v)
                };
            }
            off += (nin + 1) * nout;
        }
        mlp
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.widths)
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.param_count() {
            return Err(Error::Field(format!(
                "{} params for widths {:?} (need {})",
                self.params.len(),
                self.widths,
                self.param_count()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Field("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn forward<'a>(&self, x: &[T], cache: &'a mut MlpCache<T>) -> &'a [T] {
        debug_assert_eq!(x.len(), self.in_dim());
        cache.ensure(&self.widths);
        cache.acts[0].copy_from_slice(x);
        let layers = self.widths.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (nin, nout) = (self.widths[l], self.widths[l + 1]);
            let weights = &self.params[off..off + nin * nout];
            let bias = &self.params[off + nin * nout..off + (nin + 1) * nout];
            let (head, tail) = cache.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let hidden = l + 1 < layers;
            for o in 0..nout {
                let v = dot(&weights[o * nin..(o + 1) * nin], input) + bias[o];
                out[o] = if hidden && v < T::zero() { T::zero() } else { v };
            }
            off += (nin + 1) * nout;
        }
        &cache.acts[layers]
    }

    /// Accumulates parameter gradients into `d_params` (same layout as
    /// `params`) and, when given, input gradients into `d_in`. Requires the
    /// cache from the matching forward call.
    pub fn backward(
        &self,
        cache: &mut MlpCache<T>,
        d_out: &[T],
        d_params: &mut [T],
        d_in: Option<&mut [T]>,
    ) {
        let layers = self.widths.len() - 1;
        debug_assert_eq!(d_out.len(), self.out_dim());
        debug_assert_eq!(d_params.len(), self.param_count());
        cache.d[layers].copy_from_slice(d_out);
        let mut off = self.param_count();
        for l in (0..layers).rev() {
            let (nin, nout) = (self.widths[l], self.widths[l + 1]);
            off -= (nin + 1) * nout;
            let hidden = l + 1 < layers;
            let (dh, dt) = cache.d.split_at_mut(l + 1);
            let d_lower = &mut dh[l];
            let d_cur = &mut dt[0];
            if hidden {
                // Rectifier mask: output zero means the unit was clamped.
                for (g, a) in d_cur.iter_mut().zip(&cache.acts[l + 1]) {
                    if *a <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let input = &cache.acts[l];
            let dw = &mut d_params[off..off + (nin + 1) * nout];
            for v in d_lower.iter_mut() {
                *v = T::zero();
            }
            for o in 0..nout {
                let g = d_cur[o];
                if g != T::zero() {
                    axpy(&mut dw[o * nin..(o + 1) * nin], g, input);
                    axpy(d_lower, g, &self.params[off + o * nin..off + (o + 1) * nin]);
                }
                dw[nin * nout + o] += g;
            }
        }
        if let Some(d_in) = d_in {
            for (t, s) in d_in.iter_mut().zip(&cache.d[0]) {
                *t += *s;
            }
        }
    }
}
