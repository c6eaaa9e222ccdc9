//! In-place iterative radix-2 FFT, just enough for power spectra.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Radix2Fft {
    size: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Radix2Fft {
    /// `size` must be a power of two.
    pub(crate) fn new(size: usize) -> Self {
        debug_assert!(size.is_power_of_two());
        let half = size / 2;
        let (cos, sin) = (0..half)
            .map(|k| {
                let angle = -2.0 * PI * k as f64 / size as f64;
                (libm::cos(angle), libm::sin(angle))
            })
            .unzip();
        Self { size, cos, sin }
    }

    pub(crate) fn size(&self) -> usize {
        self.size
    }

    pub(crate) fn transform(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.size;
        debug_assert!(re.len() == n && im.len() == n);
        if n <= 1 {
            return;
        }
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let (wr, wi) = (self.cos[k * stride], self.sin[k * stride]);
                    let a = start + k;
                    let b = a + len / 2;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }

    /// `|X_k|²` for `k = 0..=size/2` of a real frame zero-padded to `size`.
    pub(crate) fn power_spectrum(&self, frame: &[f64], re: &mut Vec<f64>, im: &mut Vec<f64>, out: &mut Vec<f64>) {
        re.clear();
        re.extend_from_slice(&frame[..frame.len().min(self.size)]);
        re.resize(self.size, 0.0);
        im.clear();
        im.resize(self.size, 0.0);
        self.transform(re, im);
        out.clear();
        out.extend((0..=self.size / 2).map(|k| re[k] * re[k] + im[k] * im[k]));
    }
}
