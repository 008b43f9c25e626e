//! Quantized LLR densities and the two polar density transformations.
//!
//! A density lives on the uniform grid `k * step` for `k in -half..=half`
//! together with two point masses at `+inf` and `-inf`. Mass that leaves the
//! finite grid is moved to the matching infinity. Densities are conditioned on
//! the all-zero codeword, so negative mass is error mass.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use super::Quantization;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Density {
    pub pos_inf: f64,
    pub neg_inf: f64,
    /// `bins[k + half]` holds the mass at LLR `k * step`.
    pub bins: Vec<f64>,
}

impl Density {
    pub fn zeroed(half: usize) -> Self {
        Density {
            pos_inf: 0.0,
            neg_inf: 0.0,
            bins: vec![0.0; 2 * half + 1],
        }
    }

    pub fn half(&self) -> usize {
        self.bins.len() / 2
    }

    pub fn total(&self) -> f64 {
        self.pos_inf + self.neg_inf + self.bins.iter().sum::<f64>()
    }

    /// Hard-decision error probability; LLR zero counts as a coin flip.
    pub fn error_probability(&self) -> f64 {
        let half = self.half();
        let neg: f64 = self.bins[..half].iter().sum();
        (self.neg_inf + neg + 0.5 * self.bins[half]).clamp(0.0, 0.5)
    }

    /// Mass not sitting at `+inf`.
    pub fn uncertain_mass(&self) -> f64 {
        self.neg_inf + self.bins.iter().sum::<f64>()
    }

    /// Bhattacharyya parameter evaluated on magnitudes,
    /// `sum_k m(|L_k|) / cosh(L_k / 2)`, given the per-bin `1 / cosh` weights.
    pub fn bhattacharyya(&self, sech: &[f64]) -> f64 {
        self.bins.iter().zip(sech).map(|(&m, &w)| m * w).sum()
    }

    fn normalize(&mut self) {
        let t = self.total();
        if t > 0.0 && (t - 1.0).abs() > 1e-15 {
            let s = 1.0 / t;
            self.pos_inf *= s;
            self.neg_inf *= s;
            self.bins.iter_mut().for_each(|b| *b *= s);
        }
    }

    /// Index of the single finite bin that carries all of the mass, if any.
    pub fn single_bin(&self) -> Option<usize> {
        if self.pos_inf + self.neg_inf > 0.0 {
            return None;
        }
        let mut nonzero = self.bins.iter().enumerate().filter(|(_, &m)| m > 0.0);
        match (nonzero.next(), nonzero.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }
}

/// Precomputed machinery for applying both transformations on one grid.
pub(crate) struct Evolver {
    half: usize,
    /// `1 / cosh(L / 2)` at every grid point.
    sech: Vec<f64>,
    /// Output magnitude of `f(i*step, i*step)`.
    diag: Vec<u32>,
    /// Check-node output table in run-length form. Row `i` covers partner
    /// magnitudes `i+1..=half+1` with runs `run_index[i]..run_index[i + 1]`;
    /// run `r` ends (exclusive) at `run_end[r]` and maps to `run_out[r]`.
    run_index: Vec<usize>,
    run_end: Vec<u32>,
    run_out: Vec<u32>,
    fft: Arc<dyn RealToComplex<f64>>,
    ifft: Arc<dyn ComplexToReal<f64>>,
    fft_len: usize,
    real: Vec<f64>,
    spectrum: Vec<Complex64>,
    scratch: Vec<Complex64>,
    /// `[plus, minus]` mass per magnitude, magnitude `half + 1` standing for infinity.
    mag: Vec<[f64; 2]>,
    prefix: Vec<[f64; 2]>,
    acc: Vec<[f64; 2]>,
}

/// Exact check-node combine of two nonnegative magnitudes.
fn check_magnitude(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let t = (0.5 * a).tanh() * (0.5 * b).tanh();
    (2.0 * t.atanh()).min(a.min(b))
}

impl Evolver {
    pub fn new(quant: &Quantization) -> Self {
        let half = quant.half();
        let step = quant.step();
        let inf = half + 1;
        let quantize = |x: f64| ((x / step).round() as usize).min(half) as u32;

        let mut diag = vec![0u32; inf + 1];
        let mut run_index = Vec::with_capacity(inf + 2);
        let mut run_end = Vec::new();
        let mut run_out = Vec::new();
        run_index.push(0);
        run_index.push(0); // magnitude 0 pairs are handled separately
        for i in 1..=half {
            let a = i as f64 * step;
            diag[i] = quantize(check_magnitude(a, a));
            let mut j = i + 1;
            while j <= half {
                let out = quantize(check_magnitude(a, j as f64 * step));
                if out == i as u32 {
                    break;
                }
                // the table is nondecreasing in j; find the end of this run
                let mut end = j + 1;
                while end <= half && quantize(check_magnitude(a, end as f64 * step)) == out {
                    end += 1;
                }
                run_end.push(end as u32);
                run_out.push(out);
                j = end;
            }
            run_end.push((inf + 1) as u32);
            run_out.push(i as u32);
            run_index.push(run_end.len());
        }
        diag[inf] = inf as u32;

        let fft_len = (2 * half + 1).next_power_of_two();
        let mut planner = RealFftPlanner::new();
        let fft = planner.plan_fft_forward(fft_len);
        let ifft = planner.plan_fft_inverse(fft_len);
        let scratch_len = fft.get_scratch_len().max(ifft.get_scratch_len());
        let spectrum = fft.make_output_vec();
        let sech = (0..=2 * half)
            .map(|i| 1.0 / (0.5 * (i as f64 - half as f64) * step).cosh())
            .collect();
        Evolver {
            half,
            sech,
            diag,
            run_index,
            run_end,
            run_out,
            fft,
            ifft,
            fft_len,
            real: vec![0.0; fft_len],
            spectrum,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            mag: vec![[0.0; 2]; inf + 1],
            prefix: vec![[0.0; 2]; inf + 2],
            acc: vec![[0.0; 2]; inf + 1],
        }
    }

    pub fn bhattacharyya(&self, d: &Density) -> f64 {
        d.bhattacharyya(&self.sech)
    }

    /// Worse synthetic channel: density of `f(L1, L2)` for independent
    /// `L1, L2` drawn from `input`.
    pub fn check(&mut self, input: &Density, out: &mut Density) {
        let half = self.half;
        let inf = half + 1;
        debug_assert_eq!(input.half(), half);

        // split into sign and magnitude, magnitude `inf` standing for infinity
        self.mag[0] = [0.0; 2];
        for k in 1..=half {
            self.mag[k] = [input.bins[half + k], input.bins[half - k]];
        }
        self.mag[inf] = [input.pos_inf, input.neg_inf];
        let zero = input.bins[half];

        self.prefix[0] = [0.0; 2];
        for k in 0..=inf {
            let (p, m) = (self.prefix[k], self.mag[k]);
            self.prefix[k + 1] = [p[0] + m[0], p[1] + m[1]];
        }
        let nonzero = self.prefix[inf + 1][0] + self.prefix[inf + 1][1];

        self.acc.iter_mut().for_each(|v| *v = [0.0; 2]);
        let mut out_zero = zero * zero + 2.0 * zero * nonzero;

        for i in 1..=inf {
            let [p, m] = self.mag[i];
            if p == 0.0 && m == 0.0 {
                continue;
            }
            let d = self.diag[i] as usize;
            self.acc[d][0] += p * p + m * m;
            self.acc[d][1] += 2.0 * p * m;
            if i == inf {
                continue;
            }
            let (p2, m2) = (2.0 * p, 2.0 * m);
            let rows = self.run_index[i]..self.run_index[i + 1];
            let mut prev = self.prefix[i + 1];
            for (&end, &o) in self.run_end[rows.clone()].iter().zip(&self.run_out[rows]) {
                let cur = self.prefix[end as usize];
                let sp = cur[0] - prev[0];
                let sm = cur[1] - prev[1];
                prev = cur;
                let slot = &mut self.acc[o as usize];
                slot[0] += p2 * sp + m2 * sm;
                slot[1] += p2 * sm + m2 * sp;
            }
        }

        out_zero += self.acc[0][0] + self.acc[0][1];
        out.bins[half] = out_zero;
        for k in 1..=half {
            out.bins[half + k] = self.acc[k][0].max(0.0);
            out.bins[half - k] = self.acc[k][1].max(0.0);
        }
        out.pos_inf = self.acc[inf][0];
        out.neg_inf = self.acc[inf][1];
        out.normalize();
    }

    /// Better synthetic channel: density of `L1 + L2` (the genie supplies the
    /// correct partial sum, so no sign flip).
    pub fn var(&mut self, input: &Density, out: &mut Density) {
        let half = self.half;
        let width = 2 * half + 1;
        debug_assert_eq!(input.half(), half);

        let finite: f64 = input.bins.iter().sum();
        let (pi, ni) = (input.pos_inf, input.neg_inf);
        let mut pos_inf = pi * pi + 2.0 * pi * finite;
        let mut neg_inf = ni * ni + 2.0 * ni * finite;
        let cross_zero = 2.0 * pi * ni;

        let scale = input.bins.iter().cloned().fold(0.0f64, f64::max);
        out.bins.iter_mut().for_each(|v| *v = 0.0);
        if scale > 0.0 {
            let inv = 1.0 / scale;
            for (slot, &v) in self.real.iter_mut().zip(input.bins.iter()) {
                *slot = v * inv;
            }
            self.real[width..].iter_mut().for_each(|v| *v = 0.0);
            self.fft
                .process_with_scratch(&mut self.real, &mut self.spectrum, &mut self.scratch)
                .expect("buffer sizes fixed at construction");
            for v in &mut self.spectrum {
                *v = *v * *v;
            }
            // c2r requires purely real DC and Nyquist terms
            self.spectrum[0].im = 0.0;
            let last = self.spectrum.len() - 1;
            self.spectrum[last].im = 0.0;
            self.ifft
                .process_with_scratch(&mut self.spectrum, &mut self.real, &mut self.scratch)
                .expect("buffer sizes fixed at construction");
            let norm = scale * scale / self.fft_len as f64;

            // linear index t = i + j in 0..=4*half; cyclic wrap only hits t = fft_len
            let lo_corner = input.bins[0] * input.bins[0];
            let hi_corner = input.bins[width - 1] * input.bins[width - 1];
            let mut over_pos = 0.0;
            let mut over_neg = 0.0;
            for (t, &raw) in self.real.iter().enumerate() {
                let v = (raw * norm).max(0.0);
                let llr = t as isize - 2 * half as isize;
                if t == 0 {
                    // aliases the two extreme corners
                    over_neg += lo_corner;
                    over_pos += hi_corner;
                } else if llr < -(half as isize) {
                    over_neg += v;
                } else if llr > half as isize {
                    over_pos += v;
                } else {
                    out.bins[(llr + half as isize) as usize] = v;
                }
            }
            pos_inf += over_pos;
            neg_inf += over_neg;
        }
        out.bins[half] += cross_zero;
        out.pos_inf = pos_inf;
        out.neg_inf = neg_inf;
        out.normalize();
    }
}

impl Evolver {
    /// Error probability of the check-node child without building its density.
    pub fn check_error_probability(&mut self, input: &Density) -> f64 {
        let half = self.half;
        let zero = input.bins[half];
        let plus: f64 = input.bins[half + 1..].iter().sum::<f64>() + input.pos_inf;
        let minus: f64 = input.bins[..half].iter().sum::<f64>() + input.neg_inf;
        let nonzero = plus + minus;
        // opposite signs err, pairs touching magnitude 0 are coin flips
        let mut pe = 2.0 * plus * minus + 0.5 * (zero * zero + 2.0 * zero * nonzero);
        // pairs of nonzero magnitudes whose check output rounds to 0 are coin flips too
        for i in 1..=half {
            if self.diag[i] != 0 {
                break;
            }
            let p = input.bins[half + i];
            let m = input.bins[half - i];
            pe += 0.5 * (p * p + m * m) - 0.5 * (2.0 * p * m);
            let mut start = i + 1;
            for r in self.run_index[i]..self.run_index[i + 1] {
                if self.run_out[r] != 0 {
                    break;
                }
                let (s, e) = (start, (self.run_end[r] as usize).min(half + 1));
                start = self.run_end[r] as usize;
                let sp: f64 = input.bins[half + s..half + e].iter().sum();
                let sm: f64 = input.bins[half + 1 - e..=half - s].iter().sum();
                pe += (p * sp + m * sm) - (p * sm + m * sp);
            }
        }
        (pe / input.total().powi(2)).clamp(0.0, 0.5)
    }

    /// Error probability of the variable-node child without building its density.
    pub fn var_error_probability(&mut self, input: &Density) -> f64 {
        let bins = &input.bins;
        let width = bins.len();
        let finite: f64 = bins.iter().sum();
        let (pi, ni) = (input.pos_inf, input.neg_inf);
        let mut pe = ni * ni + 2.0 * ni * finite + pi * ni;
        // sum_{i + j < 0} a_i a_j + 0.5 sum_{i + j = 0} a_i a_j, with index k
        // standing for LLR k - half; partner of k sums to zero at width-1-k
        let mut below = 0.0; // sum of a_l for l < width - 1 - k, built from the left
        let mut acc = 0.0;
        let mut l = 0;
        for k in (0..width).rev() {
            let mirror = width - 1 - k;
            while l < mirror {
                below += bins[l];
                l += 1;
            }
            acc += bins[k] * (below + 0.5 * bins[mirror]);
        }
        pe += acc;
        (pe / input.total().powi(2)).clamp(0.0, 0.5)
    }
}
