use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::rxdsp::{extract_preeq_taps, FirTaps};

/// Dense real tensor laid out batch-major, then channel, then time.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub batch: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::Shape(format!(
                "{} values do not fill a {batch}x{channels}x{len} tensor",
                data.len()
            )));
        }
        Ok(Self { batch, channels, len, data })
    }

    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            batch,
            channels,
            len,
            data: vec![0.0; batch * channels * len],
        }
    }

    /// Stack equal-length rows as the channels of a single batch item.
    pub fn from_channels(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        Self::new(1, rows.len(), len, rows.concat())
    }

    pub fn row(&self, b: usize, c: usize) -> &[f64] {
        let start = (b * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    fn row_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let start = (b * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }
}

/// One-dimensional convolution layer (cross-correlation, zero padding).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayerParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub padding: usize,
    pub groups: usize,
    /// `out_channels x (in_channels / groups) x kernel_size`.
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl ConvLayerParams {
    /// Same-length layer without bias: `padding = kernel_size / 2`.
    pub fn same(in_channels: usize, out_channels: usize, kernel_size: usize, weights: Vec<f64>) -> Result<Self> {
        let p = Self {
            in_channels,
            out_channels,
            kernel_size,
            padding: kernel_size / 2,
            groups: 1,
            weights,
            bias: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.groups;
        if g == 0 || self.in_channels % g != 0 || self.out_channels % g != 0 {
            return Err(Error::Shape(format!(
                "groups {g} must divide in {} and out {} channels",
                self.in_channels, self.out_channels
            )));
        }
        let expect = self.out_channels * self.in_channels / g * self.kernel_size;
        if self.weights.len() != expect {
            return Err(Error::Shape(format!(
                "expected {expect} weights, got {}",
                self.weights.len()
            )));
        }
        if let Some(b) = &self.bias {
            if b.len() != self.out_channels {
                return Err(Error::Shape(format!("expected {} biases, got {}", self.out_channels, b.len())));
            }
        }
        if self.kernel_size == 0 {
            return Err(Error::Shape("kernel size must be positive".into()));
        }
        Ok(())
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        (len + 2 * self.padding)
            .checked_sub(self.kernel_size - 1)
            .filter(|&l| l > 0)
            .ok_or_else(|| Error::Shape(format!("input of length {len} shorter than the kernel")))
    }

    fn weight(&self, out_c: usize, in_c: usize, k: usize) -> f64 {
        let per_group = self.in_channels / self.groups;
        self.weights[(out_c * per_group + in_c) * self.kernel_size + k]
    }
}

fn check_input(input: &Tensor3, p: &ConvLayerParams) -> Result<usize> {
    p.validate()?;
    if input.channels != p.in_channels {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, got {}",
            p.in_channels, input.channels
        )));
    }
    p.out_len(input.len)
}

/// `out[b, o, t] = bias[o] + sum_{i in group(o), k} w[o, i, k] * in[b, i, t + k - padding]`.
pub fn conv1d_forward(input: &Tensor3, p: &ConvLayerParams) -> Result<Tensor3> {
    let out_len = check_input(input, p)?;
    let per_in = p.in_channels / p.groups;
    let per_out = p.out_channels / p.groups;
    let mut out = Tensor3::zeros(input.batch, p.out_channels, out_len);
    for b in 0..input.batch {
        for o in 0..p.out_channels {
            let g = o / per_out;
            let bias = p.bias.as_ref().map_or(0.0, |v| v[o]);
            let row = out.row_mut(b, o);
            row.iter_mut().for_each(|v| *v = bias);
            for i in 0..per_in {
                let x = input.row(b, g * per_in + i);
                for k in 0..p.kernel_size {
                    let w = p.weight(o, i, k);
                    // t + k - padding must land in [0, len)
                    let lo = p.padding.saturating_sub(k);
                    let hi = (input.len + p.padding).saturating_sub(k).min(out_len);
                    for t in lo..hi {
                        row[t] += w * x[t + k - p.padding];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv1d_forward`]: (input, weights, bias).
pub fn conv1d_backward(
    input: &Tensor3,
    p: &ConvLayerParams,
    grad_out: &Tensor3,
) -> Result<(Tensor3, Vec<f64>, Option<Vec<f64>>)> {
    let out_len = check_input(input, p)?;
    if grad_out.batch != input.batch || grad_out.channels != p.out_channels || grad_out.len != out_len {
        return Err(Error::Shape("output gradient does not match the layer output".into()));
    }
    let per_in = p.in_channels / p.groups;
    let per_out = p.out_channels / p.groups;
    let mut gin = Tensor3::zeros(input.batch, input.channels, input.len);
    let mut gw = vec![0.0; p.weights.len()];
    let mut gb = p.bias.as_ref().map(|_| vec![0.0; p.out_channels]);
    for b in 0..input.batch {
        for o in 0..p.out_channels {
            let g = o / per_out;
            let gy = grad_out.row(b, o);
            if let Some(gb) = gb.as_mut() {
                gb[o] += gy.iter().sum::<f64>();
            }
            for i in 0..per_in {
                let c = g * per_in + i;
                let x = input.row(b, c).to_vec();
                for k in 0..p.kernel_size {
                    let w = p.weight(o, i, k);
                    let lo = p.padding.saturating_sub(k);
                    let hi = (input.len + p.padding).saturating_sub(k).min(out_len);
                    let mut acc = 0.0;
                    let gx = gin.row_mut(b, c);
                    for t in lo..hi {
                        let j = t + k - p.padding;
                        acc += gy[t] * x[j];
                        gx[j] += w * gy[t];
                    }
                    gw[(o * per_in + i) * p.kernel_size + k] += acc;
                }
            }
        }
    }
    Ok((gin, gw, gb))
}

/// Complex FIR held as a two-channel real convolution layer. `h_r`, `h_i`
/// are the real and imaginary parts of the cross-correlation weights, i.e.
/// the FIR taps in reversed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexConvLayer {
    pub h_r: Vec<f64>,
    pub h_i: Vec<f64>,
}

impl ComplexConvLayer {
    pub fn new(h_r: Vec<f64>, h_i: Vec<f64>) -> Result<Self> {
        if h_r.len() != h_i.len() || h_r.len() % 2 == 0 {
            return Err(Error::Shape(format!(
                "complex layer needs equal odd-length parts, got {} and {}",
                h_r.len(),
                h_i.len()
            )));
        }
        Ok(Self { h_r, h_i })
    }

    /// Layer whose forward pass equals `fir_apply` with `taps`.
    pub fn from_fir(taps: &FirTaps) -> Result<Self> {
        let w: Vec<Complex64> = taps.taps.iter().rev().copied().collect();
        Self::from_weights(&w)
    }

    pub fn from_weights(w: &[Complex64]) -> Result<Self> {
        Self::new(w.iter().map(|v| v.re).collect(), w.iter().map(|v| v.im).collect())
    }

    pub fn identity(kernel_size: usize) -> Result<Self> {
        Self::from_fir(&FirTaps::identity(kernel_size, 2)?)
    }

    pub fn kernel_size(&self) -> usize {
        self.h_r.len()
    }

    pub fn weights(&self) -> Vec<Complex64> {
        self.h_r
            .iter()
            .zip(&self.h_i)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    /// FIR taps implementing this layer (weights flipped).
    pub fn to_fir(&self, spacing: usize) -> Result<FirTaps> {
        extract_preeq_taps(&self.weights(), spacing)
    }

    /// Two input channels, one output, `padding = kernel_size / 2`, no bias,
    /// weights `[h_r; h_i]`.
    pub fn conv_params(&self) -> ConvLayerParams {
        ConvLayerParams {
            in_channels: 2,
            out_channels: 1,
            kernel_size: self.kernel_size(),
            padding: self.kernel_size() / 2,
            groups: 1,
            weights: [self.h_r.as_slice(), self.h_i.as_slice()].concat(),
            bias: None,
        }
    }
}

/// Complex filtering through the real layer: channels `[x_r; -x_i]` give
/// `y_r`, channels `[x_i; x_r]` give `y_i`.
pub fn complex_conv_forward(x: &[Complex64], layer: &ComplexConvLayer) -> Result<Vec<Complex64>> {
    let p = layer.conv_params();
    let xr: Vec<f64> = x.iter().map(|v| v.re).collect();
    let xi: Vec<f64> = x.iter().map(|v| v.im).collect();
    let neg_xi: Vec<f64> = xi.iter().map(|v| -v).collect();
    let yr = conv1d_forward(&Tensor3::from_channels(&[xr.clone(), neg_xi])?, &p)?;
    let yi = conv1d_forward(&Tensor3::from_channels(&[xi, xr])?, &p)?;
    Ok(yr
        .data
        .iter()
        .zip(&yi.data)
        .map(|(&r, &i)| Complex64::new(r, i))
        .collect())
}

/// Circular complex cross-correlation `y[n] = sum_j w[j] x[(n + j - c) mod N]`:
/// the map of [`complex_conv_forward`] with the padding taken from the
/// opposite end of the frame instead of zeros.
pub(crate) fn xcorr(x: &[Complex64], w: &[Complex64]) -> Vec<Complex64> {
    let mut y = x.to_vec();
    fft::fft_inplace(&mut y);
    let k = kernel_spectrum(w, x.len());
    y.iter_mut().zip(&k).for_each(|(a, b)| *a *= b);
    fft::ifft_inplace(&mut y);
    y
}

/// Real-pair gradients of [`xcorr`]: `(d/dx, d/dw)`, each packed as
/// `d/d re + i d/d im`.
pub(crate) fn xcorr_backward(x: &[Complex64], w: &[Complex64], gy: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = x.len();
    let c = w.len() / 2;
    let k = kernel_spectrum(w, n);
    let mut xs = x.to_vec();
    fft::fft_inplace(&mut xs);
    let mut gs = gy.to_vec();
    fft::fft_inplace(&mut gs);
    let mut gx: Vec<Complex64> = gs.iter().zip(&k).map(|(g, k)| g * k.conj()).collect();
    fft::ifft_inplace(&mut gx);
    let mut q: Vec<Complex64> = gs.iter().zip(&xs).map(|(g, x)| g * x.conj()).collect();
    fft::ifft_inplace(&mut q);
    let gw = (0..w.len()).map(|j| q[(c + n * (j / n + 1) - j) % n]).collect();
    (gx, gw)
}

// spectrum of the length-n circular kernel with w[j] at lag c - j
fn kernel_spectrum(w: &[Complex64], n: usize) -> Vec<Complex64> {
    let c = w.len() / 2;
    let mut k = vec![Complex64::new(0.0, 0.0); n];
    for (j, v) in w.iter().enumerate() {
        k[(c + n * (j / n + 1) - j) % n] += v;
    }
    fft::fft_inplace(&mut k);
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rxdsp::fir_apply;
    use crate::sigproc::ComplexSignal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_real(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rand_complex(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_real(50, &mut rng);
        let mut w = vec![0.0; 5];
        w[2] = 1.0;
        let p = ConvLayerParams::same(1, 1, 5, w).unwrap();
        let y = conv1d_forward(&Tensor3::from_channels(&[x.clone()]).unwrap(), &p).unwrap();
        assert_eq!(y.data, x);
    }

    #[test]
    fn conv_matches_direct_cross_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, cin, cout, k, len, pad) = (2, 3, 2, 5, 40, 3);
        let input = Tensor3::new(b, cin, len, rand_real(b * cin * len, &mut rng)).unwrap();
        let p = ConvLayerParams {
            in_channels: cin,
            out_channels: cout,
            kernel_size: k,
            padding: pad,
            groups: 1,
            weights: rand_real(cout * cin * k, &mut rng),
            bias: Some(vec![0.5, -0.25]),
        };
        let y = conv1d_forward(&input, &p).unwrap();
        assert_eq!(y.len, len + 2 * pad - k + 1);
        for bi in 0..b {
            for o in 0..cout {
                for t in 0..y.len {
                    let mut acc = p.bias.as_ref().unwrap()[o];
                    for i in 0..cin {
                        for kk in 0..k {
                            let j = t as isize + kk as isize - pad as isize;
                            if j >= 0 && (j as usize) < len {
                                acc += p.weights[(o * cin + i) * k + kk] * input.row(bi, i)[j as usize];
                            }
                        }
                    }
                    assert!((acc - y.row(bi, o)[t]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn grouped_conv_keeps_groups_apart() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x0 = rand_real(30, &mut rng);
        let x1 = rand_real(30, &mut rng);
        let w = rand_real(6, &mut rng);
        let p = ConvLayerParams {
            in_channels: 2,
            out_channels: 2,
            kernel_size: 3,
            padding: 1,
            groups: 2,
            weights: w.clone(),
            bias: None,
        };
        let y = conv1d_forward(&Tensor3::from_channels(&[x0.clone(), x1.clone()]).unwrap(), &p).unwrap();
        let single = |x: &Vec<f64>, w: &[f64]| {
            let q = ConvLayerParams::same(1, 1, 3, w.to_vec()).unwrap();
            conv1d_forward(&Tensor3::from_channels(&[x.clone()]).unwrap(), &q).unwrap().data
        };
        assert_eq!(y.row(0, 0), single(&x0, &w[..3]).as_slice());
        assert_eq!(y.row(0, 1), single(&x1, &w[3..]).as_slice());
    }

    #[test]
    fn cross_correlation_is_convolution_with_reversed_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_complex(64, &mut rng);
        let w = rand_complex(9, &mut rng);
        let params = ComplexConvLayer::from_weights(&w).unwrap();
        let zero_padded = complex_conv_forward(&x, &params).unwrap();
        let rev: Vec<Complex64> = w.iter().rev().copied().collect();
        let z = crate::fft::convolve_same(&x, &rev);
        for (a, b) in zero_padded.iter().zip(&z) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn circular_xcorr_matches_periodic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for (n, k) in [(64, 9), (16, 101), (5, 1)] {
            let x = rand_complex(n, &mut rng);
            let w = rand_complex(k, &mut rng);
            let y = xcorr(&x, &w);
            let c = (k / 2) as isize;
            for t in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, wj) in w.iter().enumerate() {
                    let idx = (t as isize + j as isize - c).rem_euclid(n as isize) as usize;
                    acc += wj * x[idx];
                }
                assert!((acc - y[t]).norm() < 1e-12);
            }
        }
        // away from the frame edges it is the zero-padded layer
        let x = rand_complex(200, &mut rng);
        let w = rand_complex(11, &mut rng);
        let a = xcorr(&x, &w);
        let b = complex_conv_forward(&x, &ComplexConvLayer::from_weights(&w).unwrap()).unwrap();
        for t in 5..195 {
            assert!((a[t] - b[t]).norm() < 1e-12);
        }
    }

    #[test]
    fn layer_reproduces_fir_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_complex(200, &mut rng);
        let taps = FirTaps::new(rand_complex(101, &mut rng), 2).unwrap();
        let layer = ComplexConvLayer::from_fir(&taps).unwrap();
        let y = complex_conv_forward(&x, &layer).unwrap();
        let z = fir_apply(&ComplexSignal::single(x.clone(), 1.0, 2).unwrap(), &taps);
        for (a, b) in y.iter().zip(&z.pols[0]) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(layer.to_fir(2).unwrap(), taps);
    }

    #[test]
    fn real_taps_on_real_input_give_real_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Complex64> = rand_real(80, &mut rng).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        let layer = ComplexConvLayer::new(rand_real(7, &mut rng), vec![0.0; 7]).unwrap();
        let y = complex_conv_forward(&x, &layer).unwrap();
        assert!(y.iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn single_unit_tap_rotates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_complex(20, &mut rng);
        let rot = Complex64::from_polar(1.0, 0.7);
        let layer = ComplexConvLayer::from_weights(&[rot]).unwrap();
        let y = complex_conv_forward(&x, &layer).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a * rot - b).norm() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let input = Tensor3::new(1, 2, 25, rand_real(50, &mut rng)).unwrap();
        let mut p = ConvLayerParams {
            in_channels: 2,
            out_channels: 2,
            kernel_size: 5,
            padding: 2,
            groups: 1,
            weights: rand_real(20, &mut rng),
            bias: Some(vec![0.1, 0.2]),
        };
        let proj = rand_real(50, &mut rng);
        let loss = |inp: &Tensor3, p: &ConvLayerParams| -> f64 {
            conv1d_forward(inp, p).unwrap().data.iter().zip(&proj).map(|(a, b)| a * b).sum()
        };
        let gy = Tensor3::new(1, 2, 25, proj.clone()).unwrap();
        let (gin, gw, gb) = conv1d_backward(&input, &p, &gy).unwrap();
        let h = 1e-6;
        for k in 0..p.weights.len() {
            let w0 = p.weights[k];
            p.weights[k] = w0 + h;
            let lp = loss(&input, &p);
            p.weights[k] = w0 - h;
            let lm = loss(&input, &p);
            p.weights[k] = w0;
            assert!(((lp - lm) / (2.0 * h) - gw[k]).abs() < 1e-7);
        }
        let mut inp = input.clone();
        for j in 0..inp.data.len() {
            let v0 = inp.data[j];
            inp.data[j] = v0 + h;
            let lp = loss(&inp, &p);
            inp.data[j] = v0 - h;
            let lm = loss(&inp, &p);
            inp.data[j] = v0;
            assert!(((lp - lm) / (2.0 * h) - gin.data[j]).abs() < 1e-7);
        }
        let gb = gb.unwrap();
        assert!((gb[0] - proj[..25].iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn complex_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // frame shorter than the kernel: every tap wraps
        let x = rand_complex(5, &mut rng);
        let w = rand_complex(7, &mut rng);
        let proj = rand_complex(5, &mut rng);
        // L = Re sum conj(proj) y, so dL/dy in real-pair form is proj
        let loss = |x: &[Complex64], w: &[Complex64]| -> f64 {
            xcorr(x, w).iter().zip(&proj).map(|(a, b)| (b.conj() * a).re).sum()
        };
        let (gx, gw) = xcorr_backward(&x, &w, &proj);
        let h = 1e-6;
        let fd = |f: &dyn Fn(Complex64) -> f64| {
            Complex64::new(
                (f(Complex64::new(h, 0.0)) - f(Complex64::new(-h, 0.0))) / (2.0 * h),
                (f(Complex64::new(0.0, h)) - f(Complex64::new(0.0, -h))) / (2.0 * h),
            )
        };
        for j in 0..w.len() {
            let g = fd(&|d| {
                let mut w2 = w.clone();
                w2[j] += d;
                loss(&x, &w2)
            });
            assert!((g - gw[j]).norm() < 1e-7);
        }
        for j in 0..x.len() {
            let g = fd(&|d| {
                let mut x2 = x.clone();
                x2[j] += d;
                loss(&x2, &w)
            });
            assert!((g - gx[j]).norm() < 1e-7);
        }
    }

    #[test]
    fn shape_errors() {
        let p = ConvLayerParams::same(2, 1, 3, vec![0.0; 6]).unwrap();
        assert!(conv1d_forward(&Tensor3::zeros(1, 3, 10), &p).is_err());
        assert!(ConvLayerParams::same(2, 1, 3, vec![0.0; 5]).is_err());
        assert!(Tensor3::new(1, 2, 3, vec![0.0; 5]).is_err());
        assert!(ComplexConvLayer::new(vec![0.0; 4], vec![0.0; 4]).is_err());
    }
}
