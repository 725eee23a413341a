//! Self-contained radix-2 complex FFT for power-of-two grids.

/// Complex number as (re, im).
pub type Complex = (f64, f64);

pub fn c_add(a: Complex, b: Complex) -> Complex {
    (a.0 + b.0, a.1 + b.1)
}

pub fn c_sub(a: Complex, b: Complex) -> Complex {
    (a.0 - b.0, a.1 - b.1)
}

pub fn c_mul(a: Complex, b: Complex) -> Complex {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

/// In-place iterative radix-2 FFT. `data.len()` must be a power of two.
/// `inverse` applies the conjugate transform and the 1/N scaling.
pub fn fft(data: &mut [Complex], inverse: bool) {
    let n = data.len();
    assert!(n.is_power_of_two(), "FFT length must be a power of two");
    // bit reversal
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = (1.0, 0.0);
            for k in 0..len / 2 {
                let u = data[i + k];
                let v = c_mul(data[i + k + len / 2], w);
                data[i + k] = c_add(u, v);
                data[i + k + len / 2] = c_sub(u, v);
                w = c_mul(w, wlen);
            }
            i += len;
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in data.iter_mut() {
            v.0 *= scale;
            v.1 *= scale;
        }
    }
}

/// 2D FFT over a row-major `n x n` grid.
pub fn fft2(data: &mut [Complex], n: usize, inverse: bool) {
    assert_eq!(data.len(), n * n);
    let mut buf = vec![(0.0, 0.0); n];
    for row in 0..n {
        fft(&mut data[row * n..(row + 1) * n], inverse);
    }
    for col in 0..n {
        for row in 0..n {
            buf[row] = data[row * n + col];
        }
        fft(&mut buf, inverse);
        for row in 0..n {
            data[row * n + col] = buf[row];
        }
    }
}

/// Signed frequency index for bin `i` of an `n`-point transform.
pub fn freq_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let mut data: Vec<Complex> = (0..16).map(|i| ((i as f64).sin(), 0.0)).collect();
        let orig = data.clone();
        fft(&mut data, false);
        fft(&mut data, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a.0 - b.0).abs() < 1e-12 && a.1.abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode() {
        // cos(2 pi x) sampled on 8 points has peaks at bins 1 and 7
        let n = 8;
        let mut data: Vec<Complex> = (0..n)
            .map(|i| ((2.0 * std::f64::consts::PI * i as f64 / n as f64).cos(), 0.0))
            .collect();
        fft(&mut data, false);
        assert!((data[1].0 - n as f64 / 2.0).abs() < 1e-12);
        assert!((data[7].0 - n as f64 / 2.0).abs() < 1e-12);
        for i in [0, 2, 3, 4, 5, 6] {
            assert!(data[i].0.abs() < 1e-12);
        }
    }

    #[test]
    fn fft2_roundtrip() {
        let n = 8;
        let mut data: Vec<Complex> = (0..n * n).map(|i| ((i as f64 * 0.37).cos(), 0.0)).collect();
        let orig = data.clone();
        fft2(&mut data, n, false);
        fft2(&mut data, n, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a.0 - b.0).abs() < 1e-11 && a.1.abs() < 1e-11);
        }
    }
}
