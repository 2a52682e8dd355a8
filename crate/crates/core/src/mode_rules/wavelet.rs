//! Periodized sym8 wavelet transform and soft thresholding.

/// sym8 decomposition low-pass filter.
pub const SYM8_DEC_LO: [f64; 16] = [
    -0.0033824159510061256,
    -0.0005421323317911481,
    0.03169508781149298,
    0.007607487324917605,
    -0.1432942383508097,
    -0.061273359067658524,
    0.4813596512583722,
    0.7771857517005235,
    0.3644418948353314,
    -0.05194583810770904,
    -0.027219029917056003,
    0.049137179673607506,
    0.003808752013890615,
    -0.01495225833704823,
    -0.0003029205147213668,
    0.0018899503327594609,
];

pub const LEVELS: usize = 5;
/// Median absolute deviation to Gaussian sigma.
pub const MAD_SCALE: f64 = 0.6745;

fn dec_hi() -> [f64; 16] {
    let l = SYM8_DEC_LO.len();
    std::array::from_fn(|j| {
        let s = if j % 2 == 0 { -1.0 } else { 1.0 };
        s * SYM8_DEC_LO[l - 1 - j]
    })
}

/// One analysis step. Odd inputs are extended by repeating the last sample.
pub fn dwt(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut ext = x.to_vec();
    if ext.len() % 2 == 1 {
        ext.push(*x.last().expect("non-empty input"));
    }
    let n = ext.len() as isize;
    let hi = dec_hi();
    let l = SYM8_DEC_LO.len() as isize;
    let half = ext.len() / 2;
    let (mut a, mut d) = (vec![0.0; half], vec![0.0; half]);
    for k in 0..half {
        for j in 0..l {
            let v = ext[(2 * k as isize + l / 2 - j).rem_euclid(n) as usize];
            a[k] += SYM8_DEC_LO[j as usize] * v;
            d[k] += hi[j as usize] * v;
        }
    }
    (a, d)
}

/// Inverse of [`dwt`], cropped to `len` samples.
pub fn idwt(a: &[f64], d: &[f64], len: usize) -> Vec<f64> {
    let n = 2 * a.len();
    let hi = dec_hi();
    let l = SYM8_DEC_LO.len() as isize;
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for j in 0..l {
            let i = (2 * k as isize + l / 2 - j).rem_euclid(n as isize) as usize;
            x[i] += SYM8_DEC_LO[j as usize] * a[k] + hi[j as usize] * d[k];
        }
    }
    x.truncate(len);
    x
}

/// Multi-level decomposition: `[cA_L, cD_L, ..., cD_1]`.
pub fn wavedec(x: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let mut details = Vec::with_capacity(levels);
    let mut a = x.to_vec();
    for _ in 0..levels {
        if a.len() < 2 {
            break;
        }
        let (na, d) = dwt(&a);
        details.push(d);
        a = na;
    }
    let mut out = vec![a];
    out.extend(details.into_iter().rev());
    out
}

/// Inverse of [`wavedec`] for a signal of `len` samples.
pub fn waverec(coeffs: &[Vec<f64>], len: usize) -> Vec<f64> {
    // Lengths at each level, finest first.
    let mut lens = vec![len];
    for _ in 1..coeffs.len() {
        let l = *lens.last().expect("non-empty");
        lens.push(l.div_ceil(2));
    }
    let mut a = coeffs[0].clone();
    for (lvl, d) in coeffs[1..].iter().enumerate() {
        let target = lens[coeffs.len() - 2 - lvl];
        a = idwt(&a, d, target);
    }
    a
}

/// `sign(c) * max(0, |c| - t)`.
pub fn soft(c: f64, t: f64) -> f64 {
    c.signum() * (c.abs() - t).max(0.0)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Noise level from the finest detail coefficients: `median|cD_1| / 0.6745`.
pub fn noise_sigma(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let (_, d) = dwt(x);
    let mut abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    median(&mut abs) / MAD_SCALE
}

/// Universal threshold `sigma * sqrt(2 ln N)`.
pub fn universal_threshold(sigma: f64, n: usize) -> f64 {
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

/// Soft-thresholds every detail level at `t`, keeping the approximation.
pub fn wavelet_shrink(x: &[f64], t: f64, levels: usize) -> Vec<f64> {
    let mut c = wavedec(x, levels);
    for d in c.iter_mut().skip(1) {
        d.iter_mut().for_each(|v| *v = soft(*v, t));
    }
    waverec(&c, x.len())
}
