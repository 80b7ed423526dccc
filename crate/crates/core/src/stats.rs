//! Numerical statistics primitives: moments, normal and Student-t quantiles,
//! Cholesky factorisation and multivariate normal sampling.

#![allow(clippy::excessive_precision)]

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Unbiased (divisor `count - 1`).
    pub variance: f64,
    pub count: usize,
}

impl SummaryStats {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Standard error of the mean.
    pub fn std_err(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let s: CompensatedSum = values.iter().copied().collect();
    Ok(s.value() / values.len() as f64)
}

/// Sample mean and unbiased variance, two-pass with compensated sums.
pub fn mean_var(values: &[f64]) -> Result<SummaryStats> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Err(Error::NeedTwoValues);
    }
    let ss: CompensatedSum = values.iter().map(|v| (v - m) * (v - m)).collect();
    // second-pass correction for the rounding error left in `m`
    let resid: CompensatedSum = values.iter().map(|v| v - m).collect();
    let n = values.len() as f64;
    let var = (ss.value() - resid.value() * resid.value() / n) / (n - 1.0);
    Ok(SummaryStats {
        mean: m,
        variance: var.max(0.0),
        count: values.len(),
    })
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
fn poly(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// Wichura's AS 241 (PPND16), coefficients in ascending powers.
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    1.331_416_678_917_843_774_5e2,
    1.971_590_950_306_551_442_7e3,
    1.373_169_376_550_946_112_5e4,
    4.592_195_393_154_987_145_7e4,
    6.726_577_092_700_870_085_3e4,
    3.343_057_558_358_812_810_5e4,
    2.509_080_928_730_122_672_7e3,
];
const B: [f64; 8] = [
    1.0,
    4.231_333_070_160_091_125_2e1,
    6.871_870_074_920_579_083e2,
    5.394_196_021_424_751_107_7e3,
    2.121_379_430_158_659_586_7e4,
    3.930_789_580_009_271_061e4,
    2.872_908_573_572_194_267_4e4,
    5.226_495_278_852_854_561e3,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    2.417_807_251_774_506_117_7e-1,
    2.272_384_498_926_918_458_33e-2,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    6.897_673_349_851_000_045_5e-1,
    1.481_039_764_274_800_745_9e-1,
    1.519_866_656_361_645_719_66e-2,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    2.965_605_718_285_048_912_3e-1,
    2.653_218_952_657_612_309_3e-2,
    1.242_660_947_388_078_438_6e-3,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    5.998_322_065_558_879_376_9e-1,
    1.369_298_809_227_358_053_1e-1,
    1.487_536_129_085_061_485_25e-2,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -z } else { z })
}

/// Student-t CDF through the regularized incomplete beta function.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * statrs::function::beta::beta_reg(0.5 * df, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Inverse Student-t CDF with `df` degrees of freedom.
pub fn t_quantile(p: f64, df: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be ≥ 1".into()));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let nu = df as f64;
    match df {
        1 => return Ok((std::f64::consts::PI * (p - 0.5)).tan()),
        2 => {
            let a = 4.0 * p * (1.0 - p);
            return Ok((2.0 * p - 1.0) * (2.0 / a).sqrt());
        }
        _ => {}
    }
    let z = normal_quantile(p)?;
    if df >= 10_000 {
        // Cornish-Fisher expansion; the next term is O(df^-4).
        let z2 = z * z;
        let g1 = (z2 + 1.0) * z / 4.0;
        let g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
        let g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
        return Ok(z + g1 / nu + g2 / (nu * nu) + g3 / (nu * nu * nu));
    }
    // |t_p| ≥ |z_p|; bracket on the upper side, then bisect.
    let upper_p = p.max(1.0 - p);
    let mut lo = z.abs();
    let mut hi = (2.0 * lo).max(1.0);
    while t_cdf(hi, nu) < upper_p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, nu) < upper_p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(if p < 0.5 { -t } else { t })
}

fn max_abs(m: &[Vec<f64>]) -> f64 {
    m.iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn check_square(m: &[Vec<f64>]) -> Result<usize> {
    let d = m.len();
    for row in m {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    Ok(d)
}

/// Lower-triangular `L` with `L Lᵀ = S`.
pub fn cholesky(s: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = check_square(s)?;
    if d == 0 {
        return Err(Error::Domain("empty matrix".into()));
    }
    let scale = max_abs(s);
    let pivot_floor = 1e-12 * scale;
    let mut l = vec![vec![0.0; d]; d];
    for j in 0..d {
        let mut diag = CompensatedSum::new();
        diag.add(s[j][j]);
        for p in 0..j {
            diag.add(-l[j][p] * l[j][p]);
        }
        let pivot = diag.value();
        // also rejects NaN pivots
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(pivot > pivot_floor) {
            return Err(Error::NotPositiveDefinite);
        }
        let ljj = pivot.sqrt();
        l[j][j] = ljj;
        for i in j + 1..d {
            let mut acc = CompensatedSum::new();
            acc.add(0.5 * (s[i][j] + s[j][i]));
            for p in 0..j {
                acc.add(-l[i][p] * l[j][p]);
            }
            l[i][j] = acc.value() / ljj;
        }
    }
    Ok(l)
}

/// `L Lᵀ` for a square `L`.
pub fn gram_lower(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = l.len();
    let mut out = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            out[i][j] = (0..d).map(|p| l[i][p] * l[j][p]).sum();
        }
    }
    out
}

/// `mu + L z` with `z` a vector of independent standard normals.
pub fn mvn_sample<R: Rng + ?Sized>(rng: &mut R, mu: &[f64], l: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mu.len()];
    mvn_fill(rng, mu, l, &mut out)?;
    Ok(out)
}

/// Allocation-free variant of [`mvn_sample`].
pub fn mvn_fill<R: Rng + ?Sized>(
    rng: &mut R,
    mu: &[f64],
    l: &[Vec<f64>],
    out: &mut [f64],
) -> Result<()> {
    let d = mu.len();
    if l.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: l.len(),
        });
    }
    if out.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: out.len(),
        });
    }
    let mut z = [0.0f64; 32];
    let mut z_heap;
    let z: &mut [f64] = if d <= z.len() {
        &mut z[..d]
    } else {
        z_heap = vec![0.0; d];
        &mut z_heap
    };
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
    for i in 0..d {
        let row = &l[i];
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        let mut acc = mu[i];
        for p in 0..=i {
            acc += row[p] * z[p];
        }
        out[i] = acc;
    }
    Ok(())
}
