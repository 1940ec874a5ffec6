//! Independent oracles shared by the integration and acceptance tests.
//! None of these call into the library's numeric routines.

#![allow(dead_code)]

use rand::Rng as _;
use trra_core::rng::Rng;

/// Double-double number: `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from(q3))
    }

    pub fn mul_pow2(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// exp by reduction `x = k ln2 + r`, `r / 2^10` Taylor series, then
    /// ten squarings.
    pub fn exp(self) -> Dd {
        let k = (self.hi / LN2.hi).round();
        let r = self.sub(LN2.mul(Dd::from(k))).mul_pow2(-10);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=24 {
            term = term.mul(r).div(Dd::from(n as f64));
            sum = sum.add(term);
        }
        for _ in 0..10 {
            sum = sum.mul(sum);
        }
        sum.mul_pow2(k as i32)
    }

    pub fn gt(self, o: Dd) -> bool {
        self.hi > o.hi || (self.hi == o.hi && self.lo > o.lo)
    }
}

/// Weighted soft vote in double-double arithmetic: `(s0, s1)`.
pub fn vote_dd(logits: &[(f64, f64)], weights: &[f64]) -> (Dd, Dd) {
    let mut s0 = Dd::ZERO;
    let mut s1 = Dd::ZERO;
    for (&(l0, l1), &w) in logits.iter().zip(weights) {
        let p0 = Dd::ONE.div(Dd::ONE.add(Dd::from(l1).sub(Dd::from(l0)).exp()));
        let p1 = Dd::ONE.div(Dd::ONE.add(Dd::from(l0).sub(Dd::from(l1)).exp()));
        s0 = s0.add(Dd::from(w).mul(p0));
        s1 = s1.add(Dd::from(w).mul(p1));
    }
    (s0, s1)
}

/// Lanczos (g = 7, n = 9) log-gamma for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn student_t_pdf(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Two-sided p-value of a t statistic: `1 - 2 * integral_0^|t| pdf`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    (1.0 - 2.0 * simpson(|x| student_t_pdf(x, df), 0.0, t.abs(), 20_000)).max(0.0)
}

/// Welch statistic and degrees of freedom computed directly.
pub fn welch_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma) / a.len() as f64, var(b, mb) / b.len() as f64);
    let t = (ma - mb) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    (t, df)
}

/// Triple-loop valid 3×3 convolution, relu, then mean pooling and the head.
/// Inputs are flat row-major 3×h×w; kernels K×3×3×3; head 2×K.
pub fn naive_refnet(
    input: &[f64],
    h: usize,
    w: usize,
    kernels: &[f64],
    bias: &[f64],
    head: &[f64],
    head_bias: [f64; 2],
) -> (Vec<f64>, [f64; 2]) {
    let k = bias.len();
    let (oh, ow) = (h - 2, w - 2);
    let mut maps = vec![0.0; k * oh * ow];
    for ch in 0..k {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = bias[ch];
                for c in 0..3 {
                    for di in 0..3 {
                        for dj in 0..3 {
                            acc +=
                                input[c * h * w + (i + di) * w + (j + dj)] * kernels[((ch * 3 + c) * 3 + di) * 3 + dj];
                        }
                    }
                }
                maps[(ch * oh + i) * ow + j] = if acc > 0.0 { acc } else { 0.0 };
            }
        }
    }
    let mut scores = head_bias;
    for (c, score) in scores.iter_mut().enumerate() {
        for ch in 0..k {
            let mean: f64 = maps[ch * oh * ow..(ch + 1) * oh * ow].iter().sum::<f64>() / (oh * ow) as f64;
            *score += head[c * k + ch] * mean;
        }
    }
    (maps, scores)
}

/// Random u8 RGB buffer for an image of the given size.
pub fn random_pixels(h: usize, w: usize, rng: &mut Rng) -> Vec<u8> {
    (0..h * w * 3).map(|_| rng.random()).collect()
}
