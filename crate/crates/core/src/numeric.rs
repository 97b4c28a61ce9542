//! Small combinatorial helpers shared by the basis, state and observable code.

use statrs::function::factorial::ln_factorial;

/// Below this particle count factorials are exact in `u64`.
pub const EXACT_FACTORIAL_MAX: u64 = 20;

pub fn factorial_u64(n: u64) -> Option<u64> {
    (1..=n).try_fold(1u64, |acc, k| acc.checked_mul(k))
}

pub fn ln_fact(n: u64) -> f64 {
    if n <= EXACT_FACTORIAL_MAX {
        (factorial_u64(n).unwrap() as f64).ln()
    } else {
        ln_factorial(n)
    }
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is always divisible by (i + 1)
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Binomial coefficient in floating point; zero outside `0 <= k <= n`.
pub fn binomial_f64(n: i64, k: i64) -> f64 {
    if n < 0 || k < 0 || k > n {
        return 0.0;
    }
    if n as u64 <= EXACT_FACTORIAL_MAX {
        return binomial_u128(n as u64, k as u64).unwrap() as f64;
    }
    (ln_fact(n as u64) - ln_fact(k as u64) - ln_fact((n - k) as u64)).exp()
}

/// `n (n-1) ... (n-k+1)`, zero when `k > n`.
pub fn falling_factorial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    ((n - k + 1)..=n).fold(1.0, |acc, x| acc * x as f64)
}

/// Multinomial `N! / prod(k_i!)` as a logarithm.
pub fn ln_multinomial(counts: impl IntoIterator<Item = u64>) -> f64 {
    let mut total = 0u64;
    let mut denom = 0.0;
    for c in counts {
        total += c;
        denom += ln_fact(c);
    }
    ln_fact(total) - denom
}

/// `N! / prod(k_i!)` computed exactly when the total is small enough.
pub fn multinomial_f64(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total <= EXACT_FACTORIAL_MAX {
        let num = factorial_u64(total).unwrap();
        let den = counts
            .iter()
            .map(|&c| factorial_u64(c).unwrap())
            .product::<u64>();
        (num / den) as f64
    } else {
        ln_multinomial(counts.iter().copied()).exp()
    }
}

/// Neumaier-compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}
