//! Small floating-point helpers shared by the simulators and the term audit.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// `((i-1)/i)^power` for `i >= 1`, evaluated through `ln_1p` so it stays
/// accurate for large `i`.
pub fn decay_ratio(i: usize, power: f64) -> f64 {
    if i <= 1 {
        return 0.0;
    }
    (power * (-1.0 / i as f64).ln_1p()).exp()
}

/// Format a float with 17 significant digits for CSV export.
pub fn fmt17(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    format!("{value:.16e}")
}
