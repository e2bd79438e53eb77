use super::Tensor;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    out
}

/// Outcome of comparing one analytic gradient tensor with finite differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn compare(name: impl Into<String>, analytic: &Tensor, numeric: &Tensor, floor: f64) -> Self {
        let mut out = GradCheck {
            name: name.into(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
            let e = relative_error(a, n, floor);
            if e > out.max_rel_error || i == 0 {
                out.max_rel_error = e;
                out.worst_index = i;
                out.analytic = a;
                out.numeric = n;
            }
        }
        out
    }
}
