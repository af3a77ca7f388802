//! Central finite-difference gradient checks.

use ndarray::{Array2, ArrayView2};

use super::mlp::Mlp;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest relative error over the checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose ±h perturbation flips a relu or hits a clamp; the
    /// loss is not differentiable there.
    pub skipped: usize,
}

/// Relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn loss(net: &Mlp, x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> f64 {
    let y = net.forward(x).expect("input shape").into_output();
    (&y * &w).sum()
}

fn kinks(net: &Mlp, x: ArrayView2<'_, f64>) -> (Vec<bool>, Array2<f64>) {
    let signs = net.hidden_preactivation_signs(x).expect("input shape");
    let raw = net.forward(x).expect("input shape").into_output();
    (signs, raw)
}

/// Compares the analytic gradient of `L = Σ w ⊙ net(x)` with central
/// differences of step `h` for every parameter.
pub fn check_gradients(net: &Mlp, x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>, h: f64, floor: f64) -> GradCheck {
    let cache = net.forward(x).expect("input shape");
    let (analytic, _) = net.backward(&cache, w);
    let mut probe = net.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let (signs0, _) = kinks(net, x);
    let clamp_state = |y: &Array2<f64>| -> Vec<bool> {
        use super::mlp::{Head, LOG_STD_MAX, LOG_STD_MIN};
        if net.head() != Head::SquashedGaussian {
            return Vec::new();
        }
        let half = y.ncols() / 2;
        y.rows()
            .into_iter()
            .flat_map(|r| r.iter().skip(half).map(|&v| v <= LOG_STD_MIN || v >= LOG_STD_MAX).collect::<Vec<_>>())
            .collect()
    };
    let clamp0 = clamp_state(&net.forward(x).expect("input shape").into_output());
    for i in 0..net.num_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let lp = loss(&probe, x, w);
        let (sp, yp) = kinks(&probe, x);
        probe.params_mut()[i] = orig - h;
        let lm = loss(&probe, x, w);
        let (sm, ym) = kinks(&probe, x);
        probe.params_mut()[i] = orig;
        if sp != signs0 || sm != signs0 || clamp_state(&yp) != clamp0 || clamp_state(&ym) != clamp0 {
            out.skipped += 1;
            continue;
        }
        let fd = (lp - lm) / (2.0 * h);
        out.max_rel_error = out.max_rel_error.max(relative_error(analytic[i], fd, floor));
        out.checked += 1;
    }
    out
}
