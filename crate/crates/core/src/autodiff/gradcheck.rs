use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};
use super::AutodiffError;

/// Entries whose gradients are both below this magnitude are compared
/// absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares every parameter's analytic gradient with a central difference
/// of step `h`. `loss` builds a scalar from the bound parameters; any inputs
/// it needs should be captured as constants.
pub fn gradient_check<F>(params: &ParamSet, h: f64, loss: F) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let out = loss(&mut tape, &bound)?;
    let analytic = bound.gradients(&tape.backward(out)?);

    let eval = |p: &ParamSet| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let b = p.bind_frozen(&mut tape);
        let v = loss(&mut tape, &b)?;
        Ok(tape.value(v).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let mut probe = params.clone();
    for (name, t) in params.iter() {
        let g = &analytic[name];
        for i in 0..t.len() {
            let orig = t.data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(g.data()[i], numeric);
            report.checked += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
