//! Central finite-difference gradient checker.

use super::graph::{Graph, Var};
use super::tensor::ParamGroup;
use crate::error::{Error, Result};

/// Denominator floor for relative errors, so gradients that are zero on both
/// sides compare as equal instead of dividing by zero.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(group, key, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares reverse-mode gradients of the scalar built by `build` against
/// central differences with step `eps`, for every entry of every group.
pub fn check_gradients<F>(groups: &[ParamGroup], eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[ParamGroup]) -> Result<Var>,
{
    let eval = |gs: &[ParamGroup]| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, gs)?;
        Ok(g.value(l).item())
    };

    let mut graph = Graph::new();
    for g in groups {
        graph.register_group(g)?;
    }
    let loss = build(&mut graph, groups)?;
    let grads = graph.backward(loss)?;

    let mut work: Vec<ParamGroup> = groups.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for gi in 0..groups.len() {
        let keys: Vec<String> = groups[gi].keys().map(str::to_string).collect();
        for key in keys {
            let analytic = grads
                .get(groups[gi].name(), &key)
                .ok_or_else(|| Error::Contract(format!("no gradient recorded for `{key}`")))?
                .clone();
            for idx in 0..analytic.len() {
                let orig = groups[gi].require(&key)?.values()[idx];
                work[gi].get_mut(&key).expect("key").values_mut()[idx] = orig + eps;
                let plus = eval(&work)?;
                work[gi].get_mut(&key).expect("key").values_mut()[idx] = orig - eps;
                let minus = eval(&work)?;
                work[gi].get_mut(&key).expect("key").values_mut()[idx] = orig;

                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.values()[idx];
                let err = relative_error(a, numeric);
                report.checked += 1;
                if report.worst.is_none() || err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst =
                        Some((groups[gi].name().to_string(), key.clone(), idx, a, numeric));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, MlpSpec, Tensor};
    use crate::rng::seeded;

    #[test]
    fn quadratic_of_mlp_matches_finite_differences() {
        let spec = MlpSpec::new(vec![3, 5, 2], Activation::Tanh, Activation::Softmax).unwrap();
        let mut p = ParamGroup::new("m");
        spec.init_params(&mut p, "net", &mut seeded(11)).unwrap();
        let x = Tensor::matrix(2, 3, vec![0.1, -0.4, 0.9, 1.2, 0.3, -0.7]).unwrap();
        let report = check_gradients(&[p], 1e-5, |g, gs| {
            let input = g.constant(x.clone());
            let out = spec.forward(g, &gs[0], "net", input)?;
            let sq = g.square(out);
            Ok(g.sum(sq))
        })
        .unwrap();
        assert_eq!(report.checked, 3 * 5 + 5 + 5 * 2 + 2);
        assert!(report.passes(1e-4), "{report:?}");
    }
}
