//! Per-UAV fairness penalty and immediate reward, both in Mbps.

use super::EnvError;

fn served_mbps(rates_bps: &[f64], served: &[bool]) -> Vec<f64> {
    rates_bps
        .iter()
        .zip(served)
        .filter(|(_, &s)| s)
        .map(|(r, _)| r / 1e6)
        .collect()
}

/// Population standard deviation of served rates (Mbps) about their mean.
pub fn fairness_penalty(rates_bps: &[f64], served: &[bool]) -> Result<f64, EnvError> {
    let rates = served_mbps(rates_bps, served);
    if rates.is_empty() {
        return Err(EnvError::Domain("fairness needs at least one served GU".into()));
    }
    if rates.iter().all(|&c| c == rates[0]) {
        return Ok(0.0);
    }
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

/// Mean served rate minus `lambda` times the fairness penalty, in Mbps.
pub fn agent_reward(rates_bps: &[f64], served: &[bool], lambda: f64) -> Result<f64, EnvError> {
    let eps = fairness_penalty(rates_bps, served)?;
    let rates = served_mbps(rates_bps, served);
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok(mean - lambda * eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn equal_rates_have_no_penalty() {
        assert_eq!(fairness_penalty(&[5e6; 3], &[true; 3]).unwrap(), 0.0);
    }

    #[test]
    fn two_rates_population_std() {
        assert_relative_eq!(fairness_penalty(&[2e6, 4e6], &[true, true]).unwrap(), 1.0);
    }

    #[test]
    fn single_served_gu() {
        assert_eq!(fairness_penalty(&[0.0, 7e6, 0.0], &[false, true, false]).unwrap(), 0.0);
    }

    #[test]
    fn unserved_entries_ignored() {
        let eps = fairness_penalty(&[2e6, 99e6, 4e6], &[true, false, true]).unwrap();
        assert_relative_eq!(eps, 1.0);
    }

    #[test]
    fn no_served_gu_is_error() {
        assert!(fairness_penalty(&[1e6, 2e6], &[false, false]).is_err());
    }

    #[test]
    fn reward_examples() {
        assert_relative_eq!(agent_reward(&[3e6, 3e6], &[true, true], 0.5).unwrap(), 3.0);
        assert_relative_eq!(agent_reward(&[2e6, 4e6], &[true, true], 0.5).unwrap(), 2.5);
    }

    proptest! {
        #[test]
        fn lambda_zero_is_mean_rate(rates in proptest::collection::vec(0.0f64..1e8, 1..10)) {
            let served = vec![true; rates.len()];
            let r = agent_reward(&rates, &served, 0.0).unwrap();
            let mean = rates.iter().sum::<f64>() / rates.len() as f64 / 1e6;
            prop_assert!((r - mean).abs() <= 1e-9 * mean.max(1.0));
        }

        #[test]
        fn penalty_permutation_invariant(mut rates in proptest::collection::vec(0.0f64..1e8, 1..10), k in 0usize..10) {
            let served = vec![true; rates.len()];
            let a = fairness_penalty(&rates, &served).unwrap();
            let k = k % rates.len();
            rates.rotate_left(k);
            rates.reverse();
            let b = fairness_penalty(&rates, &served).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn penalty_zero_iff_equal(rates in proptest::collection::vec(0.0f64..1e8, 2..10)) {
            let served = vec![true; rates.len()];
            let eps = fairness_penalty(&rates, &served).unwrap();
            let all_equal = rates.iter().all(|&r| r == rates[0]);
            prop_assert_eq!(eps == 0.0, all_equal);
        }
    }
}
