use crate::scalar::Scalar;

/// Per-step lane-keeping reward.
///
/// `d` is the magnitude of the lateral offset and `w` the lane half-width.
/// Headings at or beyond a right angle to the lane score the terminal penalty.
pub fn reward<T: Scalar>(theta: T, d: T, w: T, lambda: T) -> T {
    if theta.abs() < T::FRAC_PI_2() {
        theta.cos() - lambda * theta.abs().sin() - d / w
    } else {
        T::lit(TERMINAL_PENALTY)
    }
}

/// Reward for leaving the lane or turning backward; also the early-termination penalty.
pub const TERMINAL_PENALTY: f64 = -2.0;

/// Quadratic alternative reward on the tracking errors and steering angle.
pub fn quadratic_reward<T: Scalar>(e1: T, e2: T, delta: T) -> T {
    -(T::lit(0.3) * e1 * e1 + e2 * e2 + T::lit(0.03) * delta * delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn reward_examples() {
        assert_eq!(reward(0.0, 0.0, 5.0, 1.0), 1.0);
        assert_abs_diff_eq!(reward(FRAC_PI_4, 2.5, 5.0, 1.0), -0.5, epsilon = 1e-15);
        assert_eq!(reward(FRAC_PI_2, 0.0, 5.0, 1.0), -2.0);
        assert_eq!(reward(-FRAC_PI_2 - 0.1, 0.0, 5.0, 1.0), -2.0);
    }

    #[test]
    fn quadratic_examples() {
        assert_eq!(quadratic_reward(0.0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(quadratic_reward(1.0, 0.0, 0.0), -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(quadratic_reward(1.0, 1.0, 1.0), -1.33, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn bounded_and_maximal_only_at_origin(theta in -1.5..1.5f64, d in 0.0..10.0f64, lambda in 0.0..3.0f64) {
            let r = reward(theta, d, 5.0, lambda);
            prop_assert!(r <= 1.0);
            if theta != 0.0 || d != 0.0 {
                prop_assert!(r < 1.0 || (lambda == 0.0 && d == 0.0 && theta.cos() == 1.0));
            }
        }

        #[test]
        fn decreasing_in_offset(theta in -1.5..1.5f64, d in 0.0..10.0f64, dd in 1e-6..1.0f64) {
            prop_assert!(reward(theta, d + dd, 5.0, 1.0) < reward(theta, d, 5.0, 1.0));
        }

        #[test]
        fn even_in_heading(theta in -1.57..1.57f64, d in 0.0..10.0f64) {
            prop_assert_eq!(reward(theta, d, 5.0, 1.0), reward(-theta, d, 5.0, 1.0));
        }
    }
}
