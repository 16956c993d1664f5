use std::sync::Arc;

use proptest::prelude::*;
use tscv::conditions::{transversality_residual, transversality_residual_regular};
use tscv::expr::parse;
use tscv::{GridFunction, TimeScale, VariationalProblem};

fn scale_strategy() -> impl Strategy<Value = TimeScale> {
    (-5.0..5.0f64, prop::collection::vec(0.01..3.0f64, 2..40)).prop_map(|(start, gaps)| {
        let mut pts = vec![start];
        for g in gaps {
            let next = pts[pts.len() - 1] + g;
            pts.push(next);
        }
        TimeScale::explicit(&pts).unwrap()
    })
}

fn with_values() -> impl Strategy<Value = (Arc<TimeScale>, Vec<f64>, Vec<f64>)> {
    scale_strategy().prop_flat_map(|s| {
        let n = s.len();
        (
            Just(Arc::new(s)),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    })
}

fn magnitude(values: &[f64]) -> f64 {
    values.iter().fold(1.0_f64, |a, v| a.max(v.abs()))
}

proptest! {
    #[test]
    fn single_step_integral_is_mu_times_value((s, f, _) in with_values()) {
        let f = GridFunction::new(s.clone(), f).unwrap();
        for i in 0..s.last_index() {
            let lhs = f.delta_integral(i, i + 1).unwrap();
            prop_assert_eq!(lhs, s.mu(i).unwrap() * f.values()[i]);
        }
    }

    #[test]
    fn integration_by_parts((s, f, g) in with_values()) {
        // int f^sigma g^Delta = (fg)(b) - (fg)(a) - int f^Delta g
        let n = s.len();
        let fg = GridFunction::new(s.clone(), f.clone()).unwrap();
        let gg = GridFunction::new(s.clone(), g.clone()).unwrap();
        let mut lhs_vals = vec![0.0; n];
        let mut rhs_vals = vec![0.0; n];
        for i in 0..n - 1 {
            lhs_vals[i] = fg.sigma_value(i).unwrap() * gg.delta_derivative(i).unwrap();
            rhs_vals[i] = fg.delta_derivative(i).unwrap() * g[i];
        }
        let lhs = tscv::timescale::delta_integral_of(&s, &lhs_vals, 0, n - 1).unwrap();
        let rhs = f[n - 1] * g[n - 1] - f[0] * g[0]
            - tscv::timescale::delta_integral_of(&s, &rhs_vals, 0, n - 1).unwrap();
        let bound = 1e-12 * n as f64 * magnitude(&f) * magnitude(&g);
        prop_assert!((lhs - rhs).abs() <= bound, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn fundamental_theorem((s, f, _) in with_values(), from in 0usize..40, len in 0usize..40) {
        let n = s.len();
        let from = from % n;
        let to = (from + len).min(n - 1);
        let fg = GridFunction::new(s.clone(), f.clone()).unwrap();
        let mut d = vec![0.0; n];
        for (i, slot) in d.iter_mut().enumerate().take(n - 1) {
            *slot = fg.delta_derivative(i).unwrap();
        }
        let integral = tscv::timescale::delta_integral_of(&s, &d, from, to).unwrap();
        prop_assert!((integral - (f[to] - f[from])).abs() <= 1e-12 * n as f64 * magnitude(&f));
    }

    #[test]
    fn integral_is_additive((s, f, _) in with_values(), a in 0usize..40, b in 0usize..40, c in 0usize..40) {
        let n = s.len();
        let mut idx = [a % n, b % n, c % n];
        idx.sort_unstable();
        let fg = GridFunction::new(s, f.clone()).unwrap();
        let whole = fg.delta_integral(idx[0], idx[2]).unwrap();
        let parts = fg.delta_integral(idx[0], idx[1]).unwrap() + fg.delta_integral(idx[1], idx[2]).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-12 * n as f64 * magnitude(&f) * 100.0);
    }

    #[test]
    fn jumps_are_monotone_and_inverse_on_interior(s in scale_strategy()) {
        for i in 0..s.len() {
            let sig = s.sigma(i).unwrap();
            let rho = s.rho(i).unwrap();
            prop_assert!(sig >= i && rho <= i);
            prop_assert!(s.mu(i).unwrap() >= 0.0);
            if i > 0 && i + 1 < s.len() {
                prop_assert_eq!(s.rho(sig).unwrap(), i);
                prop_assert_eq!(s.sigma(rho).unwrap(), i);
            }
        }
        prop_assert_eq!(s.mu(s.last_index()).unwrap(), 0.0);
        prop_assert!(s.is_regular());
    }

    #[test]
    fn transversality_forms_agree(s in scale_strategy(), xs in prop::collection::vec(-2.0..2.0f64, 41)) {
        let s = Arc::new(s);
        let p = VariationalProblem::new(s.clone(), parse("sqrt(1+v^2) + x^2*t/3 + 2*(z-1)^2 + x*z").unwrap(), xs[0]).unwrap();
        let x = GridFunction::new(s.clone(), xs[..s.len()].to_vec()).unwrap();
        let general = transversality_residual(&p, &x).unwrap();
        let regular = transversality_residual_regular(&p, &x).unwrap();
        prop_assert!((general - regular).abs() <= 1e-12 * (1.0 + general.abs()));
    }
}
