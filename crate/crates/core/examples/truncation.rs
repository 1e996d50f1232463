//! Truncation `V_n = V_+ - min(V_-, n)` of a singular potential and the
//! convergence of `T_z^{A_n} f` to `T_z^A f`.

use pell_lab::field::{Bc, CoefficientTuple, ComplexMatrix, GridDomain, C64};
use pell_lab::semigroup::{check_truncation_convergence, singular_potential, ProbeSpec, TruncationParams};

fn main() -> pell_lab::Result<()> {
    let dom = GridDomain::new(vec![[-1.0, 1.0], [-1.0, 1.0]], vec![32, 32], Bc::Dirichlet)?;
    let v = singular_potential(&dom, &[0.0, 0.0], 0.2, 1.5)?;
    let t = CoefficientTuple::with_potential(ComplexMatrix::identity(2), v)?;
    let f = ProbeSpec::Bump { center: vec![0.1, -0.2], width: 0.5 }.build(&dom, 0)?;
    let n_list: Vec<f64> = (0..=8).map(|k| 2f64.powi(k)).collect();
    let r = check_truncation_convergence(&t, &dom, &f, C64::new(0.1, 0.0), &n_list, &TruncationParams::default())?;
    println!("max V_- = {:.3}", r.max_v_minus);
    for row in &r.rows {
        println!(
            "n={:<5} grad_err={:.4e} pot_err={:.4e} form_constant={:.5}",
            row.n, row.grad_error, row.potential_error, row.form_constant
        );
    }
    println!("monotone={} exact_zero={} passed={}", r.monotone, r.exact_zero, r.passed);
    Ok(())
}
