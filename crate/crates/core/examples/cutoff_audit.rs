//! Regions, vanishing pattern and derivative constants of the truncations `Psi_n`.

use pell_lab::bellman::MollifierParams;
use pell_lab::cutoff::{audit_derivatives, check_admissible, check_comparability, delta_pq, reference_samples, CutoffParams};

fn main() -> pell_lab::Result<()> {
    let p = 3.0;
    println!("delta(p,q) at p={p}: {:.4}", delta_pq(p)?);
    let mp = MollifierParams::with_nu(0.1)?;
    for kappa in [0.2, 0.1, 0.05] {
        let params = CutoffParams::new(p, kappa)?;
        let pts = reference_samples(&params, 2000, 1);
        let audit = audit_derivatives(&params, &mp, &[1.0, 10.0, 100.0, 1000.0], &pts)?;
        println!("kappa={kappa} vanishing={} stable={}", audit.vanishing_ok, audit.stable_in_n);
        for r in &audit.rows {
            println!(
                "  n={:<6} gz={:.4} ge={:.4} hzz={:.4} hee={:.4} hze={:.4} off={:.2e}",
                r.n, r.grad_zeta, r.grad_eta, r.hess_zeta_zeta, r.hess_eta_eta, r.hess_zeta_eta, r.max_off_region
            );
        }
        for n in [1.0, 10.0, 100.0] {
            let c = check_comparability(&params, n, 2000, 2)?;
            println!("  comparability n={n}: ratio in [{:.4}, {:.4}], C={:.4}", c.min_ratio, c.max_ratio, c.band_constant);
        }
    }
    let params = CutoffParams::new(p, 0.1)?;
    let adm = check_admissible(&params, &mp, &[1.0, 10.0, 100.0, 1000.0], &reference_samples(&params, 500, 3))?;
    for i in &adm.items {
        println!("{:<16} passed={} value={:.3e} {}", i.item, i.passed, i.value, i.note.clone().unwrap_or_default());
    }
    println!("min |omega| on the n=1 annulus: {:.4}", adm.min_modulus_annulus_n1);
    Ok(())
}
