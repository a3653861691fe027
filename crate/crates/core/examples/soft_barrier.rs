//! The look-ahead barrier at one state: the soft-min trace over the backup
//! horizon, its maximizer, and the gradient from both routes.

use mm_asif::barrier::lse;
use mm_asif::platoon::{build_platoon, PlatoonConfig};

fn main() -> mm_asif::Result<()> {
    let model = build_platoon(&PlatoonConfig::default())?;
    let x0 = model.state(&[-0.25, 0.0, 0.5], &[0.25, 0.5])?;
    let lookahead = model.lookahead(0.01);

    let eval = lookahead.evaluate(&x0)?;
    let (ideal, _) = lookahead.psi_ideal(&x0)?;
    println!("h(x0)        {:.6}", model.barrier_value(&x0));
    println!("psi(x0)      {:.6} at tau = {:.2}", eval.psi, eval.tau_star);
    println!("hard min sup {:.6}", ideal);
    for (t, g) in eval.gamma_trace.iter().step_by(10) {
        println!("  gamma({t:.2}) = {g:+.6}");
    }

    let (direct, chain) = lookahead.gradients(&x0, &eval)?;
    println!("grad (direct)  {:+.5?}", direct.as_slice());
    println!("grad (chain)   {:+.5?}", chain.as_slice());

    let values = [0.3, 0.31, 0.5, 1.0];
    for p in [1.0, 10.0, 1000.0] {
        println!("lse({values:?}, p={p}) = {:.6}", lse(&values, p)?);
    }
    Ok(())
}
