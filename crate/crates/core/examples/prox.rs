//! Evaluate the sorted-l1 prox on a small vector and check its certificate.
//!
//! `cargo run --example prox`

use slope::sorted_l1::{
    kkt_verify, prox_sorted_l1, prox_stack, prox_stack_blocks, sorted_l1_norm, LambdaSequence,
    SortedProxInput,
};

fn main() -> slope::Result<()> {
    let y = [-1.5, 4.0, 0.2, 3.6, -3.9, 0.9];
    let lambda = LambdaSequence::new(vec![2.0, 1.6, 1.2, 1.0, 0.6, 0.2])?;

    let x = prox_sorted_l1(&y, &lambda)?;
    println!("y          = {y:?}");
    println!("lambda     = {:?}", lambda.as_slice());
    println!("prox(y)    = {x:?}");
    println!("J(prox(y)) = {:.4}", sorted_l1_norm(&x, &lambda)?);

    // The same computation in the sorted frame, block by block.
    let sorted = SortedProxInput::from_vector(&y);
    for b in prox_stack_blocks(&sorted.magnitudes, &lambda)? {
        println!("block {}..={}: value {:.4}", b.start, b.end, b.value);
    }
    let xs = prox_stack(&sorted.magnitudes, &lambda)?;
    let cert = kkt_verify(&sorted.magnitudes, &lambda, &xs)?;
    println!("KKT max violation {:.1e}, multipliers {:?}", cert.max_violation, cert.mu);
    Ok(())
}
