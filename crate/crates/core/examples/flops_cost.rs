// FLOPs of prefill and decoding, and what pruning the visual prompt saves.
//
// ```text
// cargo run --example flops_cost
// ```

use swapprune::analytics::{solve_input_tokens, to_tflops, CostParams};
use swapprune::experiment::cmd_cost;

pub fn run_example() -> swapprune::Result<()> {
    // 36 layers, width 2560, MLP 9728: which prompt length costs 1.637 TFLOPs to prefill?
    let n = solve_input_tokens(36, 2560, 9728, 1.637e12)?;
    println!("prompt length for 1.637 TFLOPs prefill: {n}");

    let full = CostParams { layers: 36, hidden: 2560, intermediate: 9728, input_tokens: n, generated: 1000 };
    print!("{}", cmd_cost(full)?.table());

    // keep a third of 432 visual tokens
    let pruned = CostParams { input_tokens: n - 432 + 144, ..full };
    let a = cmd_cost(full)?;
    let b = cmd_cost(pruned)?;
    println!(
        "pruned prompt {}: prefill {:.3} -> {:.3} TFLOPs, total {:.3} -> {:.3}",
        pruned.input_tokens,
        to_tflops(a.prefill),
        to_tflops(b.prefill),
        to_tflops(a.total),
        to_tflops(b.total)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> swapprune::Result<()> {
    run_example()
}
