macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(prefill_and_decode, "prefill_and_decode.rs");
example!(shift_events, "shift_events.rs");
example!(diagnostics, "diagnostics.rs");
example!(ablation_matrix, "ablation_matrix.rs");
example!(hyperparameter_sweep, "hyperparameter_sweep.rs");
example!(flops_cost, "flops_cost.rs");
example!(trace_files, "trace_files.rs");

#[test]
fn prefill_and_decode_runs() {
    prefill_and_decode::run_example().expect("prefill_and_decode");
}

#[test]
fn shift_events_runs() {
    shift_events::run_example().expect("shift_events");
}

#[test]
fn diagnostics_runs() {
    diagnostics::run_example().expect("diagnostics");
}

#[test]
fn ablation_matrix_runs() {
    ablation_matrix::run_example().expect("ablation_matrix");
}

#[test]
fn hyperparameter_sweep_runs() {
    hyperparameter_sweep::run_example().expect("hyperparameter_sweep");
}

#[test]
fn flops_cost_runs() {
    flops_cost::run_example().expect("flops_cost");
}

#[test]
fn trace_files_runs() {
    trace_files::run_example().expect("trace_files");
}
