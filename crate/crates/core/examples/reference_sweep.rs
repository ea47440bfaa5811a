//! Runs the default core sweep on the reference synthetic dataset and prints
//! the report CSV and the operating region.

use featpress_core::experiment::{core_sweep, operating_region, report_csv, sweep, EvalOptions, DEFAULT_EPSILON};
use featpress_core::forest::ForestParams;
use featpress_core::tabular::{stratified_split, synth_generate, SynthSpec};

fn main() -> featpress_core::Result<()> {
    let seed = 7;
    let table = synth_generate(&SynthSpec::reference())?;
    let (train, test) = stratified_split(&table, 0.3, seed)?;
    let configs = core_sweep(&ForestParams::with_seed(seed), seed);
    let points = sweep(&train, &test, &configs, &EvalOptions::default())?;
    print!("{}", report_csv(&points, false));
    let region = operating_region(&points, DEFAULT_EPSILON)?;
    eprintln!(
        "{} of {} points within {DEFAULT_EPSILON} of their stage baseline, reduction {:.2}x to {:.2}x",
        region.members.len(),
        points.len(),
        region.min_reduction,
        region.max_reduction
    );
    Ok(())
}
