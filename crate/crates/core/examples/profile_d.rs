// Dev profiling harness: system/pool sizes and one D solve with timings.

use std::time::Instant;

use gsdbench::data::load_evaluation_table;
use gsdbench::gsd::{d_objective, DContext};
use gsdbench::order::PreferenceSystem;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let table = load_evaluation_table(args[1].as_ref(), args[2].as_ref()).unwrap();
    eprintln!(
        "table: {} strategies x {} prompts",
        table.strategies.len(),
        table.prompt_count()
    );

    let t0 = Instant::now();
    let system = PreferenceSystem::from_table(&table, None);
    eprintln!(
        "system: {} nodes, |r1| = {}, |reduced| = {}, |r2| = {} ({:?}) in {:.2}s",
        system.node_count(),
        system.r1.len(),
        system.r1_reduced.len(),
        system.r2.len(),
        system.r2_mode,
        t0.elapsed().as_secs_f64()
    );

    let t0 = Instant::now();
    let context = DContext::new(&system);
    eprintln!(
        "pool: {} rows in {:.2}s",
        context.constraint_count(),
        t0.elapsed().as_secs_f64()
    );

    for (ci, oi) in [(0usize, 1usize), (1, 0), (2, 3)] {
        let objective = d_objective(&system, ci, oi);
        let t0 = Instant::now();
        let (value, _witness) = context.minimize(&objective);
        eprintln!(
            "D({},{}) = {:.6} in {:.2}s",
            table.strategies[ci],
            table.strategies[oi],
            value,
            t0.elapsed().as_secs_f64()
        );
    }
}
