//! Benchmark fixtures shared by the criterion targets in `benches/`.

use kshape_core::{
    monotone_increasing, non_crossing_system, synthetic, BiasSet, CompactBox, ConstraintSystem, Covering, Dataset,
    KernelSpec, Norm, ObjectiveSpec,
};

pub struct Problem {
    pub data: Dataset,
    pub objective: ObjectiveSpec,
    pub system: ConstraintSystem,
    pub spec: KernelSpec,
    pub covering: Covering,
}

/// Monotone ridge regression of a noisy parabola with `per_axis` net centers on [0, 2].
pub fn monotone_parabola(n: usize, per_axis: usize) -> Problem {
    let data = synthetic::noisy_parabola(n, 1.0, 0).expect("valid sizes");
    let c = monotone_increasing(0, CompactBox::interval(0.0, 2.0).unwrap()).unwrap();
    let system = ConstraintSystem::new(vec![c], 1, 1, BiasSet::Zero).unwrap();
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let covering = Covering::uniform_count(&system, &spec, per_axis, Norm::L2, 64).unwrap();
    Problem { data, objective: ObjectiveSpec::ridge(1e-4), system, spec, covering }
}

/// Five non-crossing quantile curves on heteroscedastic data with recycled nets.
pub fn joint_quantiles(n: usize, max_added: usize) -> Problem {
    let data = synthetic::heteroscedastic_line(n, 0).expect("valid sizes");
    let levels = vec![0.1, 0.3, 0.5, 0.7, 0.9];
    let system = non_crossing_system(levels.len(), CompactBox::interval(0.0, 1.0).unwrap()).unwrap();
    let spec = KernelSpec::gaussian(0.5).unwrap();
    let covering = Covering::recycled(&system, &spec, &data.x, max_added, Norm::L2, 64).unwrap();
    let objective = ObjectiveSpec::quantiles(levels, 10.0, &data.y);
    Problem { data, objective, system, spec, covering }
}
