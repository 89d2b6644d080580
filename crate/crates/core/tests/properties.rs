//! Property tests over random instances: solver-vs-oracle agreement,
//! allocation invariants, apportionment exactness, partition and
//! communication-plan invariants, and simulator bounds.

use proptest::prelude::*;

use modplan::mesh::{
    build_box_mesh, comm_plan, largest_remainder, partition_rcb, partition_stats, Partition,
    RankWeights,
};
use modplan::model::{
    brute_force_allocation, solve_allocation, tmin_unconstrained, DeviceClass,
};
use modplan::sim::{estimate_timestep, IoParams, NetworkParams};
use modplan::sweep::{ClassModel, DeviceKind, MachineModel};

fn class_strategy() -> impl Strategy<Value = DeviceClass> {
    (
        1.0f64..1000.0,
        1u64..6,
        prop_oneof![Just(None), (10.0f64..5000.0).prop_map(Some)],
    )
        .prop_map(|(p_opt, count, cap)| {
            let mut c = DeviceClass::new("c", p_opt, count);
            c.c_max = cap;
            c
        })
}

fn instance_strategy() -> impl Strategy<Value = (f64, Vec<DeviceClass>)> {
    (
        10.0f64..10_000.0,
        prop::collection::vec(class_strategy(), 1..=3),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn solver_between_oracle_and_additive_bound((cost, classes) in instance_strategy()) {
        let grid_steps = 400u64;
        let solved = solve_allocation(cost, &classes).unwrap();
        let oracle = brute_force_allocation(cost, &classes, grid_steps).unwrap();
        prop_assert_eq!(solved.feasible, oracle.feasible);
        if !solved.feasible {
            return Ok(());
        }
        let bound = tmin_unconstrained(cost, &classes).unwrap();
        prop_assert!(solved.t_min >= bound - 1e-12);
        // The solver is exact, so it can never sit above any grid point.
        prop_assert!(solved.t_min <= oracle.t_min + 1e-9 * oracle.t_min.max(1.0));
        // One grid quantum on the slowest class bounds the oracle gap.
        let max_inv = classes
            .iter()
            .map(|c| 1.0 / c.aggregate_p_opt())
            .fold(0.0f64, f64::max);
        let quantum = cost / grid_steps as f64 * max_inv;
        prop_assert!(oracle.t_min - solved.t_min <= 2.0 * quantum + 1e-12);
    }

    #[test]
    fn equal_time_among_unsaturated((cost, classes) in instance_strategy()) {
        let alloc = solve_allocation(cost, &classes).unwrap();
        prop_assume!(alloc.feasible && cost > 0.0);
        let times: Vec<f64> = alloc
            .classes
            .iter()
            .zip(&classes)
            .filter(|(a, _)| !a.saturated)
            .map(|(a, c)| a.cost / c.aggregate_p_opt())
            .collect();
        for w in times.windows(2) {
            let scale = w[0].abs().max(w[1].abs()).max(1e-300);
            prop_assert!((w[0] - w[1]).abs() / scale <= 1e-9);
        }
        // Conservation.
        let total: f64 = alloc.classes.iter().map(|c| c.cost).sum();
        prop_assert!((total - cost).abs() <= 1e-9 * cost.max(1.0));
        // Saturated classes sit exactly at capacity and nobody exceeds it.
        for (a, c) in alloc.classes.iter().zip(&classes) {
            if let Some(cap) = c.c_max {
                prop_assert!(a.cost_per_device <= cap * (1.0 + 1e-12));
                if a.saturated {
                    prop_assert_eq!(a.cost, c.total_cap());
                }
            } else {
                prop_assert!(!a.saturated);
            }
        }
    }

    #[test]
    fn extra_class_never_hurts((cost, classes) in instance_strategy(), extra in class_strategy()) {
        let before = solve_allocation(cost, &classes).unwrap();
        let mut more = classes.clone();
        more.push(extra);
        let after = solve_allocation(cost, &more).unwrap();
        if before.feasible {
            prop_assert!(after.feasible);
            prop_assert!(after.t_min <= before.t_min + 1e-9 * before.t_min.max(1.0));
        }
    }

    #[test]
    fn apportionment_sums_and_stays_close(
        total in 0u64..100_000,
        weights in prop::collection::vec(0.0f64..100.0, 1..40),
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 0.0);
        let counts = largest_remainder(total, &weights).unwrap();
        prop_assert_eq!(counts.iter().sum::<u64>(), total);
        let wsum: f64 = weights.iter().sum();
        for (c, w) in counts.iter().zip(&weights) {
            let target = total as f64 * w / wsum;
            prop_assert!((*c as f64 - target).abs() < 1.0 + 1e-6);
        }
    }
}

fn dims_strategy() -> impl Strategy<Value = (u32, u32, u32)> {
    (1u32..6, 1u32..6, 1u32..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rcb_assigns_every_element_exactly_once(
        dims in dims_strategy(),
        split in prop::collection::vec(1.0f64..10.0, 1..6),
    ) {
        let mesh = build_box_mesh(dims.0, dims.1, dims.2).unwrap();
        let weights = RankWeights::new(split);
        let counts = largest_remainder(mesh.elements(), &weights.weights).unwrap();
        let partition = partition_rcb(&mesh, &counts).unwrap();
        prop_assert_eq!(partition.assignment.len() as u64, mesh.elements());
        let mut seen = vec![0u64; counts.len()];
        for &r in &partition.assignment {
            seen[r as usize] += 1;
        }
        prop_assert_eq!(&seen, &counts);
        let stats = partition_stats(&partition, &weights);
        prop_assert!(stats.imbalance >= 1.0 - 1e-9);
        // Largest-remainder targets keep every rank within one element.
        let wsum: f64 = weights.weights.iter().sum();
        for (r, &c) in counts.iter().enumerate() {
            let target = mesh.elements() as f64 * weights.weights[r] / wsum;
            prop_assert!((c as f64 - target).abs() < 1.0 + 1e-6);
        }
    }

    #[test]
    fn comm_plan_symmetric_and_unit_depth(
        dims in dims_strategy(),
        ranks in 1u32..5,
        seed in prop::collection::vec(0u32..5, 216),
        poly in 1u32..9,
    ) {
        let mesh = build_box_mesh(dims.0, dims.1, dims.2).unwrap();
        let n = mesh.elements() as usize;
        let assignment: Vec<u32> = seed.iter().take(n).map(|s| s % ranks).collect();
        let mut counts = vec![0u64; ranks as usize];
        for &r in &assignment {
            counts[r as usize] += 1;
        }
        let partition = Partition { assignment, counts: counts.clone() };
        let plan = comm_plan(&mesh, &partition, poly).unwrap();

        let ppf = ((poly as u64) + 1).pow(2);
        prop_assert_eq!(plan.points_per_face(), ppf);
        prop_assert_eq!(plan.total_exchanged_points(), 2 * plan.inter_rank_faces() * ppf);

        for r in 0..ranks as usize {
            // Symmetry.
            for &(nb, pts) in plan.messages(r).unwrap() {
                let back = plan
                    .messages(nb as usize)
                    .unwrap()
                    .iter()
                    .find(|(o, _)| *o == r as u32)
                    .map(|(_, p)| *p);
                prop_assert_eq!(back, Some(pts));
            }
            // Unit depth: no rank exchanges more than one face layer.
            let bound = 6 * ppf * counts[r];
            prop_assert!(plan.total_points(r).unwrap() <= bound);
        }
    }

    #[test]
    fn splitting_a_rank_never_reduces_cut(
        dims in dims_strategy(),
        ranks in 1u32..4,
        seed in prop::collection::vec(0u32..4, 216),
        flips in prop::collection::vec(any::<bool>(), 216),
    ) {
        let mesh = build_box_mesh(dims.0, dims.1, dims.2).unwrap();
        let n = mesh.elements() as usize;
        let assignment: Vec<u32> = seed.iter().take(n).map(|s| s % ranks).collect();
        let mut counts = vec![0u64; ranks as usize];
        for &r in &assignment {
            counts[r as usize] += 1;
        }
        let before = comm_plan(
            &mesh,
            &Partition { assignment: assignment.clone(), counts },
            7,
        )
        .unwrap();

        // Split rank 0 into rank 0 and a fresh rank.
        let refined: Vec<u32> = assignment
            .iter()
            .zip(&flips)
            .map(|(&r, &flip)| if r == 0 && flip { ranks } else { r })
            .collect();
        let mut counts = vec![0u64; ranks as usize + 1];
        for &r in &refined {
            counts[r as usize] += 1;
        }
        let after = comm_plan(&mesh, &Partition { assignment: refined, counts }, 7).unwrap();
        prop_assert!(after.inter_rank_faces() >= before.inter_rank_faces());
    }
}

fn machine_strategy() -> impl Strategy<Value = MachineModel> {
    prop::collection::vec(
        (
            1.0f64..1000.0,   // per-rank p_opt
            1u64..5,          // devices
            1u64..5,          // ranks per device
            0.0f64..100.0,    // eff_half_load
            prop_oneof![Just(None), (5_000.0f64..50_000.0).prop_map(Some)],
        ),
        1..=3,
    )
    .prop_map(|specs| MachineModel {
        classes: specs
            .into_iter()
            .enumerate()
            .map(|(i, (rank_p, devices, rpd, half, cap))| ClassModel {
                name: format!("c{i}"),
                kind: if i == 0 { DeviceKind::Gpu } else { DeviceKind::Cpu },
                devices,
                ranks_per_device: rpd,
                devices_per_node: 1,
                p_opt: rank_p * rpd as f64,
                eff_half_load: half,
                c_max: cap,
                usable_c_max: None,
                mem_per_device: None,
                node_io_bw: 2.0,
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulator_never_beats_additive_bound(
        machine in machine_strategy(),
        cost in 100.0f64..50_000.0,
        alpha in 0.0f64..1e-5,
        beta in 0.0f64..1e-8,
        rounds in 0u32..100,
    ) {
        let targets = machine.rank_targets_from_allocation(cost).unwrap();
        prop_assume!(targets.is_some());
        let targets = targets.unwrap();
        let workload = modplan::Workload::new(1, 7).unwrap();
        let mut env = machine
            .sim_env(&workload, NetworkParams { alpha, beta, gs_rounds_per_step: rounds }, IoParams::disabled(), 0.5)
            .unwrap();
        env.cap_total = f64::INFINITY;
        let est = estimate_timestep(&targets, None, &env).unwrap();
        let classes: Vec<DeviceClass> = machine
            .active_device_classes(true)
            .into_iter()
            .map(|(_, c)| c)
            .collect();
        let bound = tmin_unconstrained(cost, &classes).unwrap();
        prop_assert!(est.total >= bound - 1e-12);
    }
}
