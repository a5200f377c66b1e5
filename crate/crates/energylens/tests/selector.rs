//! Integration tests for configuration selection: constrained enumeration,
//! energy ranking, and what-if sweeps.

use std::sync::Arc;

use energylens::benchmark::benchmark_truth;
use energylens::dataset::{ConfigPoint, ConfigSpace};
use energylens::model::{eval_energy, EnergyParams};
use energylens::selector::{
    enumerate, load_ranking, save_ranking, select, whatif, write_ranking_csv, Constraints,
    RankedConfigs, SelectionRequest, SweepAxis, Workload, RANKING_SCHEMA,
};
use energylens::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 3x3 parallelism grid with a single batch size and token budget.
fn small_space() -> ConfigSpace {
    ConfigSpace {
        tp_values: vec![1, 2, 4],
        pp_values: vec![1, 2, 4],
        batch_values: vec![8],
        max_token_values: vec![128],
    }
}

/// All-zero parameters (a valid corner of the box) to build variants from.
fn zero_params() -> EnergyParams {
    EnergyParams::from_array(&[0.0; 12])
}

fn request(params: EnergyParams, space: ConfigSpace) -> SelectionRequest {
    SelectionRequest {
        params,
        space,
        workload: Workload {
            total_input_tokens: 512,
            max_tokens: None,
        },
        constraints: Constraints::default(),
    }
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

#[test]
fn unconstrained_small_space_yields_nine_points_in_stable_order() {
    let points = enumerate(&small_space(), &Constraints::default()).unwrap();
    let layouts: Vec<(u32, u32)> = points.iter().map(|p| (p.tp, p.pp)).collect();
    assert_eq!(
        layouts,
        vec![
            (1, 1),
            (1, 2),
            (1, 4),
            (2, 1),
            (2, 2),
            (2, 4),
            (4, 1),
            (4, 2),
            (4, 4)
        ]
    );
    assert!(points.iter().all(|p| p.batch_size == 8 && p.max_tokens == 128));
}

#[test]
fn gpu_budget_of_four_admits_exactly_six_layouts() {
    let constraints = Constraints {
        max_gpus: Some(4),
        feasibility: None,
    };
    let points = enumerate(&small_space(), &constraints).unwrap();
    let layouts: Vec<(u32, u32)> = points.iter().map(|p| (p.tp, p.pp)).collect();
    assert_eq!(
        layouts,
        vec![(1, 1), (1, 2), (1, 4), (2, 1), (2, 2), (4, 1)]
    );
}

#[test]
fn feasibility_predicate_filters_points() {
    let constraints = Constraints {
        max_gpus: None,
        feasibility: Some(Arc::new(|p: &ConfigPoint| p.tp * p.pp != 16)),
    };
    let points = enumerate(&small_space(), &constraints).unwrap();
    assert_eq!(points.len(), 8);
    assert!(points.iter().all(|p| (p.tp, p.pp) != (4, 4)));
}

#[test]
fn enumeration_errors_when_every_point_is_filtered_out() {
    let constraints = Constraints {
        max_gpus: Some(0),
        feasibility: None,
    };
    let err = enumerate(&small_space(), &constraints).unwrap_err();
    assert!(matches!(err, Error::InvalidSpace(_)), "{err}");

    let constraints = Constraints {
        max_gpus: None,
        feasibility: Some(Arc::new(|_: &ConfigPoint| false)),
    };
    assert!(enumerate(&small_space(), &constraints).is_err());
}

#[test]
fn invalid_spaces_are_rejected_before_enumeration() {
    let mut space = small_space();
    space.tp_values.clear();
    assert!(matches!(
        enumerate(&space, &Constraints::default()),
        Err(Error::InvalidSpace(_))
    ));
}

#[test]
fn constraint_filtering_never_admits_a_violating_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pool = [1u32, 2, 3, 4, 6, 8];
    for _ in 0..50 {
        let pick = |rng: &mut ChaCha8Rng| {
            let n = rng.random_range(1..=3usize);
            let mut values: Vec<u32> = rand::seq::index::sample(rng, pool.len(), n)
                .iter()
                .map(|i| pool[i])
                .collect();
            values.sort_unstable();
            values
        };
        let space = ConfigSpace {
            tp_values: pick(&mut rng),
            pp_values: pick(&mut rng),
            batch_values: pick(&mut rng),
            max_token_values: pick(&mut rng),
        };
        let budget = rng.random_range(1..=16u32);
        let constraints = Constraints {
            max_gpus: Some(budget),
            feasibility: Some(Arc::new(move |p: &ConfigPoint| p.batch_size != 3)),
        };

        // Brute-force count over the raw Cartesian product.
        let mut expected = 0usize;
        for &tp in &space.tp_values {
            for &pp in &space.pp_values {
                for &b in &space.batch_values {
                    for _ in &space.max_token_values {
                        if tp * pp <= budget && b != 3 {
                            expected += 1;
                        }
                    }
                }
            }
        }

        match enumerate(&space, &constraints) {
            Ok(points) => {
                assert_eq!(points.len(), expected);
                assert!(points
                    .iter()
                    .all(|p| p.tp * p.pp <= budget && p.batch_size != 3));
            }
            Err(Error::InvalidSpace(_)) => assert_eq!(expected, 0),
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

#[test]
fn pure_overhead_parameters_select_the_smallest_machine() {
    // E = tp + pp: independent of batch and tokens, minimized at (1,1).
    let mut params = zero_params();
    params.delta1 = 1.0;
    params.delta2 = 1.0;
    let ranking = select(&request(params, ConfigSpace::default())).unwrap();

    let best = ranking.best();
    assert_eq!((best.point.tp, best.point.pp), (1, 1));
    assert_eq!(best.energy_j, 2.0);
    // Energy ignores batch/max_tokens, so the head is tied across those axes
    // and ordered by the lexicographic tie-break.
    assert!(best.tied);
    assert_eq!(best.point.batch_size, 1);
    assert_eq!(best.point.max_tokens, 64);
}

#[test]
fn decode_dominant_inverse_tp_scaling_selects_the_widest_tensor_layout() {
    // E = T_out / tp: more tensor parallelism is always better.
    let mut params = zero_params();
    params.alpha_d = 1.0;
    params.gamma1_d = -1.0;
    let ranking = select(&request(params, small_space())).unwrap();
    assert_eq!(ranking.best().point.tp, 4);
    // All pp values tie at fixed tp; the tie-break prefers pp = 1.
    assert_eq!(ranking.best().point.pp, 1);
}

#[test]
fn ranking_equals_brute_force_evaluation_then_sort() {
    let req = request(benchmark_truth(), ConfigSpace::default());
    let ranking = select(&req).unwrap();
    assert_eq!(ranking.entries.len(), 3 * 3 * 7 * 4);

    let mut brute: Vec<(f64, ConfigPoint)> = enumerate(&req.space, &req.constraints)
        .unwrap()
        .into_iter()
        .map(|p| {
            let e = eval_energy(
                &req.params,
                p.tp,
                p.pp,
                p.batch_size,
                p.max_tokens,
                req.workload.total_input_tokens,
            )
            .unwrap();
            (e, p)
        })
        .collect();
    brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    for (entry, (energy, point)) in ranking.entries.iter().zip(&brute) {
        assert_eq!(entry.point, *point);
        assert_eq!(entry.energy_j, *energy);
    }
    // Non-decreasing energies.
    assert!(ranking
        .entries
        .windows(2)
        .all(|w| w[0].energy_j <= w[1].energy_j));
}

#[test]
fn argmin_is_invariant_under_positive_scaling_of_scale_parameters() {
    let base = request(benchmark_truth(), ConfigSpace::default());
    let reference = select(&base).unwrap();
    for factor in [0.03125, 0.5, 3.7, 256.0] {
        let mut params = benchmark_truth();
        params.alpha_p *= factor;
        params.alpha_d *= factor;
        params.delta1 *= factor;
        params.delta2 *= factor;
        let scaled = select(&request(params, ConfigSpace::default())).unwrap();
        assert_eq!(scaled.best().point, reference.best().point, "factor {factor}");
        // The whole ranking order is preserved, not just the head.
        let order: Vec<ConfigPoint> = scaled.entries.iter().map(|e| e.point).collect();
        let want: Vec<ConfigPoint> = reference.entries.iter().map(|e| e.point).collect();
        assert_eq!(order, want, "factor {factor}");
    }
}

#[test]
fn fixed_max_tokens_workload_pins_that_axis_even_off_grid() {
    let mut req = request(benchmark_truth(), ConfigSpace::default());
    req.workload.max_tokens = Some(96); // not a fitted grid value
    let ranking = select(&req).unwrap();
    assert_eq!(ranking.entries.len(), 3 * 3 * 7);
    assert!(ranking.entries.iter().all(|e| e.point.max_tokens == 96));
    assert_eq!(ranking.workload.max_tokens, Some(96));
}

#[test]
fn selection_respects_constraints_and_reports_nonfinite_predictions() {
    let mut req = request(benchmark_truth(), small_space());
    req.constraints.max_gpus = Some(4);
    let ranking = select(&req).unwrap();
    assert_eq!(ranking.entries.len(), 6);
    assert!(ranking.entries.iter().all(|e| e.point.tp * e.point.pp <= 4));

    // A near-overflow prefill scale with a cubic tp exponent stays finite
    // through tp=2 (factor 8) but overflows at tp=4 (factor 64), so the
    // error must name that point.
    let mut params = zero_params();
    params.alpha_p = 1e304;
    params.gamma1_p = 3.0;
    let err = select(&request(params, small_space())).unwrap_err();
    assert!(matches!(err, Error::NonFinitePrediction(_)), "{err}");
    assert!(err.to_string().contains("tp=4"), "{err}");
}

#[test]
fn distinct_energies_are_not_flagged_as_ties() {
    let ranking = select(&request(benchmark_truth(), small_space())).unwrap();
    // The benchmark surface has no exact collisions on this grid.
    assert!(ranking.entries.iter().all(|e| !e.tied));

    // A deliberately collision-heavy surface flags every tied entry.
    let mut params = zero_params();
    params.delta1 = 1.0;
    let ranking = select(&request(params, small_space())).unwrap();
    // E = tp: three pp values tie at each tp.
    assert!(ranking.entries.iter().all(|e| e.tied));
    let heads: Vec<u32> = ranking.entries.iter().map(|e| e.point.tp).collect();
    assert_eq!(heads, vec![1, 1, 1, 2, 2, 2, 4, 4, 4]);
}

// ---------------------------------------------------------------------------
// What-if sweeps
// ---------------------------------------------------------------------------

#[test]
fn batch_sweep_with_positive_amortization_exponents_is_strictly_decreasing() {
    let params = benchmark_truth(); // beta_p, beta_d > 0
    let base = ConfigPoint {
        tp: 2,
        pp: 1,
        batch_size: 1,
        max_tokens: 128,
    };
    let values = [1u32, 2, 4, 8, 16, 32, 64, 640];
    let rows = whatif(
        &params,
        &base,
        512,
        SweepAxis::BatchSize,
        &values,
        &ConfigSpace::default(),
    )
    .unwrap();
    assert_eq!(rows.len(), values.len());
    assert!(rows.windows(2).all(|w| w[1].energy_j < w[0].energy_j));
    // 640 is 10x the largest fitted batch: extrapolated; the rest are not.
    let flags: Vec<bool> = rows.iter().map(|r| r.extrapolated).collect();
    assert_eq!(flags, vec![false, false, false, false, false, false, false, true]);
    // The swept axis lands in the reported point; other axes stay fixed.
    assert!(rows
        .iter()
        .zip(&values)
        .all(|(r, &v)| r.point.batch_size == v && r.value == v));
    assert!(rows.iter().all(|r| r.point.tp == 2
        && r.point.pp == 1
        && r.point.max_tokens == 128));
}

#[test]
fn single_value_sweep_equals_direct_model_evaluation() {
    let params = benchmark_truth();
    let base = ConfigPoint {
        tp: 1,
        pp: 2,
        batch_size: 4,
        max_tokens: 256,
    };
    let rows = whatif(
        &params,
        &base,
        2048,
        SweepAxis::MaxTokens,
        &[256],
        &ConfigSpace::default(),
    )
    .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(
        rows[0].energy_j,
        eval_energy(&params, 1, 2, 4, 256, 2048).unwrap()
    );
    assert!(!rows[0].extrapolated);
}

#[test]
fn off_grid_sweep_values_are_flagged_extrapolated() {
    // Value 3 is between fitted tensor degrees 2 and 4: still beyond the
    // fitted support, so it is flagged.
    let rows = whatif(
        &benchmark_truth(),
        &ConfigPoint {
            tp: 1,
            pp: 1,
            batch_size: 8,
            max_tokens: 128,
        },
        512,
        SweepAxis::Tp,
        &[2, 3],
        &ConfigSpace::default(),
    )
    .unwrap();
    assert!(!rows[0].extrapolated);
    assert!(rows[1].extrapolated);
}

#[test]
fn whatif_rejects_empty_or_nonpositive_sweeps() {
    let params = benchmark_truth();
    let base = ConfigPoint {
        tp: 1,
        pp: 1,
        batch_size: 1,
        max_tokens: 64,
    };
    assert!(matches!(
        whatif(&params, &base, 512, SweepAxis::Pp, &[], &ConfigSpace::default()),
        Err(Error::InsufficientData { needed: 1, got: 0 })
    ));
    let err = whatif(
        &params,
        &base,
        512,
        SweepAxis::Pp,
        &[2, 0],
        &ConfigSpace::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidSpace(_)), "{err}");
    assert!(err.to_string().contains("pp"), "{err}");
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

#[test]
fn ranking_artifacts_round_trip_and_csv_rows_are_rank_labeled() {
    let ranking = select(&request(benchmark_truth(), small_space())).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let json_path = dir.path().join("ranking.json");
    save_ranking(&ranking, &json_path).unwrap();
    let body = std::fs::read_to_string(&json_path).unwrap();
    assert!(body.contains(RANKING_SCHEMA));
    let loaded: RankedConfigs = load_ranking(&json_path).unwrap();
    assert_eq!(loaded, ranking);

    let csv_path = dir.path().join("ranking.csv");
    write_ranking_csv(&ranking, &csv_path).unwrap();
    let body = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(
        lines[0],
        "rank,tp,pp,batch_size,max_tokens,total_input_tokens,predicted_energy_j,tied"
    );
    assert_eq!(lines.len(), 1 + ranking.entries.len());
    for (i, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("rank_{},", i + 1)), "{line}");
    }
    // The first data row is the argmin with full float precision.
    let head_fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(
        head_fields[6].parse::<f64>().unwrap(),
        ranking.best().energy_j
    );

    // Rewriting produces identical bytes.
    let csv_path2 = dir.path().join("ranking2.csv");
    write_ranking_csv(&ranking, &csv_path2).unwrap();
    assert_eq!(
        std::fs::read(&csv_path).unwrap(),
        std::fs::read(&csv_path2).unwrap()
    );
}

#[test]
fn ranking_loader_rejects_unknown_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"schema":"energylens-ranking-v9","workload":{"total_input_tokens":1,"max_tokens":null},"entries":[]}"#,
    )
    .unwrap();
    let err = load_ranking(&path).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch(_)), "{err}");
    assert!(err.to_string().contains("energylens-ranking-v9"));
}
