mod common;

use common::*;
use fld_core::io::experiment_csv;
use fld_core::synth::{run_experiment, ExperimentKind, ExperimentParams};

#[test]
fn copy_injection_default_grid_has_five_rows() {
    let mut p = ExperimentParams::defaults(ExperimentKind::CopyInjection);
    p.baselines = false;
    let table = run_experiment(ExperimentKind::CopyInjection, &p).unwrap();
    assert_eq!(table.rows.len(), 5);
    let csv = String::from_utf8(experiment_csv(&table).unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(table.rows.iter().all(|r| r.fid_test.is_nan()));
}

#[test]
fn copy_fraction_drives_gaps_down() {
    for m in [1000usize, 200] {
        let mut p = ExperimentParams::defaults(ExperimentKind::CopyInjection);
        p.m = m;
        let table = run_experiment(ExperimentKind::CopyInjection, &p).unwrap();
        let gap = table.column(|r| r.gen_gap);
        assert!(inversions(&gap, false) <= 1, "m={m} gen_gap {gap:?}");
        assert!(gap[4] < 0.0);
        // FID's gap only trends the right way once the generated set is
        // large enough for its moments to feel the shared rows.
        if m >= 1000 {
            let fid_gap = table.column(|r| r.fid_gap);
            assert!(fid_gap[4] < fid_gap[0], "m={m} fid_gap {fid_gap:?}");
        }
    }
}
