mod common;

use common::{phase_domain_solve, random_phases, random_two_bus, rel_err, LINE};
use mgprot::fault::{fault_point_currents, phase_quantities, solve_internal_fault, FaultKind, FaultSpec};
use mgprot::network::reduce_to_thevenin;
use mgprot::phasor::{fortescue_compose, Sequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [FaultKind; 4] = [FaultKind::Lg, FaultKind::Ll, FaultKind::Llg, FaultKind::Lllg];

#[test]
fn sequence_solution_matches_phase_domain_nodal_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..60 {
        let net = random_two_bus(&mut rng);
        let fraction = rng.gen_range(0.05..0.95);
        for kind in KINDS {
            for rf in [0.0, 0.3, 2.0, 20.0] {
                let spec = FaultSpec::new(kind, LINE, fraction, rf).with_phases(random_phases(kind, &mut rng));
                let th = reduce_to_thevenin(&net, LINE, fraction).unwrap();
                let sol = solve_internal_fault(&th, &spec).unwrap();
                let oracle = phase_domain_solve(&net, &spec);
                for side in [1u8, 2] {
                    let (v, i) = phase_quantities(&sol, side);
                    let k = usize::from(side - 1);
                    worst = worst.max(rel_err(&v, &oracle.v_bus[k], 1e-9));
                    worst = worst.max(rel_err(&i, &oracle.i_line[k], 1e-9));
                }
                worst = worst.max(rel_err(&fault_point_currents(&sol), &oracle.i_fault, 1e-9));
            }
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn full_network_state_agrees_with_the_two_source_equivalent() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let net = random_two_bus(&mut rng);
        let kind = KINDS[rng.gen_range(0..4)];
        let spec = FaultSpec::new(kind, LINE, rng.gen_range(0.1..0.9), rng.gen_range(0.0..10.0));
        let state = net.solve_state(Some(&spec)).unwrap();
        let oracle = phase_domain_solve(&net, &spec);
        for k in 0..2 {
            let v = fortescue_compose(&state.bus_voltage[k]);
            assert!(rel_err(&v, &oracle.v_bus[k], 1e-9) < 1e-6);
            let i = fortescue_compose(&state.line_current[0][k]);
            assert!(rel_err(&i, &oracle.i_line[k], 1e-9) < 1e-6);
        }
    }
}

#[test]
fn thevenin_pair_reproduces_the_driving_point_impedance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let net = random_two_bus(&mut rng);
        let fraction = rng.gen_range(0.05..0.95);
        let th = reduce_to_thevenin(&net, LINE, fraction).unwrap();
        for seq in Sequence::ALL {
            let (k1, k2) = th.shares(seq);
            assert!((k1 + k2 - 1.0).norm() < 1e-12 || (k1.norm() == 0.0 && k2.norm() == 0.0));
            if let (Some(z1), Some(z2)) = (th.side1(seq), th.side2(seq)) {
                let par = th.parallel(seq).unwrap();
                assert!((par - z1 * z2 / (z1 + z2)).norm() < 1e-12 * par.norm());
                // each side impedance contains its own line segment
                let zs1 = th.source_behind(1, seq).unwrap();
                assert!((zs1 + th.zd1.get(seq) - z1).norm() < 1e-12 * z1.norm());
            }
        }
    }
}
