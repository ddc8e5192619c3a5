//! Matrix product states against full dense state vectors at small sizes.

mod common;

use common::{
    c64, chi2_counts, chi2_pvalue, dense_hamiltonian_product_space, embed_two_site,
    expectation, mps_to_dense, product_index, scrambled_state, vdot, C64,
};
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use metts::model::{hamiltonian_bonds, ModelSpec};
use metts::mps::{CpsConfig, MatrixProductState};
use metts::propagator::{apply_symmetric_unitary, UnitaryDirection};
use metts::sampler::hybrid_reset_and_build;
use metts::symtensor::TruncationSpec;

#[test]
fn inner_product_matches_dense_at_l5() {
    let (l, d) = (5, 3);
    let a = scrambled_state(l, d, &[1, 0, 2, 1, 0], 2, 31);
    let b = scrambled_state(l, d, &[0, 1, 1, 0, 2], 2, 32);
    let va = mps_to_dense(&a);
    let vb = mps_to_dense(&b);

    let blockwise = MatrixProductState::inner(&a, &b).unwrap();
    let dense = vdot(&va, &vb);
    assert!(
        (blockwise - dense).norm() < 1e-11,
        "inner: {blockwise} vs dense {dense}"
    );

    // norms also agree
    assert!((a.norm() - vdot(&va, &va).re.sqrt()).abs() < 1e-12);
}

#[test]
fn overlap_is_invariant_under_center_moves() {
    let (l, d) = (6, 2);
    let reference = scrambled_state(l, d, &[1, 0, 1, 1, 0, 0], 2, 41);
    let state = scrambled_state(l, d, &[0, 1, 1, 0, 1, 0], 2, 42);
    let base = MatrixProductState::inner(&reference, &state).unwrap();
    for target in 0..l {
        let mut moved = state.clone();
        moved.canonicalize(target).unwrap();
        let v = MatrixProductState::inner(&reference, &moved).unwrap();
        assert!(
            (v - base).norm() < 1e-10,
            "center {target}: overlap moved by {:e}",
            (v - base).norm()
        );
    }
}

#[test]
fn bond_expectations_match_dense_at_l4() {
    let spec = ModelSpec::new(4, 1.0, 1.0, 0.3, 3, false, 1.0).unwrap();
    let d = spec.local_dim();
    let mut psi = scrambled_state(4, d, &[2, 0, 1, 1], 2, 51);
    let v = mps_to_dense(&psi);

    for term in hamiltonian_bonds(&spec) {
        let blockwise = psi.expect_bond(&term.to_complex(), term.site).unwrap();
        let g = term.matrix.mapv(|x| c64(x, 0.0));
        let dense = expectation(&embed_two_site(&g, term.site, 4, d), &v);
        assert!(
            (blockwise - dense).abs() < 1e-10,
            "bond {}: {blockwise} vs dense {dense}",
            term.site
        );
    }
}

#[test]
fn correlation_matrix_matches_dense_at_l4() {
    let (l, d) = (4, 3);
    let mut psi = scrambled_state(l, d, &[1, 2, 0, 1], 2, 61);
    let v = mps_to_dense(&psi);

    let n_ops: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|n| n as f64).collect()).collect();
    let corr = psi.correlation_matrix(&n_ops).unwrap();

    let dim = v.len();
    for i in 0..l {
        for j in 0..l {
            let mut dense = 0.0;
            for idx in 0..dim {
                let mut rem = idx;
                let mut occ = vec![0usize; l];
                for m in (0..l).rev() {
                    occ[m] = rem % d;
                    rem /= d;
                }
                dense += (occ[i] * occ[j]) as f64 * v[idx].norm_sqr();
            }
            assert!(
                (corr[(i, j)] - dense).abs() < 1e-10,
                "corr[{i},{j}] = {} vs dense {dense}",
                corr[(i, j)]
            );
        }
    }
}

#[test]
fn site_expectations_match_dense_at_l4() {
    let (l, d) = (4, 3);
    let mut psi = scrambled_state(l, d, &[0, 2, 1, 0], 3, 71);
    let v = mps_to_dense(&psi);

    let n_ops: Vec<Vec<f64>> = (0..l).map(|_| (0..d).map(|n| n as f64).collect()).collect();
    let per_site = psi.site_expectations(&n_ops).unwrap();
    for (m, &val) in per_site.iter().enumerate() {
        let mut dense = 0.0;
        for (idx, z) in v.iter().enumerate() {
            let occ = (idx / d.pow((l - 1 - m) as u32)) % d;
            dense += occ as f64 * z.norm_sqr();
        }
        assert!((val - dense).abs() < 1e-10, "site {m}: {val} vs {dense}");
    }
}

#[test]
fn collapse_frequencies_match_dense_amplitudes() {
    // entangle the unit-filling CPS with the model's own real-time gates,
    // then check that sequential projective sampling reproduces |amplitude|^2
    let spec = ModelSpec::new(4, 1.0, 1.0, 0.0, 4, false, 1.0).unwrap();
    let d = spec.local_dim();
    let exact = TruncationSpec::new(1024, 0.0).unwrap();
    let mut psi = MatrixProductState::from_cps(&CpsConfig::uniform(4, 1), d).unwrap();
    apply_symmetric_unitary(&mut psi, &spec, 0.7, 2, &exact, UnitaryDirection::Forward).unwrap();
    psi.normalize().unwrap();

    let v = mps_to_dense(&psi);
    let basis = metts::edref::FockBasis::canonical(4, 4, 4).unwrap();
    let (amps, leak) = common::sector_amplitudes(&v, &basis, d);
    assert!(leak < 1e-20, "state left the fixed-N sector: {leak:e}");
    let probs: Vec<f64> = amps.iter().map(|z| z.norm_sqr()).collect();

    let draws = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut counts = vec![0u64; basis.len()];
    for _ in 0..draws {
        let mut copy = psi.clone();
        let (config, _logp) = copy.collapse_sites(&mut rng, 0..4).unwrap();
        let k = basis
            .position(&config.occupations)
            .expect("collapse landed outside the fixed-N basis");
        counts[k] += 1;
    }

    let (stat, dof) = chi2_counts(&counts, &probs, draws as u64);
    let p = chi2_pvalue(stat, dof);
    assert!(
        p > 0.01,
        "collapse distribution rejected: chi2 = {stat:.1} at {dof} dof, p = {p:.4}"
    );
}

#[test]
fn collapse_log_probability_matches_dense_amplitude() {
    let (l, d) = (4, 2);
    let psi = scrambled_state(l, d, &[1, 0, 1, 0], 2, 91);
    let v = mps_to_dense(&psi);
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    for _ in 0..20 {
        let mut copy = psi.clone();
        let (config, logp) = copy.collapse_sites(&mut rng, 0..l).unwrap();
        let amp = v[product_index(&config.occupations, d)];
        assert!(
            (logp - amp.norm_sqr().ln()).abs() < 1e-9,
            "log prob {logp} vs dense {}",
            amp.norm_sqr().ln()
        );
    }
}

#[test]
fn hybrid_state_observables_match_dense_oracle() {
    // hardcore chain of 4 physical sites plus one ancilla at each end
    let spec = ModelSpec::hardcore_grand(4, -0.5).unwrap();
    let d = spec.local_dim();
    let mut psi = hybrid_reset_and_build(&CpsConfig::new(vec![1, 0]), &spec).unwrap();
    let exact = TruncationSpec::new(1024, 0.0).unwrap();
    apply_symmetric_unitary(&mut psi, &spec, 0.9, 2, &exact, UnitaryDirection::Forward).unwrap();
    psi.normalize().unwrap();

    let (n_mean, n_sq) = metts::model::number_total(&mut psi, &spec).unwrap();

    // dense oracle over all 2^6 product states; physical sites are axes 1..=4.
    // an ancilla axis at sector position p holds occupation d-1-p, but the
    // ancilla occupations do not enter the physical particle number.
    let v: Array1<C64> = mps_to_dense(&psi);
    let chain = 6usize;
    let mut dense_n = 0.0;
    let mut dense_nsq = 0.0;
    for (idx, z) in v.iter().enumerate() {
        let w = z.norm_sqr();
        let mut total = 0usize;
        for axis in 1..=4 {
            total += (idx / d.pow((chain - 1 - axis) as u32)) % d;
        }
        dense_n += total as f64 * w;
        dense_nsq += (total * total) as f64 * w;
    }
    assert!((n_mean - dense_n).abs() < 1e-10, "{n_mean} vs {dense_n}");
    assert!((n_sq - dense_nsq).abs() < 1e-10, "{n_sq} vs {dense_nsq}");
}

#[test]
fn energy_measurement_matches_dense_oracle() {
    let spec = ModelSpec::new(4, 1.0, 1.5, 0.0, 2, false, 1.5).unwrap();
    let d = spec.local_dim();
    let mut psi = scrambled_state(4, d, &[1, 1, 0, 1], 2, 101);
    let v = mps_to_dense(&psi);
    let e = metts::model::energy(&mut psi, &spec).unwrap();
    let h = dense_hamiltonian_product_space(&spec);
    let dense = expectation(&h, &v);
    assert!((e - dense).abs() < 1e-10, "energy {e} vs dense {dense}");
}
