//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its runtime (visible under `--nocapture`). Tolerances are pinned in the
//! assertions; fixture-dependent thresholds were frozen after pilot runs
//! across multiple noise seeds.
//!
//! Run with:
//!   cargo test -p flexkrylov-cli --test acceptance -- --nocapture

use std::sync::Arc;
use std::time::Instant;

use flexkrylov::baselines::{run_fista, run_irn, run_pirn, FistaConfig, IrnConfig};
use flexkrylov::decomp::fgk_init;
use flexkrylov::linop::{
    conjugate_by_transform, estimate_spectral_norm, DenseOperator, DiagonalOperator, OpRef,
    OrthonormalTransform,
};
use flexkrylov::problems::{add_noise, angle_range, gen_blur1d, gen_heat, gen_tomo};
use flexkrylov::projsolve::{
    approx_singular_values, tikhonov_projected, IncrementalQr, ProjectedProblem, Regularizer,
};
use flexkrylov::regparam::{select_dp_exact, select_dp_secant, LambdaGrid, ParamPolicy, DP_RTOL};
use flexkrylov::solvers::{
    run_flexible, run_gat, verify_flsmr_fgmres_equivalence, Method, SolverConfig, SolverRun,
    WeightSource,
};
use flexkrylov::transforms::{count_sparsity, HaarTransform};
use flexkrylov::weights::{Tau2, Threshold, WeightPolicy};
use flexkrylov_testkit as tk;
use nalgebra::{DMatrix, DVector};

fn finish(criterion: &str, budget_s: f64, started: Instant, details: &str) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("ACCEPTANCE {criterion}: PASS — {details} ({elapsed:.2}s < {budget_s}s)");
    assert!(
        elapsed < budget_s,
        "{criterion} exceeded its runtime budget: {elapsed:.2}s >= {budget_s}s"
    );
}

fn dense_op(a: &DMatrix<f64>) -> OpRef {
    Arc::new(DenseOperator::new(a.clone()))
}

fn heat_weights() -> WeightPolicy {
    WeightPolicy {
        p: 1.0,
        tau1: Threshold::RelativeToMax {
            factor: 1e-2,
            floor: 1e-10,
        },
        tau2: Tau2::RelativeToTau1(1.0),
    }
}

/// Criterion 1: both factorization identities and both orthonormality
/// defects stay below 1e-10 after 15 expansions, on 10 random instances with
/// random positive diagonal preconditioner sequences.
#[test]
fn criterion_01_decomposition_identities() {
    let started = Instant::now();
    let mut rng = tk::seeded(1001);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let (m, n) = if trial % 2 == 0 { (40, 25) } else { (60, 40) };
        let a_mat = tk::randn_matrix(&mut rng, m, n);
        let b = tk::randn(&mut rng, m);
        let op = dense_op(&a_mat);
        let mut st = fgk_init(op.as_ref(), &b).unwrap();
        for _ in 0..15 {
            let l =
                DiagonalOperator::new(tk::random_positive_diag(&mut rng, n, 0.5, 2.0)).unwrap();
            st.expand(op.as_ref(), &l.inverse()).unwrap();
        }
        st.peek_t_column(op.as_ref());
        let (u, v, z) = (st.u_matrix(), st.v_matrix(), st.z_matrix());
        let (mm, tt) = (st.m_matrix(), st.t_matrix());
        let a_norm = a_mat.clone().svd(false, false).singular_values[0];
        let r_left = (&a_mat * &z - &u * &mm).norm() / (a_norm * z.norm());
        let r_right = (a_mat.transpose() * &u - &v * &tt).norm() / a_norm;
        let eye = DMatrix::identity(16, 16);
        let d_u = (u.transpose() * &u - &eye).norm();
        let d_v = (v.transpose() * &v - &eye).norm();
        for r in [r_left, r_right, d_u, d_v] {
            assert!(r <= 1e-10, "trial {trial}: defect {r:.3e}");
            worst = worst.max(r);
        }
    }
    finish("1 (decomposition identities)", 1.0, started, &format!("worst defect {worst:.2e}"));
}

/// Criterion 2: with identity preconditioners the process degenerates to the
/// classical methods: bidiagonal structure, LSQR iterates, GMRES iterates.
#[test]
fn criterion_02_degeneration_to_classical_methods() {
    let started = Instant::now();
    let mut rng = tk::seeded(1002);

    // (a) structure
    let a_mat = tk::randn_matrix(&mut rng, 40, 25);
    let b = tk::randn(&mut rng, 40);
    let op = dense_op(&a_mat);
    let mut st = fgk_init(op.as_ref(), &b).unwrap();
    let li = DiagonalOperator::identity(25);
    for _ in 0..15 {
        st.expand(op.as_ref(), &li).unwrap();
    }
    st.peek_t_column(op.as_ref());
    let (mm, tt) = (st.m_matrix(), st.t_matrix());
    let mut off_m: f64 = 0.0;
    for i in 0..mm.nrows() {
        for j in 0..mm.ncols() {
            if i != j && i != j + 1 {
                off_m = off_m.max(mm[(i, j)].abs());
            }
        }
    }
    let mut off_t: f64 = 0.0;
    for i in 0..tt.nrows() {
        for j in 0..tt.ncols() {
            if i != j && i + 1 != j {
                off_t = off_t.max(tt[(i, j)].abs());
            }
        }
    }
    assert!(off_m <= 1e-10 && off_t <= 1e-10, "structure defects {off_m:.2e} {off_t:.2e}");

    // (b) FLSQR with identity weights vs the LSQR definition oracle
    let mut cfg = SolverConfig::new(Method::Lsqr, 10);
    cfg.keep_iterates = true;
    cfg.stop.stagnation_tol = 0.0;
    let run = run_flexible(dense_op(&a_mat), &b, &cfg).unwrap();
    let oracle = tk::lsqr_iterates(&a_mat, &b, 10);
    let mut worst_b: f64 = 0.0;
    for (x, xo) in run.iterates.as_ref().unwrap().iter().zip(&oracle) {
        worst_b = worst_b.max((x - xo).norm() / xo.norm());
    }
    assert!(worst_b <= 1e-8, "LSQR oracle mismatch {worst_b:.2e}");

    // (c) FGMRES path with identity weights vs the GMRES definition oracle
    let sq = tk::randn_matrix(&mut rng, 20, 20);
    let bsq = tk::randn(&mut rng, 20);
    let mut cfg = SolverConfig::new(Method::Gmres, 10);
    cfg.keep_iterates = true;
    cfg.stop.stagnation_tol = 0.0;
    let run = run_gat(dense_op(&sq), &bsq, &cfg).unwrap();
    let oracle = tk::gmres_iterates(&sq, &bsq, 10);
    let mut worst_c: f64 = 0.0;
    for (x, xo) in run.iterates.as_ref().unwrap().iter().zip(&oracle) {
        worst_c = worst_c.max((x - xo).norm() / xo.norm());
    }
    assert!(worst_c <= 1e-8, "GMRES oracle mismatch {worst_c:.2e}");

    finish(
        "2 (degeneration to classical methods)",
        1.0,
        started,
        &format!("structure {off_m:.1e}/{off_t:.1e}, LSQR {worst_b:.1e}, GMRES {worst_c:.1e}"),
    );
}

/// Criterion 3: FLSMR vs FGMRES on the normal equations with a shared fixed
/// preconditioner sequence.
#[test]
fn criterion_03_flsmr_fgmres_equivalence() {
    let started = Instant::now();
    let mut rng = tk::seeded(1003);
    let a = tk::randn_matrix(&mut rng, 60, 40);
    let b = tk::randn(&mut rng, 60);
    let seq: Vec<DiagonalOperator> = (0..10)
        .map(|_| DiagonalOperator::new(tk::random_positive_diag(&mut rng, 40, 0.5, 2.0)).unwrap())
        .collect();
    let d = verify_flsmr_fgmres_equivalence(dense_op(&a), &b, &seq, 10).unwrap();
    assert!(d <= 1e-6, "max iterate discrepancy {d:.3e}");
    finish("3 (FLSMR/FGMRES equivalence)", 1.0, started, &format!("max discrepancy {d:.2e}"));
}

/// Criterion 4: the R-weighted hybrid solves the range-restricted Tikhonov
/// problem, and the singular values of `M R^{-1}` match those of `A Q`.
#[test]
fn criterion_04_range_restricted_equivalence_and_singular_values() {
    let started = Instant::now();
    let mut rng = tk::seeded(1004);
    let a = tk::randn_matrix(&mut rng, 15, 10);
    let b = tk::randn(&mut rng, 15);
    let lambda = 0.3;
    let op = dense_op(&a);
    let mut st = fgk_init(op.as_ref(), &b).unwrap();
    let mut qr = IncrementalQr::new();
    let mut worst_x: f64 = 0.0;
    let mut worst_sv: f64 = 0.0;
    for k in 1..=8usize {
        let l = DiagonalOperator::new(tk::random_positive_diag(&mut rng, 10, 0.5, 2.0)).unwrap();
        st.expand(op.as_ref(), &l.inverse()).unwrap();
        qr.append(&st.z_columns()[k - 1]);
        let problem = ProjectedProblem::new(
            st.m_matrix(),
            st.beta1(),
            Regularizer::Triangular(qr.r_matrix()),
        );
        let x = st.solution(&tikhonov_projected(&problem, lambda).y);

        let q = st.z_matrix().qr().q();
        let aq = &a * &q;
        let mut g = DMatrix::zeros(15 + k, k);
        g.view_mut((0, 0), (15, k)).copy_from(&aq);
        for i in 0..k {
            g[(15 + i, i)] = lambda.sqrt();
        }
        let mut rhs = DVector::zeros(15 + k);
        rhs.rows_mut(0, 15).copy_from(&b);
        let x_dense = &q * tk::lstsq(&g, &rhs);
        worst_x = worst_x.max((&x - &x_dense).norm() / x_dense.norm().max(1.0));

        let approx = approx_singular_values(&st.m_matrix(), &qr.r_matrix());
        let mut oracle: Vec<f64> = aq.clone().svd(false, false).singular_values.iter().copied().collect();
        oracle.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (got, want) in approx.values.iter().zip(&oracle) {
            worst_sv = worst_sv.max((got - want).abs() / want.max(1.0));
        }
    }
    assert!(worst_x <= 1e-9, "iterate mismatch {worst_x:.3e}");
    assert!(worst_sv <= 1e-8, "singular value mismatch {worst_sv:.3e}");
    finish(
        "4 (range-restricted Tikhonov + singular values)",
        1.0,
        started,
        &format!("iterates {worst_x:.2e}, singular values {worst_sv:.2e}"),
    );
}

struct Curve {
    errs: Vec<f64>,
    k_min: usize,
    e_min: f64,
}

impl Curve {
    fn from_run(run: &SolverRun) -> Self {
        let errs = run.rel_errs();
        let (k_min, e_min) = errs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, e)| (i + 1, *e))
            .unwrap();
        Curve { errs, k_min, e_min }
    }

    /// Max relative rise above the minimum over iterations (k_min, 2 k_min].
    fn rise_through_double(&self) -> f64 {
        let hi = (2 * self.k_min).min(self.errs.len());
        self.errs[self.k_min..hi]
            .iter()
            .fold(0.0f64, |m, e| m.max(e / self.e_min - 1.0))
    }
}

/// Criterion 5: heat reproduction at full paper scale (n = 512, noise 1e-4).
/// (a) flexible minima below the standard ones; (b) both flexible lambda = 0
/// curves rise at least 25% within twice the minimizing iteration; (c) the
/// hybrids with per-iteration error-optimal lambda stay near their minima
/// through the same horizon (FLSQR-I within 10%; FLSQR-R within 50% -- it
/// converges to the full-space Tikhonov solution, which sits 10-20% above
/// its own sweet spot -- and both an order of magnitude flatter than plain
/// FLSQR). Thresholds frozen after pilot runs over multiple seeds.
#[test]
fn criterion_05_heat_reproduction() {
    let started = Instant::now();
    let p = add_noise(gen_heat(512), 1e-4, 7);
    let max_iters = 120;

    let mut runs: Vec<SolverRun> = Vec::new();
    for method in [Method::Lsqr, Method::Lsmr, Method::Flsqr, Method::Flsmr] {
        let mut cfg = SolverConfig::new(method, max_iters);
        cfg.weights = WeightSource::Policy(heat_weights());
        cfg.x_true = Some(p.x_true.clone());
        cfg.stop.stagnation_tol = 0.0;
        runs.push(run_flexible(p.a.clone(), &p.b, &cfg).unwrap());
    }
    let [lsqr, lsmr, flsqr, flsmr] = [
        Curve::from_run(&runs[0]),
        Curve::from_run(&runs[1]),
        Curve::from_run(&runs[2]),
        Curve::from_run(&runs[3]),
    ];

    // (a)
    assert!(
        flsqr.e_min < lsqr.e_min,
        "FLSQR min {:.4} not below LSQR min {:.4}",
        flsqr.e_min,
        lsqr.e_min
    );
    assert!(
        flsmr.e_min < lsmr.e_min,
        "FLSMR min {:.4} not below LSMR min {:.4}",
        flsmr.e_min,
        lsmr.e_min
    );

    // (b)
    for (name, c) in [("FLSQR", &flsqr), ("FLSMR", &flsmr)] {
        assert!(
            2 * c.k_min <= max_iters,
            "{name} window truncated: k_min = {}",
            c.k_min
        );
        let rise = c.rise_through_double();
        assert!(
            rise >= 0.25,
            "{name} semiconvergence rise {rise:.3} below 25%"
        );
    }

    // (c) hybrids with per-iteration optimal lambda
    let grid = LambdaGrid {
        min: 1e-12,
        max: 10.0,
        points: 120,
    };
    let mut hybrid = |method: Method| -> Curve {
        let mut cfg = SolverConfig::new(method, max_iters);
        cfg.weights = WeightSource::Policy(heat_weights());
        cfg.params = ParamPolicy::Optimal { grid };
        cfg.x_true = Some(p.x_true.clone());
        cfg.stop.stagnation_tol = 0.0;
        Curve::from_run(&run_flexible(p.a.clone(), &p.b, &cfg).unwrap())
    };
    let hybrid_i = hybrid(Method::FlsqrI);
    let hybrid_r = hybrid(Method::FlsqrR);
    let plain_rise = flsqr.rise_through_double();
    for (name, c, cap) in [("FLSQR-I", &hybrid_i, 0.10), ("FLSQR-R", &hybrid_r, 0.50)] {
        assert!(2 * c.k_min <= max_iters, "{name} window truncated: k_min = {}", c.k_min);
        let rise = c.rise_through_double();
        assert!(
            rise <= cap,
            "{name} rise {rise:.3} exceeds frozen threshold {cap}"
        );
        assert!(
            rise < plain_rise / 4.0,
            "{name} rise {rise:.3} not well below plain FLSQR's {plain_rise:.3}"
        );
    }

    finish(
        "5 (heat reproduction)",
        60.0,
        started,
        &format!(
            "minima LSQR {:.4} FLSQR {:.4} LSMR {:.4} FLSMR {:.4}; rises flex {:.0}%/{:.0}%, hybrids {:.1}%/{:.1}%",
            lsqr.e_min,
            flsqr.e_min,
            lsmr.e_min,
            flsmr.e_min,
            100.0 * flsqr.rise_through_double(),
            100.0 * flsmr.rise_through_double(),
            100.0 * hybrid_i.rise_through_double(),
            100.0 * hybrid_r.rise_through_double()
        ),
    );
}

/// Criterion 6: the 64-point signal illustration with exact paper
/// parameters; flexible preconditioning beats plain GMRES in error and in
/// wavelet-domain sparsity.
#[test]
fn criterion_06_signal_illustration() {
    let started = Instant::now();
    let p = add_noise(gen_blur1d(64, 2.25, 5).unwrap(), 1e-2, 3);
    let psi = Arc::new(HaarTransform::new_1d(64, 1).unwrap());

    let weights = WeightPolicy {
        p: 1.0,
        tau1: Threshold::Absolute(0.2),
        tau2: Tau2::Absolute(1e-10),
    };
    let run_method = |method: Method, w: Option<WeightPolicy>| -> SolverRun {
        let mut cfg = SolverConfig::new(method, 50);
        if let Some(w) = w {
            cfg.weights = WeightSource::Policy(w);
        }
        cfg.x_true = Some(p.x_true.clone());
        cfg.transform = Some(psi.clone());
        cfg.keep_iterates = true;
        cfg.stop.stagnation_tol = 0.0;
        run_gat(p.a.clone(), &p.b, &cfg).unwrap()
    };
    let fgmres = run_method(Method::Fgmres, Some(weights));
    let gmres = run_method(Method::Gmres, None);

    let best = |r: &SolverRun| {
        let errs = r.rel_errs();
        let (i, e) = errs
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        (i, *e)
    };
    let (ki, ef) = best(&fgmres);
    let (kg, eg) = best(&gmres);
    assert!(ef < eg, "FGMRES best {ef:.4} not below GMRES best {eg:.4}");

    let nnz = |r: &SolverRun, k: usize| {
        let x = &r.iterates.as_ref().unwrap()[k];
        count_sparsity(&psi.forward(x), 1e-2)
    };
    let (nf, ng) = (nnz(&fgmres, ki), nnz(&gmres, kg));
    assert!(
        nf < ng,
        "flexible solution not sparser: {nf} vs {ng} coefficients above 1e-2"
    );
    finish(
        "6 (signal illustration)",
        5.0,
        started,
        &format!("best err {ef:.4} (nnz {nf}) vs GMRES {eg:.4} (nnz {ng})"),
    );
}

/// Criterion 7: paper-scale operator dimensions, and matvec fidelity against
/// an independently assembled dense matrix at a small grid.
#[test]
fn criterion_07_tomography_operator_fidelity() {
    let started = Instant::now();
    // paper-scale dimensions
    let n = 256usize;
    let rays = ((2.0f64).sqrt() * n as f64).round() as usize;
    assert_eq!(rays, 362);
    let angles = angle_range(0.0, 2.0, 179.0);
    let width = (2.0f64).sqrt() * n as f64;
    let p = gen_tomo(n, &angles, rays, width);
    assert_eq!(
        (p.a.nrows(), p.a.ncols()),
        (32580, 65536),
        "operator dimensions"
    );

    // small-grid fidelity against a per-pixel clipping oracle
    let n = 32usize;
    let rays = ((2.0f64).sqrt() * n as f64).round() as usize;
    let width = (2.0f64).sqrt() * n as f64;
    let p = gen_tomo(n, &angles, rays, width);
    let offsets: Vec<f64> = (0..rays)
        .map(|j| -width / 2.0 + width * j as f64 / (rays - 1) as f64)
        .collect();
    let half = n as f64 / 2.0;
    let mut dense = DMatrix::zeros(angles.len() * rays, n * n);
    for (ai, &deg) in angles.iter().enumerate() {
        let th = deg.to_radians();
        let (st, ct) = th.sin_cos();
        for (ri, &t) in offsets.iter().enumerate() {
            let p0 = (t * ct, t * st);
            let dir = (-st, ct);
            let row = ai * rays + ri;
            for pr in 0..n {
                for pc in 0..n {
                    let x0 = pc as f64 - half;
                    let y0 = half - pr as f64 - 1.0;
                    let mut smin = f64::NEG_INFINITY;
                    let mut smax = f64::INFINITY;
                    let mut miss = false;
                    for (orig, d, lo, hi) in
                        [(p0.0, dir.0, x0, x0 + 1.0), (p0.1, dir.1, y0, y0 + 1.0)]
                    {
                        if d.abs() < 1e-14 {
                            if orig < lo || orig >= hi {
                                miss = true;
                                break;
                            }
                        } else {
                            let s1 = (lo - orig) / d;
                            let s2 = (hi - orig) / d;
                            smin = smin.max(s1.min(s2));
                            smax = smax.min(s1.max(s2));
                        }
                    }
                    if !miss && smax > smin {
                        dense[(row, pr * n + pc)] = smax - smin;
                    }
                }
            }
        }
    }
    let x = tk::randn(&mut tk::seeded(1007), n * n);
    let got = p.a.apply(&x);
    let want = &dense * &x;
    let defect = (got - &want).norm() / want.norm().max(1.0);
    assert!(defect <= 1e-12, "matvec defect {defect:.3e}");
    finish(
        "7 (tomography operator fidelity)",
        30.0,
        started,
        &format!("32580x65536 confirmed; 32-grid matvec defect {defect:.2e}"),
    );
}

/// Criterion 8: desk-scale tomography analogue. FLSQR-I with per-iteration
/// discrepancy principle beats plain LSQR, and beats FISTA at equal matvec
/// budget when FISTA uses the lambda the hybrid selected.
#[test]
fn criterion_08_tomography_analogue() {
    let started = Instant::now();
    let n = 64usize;
    let rays = ((2.0f64).sqrt() * n as f64).round() as usize;
    let angles = angle_range(0.0, 2.0, 179.0);
    let p = add_noise(
        gen_tomo(n, &angles, rays, (2.0f64).sqrt() * n as f64),
        1e-2,
        11,
    );
    let psi = Arc::new(HaarTransform::new_2d(n, 4).unwrap());
    let eps = p.e.norm();
    let max_iters = 100;

    let weights = WeightPolicy {
        p: 1.0,
        tau1: Threshold::RelativeToMax {
            factor: 1e-3,
            floor: 1e-10,
        },
        tau2: Tau2::RelativeToTau1(0.01),
    };
    let mut cfg = SolverConfig::new(Method::FlsqrI, max_iters);
    cfg.weights = WeightSource::Policy(weights);
    cfg.params = ParamPolicy::DpExact { eps, eta: 1.01 };
    cfg.x_true = Some(p.x_true.clone());
    cfg.transform = Some(psi.clone());
    cfg.stop.stagnation_tol = 0.0;
    let flexi = run_flexible(p.a.clone(), &p.b, &cfg).unwrap();
    let flexi_curve = Curve::from_run(&flexi);
    let budget = flexi.records.last().unwrap().matvecs;

    let mut cfg = SolverConfig::new(Method::Lsqr, max_iters);
    cfg.x_true = Some(p.x_true.clone());
    cfg.stop.stagnation_tol = 0.0;
    let lsqr = Curve::from_run(&run_flexible(p.a.clone(), &p.b, &cfg).unwrap());

    assert!(
        flexi_curve.e_min < lsqr.e_min,
        "FLSQR-I dp best {:.4} not below LSQR best {:.4}",
        flexi_curve.e_min,
        lsqr.e_min
    );

    // FISTA on the transformed problem with the hybrid's final lambda
    let lambda = flexi.final_lambda;
    assert!(lambda > 0.0, "discrepancy principle never engaged");
    let h: OpRef = Arc::new(
        conjugate_by_transform(
            p.a.clone(),
            psi.clone() as Arc<dyn OrthonormalTransform>,
            None,
        )
        .unwrap(),
    );
    let sigma = estimate_spectral_norm(h.as_ref(), 30, 42);
    let mut fista_cfg = FistaConfig::new(lambda, max_iters);
    fista_cfg.step = Some(1.0 / (sigma * sigma));
    fista_cfg.x_true = Some(psi.forward(&p.x_true));
    let fista = run_fista(h, &p.b, &fista_cfg).unwrap();
    let at_budget = fista
        .records
        .iter()
        .filter(|r| r.matvecs <= budget)
        .next_back()
        .expect("budget shorter than one FISTA iteration");
    let fista_err = at_budget.rel_err.unwrap();
    assert!(
        flexi_curve.e_min < fista_err,
        "FLSQR-I dp best {:.4} not below FISTA {:.4} at {} matvecs (lambda {lambda:.3e})",
        flexi_curve.e_min,
        fista_err,
        at_budget.matvecs
    );

    finish(
        "8 (tomography analogue)",
        120.0,
        started,
        &format!(
            "FLSQR-I dp {:.4} < LSQR {:.4}, FISTA {:.4} at budget {} (lambda {:.2e})",
            flexi_curve.e_min, lsqr.e_min, fista_err, budget, lambda
        ),
    );
}

/// Criterion 9: discrepancy-principle selection accuracy and the secant
/// fixed-point property.
#[test]
fn criterion_09_parameter_selection() {
    let started = Instant::now();
    let mut rng = tk::seeded(1009);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let k = 3 + (trial % 8);
        let mut m = DMatrix::zeros(k + 1, k);
        for j in 0..k {
            for i in 0..=j + 1 {
                m[(i, j)] = tk::randn(&mut rng, 1)[0];
            }
            m[(j + 1, j)] = m[(j + 1, j)].abs() + 0.1;
        }
        let beta = 0.5 + tk::randn(&mut rng, 1)[0].abs();
        let p = ProjectedProblem::new(m, beta, Regularizer::Identity);
        let r0 = tikhonov_projected(&p, 0.0).residual_norm;
        let frac = 0.1 + 0.8 * (trial as f64 / 50.0);
        let target = r0 + frac * (beta - r0);
        if !(target > r0 && target < beta) {
            continue;
        }
        let lambda = select_dp_exact(&p, target, 1.0);
        let res = tikhonov_projected(&p, lambda).residual_norm;
        let gap = (res - target).abs() / target;
        assert!(gap <= DP_RTOL, "trial {trial}: relative gap {gap:.3e}");
        worst = worst.max(gap);
        checked += 1;

        // fixed-point property by substitution
        let next = select_dp_secant(lambda, target, r0, target, 1.0);
        let drift = (next - lambda).abs() / lambda.max(1e-300);
        assert!(drift <= 1e-6, "secant drift {drift:.3e} at a fixed point");
    }
    assert!(checked >= 45, "only {checked} reachable trials");
    finish(
        "9 (parameter selection)",
        1.0,
        started,
        &format!("{checked} problems, worst relative gap {worst:.2e}"),
    );
}

/// Criterion 10: IRN and PIRN agree under exact inner solves; FISTA matches
/// a long-run ISTA reference in objective value.
#[test]
fn criterion_10_baseline_equivalences() {
    let started = Instant::now();
    let mut rng = tk::seeded(1010);
    let a = tk::randn_matrix(&mut rng, 30, 20);
    let b = tk::randn(&mut rng, 30);
    let mut cfg = IrnConfig::new(0.05, 5);
    cfg.inner_iters = 400;
    cfg.inner_tol = 1e-14;
    cfg.weights = WeightPolicy {
        p: 1.0,
        tau1: Threshold::Absolute(1e-3),
        tau2: Tau2::Absolute(1e-3),
    };
    let r_irn = run_irn(dense_op(&a), &b, &cfg).unwrap();
    let r_pirn = run_pirn(dense_op(&a), &b, &cfg).unwrap();
    let d = (&r_irn.solution - &r_pirn.solution).norm() / r_irn.solution.norm();
    assert!(d <= 1e-8, "IRN/PIRN disagree by {d:.3e}");

    let lambda = 2.0;
    let sigma1 = a.clone().svd(false, false).singular_values[0];
    let step = 1.0 / (sigma1 * sigma1);
    let mut fcfg = FistaConfig::new(lambda, 400);
    fcfg.step = Some(step);
    let fista = run_fista(dense_op(&a), &b, &fcfg).unwrap();
    let x_ref = tk::ista(&a, &b, lambda, step, 120_000);
    let f = |x: &DVector<f64>| {
        0.5 * (&a * x - &b).norm_squared() + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    };
    let gap = (f(&fista.solution) - f(&x_ref)).abs();
    assert!(gap <= 1e-6, "FISTA objective gap {gap:.3e}");
    finish(
        "10 (baseline equivalences)",
        5.0,
        started,
        &format!("IRN/PIRN {d:.2e}, FISTA gap {gap:.2e}"),
    );
}

/// Criterion 11: identical config and seed produce byte-identical traces.
#[test]
fn criterion_11_determinism() {
    let started = Instant::now();
    let config: flexkrylov_cli::ExperimentConfig = serde_json::from_str(
        r#"{
  "schema_version": 1,
  "problem": {
    "generator": { "kind": "blur1d", "n": 64, "variance": 2.25, "band": 5 },
    "noise_level": 1e-2,
    "seed": 3,
    "transform_levels": 1
  },
  "solvers": [
    { "name": "gmres", "method": "gmres", "max_iters": 25 },
    { "name": "fgmres", "method": "fgmres", "max_iters": 25,
      "weights": { "p": 1.0, "tau1": { "absolute": 0.2 }, "tau2": { "absolute": 1e-10 } } },
    { "name": "flsqr-i", "method": "flsqr-i", "max_iters": 25,
      "params": { "dp_exact": { "eta": 1.01 } } }
  ],
  "output": { "images": false, "wall_time": false }
}"#,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (o1, o2) = (tmp.path().join("a"), tmp.path().join("b"));
    flexkrylov_cli::run_experiment(&config, &o1).unwrap();
    flexkrylov_cli::run_experiment(&config, &o2).unwrap();
    let mut compared = 0;
    for name in ["gmres_trace.csv", "fgmres_trace.csv", "flsqr-i_trace.csv", "summary.json"] {
        let a = std::fs::read(o1.join(name)).unwrap();
        let b = std::fs::read(o2.join(name)).unwrap();
        assert_eq!(a, b, "{name} not byte-identical");
        compared += 1;
    }
    finish(
        "11 (determinism)",
        30.0,
        started,
        &format!("{compared} output files byte-identical"),
    );
}
