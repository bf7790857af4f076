use kinetic_core::cell_solver::{fp_solve, pfp_solve, CellLocalProblem};
use kinetic_core::mesh::moment_field;
use kinetic_core::velocity::{build_velocity_grid, discrete_maxwellian, evaluate_exponential};
use kinetic_core::{
    parse_config, run_case, run_solver, Centering, InnerOptions, MaxwellianParams, NewtonOptions, SolveOutcome,
};

fn solve(text: &str) -> SolveOutcome {
    let c = parse_config(text).unwrap();
    let p = c.build_problem().unwrap();
    let f0 = c.initial_field(&p).unwrap();
    run_solver(&p, &c.solver_config(), &f0).unwrap()
}

#[test]
fn reflected_walls_give_mirrored_solution() {
    let base = "case=heat1d1v, n=32, k=24, eps=0.3, order=2, method=sgs-pfp, outer_tol=1e-11, inner_tol=1e-12";
    let a = solve(&format!("{base}, wall.west.t=1, wall.east.t=2"));
    let b = solve(&format!("{base}, wall.west.t=2, wall.east.t=1"));
    assert!(a.report.converged() && b.report.converged());
    let (n, nv) = (32, 24);
    let scale = a.values.iter().fold(0.0f64, |m, x| m.max(*x));
    for j in 0..n {
        for k in 0..nv {
            let x = a.values[j * nv + k];
            let y = b.values[(n - 1 - j) * nv + (nv - 1 - k)];
            assert!((x - y).abs() <= 1e-8 * scale, "cell {j} velocity {k}: {x} vs {y}");
        }
    }
}

#[test]
fn sgs_residual_decays_monotonically() {
    for eps in [1.0, 0.1] {
        let out = solve(&format!("case=heat1d1v, n=64, k=50, eps={eps}, method=sgs-pfp"));
        assert!(out.report.converged(), "eps={eps}");
        for w in out.report.residuals.windows(2) {
            assert!(w[1] < w[0], "eps={eps}: {:?}", out.report.residuals);
        }
    }
}

#[test]
fn preconditioned_inner_counts_do_not_grow_as_eps_shrinks() {
    let grid = build_velocity_grid(1, 50, 6.0, Centering::CellCentered).unwrap();
    let a: Vec<f64> = (0..grid.len()).map(|k| grid.component(k, 0).abs() * 256.0).collect();
    let opts = InnerOptions::default();
    let mut fp_totals = Vec::new();
    let mut pfp_totals = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let (mut fp, mut pfp) = (0, 0);
        for case in 0..20 {
            let s = case as f64;
            let params = MaxwellianParams::from_primitive(1.0 + 0.05 * s, &[0.02 * (s - 10.0)], 0.8 + 0.04 * s).unwrap();
            let m = evaluate_exponential(&params, &grid).unwrap();
            let gstar: Vec<f64> = (0..grid.len())
                .map(|k| m[k] * (1.0 + 0.02 * (grid.component(k, 0) * (0.5 + 0.1 * s)).sin()))
                .collect();
            let mg = discrete_maxwellian(&gstar, &grid, &NewtonOptions::default()).unwrap();
            let r: Vec<f64> = (0..grid.len()).map(|k| (mg.values[k] - gstar[k]) / eps - a[k] * gstar[k]).collect();
            let view = CellLocalProblem {
                grid: &grid,
                transport_weight: &a,
                source: &r,
                frequency: 1.0,
                knudsen: eps,
            };
            fp += fp_solve(&view, &m, &opts).unwrap().iterations;
            pfp += pfp_solve(&view, &m, &opts).unwrap().iterations;
        }
        fp_totals.push(fp);
        pfp_totals.push(pfp);
    }
    assert!(pfp_totals.windows(2).all(|w| w[1] <= w[0]), "pfp {pfp_totals:?}");
    assert!(fp_totals.windows(2).all(|w| w[1] > w[0]), "fp {fp_totals:?}");
}

#[test]
fn multigrid_needs_fewer_fine_sweeps() {
    let base = "case=heat1d1v, n=128, k=50, eps=1e-2";
    let sgs = solve(&format!("{base}, method=sgs-pfp"));
    let mg = solve(&format!("{base}, method=mg-sgs-pfp"));
    assert!(sgs.report.converged() && mg.report.converged());
    assert!(mg.report.total_fine_sweeps() < sgs.report.total_fine_sweeps());
}

#[test]
fn runs_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let mut c = parse_config("case=heat1d1v, n=32, k=24, eps=0.1, order=2").unwrap();
        c.output = dir.path().to_path_buf();
        let out = run_case(&c).unwrap();
        let history = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(history.lines().count() - 1, out.summary.iterations);
    }
    let ma = std::fs::read(a.path().join("moments.csv")).unwrap();
    let mb = std::fs::read(b.path().join("moments.csv")).unwrap();
    assert_eq!(ma, mb);
}

#[test]
fn two_dimensional_cases_make_progress() {
    for text in [
        "case=cavity2d3v, n=8, k=8, eps=1, max_outer=3",
        "case=lid2d2v, n=8, k=12, eps=1, max_outer=3",
    ] {
        let out = solve(text);
        let r = &out.report.residuals;
        assert_eq!(r.len(), 3, "{text}");
        assert!(r[2] < r[0], "{text}: {r:?}");
    }
}

#[test]
fn lid_drives_flow_along_the_lid() {
    let c = parse_config("case=lid2d2v, n=8, k=12, eps=1, outer_tol=1e-6").unwrap();
    let p = c.build_problem().unwrap();
    let out = run_solver(&p, &c.solver_config(), &c.initial_field(&p).unwrap()).unwrap();
    assert!(out.report.converged());
    let m = moment_field(&p, &out.values).unwrap();
    // top row moves with the lid, bottom row lags behind
    let top = p.mesh().index(4, 7);
    let bottom = p.mesh().index(4, 0);
    assert!(m[top].velocity[0] > 0.0);
    assert!(m[top].velocity[0] > m[bottom].velocity[0]);
}
