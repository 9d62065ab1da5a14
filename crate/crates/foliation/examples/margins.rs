use foliation::newton::{residual_field, residual_norm, solve_invariance, NewtonOptions};
use foliation::{Dst, Grid, PlanarMap, SplineOrder};

fn second_diff(f: &foliation::CircleFunction) -> f64 {
    let v = f.values();
    let n = v.len();
    (0..n)
        .map(|i| (v[(i + 1) % n] - 2.0 * v[i] + v[(i + n - 1) % n]).abs())
        .fold(0.0, f64::max)
}

fn fourth_diff(f: &foliation::CircleFunction) -> f64 {
    let pts = f.grid().points();
    let idx = f.index() as f64;
    let v: Vec<f64> = f.values().iter().zip(pts).map(|(v, t)| v - idx * t).collect();
    let n = v.len();
    (0..n)
        .map(|i| {
            (v[(i + 2) % n] - 4.0 * v[(i + 1) % n] + 6.0 * v[i] - 4.0 * v[(i + n - 1) % n]
                + v[(i + n - 2) % n])
                .abs()
        })
        .fold(0.0, f64::max)
}

fn main() {
    let grid = Grid::uniform(64);
    let opts = NewtonOptions {
        tolerance: 1e-7,
        ..NewtonOptions::default()
    };
    let seed = Dst::new(0.5, 0.3, 0.0)
        .unwrap()
        .exact_unperturbed(&grid, SplineOrder::Cubic, 2, 1.0)
        .unwrap();
    let mut p = seed.clone();
    for k in [0.20, 0.21, 0.22, 0.23, 0.24] {
        let map = Dst::new(0.5, 0.3, k).unwrap();
        match solve_invariance(&map, &p, &opts) {
            Ok((pn, st)) => {
                p = pn;
                println!(
                    "N=64 k={k}: res {:.3e} steps {} irr {:.3e} c1 {:.4}",
                    st.final_residual,
                    st.steps.len(),
                    second_diff(p.w2.coeff(0)),
                    p.solution_norm(1, 1e-3)
                );
            }
            Err(e) => println!("N=64 k={k}: FAILED {e}"),
        }
    }

    // Doubling-error study at N=64, k=0.3, tol 1e-8.
    let opts8 = NewtonOptions {
        tolerance: 1e-8,
        ..NewtonOptions::default()
    };
    let map = Dst::new(0.5, 0.3, 0.3).unwrap();
    match solve_invariance(&map, &seed, &opts8) {
        Ok((pc, st)) => {
            println!("N=64 k=0.3: res {:.3e} steps {}", st.final_residual, st.steps.len());
            let fine = pc.resample(&Grid::uniform(128)).unwrap();
            let res = residual_norm(&residual_field(&map, &fine), 0, 1e-3);
            let mut est = 0.0f64;
            for f in [&pc.w1, &pc.w2] {
                for j in 0..=pc.degree() {
                    est = est.max(fourth_diff(f.coeff(j)));
                }
            }
            est = est.max(fourth_diff(&pc.a)).max(fourth_diff(&pc.lambda));
            est *= 5.0 / 384.0;
            println!("doubled residual {res:.3e} vs spline est {est:.3e} ratio {:.2}", res / est);
        }
        Err(e) => println!("N=64 k=0.3: FAILED {e}"),
    }

    // Degree raising at N=256, k=0.2, tol 1e-12.
    let grid = Grid::uniform(256);
    let seed = Dst::new(0.5, 0.3, 0.0)
        .unwrap()
        .exact_unperturbed(&grid, SplineOrder::Cubic, 2, 1.0)
        .unwrap();
    let map = Dst::new(0.5, 0.3, 0.2).unwrap();
    let opts12 = NewtonOptions {
        tolerance: 1e-12,
        ..NewtonOptions::default()
    };
    match solve_invariance(&map, &seed, &opts12) {
        Ok((p, st)) => {
            println!("N=256 k=0.2: res {:.3e} steps {}", st.final_residual, st.steps.len());
            match foliation::increase_order(&map, &p, 6, 1e-8, 0, 1e-6, &opts12) {
                Ok((_, sched)) => println!("schedule: {sched:?}"),
                Err(e) => println!("increase_order FAILED: {e}"),
            }
        }
        Err(e) => println!("N=256 k=0.2: FAILED {e}"),
    }
}
