use num_rational::Ratio;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use loewner_qd::chordal::{self, ArcKind, ArcSpec, StopRule};
use loewner_qd::lattice::{self, LatticeKind, LatticePathSpec};
use loewner_qd::oracle::{polyline_driving, sup_deviation};
use loewner_qd::qdiff::unit_qd;
use loewner_qd::{PiAngle, RunConfig};

fn cfg(h: f64) -> RunConfig {
    RunConfig { h, ..Default::default() }
}

fn random_square_walk(seed: u64, n_moves: usize) -> LatticePathSpec {
    let letters = ["U", "R", "L", "D"];
    let mut rng = StdRng::seed_from_u64(seed);
    loop {
        let mut moves = vec!["U".to_string()];
        for _ in 1..n_moves {
            moves.push(letters[rng.random_range(0..4)].to_string());
        }
        let spec = LatticePathSpec {
            kind: LatticeKind::Square,
            spacing: 1.0,
            origin: 0.0,
            moves,
        };
        if lattice::build_path(&spec).is_ok() {
            return spec;
        }
    }
}

fn lattice_arcs(spec: &LatticePathSpec) -> Vec<ArcSpec> {
    let vertices = lattice::build_path(spec).unwrap();
    lattice::arcs_for(&lattice::to_segments(&vertices).unwrap()).unwrap()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "c5" => c5(),
        "c6" => c6(),
        "c6b" => c6b(),
        "c7" => c7(),
        "c10" => c10(),
        _ => println!("usage: dbg_acc c5|c6|c6b|c7|c10"),
    }
}

fn c5() {
    // what do the candidate walks look like, and how does the deviation
    // depend on n_subdiv and on the trace step?
    for seed in [7u64, 11, 13, 17, 19, 23] {
        let walk = random_square_walk(seed, 5);
        println!("seed {seed}: {:?}", walk.moves);
    }
    let walk = random_square_walk(7, 5);
    let vertices = lattice::build_path(&walk).unwrap();
    for h in [1e-4, 5e-5] {
        let traced = chordal::trace(&unit_qd(), 0.0, &lattice_arcs(&walk), &cfg(h)).unwrap();
        let driving: Vec<(f64, f64)> = traced.samples.iter().map(|s| (s.t, s.xi)).collect();
        for n in [512usize, 1024, 2048, 4096] {
            let t0 = std::time::Instant::now();
            let welded = polyline_driving(&vertices, n, 1e-13).unwrap();
            let dev = sup_deviation(&driving, &welded.driving()).unwrap();
            println!("seed 7, h={h:.0e}, n={n}: dev {dev:.3e}  ({:.1?})", t0.elapsed());
        }
    }
    for seed in [11u64, 13, 17, 19, 23] {
        let walk = random_square_walk(seed, 5);
        let vertices = lattice::build_path(&walk).unwrap();
        let traced =
            chordal::trace(&unit_qd(), 0.0, &lattice_arcs(&walk), &cfg(1e-4)).unwrap();
        let driving: Vec<(f64, f64)> = traced.samples.iter().map(|s| (s.t, s.xi)).collect();
        let welded = polyline_driving(&vertices, 2048, 1e-13).unwrap();
        let dev = sup_deviation(&driving, &welded.driving()).unwrap();
        println!("seed {seed}, h=1e-4, n=2048: dev {dev:.3e}");
    }
}

fn c6() {
    let p = Ratio::new(1i64, 4i64);
    let pf = 0.25_f64;
    let expect = 2.0 * (1.0 - 2.0 * pf) / (pf * (1.0 - pf)).sqrt();
    for order in [1usize, 2, 4] {
        for h in [8e-4, 4e-4, 2e-4, 1e-4, 5e-5] {
            let mut c = cfg(h);
            c.order = order;
            let result = chordal::trace(
                &unit_qd(),
                0.0,
                &[ArcSpec {
                    kind: ArcKind::Launch { theta_dep: PiAngle::exact(p) },
                    stop: StopRule::Capacity(0.25),
                }],
                &c,
            )
            .unwrap();
            let mut num = 0.0;
            let mut den = 0.0;
            for s in &result.samples {
                num += s.xi * s.t.sqrt();
                den += s.t;
            }
            let err = (num / den - expect).abs();
            println!("order {order}, h={h:.0e}: err {err:.6e}");
        }
        println!();
    }
}

fn c6b() {
    // pointwise error profile xi(t) - c sqrt(t): where does the error live?
    let p = Ratio::new(1i64, 4i64);
    let pf = 0.25_f64;
    let expect = 2.0 * (1.0 - 2.0 * pf) / (pf * (1.0 - pf)).sqrt();
    for (order, h) in [(2usize, 2e-3), (2, 1e-3), (4, 2e-3), (4, 1e-3)] {
        let mut c = cfg(h);
        c.order = order;
        let result = chordal::trace(
            &unit_qd(),
            0.0,
            &[ArcSpec {
                kind: ArcKind::Launch { theta_dep: PiAngle::exact(p) },
                stop: StopRule::Capacity(0.25),
            }],
            &c,
        )
        .unwrap();
        println!("order {order}, h={h:.0e} ({} samples):", result.samples.len());
        let probes = [1e-8, 1e-6, 1e-4, 1e-3, 5e-3, 0.011, 0.02, 0.05, 0.1, 0.2, 0.25];
        let mut k = 0;
        for s in &result.samples {
            if k < probes.len() && s.t >= probes[k] {
                println!("  t={:10.3e}  err={:+.3e}", s.t, s.xi - expect * s.t.sqrt());
                k += 1;
            }
        }
        println!();
    }
}

fn c7() {
    // finite-difference phase defect vs trace step on the corner-rich walk
    use num_complex::Complex64;
    use loewner_qd::qdiff;
    let wrap = |d: f64| {
        (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
    };
    let walk = random_square_walk(11, 8);
    for h in [1e-3, 5e-4, 2.5e-4] {
        let result = chordal::trace(&unit_qd(), 0.0, &lattice_arcs(&walk), &cfg(h)).unwrap();
        let qd = &result.state.qd;
        let mut windows: Vec<f64> = result.arcs.iter().map(|a| a.t_start).collect();
        windows.push(f64::INFINITY);
        let mut worst = 0.0_f64;
        let mut worst_t = 0.0;
        for w in result.samples.windows(3) {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let (hm, hp) = (b.t - a.t, c.t - b.t);
            if hm < 1e-13 || hp < 1e-13 {
                continue;
            }
            if (b.tip - a.tip).norm() < 1e-7 || (c.tip - b.tip).norm() < 1e-7 {
                continue;
            }
            let arc = match result
                .arcs
                .iter()
                .position(|r| a.t > r.t_start && c.t <= windows[r.index + 1])
            {
                Some(k) => &result.arcs[k],
                None => continue,
            };
            let v = -a.tip * (hp / (hm * (hm + hp)))
                + b.tip * ((hp - hm) / (hm * hp))
                + c.tip * (hm / (hp * (hm + hp)));
            let q: Complex64 = qdiff::evaluate(qd, b.tip).unwrap();
            let defect = wrap((q * v * v).arg() - 2.0 * arc.phi.radians()).abs();
            if defect > worst {
                worst = defect;
                worst_t = b.t;
            }
        }
        println!("h={h:.2e}: max defect {worst:.3e} at t={worst_t:.4}");
        let n = result.samples.len();
        for s in &result.samples[n - 4..] {
            println!("   t={:.12}  tip={:.6}+{:.6}i", s.t, s.tip.re, s.tip.im);
        }
    }
}

fn c10() {
    for last in [0.999, 1.0, 1.5] {
        let arcs = [
            ArcSpec {
                kind: ArcKind::Launch { theta_dep: PiAngle::exact(Ratio::new(1, 2)) },
                stop: StopRule::Length(1.0),
            },
            ArcSpec {
                kind: ArcKind::Turn { delta: PiAngle::exact(Ratio::new(1, 2)) },
                stop: StopRule::Length(1.0),
            },
            ArcSpec {
                kind: ArcKind::Turn { delta: PiAngle::exact(Ratio::new(1, 2)) },
                stop: StopRule::Length(last),
            },
        ];
        let t0 = std::time::Instant::now();
        match chordal::trace(&unit_qd(), 0.0, &arcs, &cfg(1e-3)) {
            Ok(result) => {
                let n = result.samples.len();
                let tip = result.samples.last().unwrap().tip;
                let speed = |k: usize| result.samples[k].xi_dot.abs();
                let mid = speed(n / 2);
                let tail = (n - 10..n).map(speed).fold(0.0, f64::max);
                println!(
                    "last {last}: stop {:?}, {n} samples, tip {:.4}+{:.4}i, mid |xi'| {mid:.3e}, \
                     tail max {tail:.3e}, ratio {:.1} ({:.1?})",
                    result.stop_reason,
                    tip.re,
                    tip.im,
                    tail / mid,
                    t0.elapsed()
                );
            }
            Err(e) => println!("last {last}: Err({e}) ({:.1?})", t0.elapsed()),
        }
    }
}
