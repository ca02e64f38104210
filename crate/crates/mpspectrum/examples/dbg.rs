use mpspectrum::*;
use mpspectrum::solver::*;
fn main() {
    let a = Measure::semicircle(1.0, 0.0).unwrap();
    let b = Measure::new(vec![
        (0.4, MeasurePart::atom(-3.0)),
        (0.6, MeasurePart::semicircle(1.0, 0.0)),
    ]).unwrap();
    let gamma = 0.5;
    let cfg = SolverConfig::default();
    for dx in [-0.3, -0.1, -0.03, -0.01, -0.003, -0.001, 0.0, 0.001, 0.003, 0.01, 0.03, 0.1, 0.3] {
        let x = -3.0 + dx;
        let (f, err) = density_at(&a, &b, gamma, x, &cfg).unwrap();
        // finer heights for comparison
        let fine = cfg.with_heights(vec![1e-4, 5e-5, 2.5e-5, 1.25e-5]);
        let (ff, _) = density_at(&a, &b, gamma, x, &fine).unwrap();
        println!("x=-3{dx:+.4}: default f={f:.6} (err {err:.1e})  fine f={ff:.6}  diff={:.2e}", f - ff);
    }
}
