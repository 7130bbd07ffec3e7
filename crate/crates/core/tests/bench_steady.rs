use glyco_core::golgi::*;
use glyco_core::network::*;
use std::path::PathBuf;

#[test]
fn fixed_march_speed_and_accuracy() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let pack = load_parameter_pack(&dir.join("packs/ground_truth.json")).unwrap();
    let net = GolgiNetwork::load(&dir.join("networks/golgi_canonical.json")).unwrap();
    let m = GolgiModel::compile(&net, &pack).unwrap();
    let nsd = [0.04, 0.01, 0.4, 1.0, 0.5, 1.2, 0.08];
    let env = GolgiEnv::from_cytosolic(2.0, 0.002, &nsd, 0.2, 20.0);

    let reference = steady_exit_n(&m, &env, 1536).unwrap();
    for n in [24usize, 48, 96] {
        let t0 = std::time::Instant::now();
        let reps = 200;
        let mut exit = vec![];
        for _ in 0..reps {
            exit = steady_exit_n(&m, &env, n).unwrap();
        }
        let dt = t0.elapsed().as_secs_f64() * 1e3 / reps as f64;
        let maxerr = exit.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
        println!("n={n}: {dt:.3} ms, maxerr {maxerr:.2e} uM");
    }
}

use glyco_core::integrate::*;
struct March2<'a> {
    m: &'a GolgiModel,
    ee: &'a GolgiEnvEval,
    e_vals: Vec<f64>,
    rates: Vec<f64>,
    nonneg: Vec<usize>,
}
impl OdeSystem for March2<'_> {
    fn dim(&self) -> usize { self.m.n_os }
    fn rhs(&mut self, z: f64, y: &[f64], dydt: &mut [f64]) -> glyco_core::Result<()> {
        self.m.profiles_at(z, &mut self.e_vals);
        self.m.reaction_rates(y, &self.e_vals, self.ee, &mut self.rates);
        self.m.apply_stoichiometry(&self.rates, dydt);
        let iv = 1.0 / self.ee.env.vel;
        for v in dydt.iter_mut() { *v *= iv; }
        Ok(())
    }
    fn nonneg(&self) -> &[usize] { &self.nonneg }
    fn typical(&self) -> Vec<f64> { vec![94.0; self.m.n_os] }
}

#[test]
fn fixed_march_profile() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let pack = load_parameter_pack(&dir.join("packs/ground_truth.json")).unwrap();
    let net = GolgiNetwork::load(&dir.join("networks/golgi_canonical.json")).unwrap();
    let m = GolgiModel::compile(&net, &pack).unwrap();
    let nsd = [0.04, 0.01, 0.4, 1.0, 0.5, 1.2, 0.08];
    let env = GolgiEnv::from_cytosolic(2.0, 0.002, &nsd, 0.2, 20.0);
    let ee = m.env_eval(&env).unwrap();
    let mut sys = March2 { m: &m, ee: &ee, e_vals: vec![], rates: vec![0.0; m.n_reactions], nonneg: (0..m.n_os).collect() };
    let mut ivp = Sdirk::new(&mut sys, SdirkOptions { rtol: 1e-7, atol: 1e-9, ..Default::default() });
    let mut os = m.inlet_field();
    let t0 = std::time::Instant::now();
    ivp.integrate_fixed(0.0, 1.0, &mut os, 48).unwrap();
    println!("fixed 48: {:.3} ms, {:?}", t0.elapsed().as_secs_f64()*1e3, ivp.stats);
}
