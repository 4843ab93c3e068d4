//! Alternating-operator ansatz and its particle-swarm search.
//!
//! A depth-`p` schedule applies `exp(-i H1 gamma_1)`, then `exp(-i H0 beta_1)`,
//! then `exp(-i H1 gamma_2)`, and so on. All durations are nonnegative and sum
//! to the final time `T`, which makes every schedule a complementary bang-bang
//! control pair with `eps0 + eps1 = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, EigenDecomposition, StateVector};
use crate::model::ProtocolSpec;
use crate::propagate::{fidelity, ControlField, TimeGrid};

/// Largest depth exposed by sweeps.
pub const MAX_DEPTH: usize = 6;

const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaoaParams {
    /// `H1` pulse durations.
    pub gammas: Vec<f64>,
    /// `H0` pulse durations.
    pub betas: Vec<f64>,
}

impl QaoaParams {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() || gammas.len() != betas.len() {
            return Err(Error::InvalidParams(format!(
                "need p >= 1 gamma/beta pairs, got {} and {}",
                gammas.len(),
                betas.len()
            )));
        }
        if let Some(bad) = gammas.iter().chain(&betas).find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::InvalidParams(format!("pulse duration {bad} is not a nonnegative number")));
        }
        Ok(Self { gammas, betas })
    }

    /// Reads the interleaved vector `[gamma_1, beta_1, gamma_2, ...]` and
    /// rescales it so the durations sum to `t_final`.
    pub fn from_interleaved(x: &[f64], t_final: f64) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::InvalidParams("interleaved durations need even length".into()));
        }
        let y = repair_to_simplex(x, t_final);
        let gammas = y.iter().step_by(2).copied().collect();
        let betas = y.iter().skip(1).step_by(2).copied().collect();
        Self::new(gammas, betas)
    }

    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    pub fn total_time(&self) -> f64 {
        self.gammas.iter().chain(&self.betas).sum()
    }

    pub fn interleaved(&self) -> Vec<f64> {
        self.gammas.iter().zip(&self.betas).flat_map(|(&g, &b)| [g, b]).collect()
    }

    /// `(duration, true if H1)` blocks in application order.
    fn blocks(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.gammas.iter().zip(&self.betas).flat_map(|(&g, &b)| [(g, true), (b, false)])
    }
}

/// Clips negative entries to zero and rescales onto `sum = t_final`. A vector
/// with nothing left is replaced by the uniform point.
pub fn repair_to_simplex(x: &[f64], t_final: f64) -> Vec<f64> {
    let clipped: Vec<f64> = x.iter().map(|&v| if v.is_finite() { v.max(0.0) } else { 0.0 }).collect();
    let sum: f64 = clipped.iter().sum();
    if sum <= 0.0 {
        return vec![t_final / x.len() as f64; x.len()];
    }
    clipped.iter().map(|&v| v * t_final / sum).collect()
}

/// Exact block evolution with the two Hamiltonians diagonalized once.
#[derive(Clone, Debug)]
pub struct QaoaEvaluator {
    spec: ProtocolSpec,
    eig0: EigenDecomposition,
    eig1: EigenDecomposition,
}

impl QaoaEvaluator {
    pub fn new(spec: &ProtocolSpec) -> Result<Self> {
        Ok(Self {
            spec: spec.clone(),
            eig0: eig_hermitian(&spec.h0)?,
            eig1: eig_hermitian(&spec.h1)?,
        })
    }

    pub fn evolve(&self, params: &QaoaParams) -> StateVector {
        let mut psi = self.spec.psi0.clone();
        for (d, is_h1) in params.blocks() {
            if d == 0.0 {
                continue;
            }
            let eig = if is_h1 { &self.eig1 } else { &self.eig0 };
            psi = eig.apply_propagator(&eig.phases(d), &psi);
        }
        psi
    }

    pub fn fidelity(&self, params: &QaoaParams) -> f64 {
        fidelity(&self.evolve(params), &self.spec.target)
    }
}

pub fn qaoa_evolve(spec: &ProtocolSpec, params: &QaoaParams) -> Result<StateVector> {
    Ok(QaoaEvaluator::new(spec)?.evolve(params))
}

/// A pulse that was shorter than one grid step and got absorbed by its
/// neighbours when sampling onto the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MergedBlock {
    /// Position in application order (`2j` for `gamma_j+1`, `2j+1` for `beta_j+1`).
    pub index: usize,
    pub duration: f64,
}

#[derive(Clone, Debug)]
pub struct SampledSchedule {
    pub controls: ControlField,
    pub merged: Vec<MergedBlock>,
}

/// Samples the bang-bang schedule onto `grid`. Block boundaries snap to the
/// nearest grid edge; the last edge is pinned to `T`.
pub fn qaoa_to_controls(params: &QaoaParams, grid: TimeGrid) -> Result<SampledSchedule> {
    let total = params.total_time();
    if (total - grid.t_final()).abs() > 1e-9 * grid.t_final().max(1.0) {
        return Err(Error::InvalidGrid(format!(
            "pulse durations sum to {total}, grid ends at {}",
            grid.t_final()
        )));
    }
    let n = grid.n_steps();
    let dt = grid.dt();
    let mut eps0 = vec![0.0; n];
    let mut eps1 = vec![0.0; n];
    let mut merged = Vec::new();
    let blocks: Vec<(f64, bool)> = params.blocks().collect();
    let (mut t_end, mut start) = (0.0, 0usize);
    for (index, &(d, is_h1)) in blocks.iter().enumerate() {
        t_end += d;
        let end = if index + 1 == blocks.len() {
            n
        } else {
            ((t_end / dt).round() as usize).min(n)
        };
        if end <= start {
            if d > 0.0 {
                merged.push(MergedBlock { index, duration: d });
            }
            continue;
        }
        let target = if is_h1 { &mut eps1 } else { &mut eps0 };
        target[start..end].iter_mut().for_each(|e| *e = 1.0);
        start = end;
    }
    Ok(SampledSchedule {
        controls: ControlField::new(grid, eps0, eps1, true)?,
        merged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Independent swarms; the best one is reported.
    pub restarts: usize,
    pub rng_seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 50,
            iterations: 300,
            inertia: 0.7298,
            cognitive: 1.4960,
            social: 1.4960,
            restarts: 8,
            rng_seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::InvalidParams("swarm_size must be at least 2".into()));
        }
        if self.iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidParams("iterations and restarts must be positive".into()));
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PsoOutcome {
    pub params: QaoaParams,
    pub fidelity: f64,
    /// Global best after each iteration of the winning restart.
    pub best_history: Vec<f64>,
    /// Restarts whose swarm contracted to a point before the budget ran out.
    pub collapsed_restarts: Vec<usize>,
    pub seed: u64,
}

struct Particle {
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best_f: f64,
    rng: ChaCha8Rng,
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, t_final: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    repair_to_simplex(&raw, t_final)
}

fn swarm_spread(particles: &[Particle]) -> f64 {
    let dim = particles[0].x.len();
    (0..dim)
        .map(|d| {
            let (lo, hi) = particles
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x[d]), hi.max(p.x[d])));
            hi - lo
        })
        .fold(0.0, f64::max)
}

struct RestartOutcome {
    best_x: Vec<f64>,
    best_f: f64,
    history: Vec<f64>,
    collapsed: bool,
}

fn run_swarm(
    eval: &QaoaEvaluator,
    t_final: f64,
    depth: usize,
    cfg: &PsoConfig,
    restart: usize,
) -> Result<RestartOutcome> {
    let dim = 2 * depth;
    let score = |x: &[f64]| -> Result<f64> { Ok(eval.fidelity(&QaoaParams::from_interleaved(x, t_final)?)) };

    let mut particles: Vec<Particle> = (0..cfg.swarm_size)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream((restart * cfg.swarm_size + k) as u64);
            let x = random_point(&mut rng, dim, t_final);
            let other = random_point(&mut rng, dim, t_final);
            let v = other.iter().zip(&x).map(|(o, x)| 0.5 * (o - x)).collect();
            Particle {
                best_x: x.clone(),
                x,
                v,
                best_f: f64::NEG_INFINITY,
                rng,
            }
        })
        .collect();

    let mut g_x = particles[0].x.clone();
    let mut g_f = f64::NEG_INFINITY;
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut collapsed = false;

    for iter in 0..cfg.iterations {
        if iter > 0 {
            for p in particles.iter_mut() {
                for d in 0..dim {
                    let (r1, r2): (f64, f64) = (p.rng.random(), p.rng.random());
                    p.v[d] = cfg.inertia * p.v[d]
                        + cfg.cognitive * r1 * (p.best_x[d] - p.x[d])
                        + cfg.social * r2 * (g_x[d] - p.x[d]);
                    p.x[d] += p.v[d];
                }
                p.x = repair_to_simplex(&p.x, t_final);
            }
        }
        let scores: Vec<f64> = particles
            .par_iter()
            .map(|p| score(&p.x))
            .collect::<Result<_>>()?;
        for (p, f) in particles.iter_mut().zip(scores) {
            if f > p.best_f {
                p.best_f = f;
                p.best_x.clone_from(&p.x);
            }
            if f > g_f {
                g_f = f;
                g_x.clone_from(&p.x);
            }
        }
        history.push(g_f);
        if iter + 1 < cfg.iterations && swarm_spread(&particles) < SIMPLEX_TOL {
            collapsed = true;
            break;
        }
    }
    Ok(RestartOutcome {
        best_x: g_x,
        best_f: g_f,
        history,
        collapsed,
    })
}

/// Maximizes the final fidelity over depth-`depth` schedules of total time `t_final`.
pub fn pso_optimize(spec: &ProtocolSpec, t_final: f64, depth: usize, cfg: &PsoConfig) -> Result<PsoOutcome> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::InvalidParams(format!("final time must be positive, got {t_final}")));
    }
    if depth == 0 {
        return Err(Error::InvalidParams("depth must be at least 1".into()));
    }
    cfg.validate()?;
    let eval = QaoaEvaluator::new(spec)?;
    let mut best: Option<RestartOutcome> = None;
    let mut collapsed_restarts = Vec::new();
    for restart in 0..cfg.restarts {
        let run = run_swarm(&eval, t_final, depth, cfg, restart)?;
        if run.collapsed {
            collapsed_restarts.push(restart);
        }
        if best.as_ref().is_none_or(|b| run.best_f > b.best_f) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(PsoOutcome {
        params: QaoaParams::from_interleaved(&best.best_x, t_final)?,
        fidelity: best.best_f,
        best_history: best.history,
        collapsed_restarts,
        seed: cfg.rng_seed,
    })
}

/// Runs [`pso_optimize`] for every depth in `depths`; returns per-depth
/// outcomes and the index of the best one (first wins ties).
pub fn pso_over_depths(
    spec: &ProtocolSpec,
    t_final: f64,
    depths: &[usize],
    cfg: &PsoConfig,
) -> Result<(Vec<(usize, PsoOutcome)>, usize)> {
    let runs: Vec<(usize, PsoOutcome)> = depths
        .iter()
        .map(|&p| Ok((p, pso_optimize(spec, t_final, p, cfg)?)))
        .collect::<Result<_>>()?;
    if runs.is_empty() {
        return Err(Error::InvalidParams("no depths given".into()));
    }
    let mut best = 0;
    for (i, (_, r)) in runs.iter().enumerate() {
        if r.fidelity > runs[best].1.fidelity {
            best = i;
        }
    }
    Ok((runs, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_teleportation, InputQubit};
    use crate::propagate::final_fidelity;
    use proptest::prelude::*;

    fn teleport() -> ProtocolSpec {
        build_teleportation(InputQubit::default())
    }

    fn quick() -> PsoConfig {
        PsoConfig {
            swarm_size: 30,
            iterations: 150,
            restarts: 3,
            ..PsoConfig::default()
        }
    }

    #[test]
    fn zero_durations_leave_state_alone() {
        let spec = teleport();
        let p = QaoaParams::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let psi = qaoa_evolve(&spec, &p).unwrap();
        assert!(psi.sub(&spec.psi0).norm() < 1e-15);
    }

    #[test]
    fn pure_h1_pulse_keeps_static_overlap() {
        let spec = teleport();
        let p = QaoaParams::new(vec![1.3], vec![0.0]).unwrap();
        let f = fidelity(&qaoa_evolve(&spec, &p).unwrap(), &spec.target);
        assert!((f - 0.25).abs() < 1e-12);
    }

    #[test]
    fn negative_durations_rejected() {
        assert!(QaoaParams::new(vec![-0.1], vec![1.0]).is_err());
        assert!(QaoaParams::new(vec![0.1], vec![]).is_err());
        assert!(QaoaParams::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn sampled_single_pulse() {
        let g = TimeGrid::new(1.2, 120).unwrap();
        let s = qaoa_to_controls(&QaoaParams::new(vec![1.2], vec![0.0]).unwrap(), g).unwrap();
        assert!(s.controls.eps1.iter().all(|&e| e == 1.0));
        assert!(s.controls.eps0.iter().all(|&e| e == 0.0));
        assert!(s.merged.is_empty());
    }

    #[test]
    fn sampled_half_and_half() {
        let g = TimeGrid::new(1.0, 100).unwrap();
        let s = qaoa_to_controls(&QaoaParams::new(vec![0.5], vec![0.5]).unwrap(), g).unwrap();
        assert!(s.controls.eps1[..50].iter().all(|&e| e == 1.0));
        assert!(s.controls.eps0[50..].iter().all(|&e| e == 1.0));
        assert!(s.controls.eps0[..50].iter().all(|&e| e == 0.0));
    }

    #[test]
    fn tiny_blocks_are_merged_and_reported() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        let p = QaoaParams::new(vec![0.5, 0.0], vec![0.02, 0.48]).unwrap();
        let s = qaoa_to_controls(&p, g).unwrap();
        assert_eq!(s.merged, vec![MergedBlock { index: 1, duration: 0.02 }]);
        assert!(s.controls.eps0.iter().zip(&s.controls.eps1).all(|(a, b)| a + b == 1.0));
    }

    #[test]
    fn mismatched_total_rejected() {
        let g = TimeGrid::new(1.0, 10).unwrap();
        assert!(qaoa_to_controls(&QaoaParams::new(vec![0.4], vec![0.4]).unwrap(), g).is_err());
    }

    #[test]
    fn exact_and_sampled_fidelities_agree() {
        let spec = teleport();
        let t = 1.5;
        let p = QaoaParams::from_interleaved(&[0.3, 0.2, 0.45, 0.1, 0.25, 0.2], t).unwrap();
        let exact = QaoaEvaluator::new(&spec).unwrap().fidelity(&p);
        let s = qaoa_to_controls(&p, TimeGrid::standard(t).unwrap()).unwrap();
        let sampled = final_fidelity(&spec, &s.controls, None).unwrap();
        assert!((exact - sampled).abs() < 1e-4, "{exact} vs {sampled}");
    }

    #[test]
    fn swarm_reaches_unit_fidelity_at_long_time() {
        let r = pso_optimize(&teleport(), 1.5, 1, &quick()).unwrap();
        assert!(r.fidelity >= 0.99, "{}", r.fidelity);
        assert!((r.params.total_time() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn swarm_history_never_decreases() {
        let r = pso_optimize(&teleport(), 1.0, 2, &quick()).unwrap();
        assert!(r.best_history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*r.best_history.last().unwrap(), r.fidelity);
    }

    #[test]
    fn swarm_is_deterministic() {
        let a = pso_optimize(&teleport(), 0.9, 2, &quick()).unwrap();
        let b = pso_optimize(&teleport(), 0.9, 2, &quick()).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.best_history, b.best_history);
        let c = pso_optimize(&teleport(), 0.9, 2, &PsoConfig { rng_seed: 7, ..quick() }).unwrap();
        assert_ne!(a.best_history, c.best_history);
    }

    #[test]
    fn five_blocks_reach_unit_fidelity_at_long_time() {
        let r = pso_optimize(&teleport(), 1.8, 5, &quick()).unwrap();
        assert!(r.fidelity >= 0.99, "{}", r.fidelity);
    }

    #[test]
    fn depth_sweep_picks_best() {
        let (runs, best) = pso_over_depths(&teleport(), 1.8, &[1, 2], &quick()).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(runs.iter().all(|(_, r)| r.fidelity <= runs[best].1.fidelity));
    }

    #[test]
    fn invalid_swarm_config_rejected() {
        let cfg = PsoConfig { swarm_size: 1, ..PsoConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(pso_optimize(&teleport(), 0.0, 1, &PsoConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn repair_lands_on_simplex(x in proptest::collection::vec(-2.0f64..2.0, 2..12), t in 0.1f64..3.0) {
            let y = repair_to_simplex(&x, t);
            prop_assert!(y.iter().all(|&v| v >= 0.0));
            prop_assert!((y.iter().sum::<f64>() - t).abs() < 1e-12);
            for (a, b) in x.iter().zip(&y) {
                if *a <= 0.0 && x.iter().any(|&v| v > 0.0) {
                    prop_assert_eq!(*b, 0.0);
                }
            }
        }
    }
}
