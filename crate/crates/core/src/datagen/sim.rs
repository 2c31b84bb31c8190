//! Periodic advection-diffusion and Burgers solvers initialized from layered sines.
//!
//! Grids are cubic with `N` cells per axis, a power of two. Positions are
//! `p = index / N` in `[0, 1)`, velocities are in cells per step and `dt = 1`.
//! Velocity fields store their components in channel order (x, y, z).

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{rng_for, Provenance, Sequence};
use crate::error::{Error, Result};
use crate::field::{FieldKind, VolumeField};

const INIT_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;

pub const DEFAULT_STEPS: usize = 120;
pub const DEFAULT_NOISE: f64 = 0.05;

/// Parameters that [`run_simulation_sequence`] can vary.
pub const PERTURBABLE: [&str; 10] = ["f1", "f2", "f3", "f4", "f5", "f7", "o1", "o2", "od", "noise"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    /// Density advected by a forced velocity; noise on velocity.
    Advdiff,
    /// As `Advdiff` with noise added to the density.
    AdvdiffDensitynoise,
    /// Self-advected velocity; noise on velocity.
    Burgers,
}

impl SolverTag {
    pub fn name(self) -> &'static str {
        match self {
            SolverTag::Advdiff => "advdiff",
            SolverTag::AdvdiffDensitynoise => "advdiff_densitynoise",
            SolverTag::Burgers => "burgers",
        }
    }
}

/// Layered-sine coefficients of one velocity/force component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    /// `f[k]` is the coefficient vector f_{k+1}, elements in (x, y, z) order.
    pub f: [[f64; 3]; 7],
    pub o1: [f64; 3],
    pub o2: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub seed: u64,
    pub solver: SolverTag,
    /// Velocity/force components x, y, z.
    pub components: [ComponentParams; 3],
    pub fd: [f64; 3],
    pub od: [f64; 3],
    pub nu: f64,
    pub noise_strength: f64,
}

const F_RANGES: [(f64, f64); 7] =
    [(-0.2, 0.2), (-0.2, 0.2), (-0.15, 0.15), (-0.15, 0.15), (-0.1, 0.1), (0.0, 0.1), (-0.1, 0.1)];
const DENSITY_FREQUENCIES: [f64; 6] = [1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0, 1.0 / 6.0];

impl SimParams {
    /// Draws all coefficients from the simulation seed.
    pub fn sample(seed: u64, solver: SolverTag, noise_strength: f64) -> Self {
        let mut rng = rng_for(seed, INIT_STREAM);
        let mut vec3 = |lo: f64, hi: f64| [0; 3].map(|_| rng.gen_range(lo..hi));
        let mut component = || {
            let f = F_RANGES.map(|(lo, hi)| vec3(lo, hi));
            ComponentParams { f, o1: vec3(0.0, 100.0), o2: vec3(0.0, 100.0) }
        };
        let components = [component(), component(), component()];
        let mut rng = rng_for(seed, INIT_STREAM + 100);
        let fd = [0; 3].map(|_| DENSITY_FREQUENCIES[rng.gen_range(0..DENSITY_FREQUENCIES.len())]);
        let od = [0; 3].map(|_| rng.gen_range(0.0..100.0));
        let mut nu = rng.gen_range(0.0002..0.1002);
        if solver == SolverTag::Burgers {
            nu *= 0.1;
        }
        Self { seed, solver, components, fd, od, nu, noise_strength }
    }

    /// Copy with `amount` added to every element of parameter `id`.
    pub fn perturbed(&self, id: &str, amount: f64) -> Result<Self> {
        let mut p = self.clone();
        let add = |v: &mut [f64; 3]| v.iter_mut().for_each(|e| *e += amount);
        match id {
            "f1" | "f2" | "f3" | "f4" | "f5" | "f7" => {
                let k = id[1..].parse::<usize>().expect("literal id") - 1;
                p.components.iter_mut().for_each(|c| add(&mut c.f[k]));
            }
            "o1" => p.components.iter_mut().for_each(|c| add(&mut c.o1)),
            "o2" => p.components.iter_mut().for_each(|c| add(&mut c.o2)),
            "od" if self.solver != SolverTag::Burgers => add(&mut p.od),
            "noise" => p.noise_strength += amount,
            _ => return Err(Error::UnknownParam(id.to_string())),
        }
        Ok(p)
    }
}

/// Velocity, density and the (time-dependent) force of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub n: usize,
    /// Components x, y, z, each `n³` values in z, y, x order.
    pub velocity: [Vec<f64>; 3],
    pub density: Vec<f64>,
}

impl SimState {
    pub fn zeros(n: usize) -> Self {
        let c = n * n * n;
        Self { n, velocity: [vec![0.0; c], vec![0.0; c], vec![0.0; c]], density: vec![0.0; c] }
    }

    pub fn density_field(&self) -> VolumeField {
        let data = self.density.iter().map(|&v| v as f32).collect();
        VolumeField::from_parts_unchecked(FieldKind::Scalar, 1, [self.n; 3], data)
    }

    pub fn velocity_field(&self) -> VolumeField {
        let data = self.velocity.iter().flatten().map(|&v| v as f32).collect();
        VolumeField::from_parts_unchecked(FieldKind::Velocity, 3, [self.n; 3], data)
    }
}

/// Sum over the three axes of a per-axis profile: `out[z,y,x] = g[2][z] + g[1][y] + g[0][x]`.
fn separable_sum(n: usize, g: &[Vec<f64>; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            let zy = g[2][z] + g[1][y];
            out.extend(g[0].iter().map(|gx| zy + gx));
        }
    }
    out
}

fn axis_positions(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| i as f64 / n as f64)
}

const VELOCITY_C: [f64; 4] = [1.0, 1.0, 0.4, 0.3];
const FORCE_C: [f64; 4] = [0.0, 1.0, 1.0, 0.7];

/// Offset vector selected by the layered-sine index `i` (1-based).
/// Velocity uses o_{((i+1) mod 2)+1}: o1, o2, o1, o2 for i = 1..4.
fn velocity_offset(c: &ComponentParams, i: usize) -> &[f64; 3] {
    if (i + 1) % 2 + 1 == 1 { &c.o1 } else { &c.o2 }
}

/// Force uses o_{(i mod 2)+1}: o2, o1, o2, o1 for i = 1..4.
fn force_offset(c: &ComponentParams, i: usize) -> &[f64; 3] {
    if i % 2 + 1 == 1 { &c.o1 } else { &c.o2 }
}

fn velocity_component(c: &ComponentParams, n: usize) -> Vec<f64> {
    let g = [0, 1, 2].map(|a| {
        axis_positions(n)
            .map(|p| {
                c.f[0][a]
                    + (1..=4)
                        .map(|i| {
                            let phase = VELOCITY_C[i - 1] * velocity_offset(c, i)[a];
                            c.f[i][a] * (2f64.powi(i as i32) * PI * p + phase).sin()
                        })
                        .sum::<f64>()
            })
            .collect()
    });
    separable_sum(n, &g)
}

/// Force component at normalized time `t`.
fn force_component(c: &ComponentParams, n: usize, t: f64) -> Vec<f64> {
    let g = [0, 1, 2].map(|a| {
        let f6 = c.f[5][a];
        let f7 = c.f[6][a];
        let amp = f6 * (1.0 + 20.0 * f6);
        axis_positions(n)
            .map(|p| {
                let pt = p + 0.5 * f7 + f7 * (3.0 * t).sin();
                amp * (1..=4)
                    .map(|i| {
                        let phase = FORCE_C[i - 1] * force_offset(c, i)[a];
                        c.f[i][a] * (2f64.powi(i as i32) * PI * pt + phase).sin()
                    })
                    .sum::<f64>()
            })
            .collect()
    });
    separable_sum(n, &g)
}

fn density_init(params: &SimParams, n: usize) -> Vec<f64> {
    let g = [0, 1, 2].map(|a| {
        axis_positions(n).map(|p| (params.fd[a] * 24.0 * PI * p + params.od[a]).sin()).collect()
    });
    separable_sum(n, &g)
}

/// Layered-sine initial velocity, density and force (at t = 0).
pub fn init_advdiff_state(params: &SimParams, resolution: usize) -> Result<(VolumeField, VolumeField, VolumeField)> {
    check_resolution(resolution)?;
    let state = initial_state(params, resolution);
    let force: Vec<f32> = params
        .components
        .iter()
        .flat_map(|c| force_component(c, resolution, 0.0))
        .map(|v| v as f32)
        .collect();
    let force = VolumeField::from_parts_unchecked(FieldKind::Velocity, 3, [resolution; 3], force);
    Ok((state.velocity_field(), state.density_field(), force))
}

fn initial_state(params: &SimParams, n: usize) -> SimState {
    SimState {
        n,
        velocity: [0, 1, 2].map(|k| velocity_component(&params.components[k], n)),
        density: density_init(params, n),
    }
}

fn check_resolution(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("resolution {n} must be a power of two >= 2")));
    }
    Ok(())
}

/// Semi-Lagrangian transport of `q` by `velocity` over `dt`: each cell samples
/// `q` at its periodic backtrace position `p - u·dt` trilinearly, clamped to the
/// extrema of the eight neighbours used.
pub fn advect(q: &[f64], velocity: &[Vec<f64>; 3], n: usize, dt: f64) -> Vec<f64> {
    let nf = n as f64;
    let mut out = Vec::with_capacity(q.len());
    let split = |v: f64| {
        let w = v.rem_euclid(nf);
        let f = w.floor();
        let i0 = (f as usize) % n;
        (i0, (i0 + 1) % n, w - f)
    };
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let idx = (z * n + y) * n + x;
                let (x0, x1, tx) = split(x as f64 - velocity[0][idx] * dt);
                let (y0, y1, ty) = split(y as f64 - velocity[1][idx] * dt);
                let (z0, z1, tz) = split(z as f64 - velocity[2][idx] * dt);
                let at = |zz: usize, yy: usize, xx: usize| q[(zz * n + yy) * n + xx];
                let corners = [
                    at(z0, y0, x0),
                    at(z0, y0, x1),
                    at(z0, y1, x0),
                    at(z0, y1, x1),
                    at(z1, y0, x0),
                    at(z1, y0, x1),
                    at(z1, y1, x0),
                    at(z1, y1, x1),
                ];
                let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
                let c00 = lerp(corners[0], corners[1], tx);
                let c01 = lerp(corners[2], corners[3], tx);
                let c10 = lerp(corners[4], corners[5], tx);
                let c11 = lerp(corners[6], corners[7], tx);
                let v = lerp(lerp(c00, c01, ty), lerp(c10, c11, ty), tz);
                let (lo, hi) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
                out.push(v.clamp(lo, hi));
            }
        }
    }
    out
}

/// Exact periodic diffusion in Fourier space: every mode is scaled by `exp(-ν|k|²dt)`
/// with `k = 2π m / N` per axis.
pub struct SpectralDiffusion {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralDiffusion {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn transform_axis(&self, data: &mut [Complex<f64>], stride: usize, fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        if stride == 1 {
            fft.process(data);
            return;
        }
        // gather every line along the strided axis into contiguous storage
        let mut lines = vec![Complex::new(0.0, 0.0); data.len()];
        let mut k = 0;
        let block = stride * n;
        for base in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for i in 0..n {
                    lines[k] = data[base + off + i * stride];
                    k += 1;
                }
            }
        }
        fft.process(&mut lines);
        k = 0;
        for base in (0..data.len()).step_by(block) {
            for off in 0..stride {
                for i in 0..n {
                    data[base + off + i * stride] = lines[k];
                    k += 1;
                }
            }
        }
    }

    pub fn apply(&self, q: &mut [f64], nu: f64, dt: f64) {
        let n = self.n;
        if nu == 0.0 {
            return;
        }
        let mut data: Vec<Complex<f64>> = q.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for stride in [1, n, n * n] {
            self.transform_axis(&mut data, stride, &self.forward);
        }
        let k2: Vec<f64> = (0..n)
            .map(|m| {
                let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                let k = 2.0 * PI * m / n as f64;
                k * k
            })
            .collect();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    let idx = (z * n + y) * n + x;
                    data[idx] *= (-nu * (k2[z] + k2[y] + k2[x]) * dt).exp();
                }
            }
        }
        for stride in [1, n, n * n] {
            self.transform_axis(&mut data, stride, &self.inverse);
        }
        let norm = 1.0 / (n * n * n) as f64;
        q.iter_mut().zip(&data).for_each(|(v, c)| *v = c.re * norm);
    }
}

/// A running simulation.
pub struct Simulation {
    pub params: SimParams,
    pub state: SimState,
    pub step_index: usize,
    diffusion: SpectralDiffusion,
    noise: rand_chacha::ChaCha8Rng,
}

impl Simulation {
    pub fn new(params: SimParams, resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        let state = initial_state(&params, resolution);
        Self::from_state(params, state)
    }

    /// Starts from an explicit state (for oracles and custom setups).
    pub fn from_state(params: SimParams, state: SimState) -> Result<Self> {
        check_resolution(state.n)?;
        let cells = state.n.pow(3);
        if state.density.len() != cells || state.velocity.iter().any(|v| v.len() != cells) {
            return Err(Error::ShapeMismatch(format!("state arrays must hold {cells} values")));
        }
        let noise = rng_for(params.seed, NOISE_STREAM);
        Ok(Self { diffusion: SpectralDiffusion::new(state.n), params, state, step_index: 0, noise })
    }

    fn add_force(&mut self, dt: f64) {
        let n = self.state.n;
        let t = self.step_index as f64 / n as f64;
        for (k, comp) in self.params.components.iter().enumerate() {
            let f = force_component(comp, n, t);
            self.state.velocity[k].iter_mut().zip(f).for_each(|(u, f)| *u += f * dt);
        }
    }

    fn add_noise(&mut self) {
        let sigma = self.params.noise_strength;
        let rng = &mut self.noise;
        let mut perturb = |v: &mut [f64]| {
            v.iter_mut().for_each(|e| {
                let g: f64 = StandardNormal.sample(rng);
                *e += sigma * g;
            })
        };
        match self.params.solver {
            SolverTag::AdvdiffDensitynoise => perturb(&mut self.state.density),
            SolverTag::Advdiff | SolverTag::Burgers => {
                for v in self.state.velocity.iter_mut() {
                    perturb(v);
                }
            }
        }
    }

    /// Advection, diffusion, forcing and noise for one step of the configured solver.
    pub fn step(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let n = self.state.n;
        let nu = self.params.nu;
        match self.params.solver {
            SolverTag::Advdiff | SolverTag::AdvdiffDensitynoise => {
                let mut d = advect(&self.state.density, &self.state.velocity, n, dt);
                self.diffusion.apply(&mut d, nu, dt);
                self.state.density = d;
            }
            SolverTag::Burgers => {
                let mut next = [0, 1, 2].map(|k| advect(&self.state.velocity[k], &self.state.velocity, n, dt));
                for v in next.iter_mut() {
                    self.diffusion.apply(v, nu, dt);
                }
                self.state.velocity = next;
            }
        }
        self.add_force(dt);
        if self.params.noise_strength != 0.0 {
            self.add_noise();
        }
        self.step_index += 1;
    }

    /// The field a sequence records: density for advection-diffusion, velocity for Burgers.
    pub fn output_field(&self) -> VolumeField {
        match self.params.solver {
            SolverTag::Burgers => self.state.velocity_field(),
            _ => self.state.density_field(),
        }
    }
}

/// One advection-diffusion step (solver tag from `params`).
pub fn step_advection_diffusion(sim: &mut Simulation, dt: f64) {
    debug_assert_ne!(sim.params.solver, SolverTag::Burgers);
    sim.step(dt);
}

/// One Burgers step.
pub fn step_burgers(sim: &mut Simulation, dt: f64) {
    debug_assert_eq!(sim.params.solver, SolverTag::Burgers);
    sim.step(dt);
}

/// Runs `n + 1` simulations with `varied` offset by `k·delta` and collects the
/// final frames. All variants share the same noise stream.
pub fn run_simulation_sequence(
    base: &SimParams,
    varied: &str,
    delta: f64,
    n: usize,
    steps: usize,
    resolution: usize,
) -> Result<Sequence> {
    check_resolution(resolution)?;
    let variants = (0..=n).map(|k| base.perturbed(varied, k as f64 * delta)).collect::<Result<Vec<_>>>()?;
    let states = variants
        .into_par_iter()
        .map(|p| {
            let mut sim = Simulation::new(p, resolution)?;
            for _ in 0..steps {
                sim.step(1.0);
            }
            let field = sim.output_field();
            if field.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("simulation diverged to non-finite values".into()));
            }
            Ok(field)
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance =
        Provenance { method: base.solver.name().into(), varied: varied.into(), delta, seed: base.seed };
    Sequence::new(states, provenance)
}
