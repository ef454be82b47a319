//! Fixed-step integration of the controlled system in group coordinates and
//! Monte-Carlo reachability checks.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{group_exp, group_log, AlgebraElement, GroupElement};
use crate::error::{check_dim, HeisError, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::obstruct::ObstructionCertificate;
use crate::system::LinearSystem;

pub const DEFAULT_STEP: f64 = 1e-3;

/// Piecewise-constant input: `(duration, u)` segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    segments: Vec<(f64, Vec<f64>)>,
}

impl ControlSignal {
    pub fn new(segments: Vec<(f64, Vec<f64>)>) -> Result<Self> {
        let Some(first) = segments.first() else {
            return Err(HeisError::InvalidArgument("signal has no segments".into()));
        };
        let m = first.1.len();
        for (dt, u) in &segments {
            if !(*dt > 0.0) || !dt.is_finite() {
                return Err(HeisError::InvalidArgument("durations must be positive".into()));
            }
            check_dim(m, u.len())?;
        }
        Ok(Self { segments })
    }

    pub fn constant(duration: f64, u: Vec<f64>) -> Result<Self> {
        Self::new(vec![(duration, u)])
    }

    pub fn segments(&self) -> &[(f64, Vec<f64>)] {
        &self.segments
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.0).sum()
    }

    pub fn m(&self) -> usize {
        self.segments[0].1.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GroupElement>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &GroupElement {
        self.states.last().expect("trajectories are never empty")
    }

    /// CSV with header `t,x1,y1,...,xn,yn,z` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, GroupElement::n);
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i},y{i}");
        }
        out.push_str(",z\n");
        for (t, g) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t:.16e}");
            for v in g.to_vector().iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Time direction; `Backward` integrates the negated field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// `X(g) + sum_j u_j B_j(g)` with right-invariant `B_j(g) = (a, b, c + <b, x_g>)`.
pub fn controlled_field(sys: &LinearSystem, g: &GroupElement, u: &[f64]) -> Result<Vector> {
    check_dim(sys.n(), g.n())?;
    check_dim(sys.m(), u.len())?;
    let model = Model::new(sys, Direction::Forward);
    let mut out = vec![0.0; sys.dim()];
    model.eval(g.to_vector().as_slice(), u, &mut out);
    Ok(Vector::from_vec(out))
}

/// Flat copy of the system used by the integrators.
struct Model {
    n: usize,
    dim: usize,
    d: f64,
    /// Row-major derivation matrix.
    dm: Vec<f64>,
    controls: Vec<Vec<f64>>,
    sign: f64,
}

impl Model {
    fn new(sys: &LinearSystem, direction: Direction) -> Self {
        let dim = sys.dim();
        let m = sys.derivation().matrix();
        let dm = (0..dim).flat_map(|r| (0..dim).map(move |c| m[(r, c)])).collect();
        Self {
            n: sys.n(),
            dim,
            d: sys.d(),
            dm,
            controls: sys.control_vectors().iter().map(|v| v.as_slice().to_vec()).collect(),
            sign: match direction {
                Direction::Forward => 1.0,
                Direction::Backward => -1.0,
            },
        }
    }

    fn eval(&self, g: &[f64], u: &[f64], out: &mut [f64]) {
        let (n, dim) = (self.n, self.dim);
        for r in 0..dim {
            let row = &self.dm[r * dim..(r + 1) * dim];
            out[r] = row.iter().zip(g).map(|(a, b)| a * b).sum();
        }
        let mut quad = 0.0;
        for i in 0..n {
            let (x, y) = (g[2 * i], g[2 * i + 1]);
            quad += y * out[2 * i] + x * out[2 * i + 1] - self.d * x * y;
        }
        out[2 * n] += 0.5 * quad;
        for (b, &uj) in self.controls.iter().zip(u) {
            if uj == 0.0 {
                continue;
            }
            for k in 0..2 * n {
                out[k] += uj * b[k];
            }
            let mut lift = b[2 * n];
            for i in 0..n {
                lift += b[2 * i + 1] * g[2 * i];
            }
            out[2 * n] += uj * lift;
        }
        if self.sign < 0.0 {
            out.iter_mut().for_each(|v| *v = -*v);
        }
    }

    fn rk4(&self, g: &mut [f64], u: &[f64], h: f64, scratch: &mut [Vec<f64>; 5]) {
        let dim = self.dim;
        let [k1, k2, k3, k4, tmp] = scratch;
        self.eval(g, u, k1);
        for i in 0..dim {
            tmp[i] = g[i] + 0.5 * h * k1[i];
        }
        self.eval(tmp, u, k2);
        for i in 0..dim {
            tmp[i] = g[i] + 0.5 * h * k2[i];
        }
        self.eval(tmp, u, k3);
        for i in 0..dim {
            tmp[i] = g[i] + h * k3[i];
        }
        self.eval(tmp, u, k4);
        for i in 0..dim {
            g[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    fn scratch(&self) -> [Vec<f64>; 5] {
        std::array::from_fn(|_| vec![0.0; self.dim])
    }

    /// Endpoint after the signal, `steps(duration)` RK4 steps per segment.
    fn endpoint(&self, g0: &[f64], segments: &[(f64, Vec<f64>)], steps: impl Fn(f64) -> usize) -> Vec<f64> {
        let mut g = g0.to_vec();
        let mut scratch = self.scratch();
        for (dt, u) in segments {
            let k = steps(*dt).max(1);
            let h = dt / k as f64;
            for _ in 0..k {
                self.rk4(&mut g, u, h, &mut scratch);
            }
        }
        g
    }
}

fn steps_for(step: f64) -> impl Fn(f64) -> usize {
    move |dt| (dt / step).ceil() as usize
}

/// RK4 with step at most `step` on every constant-control segment.
pub fn integrate(sys: &LinearSystem, g0: &GroupElement, signal: &ControlSignal, step: f64) -> Result<Trajectory> {
    integrate_in(sys, g0, signal, step, Direction::Forward)
}

pub fn integrate_in(
    sys: &LinearSystem,
    g0: &GroupElement,
    signal: &ControlSignal,
    step: f64,
    direction: Direction,
) -> Result<Trajectory> {
    if !(step > 0.0) {
        return Err(HeisError::InvalidArgument("step must be positive".into()));
    }
    check_dim(sys.n(), g0.n())?;
    check_dim(sys.m(), signal.m())?;
    let model = Model::new(sys, direction);
    let mut scratch = model.scratch();
    let mut g = g0.to_vector().as_slice().to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![g0.clone()];
    for (dt, u) in signal.segments() {
        let k = steps_for(step)(*dt).max(1);
        let h = dt / k as f64;
        for i in 0..k {
            model.rk4(&mut g, u, h, &mut scratch);
            times.push(t + h * (i + 1) as f64);
            states.push(GroupElement::from_slice(&g)?);
        }
        t += dt;
    }
    Ok(Trajectory { times, states })
}

/// Sampling parameters for reachable-set clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub horizon: f64,
    pub samples: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub step: f64,
    pub direction: Direction,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            horizon: 10.0,
            samples: 2000,
            amplitude: 10.0,
            seed: 0,
            step: DEFAULT_STEP,
            direction: Direction::Forward,
        }
    }
}

/// Random signal: 4 to 16 segments, total duration log-uniform in
/// `[horizon / 1000, horizon]`, values uniform in `[-amplitude, amplitude]`.
pub fn random_signal(rng: &mut ChaCha8Rng, m: usize, horizon: f64, amplitude: f64) -> ControlSignal {
    let k = rng.gen_range(4..=16);
    let total = horizon * 10f64.powf(rng.gen_range(-3.0..=0.0));
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = weights.iter().sum();
    let segments = weights
        .iter()
        .map(|w| {
            let u = (0..m).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
            (total * w / sum, u)
        })
        .collect();
    ControlSignal::new(segments).expect("positive durations")
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Endpoints from `e` of `samples` random signals; sample `i` draws from its
/// own stream, so the cloud does not depend on evaluation order.
pub fn sample_reachable(sys: &LinearSystem, opts: &SampleOptions) -> Result<Vec<GroupElement>> {
    if opts.samples == 0 || !(opts.horizon > 0.0) || !(opts.step > 0.0) {
        return Err(HeisError::InvalidArgument(
            "samples, horizon and step must be positive".into(),
        ));
    }
    let model = Model::new(sys, opts.direction);
    let e = vec![0.0; sys.dim()];
    (0..opts.samples)
        .map(|i| {
            let signal = sample_signal(opts, sys.m(), i);
            GroupElement::from_slice(&model.endpoint(&e, signal.segments(), steps_for(opts.step)))
        })
        .collect()
}

/// Signal of sample `index` in [`sample_reachable`].
pub fn sample_signal(opts: &SampleOptions, m: usize, index: usize) -> ControlSignal {
    random_signal(&mut stream(opts.seed, index as u64), m, opts.horizon, opts.amplitude)
}

/// `+-e_i` and normalized `+-e_i +- e_j`.
pub fn direction_net(dim: usize) -> Vec<Vector> {
    let mut out = Vec::new();
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = Vector::zeros(dim);
            v[i] = s;
            out.push(v);
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in (i + 1)..dim {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut v = Vector::zeros(dim);
                v[i] = si * h;
                v[j] = sj * h;
                out.push(v);
            }
        }
    }
    out
}

/// Outcome of a ball-coverage check around the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub radius: f64,
    pub targets: usize,
    /// Targets hit by the random cloud alone.
    pub from_cloud: usize,
    /// Targets hit by the cloud or by a refined shot.
    pub covered: usize,
    pub missing: Vec<Vector>,
}

impl Coverage {
    pub fn complete(&self) -> bool {
        self.covered == self.targets
    }
}

/// Every point of the direction net scaled to `radius` must have a reached
/// endpoint within `radius / 4`. Targets missed by the random cloud are
/// attacked by shooting; every counted point is the endpoint of an admissible
/// signal (amplitude and horizon respected) re-integrated at `opts.step`.
pub fn coverage(sys: &LinearSystem, opts: &SampleOptions, radius: f64) -> Result<Coverage> {
    let cloud = sample_reachable(sys, opts)?;
    let cloud: Vec<Vector> = cloud.iter().map(GroupElement::to_vector).collect();
    let targets: Vec<Vector> = direction_net(sys.dim()).into_iter().map(|v| v * radius).collect();
    let reach = radius / 4.0;
    let mut from_cloud = 0;
    let mut covered = 0;
    let mut missing = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        if cloud.iter().any(|p| (p - t).norm() <= reach) {
            from_cloud += 1;
            covered += 1;
            continue;
        }
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        order.sort_by(|&a, &b| (&cloud[a] - t).norm().total_cmp(&(&cloud[b] - t).norm()));
        let warm: Vec<ControlSignal> = order
            .iter()
            .take(SHOT_WARM_STARTS)
            .map(|&i| sample_signal(opts, sys.m(), i))
            .collect();
        let seed = opts.seed ^ 0x5eed_0000_0000 ^ k as u64;
        match shoot(sys, t, opts, reach, seed, &warm) {
            Some(_) => covered += 1,
            None => missing.push(t.clone()),
        }
    }
    Ok(Coverage {
        radius,
        targets: targets.len(),
        from_cloud,
        covered,
        missing,
    })
}

const SHOT_SEGMENTS: usize = 8;
const SHOT_COARSE_STEPS: usize = 25;
const SHOT_COARSE_H: f64 = 0.1;
const SHOT_WARM_STARTS: usize = 6;
const SHOT_COLD_STARTS: usize = 16;

/// Bounded parametrization of a piecewise-constant signal with `k` segments:
/// total duration `horizon * sigmoid(theta[0])`, split by `softmax` of one
/// weight per segment, values `amplitude * tanh(theta)`.
struct SignalMap {
    m: usize,
    k: usize,
    horizon: f64,
    amplitude: f64,
}

impl SignalMap {
    fn params(&self) -> usize {
        1 + self.k * (self.m + 1)
    }

    fn decode(&self, theta: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let total = self.horizon / (1.0 + (-theta[0]).exp());
        let weights: Vec<f64> = (0..self.k).map(|s| theta[1 + s * (self.m + 1) + self.m]).collect();
        let top = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = weights.iter().map(|w| (w - top).exp()).collect();
        let sum: f64 = exps.iter().sum();
        (0..self.k)
            .map(|s| {
                let base = 1 + s * (self.m + 1);
                let u = theta[base..base + self.m].iter().map(|v| self.amplitude * v.tanh()).collect();
                ((total * exps[s] / sum).max(1e-12), u)
            })
            .collect()
    }

    fn encode(&self, signal: &ControlSignal) -> Vec<f64> {
        let total = signal.duration();
        let frac = (total / self.horizon).clamp(1e-6, 1.0 - 1e-6);
        let mut theta = vec![(frac / (1.0 - frac)).ln()];
        for (dt, u) in signal.segments() {
            theta.extend(u.iter().map(|v| (v / self.amplitude).clamp(-0.995, 0.995).atanh()));
            theta.push((dt / total).ln());
        }
        theta
    }
}

fn coarse_steps(dt: f64) -> usize {
    SHOT_COARSE_STEPS.max((dt / SHOT_COARSE_H).ceil() as usize)
}

/// Levenberg–Marquardt on the endpoint map of a bounded signal
/// parametrization, so the amplitude and horizon limits hold by construction.
/// Starts from each of `warm` and then from random 6-segment signals. Returns
/// the signal and its endpoint re-integrated at `opts.step` when that
/// endpoint lies within `reach` of `target`.
pub fn shoot(
    sys: &LinearSystem,
    target: &Vector,
    opts: &SampleOptions,
    reach: f64,
    seed: u64,
    warm: &[ControlSignal],
) -> Option<(ControlSignal, GroupElement)> {
    let model = Model::new(sys, opts.direction);
    let m = sys.m();
    let e = vec![0.0; sys.dim()];
    let mut rng = stream(seed, 0);
    // alternate short and long total durations
    let cold = (0..SHOT_COLD_STARTS).map(|k| {
        let map = SignalMap { m, k: SHOT_SEGMENTS, horizon: opts.horizon, amplitude: opts.amplitude };
        let mut theta: Vec<f64> = (0..map.params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        theta[0] = if k % 2 == 0 { rng.gen_range(-4.0..0.0) } else { rng.gen_range(0.0..3.0) };
        (map, theta)
    });
    let warm = warm.iter().map(|sig| {
        let map = SignalMap { m, k: sig.segments().len(), horizon: opts.horizon, amplitude: opts.amplitude };
        let theta = map.encode(sig);
        (map, theta)
    });
    for (map, theta) in warm.collect::<Vec<_>>().into_iter().chain(cold) {
        let endpoint = |theta: &[f64]| Vector::from_vec(model.endpoint(&e, &map.decode(theta), coarse_steps));
        let Some(theta) = track(theta, &endpoint, target, reach) else {
            continue;
        };
        let Ok(signal) = ControlSignal::new(map.decode(&theta)) else {
            continue;
        };
        let end = Vector::from_vec(model.endpoint(&e, signal.segments(), steps_for(opts.step)));
        if (&end - target).norm() <= reach {
            return Some((signal, GroupElement::from_vector(&end).ok()?));
        }
    }
    None
}

const TRACK_STAGES: usize = 40;

/// Continuation: moves the goal from the start's endpoint to `target` in
/// stages of length about `2 * reach`, re-solving at each stage. Gives up
/// when a stage ends more than half a stage away from its goal.
fn track(
    mut theta: Vec<f64>,
    endpoint: &impl Fn(&[f64]) -> Vector,
    target: &Vector,
    reach: f64,
) -> Option<Vec<f64>> {
    let origin = endpoint(&theta);
    let gap = (target - &origin).norm();
    let stages = ((gap / (2.0 * reach)).ceil() as usize).clamp(1, TRACK_STAGES);
    for k in 1..=stages {
        let goal = &origin + (target - &origin) * (k as f64 / stages as f64);
        let last = k == stages;
        let tol = if last { reach * 0.05 } else { gap / stages as f64 * 0.1 };
        theta = levenberg_marquardt(theta, |t| endpoint(t) - &goal, tol, if last { 100 } else { 30 });
        let miss = (endpoint(&theta) - &goal).norm();
        if last {
            return (miss <= reach).then_some(theta);
        }
        if miss > gap / stages as f64 * 0.5 {
            return None;
        }
    }
    None
}

fn levenberg_marquardt(
    mut theta: Vec<f64>,
    residual: impl Fn(&[f64]) -> Vector,
    goal: f64,
    iterations: usize,
) -> Vec<f64> {
    let params = theta.len();
    let mut r = residual(&theta);
    let mut lambda = 1e-2;
    for _ in 0..iterations {
        if r.norm() <= goal {
            break;
        }
        let mut jac = Matrix::zeros(r.len(), params);
        for p in 0..params {
            let h = 1e-6 * theta[p].abs().max(1.0);
            let mut probe = theta.clone();
            probe[p] += h;
            jac.set_column(p, &((residual(&probe) - &r) / h));
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..params {
                a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let rt = residual(&trial);
            if rt.norm() < r.norm() {
                theta = trial;
                r = rt;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    theta
}

/// Samples states on the surface `w = -mu/d` (in the certificate's frame) and
/// random inputs, and checks that `w' >= 0` there. `w'` is obtained from the
/// controlled field in the system's coordinates by the chain rule and must
/// also agree with the certificate's `-mu + l'(v) + v^T Q' v`.
pub fn check_hyperplane(sys: &LinearSystem, cert: &ObstructionCertificate, samples: usize, seed: u64) -> bool {
    let n = sys.n();
    let k = 2 * n;
    let frame = cert.frame.columns();
    let Some(frame_inv) = frame.clone().try_inverse() else {
        return false;
    };
    if cert.s.nrows() != k || cert.p.len() != k || !(cert.d.abs() > 0.0) {
        return false;
    }
    let pinv = linalg::pinv_sym(&cert.qprime, sys.tolerance());
    let v_star = -(&pinv * &cert.lprime) * 0.5;
    let level = cert.threshold();
    let mut rng = stream(seed, 0);
    for _ in 0..samples {
        let v: Vector = if rng.gen_bool(0.5) {
            let spread = 10f64.powf(rng.gen_range(-3.0..0.0));
            Vector::from_fn(k, |i, _| v_star[i] + spread * rng.gen_range(-1.0..1.0))
        } else {
            let spread = 10f64.powf(rng.gen_range(-2.0..1.0));
            Vector::from_fn(k, |_, _| spread * rng.gen_range(-1.0..1.0))
        };
        let u: Vec<f64> = (0..sys.m()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let z_new = level - 0.5 * v.dot(&(&cert.s * &v)) - cert.p.dot(&v);
        let mut g_new = Vector::zeros(k + 1);
        g_new.rows_mut(0, k).copy_from(&v);
        g_new[k] = z_new;

        let a_new = group_log(&GroupElement::from_vector(&g_new).expect("odd length")).to_vector();
        let a_old = frame * &a_new;
        let g_old = group_exp(&AlgebraElement::from_vector(&a_old).expect("odd length"));
        let Ok(gdot_old) = controlled_field(sys, &g_old, &u) else {
            return false;
        };
        let da_old = log_differential(&g_old.to_vector(), &gdot_old);
        let da_new = &frame_inv * da_old;
        let gdot_new = exp_differential(&a_new, &da_new);

        let vdot = gdot_new.rows(0, k).into_owned();
        let grad = &cert.s * &v + &cert.p;
        let wdot = gdot_new[k] + grad.dot(&vdot);
        let lin = cert.lprime.dot(&v);
        let quad = v.dot(&(&cert.qprime * &v));
        let recon = -cert.mu + lin + quad;
        let scale = 1.0 + cert.mu.abs() + lin.abs() + quad.abs() + gdot_new[k].abs() + grad.norm() * vdot.norm();
        if wdot < -1e-8 * scale || recon < -1e-8 * scale || (wdot - recon).abs() > 1e-7 * scale {
            return false;
        }
    }
    true
}

/// Tangent map of `log` at `g`: `(dx, dy, dz - (<dx, y> + <x, dy>)/2)`.
fn log_differential(g: &Vector, dg: &Vector) -> Vector {
    let n = g.len() / 2;
    let mut out = dg.clone();
    for i in 0..n {
        out[2 * n] -= 0.5 * (dg[2 * i] * g[2 * i + 1] + g[2 * i] * dg[2 * i + 1]);
    }
    out
}

/// Tangent map of `exp` at `a`: `(dx, dy, dz + (<dx, y> + <x, dy>)/2)`.
fn exp_differential(a: &Vector, da: &Vector) -> Vector {
    let n = a.len() / 2;
    let mut out = da.clone();
    for i in 0..n {
        out[2 * n] += 0.5 * (da[2 * i] * a[2 * i + 1] + a[2 * i] * da[2 * i + 1]);
    }
    out
}
