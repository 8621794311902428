//! Lumped thermal models of the incubator.
//!
//! Model A treats the boxed air as a single heat capacity heated directly by
//! the heatbed and losing heat through the box walls. Model B adds a second
//! capacity for the heatbed itself, coupled to the air through its own
//! conductance. Temperatures are in °C; only differences enter the dynamics,
//! so kelvin and celsius are interchangeable.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default heatbed electrical power in watts.
pub const DEFAULT_POWER_W: f64 = 100.0;
/// Default integration substep in seconds.
pub const DEFAULT_SUBSTEP: f64 = 0.5;

fn check_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {value}")))
    }
}

/// Parameters of the single-capacity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelAParams {
    /// Heat capacity of the boxed air, J/K.
    pub c_air: f64,
    /// Box-to-room conductance, J/(K·s).
    pub g_box: f64,
}

impl ModelAParams {
    /// Values fitted on the reference incubator.
    pub const CALIBRATED: ModelAParams = ModelAParams { c_air: 616.56, g_box: 0.65 };

    pub fn new(c_air: f64, g_box: f64) -> Result<Self> {
        let p = ModelAParams { c_air, g_box };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("c_air", self.c_air)?;
        check_positive("g_box", self.g_box)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.c_air, self.g_box]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [c_air, g_box] => Self::new(*c_air, *g_box),
            _ => Err(Error::InvalidArgument(format!("model A takes 2 parameters, got {}", v.len()))),
        }
    }
}

/// Parameters of the two-capacity (air + heatbed) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelBParams {
    /// Heat capacity of the boxed air, J/K.
    pub c_air: f64,
    /// Box-to-room conductance, J/(K·s).
    pub g_box: f64,
    /// Heat capacity of the heatbed, J/K.
    pub c_heater: f64,
    /// Heatbed-to-air conductance, J/(K·s).
    pub g_heater: f64,
}

impl ModelBParams {
    /// Values fitted on the reference incubator.
    pub const CALIBRATED: ModelBParams =
        ModelBParams { c_air: 486.12, g_box: 0.856, c_heater: 33.65, g_heater: 0.87 };

    pub fn new(c_air: f64, g_box: f64, c_heater: f64, g_heater: f64) -> Result<Self> {
        let p = ModelBParams { c_air, g_box, c_heater, g_heater };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("c_air", self.c_air)?;
        check_positive("g_box", self.g_box)?;
        check_positive("c_heater", self.c_heater)?;
        check_positive("g_heater", self.g_heater)
    }

    /// Order: c_air, g_box, c_heater, g_heater.
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.c_air, self.g_box, self.c_heater, self.g_heater]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v {
            [c_air, g_box, c_heater, g_heater] => Self::new(*c_air, *g_box, *c_heater, *g_heater),
            _ => Err(Error::InvalidArgument(format!("model B takes 4 parameters, got {}", v.len()))),
        }
    }

    /// Multiplies every parameter by `k`.
    pub fn scaled(&self, k: f64) -> ModelBParams {
        ModelBParams {
            c_air: self.c_air * k,
            g_box: self.g_box * k,
            c_heater: self.c_heater * k,
            g_heater: self.g_heater * k,
        }
    }
}

/// Heater drive and ambient conditions, held constant over a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantInput {
    /// Heater electrical power V·I when switched on, W.
    pub power_w: f64,
    pub heater_on: bool,
    /// Room temperature, °C.
    pub t_room: f64,
}

impl PlantInput {
    pub fn new(power_w: f64, heater_on: bool, t_room: f64) -> Self {
        PlantInput { power_w, heater_on, t_room }
    }

    /// Power actually delivered to the heatbed.
    pub fn heat_in(&self) -> f64 {
        if self.heater_on {
            self.power_w
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        check_finite("power_w", self.power_w)?;
        check_finite("t_room", self.t_room)?;
        if self.power_w < 0.0 {
            return Err(Error::InvalidArgument(format!("power_w must be >= 0, got {}", self.power_w)));
        }
        Ok(())
    }
}

/// Lumped temperatures. Model A ignores `t_heater`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub t_bair: f64,
    pub t_heater: f64,
}

impl ThermalState {
    pub fn new(t_bair: f64, t_heater: f64) -> Self {
        ThermalState { t_bair, t_heater }
    }

    /// Air and heatbed at the same temperature.
    pub fn uniform(t: f64) -> Self {
        ThermalState { t_bair: t, t_heater: t }
    }

    fn validate(&self) -> Result<()> {
        check_finite("t_bair", self.t_bair)?;
        check_finite("t_heater", self.t_heater)
    }

    pub fn is_finite(&self) -> bool {
        self.t_bair.is_finite() && self.t_heater.is_finite()
    }
}

/// Air temperature rate of Model A, K/s.
pub fn model_a_derivative(state: &ThermalState, input: &PlantInput, params: &ModelAParams) -> Result<f64> {
    params.validate()?;
    input.validate()?;
    check_finite("t_bair", state.t_bair)?;
    Ok(model_a_rate(state.t_bair, input, params))
}

#[inline]
fn model_a_rate(t_bair: f64, input: &PlantInput, p: &ModelAParams) -> f64 {
    (input.heat_in() - p.g_box * (t_bair - input.t_room)) / p.c_air
}

/// Heatbed and air temperature rates of Model B, `(rate_heater, rate_air)` in K/s.
pub fn model_b_derivative(
    state: &ThermalState,
    input: &PlantInput,
    params: &ModelBParams,
) -> Result<(f64, f64)> {
    params.validate()?;
    input.validate()?;
    state.validate()?;
    Ok(model_b_rate(state, input, params))
}

#[inline]
fn model_b_rate(s: &ThermalState, input: &PlantInput, p: &ModelBParams) -> (f64, f64) {
    let heater_to_air = p.g_heater * (s.t_heater - s.t_bair);
    let rate_heater = (input.heat_in() - heater_to_air) / p.c_heater;
    let rate_air = (heater_to_air - p.g_box * (s.t_bair - input.t_room)) / p.c_air;
    (rate_heater, rate_air)
}

/// Heat needed to raise `mass_kg` of material by `delta_t_k`: Q = c·m·ΔT.
pub fn heat_energy(mass_kg: f64, specific_heat_j_per_kg_k: f64, delta_t_k: f64) -> Result<f64> {
    check_finite("mass_kg", mass_kg)?;
    check_finite("specific_heat", specific_heat_j_per_kg_k)?;
    check_finite("delta_t", delta_t_k)?;
    if mass_kg < 0.0 || specific_heat_j_per_kg_k < 0.0 {
        return Err(Error::InvalidArgument("mass and specific heat must be non-negative".into()));
    }
    Ok(specific_heat_j_per_kg_k * mass_kg * delta_t_k)
}

/// Explicit fixed-step integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Which lumped model to simulate, with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    A(ModelAParams),
    B(ModelBParams),
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        match self {
            Model::A(p) => p.validate(),
            Model::B(p) => p.validate(),
        }
    }

    /// Time derivative of the full state. Model A leaves the heatbed
    /// temperature tracking the air.
    #[inline]
    pub fn rates(&self, s: &ThermalState, input: &PlantInput) -> ThermalState {
        match self {
            Model::A(p) => {
                let r = model_a_rate(s.t_bair, input, p);
                ThermalState { t_bair: r, t_heater: r }
            }
            Model::B(p) => {
                let (rh, ra) = model_b_rate(s, input, p);
                ThermalState { t_bair: ra, t_heater: rh }
            }
        }
    }

    /// Advances `state` by one step of length `h` with a constant input.
    #[inline]
    pub fn step(&self, state: &ThermalState, input: &PlantInput, h: f64, method: Method) -> ThermalState {
        let axpy = |s: &ThermalState, k: &ThermalState, a: f64| ThermalState {
            t_bair: s.t_bair + a * k.t_bair,
            t_heater: s.t_heater + a * k.t_heater,
        };
        match method {
            Method::Euler => axpy(state, &self.rates(state, input), h),
            Method::Rk4 => {
                let k1 = self.rates(state, input);
                let k2 = self.rates(&axpy(state, &k1, h / 2.0), input);
                let k3 = self.rates(&axpy(state, &k2, h / 2.0), input);
                let k4 = self.rates(&axpy(state, &k3, h), input);
                ThermalState {
                    t_bair: state.t_bair + h / 6.0 * (k1.t_bair + 2.0 * k2.t_bair + 2.0 * k3.t_bair + k4.t_bair),
                    t_heater: state.t_heater
                        + h / 6.0 * (k1.t_heater + 2.0 * k2.t_heater + 2.0 * k3.t_heater + k4.t_heater),
                }
            }
        }
    }

    /// Advances by `duration` using euler substeps no longer than `substep`.
    pub fn advance(&self, state: &ThermalState, input: &PlantInput, duration: f64, substep: f64) -> ThermalState {
        let mut s = *state;
        let mut remaining = duration;
        while remaining > 1e-12 {
            let h = remaining.min(substep);
            s = self.step(&s, input, h, Method::Euler);
            remaining -= h;
        }
        s
    }
}

/// Step function of inputs over time. The input at `t` is the one attached
/// to the last breakpoint at or before `t`; before the first breakpoint the
/// first input applies.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSchedule {
    breakpoints: Vec<(f64, PlantInput)>,
}

impl InputSchedule {
    pub fn constant(input: PlantInput) -> Self {
        InputSchedule { breakpoints: vec![(0.0, input)] }
    }

    pub fn new(mut breakpoints: Vec<(f64, PlantInput)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidArgument("input schedule needs at least one breakpoint".into()));
        }
        for (t, input) in &breakpoints {
            check_finite("breakpoint time", *t)?;
            input.validate()?;
        }
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(InputSchedule { breakpoints })
    }

    pub fn at(&self, t: f64) -> PlantInput {
        let idx = self.breakpoints.partition_point(|(bt, _)| *bt <= t);
        self.breakpoints[idx.saturating_sub(1)].1
    }
}

/// One recorded or simulated sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Seconds.
    pub t: f64,
    pub state: ThermalState,
    /// Input applied from `t` until the next sample.
    pub input: PlantInput,
}

/// Time-ordered samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    samples: Vec<Sample>,
    /// False when the heatbed temperature is unknown (Model A output,
    /// measured data).
    heater_known: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    t: f64,
    t_bair: f64,
    t_heater: Option<f64>,
    t_room: f64,
    heater_on: bool,
    power_w: f64,
}

impl Trajectory {
    pub fn new(heater_known: bool) -> Self {
        Trajectory { samples: Vec::new(), heater_known }
    }

    pub fn from_samples(samples: Vec<Sample>, heater_known: bool) -> Result<Self> {
        let mut traj = Trajectory::new(heater_known);
        for s in samples {
            traj.push(s)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if !sample.t.is_finite() {
            return Err(Error::InvalidArgument("sample time must be finite".into()));
        }
        if let Some(last) = self.samples.last() {
            if sample.t <= last.t {
                return Err(Error::InvalidArgument(format!(
                    "timestamps must be strictly increasing ({} after {})",
                    sample.t, last.t
                )));
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn heater_known(&self) -> bool {
        self.heater_known
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let rec = SampleRecord {
                t: s.t,
                t_bair: s.state.t_bair,
                t_heater: self.heater_known.then_some(s.state.t_heater),
                t_room: s.input.t_room,
                heater_on: s.input.heater_on,
                power_w: s.input.power_w,
            };
            out.push_str(&serde_json::to_string(&rec).expect("sample record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`Trajectory::to_jsonl`]. Blank lines are
    /// skipped. The heatbed temperature counts as known only if every line
    /// carries one.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        let mut heater_known = true;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(line)
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", lineno + 1)))?;
            heater_known &= rec.t_heater.is_some();
            samples.push(Sample {
                t: rec.t,
                state: ThermalState { t_bair: rec.t_bair, t_heater: rec.t_heater.unwrap_or(rec.t_bair) },
                input: PlantInput { power_w: rec.power_w, heater_on: rec.heater_on, t_room: rec.t_room },
            });
        }
        Trajectory::from_samples(samples, heater_known && !text.trim().is_empty())
    }
}

/// Fixed-step explicit integration from t = 0 to `t_end`, recording every
/// step. The last step is shortened so the final sample lands on `t_end`.
pub fn integrate(
    model: &Model,
    initial: ThermalState,
    schedule: &InputSchedule,
    t_end: f64,
    dt: f64,
    method: Method,
) -> Result<Trajectory> {
    model.validate()?;
    initial.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be non-negative, got {t_end}")));
    }
    let n_full = (t_end / dt).floor() as usize;
    let mut traj = Trajectory::new(matches!(model, Model::B(_)));
    traj.samples.reserve(n_full + 2);
    let mut t = 0.0;
    let mut state = initial;
    let mut k = 0usize;
    loop {
        let input = schedule.at(t);
        traj.samples.push(Sample { t, state, input });
        if t >= t_end {
            break;
        }
        let next_t = ((k + 1) as f64 * dt).min(t_end);
        state = model.step(&state, &input, next_t - t, method);
        t = next_t;
        k += 1;
        // guard against a sub-ulp final step
        if t_end - t < 1e-12 * t_end.max(1.0) {
            t = t_end;
        }
    }
    Ok(traj)
}
