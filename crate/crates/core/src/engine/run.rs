use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::alloc::{allocate_input_targets, allocate_simulation_rates};
use super::{
    allocate_input_equal, allocate_input_stage, allocate_simulation_equal, allocate_simulation_stage,
    AllocationState, BalanceInputs, JbaPlan, Partition, Problem, Procedure, RunSettings, StageHistory,
    StageRecord, StageSnapshot,
};
use crate::error::{Error, Result};
use crate::estimators::{quadratic_form, EstimatorBank};
use crate::input::{Sampler, Scenario};
use crate::models::SimulationModel;
use crate::rate::{solve_input_allocation, solve_input_allocation_warm, PaeProblem};
use crate::rng::{Lane, ReplicationSeed};
use crate::scalar::Scalar;

pub fn run<F: Scalar, M: SimulationModel<F>>(
    procedure: Procedure,
    problem: &Problem<F, M>,
    settings: &RunSettings<F>,
) -> Result<StageHistory<F>> {
    match procedure {
        Procedure::Sba => run_sba(problem, settings),
        Procedure::Equal => run_equal(problem, settings),
        Procedure::Jba => run_jba(problem, settings),
    }
}

struct Runner<'a, F: Scalar, M> {
    problem: &'a Problem<F, M>,
    settings: &'a RunSettings<F>,
    bank: EstimatorBank<F>,
    state: AllocationState,
    truth: Vec<Sampler>,
    seed: ReplicationSeed,
    history: StageHistory<F>,
    scenario: Scenario<F>,
}

impl<'a, F: Scalar, M: SimulationModel<F>> Runner<'a, F, M> {
    fn start(procedure: Procedure, problem: &'a Problem<F, M>, settings: &'a RunSettings<F>) -> Result<Self> {
        problem.validate()?;
        settings.validate()?;
        if settings.oracle_mode && procedure != Procedure::Sba {
            return Err(Error::Unsupported(format!("oracle mode applies to sba only, not {procedure}")));
        }
        let layout = &problem.layout;
        let (s, k) = (layout.stream_count(), layout.design_count());
        let truth = layout
            .families
            .iter()
            .zip(&problem.theta)
            .map(|(f, th)| f.sampler(th))
            .collect::<Result<Vec<_>>>()?;
        let bank = EstimatorBank::new(&layout.families, k, settings.floors);
        let scenario = Scenario::with_shape(s, problem.model.draws_per_stream());
        let mut runner = Self {
            problem,
            settings,
            bank,
            state: AllocationState::new(s, k, settings.n0, settings.m0),
            truth,
            seed: ReplicationSeed::new(settings.seed, settings.replication),
            history: StageHistory {
                procedure,
                initial_selection: 0,
                records: Vec::with_capacity(settings.stages),
                snapshots: Vec::new(),
                final_state: AllocationState::new(s, k, settings.n0, settings.m0),
                final_bank: Default::default(),
                jba: None,
                oracle_rates: None,
            },
            scenario,
        };
        let draws = vec![settings.n0; s];
        runner.collect(0, &draws)?;
        let sims = vec![settings.m0; k];
        runner.simulate(0, &sims)?;
        runner.history.initial_selection = runner.bank.best_design()?;
        runner.snapshot(0, None)?;
        Ok(runner)
    }

    /// Draws `counts[s]` new observations of every stream from the truth.
    fn collect(&mut self, stage: usize, counts: &[u64]) -> Result<()> {
        let mut buf = Vec::new();
        for (s, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let mut rng = self.seed.substream(stage as u64, Lane::Input, s as u64);
            buf.clear();
            buf.extend((0..n).map(|_| self.truth[s].draw::<F>(&mut rng)));
            self.bank.update_input(s, &buf)?;
        }
        Ok(())
    }

    /// Runs `counts[i]` replications of every design under the current
    /// estimate and pushes outputs with their scores.
    fn simulate(&mut self, stage: usize, counts: &[u64]) -> Result<()> {
        if counts.iter().all(|&m| m == 0) {
            return Ok(());
        }
        let layout = &self.problem.layout;
        let theta = self.bank.theta_all()?;
        let samplers = layout
            .families
            .iter()
            .zip(&theta)
            .map(|(f, th)| f.sampler(th))
            .collect::<Result<Vec<_>>>()?;
        let per = self.problem.model.draws_per_stream();
        let p = self.bank.param_len();
        let ranges: Vec<_> = (0..layout.stream_count()).map(|s| self.bank.param_range(s)).collect();
        let mut outputs = Vec::new();
        let mut scores = Vec::new();
        for (i, &m) in counts.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let mut rng = self.seed.substream(stage as u64, Lane::Simulation, i as u64);
            outputs.clear();
            scores.clear();
            for _ in 0..m {
                self.scenario.refill(&samplers, per, &mut rng);
                outputs.push(self.problem.model.evaluate(i, &self.scenario, &mut rng)?);
                let start = scores.len();
                scores.resize(start + p, F::zero());
                let row = &mut scores[start..];
                for (s, fam) in layout.families.iter().enumerate() {
                    fam.accumulate_score(&theta[s], self.scenario.stream(s), &mut row[ranges[s].clone()]);
                }
            }
            self.bank.update_output_flat(i, &outputs, &scores)?;
        }
        Ok(())
    }

    fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.state.input_counts.hash(&mut h);
        self.state.sim_counts.hash(&mut h);
        for i in 0..self.bank.design_count() {
            if let Ok(m) = self.bank.mean(i) {
                m.as_f64().to_bits().hash(&mut h);
            }
        }
        for s in 0..self.bank.stream_count() {
            if let Ok(th) = self.bank.theta(s) {
                for v in th {
                    v.as_f64().to_bits().hash(&mut h);
                }
            }
        }
        h.finish()
    }

    fn snapshot(&mut self, stage: usize, rates: Option<&[F]>) -> Result<()> {
        if let Some(every) = self.settings.snapshot_every {
            if stage.is_multiple_of(every) {
                self.history.snapshots.push(StageSnapshot {
                    stage,
                    state: self.state.clone(),
                    bank: self.bank.snapshot()?,
                    input_rates: rates.map(<[F]>::to_vec),
                });
            }
        }
        Ok(())
    }

    /// Runs the stage's simulations, then collects its input data, and
    /// records the resulting selection.
    fn execute(&mut self, t: usize, rates: Option<&[F]>) -> Result<()> {
        let sims = self.state.sim_increments.clone();
        let draws = self.state.input_increments.clone();
        self.simulate(t, &sims)?;
        self.collect(t, &draws)?;
        self.state.stage = t;
        let selected = self.bank.best_design()?;
        let digest = self.digest();
        self.history.records.push(StageRecord {
            stage: t,
            selected,
            input_increments: draws,
            sim_increments: sims,
            digest,
        });
        self.snapshot(t, rates)
    }

    fn finish(mut self) -> Result<StageHistory<F>> {
        self.history.final_state = self.state;
        self.history.final_bank = self.bank.snapshot()?;
        Ok(self.history)
    }

    fn sim_target(&self, stages: usize) -> F {
        F::of_count(stages as u64) * self.problem.layout.sim_budget
    }
}

/// Input-allocation problem over the suboptimal designs of `inputs`.
fn pae_problem<F: Scalar>(inputs: &BalanceInputs<F>, layout: &super::StreamLayout<F>) -> PaeProblem<F> {
    let rows: Vec<usize> = (0..inputs.sq_gaps.len()).filter(|&i| i != inputs.best).collect();
    PaeProblem {
        sq_gaps: rows.iter().map(|&i| inputs.sq_gaps[i]).collect(),
        weights: rows.iter().map(|&i| inputs.g[i].clone()).collect(),
        costs: layout.costs.clone(),
        partitions: layout.partitions.clone(),
    }
}

/// True balance quantities at the true input parameters.
fn truth_inputs<F: Scalar, M: SimulationModel<F>>(problem: &Problem<F, M>) -> Result<BalanceInputs<F>> {
    let model = &problem.model;
    let k = model.design_count();
    let moments = (0..k)
        .map(|i| {
            model
                .true_moments(i, &problem.theta)
                .unwrap_or_else(|| Err(Error::Unsupported("oracle mode needs closed-form design moments".into())))
        })
        .collect::<Result<Vec<_>>>()?;
    let covs = problem
        .layout
        .families
        .iter()
        .zip(&problem.theta)
        .map(|(f, th)| f.moment_covariance(th))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for i in 1..k {
        if moments[i].mean > moments[best].mean {
            best = i;
        }
    }
    let mut offsets = Vec::new();
    let mut off = 0;
    for f in &problem.layout.families {
        offsets.push(off..off + f.param_dim());
        off += f.param_dim();
    }
    let g = (0..k)
        .map(|i| {
            if i == best {
                return vec![F::zero(); covs.len()];
            }
            offsets
                .iter()
                .zip(&covs)
                .map(|(r, cov)| {
                    quadratic_form(cov, &moments[best].gradient[r.clone()], &moments[i].gradient[r.clone()])
                })
                .collect()
        })
        .collect();
    Ok(BalanceInputs {
        best,
        sq_gaps: moments
            .iter()
            .map(|m| {
                let d = moments[best].mean - m.mean;
                d * d
            })
            .collect(),
        variances: moments.iter().map(|m| m.variance).collect(),
        g,
    })
}

/// Simultaneous allocation of the input budgets and the simulation budget.
pub fn run_sba<F: Scalar, M: SimulationModel<F>>(
    problem: &Problem<F, M>,
    settings: &RunSettings<F>,
) -> Result<StageHistory<F>> {
    let mut r = Runner::start(Procedure::Sba, problem, settings)?;
    let layout = &problem.layout;
    let k = layout.design_count();
    let oracle = if settings.oracle_mode {
        let inputs = truth_inputs(problem)?;
        let sol = solve_input_allocation(&pae_problem(&inputs, layout), &settings.solver)?;
        r.history.oracle_rates = Some(sol.rates.clone());
        Some((inputs, sol.rates))
    } else {
        None
    };
    // dual weights indexed by design, carried across stages
    let mut warm: Vec<F> = vec![F::zero(); k];
    for t in 1..=settings.stages {
        let (inputs, rates) = match &oracle {
            Some((inputs, rates)) => (inputs.clone(), rates.clone()),
            None => {
                let inputs = BalanceInputs::from_bank(&r.bank, None)?;
                let prob = pae_problem(&inputs, layout);
                let rows: Vec<usize> = (0..k).filter(|&i| i != inputs.best).collect();
                let seed: Vec<F> = rows.iter().map(|&i| warm[i]).collect();
                let have_warm = t > 1 && seed.iter().any(|&w| w > F::zero());
                let sol = solve_input_allocation_warm(&prob, &settings.solver, have_warm.then_some(&seed[..]))?;
                warm.iter_mut().for_each(|w| *w = F::zero());
                for (&i, &w) in rows.iter().zip(&sol.dual_weights) {
                    warm[i] = w;
                }
                (inputs, sol.rates)
            }
        };
        allocate_input_stage(t, &rates, layout, &mut r.state);
        allocate_simulation_stage(r.sim_target(t), &inputs, layout, &mut r.state, settings.rate_balance);
        r.execute(t, Some(&rates))?;
    }
    r.finish()
}

/// Equal spend across the streams of each partition and across designs.
pub fn run_equal<F: Scalar, M: SimulationModel<F>>(
    problem: &Problem<F, M>,
    settings: &RunSettings<F>,
) -> Result<StageHistory<F>> {
    let mut r = Runner::start(Procedure::Equal, problem, settings)?;
    let layout = &problem.layout;
    for t in 1..=settings.stages {
        allocate_input_equal(t, layout, &mut r.state);
        allocate_simulation_equal(r.sim_target(t), layout, &mut r.state);
        r.execute(t, None)?;
    }
    r.finish()
}

/// Joint budget allocation: one plan from the pilot estimates splits a
/// single budget of `M T` between the actively collected streams and the
/// designs; input data are collected first, simulation follows. Given
/// streams are left out of the plan but keep arriving.
pub fn run_jba<F: Scalar, M: SimulationModel<F>>(
    problem: &Problem<F, M>,
    settings: &RunSettings<F>,
) -> Result<StageHistory<F>> {
    let mut r = Runner::start(Procedure::Jba, problem, settings)?;
    let layout = &problem.layout;
    let s_count = layout.stream_count();
    let mask = layout.active_mask();
    let pilot = BalanceInputs::from_bank(&r.bank, Some(&mask))?;
    let plan = jba_plan(&pilot, layout, &mask, settings.stages, &settings.solver)?;

    // per-stage rates of the active streams over the input phase
    let stages_in = plan.input_stages;
    let mut rates = vec![F::zero(); s_count];
    if stages_in > 0 {
        for s in (0..s_count).filter(|&s| mask[s]) {
            rates[s] = plan.input_targets[s] / F::of_count(stages_in as u64);
        }
    }
    let given_rates: Vec<F> = (0..s_count)
        .map(|s| {
            let p = layout.partitions.iter().find(|p| p.streams.contains(&s)).expect("validated layout");
            p.budget / layout.costs[s]
        })
        .collect();
    for t in 1..=settings.stages {
        let tf = F::of_count(t as u64);
        let in_phase = t <= stages_in;
        let targets: Vec<Option<F>> = layout
            .partitions
            .iter()
            .map(|p: &Partition<F>| {
                if p.given {
                    Some(tf * p.budget)
                } else if in_phase {
                    let stage_spend =
                        p.streams.iter().fold(F::zero(), |a, &s| a + layout.costs[s] * rates[s]);
                    Some(tf * stage_spend)
                } else {
                    None
                }
            })
            .collect();
        let stage_rates: Vec<F> = (0..s_count).map(|s| if mask[s] { rates[s] } else { given_rates[s] }).collect();
        allocate_input_targets(t, &stage_rates, &targets, layout, &mut r.state);
        if in_phase {
            r.state.sim_increments.iter_mut().for_each(|x| *x = 0);
        } else {
            let inputs = BalanceInputs::from_bank(&r.bank, Some(&mask))?;
            let target = r.sim_target(t - stages_in);
            allocate_simulation_stage(target, &inputs, layout, &mut r.state, settings.rate_balance);
        }
        r.execute(t, None)?;
    }
    r.history.jba = Some(plan);
    r.finish()
}

/// Solves the joint plan: variables are the active streams, priced so that
/// one stage of a partition's budget costs as much as one stage of
/// simulation, and the designs at their simulation costs.
fn jba_plan<F: Scalar>(
    pilot: &BalanceInputs<F>,
    layout: &super::StreamLayout<F>,
    mask: &[bool],
    stages: usize,
    solver: &crate::rate::SolverOptions<F>,
) -> Result<JbaPlan<F>> {
    let s_count = layout.stream_count();
    let k = layout.design_count();
    let active: Vec<usize> = (0..s_count).filter(|&s| mask[s]).collect();
    let m = layout.sim_budget;
    let mut costs = Vec::with_capacity(active.len() + k);
    for &s in &active {
        let p = layout.partitions.iter().find(|p| p.streams.contains(&s)).expect("validated layout");
        costs.push(layout.costs[s] * m / p.budget);
    }
    costs.extend(layout.sim_costs.iter().copied());
    let b = pilot.best;
    let rows: Vec<usize> = (0..k).filter(|&i| i != b).collect();
    let weights = rows
        .iter()
        .map(|&i| {
            let mut w: Vec<F> = active.iter().map(|&s| pilot.g[i][s]).collect();
            let mut sims = vec![F::zero(); k];
            sims[i] = pilot.variances[i];
            sims[b] = pilot.variances[b];
            w.extend(sims);
            w
        })
        .collect();
    let total = F::of_count(stages as u64) * m;
    let mut input_targets = vec![F::zero(); s_count];
    let mut sim_targets = vec![F::zero(); k];
    let mut input_stages = 0;
    if stages > 0 && k > 1 {
        let prob = PaeProblem {
            sq_gaps: rows.iter().map(|&i| pilot.sq_gaps[i]).collect(),
            weights,
            costs: costs.clone(),
            partitions: vec![Partition::new((0..costs.len()).collect(), total)],
        };
        let sol = solve_input_allocation(&prob, solver)?;
        let mut input_spend = F::zero();
        for (v, &s) in active.iter().enumerate() {
            input_targets[s] = sol.rates[v];
            input_spend = input_spend + costs[v] * sol.rates[v];
        }
        sim_targets.copy_from_slice(&sol.rates[active.len()..]);
        let raw = (input_spend / m).round().as_f64();
        input_stages = (raw.max(0.0) as usize).min(stages);
    }
    Ok(JbaPlan { pilot_best: b, input_stages, input_targets, sim_targets })
}

/// Fixed per-stage rates for every stream and design.
pub fn run_static<F: Scalar, M: SimulationModel<F>>(
    problem: &Problem<F, M>,
    settings: &RunSettings<F>,
    input_rates: &[F],
    sim_rates: &[F],
) -> Result<StageHistory<F>> {
    let layout = &problem.layout;
    if input_rates.len() != layout.stream_count() || sim_rates.len() != layout.design_count() {
        return Err(Error::Config("static rates do not match the layout".into()));
    }
    let mut r = Runner::start(Procedure::Sba, problem, settings)?;
    for t in 1..=settings.stages {
        allocate_input_stage(t, input_rates, layout, &mut r.state);
        allocate_simulation_rates(t, sim_rates, layout, &mut r.state);
        r.execute(t, Some(input_rates))?;
    }
    r.finish()
}

/// The input-allocation problem an SBA run would solve at its first stage:
/// plug-in estimates after initialization, or the true quantities in oracle
/// mode.
pub fn input_problem<F: Scalar, M: SimulationModel<F>>(
    problem: &Problem<F, M>,
    settings: &RunSettings<F>,
) -> Result<PaeProblem<F>> {
    let inputs = if settings.oracle_mode {
        problem.validate()?;
        truth_inputs(problem)?
    } else {
        let r = Runner::start(Procedure::Sba, problem, settings)?;
        BalanceInputs::from_bank(&r.bank, None)?
    };
    Ok(pae_problem(&inputs, &problem.layout))
}
