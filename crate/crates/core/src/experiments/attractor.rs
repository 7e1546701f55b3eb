use log::warn;

use crate::exec::Execution;
use crate::integrator::{integrate_observed, trailing_start};
use crate::lattice::{Forcing, LatticeState, ModelParams};
use crate::regimes::{classify_regime, closeness_constants, RegimeLabel};

use super::{ExperimentError, InitialFamily, StudySettings, TRAILING_FRACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemTag {
    Ldgl,
    Nldgl,
}

impl SystemTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemTag::Ldgl => "LDGL",
            SystemTag::Nldgl => "NLDGL",
        }
    }

    /// The preset of `params` that this tag integrates.
    pub fn params(self, params: &ModelParams) -> ModelParams {
        match self {
            SystemTag::Ldgl => params.as_local(),
            SystemTag::Nldgl => params.as_nonlocal(),
        }
    }
}

/// Snapshot schedule: keep every `stride` after `transient_cut`, up to
/// `horizon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPlan {
    pub transient_cut: f64,
    pub stride: f64,
    pub horizon: f64,
}

impl SamplingPlan {
    fn validate(&self) -> Result<(), ExperimentError> {
        let ok = self.transient_cut >= 0.0
            && self.stride > 0.0
            && self.horizon.is_finite()
            && self.horizon > self.transient_cut + self.stride;
        if ok {
            Ok(())
        } else {
            Err(ExperimentError::InvalidInput(format!(
                "sampling plan needs 0 <= transient_cut, stride > 0 and at least one stride \
                 past the cut (got {self:?})"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSample {
    pub points: Vec<LatticeState>,
    pub times: Vec<f64>,
    /// Index of the seed each point came from.
    pub seed_index: Vec<usize>,
    pub transient_cut: f64,
    pub stride: f64,
    pub system_tag: SystemTag,
    /// Entry time into the absorbing ball for the seeds, when defined.
    pub entry_time: Option<f64>,
    /// Largest distance between consecutive snapshots over the trailing
    /// window of each seed's run.
    pub sampling_tolerance: f64,
    pub warnings: Vec<String>,
}

/// Runs every seed under the tagged lattice and pools the post-transient
/// snapshots in seed order.
pub fn sample_attractor(
    tag: SystemTag,
    params: &ModelParams,
    forcing: &Forcing,
    seeds: &[LatticeState],
    plan: SamplingPlan,
    settings: &StudySettings,
) -> Result<AttractorSample, ExperimentError> {
    plan.validate()?;
    if seeds.is_empty() {
        return Err(ExperimentError::EmptyCloud);
    }
    let p = tag.params(params);
    let max_norm2 = seeds.iter().map(LatticeState::norm2).fold(0.0, f64::max);
    let capture = (tag == SystemTag::Ldgl).then(|| max_norm2.sqrt());
    let v0 = (tag == SystemTag::Nldgl).then_some(max_norm2);
    let report = classify_regime(&p, forcing.norm2(), v0, capture, settings.absorb_margin)?;
    let entry_time = match tag {
        SystemTag::Ldgl => report.entry_time,
        SystemTag::Nldgl => {
            if report.delta0.is_none() {
                return Err(ExperimentError::Hypothesis(format!(
                    "seed with ‖v‖² = {max_norm2} lies outside the restricted ball {}",
                    report.restricted_radius_sq
                )));
            }
            report.entry_time_nldgl
        }
    };
    let mut warnings = Vec::new();
    if let Some(t0) = entry_time {
        if plan.transient_cut < t0 {
            let msg = format!(
                "transient cut {} is before the entry time {t0} of the seeds' ball",
                plan.transient_cut
            );
            warn!("{msg}");
            warnings.push(msg);
        }
    }

    let opts = settings.opts.with_stride(plan.stride);
    let placed = seeds
        .iter()
        .map(|s| settings.place(s))
        .collect::<Result<Vec<_>, _>>()?;
    let runs = opts.exec.map(&placed, |seed| {
        let offset = seed.offset();
        let mut kept = Vec::new();
        let traj = integrate_observed(seed, &p, forcing, plan.horizon, &opts, |_, t, y| {
            if t > plan.transient_cut {
                kept.push((
                    t,
                    LatticeState::new(offset, y.to_vec()).expect("non-empty window"),
                ));
            }
        })?;
        if let Some(time) = traj.blowup_time {
            return Err(ExperimentError::BlowUp {
                time,
                what: format!("{} seed trajectory", tag.as_str()),
            });
        }
        Ok(kept)
    });

    let mut sample = AttractorSample {
        points: Vec::new(),
        times: Vec::new(),
        seed_index: Vec::new(),
        transient_cut: plan.transient_cut,
        stride: plan.stride,
        system_tag: tag,
        entry_time,
        sampling_tolerance: 0.0,
        warnings,
    };
    for (i, run) in runs.into_iter().enumerate() {
        let kept = run?;
        let start = trailing_start(kept.len(), TRAILING_FRACTION);
        let tol = kept[start.saturating_sub(1)..]
            .windows(2)
            .map(|w| w[0].1.dist_l2(&w[1].1))
            .fold(0.0, f64::max);
        sample.sampling_tolerance = sample.sampling_tolerance.max(tol);
        for (t, state) in kept {
            sample.points.push(state);
            sample.times.push(t);
            sample.seed_index.push(i);
        }
    }
    if sample.points.is_empty() {
        return Err(ExperimentError::EmptyCloud);
    }
    Ok(sample)
}

/// `sup_{a ∈ A} inf_{b ∈ B} ‖a − b‖` by exhaustive evaluation.
pub fn directed_hausdorff(
    a: &[LatticeState],
    b: &[LatticeState],
    exec: Execution,
) -> Result<f64, ExperimentError> {
    if a.is_empty() || b.is_empty() {
        return Err(ExperimentError::EmptyCloud);
    }
    let nearest = exec.map(a, |p| {
        b.iter().map(|q| p.dist_l2(q)).fold(f64::INFINITY, f64::min)
    });
    Ok(nearest.into_iter().fold(0.0, f64::max))
}

/// Hausdorff semi-distance `dist(A, B)` between two sampled attractors.
pub fn hausdorff_semidistance(
    a: &AttractorSample,
    b: &AttractorSample,
    exec: Execution,
) -> Result<f64, ExperimentError> {
    directed_hausdorff(&a.points, &b.points, exec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongruenceRow {
    pub epsilon: f64,
    pub dist_v_to_u: f64,
    pub dist_u_to_v: f64,
    pub sampling_tolerance: f64,
    /// `C₁ ε³ + 2 · sampling_tolerance`.
    pub bound: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongruenceReport {
    pub case_label: RegimeLabel,
    pub c_limsup: f64,
    pub rows: Vec<CongruenceRow>,
    /// Distances, ordered by decreasing ε, never rise by more than twice the
    /// larger sampling tolerance of the two rows.
    pub non_increasing: bool,
    pub pass: bool,
}

/// For each ε, samples the local attractor from `u⁰` and the non-local one
/// from `v⁰` and measures `dist(Â_v, Â_u)`.
pub fn run_congruence(
    params: &ModelParams,
    forcing: &Forcing,
    epsilon_grid: &[f64],
    template: &InitialFamily,
    plan: SamplingPlan,
    settings: &StudySettings,
) -> Result<CongruenceReport, ExperimentError> {
    if epsilon_grid.is_empty() {
        return Err(ExperimentError::InvalidInput("empty epsilon grid".into()));
    }
    let regime = classify_regime(params, forcing.norm2(), None, None, settings.absorb_margin)?;
    let c_limsup = closeness_constants(params, template.c0, template.cu0, template.cv0, None)?
        .c_limsup
        .expect("delta > 1 checked by classify_regime");
    // Cells run in parallel; each cell keeps its own integrations sequential
    // over seeds so nested work stays bounded.
    let exec = settings.opts.exec;
    let inner = StudySettings {
        opts: settings.opts.with_exec(Execution::Sequential),
        ..*settings
    };
    let rows = exec.map(epsilon_grid, |&eps| {
        let (u0, v0) = template.with_epsilon(eps).generate()?;
        let au = sample_attractor(SystemTag::Ldgl, params, forcing, &[u0], plan, &inner)?;
        let av = sample_attractor(SystemTag::Nldgl, params, forcing, &[v0], plan, &inner)?;
        let dist_v_to_u = hausdorff_semidistance(&av, &au, Execution::Sequential)?;
        let dist_u_to_v = hausdorff_semidistance(&au, &av, Execution::Sequential)?;
        let sampling_tolerance =
            au.sampling_tolerance.max(av.sampling_tolerance) + settings.opts.abs_tol;
        let bound = c_limsup * eps.powi(3) + 2.0 * sampling_tolerance;
        let mut warnings = au.warnings;
        warnings.extend(av.warnings);
        Ok::<_, ExperimentError>(CongruenceRow {
            epsilon: eps,
            dist_v_to_u,
            dist_u_to_v,
            sampling_tolerance,
            bound,
            pass: dist_v_to_u <= bound,
            warnings,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut order: Vec<&CongruenceRow> = rows.iter().collect();
    order.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    let non_increasing = order.windows(2).all(|w| {
        let slack = 2.0 * w[0].sampling_tolerance.max(w[1].sampling_tolerance);
        w[1].dist_v_to_u <= w[0].dist_v_to_u + slack
    });
    let pass = non_increasing && rows.iter().all(|r| r.pass);
    Ok(CongruenceReport {
        case_label: regime.case_label,
        c_limsup,
        rows,
        non_increasing,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::C64;

    #[test]
    fn single_points() {
        let zero = vec![LatticeState::single_site(0, C64::new(0.0, 0.0))];
        let p = vec![LatticeState::from_fn(-1, 3, |n| C64::new(n as f64, 1.0))];
        let norm = p[0].norm();
        assert_eq!(
            directed_hausdorff(&zero, &p, Execution::Sequential).unwrap(),
            norm
        );
        assert_eq!(
            directed_hausdorff(&p, &zero, Execution::Sequential).unwrap(),
            norm
        );
        assert_eq!(
            directed_hausdorff(&p, &p, Execution::Parallel).unwrap(),
            0.0
        );
        assert!(directed_hausdorff(&p, &[], Execution::Sequential).is_err());
    }

    #[test]
    fn unforced_local_attractor_is_zero() {
        let params = ModelParams::local(0.0, 0.0, 2.0);
        let settings = StudySettings::default().with_half_width(16);
        let seeds = [
            LatticeState::single_site(0, C64::new(0.1, 0.0)),
            LatticeState::single_site(3, C64::new(0.0, -0.2)),
        ];
        let plan = SamplingPlan {
            transient_cut: 20.0,
            stride: 0.5,
            horizon: 25.0,
        };
        let s = sample_attractor(
            SystemTag::Ldgl,
            &params,
            &Forcing::zero(),
            &seeds,
            plan,
            &settings,
        )
        .unwrap();
        assert!(s.times.iter().all(|&t| t > 20.0));
        assert!(s.points.iter().all(|p| p.norm() < 1e-6));
    }

    #[test]
    fn nonlocal_seed_outside_restricted_ball() {
        let params = ModelParams::nonlocal(0.0, 0.0, 2.0);
        let settings = StudySettings::default().with_half_width(4);
        let seeds = [LatticeState::single_site(0, C64::new(1.0, 0.0))];
        let plan = SamplingPlan {
            transient_cut: 1.0,
            stride: 0.5,
            horizon: 2.0,
        };
        let err = sample_attractor(
            SystemTag::Nldgl,
            &params,
            &Forcing::zero(),
            &seeds,
            plan,
            &settings,
        )
        .unwrap_err();
        assert!(err.is_hypothesis());
    }
}
