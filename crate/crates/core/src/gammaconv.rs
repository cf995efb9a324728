//! Convergence harness: sweep the layer scale, solve thin-layer and limit
//! problems, compare energies and fields, fit a rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fields::{divergence_residual, pressure_l2_diff, velocity_l2_diff, FlowState, Forcing};
use crate::grid::{build_domain_grid, DomainSpec, Lateral, LayerProfile, MacGrid, Profile, ProfileKind};
use crate::stokes::{FlowModel, SolverConfig};
use crate::thinlayer::{
    check_a_priori_bounds, phi_eps_energy, restrict_to_omega, solve_thin_layer, BoundsEntry, BoundsReport,
    Resolution, ThinLayerProblem,
};
use crate::walllaw::{g0_energy, solve_limit, WallLawSpec};

#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub lx: f64,
    pub lateral: Lateral,
    pub profile: Profile,
    pub kind: ProfileKind,
    /// Strictly decreasing layer scales.
    pub eps_list: Vec<f64>,
    pub f: Forcing,
    pub nu: f64,
    /// Wall law of the limit problem.
    pub spec: WallLawSpec,
    pub res: Resolution,
    pub model: FlowModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub phi_eps: f64,
    /// Energy of the thin-layer solution compared against the limit energy.
    pub g_eps: f64,
    pub l2_err_u: f64,
    pub l2_err_p: f64,
    pub cg_iters: usize,
    pub picard_iters: usize,
    /// Divergence of the thin-layer velocity on its full grid.
    pub divergence_residual: f64,
    pub bounds: Option<BoundsEntry>,
    /// Failure message when the member solve did not succeed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub alpha: f64,
    pub c: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub g0: f64,
    pub rate: Option<RateFit>,
    /// Why no rate was fitted, if none was.
    pub rate_note: Option<String>,
    pub bounds: Option<BoundsReport>,
    /// Some member solve failed; the report is partial.
    pub failed: bool,
}

impl SweepReport {
    pub fn empty() -> SweepReport {
        SweepReport {
            entries: Vec::new(),
            g0: 0.0,
            rate: None,
            rate_note: None,
            bounds: None,
            failed: false,
        }
    }
}

impl SweepSetup {
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.len() < 3 {
            return param("a sweep needs at least three values of eps");
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return param("eps values must be positive");
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return param("eps values must be strictly decreasing");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return param("viscosity must be positive");
        }
        Ok(())
    }

    fn domain(&self) -> Result<DomainSpec> {
        DomainSpec::new(self.lx, self.lateral)
    }

    pub fn problem(&self, eps: f64) -> Result<ThinLayerProblem> {
        let layer = LayerProfile::new(self.kind, self.profile.clone(), eps)?;
        Ok(ThinLayerProblem {
            domain: self.domain()?.with_layer(layer)?,
            nu: self.nu,
            f: self.f.clone(),
            model: self.model,
        })
    }

    /// Grid of the fluid domain shared by the limit and all restrictions.
    pub fn omega_grid(&self) -> Result<MacGrid> {
        build_domain_grid(&self.domain()?, self.res.nx, self.res.ny, self.res.grading)
    }
}

fn member(setup: &SweepSetup, eps: f64, u0: &FlowState, omega: &MacGrid, cfg: &SolverConfig) -> Result<SweepEntry> {
    let prob = setup.problem(eps)?;
    let sol = solve_thin_layer(&prob, &setup.res, cfg)?;
    let (og, restricted) = restrict_to_omega(&sol.state, &sol.grid, setup.nu, eps)?;
    if og.y_faces() != omega.y_faces() || og.x_faces() != omega.x_faces() {
        return Err(Error::Conformance("thin-layer grid does not extend the limit grid".into()));
    }
    let phi = phi_eps_energy(&sol.state, &prob, &sol.grid)?;
    Ok(SweepEntry {
        eps,
        phi_eps: phi,
        g_eps: phi,
        l2_err_u: velocity_l2_diff(&restricted, u0, omega)?,
        l2_err_p: pressure_l2_diff(&restricted.p, &u0.p, omega)?,
        cg_iters: sol.stats.cg_iters,
        picard_iters: sol.stats.picard_iters,
        divergence_residual: divergence_residual(&sol.state, &sol.grid)?,
        bounds: Some(BoundsEntry::from_solution(&sol, &prob)?),
        error: None,
    })
}

/// Runs the sweep on `jobs` worker threads; results are assembled in the
/// order of `eps_list` regardless of scheduling.
pub fn run_sweep(setup: &SweepSetup, cfg: &SolverConfig, jobs: usize) -> Result<SweepReport> {
    setup.validate()?;
    let omega = setup.omega_grid()?;
    let f = setup.f.sample(&omega)?;
    let (u0, _) = solve_limit(&f, setup.nu, &setup.spec, setup.model, &omega, cfg)?;
    let g0 = g0_energy(&u0, setup.nu, &setup.spec, &omega)?;
    // reject under-resolved layers before solving anything
    for &eps in &setup.eps_list {
        let prob = setup.problem(eps)?;
        crate::grid::build_layered_grid(&prob.domain, setup.res.nx, setup.res.ny, setup.res.grading, setup.res.layer_rows)?;
    }
    let run = |eps: &f64| match member(setup, *eps, &u0, &omega, cfg) {
        Ok(e) => e,
        Err(err) => SweepEntry {
            eps: *eps,
            phi_eps: f64::NAN,
            g_eps: f64::NAN,
            l2_err_u: f64::NAN,
            l2_err_p: f64::NAN,
            cg_iters: 0,
            picard_iters: 0,
            divergence_residual: f64::NAN,
            bounds: None,
            error: Some(err.to_string()),
        },
    };
    let entries: Vec<SweepEntry> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {jobs} workers: {e}")))?;
        pool.install(|| setup.eps_list.par_iter().map(run).collect())
    } else {
        setup.eps_list.iter().map(run).collect()
    };
    let failed = entries.iter().any(|e| e.error.is_some());
    let ok: Vec<&SweepEntry> = entries.iter().filter(|e| e.error.is_none()).collect();
    let (rate, rate_note) = match estimate_rate(
        &ok.iter().map(|e| e.eps).collect::<Vec<_>>(),
        &ok.iter().map(|e| e.l2_err_u).collect::<Vec<_>>(),
    ) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let bounds_in: Vec<BoundsEntry> = ok.iter().filter_map(|e| e.bounds).collect();
    let bounds = check_a_priori_bounds(&bounds_in).ok();
    Ok(SweepReport {
        entries,
        g0,
        rate,
        rate_note,
        bounds,
        failed,
    })
}

/// Least-squares fit of `log err = log C + alpha log eps`.
pub fn estimate_rate(eps: &[f64], errors: &[f64]) -> Result<RateFit> {
    if eps.len() != errors.len() {
        return Err(Error::Fit("eps and error lists differ in length".into()));
    }
    if eps.len() < 3 {
        return Err(Error::Fit("rate fit needs at least three points".into()));
    }
    if errors.iter().chain(eps).any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Fit("rate fit needs positive finite errors".into()));
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("eps values must differ".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let alpha = sxy / sxx;
    let logc = my - alpha * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - logc - alpha * x).powi(2)).sum();
    Ok(RateFit {
        alpha,
        c: logc.exp(),
        residual: (ss / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_rates() {
        let r = estimate_rate(&[0.4, 0.2, 0.1], &[0.4, 0.2, 0.1]).unwrap();
        assert!((r.alpha - 1.0).abs() < 1e-14 && r.residual < 1e-14 && (r.c - 1.0).abs() < 1e-13);
        let e = [0.4, 0.2, 0.1, 0.05];
        let sq: Vec<f64> = e.iter().map(|x| 3.0 * x * x).collect();
        let r = estimate_rate(&e, &sq).unwrap();
        assert!((r.alpha - 2.0).abs() < 1e-13 && (r.c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(estimate_rate(&[0.4, 0.2, 0.1], &[0.0, 0.1, 0.1]), Err(Error::Fit(_))));
        assert!(estimate_rate(&[0.4, 0.2], &[0.1, 0.1]).is_err());
        assert!(estimate_rate(&[0.4, 0.2, 0.1], &[f64::NAN, 0.1, 0.1]).is_err());
    }

    fn setup(f: Forcing) -> SweepSetup {
        SweepSetup {
            lx: 1.0,
            lateral: Lateral::Walls,
            profile: Profile::flat(1.0),
            kind: ProfileKind::Fixed,
            eps_list: vec![0.2, 0.1, 0.05],
            f,
            nu: 1.0,
            spec: WallLawSpec::over_h(1.0, Profile::flat(1.0)),
            res: Resolution::uniform(16, 16),
            model: FlowModel::Stokes,
        }
    }

    #[test]
    fn zero_forcing_sweep() {
        let r = run_sweep(&setup(Forcing::zero()), &SolverConfig::default(), 1).unwrap();
        assert!(!r.failed);
        assert!(r.entries.iter().all(|e| e.l2_err_u == 0.0 && e.phi_eps == 0.0));
        assert!(r.rate.is_none() && r.rate_note.is_some());
        assert!(r.bounds.unwrap().passed);
    }

    #[test]
    fn sweep_validation() {
        let mut s = setup(Forcing::zero());
        s.eps_list = vec![0.1, 0.2, 0.05];
        assert!(run_sweep(&s, &SolverConfig::default(), 1).is_err());
        s.eps_list = vec![0.1, 0.05];
        assert!(run_sweep(&s, &SolverConfig::default(), 1).is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let s = setup(Forcing::parse("1-2*y", "0").unwrap());
        let a = run_sweep(&s, &SolverConfig::default(), 1).unwrap();
        let b = run_sweep(&s, &SolverConfig::default(), 3).unwrap();
        assert_eq!(a, b);
        assert!(a.entries.windows(2).all(|w| w[1].l2_err_u < w[0].l2_err_u));
    }
}
