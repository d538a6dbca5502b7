//! Command pipelines: configuration in, [`ResultRecord`] out.

use rayon::prelude::*;

use crate::cache::TableCache;
use crate::config::{Command, RunConfig, SweepAxis};
use crate::dynamics::{evolve, AmplitudeTrajectory, EvolveOptions};
use crate::entanglement::{pairwise_concurrence, tripartite_c3};
use crate::error::{Error, Result};
use crate::records::ResultRecord;
use crate::special_functions::C64;
use crate::spectral_matrix::SpectralTable;
use crate::spectrum::{channel_profiles, find_bound_states, steady_concurrence_n2, steady_state_n2, steady_state_n3};

/// Convention note attached to three-emitter entanglement output.
pub const SO4_NOTE: &str = "C3 uses the SO(4) generators E_pq - E_qp (p < q, order 01,02,03,12,13,23) on the pair, \
sigma_y on the third emitter, basis |q_m q_n q_l> with 0 = excited";

/// Table for `cfg`, from the cache when possible.
pub fn table_for(cfg: &RunConfig, cache: &TableCache) -> Result<SpectralTable> {
    let system = cfg.system()?;
    Ok(cache.get_or_build(&system, &cfg.grid, &cfg.quadrature)?.0)
}

/// Runs `command` for `cfg`.
pub fn run(command: Command, cfg: &RunConfig, cache: &TableCache) -> Result<ResultRecord> {
    cfg.validate()?;
    if command == Command::Sweep {
        return sweep(cfg, cache);
    }
    let table = table_for(cfg, cache)?;
    run_with_table(command, cfg, &table)
}

/// Runs a single-point command on an existing table.
pub fn run_with_table(command: Command, cfg: &RunConfig, table: &SpectralTable) -> Result<ResultRecord> {
    match command {
        Command::SpectralDensity => spectral_density(cfg, table),
        Command::BoundStates => bound_states(cfg, table),
        Command::Dynamics => dynamics(cfg, table),
        Command::SteadyState => steady_state(cfg, table),
        Command::Entanglement => entanglement(cfg, table),
        Command::Sweep => Err(Error::Validation("sweep needs a configuration, not a table".into())),
    }
}

fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

pub fn spectral_density(cfg: &RunConfig, table: &SpectralTable) -> Result<ResultRecord> {
    let n = table.emitters;
    let mut columns = vec!["omega".to_string()];
    columns.extend((0..n).map(|m| format!("J{m}")));
    columns.extend(names("D", n));
    let mut rec = ResultRecord::new(&cfg.hash(), Command::SpectralDensity.name(), columns);
    let channels = channel_profiles(table)?;
    for (i, &w) in table.omega.iter().enumerate() {
        let mut row = vec![w];
        row.extend(&table.entries[i]);
        row.extend(channels.iter().map(|p| p.node_value(i)));
        rec.push(row)?;
    }
    Ok(rec)
}

pub fn bound_states(cfg: &RunConfig, table: &SpectralTable) -> Result<ResultRecord> {
    let columns = ["channel", "bound", "varpi", "residue", "M"].map(String::from).to_vec();
    let mut rec = ResultRecord::new(&cfg.hash(), Command::BoundStates.name(), columns);
    let states = find_bound_states(table, cfg.emitters.omega_0)?;
    let m = states.len() as f64;
    for j in 1..=table.emitters {
        match states.iter().find(|s| s.channel == j) {
            Some(s) => rec.push(vec![j as f64, 1.0, s.varpi, s.residue, m])?,
            None => rec.push(vec![j as f64, 0.0, 0.0, 0.0, m])?,
        }
    }
    Ok(rec)
}

/// `dt` from the config, else the largest step with `omega_max dt <= 0.1`
/// that divides `t_max`.
pub fn time_step(cfg: &RunConfig, table: &SpectralTable) -> f64 {
    let t_max = cfg.solver.t_max;
    cfg.solver.dt.unwrap_or_else(|| t_max / (t_max * table.omega_max() / 0.1).ceil())
}

/// Trajectory and kernel warnings for `cfg`.
pub fn trajectory(cfg: &RunConfig, table: &SpectralTable) -> Result<(AmplitudeTrajectory, Vec<String>)> {
    let opts = EvolveOptions { record_every: cfg.solver.record_every, ..EvolveOptions::default() };
    evolve(
        cfg.emitters.omega_0,
        table,
        &cfg.initial_state()?,
        cfg.solver.t_max,
        time_step(cfg, table),
        &opts,
    )
}

pub fn dynamics(cfg: &RunConfig, table: &SpectralTable) -> Result<ResultRecord> {
    let n = table.emitters;
    let mut columns = vec!["t".to_string()];
    for l in 1..=n {
        columns.push(format!("re_c{l}"));
        columns.push(format!("im_c{l}"));
    }
    columns.push("population".into());
    let mut rec = ResultRecord::new(&cfg.hash(), Command::Dynamics.name(), columns);
    let (traj, warnings) = trajectory(cfg, table)?;
    rec.notes = warnings;
    for (i, (&t, c)) in traj.times.iter().zip(&traj.amplitudes).enumerate() {
        let mut row = vec![t];
        row.extend(c.iter().flat_map(|z| [z.re, z.im]));
        row.push(traj.populations(i));
        rec.push(row)?;
    }
    Ok(rec)
}

fn concurrence_columns(n: usize) -> Result<Vec<String>> {
    match n {
        2 => Ok(vec!["C2".into()]),
        3 => Ok(["C12", "C13", "C23", "C3"].map(String::from).to_vec()),
        _ => Err(Error::Validation(format!("entanglement output needs 2 or 3 emitters (got {n})"))),
    }
}

fn concurrences(c: &[C64]) -> Result<Vec<f64>> {
    match c.len() {
        2 => Ok(vec![pairwise_concurrence(c, 0, 1)?]),
        3 => Ok(vec![
            pairwise_concurrence(c, 0, 1)?,
            pairwise_concurrence(c, 0, 2)?,
            pairwise_concurrence(c, 1, 2)?,
            tripartite_c3(&[c[0], c[1], c[2]])?,
        ]),
        n => Err(Error::Validation(format!("entanglement output needs 2 or 3 emitters (got {n})"))),
    }
}

pub fn entanglement(cfg: &RunConfig, table: &SpectralTable) -> Result<ResultRecord> {
    let mut columns = vec!["t".to_string()];
    columns.extend(concurrence_columns(table.emitters)?);
    let mut rec = ResultRecord::new(&cfg.hash(), Command::Entanglement.name(), columns);
    let (traj, warnings) = trajectory(cfg, table)?;
    rec.notes = warnings;
    if table.emitters == 3 {
        rec.notes.push(SO4_NOTE.into());
    }
    let rows = traj
        .amplitudes
        .par_iter()
        .map(|c| concurrences(c))
        .collect::<Result<Vec<_>>>()?;
    for (&t, values) in traj.times.iter().zip(rows) {
        let mut row = vec![t];
        row.extend(values);
        rec.push(row)?;
    }
    Ok(rec)
}

pub fn steady_state(cfg: &RunConfig, table: &SpectralTable) -> Result<ResultRecord> {
    let n = table.emitters;
    let c0 = cfg.initial_state()?;
    let samples = cfg.solver.samples;
    let times: Vec<f64> = (0..samples).map(|i| cfg.solver.t_max * i as f64 / (samples - 1) as f64).collect();
    let mut columns = vec!["t".to_string()];
    for l in 1..=n {
        columns.push(format!("re_z{l}"));
        columns.push(format!("im_z{l}"));
    }
    let w0 = cfg.emitters.omega_0;
    match n {
        2 => {
            columns.extend(["C2_residues", "C2"].map(String::from));
            let mut rec = ResultRecord::new(&cfg.hash(), Command::SteadyState.name(), columns);
            let states = find_bound_states(table, w0)?;
            rec.notes.push(format!("M = {}", states.len()));
            for &t in &times {
                let z = steady_state_n2(&states, &c0, t)?;
                let mut row = vec![t];
                row.extend(z.iter().flat_map(|z| [z.re, z.im]));
                row.push(steady_concurrence_n2(&states, &c0, t)?);
                row.extend(concurrences(&z)?);
                rec.push(row)?;
            }
            Ok(rec)
        }
        3 => {
            columns.extend(concurrence_columns(3)?);
            let mut rec = ResultRecord::new(&cfg.hash(), Command::SteadyState.name(), columns);
            let s = steady_state_n3(table, w0, &c0)?;
            rec.notes.push(format!("poles = {}", s.count()));
            rec.notes.extend(s.warnings.iter().cloned());
            rec.notes.push(SO4_NOTE.into());
            for &t in &times {
                let z = s.amplitudes(t);
                let mut row = vec![t];
                row.extend(z.iter().flat_map(|z| [z.re, z.im]));
                row.extend(concurrences(&z)?);
                rec.push(row)?;
            }
            Ok(rec)
        }
        _ => Err(Error::Validation(format!("closed-form steady states need 2 or 3 emitters (got {n})"))),
    }
}

/// Repeats `sweep.command` over the sweep values, in parallel, keeping the
/// order of the values. The sweep coordinate becomes the first column.
pub fn sweep(cfg: &RunConfig, cache: &TableCache) -> Result<ResultRecord> {
    let sw = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Validation("the sweep command needs a [sweep] section".into()))?;
    let axis = match sw.parameter {
        SweepAxis::RA => "r_a",
        SweepAxis::D => "d",
    };
    let unit = match sw.unit {
        crate::config::LengthUnit::Nm => "nm",
        crate::config::LengthUnit::Lambda0 => "lambda0",
    };
    let records = sw
        .values
        .par_iter()
        .map(|&v| {
            let point = cfg.with_sweep_value(&sw, v)?;
            run(sw.command, &point, cache).map_err(|e| Error::Sweep {
                coordinate: format!("{axis} = {v} {unit}"),
                source: Box::new(e),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec![axis.to_string()];
    columns.extend(records[0].columns.iter().cloned());
    let mut rec = ResultRecord::new(&cfg.hash(), &format!("sweep:{}", sw.command), columns);
    for (&v, r) in sw.values.iter().zip(&records) {
        for row in &r.rows {
            let mut full = vec![v];
            full.extend(row);
            rec.push(full)?;
        }
        rec.notes.extend(r.notes.iter().map(|n| format!("{axis} = {v}: {n}")));
    }
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_table(n: usize) -> SpectralTable {
        let omega: Vec<f64> = (0..50).map(|i| 0.01 + 0.12 * i as f64).collect();
        SpectralTable::from_samples(n, omega, vec![vec![0.0; n]; 50]).unwrap()
    }

    #[test]
    fn free_dynamics_conserves_population() {
        let cfg = RunConfig::parse("[solver]\nt_max = 20.0\nrecord_every = 7\n", "mem").unwrap();
        let rec = dynamics(&cfg, &zero_table(2)).unwrap();
        let pop = rec.column("population").unwrap();
        assert!(pop.len() > 10);
        assert!(pop.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn free_steady_state_and_bound_states() {
        let cfg = RunConfig::parse("[solver]\nt_max = 5.0\nsamples = 6\n", "mem").unwrap();
        let rec = bound_states(&cfg, &zero_table(2)).unwrap();
        assert_eq!(rec.column("varpi").unwrap(), vec![2.0, 2.0]);
        let rec = steady_state(&cfg, &zero_table(2)).unwrap();
        let re = rec.column("re_z1").unwrap();
        let t = rec.column("t").unwrap();
        for (r, t) in re.iter().zip(t) {
            assert!((r - (2.0 * t).cos()).abs() < 1e-12);
        }
        assert!(rec.column("C2").unwrap().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn three_emitter_outputs() {
        let cfg = RunConfig::parse("[emitters]\ncount = 3\n[solver]\nt_max = 2.0\nsamples = 3\n", "mem").unwrap();
        let table = zero_table(3);
        let rec = entanglement(&cfg, &table).unwrap();
        assert_eq!(rec.columns, vec!["t", "C12", "C13", "C23", "C3"]);
        assert!(rec.notes.iter().any(|n| n.contains("SO(4)")));
        let rec = steady_state(&cfg, &table).unwrap();
        assert_eq!(rec.rows.len(), 3);
        let rec = spectral_density(&cfg, &table).unwrap();
        assert_eq!(rec.columns.len(), 7);
    }

    #[test]
    fn default_time_step_divides_t_max() {
        let cfg = RunConfig::parse("[solver]\nt_max = 7.3\n", "mem").unwrap();
        let dt = time_step(&cfg, &zero_table(2));
        assert!(dt * 5.89 <= 0.1 + 1e-12);
        assert!(crate::dynamics::step_count(7.3, dt).is_ok());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = RunConfig::parse("[solver]\nt_max = 3.0\n", "mem").unwrap();
        let a = dynamics(&cfg, &zero_table(2)).unwrap();
        let b = dynamics(&cfg, &zero_table(2)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
