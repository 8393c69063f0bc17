//! CSV writers. Numbers use Rust's `Display` for `f64`, which prints the
//! shortest decimal string that parses back to the same value.

use std::fmt::Write as _;

use crate::cme::{ProbabilityVector, StateSpace};
use crate::ensemble::{EnsembleStatistics, SweepTable};
use crate::trajectory::Trajectory;

fn push_row(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for cell in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&cell);
        first = false;
    }
    out.push('\n');
}

pub fn num(v: f64) -> String {
    v.to_string()
}

/// `time,<species...>`
pub fn trajectory_csv(trajectory: &Trajectory, species: &[&str]) -> String {
    let mut out = String::new();
    push_row(
        &mut out,
        std::iter::once("time".to_string()).chain(species.iter().map(|s| s.to_string())),
    );
    for (t, sample) in trajectory.grid.iter().zip(&trajectory.samples) {
        push_row(&mut out, std::iter::once(num(*t)).chain(sample.iter().map(|&v| num(v))));
    }
    out
}

fn moment_header(species: &[String]) -> impl Iterator<Item = String> + '_ {
    species.iter().flat_map(|s| [format!("{s}_mean"), format!("{s}_var")])
}

/// `time,<species>_mean,<species>_var,...`
pub fn statistics_csv(stats: &EnsembleStatistics, species: &[&str]) -> String {
    let names: Vec<String> = species.iter().map(|s| s.to_string()).collect();
    let mut out = String::new();
    push_row(
        &mut out,
        std::iter::once("time".to_string()).chain(moment_header(&names)),
    );
    for (k, &t) in stats.grid().iter().enumerate() {
        let cells = (0..stats.n_species()).flat_map(|s| [num(stats.mean(k, s)), num(stats.variance(k, s))]);
        push_row(&mut out, std::iter::once(num(t)).chain(cells));
    }
    out
}

/// `param:<name>,...,time,<species>_mean,<species>_var,...`
pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    let header = table
        .parameters
        .iter()
        .map(|p| format!("param:{p}"))
        .chain(std::iter::once("time".to_string()))
        .chain(moment_header(&table.species));
    push_row(&mut out, header);
    for row in &table.rows {
        let cells = row
            .point
            .iter()
            .map(|&v| num(v))
            .chain(std::iter::once(num(row.time)))
            .chain(row.mean.iter().zip(&row.variance).flat_map(|(&m, &v)| [num(m), num(v)]));
        push_row(&mut out, cells);
    }
    out
}

/// `state_<species...>,probability`, then a `# leaked,<value>` footer.
pub fn distribution_csv(space: &StateSpace, dist: &ProbabilityVector, species: &[&str]) -> String {
    let mut out = String::new();
    let header = species
        .iter()
        .map(|s| format!("state_{s}"))
        .chain(std::iter::once("probability".to_string()));
    push_row(&mut out, header);
    for (i, state) in space.states().enumerate() {
        push_row(
            &mut out,
            state
                .iter()
                .map(|x| x.to_string())
                .chain(std::iter::once(num(dist.p[i]))),
        );
    }
    let _ = writeln!(out, "# leaked,{}", num(dist.leaked));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Counters;

    #[test]
    fn shortest_round_trip_numbers() {
        assert_eq!(num(100.0), "100");
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1e-20), "0.00000000000000000001");
        for v in [36.787944117144235, 1.0 / 3.0, 6.02e23, -2.5e-7] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn trajectory_layout() {
        let t = Trajectory {
            grid: vec![0.0, 0.5],
            samples: vec![vec![3.0, 1.0], vec![2.0, 2.0]],
            method: "ssa",
            seed: Some(1),
            counters: Counters::default(),
        };
        assert_eq!(trajectory_csv(&t, &["A", "B"]), "time,A,B\n0,3,1\n0.5,2,2\n");
    }

    #[test]
    fn statistics_layout() {
        let mut s = EnsembleStatistics::new(vec![1.0], 1);
        for v in [1.0, 3.0] {
            s.push(&Trajectory {
                grid: vec![1.0],
                samples: vec![vec![v]],
                method: "ssa",
                seed: None,
                counters: Counters::default(),
            })
            .unwrap();
        }
        assert_eq!(statistics_csv(&s, &["X"]), "time,X_mean,X_var\n1,2,2\n");
    }
}
