//! File exports: Morse graph (DOT), box values and lifted values (CSV),
//! gnuplot script, report (JSON) and the optional edge list.
//!
//! CSV files use `,` separators, `.` decimals, LF line endings and 17
//! significant digits, so every double round-trips.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use lyapgen_core::{lift, BoxId, LiftError};

use thiserror::Error;

use crate::pipeline::Analysis;
use crate::verify::VerificationReport;

pub const MORSE_GRAPH: &str = "morse_graph.dot";
pub const LYAPUNOV_MAP: &str = "lyapunov_map.csv";
pub const LYAPUNOV_SEMIFLOW: &str = "lyapunov_semiflow.csv";
pub const REPORT: &str = "report.json";
pub const PLOT: &str = "plot.gp";
pub const EDGES: &str = "edges.txt";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Lift(#[from] LiftError),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Round-trip formatting of a double.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// `lyapunov_map.csv`: one row per box.
pub fn lyapunov_map_csv(a: &Analysis) -> String {
    let n = a.grid.dim();
    let mut header = vec!["box_id".to_string()];
    header.extend(axis_names("i", n));
    for i in 1..=n {
        header.push(format!("lo{i}"));
        header.push(format!("hi{i}"));
    }
    header.extend(["value", "tag", "component"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');
    let mut coords = vec![0usize; n];
    for b in a.grid.ids() {
        a.grid.coords_into(b, &mut coords);
        let (lo, hi) = a.grid.bounds(b);
        write!(out, "{}", b.0).unwrap();
        for c in &coords {
            write!(out, ",{c}").unwrap();
        }
        for (l, h) in lo.iter().zip(&hi) {
            write!(out, ",{},{}", real(*l), real(*h)).unwrap();
        }
        let component = a
            .assignment
            .recurrent_component(b.0)
            .map_or(-1, |c| c as i64);
        writeln!(
            out,
            ",{},{},{component}",
            real(a.assignment.value_f64(b.0)),
            a.assignment.tag(b.0).as_str()
        )
        .unwrap();
    }
    out
}

/// Midpoints of a `lattice^n` grid over the domain, first axis slowest.
pub fn lattice_points(a: &Analysis) -> Vec<Vec<f64>> {
    let dom = a.system.domain();
    let n = dom.dim();
    let m = a.config.lattice;
    let total = m.pow(n as u32);
    (0..total)
        .map(|mut id| {
            let mut p = vec![0.0; n];
            for i in (0..n).rev() {
                let j = id % m;
                id /= m;
                let (lo, hi) = (dom.lo()[i], dom.hi()[i]);
                p[i] = lo + (hi - lo) * (j as f64 + 0.5) / m as f64;
            }
            p
        })
        .collect()
}

/// `lyapunov_semiflow.csv`: `L` over the evaluation lattice (ODE mode).
pub fn lyapunov_semiflow_csv(a: &Analysis) -> Result<String, LiftError> {
    let field = a.ell();
    let points = lattice_points(a);
    let values = points
        .par_iter()
        .map(|p| lift(&field, &a.system, p, &a.config.lift).map(|v| v.value))
        .collect::<Result<Vec<_>, _>>()?;
    let n = a.grid.dim();
    let mut out = axis_names("x", n).join(",");
    out.push_str(",L,box_id\n");
    for (p, v) in points.iter().zip(values) {
        for x in p {
            write!(out, "{},", real(*x)).unwrap();
        }
        writeln!(out, "{},{}", real(v), a.grid.locate(p).0).unwrap();
    }
    Ok(out)
}

/// `plot.gp`: renders the CSVs next to it.
pub fn gnuplot_script(a: &Analysis) -> String {
    let name = &a.config.name;
    let ode = a.is_ode();
    let mut s = String::new();
    writeln!(s, "# gnuplot script for {name}; run with `gnuplot plot.gp`").unwrap();
    writeln!(s, "set datafile separator ','").unwrap();
    writeln!(s, "set terminal pngcairo size 900,600").unwrap();
    match a.grid.dim() {
        1 => {
            let (lo, hi) = (a.grid.domain().lo()[0], a.grid.domain().hi()[0]);
            writeln!(s, "set output '{name}.png'").unwrap();
            writeln!(s, "set xrange [{lo}:{hi}]").unwrap();
            writeln!(s, "set yrange [-0.05:1.05]").unwrap();
            writeln!(s, "set xlabel 'x1'").unwrap();
            writeln!(s, "set key top left").unwrap();
            let ell =
                format!("'{LYAPUNOV_MAP}' using (($3+$4)/2):5 with steps lw 2 title 'ell (boxes)'");
            if ode {
                writeln!(
                    s,
                    "plot {ell}, \\\n     '{LYAPUNOV_SEMIFLOW}' using 1:2 with lines lw 2 title 'L'"
                )
                .unwrap();
            } else {
                writeln!(s, "plot {ell}").unwrap();
            }
        }
        2 => {
            writeln!(s, "set xlabel 'x1'\nset ylabel 'x2'\nset size ratio -1").unwrap();
            writeln!(s, "set palette rgbformulae 33,13,10").unwrap();
            writeln!(s, "set cbrange [0:1]").unwrap();
            writeln!(s, "set output '{name}_ell.png'").unwrap();
            writeln!(
                s,
                "plot '{LYAPUNOV_MAP}' using (($4+$5)/2):(($6+$7)/2):8 with image title 'ell (boxes)'"
            )
            .unwrap();
            if ode {
                writeln!(s, "set output '{name}_L.png'").unwrap();
                writeln!(
                    s,
                    "plot '{LYAPUNOV_SEMIFLOW}' using 1:2:3 with image title 'L'"
                )
                .unwrap();
            }
        }
        n => {
            writeln!(
                s,
                "# {n}-dimensional system: no default rendering; the CSV columns are\n# described in the header rows."
            )
            .unwrap();
        }
    }
    s
}

pub fn report_json(r: &VerificationReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}

/// Writes every output file into `a.config.out` and returns their paths in
/// write order.
pub fn write_all(a: &Analysis, report: &VerificationReport) -> Result<Vec<PathBuf>, ExportError> {
    let dir = &a.config.out;
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<(), ExportError> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(io_at(&p))?;
        written.push(p);
        Ok(())
    };
    put(MORSE_GRAPH, &a.morse.to_dot())?;
    put(LYAPUNOV_MAP, &lyapunov_map_csv(a))?;
    let semiflow = dir.join(LYAPUNOV_SEMIFLOW);
    if a.is_ode() {
        put(LYAPUNOV_SEMIFLOW, &lyapunov_semiflow_csv(a)?)?;
    } else if semiflow.exists() {
        // drop the table left by an earlier ODE run into the same directory
        fs::remove_file(&semiflow).map_err(io_at(&semiflow))?;
    }
    put(REPORT, &report_json(report))?;
    put(PLOT, &gnuplot_script(a))?;
    if a.config.edges {
        put(EDGES, &a.graph.edge_list_string())?;
    }
    Ok(written)
}

pub fn write_report(dir: &Path, report: &VerificationReport) -> Result<PathBuf, ExportError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let p = dir.join(REPORT);
    fs::write(&p, report_json(report)).map_err(io_at(&p))?;
    Ok(p)
}

/// Center of box `b` formatted for messages.
pub fn center_string(a: &Analysis, b: usize) -> String {
    let c = a.grid.center(BoxId(b));
    let parts: Vec<String> = c.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{builtin_config, Overrides};

    fn analysis(name: &str, depth: u32) -> Analysis {
        let cfg = builtin_config(name)
            .resolve(&Overrides {
                depth: Some(depth),
                ..Overrides::default()
            })
            .unwrap();
        Analysis::run(cfg).unwrap()
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, -2.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, 0.0] {
            let s = real(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(real(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn map_csv_layout() {
        let a = analysis("hopf", 2);
        let csv = lyapunov_map_csv(&a);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "box_id,i1,i2,lo1,hi1,lo2,hi2,value,tag,component"
        );
        assert_eq!(csv.lines().count(), 1 + 16);
        assert!(!csv.contains('\r'));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 10);
        assert_eq!(&row[..3], &["0", "0", "0"]);
        assert_eq!(row[3].parse::<f64>().unwrap(), -2.0);
        assert_eq!(row[4].parse::<f64>().unwrap(), -1.0);
        for line in csv.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let tag = f[8];
            let comp: i64 = f[9].parse().unwrap();
            assert_eq!(tag == "transient", comp == -1, "{line}");
        }
    }

    #[test]
    fn lattice_is_midpoints_first_axis_slowest() {
        let mut a = analysis("hopf", 1);
        a.config.lattice = 2;
        let pts = lattice_points(&a);
        assert_eq!(
            pts,
            vec![
                vec![-1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, -1.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn semiflow_csv_rows() {
        let mut a = analysis("linear1d", 4);
        a.config.lattice = 8;
        let csv = lyapunov_semiflow_csv(&a).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "x1,L,box_id");
        assert_eq!(csv.lines().count(), 9);
        let l: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        // L decreases toward the attractor at 0 from both sides
        assert!(l[0] > l[3] && l[7] > l[4], "{l:?}");
    }

    #[test]
    fn plot_script_references_outputs() {
        let a = analysis("doublewell", 4);
        let s = gnuplot_script(&a);
        assert!(s.contains(LYAPUNOV_MAP) && s.contains(LYAPUNOV_SEMIFLOW));
        let m = analysis("halfmap", 3);
        let s = gnuplot_script(&m);
        assert!(s.contains(LYAPUNOV_MAP) && !s.contains(LYAPUNOV_SEMIFLOW));
    }
}
